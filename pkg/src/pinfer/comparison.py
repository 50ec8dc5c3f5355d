"""Shared-output private comparison (DGK-style).

One party (the bit owner) holds a private l-bit integer mu and sends its bits
encrypted under its own key. The other party (the evaluator) holds a private
l-bit integer eta and a share bit delta_eval, and answers with l+1 blinded
ciphertexts in random order. The bit owner decrypts them and sets its share
delta_owner = 1 iff exactly one decrypts to zero. The shares then satisfy

    delta_owner XOR delta_eval = [mu <= eta].

Neither party learns the comparison result on its own. delta_eval is supplied
by the caller: the standalone protocol draws it uniformly, while the SVM and
neural-network protocols derive it from a masked inner product, and the same
engine serves both. The roles are symmetric in the keys, so the role-swapped
instantiation used inside network evaluation simply swaps which party holds
the decryption key.

Blinding scalars are drawn from the units modulo M by rejection sampling;
M = N is composite here, but a product r*h can only vanish modulo M for
h = 0 when r is a unit, which is all correctness needs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .errors import ParameterError, ProtocolViolationError
from .numutil import SYSTEM_RNG, random_unit
from .paillier import Ciphertext, PublicKey, SecretKey


@dataclass(frozen=True)
class ComparisonRequest:
    """Encryptions of the bit owner's bits, low bit first."""

    encrypted_bits: tuple[Ciphertext, ...]
    bit_length: int


@dataclass(frozen=True)
class ComparisonResponse:
    """The l+1 blinded values, uniformly permuted."""

    blinded_values: tuple[Ciphertext, ...]


def bit_owner_request(pk: PublicKey, mu: int, bit_length: int,
                      rng: random.Random | None = None) -> ComparisonRequest:
    """Encrypt the binary digits of mu under the bit owner's key.

    Raises:
        ParameterError: if mu is not an l-bit non-negative integer.
    """
    if bit_length < 1:
        raise ParameterError("bit length must be positive")
    if not 0 <= mu < (1 << bit_length):
        raise ParameterError(f"value {mu} is not a {bit_length}-bit non-negative integer")
    bits = tuple(pk.encrypt((mu >> i) & 1, rng) for i in range(bit_length))
    return ComparisonRequest(bits, bit_length)


def evaluator_respond(pk: PublicKey, request: ComparisonRequest, eta: int, delta_eval: int,
                      rng: random.Random | None = None) -> ComparisonResponse:
    """Blinded test values for the comparison against eta.

    For i = l-1 .. 0 the evaluator forms, over encrypted data,

        h_i = s*(mu_i - eta_i) + 1 + sum_{j>i} (mu_j XOR eta_j),  s = 1 - 2*delta_eval,

    plus the equality guard h_-1 = delta_eval + sum_j (mu_j XOR eta_j), scales
    each by a fresh unit, rerandomizes, and returns them shuffled.

    Raises:
        ParameterError: eta out of range or delta_eval not a bit.
        ProtocolViolationError: request length disagrees with its bit length.
    """
    rng = rng or SYSTEM_RNG
    ell = request.bit_length
    if len(request.encrypted_bits) != ell:
        raise ProtocolViolationError("comparison request length disagrees with its bit length")
    if not 0 <= eta < (1 << ell):
        raise ParameterError(f"value {eta} is not a {ell}-bit non-negative integer")
    if delta_eval not in (0, 1):
        raise ParameterError("share must be a bit")
    s = 1 - 2 * delta_eval
    eta_bits = [(eta >> i) & 1 for i in range(ell)]
    # XOR against a known bit: reuse the ciphertext for 0, flip it for 1.
    xor_terms = [bits if eta_bits[i] == 0 else (-bits).add_plain(1)
                 for i, bits in enumerate(request.encrypted_bits)]

    def blind(ct: Ciphertext) -> Ciphertext:
        return pk.rerandomize(random_unit(pk.n, rng) * ct, rng)

    blinded: list[Ciphertext] = []
    suffix = None  # encrypted sum of xor_terms[j] for j > i
    for i in reversed(range(ell)):
        term = request.encrypted_bits[i] if s == 1 else -request.encrypted_bits[i]
        value = term.add_plain(1 - s * eta_bits[i])
        if suffix is not None:
            value = value + suffix
        blinded.append(blind(value))
        suffix = xor_terms[i] if suffix is None else suffix + xor_terms[i]
    blinded.append(blind(suffix.add_plain(delta_eval)))
    rng.shuffle(blinded)
    return ComparisonResponse(tuple(blinded))


def bit_owner_finish(sk: SecretKey, response: ComparisonResponse) -> int:
    """The bit owner's share: 1 iff exactly one blinded value decrypts to zero.

    Raises:
        ProtocolViolationError: more than one zero, impossible for honest peers.
    """
    zeros = sum(1 for ct in response.blinded_values if sk.decrypt(ct) == 0)
    if zeros > 1:
        raise ProtocolViolationError(f"{zeros} blinded values decrypted to zero")
    return 1 if zeros == 1 else 0
