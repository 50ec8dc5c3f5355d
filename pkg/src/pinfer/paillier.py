"""Additively homomorphic encryption (Paillier cryptosystem).

The public key is a modulus N = p*q; ciphertexts live modulo N**2. The message
space is Z/NZ, viewed as the signed representative set
M = {-floor(N/2), ..., ceil(N/2) - 1} so that sign is preserved through
decryption. Given ciphertexts of m1 and m2 one can compute ciphertexts of
m1 + m2, m1 - m2 and a*m1 (all modulo N) without the secret key:

    add:       c1 * c2          mod N**2
    subtract:  c1 * c2**-1      mod N**2
    scale:     c1 ** a          mod N**2

Encryption is probabilistic; ``rerandomize`` refreshes a ciphertext's
randomness without changing its plaintext. Ciphertexts are tagged with the
key they were produced under, and mixing keys in a homomorphic operation
fails fast with :class:`~pinfer.errors.KeyMismatchError`.

Key sizes of 2048 or 3072 bits are the production presets; the 64-bit floor
and the deterministic RNG from :func:`pinfer.numutil.insecure_rng` exist for
tests only.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass, field

from .errors import DecryptionError, KeyMismatchError, ParameterError
from .numutil import SYSTEM_RNG, crt2, gcd, invert, is_probable_prime, powmod, random_prime

#: Key-size presets considered adequate for long-term protection.
KEY_BITS_PRESETS = (2048, 3072)
DEFAULT_KEY_BITS = 2048
#: Absolute floor, for test-scale keys only.
MIN_KEY_BITS = 64


def _pack_int(value: int) -> bytes:
    raw = value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")
    return struct.pack(">I", len(raw)) + raw


def _unpack_int(data: bytes, offset: int) -> tuple[int, int]:
    if offset + 4 > len(data):
        raise ParameterError("truncated key bytes")
    (length,) = struct.unpack_from(">I", data, offset)
    offset += 4
    if offset + length > len(data):
        raise ParameterError("truncated key bytes")
    return int.from_bytes(data[offset:offset + length], "big"), offset + length


class PublicKey:
    """Paillier public key: the modulus N.

    Attributes:
        n: the composite modulus N = p*q; also the message-space size M.
        n_squared: N**2, the ciphertext modulus.
        bit_length: ceil(log2 N), written l_M in the size formulas.
        key_id: short stable identifier used to tag ciphertexts.
    """

    __slots__ = ("n", "n_squared", "bit_length", "max_signed", "min_signed", "key_id")

    def __init__(self, n: int):
        if n <= 2 or n % 2 == 0:
            raise ParameterError("modulus must be odd and greater than 2")
        self.n = n
        self.n_squared = n * n
        self.bit_length = n.bit_length()
        self.max_signed = (n + 1) // 2 - 1
        self.min_signed = -(n // 2)
        digest = hashlib.sha256(n.to_bytes((n.bit_length() + 7) // 8, "big")).digest()
        self.key_id = digest[:8].hex()

    def __eq__(self, other) -> bool:
        return isinstance(other, PublicKey) and self.n == other.n

    def __hash__(self) -> int:
        return hash(self.n)

    def __repr__(self) -> str:
        return f"<PublicKey {self.bit_length} bits id={self.key_id}>"

    def to_signed(self, m: int) -> int:
        """Map a residue in [0, N) to its signed representative."""
        return m if m < (self.n + 1) // 2 else m - self.n

    def contains(self, m: int) -> bool:
        """Whether m lies in the signed message space."""
        return self.min_signed <= m <= self.max_signed

    def encrypt(self, m: int, rng: random.Random | None = None) -> "Ciphertext":
        """Probabilistic encryption of a signed message.

        Raises:
            ParameterError: if m lies outside the signed message space.
        """
        if not self.contains(m):
            raise ParameterError(f"message {m} outside the signed message space")
        return self.encrypt_unsigned(m % self.n, rng)

    def encrypt_unsigned(self, m: int, rng: random.Random | None = None) -> "Ciphertext":
        """Probabilistic encryption of a residue already in [0, N)."""
        if not 0 <= m < self.n:
            raise ParameterError(f"residue {m} outside [0, N)")
        value = ((1 + m * self.n) % self.n_squared) * self._fresh_factor(rng) % self.n_squared
        return Ciphertext(value, self)

    def rerandomize(self, c: "Ciphertext", rng: random.Random | None = None) -> "Ciphertext":
        """Fresh ciphertext of the same plaintext (multiplies in a random N-th power)."""
        self._check_own(c)
        return Ciphertext(c.value * self._fresh_factor(rng) % self.n_squared, self)

    def _fresh_factor(self, rng: random.Random | None = None) -> int:
        r = (rng or SYSTEM_RNG).randrange(1, self.n)
        return powmod(r, self.n, self.n_squared)

    def _check_own(self, c: "Ciphertext") -> None:
        if c.public_key.key_id != self.key_id:
            raise KeyMismatchError("ciphertext was produced under a different key")

    def to_bytes(self) -> bytes:
        """Length-prefixed big-endian encoding of N."""
        return _pack_int(self.n)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicKey":
        n, offset = _unpack_int(data, 0)
        if offset != len(data):
            raise ParameterError("trailing bytes after public key")
        return cls(n)


class SecretKey:
    """Paillier secret key: the prime factors of N.

    Decryption recovers the encryption randomness r from c mod N via the
    precomputed exponent N**-1 mod (p-1)(q-1), strips r**N off the ciphertext
    and reads the plaintext from what remains. All exponentiations run CRT
    split over the prime-power factors, which is where the time goes.
    """

    def __init__(self, p: int, q: int):
        if p == q:
            raise ParameterError("prime factors must be distinct")
        if not (is_probable_prime(p) and is_probable_prime(q)):
            raise ParameterError("secret key factors must be prime")
        self.p = p
        self.q = q
        n = p * q
        phi = (p - 1) * (q - 1)
        if gcd(n, phi) != 1:
            raise ParameterError("modulus shares a factor with its totient")
        self.public_key = PublicKey(n)
        #: decryption exponent N**-1 mod (p-1)(q-1)
        self.decrypt_exponent = invert(n % phi, phi)
        self._dp = self.decrypt_exponent % (p - 1)
        self._dq = self.decrypt_exponent % (q - 1)
        self._q_inv_p = invert(q % p, p)
        self._p_sq = p * p
        self._q_sq = q * q
        self._q_sq_inv_p_sq = invert(self._q_sq % self._p_sq, self._p_sq)

    def __repr__(self) -> str:
        return f"<SecretKey for {self.public_key!r}>"

    def decrypt_unsigned(self, c: "Ciphertext") -> int:
        """Plaintext residue in [0, N).

        Raises:
            KeyMismatchError: ciphertext produced under another key.
            DecryptionError: ciphertext value not coprime to N.
        """
        self.public_key._check_own(c)
        n = self.public_key.n
        if gcd(c.value, n) != 1:
            raise DecryptionError("ciphertext is not coprime to the modulus")
        c_n = c.value % n
        r_p = powmod(c_n % self.p, self._dp, self.p)
        r_q = powmod(c_n % self.q, self._dq, self.q)
        r = crt2(r_p, self.p, r_q, self.q, self._q_inv_p)
        # r**-N mod N**2, CRT over p**2 and q**2 (group orders p(p-1), q(q-1)).
        u_p = c.value * powmod(invert(r % self._p_sq, self._p_sq),
                               n % (self.p * (self.p - 1)), self._p_sq) % self._p_sq
        u_q = c.value * powmod(invert(r % self._q_sq, self._q_sq),
                               n % (self.q * (self.q - 1)), self._q_sq) % self._q_sq
        u = crt2(u_p, self._p_sq, u_q, self._q_sq, self._q_sq_inv_p_sq)
        if (u - 1) % n != 0:
            raise DecryptionError("ciphertext does not decode to a valid plaintext")
        return (u - 1) // n

    def decrypt(self, c: "Ciphertext") -> int:
        """Plaintext as a signed representative in M."""
        return self.public_key.to_signed(self.decrypt_unsigned(c))

    def to_bytes(self) -> bytes:
        """Length-prefixed big-endian encoding of p then q."""
        return _pack_int(self.p) + _pack_int(self.q)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SecretKey":
        p, offset = _unpack_int(data, 0)
        q, offset = _unpack_int(data, offset)
        if offset != len(data):
            raise ParameterError("trailing bytes after secret key")
        return cls(p, q)


@dataclass(frozen=True)
class Ciphertext:
    """An element of [0, N**2), tagged with the key that produced it.

    Supports ``c1 + c2``, ``c1 - c2`` and ``a * c`` for an integer scalar a;
    the decryptions satisfy the corresponding congruences modulo N.
    """

    value: int
    public_key: PublicKey = field(repr=False)

    @property
    def key_id(self) -> str:
        return self.public_key.key_id

    def _check_same(self, other: "Ciphertext") -> None:
        if self.key_id != other.key_id:
            raise KeyMismatchError("cannot combine ciphertexts under different keys")

    def __add__(self, other: "Ciphertext") -> "Ciphertext":
        self._check_same(other)
        return Ciphertext(self.value * other.value % self.public_key.n_squared, self.public_key)

    def __sub__(self, other: "Ciphertext") -> "Ciphertext":
        self._check_same(other)
        nsq = self.public_key.n_squared
        return Ciphertext(self.value * invert(other.value, nsq) % nsq, self.public_key)

    def __mul__(self, scalar: int) -> "Ciphertext":
        if not isinstance(scalar, int):
            return NotImplemented
        pk = self.public_key
        e = scalar % pk.n
        if e == 0:
            return Ciphertext(1, pk)
        # Keep the exponent short: a scalar near N is cheaper as a negated inverse.
        if pk.n - e < e:
            return Ciphertext(powmod(invert(self.value, pk.n_squared), pk.n - e, pk.n_squared), pk)
        return Ciphertext(powmod(self.value, e, pk.n_squared), pk)

    __rmul__ = __mul__

    def __neg__(self) -> "Ciphertext":
        return Ciphertext(invert(self.value, self.public_key.n_squared), self.public_key)

    def add_plain(self, m: int) -> "Ciphertext":
        """Ciphertext of (plaintext + m); costs one multiplication.

        Does not refresh randomness: the result is linked to this ciphertext
        and must be rerandomized before leaving the party that computed it.
        """
        pk = self.public_key
        return Ciphertext(self.value * (1 + (m % pk.n) * pk.n) % pk.n_squared, pk)


def keygen(bits: int = DEFAULT_KEY_BITS, rng: random.Random | None = None) -> tuple[PublicKey, SecretKey]:
    """Fresh key pair with a modulus of exactly ``bits`` bits.

    Primes are balanced and probabilistically tested (error below 2**-80).

    Raises:
        ParameterError: if bits is below the 64-bit test floor.
    """
    if bits < MIN_KEY_BITS:
        raise ParameterError(f"key size {bits} below the {MIN_KEY_BITS}-bit floor")
    rng = rng or SYSTEM_RNG
    while True:
        p = random_prime(bits // 2, rng)
        q = random_prime(bits - bits // 2, rng)
        n = p * q
        if p == q or n.bit_length() != bits or gcd(n, (p - 1) * (q - 1)) != 1:
            continue
        sk = SecretKey(p, q)
        return sk.public_key, sk


def hom_add(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    """Ciphertext of m1 + m2 (mod M)."""
    return c1 + c2


def hom_sub(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    """Ciphertext of m1 - m2 (mod M)."""
    return c1 - c2


def hom_scale(a: int, c: Ciphertext) -> Ciphertext:
    """Ciphertext of a * m (mod M)."""
    return a * c


def rerandomize(pk: PublicKey, c: Ciphertext, rng: random.Random | None = None) -> Ciphertext:
    """Same plaintext, fresh ciphertext value."""
    return pk.rerandomize(c, rng)
