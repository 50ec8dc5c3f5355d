"""Big-integer helpers: modular exponentiation, inverses, CRT, probable primes.

Delegates to gmpy2 when it is installed (roughly an order of magnitude faster
on crypto-sized operands); otherwise falls back to pure Python. All callers go
through this module so the two paths stay interchangeable.
"""

from __future__ import annotations

import math
import random
import secrets

try:
    import gmpy2

    HAVE_GMPY2 = True
except ImportError:  # pragma: no cover - exercised only without gmpy2
    gmpy2 = None
    HAVE_GMPY2 = False

#: Module-wide default entropy source. Cryptographically secure.
SYSTEM_RNG = random.SystemRandom()

# Miller-Rabin rounds; error probability below 4^-40 = 2^-80 per composite.
MR_ROUNDS = 40

_SMALL_PRIMES = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53,
                 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113,
                 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181,
                 191, 193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251]


def insecure_rng(seed: int) -> random.Random:
    """Deterministic RNG for reproducible tests.

    INSECURE: never use for production keys, masks or blinding factors.
    """
    return random.Random(seed)


if HAVE_GMPY2:

    def powmod(base: int, exp: int, mod: int) -> int:
        """base**exp mod mod; negative exponents require an invertible base."""
        return int(gmpy2.powmod(base, exp, mod))

    def invert(a: int, mod: int) -> int:
        """Multiplicative inverse of a modulo mod."""
        try:
            return int(gmpy2.invert(a, mod))
        except ZeroDivisionError:
            raise ValueError(f"{a} is not invertible modulo {mod}") from None

    def is_probable_prime(n: int) -> bool:
        return bool(gmpy2.is_prime(n, MR_ROUNDS))

else:

    def powmod(base: int, exp: int, mod: int) -> int:
        """base**exp mod mod; negative exponents require an invertible base."""
        return pow(base, exp, mod)

    def invert(a: int, mod: int) -> int:
        """Multiplicative inverse of a modulo mod."""
        try:
            return pow(a, -1, mod)
        except ValueError:
            raise ValueError(f"{a} is not invertible modulo {mod}") from None

    def is_probable_prime(n: int) -> bool:
        if n < 2:
            return False
        for p in _SMALL_PRIMES:
            if n % p == 0:
                return n == p
        d, s = n - 1, 0
        while d % 2 == 0:
            d //= 2
            s += 1
        for _ in range(MR_ROUNDS):
            a = secrets.randbelow(n - 3) + 2
            x = pow(a, d, n)
            if x in (1, n - 1):
                continue
            for _ in range(s - 1):
                x = (x * x) % n
                if x == n - 1:
                    break
            else:
                return False
        return True


def gcd(a: int, b: int) -> int:
    return math.gcd(a, b)


def random_prime(bits: int, rng: random.Random | None = None) -> int:
    """Uniformly sampled probable prime with the top bit set."""
    if bits < 2:
        raise ValueError("prime size must be at least 2 bits")
    rng = rng or SYSTEM_RNG
    while True:
        candidate = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if is_probable_prime(candidate):
            return candidate


def random_unit(mod: int, rng: random.Random | None = None) -> int:
    """Uniform nonzero element of [1, mod) coprime to mod, by rejection."""
    rng = rng or SYSTEM_RNG
    while True:
        r = rng.randrange(1, mod)
        if math.gcd(r, mod) == 1:
            return r


def crt2(r1: int, m1: int, r2: int, m2: int, m2_inv_m1: int | None = None) -> int:
    """Solve x = r1 (mod m1), x = r2 (mod m2) for coprime m1, m2; x in [0, m1*m2)."""
    if m2_inv_m1 is None:
        m2_inv_m1 = invert(m2 % m1, m1)
    return (r2 + m2 * (((r1 - r2) * m2_inv_m1) % m1)) % (m1 * m2)
