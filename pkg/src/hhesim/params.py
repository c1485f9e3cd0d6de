"""Parameter sets, prime/scale selection, and closed-form size accounting.

Six published parameter rows drive everything downstream: the symmetric
cipher dimensions, the per-ciphertext byte budget, the MTU fragmentation
arithmetic, and the scale factor that maps bounded real vectors into the
centered ring Z_q. All functions here are pure and safe for concurrent use.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal


class UnknownParamSetError(KeyError):
    """Requested parameter set name is not one of the six published rows."""


class UnknownProfileError(KeyError):
    """Requested HE scheme profile is not configured."""


class ConfigError(ValueError):
    """A config file is missing, malformed, or violates an invariant."""


PARAMSET_NAMES = (
    "Par-80S",
    "Par-80M",
    "Par-80L",
    "Par-128S",
    "Par-128M",
    "Par-128L",
)

# name -> (security_bits, key_len, slots, modulus_bits, noise_width)
_PARAM_TABLE = {
    "Par-80S": (80, 16, 12, 26, 11.1),
    "Par-80M": (80, 36, 32, 25, 2.7),
    "Par-80L": (80, 64, 60, 25, 1.6),
    "Par-128S": (128, 16, 12, 26, 10.5),
    "Par-128M": (128, 36, 32, 25, 4.1),
    "Par-128L": (128, 64, 60, 25, 4.1),
}

# Default HE ciphertext sizes in bytes at 128-bit post-quantum security.
# "Rubato-hom" is the downstream homomorphic profile used for transciphered
# results; no published size exists for it, so it defaults to the most
# conservative CKKS add+mul figure and is meant to be overridden in config.
_PROFILE_TABLE = {
    "BFV": (131939, True),
    "BGV": (394573, True),
    "CKKS-add": (787791, False),
    "CKKS-addmul": (1050129, True),
    "Rubato-hom": (1050129, True),
}

# Named per-fragment overhead presets for fragmentation accounting. The
# plain-ceiling model (0 bytes) matches ceil(size/mtu); the 7-byte preset
# reproduces the published pure-HE fragment counts (284/566/754), which
# imply an effective per-fragment payload of mtu - 7.
FRAGMENT_OVERHEAD_PRESETS = {
    "none": 0,
    "header7": 7,
}

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def _is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for n < 3.3e24."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def select_prime(modulus_bits: int) -> int:
    """Smallest prime strictly greater than 2^(modulus_bits - 1).

    Any prime in (2^(c-1), 2^c) has the required bit length; taking the
    first one keeps the choice deterministic. Scans upward from
    2^(c-1) + 1.
    """
    if modulus_bits < 2:
        raise ValueError(f"modulus_bits must be >= 2, got {modulus_bits}")
    n = (1 << (modulus_bits - 1)) + 1
    while not _is_prime(n):
        n += 1
    return n


@dataclass(frozen=True)
class ParamSet:
    """One row of the published parameter table plus its selected modulus.

    Fields:
      security_bits: nonce/security level (also the nonce width in bits)
      key_len:       number of symmetric key entries in Z_q
      slots:         packed plaintext slots per ciphertext
      modulus_bits:  ceil(log2 q)
      noise_width:   width of the discrete Gaussian keystream noise
      q:             prime modulus, 2^(modulus_bits-1) < q < 2^modulus_bits
    """

    name: str
    security_bits: int
    key_len: int
    slots: int
    modulus_bits: int
    noise_width: float
    q: int

    def __post_init__(self):
        c = self.modulus_bits
        if not (1 << (c - 1)) < self.q < (1 << c):
            raise ConfigError(
                f"{self.name}: q={self.q} is not a {c}-bit modulus"
            )
        if not _is_prime(self.q):
            raise ConfigError(f"{self.name}: q={self.q} is not prime")

    @property
    def param_id(self) -> int:
        """Stable one-byte identifier used in the wire header."""
        try:
            return PARAMSET_NAMES.index(self.name)
        except ValueError:
            raise UnknownParamSetError(self.name) from None

    @property
    def coeff_bits(self) -> int:
        """Serialized width of one centered coefficient (sign bit included)."""
        return self.modulus_bits + 1

    @property
    def gauss_tail_cutoff(self) -> int:
        """Hard support cutoff T = ceil(10 * noise_width) of the sampler."""
        return math.ceil(10 * self.noise_width)


def load_paramset(name: str, *, q_override: int | None = None) -> ParamSet:
    """Return the named parameter row, with q chosen by select_prime.

    An explicit ``q_override`` replaces the default prime; it must still be
    a prime with the row's bit length.
    """
    try:
        sec, n, ell, c, width = _PARAM_TABLE[name]
    except KeyError:
        raise UnknownParamSetError(
            f"unknown parameter set {name!r}; expected one of {PARAMSET_NAMES}"
        ) from None
    q = q_override if q_override is not None else select_prime(c)
    return ParamSet(name, sec, n, ell, c, width, q)


def all_paramsets() -> list[ParamSet]:
    return [load_paramset(name) for name in PARAMSET_NAMES]


@dataclass(frozen=True)
class HeSchemeProfile:
    """Size and capability envelope of one homomorphic scheme.

    ``depth_budget`` caps the multiplicative depth the shadow evaluator
    will admit; the analytics circuits here need at most depth 1.
    """

    scheme: str
    ciphertext_bytes: int
    supports_mul: bool
    depth_budget: int = 2

    def __post_init__(self):
        if self.ciphertext_bytes <= 0:
            raise ConfigError(
                f"{self.scheme}: ciphertext_bytes must be positive"
            )


def load_profile(scheme: str) -> HeSchemeProfile:
    try:
        size, mul = _PROFILE_TABLE[scheme]
    except KeyError:
        raise UnknownProfileError(
            f"unknown HE profile {scheme!r}; expected one of "
            f"{tuple(_PROFILE_TABLE)}"
        ) from None
    return HeSchemeProfile(scheme, size, mul)


def all_profiles() -> list[HeSchemeProfile]:
    return [load_profile(name) for name in _PROFILE_TABLE]


def compute_delta(q: int, bound: float) -> float:
    """Scale factor delta = q / (16 * bound) for 1-norm bound ``bound``.

    The 1/16 headroom guarantees that a scaled in-bound message plus the
    bounded keystream noise never wraps around the centered ring.
    """
    if bound <= 0:
        raise ValueError(f"bound must be positive, got {bound}")
    return q / (16.0 * bound)


@dataclass(frozen=True)
class DeltaPolicy:
    """1-norm bound and the scale factor derived from it."""

    bound: float
    delta: float

    def __post_init__(self):
        if self.bound <= 0 or self.delta <= 0:
            raise ValueError("bound and delta must be positive")

    @classmethod
    def for_bound(cls, q: int, bound: float) -> "DeltaPolicy":
        return cls(bound=bound, delta=compute_delta(q, bound))

    @classmethod
    def from_delta(cls, q: int, delta: float) -> "DeltaPolicy":
        if delta <= 0:
            raise ValueError(f"delta must be positive, got {delta}")
        return cls(bound=q / (16.0 * delta), delta=delta)


def ciphertext_size_bytes(p: ParamSet) -> int:
    """Tightly bit-packed coefficient block size: ceil(slots*(c+1)/8)."""
    return (p.slots * p.coeff_bits + 7) // 8


def payload_bytes(slots: int, bits_per_slot: int) -> int:
    """Effective plaintext capacity: ceil(slots * bits_per_slot / 8)."""
    if slots < 1 or bits_per_slot < 1:
        raise ValueError("slots and bits_per_slot must be >= 1")
    return (slots * bits_per_slot + 7) // 8


def serialized_size_bytes(p: ParamSet) -> int:
    """Full wire size of one symmetric ciphertext: header + nonce + block."""
    return 1 + p.security_bits // 8 + ciphertext_size_bytes(p)


def expansion_factor(ciphertext_bytes: int, plaintext_bytes: int) -> float:
    """Ciphertext-to-plaintext byte ratio as an exact real."""
    if plaintext_bytes <= 0:
        raise ValueError(
            f"plaintext_bytes must be positive, got {plaintext_bytes}"
        )
    return ciphertext_bytes / plaintext_bytes


def round_half_away(x: float, decimals: int = 0) -> float:
    """Round to ``decimals`` places, ties away from zero (display rule)."""
    quantum = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(x)).quantize(quantum, rounding=ROUND_HALF_UP))


def reported_expansion(
    ciphertext_bytes: int, plaintext_bytes: int, decimals: int
) -> float:
    """Expansion factor rounded to the table's displayed precision."""
    return round_half_away(
        expansion_factor(ciphertext_bytes, plaintext_bytes), decimals
    )


def fragment_count(
    size_bytes: int, mtu_bytes: int, per_fragment_overhead_bytes: int = 0
) -> int:
    """Number of MTU-bounded fragments, ceil(size / (mtu - overhead)).

    A zero-size message still occupies one fragment (control message).
    """
    if per_fragment_overhead_bytes < 0:
        raise ValueError("per-fragment overhead must be >= 0")
    if mtu_bytes <= per_fragment_overhead_bytes:
        raise ValueError(
            f"mtu ({mtu_bytes}) must exceed per-fragment overhead "
            f"({per_fragment_overhead_bytes})"
        )
    if size_bytes < 0:
        raise ValueError("size_bytes must be >= 0")
    capacity = mtu_bytes - per_fragment_overhead_bytes
    return max(1, -(-size_bytes // capacity))


def nonce_overhead_bits(message_count: int, security_bits: int) -> int:
    """Extra uplink bits for nonces: one security_bits nonce per message."""
    if message_count < 0:
        raise ValueError("message_count must be >= 0")
    return message_count * security_bits


def load_params_config(path: str) -> tuple[dict, dict]:
    """Load parameter-set and profile tables from a JSON config file.

    Returns ``(paramsets, profiles)`` dicts keyed by name, with the built-in
    defaults merged under any overrides. Expected shape::

        {
          "paramsets": {"Par-80S": {"q": 33554467}, ...},
          "profiles": {"Rubato-hom": {"ciphertext_bytes": 500000,
                                      "supports_mul": true}, ...}
        }

    Paramset overrides may replace ``q`` only; the published row fields are
    fixed. Profile entries may introduce new scheme names.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")

    paramsets = {name: load_paramset(name) for name in PARAMSET_NAMES}
    for name, fields in raw.get("paramsets", {}).items():
        if name not in _PARAM_TABLE:
            raise ConfigError(f"{path}: unknown parameter set {name!r}")
        q = fields.get("q")
        try:
            paramsets[name] = load_paramset(name, q_override=q)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    profiles = {p.scheme: p for p in all_profiles()}
    for name, fields in raw.get("profiles", {}).items():
        base = profiles.get(name)
        try:
            profiles[name] = HeSchemeProfile(
                scheme=name,
                ciphertext_bytes=fields.get(
                    "ciphertext_bytes",
                    base.ciphertext_bytes if base else None,
                ),
                supports_mul=fields.get(
                    "supports_mul", base.supports_mul if base else True
                ),
                depth_budget=fields.get(
                    "depth_budget", base.depth_budget if base else 2
                ),
            )
        except (ConfigError, TypeError) as exc:
            raise ConfigError(f"{path}: profile {name!r}: {exc}") from exc

    return paramsets, profiles
