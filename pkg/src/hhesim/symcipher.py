"""Symmetric encryption: scale-and-round plus a noisy keystream, mod q.

A ciphertext is ``round(delta * m) + z mod q`` over the centered ring,
where the keystream ``z`` is a per-slot keyed PRF output plus discrete
Gaussian noise. Decryption strips the PRF part only; the Gaussian noise
stays behind as bounded plaintext error, exactly as in approximate
transciphering. The PRF stands in for the real cipher's rounds: it
reproduces the interface, sizes, and noise behavior, and makes no
security claim.

Mutable state is confined to the per-key nonce ledger; everything else is
a pure function of its arguments (noise is seeded from key and nonce).
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .codec import SlotVector, round_half_down
from .params import DeltaPolicy, ParamSet, ciphertext_size_bytes

_KEYGEN_TAG = b"hhesim.keygen.v1"
_PRF_TAG = b"hhesim.prf.v1"
_NOISE_TAG = b"hhesim.noise.v1"


class NonceReuseError(ValueError):
    """A nonce was presented twice under the same key."""


class BoundViolationError(ValueError):
    """Message 1-norm exceeds the declared bound of the scale policy."""


class ParamMismatchError(ValueError):
    """Key, nonce, and ciphertext disagree on the parameter set."""


class WireFormatError(ValueError):
    """Serialized ciphertext is malformed, truncated, or out of range."""


def _centered(values: np.ndarray, q: int) -> np.ndarray:
    """Map residues in [0, q) onto (-q/2, q/2]."""
    return np.where(values > q // 2, values - q, values)


def _seed_bytes(seed) -> bytes:
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, int):
        return seed.to_bytes(16, "big", signed=False)
    raise TypeError(f"seed must be bytes or int, got {type(seed).__name__}")


class _XofReader:
    """Incremental byte stream from a SHAKE-256 extendable-output hash."""

    def __init__(self, *parts: bytes):
        self._h = hashlib.shake_256()
        for part in parts:
            self._h.update(part)
        self._buf = b""
        self._pos = 0

    def read(self, n: int) -> bytes:
        need = self._pos + n
        if need > len(self._buf):
            self._buf = self._h.digest(max(need, 2 * len(self._buf), 64))
        out = self._buf[self._pos:need]
        self._pos = need
        return out


def _uniform_mod_q(reader: _XofReader, q: int) -> int:
    """Rejection-sample a uniform residue in [0, q) from an XOF stream."""
    bits = q.bit_length()
    nbytes = (bits + 7) // 8
    mask = (1 << bits) - 1
    while True:
        v = int.from_bytes(reader.read(nbytes), "big") & mask
        if v < q:
            return v


@dataclass
class NonceLedger:
    """Consumed-nonce set for one key; single-writer by contract."""

    consumed: set = field(default_factory=set)

    def claim(self, nonce_value: int) -> None:
        if nonce_value in self.consumed:
            raise NonceReuseError(f"nonce {nonce_value:#x} already consumed")
        self.consumed.add(nonce_value)

    @property
    def count(self) -> int:
        return len(self.consumed)

    def overhead_bits(self, security_bits: int) -> int:
        """Transmitted nonce overhead so far: count * security_bits."""
        return self.count * security_bits


@dataclass(frozen=True)
class Nonce:
    """Fixed-width nonce; uniqueness per key is the caller's obligation."""

    value: int
    bits: int

    def __post_init__(self):
        if self.bits % 8 != 0:
            raise ValueError("nonce width must be a whole number of bytes")
        if not 0 <= self.value < (1 << self.bits):
            raise ValueError(f"nonce value does not fit in {self.bits} bits")

    @classmethod
    def from_counter(cls, counter: int, bits: int) -> "Nonce":
        return cls(counter, bits)

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(self.bits // 8, "big")


class SymKey:
    """Symmetric key: key_len centered residues plus its nonce ledger."""

    __slots__ = ("entries", "param", "ledger")

    def __init__(self, entries, param: ParamSet):
        entries = tuple(int(e) for e in entries)
        if len(entries) != param.key_len:
            raise ParamMismatchError(
                f"expected {param.key_len} key entries, got {len(entries)}"
            )
        half = param.q // 2
        for e in entries:
            if not -half <= e <= half:
                raise ValueError(f"key entry {e} outside centered ring")
        self.entries = entries
        self.param = param
        self.ledger = NonceLedger()

    def key_bytes(self) -> bytes:
        """Canonical byte form used to key the PRF and the noise seed."""
        q = self.param.q
        packed = struct.pack(
            f">B{len(self.entries)}I",
            self.param.param_id,
            *((e + q) % q for e in self.entries),
        )
        return packed

    def __eq__(self, other):
        return (
            isinstance(other, SymKey)
            and self.entries == other.entries
            and self.param == other.param
        )

    def __repr__(self):
        return f"SymKey(param={self.param.name}, len={len(self.entries)})"


def keygen(p: ParamSet, seed) -> SymKey:
    """Deterministically derive a key of key_len uniform centered residues."""
    reader = _XofReader(_KEYGEN_TAG, p.name.encode(), _seed_bytes(seed))
    entries = [
        _uniform_mod_q(reader, p.q) for _ in range(p.key_len)
    ]
    return SymKey(_centered(np.array(entries, dtype=np.int64), p.q), p)


class GaussianSampler:
    """Discrete Gaussian on the integers, mass proportional to
    exp(-pi * a^2 / width^2), truncated to |a| <= tail_cutoff.

    Sampling is by inverse CDF over the truncated support, so the output
    is a deterministic function of the uniform draws and the mass outside
    the cutoff is exactly zero. At the default cutoff ceil(10 * width) the
    discarded mass is below 2^-100.
    """

    def __init__(self, width: float, tail_cutoff: int | None = None):
        if width <= 0:
            raise ValueError(f"width must be positive, got {width}")
        self.width = float(width)
        self.tail_cutoff = (
            math.ceil(10 * width) if tail_cutoff is None else int(tail_cutoff)
        )
        if self.tail_cutoff < 0:
            raise ValueError("tail_cutoff must be >= 0")
        self.support = np.arange(-self.tail_cutoff, self.tail_cutoff + 1)
        weights = np.exp(-np.pi * self.support.astype(float) ** 2
                         / self.width ** 2)
        self._pmf = weights / weights.sum()
        self._cdf = np.cumsum(self._pmf)

    def pmf(self) -> np.ndarray:
        """Normalized mass over ``support``, in support order."""
        return self._pmf.copy()

    def sample_from_uniform(self, u) -> np.ndarray:
        """Map uniform draws in [0, 1) through the inverse CDF."""
        idx = np.searchsorted(self._cdf, np.asarray(u), side="right")
        idx = np.minimum(idx, len(self.support) - 1)
        return self.support[idx]

    def sample_array(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return self.sample_from_uniform(rng.random(count))


@dataclass(frozen=True)
class KeystreamHooks:
    """Test-only switches that zero the PRF and/or the noise component.

    Never enabled by default; production call sites pass ``hooks=None``.
    """

    zero_prf: bool = False
    zero_noise: bool = False


def _prf_residues(key: SymKey, nc: Nonce, *, count: int | None = None
                  ) -> np.ndarray:
    """Uniform residues in [0, q), one per slot, from a keyed XOF.

    Slot i is derived from SHAKE-256 over (tag, key, nonce, i), with
    rejection sampling to remove modulo bias.
    """
    p = key.param
    q = p.q
    n = p.slots if count is None else count
    bits = q.bit_length()
    nbytes = (bits + 7) // 8
    mask = (1 << bits) - 1
    base = hashlib.shake_256()
    base.update(_PRF_TAG)
    base.update(key.key_bytes())
    base.update(nc.to_bytes())
    copy = base.copy
    from_bytes = int.from_bytes
    out = np.empty(n, dtype=np.int64)
    chunk = 8 * nbytes
    for i in range(n):
        h = copy()
        h.update(i.to_bytes(4, "big"))
        buf = h.digest(chunk)
        v = from_bytes(buf[:nbytes], "big") & mask
        if v < q:
            out[i] = v
            continue
        pos = nbytes
        while True:
            if pos + nbytes > len(buf):
                buf = h.digest(2 * len(buf))
            v = from_bytes(buf[pos:pos + nbytes], "big") & mask
            pos += nbytes
            if v < q:
                out[i] = v
                break
    return out


def _noise_seed(key: SymKey, nc: Nonce) -> int:
    reader = _XofReader(_NOISE_TAG, key.key_bytes(), nc.to_bytes())
    return int.from_bytes(reader.read(32), "big")


def _noise_values(key: SymKey, nc: Nonce,
                  sampler: GaussianSampler | None = None) -> np.ndarray:
    """Per-encryption Gaussian noise, seeded from (key, nonce)."""
    p = key.param
    s = sampler if sampler is not None else GaussianSampler(p.noise_width)
    rng = np.random.default_rng(_noise_seed(key, nc))
    return s.sample_array(p.slots, rng)


def keystream(key: SymKey, nc: Nonce, *,
              hooks: KeystreamHooks | None = None) -> np.ndarray:
    """The per-slot masking sequence: (PRF + noise) mod q, centered."""
    p = key.param
    if nc.bits != p.security_bits:
        raise ParamMismatchError(
            f"nonce width {nc.bits} != security level {p.security_bits}"
        )
    if hooks is not None and hooks.zero_prf:
        prf = np.zeros(p.slots, dtype=np.int64)
    else:
        prf = _prf_residues(key, nc)
    if hooks is not None and hooks.zero_noise:
        noise = np.zeros(p.slots, dtype=np.int64)
    else:
        noise = _noise_values(key, nc)
    return _centered((prf + noise) % p.q, p.q)


@dataclass(frozen=True)
class SymCiphertext:
    """Nonce plus ``slots`` centered residues; the hot uplink object."""

    nonce: Nonce
    coeffs: tuple[int, ...]
    param: ParamSet

    def __post_init__(self):
        half = self.param.q // 2
        if len(self.coeffs) != self.param.slots:
            raise ParamMismatchError(
                f"expected {self.param.slots} coefficients, "
                f"got {len(self.coeffs)}"
            )
        for c in self.coeffs:
            if not -half <= c <= half:
                raise ValueError(f"coefficient {c} outside centered ring")

    @property
    def param_id(self) -> int:
        return self.param.param_id


def encrypt(
    m: SlotVector,
    key: SymKey,
    nc: Nonce,
    dp: DeltaPolicy,
    *,
    ledger: NonceLedger | None = None,
    hooks: KeystreamHooks | None = None,
) -> SymCiphertext:
    """Encrypt a bounded slot vector under a fresh nonce.

    Coefficients are ``centered(round(delta * m_i) + z_i mod q)`` with the
    round-half-down tie rule. The nonce is recorded as consumed in the
    key's ledger (or an explicit one); reuse raises.
    """
    p = key.param
    if len(m) != p.slots:
        raise ParamMismatchError(
            f"vector has {len(m)} slots, parameter set {p.name} has {p.slots}"
        )
    if nc.bits != p.security_bits:
        raise ParamMismatchError(
            f"nonce width {nc.bits} != security level {p.security_bits}"
        )
    norm = m.norm1
    if norm > dp.bound:
        raise BoundViolationError(
            f"message 1-norm {norm} exceeds bound {dp.bound}"
        )
    (ledger if ledger is not None else key.ledger).claim(nc.value)

    z = keystream(key, nc, hooks=hooks)
    scaled = np.array(
        [round_half_down(dp.delta * v) for v in m.values], dtype=np.int64
    )
    coeffs = _centered((scaled + z) % p.q, p.q)
    return SymCiphertext(nc, tuple(int(c) for c in coeffs), p)


def decrypt(
    ct: SymCiphertext,
    key: SymKey,
    dp: DeltaPolicy,
    *,
    hooks: KeystreamHooks | None = None,
) -> SlotVector:
    """Strip the PRF mask and rescale; Gaussian noise remains as error.

    Per-slot error is at most (tail_cutoff + 0.5) / delta: 0.5 from the
    encryption rounding, tail_cutoff from the hard noise support cap.
    """
    p = key.param
    if ct.param != p:
        raise ParamMismatchError(
            f"ciphertext params {ct.param.name} != key params {p.name}"
        )
    if hooks is not None and hooks.zero_prf:
        prf = np.zeros(p.slots, dtype=np.int64)
    else:
        prf = _prf_residues(key, ct.nonce)
    coeffs = np.array(ct.coeffs, dtype=np.int64)
    residues = _centered((coeffs - prf) % p.q, p.q)
    values = residues.astype(float) / dp.delta
    return SlotVector.of(values, declared_bound=dp.bound)


def roundtrip_error_bound(p: ParamSet, dp: DeltaPolicy) -> float:
    """Deterministic per-slot decrypt error cap (tail_cutoff + 0.5)/delta."""
    return (p.gauss_tail_cutoff + 0.5) / dp.delta


def serialize(ct: SymCiphertext) -> bytes:
    """Wire format: 1-byte param id, nonce, then the coefficient block.

    Coefficients are packed MSB-first as (modulus_bits + 1)-bit
    two's-complement values and zero-padded to a byte boundary; the block
    length equals ciphertext_size_bytes exactly.
    """
    p = ct.param
    w = p.coeff_bits
    mask = (1 << w) - 1
    acc = 0
    for c in ct.coeffs:
        acc = (acc << w) | (c & mask)
    nbits = p.slots * w
    pad = (-nbits) % 8
    acc <<= pad
    block = acc.to_bytes((nbits + pad) // 8, "big")
    assert len(block) == ciphertext_size_bytes(p)
    return bytes([p.param_id]) + ct.nonce.to_bytes() + block


def deserialize(
    data: bytes, paramsets: dict[int, ParamSet] | None = None
) -> SymCiphertext:
    """Inverse of serialize; rejects bad headers, lengths, and residues."""
    if len(data) < 1:
        raise WireFormatError("empty buffer")
    pid = data[0]
    if paramsets is not None:
        p = paramsets.get(pid)
    else:
        from .params import PARAMSET_NAMES, load_paramset

        p = (
            load_paramset(PARAMSET_NAMES[pid])
            if pid < len(PARAMSET_NAMES)
            else None
        )
    if p is None:
        raise WireFormatError(f"unknown param id {pid}")
    nonce_len = p.security_bits // 8
    block_len = ciphertext_size_bytes(p)
    expect = 1 + nonce_len + block_len
    if len(data) < expect:
        raise WireFormatError(
            f"truncated payload: {len(data)} bytes, expected {expect}"
        )
    if len(data) > expect:
        raise WireFormatError(
            f"trailing bytes: {len(data)} bytes, expected {expect}"
        )
    nc = Nonce(int.from_bytes(data[1:1 + nonce_len], "big"), p.security_bits)
    block = data[1 + nonce_len:]
    acc = int.from_bytes(block, "big")
    w = p.coeff_bits
    nbits = p.slots * w
    pad = (-nbits) % 8
    if acc & ((1 << pad) - 1):
        raise WireFormatError("nonzero padding bits")
    acc >>= pad
    half = p.q // 2
    coeffs = []
    for i in range(p.slots):
        raw = (acc >> ((p.slots - 1 - i) * w)) & ((1 << w) - 1)
        if raw >= (1 << (w - 1)):
            raw -= 1 << w
        if not -half <= raw <= half:
            raise WireFormatError(
                f"coefficient {raw} outside centered ring for q={p.q}"
            )
        coeffs.append(raw)
    return SymCiphertext(nc, tuple(coeffs), p)
