"""Shadow homomorphic layer: exact arithmetic under opaque wrappers.

Homomorphic internals are modeled, not implemented. A shadow ciphertext
carries its plaintext hidden behind a module-private attribute, reports a
constant profile-defined size no matter what has been computed on it, and
keeps honest books on operation counts and multiplicative depth. That is
all the feasibility analysis needs: byte sizes, message counts, and
functional end-to-end correctness.

The hidden payload is reachable only through ``model_decrypt`` with the
matching authority capability; no evaluator-facing operation returns
plaintext.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

import numpy as np

from .codec import SlotVector
from .params import DeltaPolicy, HeSchemeProfile
from .symcipher import ParamMismatchError, SymCiphertext, SymKey, decrypt


class ProfileMismatchError(ValueError):
    """Operands were produced under different HE scheme profiles."""


class MulUnsupportedError(ValueError):
    """The profile does not admit ciphertext-ciphertext multiplication."""


class DepthExhaustedError(ValueError):
    """The multiplication would exceed the profile's depth budget."""


class UnauthorizedDecryptionError(PermissionError):
    """Caller does not hold the decryption authority for this ciphertext."""


@dataclass(frozen=True)
class PublicHandle:
    """Public half of a key pair: enough to encrypt, never to decrypt."""

    key_id: str


@dataclass(frozen=True)
class DecryptionAuthority:
    """Capability object held by the party entitled to decrypt results."""

    key_id: str
    holder: str

    @property
    def public(self) -> PublicHandle:
        return PublicHandle(self.key_id)


def new_authority(holder: str, seed: int | None = None) -> DecryptionAuthority:
    """Mint a fresh decryption authority (and thereby its public handle)."""
    if seed is None:
        key_id = secrets.token_hex(16)
    else:
        key_id = f"{seed:032x}"
    return DecryptionAuthority(key_id=key_id, holder=holder)


@dataclass(frozen=True)
class OpLog:
    """Cumulative homomorphic operation counts carried by a ciphertext."""

    add: int = 0
    mul: int = 0
    scalar_mul: int = 0
    transcipher: int = 0

    def merged(self, other: "OpLog", **bumps: int) -> "OpLog":
        return OpLog(
            add=self.add + other.add + bumps.get("add", 0),
            mul=self.mul + other.mul + bumps.get("mul", 0),
            scalar_mul=self.scalar_mul + other.scalar_mul
            + bumps.get("scalar_mul", 0),
            transcipher=self.transcipher + other.transcipher
            + bumps.get("transcipher", 0),
        )

    def bumped(self, **bumps: int) -> "OpLog":
        return self.merged(OpLog(), **bumps)

    def as_dict(self) -> dict[str, int]:
        return {
            "add": self.add,
            "mul": self.mul,
            "scalar_mul": self.scalar_mul,
            "transcipher": self.transcipher,
        }


class ShadowCiphertext:
    """Opaque result wrapper with size, depth, and op accounting."""

    __slots__ = ("_values", "profile", "key_id", "mult_depth_used", "op_log")

    def __init__(self, values, profile: HeSchemeProfile, key_id: str,
                 mult_depth_used: int = 0, op_log: OpLog = OpLog()):
        arr = np.asarray(values, dtype=float).copy()
        arr.setflags(write=False)
        self._values = arr
        self.profile = profile
        self.key_id = key_id
        self.mult_depth_used = mult_depth_used
        self.op_log = op_log

    def size_bytes(self) -> int:
        """Constant per profile, independent of anything computed so far."""
        return self.profile.ciphertext_bytes

    @property
    def slots(self) -> int:
        return len(self._values)

    def __repr__(self):
        return (
            f"ShadowCiphertext(profile={self.profile.scheme}, "
            f"slots={self.slots}, depth={self.mult_depth_used})"
        )


class EncryptedSymKey:
    """Homomorphically wrapped symmetric key, registered once per provider."""

    __slots__ = ("_key", "profile", "key_id")

    def __init__(self, key: SymKey, profile: HeSchemeProfile, key_id: str):
        self._key = key
        self.profile = profile
        self.key_id = key_id

    def size_bytes(self) -> int:
        return self.profile.ciphertext_bytes

    def __repr__(self):
        return (
            f"EncryptedSymKey(profile={self.profile.scheme}, "
            f"param={self._key.param.name})"
        )


def model_encrypt(values, profile: HeSchemeProfile,
                  public: PublicHandle) -> ShadowCiphertext:
    """Direct homomorphic encryption of a plaintext vector (pure-HE path)."""
    vals = values.values if isinstance(values, SlotVector) else values
    return ShadowCiphertext(vals, profile, public.key_id)


def model_encrypt_key(key: SymKey, profile: HeSchemeProfile,
                      public: PublicHandle) -> EncryptedSymKey:
    """Wrap a symmetric key for registration; size is the profile's."""
    return EncryptedSymKey(key, profile, public.key_id)


def model_transcipher(sct: SymCiphertext, ek: EncryptedSymKey,
                      dp: DeltaPolicy) -> ShadowCiphertext:
    """Evaluate the symmetric decryption inside the shadow boundary.

    The output hides the symmetrically decrypted values (bounded noise
    included); nothing crosses back into the clear.
    """
    if sct.param != ek._key.param:
        raise ParamMismatchError(
            f"ciphertext params {sct.param.name} != registered key params "
            f"{ek._key.param.name}"
        )
    plain = decrypt(sct, ek._key, dp)
    return ShadowCiphertext(
        plain.values, ek.profile, ek.key_id,
        op_log=OpLog(transcipher=1),
    )


def _check_binary(a: ShadowCiphertext, b: ShadowCiphertext) -> None:
    if a.profile != b.profile:
        raise ProfileMismatchError(
            f"{a.profile.scheme} vs {b.profile.scheme}"
        )
    if a.key_id != b.key_id:
        raise ProfileMismatchError("operands encrypted under different keys")
    if a.slots != b.slots:
        raise ProfileMismatchError(
            f"slot counts differ: {a.slots} vs {b.slots}"
        )


def he_add(a: ShadowCiphertext, b: ShadowCiphertext) -> ShadowCiphertext:
    _check_binary(a, b)
    return ShadowCiphertext(
        a._values + b._values, a.profile, a.key_id,
        mult_depth_used=max(a.mult_depth_used, b.mult_depth_used),
        op_log=a.op_log.merged(b.op_log, add=1),
    )


def he_scalar_mul(a: ShadowCiphertext, s: float) -> ShadowCiphertext:
    return ShadowCiphertext(
        a._values * s, a.profile, a.key_id,
        mult_depth_used=a.mult_depth_used,
        op_log=a.op_log.bumped(scalar_mul=1),
    )


def he_mul(a: ShadowCiphertext, b: ShadowCiphertext) -> ShadowCiphertext:
    _check_binary(a, b)
    if not a.profile.supports_mul:
        raise MulUnsupportedError(
            f"profile {a.profile.scheme} does not support multiplication"
        )
    depth = max(a.mult_depth_used, b.mult_depth_used) + 1
    if depth > a.profile.depth_budget:
        raise DepthExhaustedError(
            f"depth {depth} exceeds budget {a.profile.depth_budget}"
        )
    return ShadowCiphertext(
        a._values * b._values, a.profile, a.key_id,
        mult_depth_used=depth,
        op_log=a.op_log.merged(b.op_log, mul=1),
    )


CIRCUIT_KINDS = ("mean", "sum", "weighted_index", "variance")


@dataclass(frozen=True)
class AnalyticsCircuit:
    """A fixed slotwise analytics circuit evaluated once per cycle."""

    kind: str = "mean"
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in CIRCUIT_KINDS:
            raise ValueError(
                f"unknown circuit {self.kind!r}; expected one of "
                f"{CIRCUIT_KINDS}"
            )

    def eval_plain(self, vectors) -> np.ndarray:
        """Plaintext-side oracle computing the same circuit."""
        xs = np.array([np.asarray(v, dtype=float) for v in vectors])
        if self.kind == "sum":
            return xs.sum(axis=0)
        if self.kind == "mean":
            return xs.sum(axis=0) * (1.0 / len(xs))
        if self.kind == "weighted_index":
            w = np.asarray(self.weights, dtype=float)
            return (xs * w[:, None]).sum(axis=0)
        mean_sq = (xs * xs).sum(axis=0) * (1.0 / len(xs))
        mean = xs.sum(axis=0) * (1.0 / len(xs))
        return mean_sq - mean * mean


def _fold_sum(inputs) -> ShadowCiphertext:
    acc = inputs[0]
    for x in inputs[1:]:
        acc = he_add(acc, x)
    return acc


def eval_circuit(circuit: AnalyticsCircuit,
                 inputs: list[ShadowCiphertext]) -> ShadowCiphertext:
    """Run the circuit over the cycle's inputs; exactly one output.

    mean: N-1 adds and one scalar multiplication. weighted_index: one
    scalar multiplication per input plus N-1 adds. variance: mean of
    squares minus squared mean, multiplicative depth 1.
    """
    if not inputs:
        raise ValueError("circuit needs at least one input")
    if circuit.kind == "sum":
        return _fold_sum(inputs)
    if circuit.kind == "mean":
        return he_scalar_mul(_fold_sum(inputs), 1.0 / len(inputs))
    if circuit.kind == "weighted_index":
        if circuit.weights is None or len(circuit.weights) != len(inputs):
            raise ValueError(
                f"weighted_index needs exactly {len(inputs)} weights"
            )
        terms = [
            he_scalar_mul(x, w) for x, w in zip(inputs, circuit.weights)
        ]
        return _fold_sum(terms)
    # variance
    if not inputs[0].profile.supports_mul:
        raise MulUnsupportedError(
            f"variance circuit needs multiplication; profile "
            f"{inputs[0].profile.scheme} is add-only"
        )
    squares = [he_mul(x, x) for x in inputs]
    mean_sq = he_scalar_mul(_fold_sum(squares), 1.0 / len(inputs))
    mean = he_scalar_mul(_fold_sum(inputs), 1.0 / len(inputs))
    mean2 = he_mul(mean, mean)
    return he_add(mean_sq, he_scalar_mul(mean2, -1.0))


def model_decrypt(result: ShadowCiphertext,
                  authority: DecryptionAuthority) -> SlotVector:
    """Release the hidden payload to the authority holder, and no one else."""
    if not isinstance(authority, DecryptionAuthority) \
            or authority.key_id != result.key_id:
        raise UnauthorizedDecryptionError(
            "caller does not hold the decryption authority for this result"
        )
    return SlotVector.of(result._values)
