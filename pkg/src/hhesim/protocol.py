"""Role state machines: roadside units, the untrusted cloud, and the TMC.

The offline phase registers each RSU's homomorphically wrapped symmetric
key with the cloud. Online, RSUs pack and symmetrically encrypt telemetry
under fresh counter nonces, the cloud transciphers uploads into shadow
ciphertexts and evaluates the configured circuit once per cycle, and the
authority holder (TMC by default, optionally an RSU) decrypts the single
returned result.

Each role is a single-threaded state machine; cross-role interaction goes
only through ProtocolMessage values. The cloud's API never returns
plaintext types, which is what keeps the privacy boundary checkable.
"""

from __future__ import annotations

import enum
import secrets
from dataclasses import dataclass
from typing import Optional

from .codec import FixedPointFormat, Q8_8, SlotVector, TelemetryRecord, \
    pack_records
from .hemodel import (
    AnalyticsCircuit,
    DecryptionAuthority,
    EncryptedSymKey,
    PublicHandle,
    ShadowCiphertext,
    eval_circuit,
    model_decrypt,
    model_encrypt_key,
    model_transcipher,
)
from .params import DeltaPolicy, HeSchemeProfile, ParamSet
from .symcipher import Nonce, SymKey, encrypt, keygen, serialize

_NONCE_COUNTER_BITS = 64


class UnregisteredRsuError(RuntimeError):
    """Upload attempted before the offline registration phase."""


class UnknownRsuError(KeyError):
    """The cloud received an upload from an RSU it has no key for."""


class EmptyCycleError(RuntimeError):
    """Compute requested on a cycle with no ingested uploads."""


class NonceExhaustedError(RuntimeError):
    """The 64-bit per-key nonce counter overflowed."""


class MessageKind(enum.Enum):
    KEY_REGISTRATION = "KeyRegistration"
    CIPHERTEXT_UPLOAD = "CiphertextUpload"
    RESULT_RETURN = "ResultReturn"


@dataclass(frozen=True)
class ProtocolMessage:
    """One message on the wire; payload_bytes is what the link model sees."""

    kind: MessageKind
    sender: str
    payload_bytes: int
    body: object
    offline: bool = False


class Rsu:
    """Data provider: owns the symmetric key and the nonce counter."""

    def __init__(self, rsu_id: str, param: ParamSet,
                 fmt: FixedPointFormat = Q8_8):
        self.rsu_id = rsu_id
        self.param = param
        self.fmt = fmt
        self.key: Optional[SymKey] = None
        self.nonce_counter = 0
        self.pending: list[TelemetryRecord] = []
        self.registered = False
        self.authority: Optional[DecryptionAuthority] = None

    def init(self, profile: HeSchemeProfile, public: PublicHandle,
             seed=None) -> ProtocolMessage:
        """Offline phase: generate the key, emit its wrapped registration."""
        if seed is None:
            seed = secrets.token_bytes(16)
        self.key = keygen(self.param, seed)
        self.nonce_counter = 0
        self.registered = True
        ek = model_encrypt_key(self.key, profile, public)
        return ProtocolMessage(
            kind=MessageKind.KEY_REGISTRATION,
            sender=self.rsu_id,
            payload_bytes=ek.size_bytes(),
            body=ek,
            offline=True,
        )

    def _next_nonce(self) -> Nonce:
        if self.nonce_counter >= (1 << _NONCE_COUNTER_BITS):
            raise NonceExhaustedError(
                f"{self.rsu_id}: nonce counter exhausted"
            )
        nc = Nonce.from_counter(self.nonce_counter, self.param.security_bits)
        self.nonce_counter += 1
        return nc

    def upload_cycle(self, records: list[TelemetryRecord],
                     dp: DeltaPolicy) -> list[ProtocolMessage]:
        """Pack and encrypt one cycle's telemetry, one upload per vector."""
        if not self.registered or self.key is None:
            raise UnregisteredRsuError(
                f"{self.rsu_id}: upload before registration"
            )
        out = []
        for sv in pack_records(records, self.param, self.fmt,
                               bound=dp.bound):
            ct = encrypt(sv, self.key, self._next_nonce(), dp)
            wire = serialize(ct)
            out.append(
                ProtocolMessage(
                    kind=MessageKind.CIPHERTEXT_UPLOAD,
                    sender=self.rsu_id,
                    payload_bytes=len(wire),
                    body=wire,
                )
            )
        return out

    def receive_result(self, msg: ProtocolMessage) -> SlotVector:
        """Edge-decryption variant; requires this RSU to hold the authority."""
        if self.authority is None:
            raise PermissionError(
                f"{self.rsu_id} holds no decryption authority"
            )
        return model_decrypt(msg.body, self.authority)


class Cloud:
    """Untrusted evaluator: transciphers, aggregates, never decrypts.

    Holds no symmetric key material in the clear and no decryption
    authority; no method returns a plaintext type.
    """

    def __init__(self, circuit: AnalyticsCircuit = AnalyticsCircuit("mean")):
        self.key_registry: dict[str, EncryptedSymKey] = {}
        self.buffer: list[ShadowCiphertext] = []
        self.circuit = circuit

    def register(self, msg: ProtocolMessage) -> None:
        """Idempotent keyed on sender: re-registration replaces the entry."""
        if msg.kind is not MessageKind.KEY_REGISTRATION:
            raise ValueError(f"expected KeyRegistration, got {msg.kind}")
        self.key_registry[msg.sender] = msg.body

    def ingest(self, msg: ProtocolMessage, dp: DeltaPolicy) -> None:
        """Transcipher an upload into the current cycle's buffer."""
        if msg.kind is not MessageKind.CIPHERTEXT_UPLOAD:
            raise ValueError(f"expected CiphertextUpload, got {msg.kind}")
        ek = self.key_registry.get(msg.sender)
        if ek is None:
            raise UnknownRsuError(
                f"upload from unregistered RSU {msg.sender!r}"
            )
        from .symcipher import deserialize

        sct = deserialize(msg.body)
        self.buffer.append(model_transcipher(sct, ek, dp))

    def compute_cycle(self) -> ProtocolMessage:
        """Evaluate the circuit over the buffer; emit exactly one result."""
        if not self.buffer:
            raise EmptyCycleError("no uploads ingested this cycle")
        result = eval_circuit(self.circuit, self.buffer)
        self.buffer = []
        return ProtocolMessage(
            kind=MessageKind.RESULT_RETURN,
            sender="cloud",
            payload_bytes=result.size_bytes(),
            body=result,
        )


class Tmc:
    """Authority holder: decrypts the per-cycle analytics result."""

    def __init__(self, authority: DecryptionAuthority):
        self.authority = authority
        self.results: list[SlotVector] = []

    def receive(self, msg: ProtocolMessage) -> SlotVector:
        if msg.kind is not MessageKind.RESULT_RETURN:
            raise ValueError(f"expected ResultReturn, got {msg.kind}")
        plain = model_decrypt(msg.body, self.authority)
        self.results.append(plain)
        return plain
