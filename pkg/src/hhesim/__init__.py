"""Hybrid homomorphic encryption feasibility toolkit for ITS backhaul.

Implements the symmetric half of a transciphering pipeline (parameter
sets, fixed-point telemetry packing, noisy-keystream encryption with
bit-exact serialization), a shadow model of the homomorphic half with
faithful size and operation accounting, the RSU/Cloud/TMC protocol state
machines, and a deterministic uplink/downlink simulator that reproduces
the published size, expansion, and fragmentation figures.
"""

from .codec import (
    FixedPointFormat,
    Q8_8,
    SlotVector,
    TelemetryRecord,
    dequantize,
    pack_records,
    quantize,
    unpack_records,
)
from .hemodel import (
    AnalyticsCircuit,
    DecryptionAuthority,
    EncryptedSymKey,
    ShadowCiphertext,
    eval_circuit,
    he_add,
    he_mul,
    he_scalar_mul,
    model_decrypt,
    model_encrypt,
    model_encrypt_key,
    model_transcipher,
    new_authority,
)
from .netsim import (
    LinkModel,
    ScenarioReport,
    Workload,
    fragment,
    load_scenario_config,
    run_from_config,
    run_scenario,
    transmit_time,
)
from .params import (
    DeltaPolicy,
    HeSchemeProfile,
    ParamSet,
    ciphertext_size_bytes,
    compute_delta,
    expansion_factor,
    fragment_count,
    load_paramset,
    load_profile,
    nonce_overhead_bits,
    payload_bytes,
    select_prime,
)
from .protocol import Cloud, MessageKind, ProtocolMessage, Rsu, Tmc
from .symcipher import (
    GaussianSampler,
    Nonce,
    SymCiphertext,
    SymKey,
    decrypt,
    deserialize,
    encrypt,
    keygen,
    keystream,
    serialize,
)

__version__ = "0.1.0"
