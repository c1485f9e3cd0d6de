"""Row builders for the size and expansion reports shared by CLI and tests."""

from __future__ import annotations

from .params import (
    PARAMSET_NAMES,
    all_paramsets,
    ciphertext_size_bytes,
    fragment_count,
    load_profile,
    payload_bytes,
    reported_expansion,
)

#: Bits of fixed-point payload carried per slot in the size table.
PAYLOAD_BITS_PER_SLOT = 16

#: Pure-HE rows compare against one plaintext telemetry message.
PURE_HE_PLAINTEXT_BYTES = 200

_PURE_HE_SCHEMES = ("BFV", "BGV", "CKKS-add", "CKKS-addmul")
_EXPANSION_RUBATO_ROWS = ("Par-80S", "Par-80M", "Par-80L")


def size_rows() -> list[dict]:
    """Per-parameter-set slot count, payload capacity, and ciphertext size."""
    rows = []
    for p in all_paramsets():
        rows.append(
            {
                "paramset": p.name,
                "slots": p.slots,
                "payload_bytes": payload_bytes(
                    p.slots, PAYLOAD_BITS_PER_SLOT
                ),
                "ciphertext_bytes": ciphertext_size_bytes(p),
            }
        )
    return rows


def expansion_rows(mtu_bytes: int = 1400,
                   overhead_bytes: int = 0) -> list[dict]:
    """Expansion and fragmentation rows: four pure-HE, three symmetric.

    Expansion is rounded to displayed precision (whole numbers for pure
    HE, one decimal for the symmetric rows). Fragment counts follow the
    given MTU and per-fragment overhead.
    """
    rows = []
    for scheme in _PURE_HE_SCHEMES:
        prof = load_profile(scheme)
        rows.append(
            {
                "scheme": scheme,
                "plaintext_bytes": PURE_HE_PLAINTEXT_BYTES,
                "ciphertext_bytes": prof.ciphertext_bytes,
                # whole numbers for pure HE, one decimal for the symmetric
                # rows; matches the displayed precision rule
                "expansion": int(reported_expansion(
                    prof.ciphertext_bytes, PURE_HE_PLAINTEXT_BYTES, 0
                )),
                "fragments": fragment_count(
                    prof.ciphertext_bytes, mtu_bytes, overhead_bytes
                ),
            }
        )
    for name in _EXPANSION_RUBATO_ROWS:
        p = all_paramsets()[PARAMSET_NAMES.index(name)]
        plain = payload_bytes(p.slots, PAYLOAD_BITS_PER_SLOT)
        ct = ciphertext_size_bytes(p)
        rows.append(
            {
                "scheme": f"Rubato ({name})",
                "plaintext_bytes": plain,
                "ciphertext_bytes": ct,
                "expansion": reported_expansion(ct, plain, 1),
                "fragments": fragment_count(ct, mtu_bytes, overhead_bytes),
            }
        )
    return rows
