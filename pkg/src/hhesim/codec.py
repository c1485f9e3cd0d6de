"""Fixed-point telemetry quantization and slot-vector packing.

Telemetry records are flattened into slot vectors of quantized reals (each
value a multiple of 2^-f), in the fixed field order ``SLOT_FIELDS``. The
resulting vectors carry the 1-norm bound that the scale-factor policy needs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .params import ParamSet


class QuantizationRangeError(ValueError):
    """Value falls outside the representable fixed-point range."""


class CountMismatchError(ValueError):
    """Record count inconsistent with the packed slot capacity."""


def round_half_down(x: float) -> int:
    """Round to the nearest integer, ties toward minus infinity.

    2.5 -> 2, -2.5 -> -3, 2.6 -> 3. This is the tie rule used everywhere a
    real is mapped onto the integer grid (quantization and encryption).
    """
    return math.ceil(x - 0.5)


@dataclass(frozen=True)
class FixedPointFormat:
    """Signed fixed-point layout: ``total_bits`` wide, ``fraction_bits`` after
    the binary point. Representable range is
    [-2^(B-1-f), 2^(B-1-f) - 2^-f] at resolution 2^-f."""

    total_bits: int = 16
    fraction_bits: int = 8

    def __post_init__(self):
        if not 0 <= self.fraction_bits < self.total_bits <= 32:
            raise ValueError(
                f"need 0 <= fraction_bits < total_bits <= 32, got "
                f"{self.fraction_bits}/{self.total_bits}"
            )

    @property
    def resolution(self) -> float:
        return 2.0 ** -self.fraction_bits

    @property
    def int_min(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def int_max(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def min_value(self) -> float:
        return self.int_min * self.resolution

    @property
    def max_value(self) -> float:
        return self.int_max * self.resolution

    @property
    def max_magnitude(self) -> float:
        """Loose per-slot magnitude cap 2^(B-1-f) used for default bounds."""
        return float(1 << (self.total_bits - 1)) * self.resolution

    @property
    def quantization_error_bound(self) -> float:
        """Worst-case |dequantize(quantize(x)) - x|, i.e. 2^(-f-1)."""
        return 2.0 ** -(self.fraction_bits + 1)


#: Default format: Q8.8, covering +-127.996 at 1/256 resolution. Plenty for
#: speeds in m/s, accelerations, and intersection occupancy counts.
Q8_8 = FixedPointFormat(16, 8)


def quantize(x: float, fmt: FixedPointFormat = Q8_8) -> int:
    """Map a real onto the signed fixed-point grid, ties rounding down."""
    v = round_half_down(x * (1 << fmt.fraction_bits))
    if not fmt.int_min <= v <= fmt.int_max:
        raise QuantizationRangeError(
            f"{x} outside representable range "
            f"[{fmt.min_value}, {fmt.max_value}]"
        )
    return v


def dequantize(v: int, fmt: FixedPointFormat = Q8_8) -> float:
    return v * fmt.resolution


def snap(x: float, fmt: FixedPointFormat = Q8_8) -> float:
    """Nearest grid value without range enforcement (post-decryption use)."""
    return dequantize(round_half_down(x * (1 << fmt.fraction_bits)), fmt)


@dataclass(frozen=True)
class TelemetryRecord:
    """One aggregated roadside telemetry sample.

    ``rsu_id`` and ``timestamp_ms`` are transport metadata and are not
    packed into encrypted slots; the four measurement fields are.
    """

    rsu_id: str
    timestamp_ms: int
    speed: float
    acceleration: float
    occupancy: float
    queue_length: float

    def slot_fields(self) -> tuple[float, float, float, float]:
        return (self.speed, self.acceleration, self.occupancy,
                self.queue_length)

    def quantized(self, fmt: FixedPointFormat = Q8_8) -> "TelemetryRecord":
        """Copy with every measurement snapped to the fixed-point grid."""
        q = [dequantize(quantize(v, fmt), fmt) for v in self.slot_fields()]
        return replace(
            self, speed=q[0], acceleration=q[1], occupancy=q[2],
            queue_length=q[3],
        )


#: Fixed record-to-slot field order; part of the wire contract.
SLOT_FIELDS = ("speed", "acceleration", "occupancy", "queue_length")
FIELDS_PER_RECORD = len(SLOT_FIELDS)


@dataclass(frozen=True)
class SlotVector:
    """Bounded real vector, the plaintext unit of encryption."""

    values: tuple[float, ...]
    bound: float

    def __post_init__(self):
        if self.bound <= 0:
            raise ValueError("bound must be positive")
        if self.norm1 > self.bound:
            raise ValueError(
                f"1-norm {self.norm1} exceeds declared bound {self.bound}"
            )

    @property
    def norm1(self) -> float:
        return sum(abs(v) for v in self.values)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def of(
        cls, values: Iterable[float], declared_bound: float | None = None
    ) -> "SlotVector":
        """Build a vector, widening the bound to cover the actual norm."""
        vals = tuple(float(v) for v in values)
        norm = sum(abs(v) for v in vals)
        bound = max(declared_bound or 0.0, norm, 1.0)
        return cls(vals, bound)


def default_bound(slots: int, fmt: FixedPointFormat = Q8_8) -> float:
    """Loose worst-case 1-norm: slots * 2^(B-1-f).

    Any vector of representable values satisfies it, so the derived scale
    factor can never wrap a representable message around the ring.
    """
    return slots * fmt.max_magnitude


def records_per_vector(p: ParamSet) -> int:
    return p.slots // FIELDS_PER_RECORD


def pack_records(
    records: Sequence[TelemetryRecord],
    p: ParamSet,
    fmt: FixedPointFormat = Q8_8,
    *,
    bound: float | None = None,
) -> list[SlotVector]:
    """Quantize records into slot vectors, final vector zero-padded.

    Each vector holds ``slots // 4`` records in SLOT_FIELDS order. The
    declared bound defaults to the loose worst case; pass a tighter one if
    the workload warrants it.
    """
    per = records_per_vector(p)
    if per < 1:
        raise ValueError(
            f"{p.name}: {p.slots} slots cannot hold a "
            f"{FIELDS_PER_RECORD}-field record"
        )
    b = bound if bound is not None else default_bound(p.slots, fmt)
    out = []
    for start in range(0, len(records), per):
        chunk = records[start:start + per]
        values = []
        for rec in chunk:
            values.extend(
                dequantize(quantize(v, fmt), fmt) for v in rec.slot_fields()
            )
        values.extend(0.0 for _ in range(p.slots - len(values)))
        out.append(SlotVector(tuple(values), b))
    return out


def unpack_records(
    vectors: Sequence[SlotVector],
    fmt: FixedPointFormat = Q8_8,
    count: int | None = None,
) -> list[TelemetryRecord]:
    """Inverse of pack_records, snapping each slot back onto the grid.

    ``count`` trims padding records; it must not exceed the packed
    capacity. Transport metadata (rsu_id, timestamp) is not recoverable
    from slots and comes back empty.
    """
    if not vectors:
        if count:
            raise CountMismatchError(f"count={count} but no vectors given")
        return []
    per = len(vectors[0].values) // FIELDS_PER_RECORD
    capacity = sum(len(v.values) // FIELDS_PER_RECORD for v in vectors)
    n = capacity if count is None else count
    if n > capacity:
        raise CountMismatchError(
            f"count={n} exceeds packed capacity {capacity}"
        )
    records = []
    for i in range(n):
        vec = vectors[i // per]
        base = (i % per) * FIELDS_PER_RECORD
        f = [snap(x, fmt) for x in vec.values[base:base + FIELDS_PER_RECORD]]
        records.append(
            TelemetryRecord(
                rsu_id="", timestamp_ms=0, speed=f[0], acceleration=f[1],
                occupancy=f[2], queue_length=f[3],
            )
        )
    return records


TELEMETRY_CSV_COLUMNS = (
    "rsu_id", "timestamp_ms", "speed", "acceleration", "occupancy",
    "queue_length",
)


def load_telemetry_csv(path: str) -> list[TelemetryRecord]:
    """Read telemetry for scenario replay; header must match
    TELEMETRY_CSV_COLUMNS exactly."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != \
                TELEMETRY_CSV_COLUMNS:
            raise ValueError(
                f"{path}: expected header {','.join(TELEMETRY_CSV_COLUMNS)}"
            )
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                records.append(
                    TelemetryRecord(
                        rsu_id=row[0],
                        timestamp_ms=int(row[1]),
                        speed=float(row[2]),
                        acceleration=float(row[3]),
                        occupancy=float(row[4]),
                        queue_length=float(row[5]),
                    )
                )
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad row: {exc}") from exc
    return records
