"""Deterministic uplink/downlink model: fragmentation, delay, and reports.

The time model is analytic store-and-forward inside a seeded event loop:
no loss, no retransmission, no PHY. Per-message byte and fragment counts
are the quantities of interest; latency figures are internal-consistency
outputs of the stated formula, not measurements.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .codec import (
    FixedPointFormat,
    Q8_8,
    TelemetryRecord,
    default_bound,
    load_telemetry_csv,
    pack_records,
)
from .hemodel import (
    AnalyticsCircuit,
    eval_circuit,
    model_encrypt,
    new_authority,
)
from .params import (
    ConfigError,
    DeltaPolicy,
    HeSchemeProfile,
    ParamSet,
    fragment_count,
    load_params_config,
    load_paramset,
    load_profile,
    nonce_overhead_bits,
)
from .protocol import Cloud, MessageKind, ProtocolMessage, Rsu, Tmc

MODES = ("HHE", "PureHE")


@dataclass(frozen=True)
class LinkModel:
    """Store-and-forward link: every fragment pays overhead bytes, a fixed
    per-fragment latency, then the whole message pays propagation once."""

    bandwidth_bps: float
    mtu_bytes: int = 1400
    per_fragment_overhead_bytes: int = 0
    per_fragment_latency_s: float = 0.0
    propagation_delay_s: float = 0.0

    def __post_init__(self):
        if self.bandwidth_bps <= 0:
            raise ValueError("bandwidth must be positive")
        if self.mtu_bytes <= self.per_fragment_overhead_bytes:
            raise ValueError("mtu must exceed per-fragment overhead")
        if self.per_fragment_overhead_bytes < 0:
            raise ValueError("per-fragment overhead must be >= 0")


def fragment(size_bytes: int, link: LinkModel) -> list[int]:
    """Split a message into payload sizes of at most mtu - overhead bytes."""
    capacity = link.mtu_bytes - link.per_fragment_overhead_bytes
    if size_bytes < 0:
        raise ValueError("size_bytes must be >= 0")
    if size_bytes == 0:
        return [0]
    sizes = [capacity] * (size_bytes // capacity)
    rest = size_bytes % capacity
    if rest:
        sizes.append(rest)
    return sizes


def transmit_time(size_bytes: int, link: LinkModel) -> float:
    """Serialization of every fragment plus one propagation delay."""
    total = 0.0
    for payload in fragment(size_bytes, link):
        wire = payload + link.per_fragment_overhead_bytes
        total += wire * 8.0 / link.bandwidth_bps
        total += link.per_fragment_latency_s
    return total + link.propagation_delay_s


class _FifoLink:
    """Mutable FIFO discipline over a LinkModel; one per transmitter."""

    def __init__(self, link: LinkModel):
        self.link = link
        self.busy_until = 0.0

    def send(self, size_bytes: int, arrival_s: float):
        frags = fragment(size_bytes, self.link)
        ser = 0.0
        for payload in frags:
            wire = payload + self.link.per_fragment_overhead_bytes
            ser += wire * 8.0 / self.link.bandwidth_bps
            ser += self.link.per_fragment_latency_s
        start = max(arrival_s, self.busy_until)
        queue = start - arrival_s
        self.busy_until = start + ser
        done = start + ser + self.link.propagation_delay_s
        return len(frags), ser, queue, done


@dataclass(frozen=True)
class Workload:
    """Traffic shape for one scenario run."""

    rsu_count: int
    duration_s: float
    bsm_rate_hz: float = 10.0
    plaintext_bytes_per_msg: int = 200
    mode: str = "HHE"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode}")
        if self.rsu_count < 1 or self.duration_s <= 0 or self.bsm_rate_hz <= 0:
            raise ValueError("rsu_count, duration, and rate must be positive")


@dataclass
class MessageTrace:
    cycle: int
    t_arrival_s: float
    sender: str
    kind: str
    direction: str
    payload_bytes: int
    fragments: int
    serialization_s: float
    queue_s: float
    latency_s: float
    offline: bool


CSV_COLUMNS = (
    "cycle", "t_arrival_s", "sender", "kind", "direction", "payload_bytes",
    "fragments", "serialization_s", "queue_s", "latency_s", "offline",
)


@dataclass
class ScenarioReport:
    """Everything one run produced: header, traces, cycles, and totals."""

    header: dict
    messages: list[MessageTrace] = field(default_factory=list)
    cycles: list[dict] = field(default_factory=list)
    totals: dict = field(default_factory=dict)
    analytics: list[list[float]] = field(default_factory=list)

    def finalize(self) -> None:
        """Aggregate totals from per-message records."""
        online = [m for m in self.messages if not m.offline]
        up = [m for m in online if m.direction == "up"]
        down = [m for m in online if m.direction == "down"]
        offline = [m for m in self.messages if m.offline]
        latencies = [m.latency_s for m in online]
        lam = self.header.get("security_bits", 0)
        hhe_uploads = (
            len(up) if self.header.get("mode") == "HHE" else 0
        )
        self.totals = {
            "uplink_online_bytes": sum(m.payload_bytes for m in up),
            "uplink_online_msgs": len(up),
            "uplink_online_fragments": sum(m.fragments for m in up),
            "downlink_bytes": sum(m.payload_bytes for m in down),
            "downlink_msgs": len(down),
            "offline_bytes": sum(m.payload_bytes for m in offline),
            "offline_msgs": len(offline),
            "nonce_overhead_bits": nonce_overhead_bits(hhe_uploads, lam),
            "latency_p50_s": _percentile(latencies, 50),
            "latency_p95_s": _percentile(latencies, 95),
            "latency_p99_s": _percentile(latencies, 99),
            "latency_max_s": max(latencies) if latencies else 0.0,
        }

    def as_dict(self) -> dict:
        return {
            "header": self.header,
            "totals": self.totals,
            "cycles": self.cycles,
            "messages": [asdict(m) for m in self.messages],
            "analytics": self.analytics,
        }

    def write_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for m in self.messages:
                row = asdict(m)
                writer.writerow([row[c] for c in CSV_COLUMNS])

    def write(self, outdir: str, basename: str = "report") -> list[str]:
        os.makedirs(outdir, exist_ok=True)
        paths = []
        for ext, fn in (("csv", self.write_csv), ("json", self.write_json)):
            path = os.path.join(outdir, f"{basename}.{ext}")
            fn(path)
            paths.append(path)
        return paths


def _percentile(values: list[float], pct: float) -> float:
    if not values:
        return 0.0
    return float(np.percentile(np.array(values), pct))


def synth_telemetry(seed: int, cycle: int, rsu_index: int, rsu_id: str,
                    t_ms: int, count: int) -> list[TelemetryRecord]:
    """Plausible seeded telemetry: speeds, accelerations, counts."""
    rng = np.random.default_rng([seed, cycle, rsu_index])
    speeds = rng.uniform(0.0, 35.0, count)
    accels = rng.uniform(-3.0, 3.0, count)
    occ = rng.integers(0, 41, count)
    queue = rng.integers(0, 31, count)
    return [
        TelemetryRecord(
            rsu_id=rsu_id,
            timestamp_ms=t_ms + i * 100,
            speed=float(speeds[i]),
            acceleration=float(accels[i]),
            occupancy=float(occ[i]),
            queue_length=float(queue[i]),
        )
        for i in range(count)
    ]


def run_scenario(
    workload: Workload,
    link_up: LinkModel,
    link_down: LinkModel,
    param: ParamSet,
    profile: HeSchemeProfile,
    *,
    circuit: AnalyticsCircuit | None = None,
    fmt: FixedPointFormat = Q8_8,
    bound: float | None = None,
    seed: int = 0,
    cycle_window_s: float = 1.0,
    decryptor: str = "tmc",
    telemetry: list[TelemetryRecord] | None = None,
) -> ScenarioReport:
    """Drive the protocol over simulated time and account every byte.

    HHE mode runs the real pipeline (pack, encrypt, transcipher,
    aggregate, decrypt). PureHE mode uploads one profile-sized
    homomorphic ciphertext per telemetry message instead. Offline key
    registrations are ledgered separately and never enter online latency.
    """
    if decryptor not in ("tmc", "rsu"):
        raise ConfigError(f"decryptor must be 'tmc' or 'rsu', got {decryptor}")
    circuit = circuit or AnalyticsCircuit("mean")
    b = bound if bound is not None else default_bound(param.slots, fmt)
    dp = DeltaPolicy.for_bound(param.q, b)
    authority = new_authority(holder=decryptor, seed=seed)
    public = authority.public

    rsus = [Rsu(f"rsu-{i}", param, fmt) for i in range(workload.rsu_count)]
    cloud = Cloud(circuit)
    tmc = Tmc(authority)
    if decryptor == "rsu":
        rsus[0].authority = authority

    report = ScenarioReport(
        header={
            "mode": workload.mode,
            "paramset": param.name,
            "q": param.q,
            "security_bits": param.security_bits,
            "slots": param.slots,
            "profile": profile.scheme,
            "profile_ciphertext_bytes": profile.ciphertext_bytes,
            "circuit": circuit.kind,
            "rsu_count": workload.rsu_count,
            "bsm_rate_hz": workload.bsm_rate_hz,
            "duration_s": workload.duration_s,
            "cycle_window_s": cycle_window_s,
            "plaintext_bytes_per_msg": workload.plaintext_bytes_per_msg,
            "delta": dp.delta,
            "bound": dp.bound,
            "decryptor": decryptor,
            "seed": seed,
            "link_up": asdict(link_up),
            "link_down": asdict(link_down),
            "link_note": (
                "bandwidth/latency defaults are toolkit choices, "
                "not measured figures"
            ),
        },
    )

    uplinks = [_FifoLink(link_up) for _ in rsus]
    downlink = _FifoLink(link_down)

    # Offline phase: every RSU registers its wrapped key exactly once.
    for i, rsu in enumerate(rsus):
        reg = rsu.init(profile, public, seed=f"{seed}:rsu:{i}".encode())
        cloud.register(reg)
        report.messages.append(
            MessageTrace(
                cycle=-1, t_arrival_s=0.0, sender=rsu.rsu_id,
                kind=reg.kind.value, direction="up",
                payload_bytes=reg.payload_bytes,
                fragments=fragment_count(
                    reg.payload_bytes, link_up.mtu_bytes,
                    link_up.per_fragment_overhead_bytes,
                ),
                serialization_s=0.0, queue_s=0.0, latency_s=0.0,
                offline=True,
            )
        )

    n_cycles = math.ceil(workload.duration_s / cycle_window_s)
    per_cycle_records = max(
        1, round(workload.bsm_rate_hz * cycle_window_s)
    )
    replay_pos = 0

    for cycle in range(n_cycles):
        t0 = cycle * cycle_window_s
        t_up = t0 + cycle_window_s
        cycle_uplink_bytes = 0
        cycle_fragments = 0
        cycle_msgs = 0
        last_done = t_up

        for i, rsu in enumerate(rsus):
            if telemetry is not None:
                records = []
                for _ in range(per_cycle_records):
                    records.append(telemetry[replay_pos % len(telemetry)])
                    replay_pos += 1
            else:
                records = synth_telemetry(
                    seed, cycle, i, rsu.rsu_id, int(t0 * 1000),
                    per_cycle_records,
                )

            if workload.mode == "HHE":
                msgs = rsu.upload_cycle(records, dp)
                arrivals = [t_up] * len(msgs)
                for msg in msgs:
                    cloud.ingest(msg, dp)
            else:
                msgs = []
                arrivals = []
                for j, rec in enumerate(records):
                    sv = pack_records([rec], param, fmt, bound=b)[0]
                    sct = model_encrypt(sv, profile, public)
                    cloud.buffer.append(sct)
                    msgs.append(
                        ProtocolMessage(
                            kind=MessageKind.CIPHERTEXT_UPLOAD,
                            sender=rsu.rsu_id,
                            payload_bytes=profile.ciphertext_bytes,
                            body=None,
                        )
                    )
                    arrivals.append(t0 + (j + 1) / workload.bsm_rate_hz)

            for msg, arrival in zip(msgs, arrivals):
                frags, ser, queue, done = uplinks[i].send(
                    msg.payload_bytes, arrival
                )
                last_done = max(last_done, done)
                cycle_uplink_bytes += msg.payload_bytes
                cycle_fragments += frags
                cycle_msgs += 1
                report.messages.append(
                    MessageTrace(
                        cycle=cycle, t_arrival_s=arrival, sender=msg.sender,
                        kind=msg.kind.value, direction="up",
                        payload_bytes=msg.payload_bytes, fragments=frags,
                        serialization_s=ser, queue_s=queue,
                        latency_s=done - arrival, offline=False,
                    )
                )

        if workload.mode == "HHE":
            result = cloud.compute_cycle()
        else:
            shadow = eval_circuit(circuit, cloud.buffer)
            cloud.buffer = []
            result = ProtocolMessage(
                kind=MessageKind.RESULT_RETURN, sender="cloud",
                payload_bytes=shadow.size_bytes(), body=shadow,
            )

        frags, ser, queue, done = downlink.send(
            result.payload_bytes, last_done
        )
        report.messages.append(
            MessageTrace(
                cycle=cycle, t_arrival_s=last_done, sender="cloud",
                kind=result.kind.value, direction="down",
                payload_bytes=result.payload_bytes, fragments=frags,
                serialization_s=ser, queue_s=queue,
                latency_s=done - last_done, offline=False,
            )
        )

        if decryptor == "rsu":
            plain = rsus[0].receive_result(result)
        else:
            plain = tmc.receive(result)
        report.analytics.append([float(v) for v in plain.values])

        report.cycles.append(
            {
                "cycle": cycle,
                "uplink_bytes": cycle_uplink_bytes,
                "uplink_msgs": cycle_msgs,
                "uplink_fragments": cycle_fragments,
                "downlink_bytes": result.payload_bytes,
                "cycle_latency_s": done - t0,
            }
        )

    report.finalize()
    return report


# Scenario config files -----------------------------------------------------

_LINK_KEYS = {
    "bandwidth_bps", "mtu_bytes", "per_fragment_overhead_bytes",
    "per_fragment_latency_s", "propagation_delay_s",
}
_CONFIG_KEYS = {
    "name", "paramset", "profile", "mode", "rsu_count", "bsm_rate_hz",
    "duration_s", "cycle_window_s", "plaintext_bytes_per_msg", "circuit",
    "decryptor", "seed", "fixed_point", "bound", "uplink", "downlink",
    "telemetry_csv", "params_config",
}

DEFAULT_UPLINK = LinkModel(
    bandwidth_bps=100e6, mtu_bytes=1400, propagation_delay_s=0.005
)
DEFAULT_DOWNLINK = LinkModel(
    bandwidth_bps=100e6, mtu_bytes=1400, propagation_delay_s=0.005
)


@dataclass(frozen=True)
class ScenarioConfig:
    workload: Workload
    param: ParamSet
    profile: HeSchemeProfile
    link_up: LinkModel
    link_down: LinkModel
    circuit: AnalyticsCircuit
    fmt: FixedPointFormat
    bound: float | None
    seed: int
    cycle_window_s: float
    decryptor: str
    telemetry: list[TelemetryRecord] | None
    name: str


def _parse_link(raw: dict, default: LinkModel, where: str) -> LinkModel:
    unknown = set(raw) - _LINK_KEYS
    if unknown:
        raise ConfigError(f"{where}: unknown link keys {sorted(unknown)}")
    merged = {**asdict(default), **raw}
    try:
        return LinkModel(**merged)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_scenario_config(path: str) -> ScenarioConfig:
    """Parse and validate a scenario config file (JSON)."""
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
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")

    paramsets, profiles = (
        load_params_config(raw["params_config"])
        if raw.get("params_config")
        else (None, None)
    )

    def fail(msg):
        raise ConfigError(f"{path}: {msg}")

    pname = raw.get("paramset")
    if not pname:
        fail("missing 'paramset'")
    try:
        param = paramsets[pname] if paramsets else load_paramset(pname)
    except KeyError:
        fail(f"unknown paramset {pname!r}")

    sname = raw.get("profile", "CKKS-addmul")
    try:
        profile = profiles[sname] if profiles else load_profile(sname)
    except KeyError:
        fail(f"unknown profile {sname!r}")

    try:
        workload = Workload(
            rsu_count=int(raw.get("rsu_count", 1)),
            duration_s=float(raw.get("duration_s", 10.0)),
            bsm_rate_hz=float(raw.get("bsm_rate_hz", 10.0)),
            plaintext_bytes_per_msg=int(
                raw.get("plaintext_bytes_per_msg", 200)
            ),
            mode=raw.get("mode", "HHE"),
        )
    except ValueError as exc:
        fail(str(exc))

    circ_raw = raw.get("circuit", {"kind": "mean"})
    if isinstance(circ_raw, str):
        circ_raw = {"kind": circ_raw}
    try:
        circuit = AnalyticsCircuit(
            kind=circ_raw.get("kind", "mean"),
            weights=tuple(circ_raw["weights"])
            if circ_raw.get("weights") is not None
            else None,
        )
    except ValueError as exc:
        fail(str(exc))

    fp_raw = raw.get("fixed_point", {})
    try:
        fmt = FixedPointFormat(
            total_bits=int(fp_raw.get("total_bits", 16)),
            fraction_bits=int(fp_raw.get("fraction_bits", 8)),
        )
    except ValueError as exc:
        fail(str(exc))

    telemetry = None
    if raw.get("telemetry_csv"):
        try:
            telemetry = load_telemetry_csv(raw["telemetry_csv"])
        except (OSError, ValueError) as exc:
            fail(f"telemetry_csv: {exc}")

    return ScenarioConfig(
        workload=workload,
        param=param,
        profile=profile,
        link_up=_parse_link(raw.get("uplink", {}), DEFAULT_UPLINK,
                            f"{path}: uplink"),
        link_down=_parse_link(raw.get("downlink", {}), DEFAULT_DOWNLINK,
                              f"{path}: downlink"),
        circuit=circuit,
        fmt=fmt,
        bound=float(raw["bound"]) if raw.get("bound") is not None else None,
        seed=int(raw.get("seed", 0)),
        cycle_window_s=float(raw.get("cycle_window_s", 1.0)),
        decryptor=raw.get("decryptor", "tmc"),
        telemetry=telemetry,
        name=raw.get("name", os.path.basename(path)),
    )


def run_from_config(cfg: ScenarioConfig) -> ScenarioReport:
    report = run_scenario(
        cfg.workload,
        cfg.link_up,
        cfg.link_down,
        cfg.param,
        cfg.profile,
        circuit=cfg.circuit,
        fmt=cfg.fmt,
        bound=cfg.bound,
        seed=cfg.seed,
        cycle_window_s=cfg.cycle_window_s,
        decryptor=cfg.decryptor,
        telemetry=cfg.telemetry,
    )
    report.header["scenario"] = cfg.name
    return report
