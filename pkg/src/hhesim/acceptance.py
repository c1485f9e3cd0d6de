"""Embedded acceptance suite: one check per release criterion.

Each check is self-contained, deterministic under its default seed, and
returns a CheckResult with a one-line detail string. The `selftest` CLI
verb and the test suite both run exactly these functions.
"""

from __future__ import annotations

import contextlib
import inspect
import io
import json
import math
import os
import tempfile
import time
import typing
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .codec import Q8_8, SlotVector, default_bound
from .hemodel import new_authority
from .netsim import LinkModel, Workload, run_scenario, synth_telemetry
from .params import (
    DeltaPolicy,
    PARAMSET_NAMES,
    load_paramset,
    load_profile,
    nonce_overhead_bits,
)
from .protocol import Cloud, Rsu, Tmc
from .symcipher import (
    GaussianSampler,
    Nonce,
    decrypt,
    encrypt,
    keygen,
    roundtrip_error_bound,
)
from .tables import expansion_rows, size_rows


@dataclass
class CheckResult:
    criterion: str
    passed: bool
    detail: str
    elapsed_s: float


EXPECTED_SIZES = {
    "Par-80S": (12, 24, 41),
    "Par-80M": (32, 64, 104),
    "Par-80L": (60, 120, 195),
    "Par-128S": (12, 24, 41),
    "Par-128M": (32, 64, 104),
    "Par-128L": (60, 120, 195),
}

# scheme -> (expansion, fragments at overhead 0, fragments at overhead 7)
EXPECTED_EXPANSION = {
    "BFV": (660, 95, 95),
    "BGV": (1973, 282, 284),
    "CKKS-add": (3939, 563, 566),
    "CKKS-addmul": (5251, 751, 754),
    "Rubato (Par-80S)": (1.7, 1, 1),
    "Rubato (Par-80M)": (1.6, 1, 1),
    "Rubato (Par-80L)": (1.6, 1, 1),
}


def _result(criterion, passed, detail, t0, budget_s):
    elapsed = time.perf_counter() - t0
    if elapsed >= budget_s:
        passed = False
        detail += f" [exceeded {budget_s}s budget: {elapsed:.2f}s]"
    return CheckResult(criterion, passed, detail, elapsed)


def _run_cli_json(argv: list[str]):
    """Run a CLI verb in-process, capturing its JSON output."""
    from . import cli  # deferred: cli imports this module

    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        rc = cli.main(argv + ["--format", "json"])
    return rc, json.loads(buf.getvalue())


def check_size_table() -> CheckResult:
    """Criterion 1: the `sizes` verb matches the published rows exactly."""
    t0 = time.perf_counter()
    rc, emitted = _run_cli_json(["sizes"])
    rows = {r["paramset"]: (r["slots"], r["payload_bytes"],
                            r["ciphertext_bytes"]) for r in emitted}
    lib_rows = {r["paramset"]: (r["slots"], r["payload_bytes"],
                                r["ciphertext_bytes"]) for r in size_rows()}
    bad = {k: rows[k] for k in rows if rows[k] != EXPECTED_SIZES[k]}
    passed = rc == 0 and not bad and rows == lib_rows \
        and set(rows) == set(EXPECTED_SIZES)
    detail = "all six rows exact" if passed else f"mismatches: {bad}"
    return _result("table2-sizes", passed, detail, t0, budget_s=1.0)


def check_expansion_table() -> CheckResult:
    """Criterion 2: expansion factors and fragment counts, both presets."""
    t0 = time.perf_counter()
    rc0, emitted0 = _run_cli_json(
        ["expansion", "--mtu", "1400", "--overhead", "0"]
    )
    rc7, emitted7 = _run_cli_json(
        ["expansion", "--mtu", "1400", "--overhead", "7"]
    )
    by0 = {r["scheme"]: r for r in emitted0}
    by7 = {r["scheme"]: r for r in emitted7}
    problems = []
    for scheme, (exp, f0, f7) in EXPECTED_EXPANSION.items():
        r0, r7 = by0.get(scheme), by7.get(scheme)
        if r0 is None or r7 is None:
            problems.append(f"{scheme}: missing row")
            continue
        if r0["expansion"] != exp:
            problems.append(
                f"{scheme}: expansion {r0['expansion']} != {exp}"
            )
        if r0["fragments"] != f0:
            problems.append(
                f"{scheme}: fragments(ovh=0) {r0['fragments']} != {f0}"
            )
        if r7["fragments"] != f7:
            problems.append(
                f"{scheme}: fragments(ovh=7) {r7['fragments']} != {f7}"
            )
    if emitted0 != expansion_rows(1400, 0):
        problems.append("CLI emission differs from library rows")
    passed = rc0 == 0 and rc7 == 0 and not problems
    detail = (
        "expansion and fragment counts exact under both presets"
        if passed else "; ".join(problems)
    )
    return _result("table3-expansion", passed, detail, t0, budget_s=1.0)


def _random_bounded_vector(rng, p, fmt) -> SlotVector:
    grid = rng.integers(fmt.int_min, fmt.int_max + 1, p.slots)
    values = tuple(float(v) * fmt.resolution for v in grid)
    return SlotVector.of(values, declared_bound=default_bound(p.slots, fmt))


def check_transciphering_precision(trials: int = 10_000,
                                   seed: int = 20_260) -> CheckResult:
    """Criterion 3: per-slot decrypt error <= (T + 0.5)/delta, all sets."""
    t0 = time.perf_counter()
    fmt = Q8_8
    worst_rel = 0.0
    violations = 0
    for name in PARAMSET_NAMES:
        p = load_paramset(name)
        dp = DeltaPolicy.for_bound(p.q, default_bound(p.slots, fmt))
        bound = roundtrip_error_bound(p, dp)
        key = keygen(p, seed=f"{seed}:{name}".encode())
        rng = np.random.default_rng([seed, p.param_id])
        for trial in range(trials):
            m = _random_bounded_vector(rng, p, fmt)
            nc = Nonce.from_counter(trial, p.security_bits)
            ct = encrypt(m, key, nc, dp)
            out = decrypt(ct, key, dp)
            err = max(
                abs(a - b) for a, b in zip(out.values, m.values)
            )
            worst_rel = max(worst_rel, err / bound)
            if err > bound:
                violations += 1
    passed = violations == 0
    detail = (
        f"{trials} vectors x {len(PARAMSET_NAMES)} sets, "
        f"worst error at {worst_rel:.3f} of bound, {violations} violations"
    )
    return _result("transcipher-precision", passed, detail, t0,
                   budget_s=30.0)


def _direct_sum_pmf(width: float, cutoff: int) -> np.ndarray:
    # independent oracle: plain direct summation, no sampler code involved
    weights = [
        math.exp(-math.pi * a * a / (width * width))
        for a in range(-cutoff, cutoff + 1)
    ]
    total = sum(weights)
    return np.array([w / total for w in weights])


def _pooled_chisquare(counts: np.ndarray, expected: np.ndarray,
                      min_expected: float = 5.0) -> float:
    pooled_c, pooled_e = [], []
    acc_c = acc_e = 0.0
    for c, e in zip(counts, expected):
        acc_c += c
        acc_e += e
        if acc_e >= min_expected:
            pooled_c.append(acc_c)
            pooled_e.append(acc_e)
            acc_c = acc_e = 0.0
    if acc_e > 0 and pooled_c:
        pooled_c[-1] += acc_c
        pooled_e[-1] += acc_e
    return float(
        stats.chisquare(np.array(pooled_c), np.array(pooled_e)).pvalue
    )


def check_gaussian_sampler(draws: int = 1_000_000,
                           seed: int = 77) -> CheckResult:
    """Criterion 4: empirical pmf matches direct summation, p > 0.01."""
    t0 = time.perf_counter()
    details = []
    passed = True
    for width in (1.6, 4.1, 11.1):
        sampler = GaussianSampler(width)
        rng = np.random.default_rng([seed, int(width * 10)])
        samples = sampler.sample_array(draws, rng)
        cutoff = sampler.tail_cutoff
        if np.any(np.abs(samples) > cutoff):
            passed = False
            details.append(f"width {width}: mass outside cutoff")
            continue
        counts = np.bincount(samples + cutoff, minlength=2 * cutoff + 1)
        expected = _direct_sum_pmf(width, cutoff) * draws
        p_value = _pooled_chisquare(counts, expected)
        details.append(f"width {width}: p={p_value:.3f}")
        if not p_value > 0.01:
            passed = False
    return _result("gaussian-sampler", passed, ", ".join(details), t0,
                   budget_s=30.0)


def _raw_packed_vector(records, slots) -> np.ndarray:
    vals = []
    for rec in records:
        vals.extend(rec.slot_fields())
    vals.extend(0.0 for _ in range(slots - len(vals)))
    return np.array(vals)


def check_end_to_end_mean(rsu_count: int = 5, cycles: int = 10,
                          seed: int = 31) -> CheckResult:
    """Criterion 5: TMC-decrypted mean within quantization + noise bound."""
    t0 = time.perf_counter()
    p = load_paramset("Par-80L")
    fmt = Q8_8
    dp = DeltaPolicy.for_bound(p.q, default_bound(p.slots, fmt))
    profile = load_profile("CKKS-addmul")
    authority = new_authority("tmc", seed=seed)
    rsus = [Rsu(f"rsu-{i}", p, fmt) for i in range(rsu_count)]
    cloud = Cloud()
    tmc = Tmc(authority)
    for i, rsu in enumerate(rsus):
        cloud.register(
            rsu.init(profile, authority.public, seed=f"{seed}:rsu:{i}".encode())
        )

    bound = fmt.quantization_error_bound + roundtrip_error_bound(p, dp)
    worst = 0.0
    for cycle in range(cycles):
        raws = []
        for i, rsu in enumerate(rsus):
            records = synth_telemetry(seed, cycle, i, rsu.rsu_id,
                                      cycle * 1000, 10)
            raws.append(_raw_packed_vector(records, p.slots))
            for msg in rsu.upload_cycle(records, dp):
                cloud.ingest(msg, dp)
        plain = tmc.receive(cloud.compute_cycle())
        oracle = np.mean(np.array(raws), axis=0)
        worst = max(worst, float(np.max(np.abs(
            np.array(plain.values) - oracle
        ))))
    passed = worst <= bound
    detail = (
        f"{rsu_count} RSUs x {cycles} cycles, worst slot error "
        f"{worst:.5f} <= bound {bound:.5f}"
    )
    return _result("end-to-end-mean", passed, detail, t0, budget_s=10.0)


_PLAINTEXT_TYPE_NAMES = {"SlotVector", "SymKey", "TelemetryRecord"}


def _leaf_type_names(tp) -> set:
    args = typing.get_args(tp)
    if not args:
        name = getattr(tp, "__name__", None)
        return {name} if name else set()
    names = set()
    for a in args:
        names |= _leaf_type_names(a)
    return names


def check_privacy_and_conservation(seed: int = 5) -> CheckResult:
    """Criterion 6: cloud API opacity plus exact message/byte conservation."""
    t0 = time.perf_counter()
    problems = []

    for name, fn in inspect.getmembers(Cloud, inspect.isfunction):
        if name.startswith("_"):
            continue
        ret = typing.get_type_hints(fn).get("return")
        leaked = _leaf_type_names(ret) & _PLAINTEXT_TYPE_NAMES
        if leaked:
            problems.append(f"Cloud.{name} returns plaintext type {leaked}")

    p = load_paramset("Par-80M")
    profile = load_profile("CKKS-addmul")
    n_rsus, n_cycles = 3, 4
    report = run_scenario(
        Workload(rsu_count=n_rsus, duration_s=float(n_cycles)),
        LinkModel(bandwidth_bps=100e6, propagation_delay_s=0.005),
        LinkModel(bandwidth_bps=100e6, propagation_delay_s=0.005),
        p, profile, seed=seed,
    )
    for cyc in report.cycles:
        downs = [
            m for m in report.messages
            if m.cycle == cyc["cycle"] and m.direction == "down"
        ]
        if len(downs) != 1:
            problems.append(
                f"cycle {cyc['cycle']}: {len(downs)} downstream ciphertexts"
            )
    expect_offline = n_rsus * profile.ciphertext_bytes
    if report.totals["offline_bytes"] != expect_offline:
        problems.append(
            f"offline bytes {report.totals['offline_bytes']} != "
            f"{expect_offline}"
        )
    if report.totals["offline_msgs"] != n_rsus:
        problems.append("offline message count != #RSUs")
    uploads = report.totals["uplink_online_msgs"]
    expect_bits = nonce_overhead_bits(uploads, p.security_bits)
    if report.totals["nonce_overhead_bits"] != expect_bits:
        problems.append(
            f"nonce overhead {report.totals['nonce_overhead_bits']} != "
            f"r*lambda = {expect_bits}"
        )
    passed = not problems
    detail = (
        f"cloud API opaque; {n_cycles} cycles each returned one result; "
        f"offline={expect_offline}B; nonce overhead={expect_bits} bits"
        if passed else "; ".join(problems)
    )
    return _result("privacy-conservation", passed, detail, t0, budget_s=10.0)


def check_fragmentation(seed: int = 9) -> CheckResult:
    """Criterion 7: HHE uploads are single-fragment; BFV uploads are not."""
    t0 = time.perf_counter()
    problems = []
    up = LinkModel(bandwidth_bps=100e6, mtu_bytes=1400)
    down = LinkModel(bandwidth_bps=100e6, mtu_bytes=1400)
    profile = load_profile("CKKS-addmul")
    for name in PARAMSET_NAMES:
        p = load_paramset(name)
        report = run_scenario(
            Workload(rsu_count=1, duration_s=2.0), up, down, p, profile,
            seed=seed,
        )
        frags = [
            m.fragments for m in report.messages
            if not m.offline and m.direction == "up"
        ]
        if not frags or any(f != 1 for f in frags):
            problems.append(f"{name}: uplink fragments {set(frags)}")
    bfv = load_profile("BFV")
    report = run_scenario(
        Workload(rsu_count=1, duration_s=1.0, mode="PureHE"),
        up, down, load_paramset("Par-80S"), bfv, seed=seed,
    )
    frags = [
        m.fragments for m in report.messages
        if not m.offline and m.direction == "up"
    ]
    if not frags or any(f < 95 for f in frags):
        problems.append(f"PureHE BFV fragments {set(frags)} (< 95)")
    passed = not problems
    detail = (
        "all six sets single-fragment; BFV uploads fragment into >= 95"
        if passed else "; ".join(problems)
    )
    return _result("fragmentation", passed, detail, t0, budget_s=10.0)


def check_determinism(seed: int = 12345) -> CheckResult:
    """Criterion 8: same seed and config give byte-identical reports."""
    from . import cli  # deferred: cli imports this module

    t0 = time.perf_counter()
    cfg = {
        "name": "determinism-check",
        "paramset": "Par-80L",
        "profile": "CKKS-addmul",
        "mode": "HHE",
        "rsu_count": 5,
        "duration_s": 10,
        "seed": seed,
    }
    with tempfile.TemporaryDirectory() as tmp:
        cfg_path = os.path.join(tmp, "scenario.json")
        with open(cfg_path, "w") as fh:
            json.dump(cfg, fh)
        outputs = []
        rcs = []
        for run in ("a", "b"):
            outdir = os.path.join(tmp, run)
            with contextlib.redirect_stdout(io.StringIO()), \
                    contextlib.redirect_stderr(io.StringIO()):
                rcs.append(cli.main(
                    ["simulate", "--config", cfg_path, "--out", outdir]
                ))
            outputs.append(
                tuple(
                    open(os.path.join(outdir, f"report.{ext}"), "rb").read()
                    for ext in ("csv", "json")
                )
            )
        passed = rcs == [0, 0] and outputs[0] == outputs[1]
    detail = (
        "two simulate runs produced byte-identical csv and json"
        if passed else "reports differ between identically seeded runs"
    )
    return _result("determinism", passed, detail, t0, budget_s=30.0)


ALL_CHECKS = (
    check_size_table,
    check_expansion_table,
    check_transciphering_precision,
    check_gaussian_sampler,
    check_end_to_end_mean,
    check_privacy_and_conservation,
    check_fragmentation,
    check_determinism,
)


def run_all() -> list[CheckResult]:
    return [check() for check in ALL_CHECKS]
