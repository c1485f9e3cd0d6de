"""Command-line front end.

Verbs:
  sizes      print the per-parameter-set size table
  expansion  print the expansion/fragmentation comparison table
  roundtrip  measure encrypt/decrypt precision against the analytic bound
  simulate   run a scenario config and write CSV/JSON reports plus figures
  selftest   run the embedded acceptance suite

Exit codes: 0 success, 1 assertion or bound failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from importlib import resources

import numpy as np

from . import acceptance, tables
from .codec import Q8_8, SlotVector, default_bound
from .netsim import load_scenario_config, run_from_config
from .params import (
    ConfigError,
    DeltaPolicy,
    FRAGMENT_OVERHEAD_PRESETS,
    PARAMSET_NAMES,
    UnknownParamSetError,
    UnknownProfileError,
    load_paramset,
)
from .symcipher import Nonce, decrypt, encrypt, keygen, roundtrip_error_bound

CONFIG_PATH_ENV = "HHESIM_CONFIG_PATH"


def _overhead_value(text: str) -> int:
    if text in FRAGMENT_OVERHEAD_PRESETS:
        return FRAGMENT_OVERHEAD_PRESETS[text]
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"overhead must be an integer or one of "
            f"{sorted(FRAGMENT_OVERHEAD_PRESETS)}"
        ) from None


def _resolve_config(name: str) -> str:
    """Find a config by path, then via $HHESIM_CONFIG_PATH, then bundled."""
    if os.path.exists(name):
        return name
    for directory in os.environ.get(CONFIG_PATH_ENV, "").split(os.pathsep):
        if not directory:
            continue
        candidate = os.path.join(directory, name)
        if os.path.exists(candidate):
            return candidate
    bundled = resources.files("hhesim") / "configs" / name
    if bundled.is_file():
        return str(bundled)
    raise ConfigError(f"config {name!r} not found (searched cwd, "
                      f"${CONFIG_PATH_ENV}, bundled configs)")


def _format_table(columns: list[str], rows: list[dict]) -> str:
    widths = {
        c: max(len(c), *(len(str(r[c])) for r in rows)) if rows else len(c)
        for c in columns
    }
    header = "  ".join(c.ljust(widths[c]) for c in columns)
    rule = "  ".join("-" * widths[c] for c in columns)
    lines = [header, rule]
    for r in rows:
        lines.append("  ".join(str(r[c]).ljust(widths[c]) for c in columns))
    return "\n".join(lines)


def _emit_rows(rows: list[dict], columns: list[str], fmt: str,
               stream=None) -> None:
    stream = stream or sys.stdout
    if fmt == "table":
        print(_format_table(columns, rows), file=stream)
    elif fmt == "csv":
        writer = csv.writer(stream)
        writer.writerow(columns)
        for r in rows:
            writer.writerow([r[c] for c in columns])
    else:
        json.dump(rows, stream, indent=2, sort_keys=True)
        stream.write("\n")


def _write_rows(rows: list[dict], columns: list[str], outdir: str,
                basename: str) -> list[str]:
    os.makedirs(outdir, exist_ok=True)
    paths = []
    csv_path = os.path.join(outdir, f"{basename}.csv")
    with open(csv_path, "w", newline="") as fh:
        _emit_rows(rows, columns, "csv", fh)
    paths.append(csv_path)
    json_path = os.path.join(outdir, f"{basename}.json")
    with open(json_path, "w") as fh:
        _emit_rows(rows, columns, "json", fh)
    paths.append(json_path)
    return paths


SIZE_COLUMNS = ["paramset", "slots", "payload_bytes", "ciphertext_bytes"]
EXPANSION_COLUMNS = [
    "scheme", "plaintext_bytes", "ciphertext_bytes", "expansion", "fragments",
]


def cmd_sizes(args) -> int:
    rows = tables.size_rows()
    _emit_rows(rows, SIZE_COLUMNS, args.format)
    if args.out:
        from . import plots  # deferred: pulls in matplotlib

        paths = _write_rows(rows, SIZE_COLUMNS, args.out, "sizes")
        paths.append(
            plots.save_sizes_chart(rows, os.path.join(args.out, "sizes.png"))
        )
        print("\n".join(f"wrote {p}" for p in paths), file=sys.stderr)
    return 0


def cmd_expansion(args) -> int:
    rows = tables.expansion_rows(args.mtu, args.overhead)
    _emit_rows(rows, EXPANSION_COLUMNS, args.format)
    if args.out:
        from . import plots  # deferred: pulls in matplotlib

        paths = _write_rows(rows, EXPANSION_COLUMNS, args.out, "expansion")
        paths.append(
            plots.save_expansion_chart(
                rows, os.path.join(args.out, "expansion.png")
            )
        )
        print("\n".join(f"wrote {p}" for p in paths), file=sys.stderr)
    return 0


def cmd_roundtrip(args) -> int:
    p = load_paramset(args.params)
    fmt = Q8_8
    dp = DeltaPolicy.for_bound(p.q, default_bound(p.slots, fmt))
    bound = roundtrip_error_bound(p, dp)
    key = keygen(p, seed=f"roundtrip:{args.seed}".encode())
    rng = np.random.default_rng(args.seed)
    max_err = 0.0
    err_sum = 0.0
    slots_seen = 0
    for trial in range(args.trials):
        grid = rng.integers(fmt.int_min, fmt.int_max + 1, p.slots)
        values = tuple(float(v) * fmt.resolution for v in grid)
        m = SlotVector.of(values, declared_bound=dp.bound)
        ct = encrypt(m, key, Nonce.from_counter(trial, p.security_bits), dp)
        out = decrypt(ct, key, dp)
        errs = [abs(a - b) for a, b in zip(out.values, m.values)]
        max_err = max(max_err, max(errs))
        err_sum += sum(errs)
        slots_seen += len(errs)
    report = {
        "paramset": p.name,
        "trials": args.trials,
        "seed": args.seed,
        "delta": dp.delta,
        "analytic_bound": bound,
        "max_error": max_err,
        "mean_error": err_sum / slots_seen,
        "within_bound": max_err <= bound,
    }
    _emit_rows([report], list(report.keys()), args.format)
    return 0 if report["within_bound"] else 1


def cmd_simulate(args) -> int:
    cfg = load_scenario_config(_resolve_config(args.config))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    report = run_from_config(cfg)
    if args.out:
        from . import plots  # deferred: pulls in matplotlib

        paths = report.write(args.out)
        paths += plots.save_scenario_charts(report, args.out)
        print("\n".join(f"wrote {p}" for p in paths), file=sys.stderr)
    totals_row = {"scenario": report.header.get("scenario", ""),
                  **report.totals}
    _emit_rows([totals_row], list(totals_row.keys()), args.format)
    return 0


def cmd_selftest(args) -> int:
    results = acceptance.run_all()
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.criterion:<24} ({r.elapsed_s:6.2f}s)  {r.detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} criteria passed")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hhesim",
        description="Hybrid homomorphic encryption feasibility toolkit",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_sizes = sub.add_parser(
        "sizes", help="per-parameter-set payload and ciphertext sizes"
    )
    p_sizes.set_defaults(fn=cmd_sizes)

    p_exp = sub.add_parser(
        "expansion", help="expansion factors and MTU fragmentation"
    )
    p_exp.add_argument("--mtu", type=int, default=1400,
                       help="MTU in bytes (default 1400)")
    p_exp.add_argument(
        "--overhead", type=_overhead_value, default=0,
        help="per-fragment overhead bytes, or a preset name "
             f"({', '.join(sorted(FRAGMENT_OVERHEAD_PRESETS))})",
    )
    p_exp.set_defaults(fn=cmd_expansion)

    p_rt = sub.add_parser(
        "roundtrip", help="encrypt/decrypt precision vs the analytic bound"
    )
    p_rt.add_argument("--params", required=True, choices=PARAMSET_NAMES)
    p_rt.add_argument("--trials", type=int, default=10_000)
    p_rt.add_argument("--seed", type=int, default=0)
    p_rt.set_defaults(fn=cmd_roundtrip)

    p_sim = sub.add_parser("simulate", help="run a scenario config")
    p_sim.add_argument("--config", required=True,
                       help="scenario config path or bundled name")
    p_sim.add_argument("--seed", type=int, default=None,
                       help="override the config's seed")
    p_sim.set_defaults(fn=cmd_simulate)

    p_self = sub.add_parser(
        "selftest", help="run the embedded acceptance suite"
    )
    p_self.set_defaults(fn=cmd_selftest)

    for sp in (p_sizes, p_exp, p_rt, p_sim):
        sp.add_argument("--format", choices=("table", "csv", "json"),
                        default="table")
        sp.add_argument("--out", default=None,
                        help="directory for CSV/JSON/figure outputs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, UnknownParamSetError, UnknownProfileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
