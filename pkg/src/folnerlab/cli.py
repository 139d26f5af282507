"""Command-line entry point.

Exit codes: 0 pass, 1 verdict failed, 2 usage or config error,
3 experiment ran but a precondition of the statement under test is unverified.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, experiments
from .dynamics import CharacterId, geometric_ladder, ladder_averages
from .folner import interval_family, strong_defect, tempered_ratios, weak_defect
from .groups import GroupModel, UsageError, parse_model, region_from_spec
from .specs import parse_observable, parse_range, parse_sequence, parse_system
from .weights import DEFAULT_DELTAS, OutOfWindowError, check_perp


def _emit_table(rows: list[dict], fmt: str, out=None):
    out = out or sys.stdout
    if fmt == "json":
        out.write(experiments.dumps(rows) + "\n")
        return
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})
    out.write(buf.getvalue())


# experiments

def cmd_experiment(args) -> int:
    source = args.config if args.config else {"experiment": args.experiment}
    if args.config:
        with open(args.config) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise experiments.ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise experiments.ConfigError("config must be a JSON object")
        exp = raw.setdefault("experiment", args.experiment)
        if exp != args.experiment:
            raise experiments.ConfigError(f"config is for {exp!r}, not {args.experiment!r}")
        source = raw
    cfg = experiments.load_config(source, args.seed)
    result = experiments.run(cfg)
    _deliver(result, args.out)
    return result.exit_code


def _deliver(result, out):
    # ``out`` ending in .json names the report file; any other value is a directory
    if not out or out == "-":
        sys.stdout.write(result.to_json() + "\n")
    elif out.endswith(".json"):
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(result.to_json() + "\n")
    else:
        for p in result.write(out):
            print(p, file=sys.stderr)
    print(f"status: {result.status}", file=sys.stderr)


# folner defect

def cmd_folner_defect(args) -> int:
    model = parse_model(args.model)
    lo, hi = parse_range(args.N)
    if lo < 1:
        raise UsageError("indices start at 1")
    seq = parse_sequence(model, args.seq, hi)
    if hi > len(seq):
        raise UsageError(f"sequence {args.seq!r} has only {len(seq)} sets")
    K = region_from_spec(model, args.K)
    ratios = tempered_ratios(seq, hi)
    rows = []
    for n in range(lo, hi + 1):
        F = seq[n]
        rows.append({
            "N": n,
            "weak_defect": float(weak_defect(K, F)),
            "strong_defect": float(strong_defect(K, F)),
            "tempered_ratio": float(ratios[n - 1]),
        })
    if args.out == "json":
        doc = {"model": model.name, "seq": args.seq, "K": args.K,
               "C_estimate": float(max(ratios)) if ratios else 0.0, "defects": rows}
        sys.stdout.write(experiments.dumps(doc) + "\n")
    else:
        _emit_table(rows, "csv")
    return 0


# weights perp

def perp_sequence_size(horizon: int) -> int:
    """Largest power of two not above ``horizon / 4`` (probe and shifts fit in the horizon)."""
    n = 1
    while 2 * n <= horizon // 4:
        n *= 2
    return n


def cmd_weights_perp(args) -> int:
    n_max = perp_sequence_size(args.horizon)
    if n_max < 2:
        raise UsageError("horizon too small")
    src = experiments.weight_source(args.weight, experiments.rng.stream(args.seed, 0))
    c = src.values(2 * n_max)
    deltas = [float(d) for d in args.delta.split(",")] if args.delta else list(DEFAULT_DELTAS)
    seq = interval_family(GroupModel("Z"), n_max)
    verdict = check_perp(c, seq, deltas)
    doc = {"weight": src.describe(), "horizon": args.horizon, "sequence_n_max": n_max, **verdict.to_json()}
    if args.out.endswith("csv"):
        _emit_table([{"delta": r.delta, "N_delta": r.n_delta if r.n_delta is not None else "", "pass": r.n_delta is not None,
                      "worst_density": r.worst_density, "exceed_density": r.exceed_density} for r in verdict.results],
                    "csv", _open_out(args.out, ".csv"))
    else:
        _open_out(args.out, ".json").write(experiments.dumps(doc) + "\n")
    print(f"status: {'pass' if verdict.passed else 'fail'}", file=sys.stderr)
    return 0 if verdict.passed else 1


def _open_out(out: str, suffix: str):
    if out in ("json", "csv", "-"):
        return sys.stdout
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    return _ClosingFile(path)


class _ClosingFile:
    def __init__(self, path: Path):
        self.path = path

    def write(self, text: str):
        self.path.write_text(text)


# covering verify

def cmd_covering_verify(args) -> int:
    raw = {"experiment": "covering-verify", "model": args.model, "seq": args.seq, "C": args.C,
           "targets": args.targets, "trials": args.trials}
    if args.scales:
        raw["scales"] = list(parse_range(args.scales))
    if args.delta is not None:
        raw["delta"] = args.delta
    cfg = experiments.load_config(raw, args.seed)
    result = experiments.run(cfg)
    _deliver(result, args.out)
    return result.exit_code


# dyn average

def cmd_dyn_average(args) -> int:
    system = parse_system(args.system)
    obs = parse_observable(args.obs)
    gen = experiments.rng.stream(args.seed, 0)
    src = experiments.weight_source(args.weight, gen)
    y = system.sample_point(gen) if args.y is None else _point_arg(system, args.y)
    ladder = geometric_ladder(min(args.N_min, args.N), args.N)
    N = ladder[-1]
    c = src.values(N)
    g = np.arange(N, dtype=np.int64).reshape(-1, 1)
    cv = c.evaluate(g)
    if args.character is not None:
        ph = 2 * np.pi * CharacterId((args.character % 1.0,)).phases(g)
        re = ladder_averages(cv * np.cos(ph), ladder)
        im = ladder_averages(cv * np.sin(ph), ladder)
        rows = [{"N": n, "re": a, "im": b, "modulus": float(np.hypot(a, b))} for n, a, b in zip(ladder, re, im)]
    else:
        avgs = ladder_averages(cv * obs(system.orbit(y, g)), ladder)
        rows = [{"N": n, "average": a} for n, a in zip(ladder, avgs)]
    _emit_table(rows, args.out)
    return 0


def _point_arg(system, text: str):
    vals = [float(t) for t in text.split(",")]
    if system.kind == "bernoulli":
        return int(vals[0])
    if system.kind == "skew":
        return (vals[0], vals[1] if len(vals) > 1 else 0.0)
    return np.array(vals)


# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="folnerlab", description="Følner sequences, weights, coverings and weighted averages.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    for name in experiments.EXPERIMENTS:
        e = sub.add_parser(name, help=f"run the {name} experiment")
        e.add_argument("--config", help="JSON config file")
        e.add_argument("--seed", type=int, help="master seed (overrides the config)")
        e.add_argument("--out", help="directory for report.json and CSV tables (default: report to stdout)")
        e.set_defaults(func=cmd_experiment, experiment=name)

    f = sub.add_parser("folner", help="Følner-set diagnostics").add_subparsers(dest="action", required=True)
    d = f.add_parser("defect", help="weak/strong defects and tempered ratios along a sequence")
    d.add_argument("--model", default="Z")
    d.add_argument("--seq", default="interval")
    d.add_argument("--K", default="0,1", help="finite set, e.g. '0,1' or '-1..0' or '(0,0,0);(1,0,0)'")
    d.add_argument("--N", default="1..100", help="index range a..b")
    d.add_argument("--out", choices=["csv", "json"], default="csv")
    d.set_defaults(func=cmd_folner_defect)

    w = sub.add_parser("weights", help="weight diagnostics").add_subparsers(dest="action", required=True)
    pp = w.add_parser("perp", help="finite-horizon check of the orthogonality condition")
    pp.add_argument("--weight", required=True)
    pp.add_argument("--horizon", type=int, default=100_000)
    pp.add_argument("--delta", help="comma-separated deltas (default 0.2,0.1,0.05)")
    pp.add_argument("--seed", type=int, default=0, help="seed for sampled weight points")
    pp.add_argument("--out", default="json", help="'json', 'csv', or a .json/.csv file path")
    pp.set_defaults(func=cmd_weights_perp)

    c = sub.add_parser("covering", help="random coverings").add_subparsers(dest="action", required=True)
    v = c.add_parser("verify", help="Monte Carlo check of the covering moment bounds")
    v.add_argument("--model", default="Z")
    v.add_argument("--seq", default="pow2:1..6")
    v.add_argument("--scales", help="index range L..R (default: all)")
    v.add_argument("--C", type=float, default=2.0)
    v.add_argument("--delta", type=float)
    v.add_argument("--targets", default="random:density=0.3,window=1000,seed=11")
    v.add_argument("--trials", type=int, default=10_000)
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--out", help="report .json path or output directory (default: stdout)")
    v.set_defaults(func=cmd_covering_verify)

    y = sub.add_parser("dyn", help="weighted ergodic averages").add_subparsers(dest="action", required=True)
    a = y.add_parser("average", help="weighted averages along a geometric N ladder")
    a.add_argument("--weight", required=True)
    a.add_argument("--system", default="rotation:theta=0.41421356237309515")
    a.add_argument("--obs", default="cos")
    a.add_argument("--y", help="point of the target system (comma-separated)")
    a.add_argument("--character", type=float, help="average against exp(2πiθn) instead of an observable")
    a.add_argument("--N", type=int, default=1_000_000)
    a.add_argument("--N-min", dest="N_min", type=int, default=1000)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", choices=["csv", "json"], default="csv")
    a.set_defaults(func=cmd_dyn_average)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except (UsageError, OutOfWindowError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"runtime: {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return code


def _alias(command: str):
    def entry(argv=None) -> int:
        return main([command] + list(sys.argv[1:] if argv is None else argv))
    return entry


folner_main = _alias("folner")
weights_main = _alias("weights")
covering_main = _alias("covering")
dyn_main = _alias("dyn")


if __name__ == "__main__":
    sys.exit(main())
