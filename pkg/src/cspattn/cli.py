"""``cspattn`` command-line entry point.

Each subcommand runs one experiment suite and writes a CSV (or JSON) report
with a provenance header. Parameters come from built-in defaults, then an
optional flat ``key = value`` config file, then command-line flags; later
sources win. Exit codes: 0 success, 1 invariant failure, 2 usage error.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import TAU_GRID, sinkhorn_csp_distances
from .bench import SLOPE_BANDS, BenchConfig, run_bench
from .csp import CspConfig, csp_forward
from .errors import ConfigError, CspError
from .fixtures import separated_matrix, tie_free_matrix
from .numerics import singular_spectrum
from .ot import run_equivalence_suite
from .permutation import ShiftSchedule, to_dense
from .rank_collapse import CSV_COLUMNS, make_csp_stack, make_mha_stack, spectrum_decay_report
from .report import Provenance, atomic_write, render_csv, render_json

__all__ = ["main", "COMMANDS", "UsageError", "load_config", "resolve_params"]


class UsageError(Exception):
    pass


def _ints(text):
    return tuple(int(t) for t in str(text).split(",") if t.strip())


def _strs(text):
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _schedule(name):
    if name == "linear":
        return ShiftSchedule.linear()
    if name == "power":
        return ShiftSchedule.power()
    raise ConfigError(f"unknown schedule {name!r}; expected linear or power", key="schedule")


# suites: each takes (params, seed) and returns (rows, failures)


def suite_demo(p, seed):
    rng = np.random.default_rng(seed)
    x = tie_free_matrix(rng, p["n"], p["c"])
    cfg = CspConfig(p["c"], p["groups"], _schedule(p["schedule"]))
    out, trace = csp_forward(x, cfg)
    steps = cfg.channel_steps(p["n"])
    rows, failures = [], []
    for c in range(p["c"]):
        dense = to_dense(trace.total[c])
        if not np.array_equal(dense @ x[:, c], out[:, c]):
            failures.append({"invariant": "dense_map_matches_output", "detail": f"channel {c}"})
        if not (np.all(dense.sum(axis=0) == 1) and np.all(dense.sum(axis=1) == 1)):
            failures.append({"invariant": "doubly_stochastic", "detail": f"channel {c}"})
        rows.append((
            c,
            int(steps[c]),
            " ".join(map(str, trace.total[c].map)),
            " ".join(repr(float(v)) for v in x[:, c]),
            " ".join(repr(float(v)) for v in out[:, c]),
            seed,
        ))
    return rows, failures


def _stacks(p, seed):
    x = np.random.default_rng(seed).standard_normal((p["n"], p["c"]))
    csp = make_csp_stack(
        p["c"], p["depth"], seed=seed, weights=p["weights"], pointwise=p["pointwise"],
        groups=p["groups"], schedule=_schedule(p["schedule"]),
    )
    mha = make_mha_stack(p["c"], p["depth"], heads=p["heads"], seed=seed, pointwise=p["pointwise"])
    return spectrum_decay_report(x, csp, mha, seed)


def _bound_failures(rep, seed):
    if rep.csp.bound_holds():
        return []
    bad = [int(i) for i in np.nonzero(rep.csp.residuals > rep.csp.bounds * (1 + 1e-9))[0]]
    return [{"invariant": "csp_residual_bound", "detail": f"layers {bad}", "seed": seed}]


def suite_rank_decay(p, seed):
    rep = _stacks(p, seed)
    return rep.rows(), _bound_failures(rep, seed)


def suite_spectra(p, seed):
    rep = _stacks(p, seed)
    rows = []
    for method, curve in (("csp", rep.csp), ("mha", rep.mha)):
        for layer, s in enumerate(curve.spectra):
            rows.extend((layer, i, float(v), method, seed) for i, v in enumerate(s))
    failures = _bound_failures(rep, seed)
    if p["check_maps"]:
        _, trace = csp_forward(
            np.random.default_rng(seed).standard_normal((p["n"], p["c"])),
            CspConfig(p["c"], p["groups"], _schedule(p["schedule"])),
        )
        for c, perm in enumerate(trace.total):
            s = singular_spectrum(to_dense(perm))
            if np.abs(s - 1.0).max() > 1e-9:
                failures.append({"invariant": "map_spectrum_all_ones", "detail": f"channel {c}", "seed": seed})
    return rows, failures


def suite_ot_check(p, seed):
    records = run_equivalence_suite(p["trials"], p["gmin"], p["gmax"], seed)
    rows = []
    for g in range(p["gmin"], p["gmax"] + 1):
        part = [r for r in records if r.size == g]
        rows.append((g, len(part), sum(r.unique for r in part), sum(r.agree for r in part), seed))
    agree = sum(r.agree for r in records)
    rows.append(("all", len(records), sum(r.unique for r in records), agree, seed))
    failures = []
    if agree != len(records):
        failures.append({"invariant": "ot_sort_equivalence", "detail": f"{agree}/{len(records)} agree", "seed": seed})
    return rows, failures


def suite_sinkhorn(p, seed):
    v = separated_matrix(np.random.default_rng(seed), p["n"], p["c"])
    rows, failures = [], []
    for k in p["groups"]:
        dists = sinkhorn_csp_distances(v, CspConfig(p["c"], k, _schedule(p["schedule"])))
        for tau, d in zip(TAU_GRID, dists):
            rows.append((k, tau, int(np.ceil(50.0 / tau)), d, seed))
        if any(b > a for a, b in zip(dists, dists[1:])):
            failures.append({"invariant": "distance_nonincreasing", "detail": f"K={k}: {dists}", "seed": seed})
        if not dists[-1] < p["threshold"]:
            failures.append({
                "invariant": "final_distance_below_threshold",
                "detail": f"K={k}: {dists[-1]} >= {p['threshold']}",
                "seed": seed,
            })
    return rows, failures


def suite_bench(p, seed):
    cfg = BenchConfig(
        ns=p["ns"], channels=p["c"], groups=p["groups"], methods=p["methods"],
        warmup=p["warmup"], repeats=p["samples"], chunk=p["chunk"],
    )
    results, slopes = run_bench(cfg, seed)
    rows = [(r.method, r.n, r.median_seconds, slopes[r.method], seed) for r in results]
    failures = []
    if p["check"] and len(cfg.ns) >= 2:
        for method, s in slopes.items():
            lo, hi = SLOPE_BANDS[method]
            if not lo <= s <= hi:
                failures.append({"invariant": "slope_band", "detail": f"{method} slope {s:.3f} not in [{lo}, {hi}]",
                                 "seed": seed})
    return rows, failures


def suite_train(p, seed):
    from .train import ModelSpec, SyntheticTask, TrainConfig, matched_mha_dim, save_checkpoint, train
    from .train.trainer import DivergenceError

    task = SyntheticTask(p["task"], p["n"], p["vocab"])
    common = dict(
        layers=p["layers"], vocab=p["vocab"], seq_len=p["n"], classes=task.classes,
        pooling=p["pooling"], skip_connections=p["skip"],
    )
    csp = ModelSpec("csp", model_dim=p["c"], groups=p["groups"], schedule=_schedule(p["schedule"]), **common)
    mha_dim = matched_mha_dim(csp, p["heads"]) if p["match_params"] else p["c"]
    mha = ModelSpec("mha", model_dim=mha_dim, heads=p["heads"], **common)
    specs = {"csp": [csp], "mha": [mha], "both": [csp, mha]}[p["model"]]
    cfg = TrainConfig(
        steps=p["steps"], lr=p["lr"], batch=p["batch"], eval_every=p["eval_every"],
        eval_size=p["eval_size"], cosine=p["cosine"], dtype=p["dtype"],
    )
    rows, failures = [], []
    for spec in specs:
        try:
            result = train(spec, task, cfg, seed)
        except DivergenceError as exc:
            failures.append({"invariant": "finite_loss", "detail": str(exc), "step": exc.step,
                             "model_kind": spec.kind, "seed": seed})
            continue
        rows.extend(result.history)
        if result.final_accuracy < p["min_accuracy"]:
            failures.append({"invariant": "min_accuracy", "model_kind": spec.kind, "seed": seed,
                             "detail": f"{result.final_accuracy} < {p['min_accuracy']}"})
        if p["checkpoint"]:
            save_checkpoint(Path(p["checkpoint"]) / f"{spec.kind}-seed{seed}.ckpt", result.params)
    return rows, failures


# name -> (suite, columns, {param: (parser, default)})
COMMANDS = {
    "demo": (
        suite_demo,
        ("channel", "step", "total_map", "input", "output", "seed"),
        {"n": (int, 8), "c": (int, 4), "groups": (int, 2), "schedule": (str, "linear")},
    ),
    "rank-decay": (
        suite_rank_decay,
        CSV_COLUMNS,
        {
            "n": (int, 64), "c": (int, 32), "depth": (int, 6), "groups": (int, 32),
            "weights": (str, "orthogonal"), "pointwise": (str, "identity"), "heads": (int, 4),
            "schedule": (str, "linear"),
        },
    ),
    "spectra": (
        suite_spectra,
        ("layer", "index", "sigma", "method", "seed"),
        {
            "n": (int, 64), "c": (int, 32), "depth": (int, 6), "groups": (int, 32),
            "weights": (str, "orthogonal"), "pointwise": (str, "identity"), "heads": (int, 4),
            "schedule": (str, "linear"), "check_maps": (_bool, False),
        },
    ),
    "ot-check": (
        suite_ot_check,
        ("group_size", "trials", "unique", "agreements", "seed"),
        {"trials": (int, 1000), "gmin": (int, 2), "gmax": (int, 6)},
    ),
    "sinkhorn-converge": (
        suite_sinkhorn,
        ("groups", "tau", "iterations", "distance", "seed"),
        {"n": (int, 16), "c": (int, 4), "groups": (_ints, (1, 2, 4)), "threshold": (float, 1e-2),
         "schedule": (str, "linear")},
    ),
    "bench": (
        suite_bench,
        ("method", "n", "median_seconds", "slope", "seed"),
        {
            "ns": (_ints, (256, 512, 1024, 2048, 4096, 8192)), "c": (int, 64), "groups": (int, 1),
            "methods": (_strs, ("csp", "softmax")), "warmup": (int, 3), "samples": (int, 7),
            "chunk": (int, 512), "check": (_bool, True),
        },
    ),
    "train": (
        suite_train,
        ("step", "loss", "accuracy", "model_kind", "task", "seed"),
        {
            "task": (str, "majority"), "n": (int, 32), "vocab": (int, 2), "model": (str, "csp"),
            "c": (int, 32), "groups": (int, 8), "heads": (int, 4), "layers": (int, 2),
            "steps": (int, 500), "lr": (float, 0.1), "batch": (int, 32), "eval_every": (int, 50),
            "eval_size": (int, 256), "pooling": (str, "mean"), "schedule": (str, "linear"),
            "skip": (_bool, True), "cosine": (_bool, False), "dtype": (str, "float64"),
            "match_params": (_bool, True), "min_accuracy": (float, 0.0), "checkpoint": (str, ""),
        },
    ),
}

# keys accepted in config files besides the command's own parameters
GLOBAL_KEYS = {"seed": (int, 0), "repeats": (int, 1), "format": (str, "csv")}


def load_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment line."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key = key.strip().replace("-", "_")
        if key in entries:
            raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
        entries[key] = value.strip()
    if not entries:
        raise UsageError(f"config file {path} is empty")
    return entries


def resolve_params(command, config_entries, overrides):
    """Merge defaults, config-file entries and overrides (strings or values)."""
    _, _, spec = COMMANDS[command]
    allowed = {**spec, **GLOBAL_KEYS}
    merged = {k: d for k, (_, d) in allowed.items()}
    for source in (config_entries, overrides):
        for key, value in source.items():
            if key not in allowed:
                raise UsageError(f"unknown key {key!r} for {command}")
            parser = allowed[key][0]
            try:
                merged[key] = parser(value) if isinstance(value, str) else value
            except ValueError as exc:
                raise UsageError(f"bad value for {key!r}: {exc}") from None
    if merged["format"] not in ("csv", "json"):
        raise UsageError(f"bad value for 'format': {merged['format']!r}")
    if merged["repeats"] < 1:
        raise UsageError("bad value for 'repeats': must be >= 1")
    return merged


def _parser():
    ap = argparse.ArgumentParser(prog="cspattn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"cspattn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, _, spec) in COMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value file; flags override it")
        sp.add_argument("--seed", default=None, help="base seed (default 0)")
        sp.add_argument("--repeats", default=None, help="run seeds seed..seed+repeats-1")
        sp.add_argument("--format", default=None, choices=("csv", "json"))
        sp.add_argument("--out", help="report path (default: stdout)")
        sp.add_argument("--parallel", type=int, default=1, metavar="WORKERS",
                        help="run repeats on this many threads; output order is unchanged")
        sp.add_argument("--plot", action="store_true", help="also write a PNG figure beside --out")
        for key in spec:
            sp.add_argument("--" + key.replace("_", "-"), dest="p_" + key, default=None)
    return ap


def _emit_failures(record, out):
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    if out:
        atomic_write(out + ".failures.json", text + "\n")


def run(command, params, out=None, parallel=1, plot=False):
    """Execute a resolved config; returns the exit code."""
    suite, columns, spec = COMMANDS[command]
    seed = params["seed"]
    seeds = [seed + i for i in range(params["repeats"])]
    suite_params = {k: params[k] for k in spec}
    if command == "bench":
        parallel = 1  # concurrent timing would distort the measurements
    try:
        if parallel > 1 and len(seeds) > 1:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                results = list(pool.map(lambda s: suite(suite_params, s), seeds))
        else:
            results = [suite(suite_params, s) for s in seeds]
    except ConfigError as exc:
        raise UsageError(f"invalid value for {exc.key or 'config'}: {exc}") from None
    rows = [row for r, _ in results for row in r]
    failures = [f for _, fs in results for f in fs]
    hashed = {k: v for k, v in params.items() if k != "format"}
    prov = Provenance.now(command, seed, hashed)
    render = render_json if params["format"] == "json" else render_csv
    text = render(prov, columns, rows)
    if out:
        atomic_write(out, text)
        if plot:
            from .plots import render as draw

            png = os.path.splitext(out)[0] + ".png"
            draw(command, columns, [[str(v) for v in row] for row in rows], png + ".tmp.png")
            os.replace(png + ".tmp.png", png)
    else:
        sys.stdout.write(text)
    if failures:
        _emit_failures(
            {"status": "fail", "command": command, "config_hash": prov.config_hash, "failures": failures},
            out,
        )
        return 1
    return 0


def main(argv=None):
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.plot and not args.out:
            raise UsageError("--plot needs --out")
        if args.parallel < 1:
            raise UsageError("--parallel must be >= 1")
        entries = load_config(args.config) if args.config is not None else {}
        overrides = {k[2:]: v for k, v in vars(args).items() if k.startswith("p_") and v is not None}
        for key in GLOBAL_KEYS:
            if getattr(args, key) is not None:
                overrides[key] = getattr(args, key)
        params = resolve_params(args.command, entries, overrides)
        return run(args.command, params, args.out, args.parallel, args.plot)
    except UsageError as exc:
        print(f"cspattn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except CspError as exc:
        _emit_failures({"status": "error", "command": args.command, "error": type(exc).__name__,
                        "detail": str(exc)}, args.out)
        return 1


if __name__ == "__main__":
    sys.exit(main())
