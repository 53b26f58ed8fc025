"""Reproducible experiment runner.

One JSON spec drives everything: it names a network (inline, file, or
recipe), stubborn beliefs, a master seed, and an ordered task list.  Each
task writes one primary output file; a manifest records the spec hash, seed,
library version and per-task status, and is written even when a task fails.

Stochastic task ``i`` derives its seed as
``(seed + (i + 1) * 0x9E3779B97F4A7C15) mod 2**64`` (splitmix-style odd
constant), so outputs are a pure function of (spec, seed): the same spec and
seed reproduce every stochastic output byte for byte.

``GOSSIPFIELD_THREADS`` caps worker threads for replica ensembles.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .errors import ExperimentError, GossipError
from .fluidity import concentration_report, fluidity_report, mean_histogram
from .generators import GraphRecipe, generate, write_edgelist
from .moments import (
    barbell_oracle,
    cayley_oracle,
    expected_beliefs,
    second_moments,
    tree_oracle,
)
from .network import SocialNetwork, build_canonical
from .simulate import (
    default_initial,
    ergodic_ensemble,
    ergodic_moments,
    simulate_forward,
    stationary_ensemble,
)

TASKS = (
    "simulate",
    "ergodic",
    "stationary-sample",
    "moments",
    "second-moments",
    "fluidity",
    "concentration",
    "oracle-check",
)
STOCHASTIC_TASKS = {"simulate", "ergodic", "stationary-sample"}
_SPLIT = 0x9E3779B97F4A7C15


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _task_seed(seed, index) -> int:
    return (int(seed) + (index + 1) * _SPLIT) % (1 << 64)


def _json_dump(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _load_spec(path: Path) -> dict:
    try:
        spec = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ExperimentError(f"cannot read spec {path}: {exc}") from exc
    tasks = spec.get("tasks")
    if not tasks:
        raise ExperimentError("spec declares no tasks")
    for t in tasks:
        if t.get("task") not in TASKS:
            raise ExperimentError(f"unknown task {t.get('task')!r}")
    needs_seed = any(t["task"] in STOCHASTIC_TASKS for t in tasks) or (
        isinstance(spec.get("network"), dict) and "recipe" in spec["network"]
    )
    if needs_seed and "seed" not in spec:
        raise ExperimentError("stochastic tasks require a seed")
    return spec


def _build_network(spec: dict, spec_dir: Path, out: Path = None) -> SocialNetwork:
    src = spec.get("network")
    if not isinstance(src, dict):
        raise ExperimentError("spec needs a 'network' object")
    if "file" in src:
        p = spec_dir / src["file"]
        if not p.exists():
            raise ExperimentError(f"network file {p} does not exist")
        return SocialNetwork.from_json(json.loads(p.read_text()))
    if "recipe" in src:
        recipe = GraphRecipe.from_json(src["recipe"])
        graph, stubborn = generate(recipe)
        if out is not None:
            write_edgelist(graph, out / "network_edges.txt")
        beliefs = spec.get("beliefs")
        if beliefs is None:
            raise ExperimentError("recipe networks need a 'beliefs' entry")
        if "values" in beliefs:
            vals = list(beliefs["values"])
            if len(vals) != len(stubborn):
                raise ExperimentError(
                    f"{len(vals)} belief values for {len(stubborn)} stubborn agents"
                )
            mapping = {s: float(v) for s, v in zip(stubborn, vals)}
        else:
            mapping = {int(k): float(v) for k, v in beliefs.items()}
            if set(mapping) != set(stubborn):
                raise ExperimentError("belief keys do not match the placed stubborn set")
        trust = spec.get("trust")
        if trust is None:
            raise ExperimentError("recipe networks need a 'trust' entry")
        return build_canonical(graph, mapping, float(trust))
    return SocialNetwork.from_json(src)


def _initial_condition(net, task):
    x0 = task.get("x0", "hull-midpoint")
    if x0 == "hull-midpoint":
        return default_initial(net)
    if isinstance(x0, (int, float)):
        return default_initial(net, float(x0))
    return np.asarray(x0, dtype=np.float64)


def _moment_rows(net, mean, variance):
    rows = []
    for v in range(net.n):
        var = "" if variance is None or np.isnan(variance[v]) else _fmt(variance[v])
        rows.append([net.names[v], _fmt(mean[v]), var])
    return rows


# -- task implementations ------------------------------------------------------


def _task_moments(net, task, seed, out: Path, label):
    mean = expected_beliefs(net)
    variance = None
    if task.get("variances", True):
        variance = second_moments(net).variance
    path = out / f"{label}.csv"
    _write_csv(path, ["node", "mean", "variance"], _moment_rows(net, mean, variance))
    jpath = out / f"{label}.json"
    _json_dump({
        "nodes": list(net.names),
        "mean": mean.tolist(),
        "variance": None if variance is None else variance.tolist(),
    }, jpath)
    return [path.name, jpath.name]

def _task_second_moments(net, task, seed, out: Path, label):
    pairs = task.get("pairs")
    sol = second_moments(net, pair_support=pairs)
    rows = []
    if sol.full:
        idx = [(v, vp) for v in range(net.n) for vp in range(v, net.n)]
    else:
        idx = sorted(sol.second)
    corr = sol.correlation(idx)
    for (v, vp), c in zip(idx, corr):
        rows.append([net.names[v], net.names[vp], _fmt(sol.second_of(v, vp)), _fmt(c)])
    path = out / f"{label}.csv"
    _write_csv(path, ["node_a", "node_b", "second_moment", "correlation"], rows)
    return [path.name]


def _task_simulate(net, task, seed, out: Path, label):
    horizon = float(task["horizon"])
    x0 = _initial_condition(net, task)
    log_path = out / f"{label}_events.csv" if task.get("event_log") else None
    res = simulate_forward(net, x0, horizon, seed, event_log=log_path)
    payload = res.to_json()
    payload["seed"] = seed
    payload["nodes"] = list(net.names)
    path = out / f"{label}.json"
    _json_dump(payload, path)
    outputs = [path.name]
    if log_path is not None:
        outputs.append(log_path.name)
    return outputs


def _task_ergodic(net, task, seed, out: Path, label):
    horizon = float(task["horizon"])
    pairs = [tuple(p) for p in task.get("pairs", [])]
    x0 = _initial_condition(net, task)
    replicas = int(task.get("replicas", 1))
    batches = int(task.get("batches", 100 if replicas == 1 else 25))
    if replicas == 1:
        acc = ergodic_moments(net, x0, horizon, seed, pairs=pairs, batches=batches)
    else:
        acc = ergodic_ensemble(net, x0, horizon, seed, replicas,
                               pairs=pairs, batches=batches)
    mean = acc.mean()
    variance = np.full(net.n, np.nan)
    for k, (a, b) in enumerate(acc.pairs):
        if a == b:
            variance[a] = acc.variance()[k]
    path = out / f"{label}.csv"
    _write_csv(path, ["node", "mean", "variance"], _moment_rows(net, mean, variance))
    stats = {
        "horizon": acc.horizon,
        "events": acc.events,
        "mean_se": acc.mean_se().tolist(),
        "pairs": acc.pairs.tolist(),
        "second": acc.second_moment().tolist(),
        "second_se": acc.second_se().tolist(),
        "variance_se": acc.variance_se().tolist(),
        "seed": seed,
    }
    spath = out / f"{label}_stats.json"
    _json_dump(stats, spath)
    return [path.name, spath.name]


def _task_stationary(net, task, seed, out: Path, label):
    count = int(task.get("count", 1))
    tol = float(task.get("tol", 1e-8))
    samples = stationary_ensemble(net, count, tol, seed)
    path = out / f"{label}.csv"
    _write_csv(path, [str(nm) for nm in net.names],
               [[_fmt(v) for v in row] for row in samples])
    summary = {
        "count": count,
        "tol": tol,
        "seed": seed,
        "mean": samples.mean(axis=0).tolist(),
    }
    spath = out / f"{label}_summary.json"
    _json_dump(summary, spath)
    return [path.name, spath.name]


def _task_fluidity(net, task, seed, out: Path, label):
    rep = fluidity_report(net, tol_time=float(task.get("tol_time", 1e-3)))
    path = out / f"{label}.json"
    _json_dump(rep.to_json(), path)
    return [path.name]


def _task_concentration(net, task, seed, out: Path, label):
    eps = [float(e) for e in task.get("eps", (0.05, 0.1, 0.2))]
    channel = task.get("variance_channel")
    rep = concentration_report(net, eps, include_variance=channel)
    path = out / f"{label}.json"
    _json_dump(rep.to_json(), path)
    outputs = [path.name]
    if task.get("histogram", True):
        means = expected_beliefs(net)
        edges, counts = mean_histogram(means, net.belief_hull(),
                                       bins=int(task.get("bins", 50)))
        hpath = out / f"{label}_hist.csv"
        _write_csv(hpath, ["bin_left", "bin_right", "count"],
                   [[_fmt(edges[i]), _fmt(edges[i + 1]), int(c)]
                    for i, c in enumerate(counts)])
        outputs.append(hpath.name)
    return outputs


def _task_oracle_check(net, task, seed, out: Path, label):
    kind = task.get("oracle")
    tol = float(task.get("tol", 1e-8))
    solver_mean = expected_beliefs(net)
    oracle_var = solver_var = None
    if kind == "tree":
        oracle_mean, oracle_var = tree_oracle(net, int(task["s0"]), int(task["s1"]))
    elif kind == "barbell":
        x0, x1 = (float(net.stubborn_values[i]) for i in (0, 1))
        oracle_mean = barbell_oracle(net.n, x0, x1)
    elif kind == "cayley":
        gens = task.get("generators")
        m, d = int(task["m"]), int(task["d"])
        if gens is None:
            gens = []
            for i in range(d):
                e = [0] * d
                e[i] = 1
                gens.append(tuple(e))
                gens.append(tuple(-x for x in e))
        gamma1 = cayley_oracle(m, d, gens, task["s0"], task["s1"])
        x0, x1 = (float(v) for v in net.stubborn_values)
        oracle_mean = x0 + gamma1 * (x1 - x0)
    else:
        raise ExperimentError(f"unknown oracle {kind!r}")
    if oracle_var is not None:
        solver_var = second_moments(net).variance
    dev = float(np.abs(oracle_mean - solver_mean).max())
    if oracle_var is not None:
        dev = max(dev, float(np.abs(oracle_var - solver_var).max()))
    path = out / f"{label}.csv"
    _write_csv(path, ["node", "mean", "variance"],
               _moment_rows(net, oracle_mean, oracle_var))
    jpath = out / f"{label}_check.json"
    _json_dump({"oracle": kind, "max_abs_diff": dev, "tol": tol,
                "pass": bool(dev < tol)}, jpath)
    if dev >= tol:
        raise ExperimentError(
            f"oracle {kind} deviates from the generic solver by {dev:.3e} (tol {tol})"
        )
    return [path.name, jpath.name]


_RUNNERS = {
    "moments": _task_moments,
    "second-moments": _task_second_moments,
    "simulate": _task_simulate,
    "ergodic": _task_ergodic,
    "stationary-sample": _task_stationary,
    "fluidity": _task_fluidity,
    "concentration": _task_concentration,
    "oracle-check": _task_oracle_check,
}


def run(spec_path, out_dir, verbose=False) -> int:
    """Execute a spec; returns the process exit code."""
    spec_path = Path(spec_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.monotonic()
    manifest = {
        "spec": spec_path.name,
        "spec_sha256": "",
        "seed": None,
        "version": __version__,
        "backend": _kernels.BACKEND,
        "started_utc": started,
        "wall_clock_s": None,
        "tasks": [],
    }
    code = 0
    try:
        raw = spec_path.read_bytes()
        manifest["spec_sha256"] = hashlib.sha256(raw).hexdigest()
        spec = _load_spec(spec_path)
        seed = spec.get("seed")
        manifest["seed"] = seed
        net = _build_network(spec, spec_path.parent, out)
        labels = set()
        for idx, task in enumerate(spec["tasks"]):
            name = task["task"]
            label = task.get("label", name)
            if label in labels:
                label = f"{label}_{idx}"
            labels.add(label)
            entry = {"index": idx, "task": name, "label": label,
                     "status": "ok", "outputs": []}
            try:
                task_seed = _task_seed(seed, idx) if seed is not None else None
                entry["outputs"] = _RUNNERS[name](net, task, task_seed, out, label)
                if verbose:
                    print(f"[{idx}] {name} -> {', '.join(entry['outputs'])}")
            except GossipError as exc:
                entry["status"] = "error"
                entry["error"] = {"code": exc.code, "message": str(exc)}
                manifest["tasks"].append(entry)
                code = 1
                if verbose:
                    print(f"[{idx}] {name} failed: {exc}", file=sys.stderr)
                break
            manifest["tasks"].append(entry)
    except GossipError as exc:
        manifest["error"] = {"code": exc.code, "message": str(exc)}
        code = 2
        if verbose:
            print(f"run failed: {exc}", file=sys.stderr)
    finally:
        manifest["wall_clock_s"] = time.monotonic() - t0
        _json_dump(manifest, out / "manifest.json")
    return code


# -- run comparison ------------------------------------------------------------


def _compare_values(a, b, tol, path, report):
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        dev = abs(float(a) - float(b))
        report["max_dev"] = max(report["max_dev"], dev)
        if dev > tol:
            report["mismatches"].append(f"{path}: |{a} - {b}| = {dev:.3e}")
        return
    if isinstance(a, dict) and isinstance(b, dict):
        if set(a) != set(b):
            report["schema_errors"].append(f"{path}: keys differ")
            return
        for k in sorted(a):
            _compare_values(a[k], b[k], tol, f"{path}.{k}", report)
        return
    if isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            report["schema_errors"].append(f"{path}: lengths {len(a)} vs {len(b)}")
            return
        for i, (x, y) in enumerate(zip(a, b)):
            _compare_values(x, y, tol, f"{path}[{i}]", report)
        return
    if a != b:
        report["schema_errors"].append(f"{path}: {a!r} != {b!r}")


def _compare_csv(pa, pb, tol, report):
    rows_a = list(csv.reader(open(pa)))
    rows_b = list(csv.reader(open(pb)))
    if len(rows_a) != len(rows_b) or (rows_a and rows_a[0] != rows_b[0]):
        report["schema_errors"].append(f"{pa.name}: shape or header differs")
        return
    for i, (ra, rb) in enumerate(zip(rows_a[1:], rows_b[1:]), start=1):
        if len(ra) != len(rb):
            report["schema_errors"].append(f"{pa.name} row {i}: width differs")
            continue
        for j, (ca, cb) in enumerate(zip(ra, rb)):
            try:
                va, vb = float(ca), float(cb)
            except ValueError:
                if ca != cb:
                    report["schema_errors"].append(
                        f"{pa.name} row {i} col {j}: {ca!r} != {cb!r}"
                    )
                continue
            dev = abs(va - vb)
            report["max_dev"] = max(report["max_dev"], dev)
            if dev > tol:
                report["mismatches"].append(
                    f"{pa.name} row {i} col {j}: |{ca} - {cb}| = {dev:.3e}"
                )


def compare(dir_a, dir_b, tolerance=0.0) -> dict:
    """Numeric diff of two run directories within ``tolerance``.

    Both manifests must exist.  Returns a report dict with per-file maximum
    deviations, out-of-tolerance mismatches and schema errors.
    """
    a, b = Path(dir_a), Path(dir_b)
    for d in (a, b):
        if not (d / "manifest.json").exists():
            raise ExperimentError(f"{d} has no manifest.json")
    files_a = {p.name for p in a.iterdir() if p.name != "manifest.json"}
    files_b = {p.name for p in b.iterdir() if p.name != "manifest.json"}
    report = {
        "max_dev": 0.0,
        "mismatches": [],
        "schema_errors": [],
        "only_in_a": sorted(files_a - files_b),
        "only_in_b": sorted(files_b - files_a),
        "compared": sorted(files_a & files_b),
    }
    for name in report["compared"]:
        pa, pb = a / name, b / name
        if name.endswith(".json"):
            _compare_values(json.loads(pa.read_text()), json.loads(pb.read_text()),
                            tolerance, name, report)
        else:
            _compare_csv(pa, pb, tolerance, report)
    report["clean"] = not (report["mismatches"] or report["schema_errors"]
                           or report["only_in_a"] or report["only_in_b"])
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gossipfield",
        description="Gossip opinion dynamics: experiments and run comparison.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment spec")
    p_run.add_argument("--spec", required=True, help="experiment spec JSON")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--verbose", action="store_true")
    p_cmp = sub.add_parser("compare", help="diff two run directories")
    p_cmp.add_argument("run_a")
    p_cmp.add_argument("run_b")
    p_cmp.add_argument("--tolerance", type=float, default=0.0)
    args = parser.parse_args(argv)

    if args.command == "run":
        try:
            return run(args.spec, args.out, verbose=args.verbose)
        except GossipError as exc:
            print(f"error [{exc.code}]: {exc}", file=sys.stderr)
            return 2
    try:
        report = compare(args.run_a, args.run_b, tolerance=args.tolerance)
    except GossipError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(report, indent=2))
    return 0 if report["clean"] else 4


if __name__ == "__main__":
    sys.exit(main())
