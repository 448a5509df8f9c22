"""Command-line runner.

    dpcore run --config cfg.json [--seed N] [--out DIR]
    dpcore sweep --config cfg.json --grid grid.json [--out DIR]
    dpcore props [--instances N] [--theta-scale S]
    dpcore streams gen --spec spec.json --out stream.csv

Exit codes: 0 success, 1 configuration or precondition error, 2 property failure.
``DPCORE_WORKERS`` bounds the sweep worker pool (default 1).
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .experiment import ConfigError, ExperimentConfig, execute
from .simplified import (
    SeparationError,
    SimplifiedConfig,
    make_separated_instance,
    order_invariance,
)
from .streams import StreamSpec, generate

EXIT_OK, EXIT_CONFIG, EXIT_PROPERTY = 0, 1, 2
WORKERS_ENV = "DPCORE_WORKERS"
SWEEP_KEYS = ("prompt_length", "rho", "batch_size", "n_ref", "delta")
SWEEP_COLUMNS = SWEEP_KEYS + ("seed", "policy", "mean_error", "final_K", "fp_mean", "bp_mean", "n_scratch")


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def cmd_run(config_path, seed: int | None = None, out: str | None = None) -> int:
    try:
        cfg = ExperimentConfig.load(config_path)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(out or cfg.output_dir or "runs")
    seeds = [seed] if seed is not None else cfg.seeds
    # everything is computed before anything is written
    results = []
    for s in seeds:
        rep = execute(cfg, s)
        summary = rep.summary()
        summary["seed"] = s
        results.append((s, rep.to_csv(), json.dumps(summary, sort_keys=True, indent=1)))
    for s, trace, summary in results:
        _atomic_write(out_dir / f"trace_seed{s}.csv", trace)
        _atomic_write(out_dir / f"summary_seed{s}.json", summary + "\n")
        print(f"seed {s}: wrote {out_dir}/summary_seed{s}.json")
    return EXIT_OK


def _grid_points(grid: dict):
    unknown = set(grid) - set(SWEEP_KEYS)
    if unknown:
        raise ConfigError(f"unknown grid keys {sorted(unknown)}; allowed {list(SWEEP_KEYS)}")
    keys = [k for k in SWEEP_KEYS if k in grid]
    for k in keys:
        if not isinstance(grid[k], list) or not grid[k]:
            raise ConfigError(f"grid.{k} must be a non-empty list")
    for values in itertools.product(*(grid[k] for k in keys)):
        yield dict(zip(keys, values))


def apply_point(base: dict, point: dict) -> dict:
    d = copy.deepcopy(base)
    for k, v in point.items():
        if k == "rho":
            d.setdefault("coreset", {})["rho"] = v
        elif k == "delta":
            d.setdefault("stream", {})["delta"] = v
        else:
            d[k] = v
    return d


def _sweep_job(args):
    cfg_dict, point, seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    rep = execute(cfg, seed)
    row = {k: point.get(k, "") for k in SWEEP_KEYS}
    row.update(seed=seed, policy=cfg.policy, mean_error=repr(rep.mean_error), final_K=rep.final_size,
               fp_mean=repr(rep.fp_total / len(rep)), bp_mean=repr(rep.bp_total / len(rep)),
               n_scratch=rep.path_counts().get("Scratch", 0))
    return row


def sweep_rows(base: dict, grid: dict, workers: int = 1) -> list[dict]:
    jobs = []
    for point in _grid_points(grid):
        d = apply_point(base, point)
        cfg = ExperimentConfig.from_dict(d)
        jobs.extend((d, point, s) for s in cfg.seeds)
    if workers <= 1:
        return [_sweep_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_job, jobs))


def cmd_sweep(config_path, grid_path, out: str | None = None) -> int:
    try:
        with open(config_path) as fh:
            base = json.load(fh)
        with open(grid_path) as fh:
            grid = json.load(fh)
        ExperimentConfig.from_dict(base)
        rows = sweep_rows(base, grid, _workers())
    except (OSError, json.JSONDecodeError, ConfigError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    path = Path(out or base.get("output_dir") or "runs") / "sweep.csv"
    _atomic_write(path, buf.getvalue())
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def cmd_props(instances: int = 50, seed: int = 0, theta_scale: float = 1.0, out=None) -> int:
    """Order-invariance suite on random well-separated instances."""
    out = out or sys.stdout
    rng = np.random.default_rng(seed)
    total_perms, failures = 0, []
    for i in range(instances):
        k = int(rng.integers(2, 5))
        n = int(rng.integers(k, 12))
        means, labels = make_separated_instance(rng, k, n, theta=1.0)
        cfg = SimplifiedConfig(theta=1.0 * theta_scale)
        try:
            rep = order_invariance(means, labels, cfg, seed=seed + i)
        except SeparationError as e:
            print(f"precondition violated on instance {i}: {e}", file=sys.stderr)
            return EXIT_CONFIG
        total_perms += rep.permutations
        if not rep.holds:
            failures.append((i, rep))
    for i, rep in failures:
        print(f"FAIL instance {i} (seed {seed + i}): assignments_invariant={rep.assignments_invariant} "
              f"means_invariant={rep.means_invariant} counterexample order={rep.counterexample}", file=out)
    print(f"instances={instances} permutations={total_perms} failures={len(failures)}", file=out)
    return EXIT_PROPERTY if failures else EXIT_OK


def cmd_streams_gen(spec_path, out_path) -> int:
    try:
        with open(spec_path) as fh:
            spec = StreamSpec.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _atomic_write(Path(out_path), generate(spec).to_csv())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpcore", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one configured experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")

    s = sub.add_parser("sweep", help="cross-product sweep over a parameter grid")
    s.add_argument("--config", required=True)
    s.add_argument("--grid", required=True)
    s.add_argument("--out")

    pr = sub.add_parser("props", help="order-invariance property suite")
    pr.add_argument("--instances", type=int, default=50)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--theta-scale", type=float, default=1.0,
                    help="multiply the separation threshold (values << 1 break the precondition)")

    st = sub.add_parser("streams", help="stream utilities")
    st_sub = st.add_subparsers(dest="streams_command", required=True)
    g = st_sub.add_parser("gen", help="generate a stream CSV from a spec")
    g.add_argument("--spec", required=True)
    g.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.seed, args.out)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.grid, args.out)
    if args.command == "props":
        return cmd_props(args.instances, args.seed, args.theta_scale)
    return cmd_streams_gen(args.spec, args.out)


if __name__ == "__main__":
    sys.exit(main())
