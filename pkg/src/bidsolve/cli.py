"""Command-line entry point: ``bidsolve <subcommand> [--config FILE] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 solver/oracle mismatch,
4 I/O failure, 5 malformed policy file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import config as config_mod
from .bids import SolveReport, solve
from .core import build_operators
from .demand import atom_mass, moments, sample
from .sim import rollout
from .vi import AugmentedMDP, ConvergenceError, solve_vi
from .water import (
    PolicyFormatError,
    build_problem,
    classify_zones,
    load_policy,
    policy_to_csv,
    policy_to_json,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ORACLE = 3
EXIT_IO = 4
EXIT_POLICY = 5

log = logging.getLogger("bidsolve")


class OracleMismatch(RuntimeError):
    pass


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return repr(float(x))


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _provenance(out: Path, cfg) -> None:
    _write(out, "config.resolved.json", _json(cfg.to_dict()))


def _run_solve(cfg, epsilon=None):
    params = cfg.water_params()
    inst = build_problem(params)
    ops = build_operators(inst.problem, inst.grid, inst.noise)
    report = solve(inst.problem, inst.grid, inst.noise, epsilon or cfg.solver.epsilon,
                   operators=ops, validate=False)
    return inst, ops, report


def _report_doc(cfg, report: SolveReport, zones) -> dict:
    return {
        "config": cfg.to_dict(),
        "v_star": report.v_star,
        "upsilon_star": report.upsilon_star,
        "epsilon": report.epsilon,
        "iterations": report.iterations,
        "iteration_bound": report.iteration_bound,
        "upper_bound": report.upper_bound,
        "bracket": [report.bracket.lower, report.bracket.upper],
        "bracket_history": [[v, u] for v, u in report.bracket_history],
        "zones": {
            str(t): [
                {"zone": z.label, "x_low_L": z.x_low, "x_high_L": z.x_high} for z in zs
            ]
            for t, zs in zones.zones.items()
        },
    }


def cmd_solve(cfg, out: Path) -> int:
    inst, _, report = _run_solve(cfg)
    grid, k = inst.grid, inst.problem.horizon_cap
    x = grid.points
    zones = classify_zones(report.policy, grid)
    _provenance(out, cfg)
    _write(out, "solve_report.json", _json(_report_doc(cfg, report, zones)))
    V = report.value_table.values
    _write(out, "value_table.csv", _csv_text(
        ("x_L", "t", "V"),
        ((_num(x[i]), t, _num(V[i, t])) for t in range(k + 1) for i in range(x.size)),
    ))
    _write(out, "policy.csv", policy_to_csv(report.policy, grid))
    _write(out, "policy.json", policy_to_json(report.policy, grid, inst.params))
    for t in range(1, k + 1):
        labels = {}
        for z in zones.zones[t]:
            labels.update({i: z.label for i in range(z.first, z.last + 1)})
        _write(out, f"panels/panel_t{t}.csv", _csv_text(
            ("x_L", "V", "order_L", "flush", "zone"),
            ((_num(x[i]), _num(V[i, t]), _num(report.policy.control[i, t]),
              int(report.policy.reset[i, t]), labels[i]) for i in range(x.size)),
        ))
    print(f"v* = {report.v_star:.6f}  iterations = {report.iterations} "
          f"(bound {report.iteration_bound})  epsilon = {report.epsilon:g}  "
          f"wall time = {report.wall_time:.2f} s")
    for t in range(1, k + 1):
        print(f"  t={t}: " + " | ".join(
            f"{z.label} [{z.x_low:g}, {z.x_high:g}]" for z in zones.zones[t]))
    return EXIT_OK


def cmd_export_policy(cfg, out: Path, fmt: str) -> int:
    inst, _, report = _run_solve(cfg)
    _provenance(out, cfg)
    if fmt in ("csv", "both"):
        _write(out, "policy.csv", policy_to_csv(report.policy, inst.grid))
    if fmt in ("json", "both"):
        _write(out, "policy.json", policy_to_json(report.policy, inst.grid, inst.params))
    print(f"policy written to {out} (v* = {report.v_star:.6f})")
    return EXIT_OK


def compare_rows(cfg) -> list[dict]:
    rows = []
    eps = cfg.solver.epsilon
    for gamma in cfg.vi.discounts:
        inst = build_problem(cfg.water_params(discount=gamma))
        ops = build_operators(inst.problem, inst.grid, inst.noise)
        t0 = time.perf_counter()
        rep = solve(inst.problem, inst.grid, inst.noise, eps, operators=ops, validate=False)
        t_bids = time.perf_counter() - t0
        t0 = time.perf_counter()
        vi = solve_vi(AugmentedMDP.from_problem(inst.problem, inst.grid, inst.noise, ops),
                      cfg.vi.tol, cfg.vi.max_iter)
        t_vi = time.perf_counter() - t0
        rows.append({
            "gamma": gamma,
            "v_star": rep.v_star,
            "J0": vi.reset_value,
            "abs_diff": abs(rep.v_star - vi.reset_value),
            "max_table_dev": float(np.max(np.abs(rep.value_table.values - vi.values))),
            "bids_iterations": rep.iterations,
            "bids_iteration_bound": rep.iteration_bound,
            "vi_iterations": vi.iterations,
            "bids_time_s": t_bids,
            "vi_time_s": t_vi,
        })
    return rows


_COMPARE_COLS = ("gamma", "v_star", "J0", "abs_diff", "max_table_dev",
                 "bids_iterations", "bids_iteration_bound", "vi_iterations")


def cmd_compare(cfg, out: Path) -> int:
    rows = compare_rows(cfg)
    limit = cfg.solver.epsilon + cfg.vi.tol
    _provenance(out, cfg)
    # timings go to stdout only so the files stay byte-reproducible
    _write(out, "compare.json", _json({
        "config": cfg.to_dict(),
        "limit": limit,
        "rows": [{c: r[c] for c in _COMPARE_COLS} for r in rows],
    }))
    _write(out, "compare.csv", _csv_text(_COMPARE_COLS, ([r[c] for c in _COMPARE_COLS] for r in rows)))
    print(",".join(_COMPARE_COLS + ("bids_time_s", "vi_time_s")))
    for r in rows:
        print(",".join(str(r[c]) for c in _COMPARE_COLS) + f",{r['bids_time_s']:.3f},{r['vi_time_s']:.3f}")
    bad = [r for r in rows if r["max_table_dev"] > limit or r["bids_iterations"] > r["bids_iteration_bound"]]
    if bad:
        raise OracleMismatch(
            "BiDS and value iteration disagree beyond epsilon + tol at gamma="
            + ", ".join(str(r["gamma"]) for r in bad)
        )
    return EXIT_OK


def cmd_simulate(cfg, out: Path, policy_path) -> int:
    params = cfg.water_params()
    inst = build_problem(params)
    policy = load_policy(policy_path, inst.grid, params.horizon_cap)
    stats, traj = rollout(inst, policy, cfg.sim.episodes, cfg.sim.tail_tol, cfg.sim.seed, record=True)
    doc = stats.as_dict()
    _provenance(out, cfg)
    _write(out, "stats.json", _json({"config": cfg.to_dict(), "policy": str(policy_path), "stats": doc}))
    _write(out, "stats.csv", _csv_text(tuple(doc), [[doc[c] for c in doc]]))
    cols = ("day", "x_L", "t", "flush", "order_L", "demand_L", "cost")
    _write(out, "trajectory.csv", _csv_text(cols, ([r[c] for c in cols] for r in traj)))
    print(f"mean discounted cost = {stats.mean_cost:.6f} +/- {stats.std_error:.6f} "
          f"({stats.episodes} episodes, horizon {stats.horizon})")
    return EXIT_OK


def cmd_demand_stats(cfg, out: Path, n_samples: int, bins: int) -> int:
    params = cfg.water_params().demand
    draws = sample(params, cfg.solver.seed, n_samples)
    mean, var = moments(params)
    zero = atom_mass(params)
    emp = {"mean": float(draws.mean()), "variance": float(draws.var()),
           "zero_mass": float(np.mean(draws == 0))}
    counts, edges = np.histogram(draws, bins=bins, range=(0.0, float(draws.max()) or 1.0))
    mass = counts / n_samples
    _provenance(out, cfg)
    _write(out, "demand_stats.json", _json({
        "config": cfg.to_dict(),
        "samples": n_samples,
        "analytic": {"mean": mean, "variance": var, "zero_mass": zero},
        "empirical": emp,
    }))
    _write(out, "demand_histogram.csv", _csv_text(
        ("bin_low_L", "bin_high_L", "mass"),
        ((_num(edges[i]), _num(edges[i + 1]), _num(mass[i])) for i in range(bins)),
    ))
    print("quantity,analytic,empirical")
    print(f"mean_L,{mean:.6g},{emp['mean']:.6g}")
    print(f"variance_L2,{var:.6g},{emp['variance']:.6g}")
    print(f"zero_mass,{zero:.6e},{emp['zero_mass']:.6e}")
    print(f"histogram_mass_total,{math.fsum(mass):.15g},")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bidsolve", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration (defaults if omitted)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="override solver and simulation seeds")
        p.add_argument("--epsilon", type=float, help="override the bisection tolerance")
        return p

    common(sub.add_parser("solve", help="solve the tank problem and write tables"))
    common(sub.add_parser("compare", help="BiDS vs value iteration over a discount sweep"))
    p = common(sub.add_parser("simulate", help="roll out an exported policy"))
    p.add_argument("--policy", required=True, help="policy CSV or JSON from solve/export-policy")
    p = common(sub.add_parser("export-policy", help="solve and write the pamphlet table"))
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    p = common(sub.add_parser("demand-stats", help="PRP demand diagnostics"))
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--bins", type=int, default=50)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
        cfg = cfg.with_overrides(seed=args.seed, epsilon=args.epsilon)
    except config_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    out = Path(args.out)
    try:
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "compare":
            return cmd_compare(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, args.policy)
        if args.command == "export-policy":
            return cmd_export_policy(cfg, out, args.format)
        if args.command == "demand-stats":
            if args.samples < 1 or args.bins < 1:
                print("config error: --samples and --bins must be >= 1", file=sys.stderr)
                return EXIT_CONFIG
            return cmd_demand_stats(cfg, out, args.samples, args.bins)
    except PolicyFormatError as exc:
        print(f"policy file error: {exc}", file=sys.stderr)
        return EXIT_POLICY
    except (OracleMismatch, ConvergenceError) as exc:
        print(f"oracle mismatch: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
