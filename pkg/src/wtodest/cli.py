"""Command-line front end: validate / synthesize / verify / simulate / sweep.

Thin plumbing over the library modules; no numerical logic lives here. All
floating-point CSV fields are written with 17 significant digits so values
round-trip exactly.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .augment import EstimatorGains
from .model import (ModelBundle, TransitionCompletion, completion_from_spec,
                    dump_gains, load_model_file, model_violations, parse_gains)
from .protocol import NodePartition, make_weights
from .simulate import (DisturbanceSignal, NumericOverflowError,
                       empirical_l2linf, simulate)
from .synthesis import (CclConfig, NoFeasibleLevelError, bisect_gamma,
                        ccl_synthesize, verify_gains)

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_IO = 2


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [str(c) if isinstance(c, (int, np.integer)) else _fmt(c)
                     for c in row]
            fh.write(",".join(cells) + "\n")


def _dump_assignment(assignment: dict) -> dict:
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
            for k, v in assignment.items()}


def _echo_config(outdir: Path, args: argparse.Namespace) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    with open(outdir / "config.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _load_setup(args) -> tuple[ModelBundle, NodePartition, object]:
    bundle = load_model_file(args.model)
    partition = NodePartition(bundle.partition)
    weights = make_weights(partition, bundle.weights)
    return bundle, partition, weights


def _load_gains(args, bundle: ModelBundle) -> EstimatorGains:
    if getattr(args, "gains", None):
        with open(args.gains) as fh:
            doc = json.load(fh)
        return EstimatorGains(parse_gains(doc.get("gains", doc)))
    if bundle.gains is not None:
        return EstimatorGains(bundle.gains)
    raise ValueError("no gains: pass --gains or embed a gain grid in the model file")


def _load_completion(args, bundle: ModelBundle) -> TransitionCompletion:
    if getattr(args, "completion", None):
        with open(args.completion) as fh:
            comp = TransitionCompletion(np.asarray(json.load(fh), dtype=float))
        comp.check_against(bundle.model.transitions)
        return comp
    return completion_from_spec(bundle.model.transitions)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands -------------------------------------------------------------

def cmd_validate(args) -> int:
    bundle, _, _ = _load_setup(args)
    violations = model_violations(bundle.model)
    for v in violations:
        print(v)
    if violations:
        return EXIT_INFEASIBLE
    print("ok")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    bundle, partition, weights = _load_setup(args)
    out = _outdir(args)
    _echo_config(out, args)
    config = CclConfig(gamma=args.gamma, max_iters=args.max_iters,
                       mu=args.mu, seed=args.seed)
    if args.gamma_bracket:
        lo, hi = args.gamma_bracket
        try:
            gamma, result = bisect_gamma(bundle.model, partition, weights,
                                         lo, hi, config=config)
        except NoFeasibleLevelError as exc:
            print(exc)
            return EXIT_INFEASIBLE
    else:
        result = ccl_synthesize(bundle.model, partition, weights, config)
        gamma = args.gamma

    _write_csv(out / "ccl_trace.csv",
               ["iter", "objective", "eq55_residual", "max_coupling_residual"],
               [(row["iter"], row["objective"], row["eq_residual"],
                 row["max_coupling_residual"]) for row in result.ccl_trace])
    print(f"status {result.status.value} gamma {_fmt(gamma)}")
    if not result.converged:
        return EXIT_INFEASIBLE
    with open(out / "gains.json", "w") as fh:
        json.dump({"gamma": gamma, "gains": dump_gains(result.gains.K)},
                  fh, indent=2)
        fh.write("\n")
    with open(out / "certificates.json", "w") as fh:
        json.dump(_dump_assignment(result.certificates), fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    bundle, partition, weights = _load_setup(args)
    gains = _load_gains(args, bundle)
    out = _outdir(args)
    _echo_config(out, args)
    outcome = verify_gains(bundle.model, partition, weights, gains, args.gamma)
    if not outcome.feasible:
        print(f"infeasible at gamma {_fmt(args.gamma)} ({outcome.status.value})")
        return EXIT_INFEASIBLE
    with open(out / "certificate.json", "w") as fh:
        json.dump(_dump_assignment(outcome.assignment), fh, indent=2)
        fh.write("\n")
    print(f"feasible at gamma {_fmt(args.gamma)} residual {_fmt(outcome.residual)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    bundle, partition, weights = _load_setup(args)
    gains = _load_gains(args, bundle)
    completion = _load_completion(args, bundle)
    out = _outdir(args)
    _echo_config(out, args)
    disturbance = DisturbanceSignal.decaying(
        literal_exponent=args.literal_exponent)

    n = bundle.model.n
    na = n + bundle.model.m
    header = (["k", "mode", "node"]
              + [f"x{l + 1}" for l in range(n)]
              + [f"e{l + 1}" for l in range(na)]
              + ["ztilde_sq", "V"])
    try:
        for run in range(args.runs):
            traj = simulate(bundle.model, partition, weights, gains,
                            completion, disturbance, args.horizon,
                            seed=[args.seed, run])
            off = traj.offset
            rows = []
            for k in range(args.horizon):
                eta = traj.state(k)
                rows.append([k, int(traj.mode[k]) + 1, int(traj.node[k]) + 1]
                            + list(traj.x_bar[off + k, :n])
                            + list(traj.e[off + k])
                            + [float((traj.z_tilde[k] ** 2).sum()),
                               float(eta @ eta)])
            _write_csv(out / f"run_{run:03d}.csv", header, rows)
        metrics = empirical_l2linf(bundle.model, partition, weights, gains,
                                   completion, disturbance, args.runs,
                                   args.horizon, args.seed)
    except NumericOverflowError as exc:
        print(f"NumericOverflow: {exc}")
        return EXIT_INFEASIBLE
    _write_csv(out / "ensemble.csv", ["k", "ms_state_norm"],
               [(k, metrics.ms_state_norm[k]) for k in range(args.horizon)])
    summary = {
        "runs": metrics.runs,
        "peak_mean_ztilde_sq": metrics.peak_mean_ztilde_sq,
        "energy_paper": metrics.energy_paper,
        "energy_single": metrics.energy_single,
        "empirical_ratio": metrics.empirical_ratio,
        "empirical_ratio_single": metrics.empirical_ratio_single,
        "ratio_std_error": metrics.ratio_std_error,
        "node_counts": metrics.node_counts.tolist(),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print("ok")
    return EXIT_OK


def cmd_sweep(args) -> int:
    bundle, partition, weights = _load_setup(args)
    out = _outdir(args)
    _echo_config(out, args)
    lo, hi = args.gamma_bracket
    config = CclConfig(gamma=hi, max_iters=args.max_iters, mu=args.mu,
                       seed=args.seed)
    log: list[tuple[float, str]] = []
    try:
        gamma, result = bisect_gamma(
            bundle.model, partition, weights, lo, hi, steps=args.steps,
            config=config,
            probe=lambda g, res: log.append((g, res.status.value)))
    except NoFeasibleLevelError as exc:
        print(exc)
        _write_csv(out / "bracket_log.csv", ["gamma", "status"], log)
        return EXIT_INFEASIBLE

    _write_csv(out / "bracket_log.csv", ["gamma", "status"], log)
    with open(out / "gains.json", "w") as fh:
        json.dump({"gamma": gamma, "gains": dump_gains(result.gains.K)},
                  fh, indent=2)
        fh.write("\n")
    print(f"best gamma {_fmt(gamma)}")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wtodest",
        description="Protocol-scheduled state estimation for Markov-switched "
                    "delayed neural networks: synthesis, verification, simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, gains=False, sim=False, synth=False):
        sp.add_argument("model", help="model file (JSON)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        if gains:
            sp.add_argument("--gains", help="gain grid file (JSON)")
        if sim:
            sp.add_argument("--horizon", type=int, default=200)
            sp.add_argument("--runs", type=int, default=1)
            sp.add_argument("--completion",
                            help="ground-truth transition matrix (JSON), "
                                 "required when the model grid has '?' cells")
            sp.add_argument("--literal-exponent", action="store_true",
                            help="read the disturbance envelope exponent "
                                 "literally as -(rate**k)")
        if synth:
            sp.add_argument("--gamma", type=float, default=1.0)
            sp.add_argument("--gamma-bracket", nargs=2, type=float,
                            metavar=("LO", "HI"))
            sp.add_argument("--mu", type=float, default=1e-6)
            sp.add_argument("--max-iters", type=int, default=50)

    sp = sub.add_parser("validate", help="structural model checks")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("synthesize", help="design estimator gains")
    common(sp, synth=True)
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("verify", help="check gains at a performance level")
    common(sp, gains=True)
    sp.add_argument("--gamma", type=float, required=True)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("simulate", help="closed-loop Monte Carlo runs")
    common(sp, gains=True, sim=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="bisect the performance level")
    common(sp, synth=True)
    sp.add_argument("--steps", type=int, default=10)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "sweep" and not args.gamma_bracket:
        print("sweep requires --gamma-bracket", file=sys.stderr)
        return EXIT_IO
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
