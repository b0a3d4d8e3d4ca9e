"""
Command-line front end.

Subcommands:
    gen     generate an instance, validate the modeling assumptions, write JSON
    run     execute an experiment (replications, CSVs, envelope report)
    bounds  print the rate constants and write the envelope CSV, no simulation
    verify  run the verification suite (all checks or --only NAME)
    report  pretty-print the report.json of a previous run

Exit codes: 0 success, 1 check failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .bounds import compute_constants, init_moments
from .checks import CHECKS, DEFAULT_SEED, run_checks
from .config import ExperimentConfig
from .engine import default_projection, ProjectionSet
from .errors import ConfigError, ConsensusTDError
from .harness import (
    constants_dict,
    draw_initializations,
    run_experiment,
    write_envelopes_csv,
)
from .mrp import compute_oracles, save_instance
from .network import spectral_eta, verify_b_connectivity, weight_schedule

EXIT_OK = 0
EXIT_CHECK_FAILURE = 1
EXIT_BAD_CONFIG = 2


def _load_config(args) -> ExperimentConfig:
    config = (
        ExperimentConfig.from_file(args.config)
        if args.config
        else ExperimentConfig()
    )
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "replications", None) is not None:
        overrides["replications"] = args.replications
    if getattr(args, "out", None) is not None:
        overrides["out"] = str(args.out)
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


_ASSUMPTION_NAMES = {
    1: "window-connected schedule",
    2: "doubly stochastic weights",
    3: "irreducible transition chain",
    4: "uniformly bounded rewards",
    5: "full-rank normalized features",
    6: "projection set contains the fixed point",
}


def _assumption_report(config: ExperimentConfig):
    """Validate the six modeling assumptions for (instance, schedule).

    Returns (lines, ok, state); lines read
    'assumption i (<name>): OK | VIOLATED - reason | NOT EVALUATED'."""
    from .errors import (
        InvalidEdgeError,
        NeverConnectedError,
        RankDeficientError,
        ReducibleChainError,
    )

    verdicts: dict[int, tuple[bool | None, str]] = {}
    state: dict = {}

    try:
        mrp, feats, seed = config.instance.build()
        state.update(mrp=mrp, feats=feats, seed=seed)
        verdicts[3] = (True, "")
        finite = bool(np.all(np.isfinite(mrp.reward_bounds)))
        verdicts[4] = (finite, "" if finite else "rewards unbounded")
        verdicts[5] = (True, "")
    except ReducibleChainError as exc:
        verdicts[3] = (False, str(exc))
        verdicts[4] = (None, "instance unavailable")
        verdicts[5] = (None, "instance unavailable")
    except RankDeficientError as exc:
        verdicts[3] = (True, "")
        verdicts[4] = (True, "")
        verdicts[5] = (False, str(exc))
    except ValueError as exc:
        attributed = 5 if "feature" in str(exc) else 3
        for num in (3, 4, 5):
            verdicts[num] = (
                (False, str(exc)) if num == attributed else (None, "instance invalid")
            )

    try:
        sched = config.schedule.build()
        state["schedule"] = sched
        state["window"] = verify_b_connectivity(sched)
        verdicts[1] = (True, f"window {state['window']} <= claimed B {sched.B}")
    except (NeverConnectedError, InvalidEdgeError, ValueError) as exc:
        verdicts[1] = (False, str(exc))

    if "schedule" in state:
        try:
            state["weights"] = weight_schedule(
                state["schedule"], lazy=config.schedule.lazy
            )
            verdicts[2] = (True, "")
        except ValueError as exc:
            verdicts[2] = (False, str(exc))
    else:
        verdicts[2] = (None, "schedule unavailable")

    if "mrp" in state:
        try:
            state["oracles"] = compute_oracles(state["mrp"], state["feats"])
            radius = (
                config.projection_radius
                if config.projection_radius is not None
                else default_projection(state["oracles"].theta_star).radius
            )
            inside = radius >= np.linalg.norm(state["oracles"].theta_star)
            verdicts[6] = (
                inside,
                "" if inside else "projection ball excludes the fixed point",
            )
        except Exception as exc:
            verdicts[6] = (False, str(exc))
    else:
        verdicts[6] = (None, "instance unavailable")

    lines = []
    ok = True
    for num in sorted(_ASSUMPTION_NAMES):
        passed, msg = verdicts[num]
        label = f"assumption {num} ({_ASSUMPTION_NAMES[num]})"
        if passed is None:
            ok = False
            lines.append(f"{label}: NOT EVALUATED - {msg}")
        elif passed:
            lines.append(f"{label}: OK" + (f" ({msg})" if msg else ""))
        else:
            ok = False
            lines.append(f"{label}: VIOLATED - {msg}")
    return lines, ok, state


def cmd_gen(args) -> int:
    config = _load_config(args)
    lines, ok, state = _assumption_report(config)
    for line in lines:
        print(line)
    if not ok:
        print("instance rejected")
        return EXIT_CHECK_FAILURE
    out_dir = Path(args.out or config.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "instance.json"
    save_instance(path, state["mrp"], state["feats"], state["seed"])
    print(f"wrote {path}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load_config(args)
    out_dir = Path(args.out or config.out or "results")
    with warnings.catch_warnings():
        # The warnings land in the printed summary and the report instead.
        warnings.simplefilter("ignore", RuntimeWarning)
        result = run_experiment(config, out_dir=out_dir)
    for w in result.warnings:
        print(f"warning: {w}")
    n_gates = len(result.gates)
    n_pass = sum(g.passed for g in result.gates)
    print(f"replications: {config.replications}, iterations: {config.iterations}")
    print(f"envelope gates passed: {n_pass}/{n_gates}")
    print(
        f"lemma1 path-wise: {'PASS' if result.lemma1_pass else 'FAIL'} "
        f"(max ratio {result.lemma1_max_ratio:.4f})"
    )
    print(
        f"projection-error bound: "
        f"{'PASS' if result.projection_error_pass else 'FAIL'} "
        f"(max ratio {result.projection_error_max_ratio:.4f})"
    )
    print(f"outputs in {out_dir}")
    return EXIT_OK if result.all_passed else EXIT_CHECK_FAILURE


def cmd_bounds(args) -> int:
    config = _load_config(args)
    mrp, feats, _ = config.instance.build()
    oracles = compute_oracles(mrp, feats)
    schedule = config.schedule.build()
    verify_b_connectivity(schedule)
    weights = weight_schedule(schedule, lazy=config.schedule.lazy)
    spectral = spectral_eta(weights, schedule.B)
    proj = (
        ProjectionSet(radius=config.projection_radius)
        if config.projection_radius is not None
        else default_projection(oracles.theta_star)
    )
    theta0s = draw_initializations(
        config.seed, config.replications, mrp.N, feats.K, proj.radius
    )
    moments = init_moments(theta0s, oracles.theta_star)
    constants = compute_constants(mrp, oracles, proj, spectral, moments)
    print(
        json.dumps(
            constants_dict(spectral, oracles, proj, moments, constants, config.plan),
            indent=2,
            sort_keys=True,
        )
    )
    out = args.out or config.out
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        ks = np.arange(
            config.record_every, config.iterations + 1, config.record_every
        )
        theta0_norm = max(float(np.linalg.norm(t0)) for t0 in theta0s)
        write_envelopes_csv(
            out_dir / "envelopes.csv", ks, theta0_norm, constants, config.plan
        )
        print(f"wrote {out_dir / 'envelopes.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = None
    seed = DEFAULT_SEED
    if args.config:
        config = ExperimentConfig.from_file(args.config)
        seed = config.seed
        if config.checks is not None:
            names = list(config.checks)
    if args.seed is not None:
        seed = args.seed
    try:
        results = run_checks(only=args.only, seed=seed, names=names)
    except KeyError as exc:
        print(exc.args[0])
        return EXIT_BAD_CONFIG
    for res in results:
        print(res.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_CHECK_FAILURE


def cmd_report(args) -> int:
    path = Path(args.out or "results") / "report.json"
    if not path.exists():
        print(f"no report at {path}")
        return EXIT_BAD_CONFIG
    doc = json.loads(path.read_text())
    print(f"report: {path}")
    print("constants:")
    for key, val in sorted(doc["constants"].items()):
        print(f"  {key} = {val}")
    gates = doc.get("gates", [])
    if gates:
        print("gates (mean + 2 SE vs envelope):")
        print(f"  {'name':<24}{'k':>8}{'agent':>6}{'mean':>14}{'envelope':>14}  pass")
        for g in gates:
            print(
                f"  {g['name']:<24}{g['k']:>8}{g['agent']:>6}"
                f"{g['mean']:>14.4e}{g['envelope']:>14.4e}  {g['pass']}"
            )
    print(f"lemma1 path-wise pass: {doc['lemma1_pathwise']['pass']}")
    print(f"projection-error pass: {doc['projection_error']['pass']}")
    for w in doc.get("warnings", []):
        print(f"warning: {w}")
    print(f"all passed: {doc['all_passed']}")
    return EXIT_OK if doc["all_passed"] else EXIT_CHECK_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consensus-td",
        description=(
            "Distributed consensus-based TD(0) simulator and finite-time "
            "bound verification harness"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_replications=True):
        p.add_argument("--config", type=str, default=None, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", type=str, default=None, help="output directory")
        if with_replications:
            p.add_argument(
                "--replications", type=int, default=None, help="replication count"
            )

    p_gen = sub.add_parser("gen", help="generate and validate an instance")
    common(p_gen)
    p_gen.set_defaults(fn=cmd_gen)

    p_run = sub.add_parser("run", help="run an experiment")
    common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_bounds = sub.add_parser("bounds", help="print constants, write envelopes")
    common(p_bounds)
    p_bounds.set_defaults(fn=cmd_bounds)

    p_verify = sub.add_parser("verify", help="run the verification suite")
    p_verify.add_argument("--config", type=str, default=None, help="JSON config path")
    p_verify.add_argument("--only", type=str, default=None, choices=sorted(CHECKS))
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.set_defaults(fn=cmd_verify)

    p_report = sub.add_parser("report", help="pretty-print a run report")
    p_report.add_argument("--out", type=str, default=None, help="run directory")
    p_report.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (ConsensusTDError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILURE


if __name__ == "__main__":
    sys.exit(main())
