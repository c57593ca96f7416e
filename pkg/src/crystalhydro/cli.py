"""Command line entry point.

Exit codes: 0 on success, 2 when an acceptance check fails, 1 on error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .experiment import ExperimentConfig, published_values_pass, run_experiment, verify_published_values
from .harmonic import realize
from .lattice import catalog_names, load_lattice

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

STAGES = {
    "simulate": ("harmonic", "simulate"),
    "pde": ("harmonic", "pde"),
    "compare": ("harmonic", "simulate", "pde", "compare", "replacement"),
    "replacement-diagnostic": ("harmonic", "simulate", "replacement"),
}


def _emit(payload: str, out: str | None) -> None:
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(payload)
        print(f"wrote {path}")
    else:
        print(payload, end="")


def _cmd_solve_harmonic(args) -> int:
    real = realize(load_lattice(args.lattice))
    _emit(json.dumps(real.report(), indent=2) + "\n", args.out)
    return EXIT_OK


def _cmd_diffusion(args) -> int:
    real = realize(load_lattice(args.lattice))
    rep = real.report()
    lines = [
        f"lattice      {rep['lattice']}",
        f"harmonic     {rep['harmonic']}",
        f"D            {rep['diffusion']}",
        f"D (lattice)  {np.array2string(real.lattice_diffusion, precision=12)}",
        f"drift 2D     {np.array2string(2 * real.diffusion, precision=12)}",
    ]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _cmd_verify_published(args) -> int:
    entries = verify_published_values()
    _emit("".join(e.line() + "\n" for e in entries), args.out)
    return EXIT_OK if published_values_pass(entries) else EXIT_FAIL


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config).with_overrides(
        master_seed=args.seed, replicas=args.replicas, output=args.out
    )
    res = run_experiment(cfg, out=args.out, workers=args.workers, stages=STAGES[args.command])
    for c in res.checks:
        print(c.line())
    print(f"results in {res.out} (experiment {cfg.hash()})")
    if res.failed_stage:
        print(f"error: stage {res.failed_stage!r} failed: {res.message}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK if res.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--replicas", type=int, default=None, help="replica count (overrides the config)")
    common.add_argument("--out", default=None, help="output directory or file")
    common.add_argument("--workers", type=int, default=1, help="worker processes for replicas")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="crystalhydro", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    names = ", ".join(catalog_names())
    s = sub.add_parser("solve-harmonic", parents=[common], help="harmonic realization report (JSON)")
    s.add_argument("lattice", help=f"catalog name ({names}) or lattice file")
    s.set_defaults(func=_cmd_solve_harmonic)
    s = sub.add_parser("diffusion", parents=[common], help="diffusion matrix of a lattice")
    s.add_argument("lattice", help=f"catalog name ({names}) or lattice file")
    s.set_defaults(func=_cmd_diffusion)
    for cmd, text in (
        ("simulate", "replicated exclusion simulations"),
        ("pde", "solve the limit equation"),
        ("compare", "simulations against the PDE, with acceptance checks"),
        ("replacement-diagnostic", "replacement diagnostic across N"),
    ):
        s = sub.add_parser(cmd, parents=[common], help=text)
        s.add_argument("config", help="experiment YAML file")
        s.set_defaults(func=_cmd_run)
    s = sub.add_parser("verify-paper", parents=[common], help="recompute the published exact values")
    s.set_defaults(func=_cmd_verify_published)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        if args.verbose:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
