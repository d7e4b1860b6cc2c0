"""Command line entry point: ``bayesklms {run,scan,generate,snapshot}``.

Exit codes: 0 success, 1 at least one repeat failed numerically,
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys

import numpy as np

from . import datagen
from .filters import link, predict_score
from .harness.config import FULL_GP_REPEATS, ConfigError, load_config
from .harness.runner import ScanSpec, run_experiment, run_scan
from .harness.snapshot import load_snapshot
from .scalar_opt import NumericalFailure

log = logging.getLogger("bayesklms")

GENERATORS = {
    "gp_tracking": (datagen.GpStreamConfig, datagen.gp_stream),
    "poisson_tuning": (datagen.TuningStreamConfig, datagen.tuning_stream),
    "logistic_boundary": (datagen.BoundaryStreamConfig, datagen.boundary_stream),
    "steady_state": (datagen.RandomWalkConfig, datagen.random_walk_stream),
}


def _parse_values(text: str) -> list:
    values = []
    for tok in text.split(","):
        tok = tok.strip()
        try:
            values.append(json.loads(tok))
        except json.JSONDecodeError:
            raise ConfigError(f"cannot parse scan value {tok!r}") from None
    return values


def _overrides(cfg, args):
    changes = {}
    if getattr(args, "repeats", None) is not None:
        changes["repeats"] = args.repeats
    if getattr(args, "full", False) and cfg.scenario == "gp_tracking":
        changes["repeats"] = FULL_GP_REPEATS
    if getattr(args, "seed", None) is not None:
        changes["base_seed"] = args.seed
    if getattr(args, "out", None) is not None:
        changes["output"] = args.out
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return dataclasses.replace(cfg, **changes)


def cmd_run(args) -> int:
    cfg = _overrides(load_config(args.config), args)
    result = run_experiment(cfg)
    s = result.summary
    print(f"{s['run_id']} {s['algorithm']}: nmse {s['nmse_db']:.4f} dB, "
          f"asymptotic {s['asymptotic_nmse_db']:.4f} dB over {s['repeats']} repeats")
    for r in result.repeats:
        if r.error:
            log.error("repeat %d failed: %s", r.repeat, r.error)
    return 1 if result.failed else 0


def cmd_scan(args) -> int:
    cfg = _overrides(load_config(args.config), args)
    res = run_scan(cfg, ScanSpec(args.param, _parse_values(args.values)))
    for v, s in res.rows:
        mark = "*" if v == res.best else " "
        print(f"{mark} {args.param}={v}: nmse {s['nmse_db']:.4f} dB, "
              f"asymptotic {s['asymptotic_nmse_db']:.4f} dB")
    print(f"best {args.param} = {res.best}")
    return 1 if any(s["failed_repeats"] for _, s in res.rows) else 0


def cmd_generate(args) -> int:
    cfg_cls, gen = GENERATORS[args.scenario]
    kwargs = {"seed": args.seed}
    if args.n is not None:
        kwargs["n"] = args.n
    gen(cfg_cls(**kwargs)).to_csv(args.out)
    return 0


def cmd_snapshot(args) -> int:
    state = load_snapshot(args.inp)
    with open(args.probe, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{args.probe}: empty probe file")
    header, body = rows[0], rows[1:]
    try:
        X = np.array([[float(v) for v in row] for row in body], dtype=float).reshape(len(body), -1)
    except ValueError as exc:
        raise ConfigError(f"{args.probe}: {exc}") from None
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow([*header, "score", "mean"])
        for row, x in zip(body, X):
            s = predict_score(state, x)
            w.writerow([*row, repr(s), repr(link(state.model, s))])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bayesklms", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--repeats", type=int)
    r.add_argument("--seed", type=int, help="base seed; repeat r uses seed + r")
    r.add_argument("--out", help="output directory")
    r.add_argument("--workers", type=int)
    r.add_argument("--full", action="store_true",
                   help=f"use the full {FULL_GP_REPEATS} repeats for gp_tracking")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("scan", help="grid-scan one parameter")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma separated, e.g. 0.1,0.3,1")
    s.add_argument("--repeats", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_scan)

    g = sub.add_parser("generate", help="export a synthetic stream as CSV")
    g.add_argument("--scenario", required=True, choices=sorted(GENERATORS))
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int)
    g.set_defaults(func=cmd_generate)

    n = sub.add_parser("snapshot", help="dump predictions of a saved filter")
    n.add_argument("--in", dest="inp", required=True)
    n.add_argument("--probe", required=True, help="CSV with columns x_0..x_{d-1}")
    n.add_argument("--out")
    n.set_defaults(func=cmd_snapshot)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalFailure as exc:
        log.error("%s", exc)
        return 1
    except (ValueError, OSError) as exc:
        # ConfigError and SnapshotError are ValueErrors
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
