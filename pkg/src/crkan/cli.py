"""Command-line interface.

Subcommands: train, evaluate, fractal, lyapunov, symbolic, ablate, noise,
transfer, reproduce-all.  Every command is deterministic given its flags and
seed, writes artifacts into a hash-named directory under --out, and exits 0
on success or 1 with a single-line error.

A config file (--config) holds flat ``key = value`` lines using the same
names as the long flags (underscores for dashes); explicit flags win.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

from . import experiments as exp
from .errors import CrkanError
from .io import parse_config_file
from .systems import SystemId
from .training import TrainConfig

SYSTEM_CHOICES = [s.value for s in SystemId]

TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
CONFIG_KEYS = TRAIN_KEYS | {"system", "model", "out", "hidden", "grid_size", "order",
                            "c_re", "c_im"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crkan",
        description="Learn holomorphic velocity fields with spline-edge networks, "
                    "extract symbolic families, and analyze the resulting dynamics.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, system_required=False):
        p.add_argument("--seed", type=int, default=None, help="PRNG seed (default 42)")
        p.add_argument("--out", default=None, help="output directory (default ./runs)")
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--system", choices=SYSTEM_CHOICES, required=system_required,
                       default=None)

    t = sub.add_parser("train", help="train a model on one system")
    common(t)
    t.add_argument("--model", choices=["kan", "mlp"], default=None)
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--learning-rate", type=float, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--lambda-max", type=float, default=None)
    t.add_argument("--warmup-steps", type=int, default=None)
    t.add_argument("--clip-norm", type=float, default=None)
    t.add_argument("--patience", type=int, default=None)
    t.add_argument("--noise-level", type=float, default=None)
    t.add_argument("--hidden", type=int, default=None)
    t.add_argument("--grid-size", type=int, default=None)
    t.add_argument("--order", type=int, default=None)
    t.add_argument("--c-re", type=float, default=None)
    t.add_argument("--c-im", type=float, default=None)

    e = sub.add_parser("evaluate", help="field accuracy and CR residual of a checkpoint")
    common(e)
    e.add_argument("--checkpoint", default=None)
    e.add_argument("--self-check", action="store_true",
                   help="evaluate the analytic field against itself")

    f = sub.add_parser("fractal", help="escape-time masks and boundary agreement")
    common(f, system_required=True)
    f.add_argument("--checkpoint", default=None)
    f.add_argument("--analytic", action="store_true",
                   help="compare the analytic field against itself")
    f.add_argument("--extent", type=float, default=1.5)
    f.add_argument("--resolution", type=int, default=200)
    f.add_argument("--max-iter", type=int, default=50)
    f.add_argument("--bailout", type=float, default=2.0)
    f.add_argument("--mode", choices=["direct", "euler"], default="direct")

    ly = sub.add_parser("lyapunov", help="Lyapunov exponent grid of the learned map")
    common(ly)
    ly.add_argument("--checkpoint", default=None)
    ly.add_argument("--analytic", action="store_true")
    ly.add_argument("--extent", type=float, default=1.5)
    ly.add_argument("--resolution", type=int, default=200)
    ly.add_argument("--iterations", type=int, default=50)
    ly.add_argument("--delta0", type=float, default=1e-8)
    ly.add_argument("--dt", type=float, default=1.0)
    ly.add_argument("--bailout", type=float, default=10.0)

    sy = sub.add_parser("symbolic", help="fit spline edges to the candidate library")
    common(sy)
    sy.add_argument("--checkpoint", required=True)

    ab = sub.add_parser("ablate", help="hyperparameter sweeps on the quadratic system")
    common(ab)
    ab.add_argument("--kind", choices=["cr", "grid", "width"], required=True)
    ab.add_argument("--steps", type=int, default=None)

    sub_noise = sub.add_parser("noise", help="noise robustness of KAN vs MLP")
    common(sub_noise)

    tr = sub.add_parser("transfer", help="fine-tune across systems vs from scratch")
    common(tr)
    tr.add_argument("--source", choices=SYSTEM_CHOICES, default="quadratic")
    tr.add_argument("--target", choices=SYSTEM_CHOICES, default="cubic")
    tr.add_argument("--steps", type=int, default=None)

    ra = sub.add_parser("reproduce-all", help="run every report into one directory")
    common(ra)
    return parser


def _merged(args: argparse.Namespace) -> dict:
    """CLI flags override config-file values, which override defaults."""
    file_vals: dict[str, str] = {}
    if getattr(args, "config", None):
        file_vals = parse_config_file(args.config, CONFIG_KEYS)

    def pick(name: str, default, cast):
        cli = getattr(args, name, None)
        if cli is not None and cli is not False:
            return cli
        if name in file_vals:
            return cast(file_vals[name])
        return default

    merged = {
        "seed": pick("seed", 42, int),
        "out": pick("out", "runs", str),
        "system": pick("system", None, str),
        "model": pick("model", "kan", str),
        "hidden": pick("hidden", 5, int),
        "grid_size": pick("grid_size", 5, int),
        "order": pick("order", 3, int),
    }
    defaults = TrainConfig()
    train_kwargs = {}
    for f in fields(TrainConfig):
        cast = type(getattr(defaults, f.name))
        train_kwargs[f.name] = pick(f.name, getattr(defaults, f.name), cast)
    train_kwargs["seed"] = merged["seed"]
    merged["train_config"] = TrainConfig(**train_kwargs)
    c_re = pick("c_re", None, float)
    c_im = pick("c_im", None, float)
    merged["c"] = complex(c_re, c_im) if c_re is not None or c_im is not None else None
    if merged["c"] is not None:
        merged["c"] = complex(c_re if c_re is not None else -0.4,
                              c_im if c_im is not None else 0.6)
    return merged


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        m = _merged(args)
        cmd = args.command
        if cmd == "train":
            if m["system"] is None:
                raise ValueError("train needs --system")
            run = exp.run_train(m["system"], m["model"], m["train_config"], m["out"],
                                c=m["c"], hidden=m["hidden"], grid_size=m["grid_size"],
                                order=m["order"])
            print(f"checkpoint: {run.checkpoint}")
            print(f"history:    {run.history_csv}")
        elif cmd == "evaluate":
            table = exp.run_evaluate(args.checkpoint, m["system"], m["out"],
                                     self_check=args.self_check)
            for row in table.rows:
                print(" ".join(f"{c}={v}" for c, v in zip(table.columns, row)))
        elif cmd == "fractal":
            agreement = exp.run_fractal(args.checkpoint, m["system"], m["out"],
                                        extent=args.extent, resolution=args.resolution,
                                        max_iter=args.max_iter, bailout=args.bailout,
                                        mode=args.mode, analytic=args.analytic)
            print(f"boundary agreement: {agreement:.2f}%")
        elif cmd == "lyapunov":
            table = exp.run_lyapunov(args.checkpoint, m["system"], m["out"],
                                     extent=args.extent, resolution=args.resolution,
                                     iterations=args.iterations, delta0=args.delta0,
                                     dt=args.dt, bailout=args.bailout,
                                     analytic=args.analytic)
            for row in table.rows:
                print(" ".join(f"{c}={v}" for c, v in zip(table.columns, row)))
        elif cmd == "symbolic":
            table = exp.run_symbolic(args.checkpoint, m["out"], system=m["system"])
            for row in table.rows:
                print(" ".join(f"{c}={v}" for c, v in zip(table.columns, row)))
        elif cmd == "ablate":
            cfg = m["train_config"]
            if args.steps is not None:
                from dataclasses import replace
                cfg = replace(cfg, steps=args.steps,
                              patience=min(cfg.patience, args.steps))
            table = exp.run_ablate(args.kind, m["out"], cfg)
            print(f"rows: {len(table.rows)} (see sweep.csv)")
        elif cmd == "noise":
            table = exp.run_noise(m["out"], m["train_config"])
            for row in table.rows:
                print(" ".join(f"{c}={v}" for c, v in zip(table.columns, row)))
        elif cmd == "transfer":
            steps = args.steps if args.steps is not None else 100
            table = exp.run_transfer(m["out"], m["train_config"],
                                     source=args.source, target=args.target,
                                     steps=steps)
            for row in table.rows:
                print(" ".join(f"{c}={v}" for c, v in zip(table.columns, row)))
        elif cmd == "reproduce-all":
            directory = exp.run_reproduce_all(m["out"], seed=m["seed"])
            print(f"reports written to {directory}")
        else:  # pragma: no cover - argparse enforces choices
            raise ValueError(f"unknown command {cmd}")
    except (CrkanError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
