"""Command-line driver for the toy experiments.

Exit codes: 0 on success, 2 on invalid input, 3 when training diverges.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .blocking import recommended_k
from .data import (
    ContaminationSpec,
    Gaussian,
    InlierSpec,
    IsolatedUniform,
    ValidationError,
    generate_sample,
    read_sample_csv,
    toy_dataset,
    write_sample_csv,
)
from .estimators import Estimator
from .exact import exact_w1
from .experiments import (
    DEFAULT_KS,
    EXPERIMENT_TRAINING,
    SweepSpec,
    emit_plots,
    run_convergence,
    run_k_sweep,
    run_rate_trace,
)
from .gan import GanConfig, score_generator, train_momwgan, train_wgan
from .optim import TRAINERS, NumericalDivergence, TrainConfig

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3

GLOBAL_DEFAULTS = {"seed": 0, "out_dir": "results", "repeats": None, "fast": False}
FAST = {"repeats": 3, "epochs": 50}


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return parse


def _global_flags(default):
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=default, help="base seed; all randomness derives from it")
    g.add_argument("--out-dir", default=default, help="directory for CSV and image outputs")
    g.add_argument("--repeats", type=int, default=default, help="number of repeats for experiments")
    g.add_argument("--fast", action="store_true", default=default,
                   help=f"CI mode: {FAST['repeats']} repeats and {FAST['epochs']} epochs unless given")
    return p


def _training_flags(p):
    p.add_argument("--epochs", type=float, default=None, help="passes over the data (default 100)")
    p.add_argument("--lr", type=float, default=EXPERIMENT_TRAINING["lr"])
    p.add_argument("--clip", type=float, default=EXPERIMENT_TRAINING["clip_c"])
    p.add_argument("--hidden", type=int, default=EXPERIMENT_TRAINING["hidden"])


def build_parser():
    sub_common = _global_flags(argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="robust-w1", description=__doc__.splitlines()[0],
                                     parents=[_global_flags(argparse.SUPPRESS)])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[sub_common], help="write a toy sample pair to CSV")
    p.add_argument("--dataset", choices=["D1", "D2"], default="D1")
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--n", type=int, default=500)

    p = sub.add_parser("estimate", parents=[sub_common], help="train one robust critic")
    p.add_argument("--x", help="CSV of the first sample (default: toy dataset)")
    p.add_argument("--y", help="CSV of the second sample")
    p.add_argument("--dataset", choices=["D1", "D2"], default="D1")
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--estimator", choices=[e.value for e in Estimator], default="mou-diag")
    p.add_argument("--k", type=int, default=None, help="blocks per sample (default: recommended for --tau)")
    _training_flags(p)

    p = sub.add_parser("sweep-k", parents=[sub_common], help="error against the number of blocks")
    p.add_argument("--dataset", choices=["D1", "D2"], default="D1")
    p.add_argument("--estimator", choices=["mom", "mou", "mou-diag"], default="mou-diag")
    p.add_argument("--taus", type=_csv_list(float), default=[0.0, 0.05, 0.1])
    p.add_argument("--ks", type=_csv_list(int), default=list(DEFAULT_KS))
    _training_flags(p)

    p = sub.add_parser("convergence", parents=[sub_common], help="objective against epochs per K")
    p.add_argument("--dataset", choices=["D1", "D2"], default="D1")
    p.add_argument("--estimator", choices=["mom", "mou", "mou-diag"], default="mou-diag")
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--ks", type=_csv_list(int), default=[1, 10, 50, 100])
    _training_flags(p)

    p = sub.add_parser("rate-trace", parents=[sub_common], help="median-block exact W1 error against n")
    p.add_argument("--ns", type=_csv_list(int), default=[200, 500, 1000, 2000])
    p.add_argument("--tau", type=float, default=0.1)

    p = sub.add_parser("wgan-toy", parents=[sub_common], help="train MoM-WGAN and WGAN on a 2D toy")
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--k-blocks", type=int, default=4)
    p.add_argument("--batch-size", type=int, default=GanConfig.batch_size)
    p.add_argument("--n-critic", type=int, default=GanConfig.n_critic)
    p.add_argument("--steps", type=int, default=GanConfig.max_generator_steps)
    p.add_argument("--lr", type=float, default=GanConfig.lr)
    p.add_argument("--clip", type=float, default=GanConfig.clip_c)
    p.add_argument("--snapshot-every", type=int, default=0, help="write generated points every N steps")

    p = sub.add_parser("exact", parents=[sub_common], help="exact W1 between two point CSVs")
    p.add_argument("x")
    p.add_argument("y")

    p = sub.add_parser("plot", parents=[sub_common], help="render experiment CSVs as images")
    p.add_argument("csv", nargs="+")
    return parser


def _resolve(args):
    for k, v in GLOBAL_DEFAULTS.items():
        if not hasattr(args, k):
            setattr(args, k, v)
    if args.repeats is None:
        args.repeats = FAST["repeats"] if args.fast else 20
    if hasattr(args, "epochs") and args.epochs is None:
        args.epochs = FAST["epochs"] if args.fast else 100
    args.out_dir = Path(args.out_dir)
    return args


def _training(args):
    return {"lr": args.lr, "clip_c": args.clip, "hidden": args.hidden, "clip_biases": True}


def _out(args, name):
    args.out_dir.mkdir(parents=True, exist_ok=True)
    return args.out_dir / name


def cmd_gen_data(args):
    x, y = toy_dataset(args.dataset, args.tau, n=args.n, seed=args.seed)
    px = write_sample_csv(x, _out(args, f"{args.dataset}_tau{args.tau:g}_seed{args.seed}_x.csv"))
    py = write_sample_csv(y, _out(args, f"{args.dataset}_tau{args.tau:g}_seed{args.seed}_y.csv"))
    print(px)
    print(py)


def cmd_estimate(args):
    if (args.x is None) != (args.y is None):
        raise ValidationError("--x and --y must be given together")
    if args.x is not None:
        x, y = read_sample_csv(args.x), read_sample_csv(args.y)
    else:
        x, y = toy_dataset(args.dataset, args.tau, seed=args.seed)
    k = args.k if args.k is not None else recommended_k(x.n, args.tau)
    cfg = TrainConfig.for_epochs(args.epochs, k, seed=args.seed, **_training(args))
    rep = TRAINERS[Estimator(args.estimator)](x, y, cfg)
    path = rep.to_csv(_out(args, f"estimate_{args.estimator}_k{k}_seed{args.seed}.csv"))
    print(json.dumps({"estimator": args.estimator, "k": k, "final_estimate": rep.final_estimate,
                      "trace": str(path)}))


def _sweep_spec(args, taus):
    return SweepSpec(args.dataset, args.estimator, tuple(taus), tuple(args.ks), args.repeats, args.seed,
                     args.epochs, training=_training(args))


def cmd_sweep_k(args):
    spec = _sweep_spec(args, args.taus)
    stem = f"sweep_{spec.dataset}_{spec.estimator.value}"
    _, summary = run_k_sweep(spec, _out(args, stem + ".csv"), _out(args, stem + "_summary.csv"))
    for row in summary:
        print(f"tau={row['tau']:g} K={row['k']}: mean {row['mean']:.5f} [{row['q25']:.5f}, {row['q75']:.5f}]")


def cmd_convergence(args):
    spec = _sweep_spec(args, [args.tau])
    res = run_convergence(spec, args.tau, _out(args, f"convergence_{spec.dataset}_tau{args.tau:g}.csv"))
    print(f"clean K=1 reference {res.reference:.5f}")
    for k, v in res.plateaus.items():
        print(f"K={k}: plateau {v:.5f} ({v / res.reference:.3f} of reference)")


def cmd_rate_trace(args):
    res = run_rate_trace(args.ns, args.tau, args.repeats, args.seed, _out(args, f"rate_tau{args.tau:g}.csv"))
    for n, e in res.mean_errors.items():
        print(f"n={n}: mean error {e:.5f}")
    print(f"log-log slope {res.slope:.3f}, kendall tau {res.kendall:.3f}")


def cmd_wgan_toy(args):
    inliers = InlierSpec(Gaussian((5.0, 5.0)), args.n)
    box = IsolatedUniform((-50.0, -50.0), (50.0, 50.0))
    data = generate_sample(inliers, ContaminationSpec(box if args.tau > 0 else None, args.tau), seed=args.seed)
    base = dict(batch_size=args.batch_size, n_critic=args.n_critic, lr=args.lr, clip_c=args.clip,
                max_generator_steps=args.steps, seed=args.seed)
    results = {}
    for name, trainer, k in (("momwgan", train_momwgan, args.k_blocks), ("wgan", train_wgan, 1)):
        gen, rep = trainer(data, GanConfig(k_blocks=k, **base), snapshot_every=args.snapshot_every)
        rep.to_csv(_out(args, f"{name}_seed{args.seed}.csv"))
        for step, pts in rep.snapshots.items():
            np.savetxt(_out(args, f"{name}_seed{args.seed}_step{step}.csv"), pts, delimiter=",",
                       header="x0,x1", comments="", fmt="%.17g")
        results[name] = score_generator(gen, data, seed=args.seed)
    print(json.dumps(results))


def cmd_exact(args):
    print(f"{exact_w1(read_sample_csv(args.x).points, read_sample_csv(args.y).points):.17g}")


def cmd_plot(args):
    for path in emit_plots(args.csv, args.out_dir):
        print(path)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "estimate": cmd_estimate,
    "sweep-k": cmd_sweep_k,
    "convergence": cmd_convergence,
    "rate-trace": cmd_rate_trace,
    "wgan-toy": cmd_wgan_toy,
    "exact": cmd_exact,
    "plot": cmd_plot,
}


def main(argv=None):
    args = _resolve(build_parser().parse_args(argv))
    try:
        COMMANDS[args.command](args)
    except NumericalDivergence as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
