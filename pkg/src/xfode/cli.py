"""Command-line entry point: train, simulate, benchmark, export-mfs, gen-data.

Exit codes: 0 success, 1 usage error, 2 runtime error (bad data, divergence,
IO). Worker parallelism for multi-seed benchmarks is capped by the
XFODE_THREADS environment variable (default: available cores).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import evaluation as ev
from .dataset import fit_normalizer, load_csv, normalize, save_csv, split_rows
from .errors import XfodeError
from .fuzzy_models import count_parameters, load_model, save_model
from .rollout import simulate_detailed
from .state_repr import build_states, build_trajectories
from .training import TrainConfig, train


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="xfode", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add_data_flags(p, need_counts=True):
        p.add_argument("--data", required=True, help="CSV record (inputs then outputs)")
        if need_counts:
            p.add_argument("--nu", type=int, required=True, help="input channel count")
            p.add_argument("--ny", type=int, required=True, help="output channel count")

    p_train = sub.add_parser("train", help="fit a model to a record")
    add_data_flags(p_train)
    p_train.add_argument("--train-rows", type=int, default=None,
                         help="use only the first N rows for training")
    p_train.add_argument("--model", choices=["xfode", "afode", "fode"], default="xfode")
    p_train.add_argument("--ps", type=int, choices=[1, 2, 3], default=1,
                         help="partitioning strategy for xfode")
    p_train.add_argument("--sr", type=int, choices=[1, 2], default=2,
                         help="state form: 1 lagged, 2 incremental")
    p_train.add_argument("--m", type=int, default=2, help="lags / difference orders")
    p_train.add_argument("--rules", type=int, default=5)
    p_train.add_argument("--rollout", type=int, default=20)
    p_train.add_argument("--stride", type=int, default=1)
    p_train.add_argument("--epochs", type=int, default=150)
    p_train.add_argument("--mbs", type=int, default=32)
    p_train.add_argument("--lr", type=float, default=1e-3)
    p_train.add_argument("--clip", type=float, default=10.0)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", required=True, help="model JSON path")

    p_sim = sub.add_parser("simulate", help="free-run a trained model over a record")
    p_sim.add_argument("--model", required=True, help="model JSON path")
    p_sim.add_argument("--data", required=True, help="CSV record to simulate")
    p_sim.add_argument("--out", required=True, help="prediction CSV path")
    p_sim.add_argument("--dump-contributions", default=None, metavar="PATH",
                       help="also write per-step per-block update contributions")

    p_bench = sub.add_parser("benchmark", help="multi-seed train/evaluate protocol")
    p_bench.add_argument("--config", required=True, help="experiment config file")
    p_bench.add_argument("--seeds", default=None, help="override: comma-separated seeds")
    p_bench.add_argument("--epochs", type=int, default=None, help="override epochs")
    p_bench.add_argument("--data", default=None, help="override data path")
    p_bench.add_argument("--out", default=None, help="write the JSON report here")

    p_exp = sub.add_parser("export-mfs", help="sample learned membership functions")
    p_exp.add_argument("--model", required=True)
    p_exp.add_argument("--out-dir", required=True)
    p_exp.add_argument("--points", type=int, default=501)

    p_gen = sub.add_parser("gen-data", help="write a synthetic benchmark record")
    p_gen.add_argument("--kind", choices=list(ev.SYNTHETIC_KINDS), required=True)
    p_gen.add_argument("--n", type=int, default=3000, help="sample count")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    return parser


def _cmd_train(args) -> int:
    ds = load_csv(args.data, args.nu, args.ny)
    if args.train_rows is not None:
        ds, _ = split_rows(ds, args.train_rows)
    stats = fit_normalizer(ds)
    ds_n = normalize(ds, stats)
    spec = ev.ExperimentSpec(
        data=args.data, nu=args.nu, ny=args.ny, model=args.model, ps=args.ps,
        sr=args.sr, m=args.m, rules=args.rules, rollout=args.rollout,
        stride=args.stride, epochs=args.epochs, mbs=args.mbs, lr=args.lr,
        clip=args.clip, seeds=[args.seed],
    )
    cfg = spec.state_config
    S = build_trajectories(ds_n, cfg, args.rollout, args.stride)
    states, offset = build_states(ds_n.outputs, cfg)
    domains = ev.fm.data_domains(np.hstack([states, ds_n.inputs[offset:]]))
    model = ev.build_model(spec, domains, np.random.default_rng(args.seed))
    model.norm_stats = stats
    tc = TrainConfig(epochs=args.epochs, mbs=args.mbs, learning_rate=args.lr,
                     rollout=args.rollout, seed=args.seed, gradient_clip=args.clip)
    run = train(model, S, tc)
    model.metadata = {
        "seed": args.seed,
        "epochs": args.epochs,
        "final_loss": float(run.loss_trace[-1]),
        "best_loss": float(run.loss_trace.min()),
        "n_lp": count_parameters(model),
    }
    save_model(model, args.out)
    print(f"trained {args.model} (#LP {count_parameters(model)}), "
          f"best epoch loss {run.loss_trace.min():.6g}, saved to {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    model = load_model(args.model)
    ds = load_csv(args.data, model.n_u, model.n_y)
    if model.norm_stats is None:
        raise XfodeError("model file carries no normalization statistics")
    ds_n = normalize(ds, model.norm_stats)
    res = simulate_detailed(
        model, ds_n, with_contributions=args.dump_contributions is not None
    )
    stats = model.norm_stats
    y_pred = res.outputs * stats.output_std + stats.output_mean
    y_true = ds.outputs[res.offset :]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        n_y = model.n_y
        writer.writerow(
            ["k"]
            + [f"y_true_{j + 1}" for j in range(n_y)]
            + [f"y_pred_{j + 1}" for j in range(n_y)]
        )
        for i in range(y_pred.shape[0]):
            writer.writerow(
                [res.offset + i]
                + [repr(float(v)) for v in y_true[i]]
                + [repr(float(v)) for v in y_pred[i]]
            )
    if args.dump_contributions is not None:
        with open(args.dump_contributions, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["k", "block"] + [f"d_x{o + 1}" for o in range(model.n_x)]
            )
            for k in range(res.contributions.shape[0]):
                for i in range(model.n_z):
                    writer.writerow(
                        [res.offset + k, i + 1]
                        + [repr(float(v)) for v in res.contributions[k, i]]
                    )
    print(f"simulated {y_pred.shape[0]} steps -> {args.out}")
    return 0


def _cmd_benchmark(args) -> int:
    overrides = {"epochs": args.epochs, "data": args.data}
    if args.seeds is not None:
        overrides["seeds"] = [int(s) for s in args.seeds.replace(",", " ").split()]
    spec = ev.load_experiment_spec(args.config, overrides)
    report, _ = ev.benchmark(spec)
    print(report.table())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
        print(f"report written to {args.out}")
    return 0


def _cmd_export(args) -> int:
    model = load_model(args.model)
    written = ev.export_mfs(model, args.out_dir, args.points)
    print(f"wrote {len(written)} files to {args.out_dir}")
    return 0


def _cmd_gen_data(args) -> int:
    ds = ev.generate_synthetic(args.kind, args.n, args.seed)
    save_csv(ds, args.out)
    print(f"wrote {ds.K} samples ({args.kind}, seed {args.seed}) to {args.out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "simulate": _cmd_simulate,
    "benchmark": _cmd_benchmark,
    "export-mfs": _cmd_export,
    "gen-data": _cmd_gen_data,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"error: {err}", file=sys.stderr)
        return 1
    except SystemExit as err:  # --help
        return int(err.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (XfodeError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
