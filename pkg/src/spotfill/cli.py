"""Command-line surface: dataset generation, training, evaluation, completion,
gradient checking, and ablation sweeps.

Exit codes: 0 ok, 1 usage error, 2 data/config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import (
    ConfigError,
    RunConfig,
    apply_setting,
    config_from_entries,
    load_config,
    strip_config_entries,
)
from .data import KINDS, PlyParseError, load_dataset, make_dataset, read_ply, save_dataset, write_ply
from .geometry import GeometryError, PointCloud, normalize_to_unit_sphere
from .network import CompletionModel, micro_config
from .tensor import NumericsError, load_checkpoint
from .train import eval_states, prepare_states, run_ablation, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def _load_run(args) -> RunConfig:
    run = load_config(args.config) if args.config else RunConfig()
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        apply_setting(run, key.strip(), value.strip())
    run.validate()
    return run


def cmd_gen(args) -> int:
    kinds = tuple(k.strip() for k in args.kinds.split(",")) if args.kinds else KINDS
    samples = make_dataset(args.count, kinds=kinds, seed=args.seed,
                           input_n=args.input_n, out_n=args.out_n)
    save_dataset(args.out, samples)
    print(f"wrote {len(samples)} samples ({', '.join(kinds)}) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    run = _load_run(args)
    if args.dataset:
        run.dataset = args.dataset
    if not run.dataset:
        raise ConfigError("no dataset path (set 'dataset=' in the config or pass --dataset)")
    samples = load_dataset(run.dataset)
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "train_log.csv")
    with open(log_path, "w") as log_fh:
        result = train(run, samples, out_dir=args.out, log_streams=[log_fh])
    stats = result.final_val
    print(f"done: held-out cd_sq={stats['cd_sq']:.6f} cd_norm={stats['cd_norm']:.6f} "
          f"(checkpoints and {os.path.basename(log_path)} in {args.out})")
    return EXIT_OK


def _model_from_checkpoint(path: str) -> tuple[CompletionModel, RunConfig]:
    state = load_checkpoint(path)
    run = config_from_entries(state)
    run.model.validate()
    model = CompletionModel(run.model, seed=run.seed)
    model.load_state(strip_config_entries(state))
    return model, run


def cmd_eval(args) -> int:
    model, run = _model_from_checkpoint(args.checkpoint)
    samples = load_dataset(args.dataset)
    states = prepare_states(samples, run)
    stats = eval_states(model, states)
    kinds = sorted(stats["per_kind"])
    metric = "cd_sq" if run.model.cd_squared else "cd_norm"
    header = " ".join(f"{k:>12}" for k in kinds + ["Avg."])
    values = " ".join(f"{stats['per_kind'][k][metric] * 1e4:12.2f}" for k in kinds)
    print(f"mean {metric} x 1e4 over {stats['count']} samples")
    print(header)
    print(f"{values} {stats[metric] * 1e4:12.2f}")
    return EXIT_OK


def cmd_complete(args) -> int:
    model, _ = _model_from_checkpoint(args.checkpoint)
    partial = read_ply(args.infile)
    normalized, center, scale = normalize_to_unit_sphere(partial)
    out = model.forward(normalized.xyz)
    restored = out["fine"].data * scale + center
    write_ply(PointCloud(restored), args.out)
    print(f"completed {partial.n} -> {restored.shape[0]} points: {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import model_gradient_suite, op_gradient_suite

    cfg = _load_run(args).model if args.config else micro_config()
    op_results = op_gradient_suite(tol=args.tol)
    model_results = model_gradient_suite(cfg, tol=args.tol, entries_per_leaf=2)
    failed = 0
    for res in op_results + model_results:
        status = "ok" if res.ok else "FAIL"
        if not res.ok or args.verbose:
            print(f"[{status}] {res.name}: max rel err {res.max_err:.3e} (tol {res.tol:g})")
        failed += 0 if res.ok else 1
    checked = len(op_results) + len(model_results)
    print(f"gradcheck: {checked - failed}/{checked} checks passed at tol {args.tol:g}")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def cmd_ablate(args) -> int:
    run = _load_run(args)
    if args.dataset:
        run.dataset = args.dataset
    if not run.dataset:
        raise ConfigError("no dataset path (set 'dataset=' in the config or pass --dataset)")
    samples = load_dataset(run.dataset)
    rows = run_ablation(args.axis, run, samples)
    width = max(len(r["variant"]) for r in rows)
    print(f"{'variant':<{width}}  {'cd_sq x1e4':>12}  {'cd_norm x1e4':>12}")
    for r in rows:
        print(f"{r['variant']:<{width}}  {r['cd_sq'] * 1e4:12.2f}  {r['cd_norm'] * 1e4:12.2f}")
    best = min(rows, key=lambda r: r["cd_sq"])
    print(f"best: {best['variant']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spotfill",
                                     description="point cloud completion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--kinds", default="", help="comma list, default all four")
    p.add_argument("--input-n", type=int, default=512, dest="input_n")
    p.add_argument("--out-n", type=int, default=2048, dest="out_n")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dataset", default=None, help="override config dataset path")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("complete", help="complete one partial cloud")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="infile", required=True, metavar="PARTIAL.ply")
    p.add_argument("--out", required=True, metavar="COMPLETE.ply")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--config", default=None, help="model config (default: micro)")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train an ablation grid")
    p.add_argument("--config", default=None)
    p.add_argument("--axis", required=True, choices=["pla", "pdma", "dense", "nsample"])
    p.add_argument("--dataset", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, PlyParseError, GeometryError, FileNotFoundError,
            KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
