"""Command-line interface.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels
from .baselines import LmseWeights, mean_predict_dataset, train_lmse
from .channel_sim import (
    PLANES,
    build_interpolation_dataset,
    generate_channel,
    normalize,
    read_manifest,
    split_even,
    write_manifest,
)
from .elm_models import draw_hidden_layer, hidden_matrix, load_model, predict_batch, save_model
from .harness import (
    ConfigError,
    ExperimentConfig,
    ExperimentReport,
    StageError,
    assemble_data,
    canonical_method,
    complex_mse,
    count_mults,
    environment,
    grid_search,
    run_experiment,
    write_predictions,
)
from .io import load_tensor, read_json, save_tensor, write_json
from .linalg import NumericalError
from .tucker import decompose_samples, hooi, hosvd

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
BENCH_DEFAULTS = {"N": 4104, "L": 1080, "shape": (64, 3, 4), "ranks": (64, 2, 2)}


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _opt(args, name):
    return getattr(args, name, None)


def load_config(path, args) -> ExperimentConfig:
    """Config from a JSON file (or defaults) with global CLI flags applied on top."""
    d = read_json(path) if path else {}
    if not isinstance(d, dict):
        raise ConfigError("config file must hold a JSON object")
    for key in ("seed", "workers", "window_mode"):
        value = _opt(args, key)
        if value is not None:
            d[key] = value
    if _opt(args, "out"):
        d["output_dir"] = str(args.out)
    return ExperimentConfig.from_dict(d)


def _load_data(data_dir, cfg: ExperimentConfig):
    splits, stats, meta = read_manifest(data_dir)
    return assemble_data(cfg, None, stats, splits["train"], splits["test"]), meta


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    cfg = load_config(args.config, args)
    out = Path(_opt(args, "out") or "data")
    raw = generate_channel(cfg.channel, cfg.seed)
    grid, stats = normalize(raw)
    real_ds, imag_ds = build_interpolation_dataset(grid, cfg.window, cfg.window_mode)
    splits = {"train": {}, "test": {}}
    for ds in (real_ds, imag_ds):
        splits["train"][ds.plane], splits["test"][ds.plane] = split_even(ds, cfg.seed)
    save_tensor(out / "channel", raw.responses)
    cfg.output_dir = None
    write_json(out / "config.json", cfg.to_dict())
    write_manifest(out, splits, stats, {"seed": cfg.seed, "window": cfg.window,
                                        "window_mode": cfg.window_mode})
    n_train, n_test = len(splits["train"]["real"]), len(splits["test"]["real"])
    print(f"wrote channel {raw.shape} and {n_train}/{n_test} train/test windows to {out}")
    return EXIT_OK


def cmd_decompose(args) -> int:
    a = load_tensor(args.input)
    if np.iscomplexobj(a):
        raise ConfigError("decompose expects a real tensor")
    ranks = tuple(args.ranks)
    out = Path(_opt(args, "out") or Path(args.input).with_suffix("").name + "_tucker")
    report = {"input_shape": list(a.shape), "method": args.method}
    t0 = time.perf_counter()
    if len(ranks) == a.ndim - 1:
        # trailing mode indexes samples and keeps an identity factor
        dec = decompose_samples(np.moveaxis(a, -1, 0), ranks, method=args.method)
        core, factors, fit = np.moveaxis(dec.cores, 0, -1), dec.factors, dec.fit
        report["sample_mode"] = a.ndim - 1
    elif len(ranks) == a.ndim:
        T = hooi(a, ranks) if args.method == "hooi" else hosvd(a, ranks)
        core, factors, fit = T.core.data, T.factors, T.fit
        report["fit_history"] = T.fit_history
    else:
        raise ConfigError(f"{len(ranks)} ranks for an order-{a.ndim} tensor")
    report["decomposition_time"] = time.perf_counter() - t0
    save_tensor(out / "core", core)
    for k, B in enumerate(factors):
        save_tensor(out / f"factor_{k}", B)
    report.update(ranks=list(ranks), core_shape=list(core.shape), fit=fit)
    write_json(out / "fit.json", report)
    print(f"core {tuple(core.shape)}, fit {fit:.6f} -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config or _data_config(args.data), args)
    method = canonical_method(args.method)
    if args.hidden:
        cfg.hidden_sizes = list(args.hidden)
    if args.ranks:
        cfg.rank_grid = [list(args.ranks)]
    cfg.methods = [method]
    cfg.validate()
    data, _ = _load_data(args.data, cfg)
    out = Path(_opt(args, "out") or "model")
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"method": method, "config": cfg.to_dict()}
    if method == "LMSE":
        for p in PLANES:
            w = train_lmse(data.train[p])
            save_tensor(out / f"lmse_{p}", w.weights)
    elif method != "Mean":
        res = grid_search(cfg, method, data)
        for p in PLANES:
            save_model(res.models[p], out / p)
        manifest.update(L=res.best["L"], ranks=res.best["ranks"], val_mse=res.best["val_mse"],
                        seed=res.best["seed"], grid=res.cells)
    write_json(out / "model.json", manifest)
    print(f"trained {method} -> {out}")
    return EXIT_OK


def _data_config(data_dir):
    path = Path(data_dir) / "config.json"
    return path if path.exists() else None


def _predict(model_dir: Path, method: str, datasets: dict) -> dict:
    if method == "Mean":
        return {p: mean_predict_dataset(datasets[p]) for p in PLANES}
    if method == "LMSE":
        return {p: LmseWeights(load_tensor(model_dir / f"lmse_{p}"), None, (), p).predict(datasets[p])
                for p in PLANES}
    return {p: predict_batch(load_model(model_dir / p), datasets[p].features) for p in PLANES}


def cmd_evaluate(args) -> int:
    model_dir = Path(args.model)
    manifest = read_json(model_dir / "model.json")
    splits, _, _ = read_manifest(args.data)
    if args.split not in splits:
        raise ConfigError(f"dataset has no split {args.split!r}")
    datasets = splits[args.split]
    method = manifest["method"]
    preds = _predict(model_dir, method, datasets)
    mse = complex_mse(preds, datasets)
    report = ExperimentReport({"model": str(model_dir), "data": str(args.data)},
                              {method: {"test_mse": mse}}, environment(),
                              {method: preds}, datasets)
    out = Path(_opt(args, "out") or model_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_predictions(out / "predictions.csv", report.prediction_rows())
    write_json(out / "metrics.json", {"method": method, "split": args.split, "mse": mse,
                                      "planes": {p: float(np.mean((preds[p] - datasets[p].labels) ** 2))
                                                 for p in PLANES}})
    print(f"{method} {args.split} MSE {mse:.6g}")
    return EXIT_OK


def cmd_gridsearch(args) -> int:
    cfg = load_config(args.config, args)
    if not cfg.output_dir:
        cfg.output_dir = "results"
    report = run_experiment(cfg)
    sys.stdout.write(report.table())
    return EXIT_OK


def _time_hidden(batch, layer, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        hidden_matrix(batch, layer)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_cells(args):
    """(N, L, shape, ranks) cells for ``bench``: one per config cell or the defaults."""
    if args.config:
        cfg = load_config(args.config, args)
        n_train = -(-len(build_interpolation_dataset(
            normalize(generate_channel(cfg.channel, cfg.seed))[0], cfg.window, cfg.window_mode)[0]) // 2)
        return [(n_train, int(L), cfg.sample_shape, tuple(r))
                for L in cfg.hidden_sizes for r in cfg.rank_grid]
    d = BENCH_DEFAULTS
    return [(args.n or d["N"], args.hidden or d["L"], tuple(args.shape or d["shape"]),
             tuple(args.ranks or d["ranks"]))]


def cmd_bench(args) -> int:
    rng = np.random.default_rng(_opt(args, "seed") or 0)
    rows = []
    for N, L, shape, ranks in bench_cells(args):
        if len(ranks) != len(shape) or any(not 1 <= r <= s for r, s in zip(ranks, shape)):
            raise ConfigError(f"ranks {ranks} do not fit shape {shape}")
        full = rng.standard_normal((N, *shape))
        cores = rng.standard_normal((N, *ranks))
        row = {
            "N": N, "L": L, "shape": list(shape), "ranks": list(ranks),
            "mults_telm": count_mults("TELM", N, L, shape),
            "mults_tdelm": count_mults("TDELM", N, L, shape, ranks),
        }
        row["mult_reduction"] = 1.0 - row["mults_tdelm"] / row["mults_telm"]
        layer_full = draw_hidden_layer(shape, L, rng)
        layer_core = draw_hidden_layer(ranks, L, rng)
        for name in kernels.available_backends():
            with kernels.use_backend(name):
                row[f"telm_{name}_time"] = _time_hidden(full, layer_full, args.repeats)
                row[f"tdelm_{name}_time"] = _time_hidden(cores, layer_core, args.repeats)
        rows.append(row)
        print(f"N={N} L={L} shape={tuple(shape)} ranks={tuple(ranks)} "
              f"mults {row['mults_telm']} -> {row['mults_tdelm']} "
              f"({100 * row['mult_reduction']:.1f}% fewer)")
        for name in kernels.available_backends():
            print(f"  {name:>7}: TELM {row[f'telm_{name}_time']:.4f}s  "
                  f"TDELM {row[f'tdelm_{name}_time']:.4f}s")
    if _opt(args, "out"):
        write_json(Path(args.out) / "bench.json", {"cells": rows, "environment": environment()})
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a flag given before the subcommand from being reset after it
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS,
                        help="base seed (unsigned 64-bit)")
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="parallel workers")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--window-mode", dest="window_mode", choices=("pilot", "consecutive"),
                        default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="tdelm", parents=[common],
                                     description="Tensor and Tucker-decomposed ELMs for "
                                                 "channel interpolation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a channel and window datasets")
    p.add_argument("--config", type=Path)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("decompose", parents=[common], help="Tucker-decompose a tensor file")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--ranks", type=_int_list, required=True)
    p.add_argument("--method", choices=("hooi", "hosvd"), default="hooi")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("train", parents=[common], help="train one method on a generated dataset")
    p.add_argument("--method", required=True,
                   help="tdelm, telm, elm, nn, tdnn, mean or lmse")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--config", type=Path)
    p.add_argument("--hidden", type=_int_list, help="hidden sizes to search")
    p.add_argument("--ranks", type=_int_list, help="a single rank tuple")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score a trained model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gridsearch", parents=[common], help="run the full experiment protocol")
    p.add_argument("--config", type=Path)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("bench", parents=[common], help="multiplication counts and kernel timings")
    p.add_argument("--config", type=Path)
    p.add_argument("--n", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--shape", type=_int_list)
    p.add_argument("--ranks", type=_int_list)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.original
    if isinstance(exc, (NumericalError, np.linalg.LinAlgError, FloatingPointError)):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ArithmeticError, StageError, OSError, KeyError,
            json.JSONDecodeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
