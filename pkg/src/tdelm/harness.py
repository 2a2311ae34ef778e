"""Experiment orchestration: data preparation, SelectBest, grid search and reports.

Randomness is derived from ``(base seed, grid-cell index, repeat index)`` via
``numpy.random.SeedSequence``, so results do not depend on worker scheduling.
Selection uses a held-out validation part of the training split only; the
test split is evaluated once, for the selected cell.
"""
from __future__ import annotations

import csv
import itertools
import platform
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import kernels
from .baselines import LmseWeights, mean_predict_dataset, train_lmse, train_slfn_gd
from .channel_sim import (
    PLANES,
    ChannelConfig,
    ChannelGrid,
    NormStats,
    WindowDataset,
    build_interpolation_dataset,
    generate_channel,
    normalize,
    split_even,
)
from .elm_models import (
    WEIGHT_RANGE,
    TrainedModel,
    predict_batch,
    train_elm_vector,
    train_tdelm,
    train_telm,
)
from .io import write_json
from .tucker import decompose_samples

METHODS = ("TDELM", "TELM", "ELM", "TDNN", "NN", "Mean", "LMSE")
ALIASES = {"TD+NN": "TDNN", "TELM/ELM": "TELM"}
ELM_METHODS = ("TDELM", "TELM", "ELM")
GD_METHODS = ("TDNN", "NN")
TENSOR_METHODS = ("TDELM", "TDNN")
SIGNIFICANT_ERROR = 0.3


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class StageError(RuntimeError):
    """Wraps a failure with the name of the experiment stage it happened in."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage
        self.original = exc


def canonical_method(name: str) -> str:
    name = ALIASES.get(name.upper(), name)
    for m in METHODS:
        if name.lower() == m.lower():
            return m
    raise ConfigError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")


@dataclass
class ExperimentConfig:
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    seed: int = 0
    window: int = 4
    window_mode: str = "pilot"
    methods: list = field(default_factory=lambda: ["TDELM", "TELM", "Mean", "LMSE"])
    hidden_sizes: list = field(default_factory=lambda: [20, 40, 80, 120])
    rank_grid: list = field(default_factory=lambda: [[8, 3, 2], [16, 3, 2], [16, 3, 4]])
    repeats: int = 10
    validation_fraction: float = 0.2
    nn_repeats: int = 1
    nn_epochs: int = 2000
    nn_step: float = 0.01
    weight_range: list | str = "auto"
    decomposition: str = "hooi"
    workers: int = 1
    timing_repeats: int = 3
    output_dir: str | None = None

    def validate(self) -> "ExperimentConfig":
        self.methods = [canonical_method(m) for m in self.methods]
        if not self.methods:
            raise ConfigError("at least one method is required")
        if self.repeats < 1 or self.nn_repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not self.hidden_sizes or any(int(h) < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden sizes must be a non-empty list of positive integers")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if self.window <= 0 or self.window % 2:
            raise ConfigError("window must be even and positive")
        if self.window_mode not in ("pilot", "consecutive"):
            raise ConfigError(f"unknown window mode {self.window_mode!r}")
        if self.decomposition not in ("hosvd", "hooi"):
            raise ConfigError(f"unknown decomposition {self.decomposition!r}")
        if self.weight_range != "auto":
            lo, hi = map(float, self.weight_range)
            if not lo < hi:
                raise ConfigError("weight_range must be 'auto' or [low, high] with low < high")
            self.weight_range = [lo, hi]
        if self.workers < 1 or self.timing_repeats < 1:
            raise ConfigError("workers and timing_repeats must be >= 1")
        shape = self.sample_shape
        if any(m in TENSOR_METHODS for m in self.methods):
            if not self.rank_grid:
                raise ConfigError("rank_grid must be non-empty for Tucker methods")
            for r in self.rank_grid:
                if len(r) != len(shape) or any(not 1 <= int(a) <= b for a, b in zip(r, shape)):
                    raise ConfigError(f"ranks {list(r)} do not fit sample shape {list(shape)}")
        self.channel.validate()
        return self

    @property
    def sample_shape(self) -> tuple[int, int, int]:
        return (self.channel.n_tx, self.channel.n_rx, self.window)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            d["channel"] = ChannelConfig.from_dict(d.get("channel", {}))
            return cls(**d).validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rank_grid"] = [list(map(int, r)) for r in self.rank_grid]
        return d


@dataclass
class PreparedData:
    grid: ChannelGrid
    stats: NormStats
    train: dict
    test: dict
    fit: dict
    val: dict
    weight_range: tuple = WEIGHT_RANGE


def auto_weight_range(fit: dict) -> tuple[float, float]:
    """Symmetric uniform range giving hidden pre-activations unit variance.

    For weights uniform on (-a, a), var<W, x> = a^2 ||x||^2 / 3, so
    a = sqrt(3 / mean ||x||^2) over the fit samples of both planes.
    """
    energy = np.mean([np.mean(np.sum(fit[p].features ** 2, axis=(1, 2, 3))) for p in PLANES])
    a = float(np.sqrt(3.0 / energy)) if energy > 0 else 1.0
    return (-a, a)


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except (ConfigError, StageError):
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


def validation_split(n: int, fraction: float, seed: int):
    perm = np.random.default_rng([seed, 0x5E1EC7]).permutation(n)
    n_val = min(max(int(round(n * fraction)), 1), n - 1)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


@_stage("data")
def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    """Generate, normalize, window and split the channel for ``cfg``."""
    grid, stats = normalize(generate_channel(cfg.channel, cfg.seed))
    planes = build_interpolation_dataset(grid, cfg.window, cfg.window_mode)
    train, test = {}, {}
    for ds in planes:
        train[ds.plane], test[ds.plane] = split_even(ds, cfg.seed)
    return assemble_data(cfg, grid, stats, train, test)


def assemble_data(cfg: ExperimentConfig, grid, stats, train: dict, test: dict) -> PreparedData:
    """Carve the validation part out of ``train`` and fix the weight range."""
    fit, val = {}, {}
    for plane, tr in train.items():
        fit_idx, val_idx = validation_split(len(tr), cfg.validation_fraction, cfg.seed)
        fit[plane], val[plane] = tr.subset(fit_idx), tr.subset(val_idx)
    if cfg.weight_range == "auto":
        wr = auto_weight_range(fit)
    else:
        wr = tuple(cfg.weight_range)
    return PreparedData(grid, stats, train, test, fit, val, wr)


def plane_mse(pred: np.ndarray, ds: WindowDataset) -> float:
    return float(np.mean((pred - ds.labels) ** 2))


def complex_mse(preds: dict, data: dict) -> float:
    """Mean squared complex error: the sum of the per-plane MSEs."""
    return sum(plane_mse(preds[p], data[p]) for p in PLANES)


def count_mults(method: str, N: int, L: int, shape, ranks=None, n_outputs: int = 1) -> int:
    """Multiplications to evaluate a method on N samples.

    Hidden-layer methods: N * L * prod(input shape), or prod(ranks) for the
    Tucker variants (the one-off decomposition is accounted for separately).
    Mean: one scaling per output; LMSE: W per output.
    """
    method = canonical_method(method)
    if method in ("TELM", "ELM", "NN"):
        return int(N) * int(L) * int(np.prod(shape))
    if method in TENSOR_METHODS:
        if ranks is None:
            raise ValueError(f"{method} needs ranks")
        return int(N) * int(L) * int(np.prod(ranks))
    if method == "Mean":
        return int(N) * int(n_outputs)
    return int(N) * int(n_outputs) * int(shape[-1])


def _derive_seed(*key) -> int:
    return int(np.random.SeedSequence(list(map(int, key))).generate_state(1, np.uint64)[0])


def _train_planes(method, cfg, data, L, seed, decomps) -> dict:
    """One model per plane; both planes draw the same hidden layer from ``seed``."""
    models = {}
    wr = data.weight_range
    for plane in PLANES:
        ds = data.fit[plane]
        if method == "TELM":
            models[plane] = train_telm(ds.features, ds.labels, L, seed, wr)
        elif method == "ELM":
            models[plane] = train_elm_vector(ds.features, ds.labels, L, seed, wr)
        elif method == "TDELM":
            models[plane] = train_tdelm(ds.features, ds.labels, L, rng=seed,
                                        weight_range=wr,
                                        decomposition=decomps[plane])
        elif method == "NN":
            models[plane] = train_slfn_gd(ds.features, ds.labels, L, cfg.nn_epochs,
                                          cfg.nn_step, seed)
        elif method == "TDNN":
            models[plane] = train_slfn_gd(ds.features, ds.labels, L, cfg.nn_epochs,
                                          cfg.nn_step, seed, decomposition=decomps[plane])
        else:
            raise ConfigError(f"{method} is not a trainable network")
    return models


def predict_planes(models: dict, data: dict) -> dict:
    return {p: predict_batch(models[p], data[p].features) for p in PLANES}


def _decompose(cfg, fit, ranks) -> tuple[dict, float]:
    t0 = time.perf_counter()
    decomps = {
        p: decompose_samples(fit[p].features, tuple(ranks), method=cfg.decomposition)
        for p in PLANES
    }
    return decomps, time.perf_counter() - t0


def _map(cfg, fn, items):
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def select_best(cfg: ExperimentConfig, method: str, data: PreparedData, L: int,
                ranks=None, repeats: int | None = None, cell: int = 0, decomps=None):
    """Train ``repeats`` randomized models and keep the lowest validation MSE.

    Repeat r draws from seed (cfg.seed, cell, r); ties go to the lowest r.
    ``cell`` is the seed index of the grid cell.
    Returns ``(best_models, per_repeat)`` where ``per_repeat`` lists the
    validation MSE, seed and training time of every repeat.
    """
    method = canonical_method(method)
    if repeats is None:
        repeats = cfg.nn_repeats if method in GD_METHODS else cfg.repeats
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    if method in TENSOR_METHODS and decomps is None:
        decomps, _ = _decompose(cfg, data.fit, ranks)

    def run(r):
        seed = _derive_seed(cfg.seed, cell, r)
        models = _train_planes(method, cfg, data, L, seed, decomps)
        val = complex_mse(predict_planes(models, data.val), data.val)
        t = sum(m.train_stats.train_time for m in models.values())
        return models, {"repeat": r, "seed": seed, "val_mse": val, "train_time": t}

    results = _map(cfg, run, range(repeats))
    best = min(range(repeats), key=lambda r: (results[r][1]["val_mse"], r))
    return results[best][0], [s for _, s in results]


def _cells(cfg, method):
    """Grid cells as (seed index, L, ranks).

    The seed index is the position of L in ``hidden_sizes``, so cells that
    differ only in ranks (and TELM/TDELM cells of equal L) share weight streams.
    """
    if method in TENSOR_METHODS:
        return [(i, int(L), tuple(int(x) for x in r))
                for (i, L), r in itertools.product(enumerate(cfg.hidden_sizes), cfg.rank_grid)]
    return [(i, int(L), None) for i, L in enumerate(cfg.hidden_sizes)]


@dataclass
class GridResult:
    cells: list
    best: dict
    models: dict
    decomps: dict | None
    decomposition_time: float


def grid_search(cfg: ExperimentConfig, method: str, data: PreparedData | None = None) -> GridResult:
    """Exhaustive grid over hidden sizes (x rank tuples) with SelectBest per cell."""
    method = canonical_method(method)
    if data is None:
        data = prepare_data(cfg)
    cells = _cells(cfg, method)
    if not cells:
        raise ConfigError("empty grid")
    decomp_cache, decomp_time = {}, {}
    records, best = [], None
    for idx, (seed_index, L, ranks) in enumerate(cells):
        decomps = None
        if ranks is not None:
            if ranks not in decomp_cache:
                decomp_cache[ranks], decomp_time[ranks] = _decompose(cfg, data.fit, ranks)
            decomps = decomp_cache[ranks]
        models, per_repeat = select_best(cfg, method, data, L, ranks, cell=seed_index,
                                         decomps=decomps)
        k = min(range(len(per_repeat)), key=lambda r: (per_repeat[r]["val_mse"], r))
        rec = {
            "cell": idx,
            "seed_index": seed_index,
            "L": L,
            "ranks": list(ranks) if ranks else None,
            "val_mse": per_repeat[k]["val_mse"],
            "best_repeat": k,
            "seed": per_repeat[k]["seed"],
            "val_mse_per_repeat": [s["val_mse"] for s in per_repeat],
        }
        records.append(rec)
        if best is None or rec["val_mse"] < best[0]["val_mse"]:
            best = (rec, models, decomps)
    rec, models, decomps = best
    dt = decomp_time.get(tuple(rec["ranks"]), 0.0) if rec["ranks"] else 0.0
    return GridResult(records, rec, models, decomps, dt)


def _median_time(fn, n: int) -> float:
    times = []
    for _ in range(n):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


@dataclass
class ExperimentReport:
    config: dict
    methods: dict
    environment: dict
    predictions: dict = field(default_factory=dict, repr=False)
    test_data: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {"config": self.config, "methods": self.methods, "environment": self.environment}

    def table(self) -> str:
        names = list(self.methods)
        width = max(12, *(len(n) + 2 for n in names))
        head = "".ljust(10) + "".join(n.rjust(width) for n in names)
        mse = "MSE".ljust(10) + "".join(
            f"{self.methods[n]['test_mse']:.4f}".rjust(width) for n in names)
        tc = "TC (s)".ljust(10) + "".join(
            f"{self.methods[n]['train_time']:.4g}".rjust(width) for n in names)
        mul = "mults".ljust(10) + "".join(
            str(self.methods[n]["mults"]).rjust(width) for n in names)
        return "\n".join([head, mse, tc, mul]) + "\n"

    def prediction_rows(self):
        for name, preds in self.predictions.items():
            for plane in PLANES:
                ds = self.test_data[plane]
                J = ds.features.shape[1]
                P = preds[plane]
                for n in range(P.shape[0]):
                    for s in range(P.shape[1]):
                        t, y = float(ds.labels[n, s]), float(P[n, s])
                        yield {
                            "method": name, "plane": plane, "sample": n,
                            "target_subcarrier": int(ds.targets[n]),
                            "tx": s % J, "rx": s // J,
                            "true": repr(t), "predicted": repr(y),
                            "abs_error": repr(abs(y - t)),
                            "significant": int(abs(y - t) > SIGNIFICANT_ERROR),
                        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "report.json", self.to_dict())
        (out / "table.txt").write_text(self.table())
        write_predictions(out / "predictions.csv", self.prediction_rows())
        return out


def write_predictions(path, rows) -> Path:
    rows = iter(rows)
    first = next(rows, None)
    with open(path, "w", newline="") as fh:
        if first is not None:
            w = csv.DictWriter(fh, fieldnames=list(first))
            w.writeheader()
            w.writerow(first)
            w.writerows(rows)
    return Path(path)


def environment() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "kernel_backend": kernels.BACKEND,
    }


def _method_entry(cfg, method, data) -> tuple[dict, dict]:
    n_out = data.test[PLANES[0]].labels.shape[1]
    shape = cfg.sample_shape
    n_fit = len(data.fit[PLANES[0]])
    if method == "Mean":
        t0 = time.perf_counter()
        preds = {p: mean_predict_dataset(data.test[p]) for p in PLANES}
        predict_time = time.perf_counter() - t0
        train_pred = {p: mean_predict_dataset(data.train[p]) for p in PLANES}
        entry = {
            "train_mse": complex_mse(train_pred, data.train),
            "train_time": 0.0,
            "predict_time": predict_time,
            "mults": count_mults("Mean", len(data.test[PLANES[0]]), 0, shape, n_outputs=n_out),
            "hyperparameters": {},
        }
        return entry, preds
    if method == "LMSE":
        weights: dict[str, LmseWeights] = {}

        def fit_all():
            for p in PLANES:
                weights[p] = train_lmse(data.train[p])

        train_time = _median_time(fit_all, cfg.timing_repeats)
        t0 = time.perf_counter()
        preds = {p: weights[p].predict(data.test[p]) for p in PLANES}
        predict_time = time.perf_counter() - t0
        train_pred = {p: weights[p].predict(data.train[p]) for p in PLANES}
        entry = {
            "train_mse": complex_mse(train_pred, data.train),
            "train_time": train_time,
            "predict_time": predict_time,
            "mults": count_mults("LMSE", len(data.test[PLANES[0]]), 0, shape, n_outputs=n_out),
            "hyperparameters": {"bias": False},
            "degenerate_subchannels": sum(len(weights[p].degenerate) for p in PLANES),
        }
        return entry, preds

    res = grid_search(cfg, method, data)
    best = res.best
    L, ranks = best["L"], best["ranks"]

    def retrain():
        return _train_planes(method, cfg, data, L, best["seed"], res.decomps)

    train_time = _median_time(retrain, cfg.timing_repeats if method in ELM_METHODS else 1)
    models = res.models
    t0 = time.perf_counter()
    preds = predict_planes(models, data.test)
    predict_time = time.perf_counter() - t0
    entry = {
        "train_mse": complex_mse(predict_planes(models, data.fit), data.fit),
        "val_mse": best["val_mse"],
        "train_time": train_time,
        "predict_time": predict_time,
        "decomposition_time": res.decomposition_time,
        "mults": count_mults(method, n_fit, L, shape, ranks),
        "mults_full_input": count_mults("TELM", n_fit, L, shape),
        "hyperparameters": {"L": L, "ranks": ranks, "weight_range": list(data.weight_range)},
        "seed": {"base": cfg.seed, "cell": best["seed_index"], "repeat": best["best_repeat"],
                 "derived": best["seed"]},
        "rank_deficient": any(m.train_stats.rank_deficient for m in models.values()),
        "grid": res.cells,
    }
    if ranks is not None:
        entry["decomposition_fit"] = {p: res.decomps[p].fit for p in PLANES}
    return entry, preds


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Full protocol: data, every configured method, test MSE once per method."""
    cfg.validate()
    data = prepare_data(cfg)
    methods, predictions = {}, {}
    for method in cfg.methods:
        entry, preds = _stage(method)(_method_entry)(cfg, method, data)
        entry["test_mse"] = complex_mse(preds, data.test)
        methods[method] = entry
        predictions[method] = preds
    # the echo omits output_dir: where a report is written does not affect its contents
    echo = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
    report = ExperimentReport(echo, methods, environment(), predictions, data.test)
    if cfg.output_dir:
        report.write(cfg.output_dir)
    return report


def strip_timing(obj):
    """Copy of a report dict without wall-clock fields (keys ending in ``_time``)."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if not k.endswith("_time")}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj
