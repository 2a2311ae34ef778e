"""Extreme learning machines with vector, tensor and Tucker-core inputs.

All three variants share one recipe: draw hidden weights and biases at
random, build the hidden-layer output matrix H with sigmoid activations, and
solve for the output weights by the minimal-norm least-squares solution
``beta = pinv(H) @ T``. They differ only in what a hidden unit sees:

* ``ELM``   -- the vectorized sample,
* ``TELM``  -- the sample tensor itself (tensor inner product),
* ``TDELM`` -- the sample's Tucker core in a basis shared by the training batch.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .io import load_tensor, read_json, save_tensor, write_json
from .linalg import default_tol, thin_svd
from .tensor_core import TensorError, as_array
from .tucker import SampleDecomposition, as_batch, decompose_samples, project_samples

VARIANTS = ("ELM", "TELM", "TDELM", "NN", "TDNN")
WEIGHT_RANGE = (-1.0, 1.0)
COLLISION_TOL = 1e-12


def sigmoid(x):
    """Logistic activation ``1 / (1 + exp(-x))``."""
    out = kernels.sigmoid(x)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class HiddenLayer:
    """L random hidden units; ``weights`` has shape (L, *unit_shape)."""

    weights: np.ndarray
    biases: np.ndarray
    distribution: str = "uniform(-1, 1)"

    def __post_init__(self):
        if self.weights.ndim < 2 or self.weights.shape[0] < 1:
            raise ValueError("need at least one hidden unit with a non-scalar weight")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValueError("one bias per hidden unit is required")

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def unit_shape(self) -> tuple[int, ...]:
        return self.weights.shape[1:]


def draw_hidden_layer(unit_shape, L: int, rng, weight_range=WEIGHT_RANGE) -> HiddenLayer:
    """Draw weights then biases i.i.d. uniform on ``weight_range``."""
    if L < 1:
        raise ValueError("hidden size L must be >= 1")
    rng = np.random.default_rng(rng)
    lo, hi = weight_range
    W = rng.uniform(lo, hi, size=(L, *tuple(unit_shape)))
    b = rng.uniform(lo, hi, size=L)
    return HiddenLayer(W, b, f"uniform({lo:g}, {hi:g})")


def hidden_matrix(samples, layer: HiddenLayer) -> tuple[np.ndarray, int]:
    """H[i, j] = sigmoid(<W_j, X_i> + b_j) and the multiplication count N*L*prod(shape)."""
    batch = as_batch(samples)
    if batch.shape[1:] != layer.unit_shape:
        raise TensorError(
            f"sample shape {batch.shape[1:]} does not match weight shape {layer.unit_shape}"
        )
    n, L = batch.shape[0], layer.size
    per_unit = int(np.prod(layer.unit_shape))
    H = kernels.hidden_activations(
        batch.reshape(n, per_unit), layer.weights.reshape(L, per_unit), layer.biases
    )
    return H, n * L * per_unit


@dataclass
class TrainStats:
    residual_norm: float
    rank: int
    rank_deficient: bool
    condition: float
    train_time: float
    mults: int
    decomposition_time: float = 0.0
    core_collisions: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "extra"}
        d.update(self.extra)
        return d


@dataclass(frozen=True)
class TrainedModel:
    """Hidden layer plus solved output weights.

    ``beta`` has shape (L,) for scalar labels or (L, m) for m outputs that
    share the hidden layer. ``factors`` is set for Tucker-core variants and
    maps inputs into the core space before the hidden layer.
    """

    hidden: HiddenLayer
    beta: np.ndarray
    variant: str
    input_shape: tuple
    train_stats: TrainStats
    factors: list | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.beta.shape[0] != self.hidden.size:
            raise ValueError("beta length must equal the hidden size")


def solve_output_weights(H: np.ndarray, T: np.ndarray, tol: float | None = None):
    """Minimal-norm least-squares beta plus (rank, condition indicator)."""
    U, S, V = thin_svd(H)
    if tol is None:
        tol = default_tol(H.shape)
    keep = S > tol * S[0] if S.size and S[0] > 0 else np.zeros(S.shape, bool)
    coeff = U[:, keep].T @ T
    coeff = coeff / (S[keep] if T.ndim == 1 else S[keep, None])
    beta = V[:, keep] @ coeff
    rank = int(keep.sum())
    cond = float(S[0] / S[rank - 1]) if rank else float("inf")
    return beta, rank, cond


def _labels(labels, n: int) -> np.ndarray:
    T = np.asarray(labels, dtype=np.float64)
    if T.ndim not in (1, 2) or T.shape[0] != n:
        raise TensorError(f"expected {n} labels, got array of shape {T.shape}")
    if not np.all(np.isfinite(T)):
        raise TensorError("labels must be finite")
    return T


def _seed_of(rng):
    return int(rng) if isinstance(rng, (int, np.integer)) else None


def count_core_collisions(cores: np.ndarray, tol: float = COLLISION_TOL) -> int:
    """Number of sample pairs whose cores lie within ``tol`` of each other."""
    flat = cores.reshape(cores.shape[0], -1)
    sq = np.einsum("ij,ij->i", flat, flat)
    d2 = sq[:, None] + sq[None, :] - 2.0 * flat @ flat.T
    scale = max(float(sq.max()), 1.0)
    cand = np.argwhere(np.triu(d2 <= 1e-8 * scale, k=1))
    return sum(
        1 for i, j in cand if np.linalg.norm(flat[i] - flat[j]) < tol
    )


def _fit(features, T, L, rng, variant, input_shape, weight_range, factors=None,
         decomposition_time=0.0, collisions=0, seed=None) -> TrainedModel:
    t0 = time.perf_counter()
    layer = draw_hidden_layer(features.shape[1:], L, rng, weight_range)
    H, mults = hidden_matrix(features, layer)
    beta, rank, cond = solve_output_weights(H, T)
    elapsed = time.perf_counter() - t0
    resid = float(np.linalg.norm(H @ beta - T))
    stats = TrainStats(
        residual_norm=resid,
        rank=rank,
        rank_deficient=rank < min(H.shape),
        condition=cond,
        train_time=elapsed,
        mults=mults,
        decomposition_time=decomposition_time,
        core_collisions=collisions,
    )
    return TrainedModel(layer, beta, variant, tuple(input_shape), stats, factors, seed)


def train_telm(samples, labels, L: int, rng, weight_range=WEIGHT_RANGE) -> TrainedModel:
    """Tensor-input ELM: hidden units take tensor inner products with each sample."""
    batch = as_batch(samples)
    T = _labels(labels, batch.shape[0])
    return _fit(batch, T, L, rng, "TELM", batch.shape[1:], weight_range, seed=_seed_of(rng))


def vectorize_batch(batch: np.ndarray) -> np.ndarray:
    """Per-sample first-index-fastest vectorization, shape (N, prod(shape))."""
    return batch.reshape((batch.shape[0], -1), order="F")


def train_elm_vector(samples, labels, L: int, rng, weight_range=WEIGHT_RANGE) -> TrainedModel:
    """Traditional ELM on vectorized samples."""
    batch = as_batch(samples)
    T = _labels(labels, batch.shape[0])
    return _fit(vectorize_batch(batch), T, L, rng, "ELM", batch.shape[1:], weight_range,
                seed=_seed_of(rng))


def train_tdelm(
    samples,
    labels,
    L: int,
    ranks=None,
    rng=None,
    weight_range=WEIGHT_RANGE,
    decomposition: SampleDecomposition | None = None,
    method: str = "hooi",
) -> TrainedModel:
    """Tucker-decomposed ELM.

    The batch is decomposed with a shared basis (or ``decomposition`` is
    reused when given, e.g. across repeated trainings), then a TELM is fitted
    on the per-sample cores. Prediction projects new inputs onto the stored
    factors first.
    """
    batch = as_batch(samples)
    T = _labels(labels, batch.shape[0])
    t0 = time.perf_counter()
    if decomposition is None:
        decomposition = decompose_samples(batch, ranks, method=method)
    elif decomposition.cores.shape[0] != batch.shape[0]:
        raise TensorError("decomposition does not belong to these samples")
    dec_time = time.perf_counter() - t0
    collisions = count_core_collisions(decomposition.cores)
    if collisions:
        warnings.warn(
            f"{collisions} pairs of training samples share a core after decomposition; "
            "hidden matrix may be rank deficient",
            RuntimeWarning,
            stacklevel=2,
        )
    return _fit(decomposition.cores, T, L, rng, "TDELM", batch.shape[1:], weight_range,
                factors=decomposition.factors, decomposition_time=dec_time,
                collisions=collisions, seed=_seed_of(rng))


def model_features(model: TrainedModel, samples) -> np.ndarray:
    """Map raw samples to what the model's hidden units consume."""
    batch = as_batch(samples)
    if batch.shape[1:] != tuple(model.input_shape):
        if model.variant in ("ELM", "NN") and batch[0].size == model.hidden.unit_shape[0]:
            return vectorize_batch(batch)
        raise TensorError(
            f"input shape {batch.shape[1:]} does not match model input {model.input_shape}"
        )
    if model.factors is not None:
        return project_samples(batch, model.factors)
    if model.variant in ("ELM", "NN"):
        return vectorize_batch(batch)
    return batch


def predict_batch(model: TrainedModel, samples) -> np.ndarray:
    """Outputs for a batch: shape (N,) or (N, m)."""
    H, _ = hidden_matrix(model_features(model, samples), model.hidden)
    return H @ model.beta


def predict(model: TrainedModel, X):
    """Output for a single sample (float, or an array for multi-output models)."""
    out = predict_batch(model, as_array(X)[None, ...])[0]
    return float(out) if np.ndim(out) == 0 else out


def save_model(model: TrainedModel, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_tensor(directory / "weights", np.moveaxis(model.hidden.weights, 0, -1))
    save_tensor(directory / "biases", model.hidden.biases)
    factor_files = []
    for k, B in enumerate(model.factors or []):
        name = f"factor_{k}"
        save_tensor(directory / name, B)
        factor_files.append(name)
    manifest = {
        "variant": model.variant,
        "L": model.hidden.size,
        "input_shape": list(model.input_shape),
        "weight_shape": list(model.hidden.unit_shape),
        "distribution": model.hidden.distribution,
        "seed": model.seed,
        "beta": model.beta.tolist(),
        "factors": factor_files if model.factors is not None else None,
        "weights": "weights",
        "biases": "biases",
        "train_stats": model.train_stats.to_dict(),
    }
    write_json(directory / "manifest.json", manifest)
    return directory


def load_model(directory) -> TrainedModel:
    directory = Path(directory)
    m = read_json(directory / "manifest.json")
    weights = np.moveaxis(load_tensor(directory / m["weights"]), -1, 0)
    biases = load_tensor(directory / m["biases"])
    factors = None
    if m.get("factors") is not None:
        factors = [load_tensor(directory / name) for name in m["factors"]]
    st = dict(m.get("train_stats", {}))
    base = {k: st.pop(k) for k in list(st) if k in TrainStats.__dataclass_fields__}
    stats = TrainStats(**base, extra=st)
    return TrainedModel(
        HiddenLayer(weights, biases, m.get("distribution", "uniform(-1, 1)")),
        np.asarray(m["beta"], dtype=np.float64),
        m["variant"],
        tuple(m["input_shape"]),
        stats,
        factors,
        m.get("seed"),
    )

