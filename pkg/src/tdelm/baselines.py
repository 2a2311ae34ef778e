"""Comparison methods: window mean, per-subchannel least squares, and an SLFN
trained by full-batch gradient descent."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .channel_sim import WindowDataset
from .elm_models import HiddenLayer, TrainedModel, TrainStats, vectorize_batch
from .linalg import NumericalError, lstsq, numeric_rank
from .tucker import SampleDecomposition, as_batch, decompose_samples

SLFN_EPOCHS = 2000
SLFN_STEP = 0.01
SLFN_INIT = 0.1


def mean_predict(window) -> float:
    """Arithmetic mean of the pilot values in one window."""
    w = np.asarray(window, dtype=np.float64)
    if w.size == 0:
        raise ValueError("empty window")
    return float(w.mean())


def _subchannel_windows(ds: WindowDataset) -> np.ndarray:
    """Windows per subchannel, shape (N, J*R, W), subchannel index j + J*k."""
    n, J, R, W = ds.features.shape
    return ds.features.reshape(n, J * R, W, order="F")


def mean_predict_dataset(ds: WindowDataset) -> np.ndarray:
    """Mean prediction for every sample and subchannel, shape (N, J*R)."""
    return _subchannel_windows(ds).mean(axis=-1)


@dataclass(frozen=True)
class LmseWeights:
    """One weight vector of length W per (tx, rx) subchannel of one plane."""

    weights: np.ndarray          # (J*R, W)
    bias: np.ndarray | None      # (J*R,) when fitted with a bias term
    degenerate: tuple            # subchannels whose windows were all zero
    plane: str

    def predict(self, ds: WindowDataset) -> np.ndarray:
        out = np.einsum("nsw,sw->ns", _subchannel_windows(ds), self.weights)
        if self.bias is not None:
            out = out + self.bias
        return out


def train_lmse(ds: WindowDataset, bias: bool = False) -> LmseWeights:
    """Least-squares weighting of the window pilots, fitted per subchannel."""
    windows = _subchannel_windows(ds)
    n, S, W = windows.shape
    weights = np.zeros((S, W))
    offsets = np.zeros(S) if bias else None
    degenerate = []
    for s in range(S):
        A = windows[:, s, :]
        if not np.any(A):
            degenerate.append(s)
        if bias:
            A = np.hstack([A, np.ones((n, 1))])
        x = lstsq(A, ds.labels[:, s])
        weights[s] = x[:W]
        if bias:
            offsets[s] = x[W]
    return LmseWeights(weights, offsets, tuple(degenerate), ds.plane)


def slfn_forward(params: dict, X: np.ndarray):
    S = kernels.hidden_activations(X, params["W"], params["b"])
    return S, S @ params["beta"]


def slfn_loss_and_grad(params: dict, X: np.ndarray, T: np.ndarray):
    """Squared-error loss sum (t - o)^2 and its gradient w.r.t. W, b, beta.

    ``X`` is (N, P), ``W`` (L, P), ``b`` (L,), ``beta`` (L,) or (L, m).
    """
    S, O = slfn_forward(params, X)
    E = O - T
    loss = float(np.sum(E * E))
    if E.ndim == 1:
        dS = 2.0 * np.outer(E, params["beta"])
        dbeta = 2.0 * S.T @ E
    else:
        dS = 2.0 * E @ params["beta"].T
        dbeta = 2.0 * S.T @ E
    dA = dS * S * (1.0 - S)
    return loss, {"W": dA.T @ X, "b": dA.sum(axis=0), "beta": dbeta}


def init_slfn(n_inputs: int, L: int, n_outputs: int | None, rng, scale=SLFN_INIT) -> dict:
    rng = np.random.default_rng(rng)
    beta_shape = (L,) if n_outputs is None else (L, n_outputs)
    return {
        "W": rng.uniform(-scale, scale, size=(L, n_inputs)),
        "b": rng.uniform(-scale, scale, size=L),
        "beta": rng.uniform(-scale, scale, size=beta_shape),
    }


def gradient_descent(params: dict, X, T, epochs: int, step: float):
    """Full-batch gradient descent; a step that raises the loss is undone and halved.

    Returns the final parameters and the (non-increasing) loss curve.
    """
    if epochs < 0 or step < 0:
        raise ValueError("epochs and step must be non-negative")
    params = {k: v.copy() for k, v in params.items()}
    loss, grad = slfn_loss_and_grad(params, X, T)
    curve = [loss]
    for epoch in range(epochs):
        with np.errstate(over="ignore", invalid="ignore"):
            trial = {k: params[k] - step * grad[k] for k in params}
            new_loss, new_grad = slfn_loss_and_grad(trial, X, T)
        if not np.isfinite(new_loss):
            raise NumericalError(
                f"gradient descent diverged at epoch {epoch + 1}; "
                f"last finite loss {curve[-1]:.6g} at epoch {len(curve) - 1}"
            )
        if new_loss > loss:
            step *= 0.5
            curve.append(loss)
            continue
        params, loss, grad = trial, new_loss, new_grad
        curve.append(loss)
    return params, curve


def train_slfn_gd(
    samples,
    labels,
    L: int,
    epochs: int = SLFN_EPOCHS,
    step: float = SLFN_STEP,
    rng=None,
    ranks=None,
    decomposition: SampleDecomposition | None = None,
) -> TrainedModel:
    """Gradient-trained SLFN on vectorized samples (``NN``) or on Tucker
    cores when ``ranks`` or ``decomposition`` is given (``TDNN``)."""
    batch = as_batch(samples)
    T = np.asarray(labels, dtype=np.float64)
    if T.shape[0] != batch.shape[0]:
        raise ValueError(f"expected {batch.shape[0]} labels, got {T.shape[0]}")
    dec_time = 0.0
    factors = None
    if decomposition is not None or ranks is not None:
        t0 = time.perf_counter()
        if decomposition is None:
            decomposition = decompose_samples(batch, ranks)
        dec_time = time.perf_counter() - t0
        feats, factors, variant = decomposition.cores, decomposition.factors, "TDNN"
        unit_shape = feats.shape[1:]
        X = feats.reshape(feats.shape[0], -1)
    else:
        X = vectorize_batch(batch)
        unit_shape, variant = X.shape[1:], "NN"
    t0 = time.perf_counter()
    params = init_slfn(X.shape[1], L, None if T.ndim == 1 else T.shape[1], rng)
    params, curve = gradient_descent(params, X, T, epochs, step)
    elapsed = time.perf_counter() - t0
    S, O = slfn_forward(params, X)
    stats = TrainStats(
        residual_norm=float(np.linalg.norm(O - T)),
        rank=numeric_rank(S),
        rank_deficient=numeric_rank(S) < min(S.shape),
        condition=float("nan"),
        train_time=elapsed,
        mults=X.shape[0] * L * X.shape[1],
        decomposition_time=dec_time,
        extra={"loss_curve": curve, "epochs": epochs, "step": step},
    )
    layer = HiddenLayer(params["W"].reshape((L, *unit_shape)), params["b"],
                        f"gd-trained from uniform(-{SLFN_INIT:g}, {SLFN_INIT:g})")
    return TrainedModel(layer, params["beta"], variant, batch.shape[1:], stats, factors,
                        int(rng) if isinstance(rng, (int, np.integer)) else None)
