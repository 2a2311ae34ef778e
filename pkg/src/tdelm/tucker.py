"""Tucker decomposition: HOSVD, HOOI refinement and sample-batch compression.

A factor entry of ``None`` stands for an identity factor; it is never
materialised, which matters for the trailing sample mode of a stacked batch.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .linalg import numeric_rank, thin_svd
from .tensor_core import Tensor, TensorError, as_array, inner, multi_mode_dot, unfold

DEFAULT_MAX_ITERS = 50
DEFAULT_FIT_TOL = 1e-6


@dataclass(frozen=True)
class TuckerFactors:
    """Core tensor plus one factor per mode (``None`` = identity)."""

    core: Tensor
    factors: list
    fit_history: list = field(default_factory=list)

    @property
    def ranks(self) -> tuple[int, ...]:
        return self.core.shape

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(
            d if B is None else B.shape[0] for d, B in zip(self.core.shape, self.factors)
        )

    @property
    def fit(self) -> float | None:
        return self.fit_history[-1] if self.fit_history else None

    @property
    def n_iters(self) -> int:
        return max(len(self.fit_history) - 1, 0)


def fix_signs(B: np.ndarray) -> np.ndarray:
    """Flip columns so that the largest-magnitude entry of each is positive."""
    B = np.array(B, dtype=np.float64, copy=True)
    if B.size == 0:
        return B
    idx = np.argmax(np.abs(B), axis=0)
    signs = np.sign(B[idx, np.arange(B.shape[1])])
    signs[signs == 0] = 1.0
    return B * signs


def _leading_vectors(M: np.ndarray, d: int) -> np.ndarray:
    U = thin_svd(M).U[:, :d]
    if U.shape[1] < d:
        # fewer columns than requested rank: complete with an orthonormal basis
        extra = scipy.linalg.null_space(U.T) if U.shape[1] else np.eye(M.shape[0])
        U = np.hstack([U, extra[:, : d - U.shape[1]]])
    return fix_signs(U)


def _check_ranks(shape, ranks, identity_modes=()) -> tuple[int, ...]:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(shape):
        raise TensorError(f"need {len(shape)} ranks, got {len(ranks)}")
    for k, (r, n) in enumerate(zip(ranks, shape)):
        if not 1 <= r <= n:
            raise TensorError(f"rank {r} for mode {k} must lie in [1, {n}]")
        if k in identity_modes and r != n:
            raise TensorError(f"identity mode {k} must keep full size {n}")
    return ranks


def mode_ranks(X, tol: float | None = None) -> tuple[int, ...]:
    """Numeric rank of every mode-k matricization."""
    a = as_array(X)
    return tuple(numeric_rank(unfold(a, k), tol) for k in range(a.ndim))


def tucker_fit(X, T: TuckerFactors) -> float:
    """Fit 1 - ||X - X_hat|| / ||X|| (1.0 for an exact decomposition)."""
    a = as_array(X)
    nrm = np.linalg.norm(a.ravel())
    if nrm == 0.0:
        return 1.0 if T.core.norm() == 0.0 else -np.inf
    resid = a - reconstruct(T).data
    return float(1.0 - np.linalg.norm(resid.ravel()) / nrm)


def _project(a: np.ndarray, factors) -> np.ndarray:
    return multi_mode_dot(a, factors, transpose=True)


def hosvd(X, ranks: Sequence[int], identity_modes: Sequence[int] = ()) -> TuckerFactors:
    """Truncated higher-order SVD.

    Factor k holds the leading ``ranks[k]`` left singular vectors of the
    mode-k matricization; the core is X projected onto all factors. Modes in
    ``identity_modes`` keep an identity factor and are not decomposed.
    """
    a = as_array(X)
    identity_modes = set(identity_modes)
    ranks = _check_ranks(a.shape, ranks, identity_modes)
    factors = [
        None if k in identity_modes else _leading_vectors(unfold(a, k), ranks[k])
        for k in range(a.ndim)
    ]
    T = TuckerFactors(Tensor(_project(a, factors)), factors)
    T.fit_history.append(tucker_fit(a, T))
    return T


def hooi(
    X,
    ranks: Sequence[int],
    max_iters: int = DEFAULT_MAX_ITERS,
    fit_tol: float = DEFAULT_FIT_TOL,
    identity_modes: Sequence[int] = (),
) -> TuckerFactors:
    """Higher-order orthogonal iteration started from ``hosvd``.

    Each sweep replaces factor k by the leading left singular vectors of X
    projected onto every other factor. Iteration stops once the fit gains
    less than ``fit_tol`` (relative) or after ``max_iters`` sweeps. A sweep
    that would lower the fit is discarded, so the returned fit is never below
    the HOSVD fit.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if fit_tol <= 0:
        raise ValueError("fit_tol must be > 0")
    a = as_array(X)
    identity_modes = set(identity_modes)
    T = hosvd(a, ranks, identity_modes)
    factors = list(T.factors)
    history = list(T.fit_history)
    best = T
    for _ in range(max_iters):
        for k in range(a.ndim):
            if k in identity_modes:
                continue
            others = [None if j == k else B for j, B in enumerate(factors)]
            Y = _project(a, others)
            factors[k] = _leading_vectors(unfold(Y, k), T.ranks[k])
        cand = TuckerFactors(Tensor(_project(a, factors)), list(factors))
        f = tucker_fit(a, cand)
        prev = history[-1]
        if f < prev:
            break
        history.append(f)
        best = cand
        if f - prev < fit_tol * max(abs(prev), np.finfo(float).tiny):
            break
    return TuckerFactors(best.core, best.factors, history)


def reconstruct(T: TuckerFactors) -> Tensor:
    """Multiply the core by each factor along its mode."""
    return Tensor(multi_mode_dot(T.core.data, T.factors))


class SampleDecomposition(NamedTuple):
    """Per-sample cores (batch axis first) and the shared mode factors."""

    cores: np.ndarray
    factors: list
    fit: float

    def core_tensors(self) -> list[Tensor]:
        return [Tensor(c) for c in self.cores]


def as_batch(samples) -> np.ndarray:
    """Samples as an ndarray with the sample index on axis 0.

    Accepts an ndarray (already batched) or a sequence of Tensors/arrays.
    """
    if isinstance(samples, np.ndarray):
        batch = np.asarray(samples, dtype=np.float64)
    else:
        if len(samples) == 0:
            raise TensorError("empty sample list")
        arrays = [as_array(s) for s in samples]
        first = arrays[0].shape
        if any(a.shape != first for a in arrays):
            raise TensorError("all samples must share one shape")
        batch = np.stack(arrays)
    if batch.ndim < 2 or batch.shape[0] == 0:
        raise TensorError(f"invalid sample batch of shape {batch.shape}")
    return batch


def project_samples(samples, factors) -> np.ndarray:
    """Cores of each sample in the shared basis: X_i x_k B(k)^T for every mode."""
    batch = as_batch(samples)
    if len(factors) != batch.ndim - 1:
        raise TensorError(f"{len(factors)} factors for order-{batch.ndim - 1} samples")
    return multi_mode_dot(batch, [None, *factors], transpose=True)


def decompose_samples(
    samples,
    ranks: Sequence[int] | None = None,
    method: str = "hooi",
    max_iters: int = DEFAULT_MAX_ITERS,
    fit_tol: float = DEFAULT_FIT_TOL,
    tol: float | None = None,
) -> SampleDecomposition:
    """Decompose N equal-shape samples with a shared basis.

    The samples are stacked along a trailing mode whose factor is fixed to
    the identity, so each core slice belongs to one sample. Modes whose rank
    equals their size also keep an identity factor. ``ranks`` defaults to the
    detected mode ranks of the stacked tensor.
    """
    batch = as_batch(samples)
    stacked = np.moveaxis(batch, 0, -1)
    K = stacked.ndim - 1
    if ranks is None:
        ranks = tuple(max(r, 1) for r in mode_ranks(stacked, tol)[:K])
    full = (*tuple(ranks), stacked.shape[-1])
    # modes kept at full size need no compression: their factor is the identity
    keep = [k for k in range(K) if full[k] == stacked.shape[k]]
    identity = (*keep, K)
    if method == "hosvd":
        T = hosvd(stacked, full, identity_modes=identity)
    elif method == "hooi":
        T = hooi(stacked, full, max_iters, fit_tol, identity_modes=identity)
    else:
        raise ValueError(f"unknown decomposition method {method!r}")
    cores = np.moveaxis(T.core.data, -1, 0).copy()
    factors = [np.eye(stacked.shape[k]) if B is None else B for k, B in enumerate(T.factors[:K])]
    return SampleDecomposition(cores, factors, T.fit)


def duality_check(W_core, X_core, factors) -> tuple[float, float]:
    """Inner products of full tensors vs. their cores in a shared basis.

    Builds W = [[W'; B]] and X = [[X'; B]] and returns ``(<W, X>, <W', X'>)``;
    the two agree when every factor is column-orthonormal.
    """
    w, x = as_array(W_core), as_array(X_core)
    if w.shape != x.shape:
        raise TensorError(f"core shape mismatch {w.shape} vs {x.shape}")
    if len(factors) != w.ndim:
        raise TensorError(f"{len(factors)} factors for order-{w.ndim} cores")
    W_full = multi_mode_dot(w, factors)
    X_full = multi_mode_dot(x, factors)
    return inner(W_full, X_full), inner(w, x)
