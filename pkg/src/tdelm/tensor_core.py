"""Dense real tensors and the basic multilinear operations.

Storage convention: values are laid out first-index-fastest (Fortran order),
so ``vectorize`` of a matrix stacks its columns. The mode-k matricization
places element (i_1, ..., i_K) in column ``sum_{m != k} i_m * J_m`` (0-based)
with ``J_m = prod_{m' < m, m' != k} I_{m'}``.

Modes are 0-based throughout the Python API, following numpy axes.
"""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np


class TensorError(ValueError):
    """Raised for invalid tensor construction or incompatible shapes."""


class Tensor:
    """Immutable dense float64 tensor of order K >= 1.

    Parameters
    ----------
    data : array_like
        Array whose axes are the tensor modes. It is copied and made
        read-only.
    """

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim < 1:
            raise TensorError("tensor order must be at least 1")
        if arr.size == 0:
            raise TensorError(f"every mode size must be >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise TensorError("tensor values must be finite")
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def order(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    def norm(self) -> float:
        return float(np.linalg.norm(self._data.ravel()))

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._data, other._data))

    def __hash__(self):
        return hash((self.shape, self._data.tobytes()))

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


def as_array(X) -> np.ndarray:
    """Return the float64 ndarray behind a Tensor or array-like."""
    if isinstance(X, Tensor):
        return X.data
    return np.asarray(X, dtype=np.float64)


def from_parts(shape: Sequence[int], values) -> Tensor:
    """Build a tensor from its shape and first-index-fastest values.

    >>> from_parts((2, 2), [1, 3, 2, 4]).data
    array([[1., 2.],
           [3., 4.]])
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise TensorError(f"invalid shape {shape}")
    values = np.asarray(values, dtype=np.float64).ravel()
    expected = int(np.prod(shape))
    if values.size != expected:
        raise TensorError(f"shape {shape} needs {expected} values, got {values.size}")
    return Tensor(values.reshape(shape, order="F"))


def vectorize(X) -> np.ndarray:
    """Flat copy of X in first-index-fastest order."""
    return np.asarray(as_array(X)).ravel(order="F").copy()


def _check_mode(ndim: int, k: int) -> int:
    if not 0 <= k < ndim:
        raise TensorError(f"mode {k} out of range for order-{ndim} tensor")
    return k


def unfold(a: np.ndarray, k: int) -> np.ndarray:
    """Mode-k matricization of an ndarray, shape (I_k, prod_{j != k} I_j)."""
    a = np.asarray(a)
    _check_mode(a.ndim, k)
    return np.moveaxis(a, k, 0).reshape(a.shape[k], -1, order="F")


def fold(M: np.ndarray, k: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of ``unfold``: rebuild the array of ``shape`` from its mode-k unfolding."""
    shape = tuple(shape)
    _check_mode(len(shape), k)
    moved = (shape[k],) + shape[:k] + shape[k + 1:]
    return np.moveaxis(np.reshape(M, moved, order="F"), 0, k)


def matricize(X, k: int) -> np.ndarray:
    """Mode-k matricization X_(k) of a tensor (0-based mode)."""
    return unfold(as_array(X), k).copy()


def inner(X, Y) -> float:
    """Tensor inner product: sum of elementwise products."""
    a, b = as_array(X), as_array(Y)
    if a.shape != b.shape:
        raise TensorError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))


def mode_dot(a: np.ndarray, M: np.ndarray, k: int) -> np.ndarray:
    """ndarray mode-k product: replaces axis k (size I_k) by rows(M)."""
    a = np.asarray(a, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    _check_mode(a.ndim, k)
    if M.ndim != 2 or M.shape[1] != a.shape[k]:
        raise TensorError(
            f"matrix of shape {M.shape} cannot act on mode {k} of size {a.shape[k]}"
        )
    return np.moveaxis(np.tensordot(M, a, axes=(1, k)), 0, k)


def mode_product(X, M, k: int) -> Tensor:
    """Mode-k product X x_k M, with ``matricize(result, k) == M @ matricize(X, k)``."""
    return Tensor(mode_dot(as_array(X), M, k))


def multi_mode_dot(a: np.ndarray, matrices, transpose: bool = False, skip=()) -> np.ndarray:
    """Apply one matrix per mode (``None`` entries and modes in ``skip`` are left alone)."""
    out = np.asarray(a, dtype=np.float64)
    for k, M in enumerate(matrices):
        if M is None or k in skip:
            continue
        out = mode_dot(out, M.T if transpose else M, k)
    return out


def stack_last(tensors: Sequence) -> Tensor:
    """Concatenate N equal-shape tensors along a new trailing mode."""
    if len(tensors) == 0:
        raise TensorError("cannot stack an empty list")
    arrays = [as_array(t) for t in tensors]
    first = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != first:
            raise TensorError(f"shape mismatch {a.shape} vs {first}")
    return Tensor(np.stack(arrays, axis=-1))


def unstack_last(X) -> list[Tensor]:
    """Split a tensor into its slices along the last mode."""
    a = as_array(X)
    if a.ndim < 2:
        raise TensorError("need an order >= 2 tensor to unstack")
    return [Tensor(a[..., i]) for i in range(a.shape[-1])]
