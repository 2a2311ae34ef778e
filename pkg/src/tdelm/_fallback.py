"""Pure numpy implementations of the hot kernels."""
import numpy as np


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def hidden_activations(X, W, b):
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if X.shape[1] != W.shape[1]:
        raise ValueError(f"feature mismatch: X has {X.shape[1]}, W has {W.shape[1]}")
    if b.shape[0] != W.shape[0]:
        raise ValueError(f"bias length {b.shape[0]} != hidden size {W.shape[0]}")
    return sigmoid(X @ W.T + b)
