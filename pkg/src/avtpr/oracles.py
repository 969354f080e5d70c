"""Loop-based reference implementations.

These scan candidates directly from labels and validity flags, with no mask
matrices, and exist only to cross-check the vectorized code.
"""

from __future__ import annotations

import math

import numpy as np


def distance_matrix(X: np.ndarray) -> np.ndarray:
    K = X.shape[0]
    P = np.zeros((K, K))
    for i in range(K):
        for j in range(K):
            P[i, j] = math.sqrt(sum((X[i, d] - X[j, d]) ** 2 for d in range(X.shape[1])))
    return P


def missing_components(X, Y, B):
    """Per-anchor (hard positive, hard negative, nearest missing) by direct scan."""
    X = np.asarray(X, dtype=float)
    K = X.shape[0]
    out = np.zeros((K, 3))
    for i in range(K):
        if not B[i]:
            continue
        d_ap = 0.0
        d_an = None
        d_am = None
        for j in range(K):
            dist = math.sqrt(sum((X[i, d] - X[j, d]) ** 2 for d in range(X.shape[1])))
            if j != i and Y[j] == Y[i] and B[j]:
                d_ap = max(d_ap, dist)
            if Y[j] != Y[i] and B[j]:
                d_an = dist if d_an is None else min(d_an, dist)
            if j != i and not B[j]:
                d_am = dist if d_am is None else min(d_am, dist)
        out[i] = (d_ap, d_an or 0.0, d_am or 0.0)
    return out


def missing_modality_loss(X, Y, B) -> float:
    comps = missing_components(X, Y, B)
    total, count = 0.0, 0
    for i in range(len(Y)):
        if not B[i]:
            continue
        alpha = comps[i, 0] - comps[i, 1] - comps[i, 2]
        total += math.log1p(math.exp(alpha))
        count += 1
    return total / count if count else 0.0


def triplet_hard_loss(X, Y, margin: float = 0.2) -> float:
    X = np.asarray(X, dtype=float)
    K = X.shape[0]
    total, count = 0.0, 0
    for i in range(K):
        hardest_pos = None
        hardest_neg = None
        for j in range(K):
            dist = math.sqrt(sum((X[i, d] - X[j, d]) ** 2 for d in range(X.shape[1])))
            if j != i and Y[j] == Y[i]:
                hardest_pos = dist if hardest_pos is None else max(hardest_pos, dist)
            elif Y[j] != Y[i]:
                hardest_neg = dist if hardest_neg is None else min(hardest_neg, dist)
        if hardest_pos is None or hardest_neg is None:
            continue
        total += max(hardest_pos - hardest_neg + margin, 0.0)
        count += 1
    return total / count if count else 0.0


def central_difference_grad(fn, X: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Gradient of scalar ``fn`` at ``X`` by central differences."""
    X = np.array(X, dtype=float)
    grad = np.zeros_like(X)
    for idx in np.ndindex(*X.shape):
        orig = X[idx]
        X[idx] = orig + h
        up = fn(X)
        X[idx] = orig - h
        down = fn(X)
        X[idx] = orig
        grad[idx] = (up - down) / (2 * h)
    return grad
