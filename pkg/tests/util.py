"""Shared test oracles: finite differences and friends."""

from __future__ import annotations

from typing import Callable

import numpy as np

FD_H = 1e-5
FD_TOL = 1e-4


def central_difference(f: Callable[[np.ndarray], float], x0: np.ndarray,
                       h: float = FD_H) -> np.ndarray:
    """Entrywise central finite differences of a scalar function."""
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    for idx in np.ndindex(x0.shape):
        up = x0.copy()
        up[idx] += h
        down = x0.copy()
        down[idx] -= h
        grad[idx] = (f(up) - f(down)) / (2.0 * h)
    return grad


def fd_rel_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    """max |analytic - fd| / max(1, |analytic|), the spec's gradient metric."""
    analytic = np.asarray(analytic, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    return float((np.abs(analytic - fd) / np.maximum(1.0, np.abs(analytic))).max())


def matmul_triple_loop(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Naive matrix product, the independent matmul oracle."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


def gae_double_loop(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                    gamma: float, lam: float) -> np.ndarray:
    """Direct double-loop sum of (gamma*lam)^k delta_{t+k}, truncated at
    episode boundaries; the independent GAE oracle."""
    steps = rewards.shape[0]
    deltas = np.array([
        rewards[t] + gamma * values[t + 1] * (1.0 - dones[t]) - values[t]
        for t in range(steps)])
    adv = np.zeros(steps)
    for t in range(steps):
        factor = 1.0
        for k in range(t, steps):
            adv[t] += factor * deltas[k]
            if dones[k]:
                break
            factor *= gamma * lam
    return adv
