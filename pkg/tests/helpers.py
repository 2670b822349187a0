"""Shared test utilities: finite-difference oracles and random inputs.

The finite-difference gradient here is the independent oracle for every
gradient test; it only ever calls forward passes, never the analytic
backward code it is checking.
"""

import numpy as np

EPS = 1e-4


def fd_grad(f, x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Elementwise central finite-difference gradient of scalar f at x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def fd_directional(f, arrays, direction, eps: float = EPS) -> float:
    """Central finite difference of f along a direction in joint input space.

    ``arrays`` and ``direction`` are matching lists of ndarrays; f takes no
    arguments and reads the arrays in place.
    """
    for a, d in zip(arrays, direction):
        a += eps * d
    hi = f()
    for a, d in zip(arrays, direction):
        a -= 2 * eps * d
    lo = f()
    for a, d in zip(arrays, direction):
        a += eps * d
    return (hi - lo) / (2 * eps)


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise deviation relative to the numeric gradient's scale."""
    scale = np.abs(numeric).max()
    if scale == 0.0:
        return float(np.abs(analytic).max())
    return float(np.abs(analytic - numeric).max() / scale)


def random_prob_map(rng, shape) -> np.ndarray:
    """A valid probability map (softmax of random logits), float64."""
    logits = rng.uniform(-2.0, 2.0, size=shape)
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def away_from_zero(rng, shape, low=0.05, high=2.0) -> np.ndarray:
    """Random values in +-[low, high]; keeps ReLU-style kinks out of FD range."""
    mag = rng.uniform(low, high, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return mag * sign
