"""Independent numerical oracles used across the test suite.

These rely only on objective values (never on the gradients under test) so
they stay an independent route to the same quantities.
"""

import numpy as np


def fd_gradient(value, x, h=None):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-5 * (1.0 + np.linalg.norm(x))
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (value(x + e) - value(x - e)) / (2.0 * h)
    return g


def fd_hessian_vec(gradient, x, v, h=None):
    """Central finite difference of a gradient along direction v."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        return np.zeros_like(x)
    if h is None:
        h = 1e-6 * (1.0 + np.linalg.norm(x)) / nv
    return (gradient(x + h * v) - gradient(x - h * v)) / (2.0 * h)


def rel_err(approx, exact):
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    return np.linalg.norm(approx - exact) / (1.0 + np.linalg.norm(exact))
