"""Benchmark objectives with closed-form gradients and Hessian-vector products.

Three nonconvex families (low-rank factorization, linear sensing of a
factorized matrix, deep linear networks) plus small synthetic fixtures used
throughout the test and certificate suites. All problems expose a flat
variable vector; matrix-valued blocks are stored column-major (Fortran
order), X block first, then Y (or W_1, ..., W_l in layer order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Problem",
    "MatrixShape",
    "matrix_factorization",
    "matrix_sensing",
    "linear_network",
    "synthetic",
    "estimate_lipschitz",
    "SYNTHETIC_NAMES",
]


@dataclass(frozen=True)
class Problem:
    """A differentiable objective over a flat variable vector.

    value and gradient must be finite for finite inputs (all shipped
    problems are polynomial). hessian_vec is optional; when present it is
    the exact directional derivative of the gradient.
    """

    name: str
    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian_vec: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    suggested_box: float = 2.0
    info: dict = field(default_factory=dict)

    @property
    def has_hessian(self) -> bool:
        return self.hessian_vec is not None

    def check_point(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape != (self.dim,):
            raise ValueError(
                f"{self.name}: expected vector of length {self.dim}, got shape {np.asarray(x).shape}"
            )
        return x


@dataclass(frozen=True)
class MatrixShape:
    """Shapes of the factor blocks; widths are set for layered problems."""

    m: int = 0
    n: int = 0
    r: int = 0
    widths: tuple[int, ...] = ()

    def __post_init__(self):
        if self.widths:
            if any(w < 1 for w in self.widths):
                raise ValueError("all layer widths must be >= 1")
        elif min(self.m, self.n, self.r) < 1:
            raise ValueError("m, n, r must all be >= 1")


def _split_xy(z, m, n, r):
    X = z[: m * r].reshape((m, r), order="F")
    Y = z[m * r :].reshape((n, r), order="F")
    return X, Y


def _join(*blocks):
    return np.concatenate([np.asarray(b).ravel(order="F") for b in blocks])


def matrix_factorization(M: np.ndarray, r: int) -> Problem:
    """Low-rank factorization objective ||X Y^T - M||_F^2.

    Variables are (X, Y) with X in R^{m x r}, Y in R^{n x r}, flattened
    column-major, X block first (dim = (m + n) * r).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"M must be a 2-d matrix, got ndim={M.ndim}")
    if not np.all(np.isfinite(M)):
        raise ValueError("M must be finite")
    if r < 1:
        raise ValueError("rank r must be >= 1")
    m, n = M.shape
    dim = (m + n) * r

    def value(z):
        X, Y = _split_xy(z, m, n, r)
        R = X @ Y.T - M
        return float(np.sum(R * R))

    def gradient(z):
        X, Y = _split_xy(z, m, n, r)
        R = X @ Y.T - M
        return _join(2.0 * R @ Y, 2.0 * R.T @ X)

    def hessian_vec(z, v):
        X, Y = _split_xy(z, m, n, r)
        U, V = _split_xy(np.asarray(v, dtype=float), m, n, r)
        R = X @ Y.T - M
        dR = U @ Y.T + X @ V.T
        gX = 2.0 * (dR @ Y + R @ V)
        gY = 2.0 * (dR.T @ X + R.T @ U)
        return _join(gX, gY)

    box = max(2.0, 1.5 * math.sqrt(np.linalg.norm(M, "fro") + 1.0))
    return Problem(
        name=f"matrix_factorization[{m}x{n},r={r}]",
        dim=dim,
        value=value,
        gradient=gradient,
        hessian_vec=hessian_vec,
        suggested_box=box,
        info={"kind": "matrix_factorization", "shape": MatrixShape(m, n, r), "M": M},
    )


def matrix_sensing(A: Sequence[np.ndarray], b: np.ndarray, r: int) -> Problem:
    """Linear sensing of a factorized matrix: sum_i (<A_i, X Y^T>_F - b_i)^2."""
    A = [np.asarray(Ai, dtype=float) for Ai in A]
    b = np.asarray(b, dtype=float).ravel()
    if len(A) < 1:
        raise ValueError("need at least one sensing matrix")
    if len(A) != b.size:
        raise ValueError(f"measurement count mismatch: {len(A)} matrices vs {b.size} targets")
    m, n = A[0].shape
    if any(Ai.shape != (m, n) for Ai in A):
        raise ValueError("all sensing matrices must share one shape")
    if r < 1:
        raise ValueError("rank r must be >= 1")
    A_stack = np.stack(A)  # (p, m, n)
    dim = (m + n) * r

    def residuals(X, Y):
        P = X @ Y.T
        return np.tensordot(A_stack, P, axes=([1, 2], [0, 1])) - b

    def value(z):
        X, Y = _split_xy(z, m, n, r)
        res = residuals(X, Y)
        return float(res @ res)

    def gradient(z):
        X, Y = _split_xy(z, m, n, r)
        res = residuals(X, Y)
        # sum_i res_i A_i, assembled once
        S = np.tensordot(res, A_stack, axes=(0, 0))
        return _join(2.0 * S @ Y, 2.0 * S.T @ X)

    def hessian_vec(z, v):
        X, Y = _split_xy(z, m, n, r)
        U, V = _split_xy(np.asarray(v, dtype=float), m, n, r)
        res = residuals(X, Y)
        dP = U @ Y.T + X @ V.T
        dres = np.tensordot(A_stack, dP, axes=([1, 2], [0, 1]))
        S = np.tensordot(res, A_stack, axes=(0, 0))
        dS = np.tensordot(dres, A_stack, axes=(0, 0))
        gX = 2.0 * (dS @ Y + S @ V)
        gY = 2.0 * (dS.T @ X + S.T @ U)
        return _join(gX, gY)

    return Problem(
        name=f"matrix_sensing[{m}x{n},r={r},p={len(A)}]",
        dim=dim,
        value=value,
        gradient=gradient,
        hessian_vec=hessian_vec,
        suggested_box=max(2.0, 1.5 * math.sqrt(np.linalg.norm(b) + 1.0)),
        info={"kind": "matrix_sensing", "shape": MatrixShape(m, n, r), "p": len(A)},
    )


def linear_network(Xbar: np.ndarray, Ybar: np.ndarray, widths: Sequence[int]) -> Problem:
    """Deep linear network least squares ||W_l ... W_1 Xbar - Ybar||_F^2.

    widths = (n_0, ..., n_l); layer j has shape n_j x n_{j-1}. Variables are
    W_1, ..., W_l flattened column-major and concatenated in layer order.
    """
    Xbar = np.asarray(Xbar, dtype=float)
    Ybar = np.asarray(Ybar, dtype=float)
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2:
        raise ValueError("need at least one layer (widths = (n_0, ..., n_l), l >= 1)")
    if any(w < 1 for w in widths):
        raise ValueError("all widths must be >= 1")
    l = len(widths) - 1
    if Xbar.shape[0] != widths[0]:
        raise ValueError(f"Xbar has {Xbar.shape[0]} rows, expected n_0 = {widths[0]}")
    if Ybar.shape[0] != widths[-1]:
        raise ValueError(f"Ybar has {Ybar.shape[0]} rows, expected n_l = {widths[-1]}")
    if Xbar.shape[1] != Ybar.shape[1]:
        raise ValueError("Xbar and Ybar must have the same number of columns")

    sizes = [widths[j + 1] * widths[j] for j in range(l)]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    dim = int(offsets[-1])

    def split(z):
        return [
            z[offsets[j] : offsets[j + 1]].reshape((widths[j + 1], widths[j]), order="F")
            for j in range(l)
        ]

    def forward(Ws):
        # acts[j] = W_j ... W_1 Xbar, acts[0] = Xbar
        acts = [Xbar]
        for W in Ws:
            acts.append(W @ acts[-1])
        return acts

    def value(z):
        Ws = split(z)
        E = forward(Ws)[-1] - Ybar
        return float(np.sum(E * E))

    def gradient(z):
        Ws = split(z)
        acts = forward(Ws)
        E = acts[-1] - Ybar
        # back[j] = (W_l ... W_{j+1})^T E, back[l] = E
        back = E
        grads = [None] * l
        for j in range(l - 1, -1, -1):
            grads[j] = 2.0 * back @ acts[j].T
            back = Ws[j].T @ back
        return _join(*grads)

    def hessian_vec(z, v):
        Ws = split(z)
        Vs = split(np.asarray(v, dtype=float))
        acts = forward(Ws)
        dacts = [np.zeros_like(Xbar)]
        for j in range(l):
            dacts.append(Ws[j] @ dacts[-1] + Vs[j] @ acts[j])
        E = acts[-1] - Ybar
        dE = dacts[-1]
        back, dback = E, dE
        grads = [None] * l
        for j in range(l - 1, -1, -1):
            grads[j] = 2.0 * (dback @ acts[j].T + back @ dacts[j].T)
            dback = Ws[j].T @ dback + Vs[j].T @ back
            back = Ws[j].T @ back
        return _join(*grads)

    return Problem(
        name=f"linear_network[{'-'.join(map(str, widths))}]",
        dim=dim,
        value=value,
        gradient=gradient,
        hessian_vec=hessian_vec,
        suggested_box=max(2.0, 1.5 * math.sqrt(np.linalg.norm(Ybar, "fro") + 1.0)),
        info={"kind": "linear_network", "widths": widths},
    )


SYNTHETIC_NAMES = ("quadratic", "indefinite_quadratic", "quartic")


def synthetic(name: str, dim: int = 2) -> Problem:
    """Small test fixtures with exact gradients and Hessians.

    quadratic             0.5 ||x||^2           (any dim)
    indefinite_quadratic  0.5 (x_1^2 - x_2^2)   (dim 2, strict saddle at 0)
    quartic               x^4                   (dim 1, Lojasiewicz exponent 1/4 at 0)
    """
    if name == "quadratic":
        return Problem(
            name="quadratic",
            dim=dim,
            value=lambda x: 0.5 * float(x @ x),
            gradient=lambda x: np.array(x, dtype=float),
            hessian_vec=lambda x, v: np.array(v, dtype=float),
            suggested_box=2.0,
            info={"kind": "quadratic", "f_star": 0.0},
        )
    if name == "indefinite_quadratic":
        sign = np.array([1.0, -1.0])
        return Problem(
            name="indefinite_quadratic",
            dim=2,
            value=lambda x: 0.5 * float(x[0] ** 2 - x[1] ** 2),
            gradient=lambda x: sign * x,
            hessian_vec=lambda x, v: sign * v,
            suggested_box=2.0,
            info={"kind": "indefinite_quadratic"},
        )
    if name == "quartic":
        return Problem(
            name="quartic",
            dim=1,
            value=lambda x: float(x[0] ** 4),
            gradient=lambda x: np.array([4.0 * x[0] ** 3]),
            hessian_vec=lambda x, v: np.array([12.0 * x[0] ** 2 * v[0]]),
            suggested_box=1.5,
            info={"kind": "quartic", "f_star": 0.0},
        )
    raise ValueError(f"unknown synthetic fixture {name!r}; known: {SYNTHETIC_NAMES}")


def _unit_ball(rng, n_points, dim):
    u = rng.standard_normal((n_points, dim))
    u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)
    t = rng.uniform(0.0, 1.0, size=(n_points, 1)) ** (1.0 / dim)
    return u * t


def estimate_lipschitz(
    problem: Problem,
    center: np.ndarray,
    radius: float,
    mode: str = "sampled",
    reach: float = 0.0,
    pairs: int = 1000,
    seed: int = 0,
    safety: float = 2.0,
) -> tuple[float, float]:
    """Estimate (L, M): a bound on ||grad f|| and on its Lipschitz modulus.

    Both bounds hold on the inflated ball B(center, R') with
    R' = (1 + 2*reach) * radius, where reach = max(|beta|, |gamma|) covers the
    extrapolated evaluation points of the momentum update.

    sampled mode draws >= `pairs` point pairs on a dyadic scale ladder
    R' * 2^-k (k = 0..6) sharing one seeded unit-ball cloud across scales and
    returns the empirical maxima inflated by `safety`. The shared ladder makes
    the estimate monotone in radius across dyadic radius ratios. analytic mode
    is available for the synthetic fixtures and matrix factorization only.
    """
    center = problem.check_point(center)
    if radius <= 0:
        raise ValueError("radius must be positive")
    r_infl = (1.0 + 2.0 * max(reach, 0.0)) * radius

    if mode == "analytic":
        return _analytic_lipschitz(problem, center, r_infl)
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}; use 'sampled' or 'analytic'")

    rng = np.random.default_rng(seed)
    per_scale = max(int(math.ceil(pairs / 7)), 8)
    a = _unit_ball(rng, per_scale, problem.dim)
    b = _unit_ball(rng, per_scale, problem.dim)
    # dyadic rungs r_infl * 2^-k down to an absolute floor, so the rung sets
    # (and hence the estimates) nest across dyadic radius ratios
    floor = min(2.0**-10, r_infl * 2.0**-6)
    scales = []
    s = r_infl
    while s >= floor * (1.0 - 1e-12):
        scales.append(s)
        s *= 0.5
    max_grad = np.linalg.norm(problem.gradient(center))
    max_quot = 0.0
    for s in scales:
        for i in range(per_scale):
            p = center + s * a[i]
            q = center + s * b[i]
            gp = problem.gradient(p)
            gq = problem.gradient(q)
            max_grad = max(max_grad, np.linalg.norm(gp), np.linalg.norm(gq))
            gap = np.linalg.norm(p - q)
            if gap > 1e-12 * (1.0 + s):
                max_quot = max(max_quot, np.linalg.norm(gp - gq) / gap)
    return safety * max_grad, safety * max_quot


def _analytic_lipschitz(problem, center, r_infl):
    kind = problem.info.get("kind")
    if kind in ("quadratic", "indefinite_quadratic"):
        # Hessian has unit spectral norm; ||grad|| = ||x|| in both cases.
        return float(np.linalg.norm(center) + r_infl), 1.0
    if kind == "quartic":
        reach_abs = abs(center[0]) + r_infl
        return 4.0 * reach_abs**3, 12.0 * reach_abs**2
    if kind == "matrix_factorization":
        shape: MatrixShape = problem.info["shape"]
        M = problem.info["M"]
        X0, Y0 = _split_xy(center, shape.m, shape.n, shape.r)
        xb = np.linalg.norm(X0, "fro") + r_infl
        yb = np.linalg.norm(Y0, "fro") + r_infl
        rb = xb * yb + np.linalg.norm(M, "fro")
        L = 2.0 * rb * math.sqrt(xb**2 + yb**2)
        M_bound = 2.0 * math.sqrt(2.0) * (max(xb, yb) ** 2 + xb * yb + rb)
        return L, M_bound
    raise ValueError(
        f"analytic Lipschitz bounds are not available for {problem.name}; use mode='sampled'"
    )
