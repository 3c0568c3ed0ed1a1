"""Strict-saddle analysis of the momentum map.

The two-step iteration defines a map F(x, y) = (x + beta (x - y)
- alpha grad f(x + gamma (x - y)), x) on pairs. At a critical point its
Jacobian block-factorizes through the Hessian eigenvalues d_i: each d_i
contributes a quadratic

    phi_i(lam) = lam^2 + (alpha (1 + gamma) d_i - (1 + beta)) lam
                 + beta - alpha gamma d_i

to the characteristic polynomial. A negative d_i forces a real root
beyond 1 (phi_i(1) = alpha d_i < 0), so strict saddles are unstable fixed
points, and randomized initializations escape them almost surely.
"""

from __future__ import annotations

import cmath
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .optimizer import MomentumParams, StopRules, run, safe_alpha
from .problems import Problem

__all__ = [
    "CriticalPointAnalysis",
    "EscapeExperiment",
    "characteristic_roots",
    "analyze_critical_point",
    "saddle_safe_alpha",
    "rank_condition_holds",
    "escape_experiment",
    "momentum_map",
    "map_jacobian",
    "dense_hessian",
]

DENSE_HESSIAN_MAX_DIM = 400


def characteristic_roots(d: float, params: MomentumParams):
    """Both roots of phi(lam) for one Hessian eigenvalue d.

    Uses the larger-root-first quadratic formula to avoid cancellation;
    returns a complex pair (root1, root2) with |root1| >= |root2|.
    """
    a_, b_, g_ = params.alpha, params.beta, params.gamma
    b = a_ * (1.0 + g_) * d - (1.0 + b_)
    c = b_ - a_ * g_ * d
    disc = b * b - 4.0 * c
    if disc >= 0.0:
        s = math.sqrt(disc)
        q = -(b + math.copysign(s, b)) / 2.0 if b != 0.0 else s / 2.0
        if q == 0.0:
            r1 = r2 = 0.0
        else:
            r1, r2 = q, c / q
    else:
        s = cmath.sqrt(complex(disc))
        r1 = (-b + s) / 2.0
        r2 = (-b - s) / 2.0
    r1, r2 = complex(r1), complex(r2)
    if abs(r2) > abs(r1):
        r1, r2 = r2, r1
    return r1, r2


def momentum_map(problem: Problem, x, y, params: MomentumParams):
    """The pair map F(x, y); fixed points are (x, x) with grad f(x) = 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    top = x + params.beta * (x - y) - params.alpha * problem.gradient(
        x + params.gamma * (x - y)
    )
    return top, x.copy()


def dense_hessian(problem: Problem, x) -> np.ndarray:
    """Assemble the Hessian from dim unit-vector products (dim <= 400)."""
    if not problem.has_hessian:
        raise ValueError(f"{problem.name} exposes no Hessian-vector product")
    if problem.dim > DENSE_HESSIAN_MAX_DIM:
        raise ValueError(f"dense assembly limited to dim <= {DENSE_HESSIAN_MAX_DIM}")
    x = problem.check_point(x)
    H = np.empty((problem.dim, problem.dim))
    e = np.zeros(problem.dim)
    for i in range(problem.dim):
        e[i] = 1.0
        H[:, i] = problem.hessian_vec(x, e)
        e[i] = 0.0
    return 0.5 * (H + H.T)


def map_jacobian(problem: Problem, x, params: MomentumParams, y=None) -> np.ndarray:
    """Dense 2n x 2n Jacobian F'(x, y); y defaults to x."""
    x = problem.check_point(x)
    y = x if y is None else problem.check_point(y)
    n = problem.dim
    H = dense_hessian(problem, x + params.gamma * (x - y))
    eye = np.eye(n)
    top_left = (1.0 + params.beta) * eye - params.alpha * (1.0 + params.gamma) * H
    top_right = -params.beta * eye + params.alpha * params.gamma * H
    return np.block([[top_left, top_right], [eye, np.zeros((n, n))]])


@dataclass
class CriticalPointAnalysis:
    point: np.ndarray
    grad_norm: float
    hessian_eigs: np.ndarray          # sorted ascending; extremes only in iterative mode
    classification: str               # local_min_candidate | strict_saddle | degenerate
    map_spectral_radius: float
    unstable_roots: list = field(default_factory=list)  # (eig index, root) with |root| > 1
    eigs_are_extremes_only: bool = False

    def to_dict(self) -> dict:
        return {
            "grad_norm": self.grad_norm,
            "hessian_eigs": self.hessian_eigs.tolist(),
            "classification": self.classification,
            "map_spectral_radius": self.map_spectral_radius,
            "unstable_roots": [
                {"eig_index": int(i), "root": [r.real, r.imag]} for i, r in self.unstable_roots
            ],
            "eigs_are_extremes_only": self.eigs_are_extremes_only,
        }


def analyze_critical_point(
    problem: Problem,
    x,
    params: MomentumParams,
    grad_tol: float = 1e-8,
    eig_rtol: float = 1e-8,
) -> CriticalPointAnalysis:
    """Classify a critical point and compute the momentum map's spectrum there.

    Rejects points with ||grad f|| > grad_tol. Uses dense eigensolve up to
    dim 400; above that only the extreme Hessian eigenvalues are computed
    iteratively (they determine the classification, and the root modulus is
    monotone toward extreme eigenvalues, so the spectral radius over the
    extremes is reported).
    """
    x = problem.check_point(x)
    gn = float(np.linalg.norm(problem.gradient(x)))
    if gn > grad_tol:
        raise ValueError(
            f"not a critical point: ||grad f|| = {gn:.3g} > {grad_tol:.3g}"
        )
    extremes_only = problem.dim > DENSE_HESSIAN_MAX_DIM
    if extremes_only:
        from scipy.sparse.linalg import LinearOperator, eigsh

        op = LinearOperator(
            (problem.dim, problem.dim),
            matvec=lambda v: problem.hessian_vec(x, v),
            dtype=float,
        )
        lo = eigsh(op, k=1, which="SA", tol=1e-8, return_eigenvectors=False)
        hi = eigsh(op, k=1, which="LA", tol=1e-8, return_eigenvectors=False)
        eigs = np.sort(np.concatenate([lo, hi]))
        h_norm = float(np.max(np.abs(eigs)))
    else:
        H = dense_hessian(problem, x)
        eigs = np.linalg.eigvalsh(H)
        h_norm = float(np.max(np.abs(eigs))) if eigs.size else 0.0

    tol_eig = eig_rtol * (1.0 + h_norm)
    if eigs[0] < -tol_eig:
        classification = "strict_saddle"
    elif eigs[0] > tol_eig:
        classification = "local_min_candidate"
    else:
        classification = "degenerate"

    radius = 0.0
    unstable = []
    for i, d in enumerate(eigs):
        r1, r2 = characteristic_roots(float(d), params)
        radius = max(radius, abs(r1))
        for r in (r1, r2):
            if abs(r) > 1.0 + 1e-12:
                unstable.append((i, r))
    return CriticalPointAnalysis(
        point=x,
        grad_norm=gn,
        hessian_eigs=eigs,
        classification=classification,
        map_spectral_radius=float(radius),
        unstable_roots=unstable,
        eigs_are_extremes_only=extremes_only,
    )


def saddle_safe_alpha(M_tilde: float, params: MomentumParams) -> float:
    """Step-size threshold |beta| / (1 + |gamma| M~) for the escape guarantee.

    M~ bounds the Hessian spectral radius on the region of interest. The
    escape theorem needs beta != 0, so beta = 0 is rejected.
    """
    if params.beta == 0.0:
        raise ValueError(
            "escape guarantee requires beta != 0 (beta in (-1,1) \\ {0})"
        )
    if M_tilde < 0:
        raise ValueError("M_tilde must be nonnegative")
    return abs(params.beta) / (1.0 + abs(params.gamma) * M_tilde)


def rank_condition_holds(M_tilde: float, params: MomentumParams) -> bool:
    """|beta| > alpha |gamma| M~ keeps det(beta I - alpha gamma H) nonzero."""
    return abs(params.beta) > params.alpha * abs(params.gamma) * M_tilde


@dataclass
class EscapeExperiment:
    """Monte Carlo escape study around a strict saddle."""

    saddle: np.ndarray
    radius: float
    trials: int
    seed: int
    params: MomentumParams
    outcomes: list = field(default_factory=list)  # per-trial dicts
    at_saddle_tol: float = 0.0

    @property
    def escape_fraction(self) -> float:
        if not self.outcomes:
            return math.nan
        return sum(1 for o in self.outcomes if o["classification"] == "escaped") / len(
            self.outcomes
        )

    @property
    def n_at_saddle(self) -> int:
        return sum(1 for o in self.outcomes if o["classification"] == "at_saddle")

    @property
    def n_inconclusive(self) -> int:
        return sum(1 for o in self.outcomes if o["classification"] == "inconclusive")

    def to_json(self, path) -> None:
        payload = {
            "config": {
                "radius": self.radius,
                "trials": self.trials,
                "seed": self.seed,
                "alpha": self.params.alpha,
                "beta": self.params.beta,
                "gamma": self.params.gamma,
                "delta": self.params.delta,
                "at_saddle_tol": self.at_saddle_tol,
            },
            "escape_fraction": self.escape_fraction,
            "n_at_saddle": self.n_at_saddle,
            "n_inconclusive": self.n_inconclusive,
            "outcomes": self.outcomes,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)


def _sample_ball(rng, center, radius):
    d = center.size
    u = rng.standard_normal(d)
    norm = np.linalg.norm(u)
    if norm == 0.0:
        return center.copy()
    return center + u / norm * radius * rng.uniform() ** (1.0 / d)


def classify_limit(final_point, saddle, stop_reason, at_tol):
    """Label one trial: at_saddle, escaped, or inconclusive.

    Leaving the run box is a definitive escape (the iterate left the
    saddle's neighborhood); converging below grad_tol is at_saddle or
    escaped depending on the final distance; hitting max_iters without
    convergence is inconclusive.
    """
    dist = float(np.linalg.norm(final_point - saddle))
    if stop_reason == "grad_tol":
        return ("at_saddle" if dist <= at_tol else "escaped"), dist
    if stop_reason in ("left_box", "diverged"):
        return "escaped", dist
    return "inconclusive", dist


def escape_experiment(
    problem: Problem,
    saddle,
    params: MomentumParams,
    radius: float,
    trials: int,
    seed: int = 0,
    stop: Optional[StopRules] = None,
    workers: int = 1,
) -> EscapeExperiment:
    """Run seeded random restarts near a strict saddle and count escapes.

    Per trial t, x_0 is uniform in B(saddle, radius) and x_{-1} uniform in
    B(x_0, delta * alpha), drawn from an RNG stream keyed by (seed, t).
    A trial is 'at_saddle' when it converges within 10 * radius * 1e-3 of
    the saddle; raw final distances are recorded so outcomes can be
    re-thresholded. Requires the candidate to be a strict saddle, beta != 0,
    and alpha <= min(safe_alpha, saddle_safe_alpha).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    saddle = problem.check_point(saddle)
    analysis = analyze_critical_point(problem, saddle, params)
    if analysis.classification != "strict_saddle":
        raise ValueError(
            f"candidate is classified {analysis.classification}, not strict_saddle"
        )
    m_tilde = float(np.max(np.abs(analysis.hessian_eigs)))
    a_max = saddle_safe_alpha(m_tilde, params)  # also rejects beta == 0
    if params.alpha > min(safe_alpha(m_tilde, params), a_max) * (1.0 + 1e-12):
        raise ValueError(
            f"alpha = {params.alpha} exceeds min(descent, escape) threshold "
            f"{min(safe_alpha(m_tilde, params), a_max):.6g}"
        )
    stop = stop or StopRules(max_iters=20_000, grad_tol=1e-9, box_radius=100.0)
    at_tol = 10.0 * radius * 1e-3

    def one_trial(t):
        rng = np.random.default_rng([seed, t])
        x0 = _sample_ball(rng, saddle, radius)
        xm1 = _sample_ball(rng, x0, params.delta * params.alpha)
        trace = run(problem, xm1, x0, params, stop)
        label, dist = classify_limit(
            trace.x(trace.num_steps), saddle, trace.stop_reason, at_tol
        )
        return {
            "trial": t,
            "classification": label,
            "final_distance": dist,
            "stop_reason": trace.stop_reason,
            "iters": trace.num_steps,
            "final_grad_norm": float(trace.grad_norms[-1]),
        }

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one_trial, range(trials)))
    else:
        outcomes = [one_trial(t) for t in range(trials)]
    return EscapeExperiment(
        saddle=saddle,
        radius=radius,
        trials=trials,
        seed=seed,
        params=params,
        outcomes=outcomes,
        at_saddle_tol=at_tol,
    )
