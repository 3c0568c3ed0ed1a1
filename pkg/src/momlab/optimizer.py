"""Constant-momentum gradient descent.

The update is carried out in three stages,

    y_k^beta  = x_k + beta  * (x_k - x_{k-1})
    y_k^gamma = x_k + gamma * (x_k - x_{k-1})
    x_{k+1}   = y_k^beta - alpha * grad f(y_k^gamma),

which reduces to the heavy-ball method for gamma = 0 and to Nesterov's
accelerated gradient for gamma = beta. Traces store everything needed to
replay the recursion bit-for-bit and to run the certificate checks without
re-evaluating the objective.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .problems import Problem

__all__ = ["MomentumParams", "StopRules", "Trace", "step", "run", "safe_alpha"]

PRESETS = ("generic", "heavy_ball", "nesterov")


@dataclass(frozen=True)
class MomentumParams:
    """Step size and momentum coefficients (alpha, beta, gamma).

    delta bounds the initial velocity: runs expect ||x_0 - x_{-1}|| <= delta * alpha.
    """

    alpha: float
    beta: float = 0.0
    gamma: float = 0.0
    preset: str = "generic"
    delta: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not abs(self.beta) < 1:
            raise ValueError(f"beta must lie in (-1, 1), got {self.beta}")
        if self.delta < 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.preset == "heavy_ball" and self.gamma != 0.0:
            raise ValueError("heavy_ball preset requires gamma == 0")
        if self.preset == "nesterov" and self.gamma != self.beta:
            raise ValueError("nesterov preset requires gamma == beta")

    @staticmethod
    def heavy_ball(alpha, beta, delta=0.0):
        return MomentumParams(alpha, beta, 0.0, "heavy_ball", delta)

    @staticmethod
    def nesterov(alpha, beta, delta=0.0):
        return MomentumParams(alpha, beta, beta, "nesterov", delta)

    def replace_alpha(self, alpha: float) -> "MomentumParams":
        return MomentumParams(alpha, self.beta, self.gamma, self.preset, self.delta)


@dataclass(frozen=True)
class StopRules:
    max_iters: int = 10_000
    grad_tol: float = 0.0
    box_radius: float = np.inf

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.grad_tol < 0:
            raise ValueError("grad_tol must be >= 0")
        if self.box_radius <= 0:
            raise ValueError("box_radius must be positive")


@dataclass
class Trace:
    """Full iterate history x_{-1}, x_0, ..., x_K with per-step diagnostics.

    points[i] is x_{i-1}; f/grad arrays align with points. Step arrays have
    one entry per executed step k = 0..K-1.
    """

    points: np.ndarray          # (K+2, dim)
    f: np.ndarray               # (K+2,) objective at each point
    grads: np.ndarray           # (K+2, dim) gradient at each point
    y_beta: np.ndarray          # (K, dim)
    y_gamma: np.ndarray         # (K, dim)
    params: MomentumParams
    stop_reason: str = "max_iters"
    problem_name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def num_steps(self) -> int:
        return self.points.shape[0] - 2

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def x(self, k: int) -> np.ndarray:
        """Iterate x_k for k in {-1, ..., K}."""
        return self.points[k + 1]

    @property
    def grad_norms(self) -> np.ndarray:
        return np.linalg.norm(self.grads, axis=1)

    @property
    def step_norms(self) -> np.ndarray:
        """||x_{k+1} - x_k|| for k = -1..K-1 (length K+1)."""
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    def replay_residuals(self, problem: Problem) -> np.ndarray:
        """Residual of the update recursion at each stored step.

        Recomputes y_k^gamma from the stored points with the same
        expression used by step(), so an untouched trace reproduces the
        recursion exactly.
        """
        res = np.zeros(self.num_steps)
        g = self.params.gamma
        for k in range(self.num_steps):
            x_prev, x_curr, x_next = self.points[k], self.points[k + 1], self.points[k + 2]
            y_g = x_curr + g * (x_curr - x_prev)
            lhs = x_next - x_curr - self.params.beta * (x_curr - x_prev) \
                + self.params.alpha * problem.gradient(y_g)
            res[k] = np.linalg.norm(lhs) / (1.0 + np.linalg.norm(x_next))
        return res

    def to_csv(self, path) -> None:
        """Columns k, f, grad_norm, step_norm; step_norm is ||x_{k+1}-x_k||."""
        gn = self.grad_norms
        sn = self.step_norms
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "f", "grad_norm", "step_norm"])
            for k in range(0, self.num_steps + 1):
                step_norm = format(sn[k + 1], ".17g") if k < self.num_steps else ""
                w.writerow([k, format(self.f[k + 1], ".17g"), format(gn[k + 1], ".17g"), step_norm])

    def save(self, path) -> None:
        """Full JSON dump (includes every iterate) for offline replay."""
        payload = {
            "problem": self.problem_name,
            "params": {
                "alpha": self.params.alpha,
                "beta": self.params.beta,
                "gamma": self.params.gamma,
                "preset": self.params.preset,
                "delta": self.params.delta,
            },
            "stop_reason": self.stop_reason,
            "points": self.points.tolist(),
            "f": self.f.tolist(),
            "grads": self.grads.tolist(),
            "y_beta": self.y_beta.tolist(),
            "y_gamma": self.y_gamma.tolist(),
            "meta": self.meta,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @staticmethod
    def load(path) -> "Trace":
        with open(path) as fh:
            d = json.load(fh)
        p = d["params"]
        return Trace(
            points=np.asarray(d["points"]),
            f=np.asarray(d["f"]),
            grads=np.asarray(d["grads"]),
            y_beta=np.asarray(d["y_beta"]).reshape(len(d["y_beta"]), -1),
            y_gamma=np.asarray(d["y_gamma"]).reshape(len(d["y_gamma"]), -1),
            params=MomentumParams(p["alpha"], p["beta"], p["gamma"], p["preset"], p["delta"]),
            stop_reason=d["stop_reason"],
            problem_name=d["problem"],
            meta=d.get("meta", {}),
        )


def step(problem: Problem, x_prev, x_curr, params: MomentumParams):
    """One momentum update; returns (x_next, y_beta, y_gamma).

    Raises FloatingPointError via the caller's checks only; a non-finite
    gradient is surfaced as non-finite x_next for run() to flag.
    """
    x_prev = np.asarray(x_prev, dtype=float)
    x_curr = np.asarray(x_curr, dtype=float)
    d = x_curr - x_prev
    y_gamma = x_curr + params.gamma * d
    y_beta = x_curr + params.beta * d
    x_next = y_beta - params.alpha * problem.gradient(y_gamma)
    return x_next, y_beta, y_gamma


def run(
    problem: Problem,
    x_minus1,
    x_0,
    params: MomentumParams,
    stop: Optional[StopRules] = None,
) -> Trace:
    """Iterate the momentum update until a stop rule fires.

    Stops on ||grad f(x_k)|| < grad_tol, k == max_iters, the iterate
    leaving B(x_0, box_radius), or a non-finite value (stop_reason
    'diverged'). The initial-velocity bound ||x_0 - x_{-1}|| <= delta*alpha
    is checked and produces a warning, not an error.
    """
    stop = stop or StopRules()
    x_prev = problem.check_point(x_minus1)
    x_curr = problem.check_point(x_0)

    v0 = np.linalg.norm(x_curr - x_prev)
    if v0 > params.delta * params.alpha * (1.0 + 1e-12):
        warnings.warn(
            f"initial velocity {v0:.3g} exceeds delta*alpha = "
            f"{params.delta * params.alpha:.3g}; certificate bounds that use "
            "delta may not apply",
            stacklevel=2,
        )

    pts = [x_prev, x_curr]
    fs = [problem.value(x_prev), problem.value(x_curr)]
    gs = [problem.gradient(x_prev), problem.gradient(x_curr)]
    ybs, ygs = [], []
    reason = "max_iters"
    x0_ref = x_curr

    k = 0
    while True:
        if not (np.isfinite(fs[-1]) and np.all(np.isfinite(gs[-1]))):
            reason = "diverged"
            break
        if stop.grad_tol > 0 and np.linalg.norm(gs[-1]) < stop.grad_tol:
            reason = "grad_tol"
            break
        if k >= stop.max_iters:
            reason = "max_iters"
            break
        if np.linalg.norm(pts[-1] - x0_ref) > stop.box_radius:
            reason = "left_box"
            break
        x_next, y_b, y_g = step(problem, pts[-2], pts[-1], params)
        if not np.all(np.isfinite(x_next)):
            reason = "diverged"
            break
        pts.append(x_next)
        ybs.append(y_b)
        ygs.append(y_g)
        fs.append(problem.value(x_next))
        gs.append(problem.gradient(x_next))
        k += 1

    dim = problem.dim
    return Trace(
        points=np.asarray(pts),
        f=np.asarray(fs),
        grads=np.asarray(gs),
        y_beta=np.asarray(ybs).reshape(len(ybs), dim),
        y_gamma=np.asarray(ygs).reshape(len(ygs), dim),
        params=params,
        stop_reason=reason,
        problem_name=problem.name,
    )


def safe_alpha(M: float, params: MomentumParams) -> float:
    """Largest certified step size min{1/M, (1-beta^2) / (2(beta^2 + 2|beta-gamma|) M)}.

    With beta = gamma = 0 the second constraint is vacuous and 1/M is
    returned.
    """
    if M <= 0:
        raise ValueError(f"M must be positive, got {M}")
    b, g = params.beta, params.gamma
    denom = b * b + 2.0 * abs(b - g)
    if denom == 0.0:
        return 1.0 / M
    return min(1.0 / M, (1.0 - b * b) / (2.0 * denom * M))
