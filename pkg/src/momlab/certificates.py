"""Descent certificates for momentum traces.

Computes the closed-form constants that make the Lyapunov decrease
inequality, the gradient-norm bounds, the per-step length bound, and the
iterate length formula executable, then verifies each inequality iterate by
iterate on a stored trace. All constant formulas are pure functions of
(M, L, alpha, beta, gamma, delta, m); the golden values are pinned in the
test suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .optimizer import MomentumParams, Trace, safe_alpha
from .problems import Problem

__all__ = [
    "Certificate",
    "PerStepReport",
    "lyapunov",
    "lyapunov_interval",
    "gradient_bound_constants",
    "step_bound_delta1",
    "length_constants",
    "build_certificate",
    "check_descent",
    "check_gradient_bound",
    "check_step_bound",
    "check_length_formula",
    "LengthReport",
]

# Pass tolerance: inequalities are exact in reals; this absorbs float
# accumulation without hiding real violations.
SLACK_RTOL = 1e-9


@dataclass
class PerStepReport:
    """Outcome of one inequality family, one entry per step.

    certified[k] is False from the first step whose iterates leave the ball
    the Lipschitz constants were estimated on; such steps are excluded from
    pass/fail accounting.
    """

    name: str
    slack: np.ndarray       # measured slack, >= ~0 means the inequality holds
    passed: np.ndarray      # bool, only meaningful where certified
    certified: np.ndarray   # bool

    @property
    def num_steps(self) -> int:
        return len(self.slack)

    @property
    def n_certified(self) -> int:
        return int(np.sum(self.certified))

    @property
    def n_pass(self) -> int:
        return int(np.sum(self.passed & self.certified))

    @property
    def n_fail(self) -> int:
        return self.n_certified - self.n_pass

    @property
    def all_pass(self) -> bool:
        return self.n_fail == 0

    @property
    def min_slack(self) -> float:
        sl = self.slack[self.certified]
        return float(np.min(sl)) if sl.size else math.nan

    @property
    def first_failure(self) -> Optional[int]:
        bad = np.nonzero(~self.passed & self.certified)[0]
        return int(bad[0]) if bad.size else None

    def summary(self) -> dict:
        return {
            "name": self.name,
            "steps": self.num_steps,
            "certified": self.n_certified,
            "pass": self.n_pass,
            "fail": self.n_fail,
            "min_slack": self.min_slack,
            "first_failure": self.first_failure,
        }


@dataclass
class Certificate:
    """Closed-form constants for one (problem, params, trust ball) triple."""

    M: float
    L: float
    params: MomentumParams
    alpha_bar: float
    lambda_minus: float
    lambda_plus: float
    lam: float                  # midpoint of (lambda_minus, lambda_plus)
    c1: float
    c2: float
    b_alpha: float
    delta1: float
    c3: float
    zeta: float
    eta: float
    kappa: float
    m_crit: int
    ball_center: np.ndarray
    ball_radius: float
    certified_params: bool      # alpha <= alpha_bar
    per_step: dict = field(default_factory=dict)  # name -> PerStepReport

    def constants(self) -> dict:
        return {
            "M": self.M,
            "L": self.L,
            "alpha": self.params.alpha,
            "beta": self.params.beta,
            "gamma": self.params.gamma,
            "delta": self.params.delta,
            "alpha_bar": self.alpha_bar,
            "lambda_minus": self.lambda_minus,
            "lambda_plus": self.lambda_plus,
            "lambda": self.lam,
            "c1": self.c1,
            "c2": self.c2,
            "b_alpha": self.b_alpha,
            "delta1": self.delta1,
            "c3": self.c3,
            "zeta": self.zeta,
            "eta": self.eta,
            "kappa": self.kappa,
            "m_crit": self.m_crit,
            "ball_radius": self.ball_radius,
            "certified_params": self.certified_params,
        }

    def to_json(self, path) -> None:
        payload = {
            "constants": self.constants(),
            "checks": {
                name: {
                    **rep.summary(),
                    "slack": rep.slack.tolist(),
                    "passed": rep.passed.tolist(),
                    "certified": rep.certified.tolist(),
                }
                for name, rep in self.per_step.items()
            },
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)


def lyapunov(problem: Problem, x, y, lam: float) -> float:
    """Energy f(x) + lam * ||x - y||^2 of the iterate pair (x, y)."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    return problem.value(x) + lam * float(d @ d)


def lyapunov_interval(M: float, params: MomentumParams):
    """Admissible Lyapunov weights and the descent margin at the midpoint.

    Returns (lambda_minus, lambda_plus, lambda_mid, c1). Requires
    alpha <= safe_alpha(M, params); the error names the violated bound.
    """
    a, b, g = params.alpha, params.beta, params.gamma
    bar = safe_alpha(M, params)
    if a > bar * (1.0 + 1e-15):
        if a > 1.0 / M:
            raise ValueError(f"alpha = {a} exceeds 1/M = {1.0 / M}")
        raise ValueError(
            f"alpha = {a} exceeds (1-beta^2)/(2(beta^2+2|beta-gamma|)M) = {bar}"
        )
    lo, hi, mid = _lambda_interval_raw(M, params)
    c1 = min(mid - lo, hi - mid)
    return lo, hi, mid, c1


def _lambda_interval_raw(M, params):
    a, b, g = params.alpha, params.beta, params.gamma
    lo = (1.0 / (2.0 * a) + M / 2.0) * b * b + abs(b - g) * M / 2.0
    hi = 1.0 / (2.0 * a) - abs(b - g) * M / 2.0
    mid = (b * b + 1.0 + M * b * b * a) / (4.0 * a)
    return lo, hi, mid


def gradient_bound_constants(M: float, params: MomentumParams, lam: float):
    """(b_alpha, c2): per-step bounds on ||grad f|| and ||grad H_lam||."""
    a, b, g = params.alpha, params.beta, params.gamma
    b_alpha = math.sqrt(2.0) * max(1.0 / a, abs(b) / a + M * abs(g))
    c2 = math.sqrt(2.0) * max(1.0 / a, abs(b) / a + M * (abs(g) + 1.0) + 4.0 * lam)
    return b_alpha, c2


def step_bound_delta1(L: float, params: MomentumParams) -> float:
    """Velocity bound delta1 with ||x_k - x_{k-1}|| <= delta1 * alpha.

    L is the gradient-norm bound of f itself (as returned by
    estimate_lipschitz); it is rescaled here by 1/(1-beta).
    """
    return params.delta + L / (1.0 - params.beta)


def length_constants(M: float, L: float, params: MomentumParams, m_crit: int):
    """(c3, zeta, eta, kappa) entering the iterate length formula.

    m_crit bounds the number of critical values in the trust region. L is
    again the raw gradient-norm bound of f; the 1/(1-beta) rescaling is
    applied internally.
    """
    if m_crit < 1:
        raise ValueError("m_crit must be >= 1")
    b, g, d = params.beta, params.gamma, params.delta
    L_scaled = L / (1.0 - b)
    c3 = 8.0 * math.sqrt(2.0) * (2.0 + abs(g) + 3.0 * abs(b)) / (1.0 - b * b)
    zeta = 2.0 * math.sqrt(2.0) * (d + L_scaled)
    eta = 2.0 * m_crit * d * d * (b * b + 1.0 + M * b * b) / 4.0
    kappa = 2.0 * m_crit * zeta
    return c3, zeta, eta, kappa


def build_certificate(
    M: float,
    L: float,
    params: MomentumParams,
    ball_center,
    ball_radius: float,
    m_crit: int = 1,
    strict: bool = True,
) -> Certificate:
    """Assemble all constants for a run inside B(ball_center, ball_radius).

    With strict=True an over-large alpha raises (same condition as
    lyapunov_interval); with strict=False the constants are still computed
    so that deliberate violations can be measured, and certified_params
    records the breach.
    """
    bar = safe_alpha(M, params)
    ok = params.alpha <= bar * (1.0 + 1e-15)
    if strict and not ok:
        lyapunov_interval(M, params)  # raises with the violated bound
    lo, hi, mid = _lambda_interval_raw(M, params)
    c1 = min(mid - lo, hi - mid)
    b_alpha, c2 = gradient_bound_constants(M, params, mid)
    c3, zeta, eta, kappa = length_constants(M, L, params, m_crit)
    return Certificate(
        M=M,
        L=L,
        params=params,
        alpha_bar=bar,
        lambda_minus=lo,
        lambda_plus=hi,
        lam=mid,
        c1=c1,
        c2=c2,
        b_alpha=b_alpha,
        delta1=step_bound_delta1(L, params),
        c3=c3,
        zeta=zeta,
        eta=eta,
        kappa=kappa,
        m_crit=m_crit,
        ball_center=np.asarray(ball_center, dtype=float),
        ball_radius=float(ball_radius),
        certified_params=bool(ok),
    )


def _certified_steps(trace: Trace, cert: Certificate) -> np.ndarray:
    """certified[k] for step k = 0..K-1; False from the first ball exit on."""
    K = trace.num_steps
    dist = np.linalg.norm(trace.points - cert.ball_center, axis=1)
    inside = dist <= cert.ball_radius * (1.0 + 1e-12)
    certified = np.ones(K, dtype=bool)
    out = np.nonzero(~inside)[0]
    if out.size:
        # point index i is iterate x_{i-1}; step k touches points k, k+1, k+2
        first_bad_step = max(int(out[0]) - 2, 0)
        certified[first_bad_step:] = False
    return certified


def lyapunov_values(trace: Trace, lam: float) -> np.ndarray:
    """H_lam(z_k) = f(x_k) + lam * ||x_k - x_{k-1}||^2 for k = 0..K."""
    sn = trace.step_norms  # sn[i] = ||x_i - x_{i-1}||, i = 0..K
    return trace.f[1:] + lam * sn**2


def check_descent(trace: Trace, cert: Certificate) -> PerStepReport:
    """Per-step Lyapunov decrease with margin c1.

    slack_k = H(z_k) - H(z_{k+1}) - c1 (||x_{k+1}-x_k||^2 + ||x_k-x_{k-1}||^2);
    a step passes iff slack_k >= -SLACK_RTOL * (1 + |H(z_k)|).
    """
    K = trace.num_steps
    H = lyapunov_values(trace, cert.lam)
    sn = trace.step_norms
    slack = np.empty(K)
    for k in range(K):
        slack[k] = H[k] - H[k + 1] - cert.c1 * (sn[k + 1] ** 2 + sn[k] ** 2)
    tol = SLACK_RTOL * (1.0 + np.abs(H[:K]))
    passed = slack >= -tol
    return PerStepReport("descent", slack, passed, _certified_steps(trace, cert))


def check_gradient_bound(trace: Trace, cert: Certificate) -> PerStepReport:
    """Both per-step gradient bounds: ||grad f(x_k)|| <= b_alpha ||z_{k+1}-z_k||
    and max(||grad H(z_k)||, ||grad H(z_{k+1})||) <= c2 ||z_{k+1}-z_k||.

    The reported slack is the smaller of the two normalized slacks.
    """
    K = trace.num_steps
    lam = cert.lam
    sn = trace.step_norms
    slack = np.empty(K)
    passed = np.empty(K, dtype=bool)
    for k in range(K):
        z_gap = math.hypot(sn[k + 1], sn[k])
        gf = np.linalg.norm(trace.grads[k + 1])
        slack_b = cert.b_alpha * z_gap - gf

        gH_k = _grad_H_norm(trace, k, lam)
        gH_k1 = _grad_H_norm(trace, k + 1, lam)
        slack_c2 = cert.c2 * z_gap - max(gH_k, gH_k1)

        tol_b = SLACK_RTOL * (1.0 + cert.b_alpha * z_gap)
        tol_c = SLACK_RTOL * (1.0 + cert.c2 * z_gap)
        passed[k] = (slack_b >= -tol_b) and (slack_c2 >= -tol_c)
        slack[k] = min(slack_b, slack_c2)
    return PerStepReport("gradient_bound", slack, passed, _certified_steps(trace, cert))


def _grad_H_norm(trace: Trace, k: int, lam: float) -> float:
    # grad H(x, y) = (grad f(x) + 2 lam (x - y), 2 lam (y - x)) at z_k = (x_k, x_{k-1})
    x, y = trace.points[k + 1], trace.points[k]
    d = 2.0 * lam * (x - y)
    top = trace.grads[k + 1] + d
    return math.sqrt(float(top @ top) + float(d @ d))


def check_step_bound(trace: Trace, cert: Certificate) -> PerStepReport:
    """Per-step velocity bounds from the geometric decay of momentum.

    Checks ||x_k - x_{k-1}|| <= delta1 * alpha, the sharper decaying form
    (delta |beta|^k + L/(1-beta)) * alpha, and the paired-step version
    ||z_k - z_{k-1}|| <= sqrt(2) delta1 alpha. Valid for beta >= 0; for
    beta < 0 the printed constant is optimistic and the report says so via
    its slack.
    """
    K = trace.num_steps
    p = cert.params
    sn = trace.step_norms
    L_scaled = cert.L / (1.0 - p.beta)
    slack = np.empty(K)
    passed = np.empty(K, dtype=bool)
    for k in range(K):
        # sn[k+1] = ||x_{k+1} - x_k||, the result of step k
        flat = cert.delta1 * p.alpha - sn[k + 1]
        decay = (p.delta * abs(p.beta) ** (k + 1) + L_scaled) * p.alpha - sn[k + 1]
        z_gap = math.hypot(sn[k + 1], sn[k])
        z_bound = math.sqrt(2.0) * cert.delta1 * p.alpha - z_gap
        tol = SLACK_RTOL * (1.0 + cert.delta1 * p.alpha)
        passed[k] = (flat >= -tol) and (decay >= -tol) and (z_bound >= -tol)
        slack[k] = min(flat, decay, z_bound)
    return PerStepReport("step_bound", slack, passed, _certified_steps(trace, cert))


@dataclass
class LengthReport:
    total_length: float
    bound: float
    ratio: float
    passed: bool
    psi_at_gap: float
    kappa_alpha: float


def check_length_formula(trace: Trace, cert: Certificate, psi) -> LengthReport:
    """Iterate length against psi(f(x_0) - f(x_K) + eta*alpha) + kappa*alpha.

    psi may be a Desingularizer (its sample-covering inflation is applied)
    or any callable; callables are validated to be increasing and concave
    with psi(0) = 0 on a sample grid and rejected otherwise.
    """
    fn = _as_majorant(psi)
    sn = trace.step_norms
    total = float(np.sum(sn[1:]))  # steps k = 0..K-1
    gap = trace.f[1] - trace.f[-1] + cert.eta * cert.params.alpha
    psi_val = float(fn(max(gap, 0.0)))
    bound = psi_val + cert.kappa * cert.params.alpha
    ratio = total / bound if bound > 0 else math.inf
    passed = total <= bound * (1.0 + SLACK_RTOL)
    return LengthReport(total, bound, ratio, bool(passed), psi_val, cert.kappa * cert.params.alpha)


def _as_majorant(psi) -> Callable[[float], float]:
    inflated = getattr(psi, "majorant", None)
    if inflated is not None:
        return inflated
    if not callable(psi):
        raise TypeError("psi must be callable or a Desingularizer")
    if abs(psi(0.0)) > 1e-12:
        raise ValueError("psi(0) must be 0")
    ts = np.linspace(0.0, 10.0, 65)
    vals = np.array([psi(t) for t in ts])
    if np.any(np.diff(vals) <= 0):
        raise ValueError("psi must be strictly increasing")
    second = np.diff(vals, 2)  # uniform grid, so sign tests concavity
    if np.any(second > 1e-9 * (1.0 + np.abs(vals[:-2]))):
        raise ValueError("psi must be concave")
    return psi
