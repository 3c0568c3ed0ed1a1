"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` for the full report. The
criteria pin golden constants, per-step inequality checks on certified runs
of all benchmark families, tracking and length-formula behavior, exponent
recovery, saddle analysis, escape statistics, and CLI determinism, each at
its stated tolerance.
"""

import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from momlab import (
    MomentumParams,
    StopRules,
    build_certificate,
    characteristic_roots,
    check_descent,
    check_gradient_bound,
    check_length_formula,
    check_rate,
    dense_hessian,
    escape_experiment,
    estimate_lipschitz,
    fit_desingularizer,
    length_constants,
    linear_network,
    lyapunov_interval,
    map_jacobian,
    matrix_factorization,
    matrix_sensing,
    measure_length,
    run,
    safe_alpha,
    synthetic,
    tracking_error,
    tracking_ladder,
)

SQRT2 = math.sqrt(2.0)


def report(num, name, ok):
    print(f"\nACCEPTANCE {num:>2} {name}: {'PASS' if ok else 'FAIL'}")
    return ok


def build_benchmark(kind):
    """Seeded instance, start point, and trust radius for each family."""
    rng = np.random.default_rng(42)
    if kind == "quadratic":
        return synthetic("quadratic"), np.array([1.0, 0.0]), 4.0
    if kind == "quartic":
        return synthetic("quartic"), np.array([1.0]), 2.0
    if kind == "matrix_factorization":
        M = rng.standard_normal((4, 4))
        p = matrix_factorization(M, r=2)
        return p, rng.uniform(-0.4, 0.4, p.dim), 6.0
    if kind == "matrix_sensing":
        A = [rng.standard_normal((3, 3)) for _ in range(6)]
        X, Y = rng.standard_normal((3, 1)), rng.standard_normal((3, 1))
        b = [float(np.sum(Ai * (X @ Y.T))) for Ai in A]
        p = matrix_sensing(A, b, r=1)
        return p, rng.uniform(-0.4, 0.4, p.dim), 5.0
    if kind == "linear_network":
        Xb, Yb = rng.standard_normal((2, 4)), rng.standard_normal((2, 4))
        p = linear_network(Xb, Yb, widths=(2, 3, 3, 2))
        return p, rng.uniform(-0.4, 0.4, p.dim), 5.0
    raise ValueError(kind)


BENCHMARKS = ["quadratic", "quartic", "matrix_factorization", "matrix_sensing", "linear_network"]


@pytest.fixture(scope="module")
def certified_runs():
    """One >= 10^3-step certified heavy-ball run per benchmark family."""
    beta, gamma = 0.5, 0.0
    out = {}
    for kind in BENCHMARKS:
        p, x0, R = build_benchmark(kind)
        L, M = estimate_lipschitz(p, x0, R, reach=max(abs(beta), abs(gamma)), seed=0)
        alpha = 0.9 * safe_alpha(M, MomentumParams(1e-6, beta, gamma))
        params = MomentumParams(alpha, beta, gamma)
        m_crit = 1 if kind in ("quadratic", "quartic") else 4
        cert = build_certificate(M, L, params, x0, R, m_crit=m_crit)
        trace = run(p, x0, x0, params, StopRules(max_iters=1200, box_radius=R))
        out[kind] = (p, trace, cert)
    return out


def test_criterion_01_gradient_oracle():
    """Closed-form gradients match central differences on 100 seeded points."""
    from oracles import fd_gradient

    ok = True
    for kind in ("matrix_factorization", "matrix_sensing", "linear_network"):
        p, _, _ = build_benchmark(kind)
        rng = np.random.default_rng(hash(kind) % 2**32)
        for _ in range(100):
            x = rng.uniform(-1.5, 1.5, size=p.dim)
            g = p.gradient(x)
            err = np.linalg.norm(fd_gradient(p.value, x) - g) / (1.0 + np.linalg.norm(g))
            ok = ok and err < 1e-6
    assert report(1, "gradient oracle (3 families x 100 points, rel err < 1e-6)", ok)


def test_criterion_02_lyapunov_descent(certified_runs):
    """100% descent passes with slack >= -1e-9 (1 + |H|) over >= 10^3 steps."""
    ok = True
    for kind, (p, trace, cert) in certified_runs.items():
        rep = check_descent(trace, cert)
        ok = ok and trace.num_steps >= 1000
        ok = ok and rep.n_certified == rep.num_steps  # nothing left the ball
        ok = ok and rep.n_fail == 0
    assert report(2, "Lyapunov descent on 5 benchmark runs", ok)


def test_criterion_03_gradient_bounds(certified_runs):
    """Both per-step gradient bounds hold at every step of the same runs."""
    ok = True
    for kind, (p, trace, cert) in certified_runs.items():
        rep = check_gradient_bound(trace, cert)
        ok = ok and rep.n_certified == rep.num_steps and rep.n_fail == 0
    assert report(3, "gradient bounds b_alpha and c2 on 5 benchmark runs", ok)


def test_criterion_04_constant_golden_values():
    ok = True
    lo, hi, mid, c1 = lyapunov_interval(2.0, MomentumParams(0.5, 0.5, 0.5))
    ok = ok and np.allclose((lo, hi, mid, c1), (0.5, 1.0, 0.75, 0.25), rtol=1e-12)
    ok = ok and abs(safe_alpha(1.0, MomentumParams(0.3, 0.5, 0.0)) - 0.3) < 1e-15
    c3 = length_constants(1.0, 1.0, MomentumParams(0.1, 0.5, 0.5), 1)[0]
    ok = ok and abs(c3 - 8 * SQRT2 * 4 / 0.75) <= 1e-12 * c3
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = rng.uniform(0.05, 20.0)
        beta = rng.uniform(-0.95, 0.95)
        gamma = rng.uniform(-3.0, 3.0)
        frac = rng.uniform(0.05, 1.0)
        params = MomentumParams(frac * safe_alpha(m, MomentumParams(1e-6, beta, gamma)), beta, gamma)
        lo, hi, mid, _ = lyapunov_interval(m, params)
        ok = ok and abs((lo + hi) / 2 - mid) <= 1e-12 * abs(mid)
    assert report(4, "constant golden values + midpoint identity (100 tuples)", ok)


def test_criterion_05_rate_bound(certified_runs):
    """sup_k (k+1) min_i<=k ||grad|| <= b_alpha (delta alpha + 2 length)."""
    ok = True
    for kind, (p, trace, cert) in certified_runs.items():
        total, _ = measure_length(trace)
        rep = check_rate(trace, cert, total)
        ok = ok and rep.passed and rep.telescope_ok
    assert report(5, "running-min gradient rate on 5 benchmark runs", ok)


def test_criterion_06_length_formula_ladder():
    """Quadratic iterate length <= 2 sqrt(gap + eta a) + kappa a on the alpha ladder."""
    p = synthetic("quadratic")
    x0 = np.array([1.0, 0.0])
    beta = 0.5
    L, M = estimate_lipschitz(p, np.zeros(2), 4.0, mode="analytic", reach=beta)
    abar = safe_alpha(M, MomentumParams(1e-6, beta))
    ok = True
    for frac in (1.0, 0.5, 0.25):
        params = MomentumParams(frac * abar, beta)
        cert = build_certificate(M, L, params, np.zeros(2), 4.0, m_crit=1)
        trace = run(p, x0, x0, params, StopRules(max_iters=20000, grad_tol=1e-12))
        rep = check_length_formula(trace, cert, lambda t: 2.0 * math.sqrt(t))
        ok = ok and rep.passed
    assert report(6, "length formula with psi = 2 sqrt(t) at abar, abar/2, abar/4", ok)


def test_criterion_07_kl_exponent_recovery():
    p = synthetic("quadratic")
    x0 = np.array([1.0, 0.0])
    tr = run(p, x0, x0, MomentumParams(0.27, 0.5), StopRules(max_iters=3000))
    psi_q = fit_desingularizer(tr.f[1:], tr.grad_norms[1:], f_star=0.0)
    q = synthetic("quartic")
    tr2 = run(q, np.array([1.0]), np.array([1.0]), MomentumParams(0.02, 0.5),
              StopRules(max_iters=4000))
    psi_4 = fit_desingularizer(tr2.f[1:], tr2.grad_norms[1:], f_star=0.0)
    ok = abs(psi_q.theta - 0.50) <= 0.02 and abs(psi_4.theta - 0.25) <= 0.02
    assert report(7, f"exponent recovery (theta = {psi_q.theta:.3f}, {psi_4.theta:.3f})", ok)


def test_criterion_08_tracking():
    p = synthetic("quadratic")
    x0 = np.array([1.0, 0.0])
    ok = True
    for beta in (0.0, 0.5):
        _, slope = tracking_ladder(p, x0, beta, alphas=[0.1, 0.05, 0.025], horizon=1.0)
        ok = ok and slope >= 0.9
    # closed form for beta = 0, alpha = 0.1 (x_{-1} is ignored by the update)
    alpha = 0.1
    trace = run(p, x0, x0, MomentumParams(alpha=alpha), StopRules(max_iters=10))
    errors, _ = tracking_error(p, trace, horizon=1.0)
    ks = np.arange(11)
    closed = np.abs((1 - alpha) ** ks - np.exp(-alpha * ks))
    ok = ok and np.max(np.abs(errors - closed)) < 1e-6
    assert report(8, "flow tracking: ladder slopes >= 0.9 and beta=0 closed form", ok)


def test_criterion_09_saddle_analysis():
    params = MomentumParams(0.1, 0.5, 0.0)
    r1, _ = characteristic_roots(-1.0, params)
    ok = abs(abs(r1) - 1.1742) <= 1e-4

    rng = np.random.default_rng(3)
    p = matrix_factorization(rng.standard_normal((3, 3)), r=2)  # dim 12, 2n = 24 <= 40
    x = rng.standard_normal(p.dim) * 0.5
    pj = MomentumParams(0.05, 0.4, 0.3)
    J = map_jacobian(p, x, pj)
    eigs = np.linalg.eigvalsh(dense_hessian(p, x))
    for lam in rng.uniform(-2.0, 2.0, size=20):
        det = np.linalg.det(lam * np.eye(2 * p.dim) - J)
        prod = np.prod([
            lam**2 + (pj.alpha * (1 + pj.gamma) * d - (1 + pj.beta)) * lam
            + pj.beta - pj.alpha * pj.gamma * d
            for d in eigs
        ])
        ok = ok and abs(det - prod) <= 1e-8 * abs(prod)

    for d in (-4.0, -1.0, -0.1, -1e-3):
        for beta, gamma in ((0.5, 0.0), (-0.4, 0.2), (0.3, 0.3)):
            roots = characteristic_roots(d, MomentumParams(0.05, beta, gamma))
            ok = ok and max(r.real for r in roots) > 1.0
    assert report(9, "saddle: root golden value, product identity, unstable roots", ok)


def test_criterion_10_escape():
    beta, gamma = 0.5, 0.0
    ok = True

    # indefinite quadratic at the origin
    p = synthetic("indefinite_quadratic")
    m_tilde = 1.0
    alpha = 0.9 * min(safe_alpha(m_tilde, MomentumParams(1e-6, beta, gamma)),
                      abs(beta) / (1.0 + abs(gamma) * m_tilde))
    exp1 = escape_experiment(p, np.zeros(2), MomentumParams(alpha, beta, gamma),
                             radius=1e-3, trials=100, seed=0,
                             stop=StopRules(max_iters=20000, grad_tol=1e-9, box_radius=10.0))
    ok = ok and exp1.escape_fraction == 1.0 and exp1.n_at_saddle == 0

    # matrix factorization origin (3x3 target, rank 1)
    rng = np.random.default_rng(11)
    pmf = matrix_factorization(rng.standard_normal((3, 3)), r=1)
    origin = np.zeros(pmf.dim)
    _, Mm = estimate_lipschitz(pmf, origin, 4.0, reach=beta, seed=0)
    alpha_mf = 0.9 * min(safe_alpha(Mm, MomentumParams(1e-6, beta, gamma)),
                         abs(beta) / (1.0 + abs(gamma) * Mm))
    exp2 = escape_experiment(pmf, origin, MomentumParams(alpha_mf, beta, gamma),
                             radius=1e-3, trials=100, seed=0,
                             stop=StopRules(max_iters=40000, grad_tol=1e-9, box_radius=50.0))
    ok = ok and exp2.escape_fraction == 1.0 and exp2.n_at_saddle == 0

    # the measure-zero exception: a start on the stable axis reaches the saddle
    x0 = np.array([0.5, 0.0])
    tr = run(p, x0, x0, MomentumParams(alpha, beta, gamma),
             StopRules(max_iters=50000, grad_tol=1e-10))
    dist = float(np.linalg.norm(tr.x(tr.num_steps)))
    ok = ok and tr.stop_reason == "grad_tol" and dist <= 10 * 1e-3 * 1e-3
    assert report(10, "escape fractions 1.0 (two saddles) + stable-axis exception", ok)


def test_criterion_11_cli_determinism(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("""
problem: {kind: matrix_factorization, m: 3, n: 3, rank: 1, seed: 9}
params: {alpha: auto, beta: 0.5, preset: heavy_ball}
init: {x0: {random: {radius: 0.4, seed: 4}}}
lipschitz: {mode: sampled, center: x0, radius: 3.0, seed: 0}
stop: {max_iters: 400}
checks: [descent, grad_bounds, rate]
""")
    outs = []
    for name in ("a", "b"):
        res = subprocess.run(
            [sys.executable, "-m", "momlab.cli", "run", "--config", str(cfg),
             "--out", str(tmp_path / name), "--quiet"],
            capture_output=True, text=True, env=dict(os.environ),
        )
        assert res.returncode == 0, res.stderr
        outs.append((tmp_path / name / "trace.csv").read_bytes())
    ok = outs[0] == outs[1]
    assert report(11, "identical config + seed give identical trace.csv", ok)
