"""Batch experiment runner.

Subcommands:

    momlab run    --config cfg.yaml --out DIR    trace + certificate + report
    momlab track  --config cfg.yaml --out DIR    tracking-error ladder
    momlab saddle --config cfg.yaml --out DIR    critical-point analysis + escape study
    momlab sweep  --config cfg.yaml --out DIR    parameter grid

Exit codes: 0 all requested checks pass, 2 at least one check failed,
1 configuration or runtime error. The default output directory comes from
$MOMLAB_OUT (falling back to ./momlab_out). Every output embeds the config
hash and the seeds used; CSV files are deterministic given config + seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import FitError, check_rate, fit_desingularizer, measure_length
from .certificates import (
    build_certificate,
    check_descent,
    check_gradient_bound,
    check_length_formula,
    check_step_bound,
    lyapunov_values,
)
from .config import ConfigError, ExperimentConfig, load_config
from .gradient_flow import tracking_ladder
from .optimizer import StopRules, run, safe_alpha
from .problems import estimate_lipschitz
from .saddle import analyze_critical_point, escape_experiment, saddle_safe_alpha

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECK_FAILED = 2


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _write_csv(path, header, rows, meta: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {meta}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("MOMLAB_OUT") or "momlab_out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr)


def _prepare(cfg: ExperimentConfig, args, seed_offset: int = 0):
    """Resolve init, Lipschitz constants, and the final step size."""
    x0, seeds = cfg.resolve_x0(seed_offset)
    if cfg.x_minus1_spec is not None:
        x_m1 = np.asarray(cfg.x_minus1_spec, dtype=float)
    else:
        x_m1 = x0.copy()

    if cfg.lipschitz_center == "x0":
        center = x0
    elif cfg.lipschitz_center == "origin":
        center = np.zeros(cfg.problem.dim)
    else:
        center = np.asarray(cfg.lipschitz_center, dtype=float)
    radius = cfg.lipschitz_radius or cfg.problem.suggested_box
    reach = max(abs(cfg.beta), abs(cfg.gamma))
    L, M = estimate_lipschitz(
        cfg.problem, center, radius,
        mode=cfg.lipschitz_mode, reach=reach, seed=cfg.lipschitz_seed,
    )
    seeds["lipschitz_seed"] = cfg.lipschitz_seed

    if args.alpha is not None:
        alpha = args.alpha
    elif cfg.alpha_spec == "auto":
        alpha = 0.9 * safe_alpha(M, cfg.momentum_params(1e-6))
    else:
        alpha = cfg.alpha_spec
    params = cfg.momentum_params(alpha)
    return x0, x_m1, center, radius, L, M, params, seeds


def _run_and_certify(cfg: ExperimentConfig, args, seed_offset: int = 0):
    x0, x_m1, center, radius, L, M, params, seeds = _prepare(cfg, args, seed_offset)
    stop = cfg.stop
    if math.isinf(stop.box_radius):
        # keep iterates inside the certified ball by default
        slack = radius - float(np.linalg.norm(x0 - center))
        stop = StopRules(stop.max_iters, stop.grad_tol, max(slack, 1e-6))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        trace = run(cfg.problem, x_m1, x0, params, stop)
    cert = build_certificate(M, L, params, center, radius, cfg.m_crit, strict=False)

    results = {}
    if "descent" in cfg.checks:
        cert.per_step["descent"] = check_descent(trace, cert)
    if "grad_bounds" in cfg.checks:
        cert.per_step["gradient_bound"] = check_gradient_bound(trace, cert)
    if "step_bounds" in cfg.checks:
        cert.per_step["step_bound"] = check_step_bound(trace, cert)
    total_length, _ = measure_length(trace)
    if "rate" in cfg.checks:
        results["rate"] = check_rate(trace, cert, total_length)
    psi = None
    if "kl_fit" in cfg.checks or "length" in cfg.checks:
        f_star = cfg.problem.info.get("f_star")
        try:
            psi = fit_desingularizer(trace.f[1:], trace.grad_norms[1:], f_star=f_star)
        except FitError as e:
            results["kl_fit_error"] = str(e)
    if "length" in cfg.checks and psi is not None:
        results["length"] = check_length_formula(trace, cert, psi)
    return trace, cert, results, psi, total_length, seeds


def _passed_everything(trace, cert, results) -> bool:
    ok = all(rep.all_pass for rep in cert.per_step.values())
    if "rate" in results:
        ok = ok and results["rate"].passed
    if "length" in results:
        ok = ok and results["length"].passed
    if cert.per_step or results:
        # a run that diverged or abandoned the certified ball cannot certify,
        # even though the out-of-ball steps themselves are only 'uncertified'
        ok = ok and trace.stop_reason not in ("diverged", "left_box")
    return ok


def _trace_csv_rows(trace, cert):
    H = lyapunov_values(trace, cert.lam)
    descent = cert.per_step.get("descent")
    gradb = cert.per_step.get("gradient_bound")
    gn = trace.grad_norms
    sn = trace.step_norms
    rows = []
    for k in range(trace.num_steps + 1):
        is_step = k < trace.num_steps
        rows.append([
            k,
            _fmt(trace.f[k + 1]),
            _fmt(gn[k + 1]),
            _fmt(sn[k + 1]) if is_step else "",
            _fmt(H[k]),
            _fmt(descent.slack[k]) if descent is not None and is_step else "",
            _fmt(gradb.slack[k]) if gradb is not None and is_step else "",
        ])
    return rows


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args)
    trace, cert, results, psi, total_length, seeds = _run_and_certify(cfg, args)
    meta = f"config_sha256={cfg.config_hash} seeds={json.dumps(seeds, sort_keys=True)}"

    _write_csv(
        out / "trace.csv",
        ["k", "f", "grad_norm", "step_norm", "H_lambda", "descent_slack", "gradbound_slack"],
        _trace_csv_rows(trace, cert),
        meta,
    )
    cert.to_json(out / "certificate.json")
    report = {
        "meta": {
            "config_sha256": cfg.config_hash,
            "seeds": seeds,
            "version": __version__,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        },
        "problem": cfg.problem.name,
        "stop_reason": trace.stop_reason,
        "iterations": trace.num_steps,
        "final_f": float(trace.f[-1]),
        "final_grad_norm": float(trace.grad_norms[-1]),
        "total_length": total_length,
        "constants": cert.constants(),
        "checks": {name: rep.summary() for name, rep in cert.per_step.items()},
        "notes": list(cfg.notes),
    }
    if "rate" in results:
        report["rate"] = results["rate"].summary()
    if "length" in results:
        rep = results["length"]
        report["length"] = {
            "total_length": rep.total_length,
            "bound": rep.bound,
            "ratio": rep.ratio,
            "passed": rep.passed,
        }
    if psi is not None:
        report["kl_fit"] = {
            "c": psi.c,
            "theta": psi.theta,
            "inflation": psi.inflation,
            "r2": psi.r2,
            "n_samples": psi.n_samples,
            "empirical": True,
        }
    if "kl_fit_error" in results:
        report["kl_fit"] = {"error": results["kl_fit_error"]}
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=1)

    ok = _passed_everything(trace, cert, results)
    for name, rep in cert.per_step.items():
        _say(args, f"{name}: {rep.n_pass}/{rep.n_certified} certified steps pass"
                   f" (min slack {rep.min_slack:.3e})")
    if "rate" in results:
        _say(args, f"rate: sup (k+1)*min||grad|| = {results['rate'].sup_product:.6g}"
                   f" <= c_alpha = {results['rate'].c_alpha:.6g}: {results['rate'].passed}")
    if "length" in results:
        _say(args, f"length: {results['length'].total_length:.6g}"
                   f" <= {results['length'].bound:.6g}: {results['length'].passed}")
    _say(args, f"outputs in {out}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_track(args) -> int:
    cfg = load_config(args.config)
    if cfg.track is None:
        raise ConfigError("track: section required for the track command")
    out = _out_dir(args)
    x0, seeds = cfg.resolve_x0()
    maxes, slope = tracking_ladder(
        cfg.problem, x0, cfg.beta, cfg.track["alphas"], cfg.track["horizon"]
    )
    meta = f"config_sha256={cfg.config_hash} seeds={json.dumps(seeds, sort_keys=True)}"
    _write_csv(
        out / "tracking.csv",
        ["alpha", "max_error"],
        [[_fmt(a), _fmt(m)] for a, m in zip(cfg.track["alphas"], maxes)],
        meta,
    )
    report = {
        "meta": {"config_sha256": cfg.config_hash, "seeds": seeds, "version": __version__,
                 "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S")},
        "problem": cfg.problem.name,
        "beta": cfg.beta,
        "horizon": cfg.track["horizon"],
        "alphas": cfg.track["alphas"],
        "max_errors": maxes,
        "loglog_slope": slope,
        "notes": list(cfg.notes),
    }
    with open(out / "tracking_report.json", "w") as fh:
        json.dump(report, fh, indent=1)
    _say(args, f"tracking slope {slope:.4f} over {len(maxes)} step sizes; outputs in {out}")
    return EXIT_OK


def cmd_saddle(args) -> int:
    cfg = load_config(args.config)
    if cfg.saddle is None:
        raise ConfigError("saddle: section required for the saddle command")
    if cfg.beta == 0.0:
        raise ConfigError(
            "params.beta: the escape guarantee requires beta != 0; "
            "set a nonzero momentum coefficient"
        )
    out = _out_dir(args)
    point = (
        np.zeros(cfg.problem.dim)
        if cfg.saddle["point"] == "origin"
        else np.asarray(cfg.saddle["point"], dtype=float)
    )
    gn = float(np.linalg.norm(cfg.problem.gradient(point)))
    if gn > 1e-8:
        print(f"error: candidate point is not critical: ||grad f|| = {gn:.3e}",
              file=sys.stderr)
        return EXIT_ERROR

    # probe step size: alpha 'auto' uses both ceilings
    probe = cfg.momentum_params(1e-6)
    analysis = analyze_critical_point(cfg.problem, point, probe)
    m_tilde = float(np.max(np.abs(analysis.hessian_eigs)))
    if cfg.alpha_spec == "auto" and args.alpha is None:
        alpha = 0.9 * min(
            safe_alpha(max(m_tilde, 1e-12), probe), saddle_safe_alpha(m_tilde, probe)
        )
    else:
        alpha = args.alpha if args.alpha is not None else cfg.alpha_spec
    params = cfg.momentum_params(alpha)
    # report map spectrum at the step size actually used
    analysis = analyze_critical_point(cfg.problem, point, params)

    report = {
        "meta": {"config_sha256": cfg.config_hash, "version": __version__,
                 "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S")},
        "problem": cfg.problem.name,
        "analysis": analysis.to_dict(),
        "alpha": alpha,
        "notes": list(cfg.notes),
    }
    if analysis.classification == "strict_saddle":
        exp = escape_experiment(
            cfg.problem, point, params,
            radius=cfg.saddle["radius"], trials=cfg.saddle["trials"],
            seed=cfg.saddle["seed"],
            stop=StopRules(cfg.stop.max_iters, max(cfg.stop.grad_tol, 1e-9),
                           cfg.stop.box_radius if not math.isinf(cfg.stop.box_radius) else 100.0),
            workers=args.workers,
        )
        exp.to_json(out / "escape.json")
        report["escape_fraction"] = exp.escape_fraction
        report["n_at_saddle"] = exp.n_at_saddle
        report["n_inconclusive"] = exp.n_inconclusive
        _say(args, f"strict saddle: escape fraction {exp.escape_fraction:.3f} "
                   f"over {exp.trials} trials")
    else:
        _say(args, f"candidate classified {analysis.classification}; no escape study run")
    with open(out / "saddle_report.json", "w") as fh:
        json.dump(report, fh, indent=1)
    _say(args, f"outputs in {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if cfg.sweep is None:
        raise ConfigError("sweep: section required for the sweep command")
    out = _out_dir(args)
    grid = [
        (a, b, g, s)
        for a in cfg.sweep["alphas"]
        for b in cfg.sweep["betas"]
        for g in cfg.sweep["gammas"]
        for s in cfg.sweep["seeds"]
    ]

    def one_cell(cell):
        a, b, g, s = cell
        raw = dict(cfg.raw)
        raw["params"] = dict(raw.get("params", {}), alpha=a if a != "auto" else "auto",
                             beta=b, gamma=g)
        raw.pop("sweep", None)
        from .config import parse_config

        sub = parse_config(raw)
        sub_args = argparse.Namespace(alpha=None, quiet=True, out=None, workers=1)
        trace, cert, results, _, total_length, _ = _run_and_certify(sub, sub_args, seed_offset=s)
        descent = cert.per_step.get("descent")
        return [
            _fmt(cert.params.alpha), _fmt(b), _fmt(g), s,
            int(trace.stop_reason == "grad_tol"),
            _fmt(total_length),
            _fmt(descent.min_slack) if descent is not None and descent.n_certified else "",
            _fmt(results["rate"].sup_product) if "rate" in results else "",
        ]

    workers = max(1, args.workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one_cell, grid))
    else:
        rows = [one_cell(c) for c in grid]

    meta = f"config_sha256={cfg.config_hash} cells={len(grid)}"
    _write_csv(
        out / "sweep.csv",
        ["alpha", "beta", "gamma", "seed", "converged", "length", "min_slack", "rate_sup"],
        rows,
        meta,
    )
    _say(args, f"swept {len(grid)} cells; outputs in {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momlab",
        description="momentum-method experiments with executable certificates",
    )
    parser.add_argument("--version", action="version", version=f"momlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("track", cmd_track),
                     ("saddle", cmd_saddle), ("sweep", cmd_sweep)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML experiment config")
        sp.add_argument("--out", default=None, help="output directory (default $MOMLAB_OUT)")
        sp.add_argument("--seed", type=int, default=None, help="override problem seed")
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--alpha", type=float, default=None, help="override step size")
        sp.add_argument("--quiet", action="store_true")
        sp.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None:
        # seed override is applied by rewriting the config's problem seed
        try:
            cfg_raw = load_config(args.config).raw
        except ConfigError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_ERROR
        cfg_raw.setdefault("problem", {})["seed"] = args.seed
        import tempfile

        import yaml as _yaml

        tmp = tempfile.NamedTemporaryFile(
            "w", suffix=".yaml", delete=False, prefix="momlab_cfg_"
        )
        _yaml.safe_dump(cfg_raw, tmp)
        tmp.close()
        args.config = tmp.name
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:  # runtime failures also map to exit 1
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
