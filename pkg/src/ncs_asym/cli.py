"""Command-line interface.

Subcommands:
  solve           Riccati solve + gain synthesis -> riccati.json, gains.json
  simulate        Monte Carlo run -> summary.csv, msq.csv, traj_<r>.csv
  check           assumption + stabilization report -> stdout, check.json
  reproduce-auuv  regenerate the underwater-vehicle study -> fig*.csv

Exit codes: 0 success, 1 bad config/input, 2 mathematical failure (the
failing certificate or block is named on stderr).

All CSV floats use 17 significant digits, and all randomness is keyed by
(master_seed, replicate), so repeated runs are byte-identical regardless
of NCS_ASYM_THREADS.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import controller, estimator, model, riccati, sim
from .errors import (BadProbability, DimensionMismatch, NcsError, NeedPW,
                     NotPD, NotPSD)

CONFIG_ERRORS = (DimensionMismatch, NotPSD, NotPD, BadProbability, NeedPW,
                 OSError, json.JSONDecodeError, KeyError, ValueError)


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(c) if isinstance(c, (int, np.integer))
                              else _fmt(c) for c in row) + "\n")


def _load_config(path: str) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    if "spec" not in cfg:
        raise KeyError("config is missing the 'spec' object")
    return cfg


def _spec_from_config(cfg: dict, p: float | None = None) -> model.ValidatedSpec:
    d = dict(cfg["spec"])
    if p is not None:
        d["p"] = p
    return model.validate_spec(model.SystemSpec.from_dict(d))


def _tolerances(cfg: dict, tol_flag: float | None):
    tols = cfg.get("tolerances", {})
    are_tol = tol_flag if tol_flag is not None else tols.get("are_tol", 1e-10)
    max_iter = int(tols.get("are_max_iter", 100000))
    return are_tol, max_iter


def _mat(x: np.ndarray) -> list:
    return np.asarray(x, dtype=float).tolist()


def _solve_finite(spec):
    aug = model.augment(spec)
    steps = riccati.finite_horizon_recursion(aug)
    gains = controller.synthesize_finite(steps)
    return steps, gains


def _solve_stationary(spec, are_tol, max_iter):
    aug = model.augment(spec)
    sol = riccati.solve_are(aug, tol=are_tol, max_iter=max_iter)
    gains = controller.synthesize_stationary(sol)
    return sol, gains


def _riccati_json_finite(steps) -> dict:
    return {"mode": "finite", "N": len(steps) - 1,
            "steps": [{"k": st.k, "P_W": _mat(st.P_W), "P_P": _mat(st.P_P),
                       "Delta": _mat(st.Delta), "Gamma": _mat(st.Gamma),
                       "M": _mat(st.M), "Omega": _mat(st.Omega),
                       "L": _mat(st.L)} for st in steps]}


def _riccati_json_stationary(sol) -> dict:
    c = sol.certificates
    return {"mode": "stationary", "P_W": _mat(sol.P_W), "P_P": _mat(sol.P_P),
            "Delta": _mat(sol.Delta), "Gamma": _mat(sol.Gamma),
            "M": _mat(sol.M), "Omega": _mat(sol.Omega), "L": _mat(sol.L),
            "iterations": sol.iterations,
            "residual_W": sol.residual_W, "residual_P": sol.residual_P,
            "certificates": {"P_W_pd": c.P_W_pd, "Delta_pd": c.Delta_pd,
                             "spectral_ok": c.spectral_ok,
                             "spectral_value": c.spectral_value}}


def cmd_solve(args) -> int:
    cfg = _load_config(args.config)
    spec = _spec_from_config(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mode = cfg.get("mode", "finite")
    are_tol, max_iter = _tolerances(cfg, args.tol)
    if mode == "finite":
        steps, gains = _solve_finite(spec)
        rj = _riccati_json_finite(steps)
    elif mode == "stationary":
        sol, gains = _solve_stationary(spec, are_tol, max_iter)
        rj = _riccati_json_stationary(sol)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    with open(out / "riccati.json", "w") as fh:
        json.dump(rj, fh, indent=2)
    with open(out / "gains.json", "w") as fh:
        json.dump(gains.to_dict(), fh, indent=2)
    print(f"wrote {out / 'riccati.json'} and {out / 'gains.json'}")
    return 0


def _simulate_one(spec, mode, gains, replicates, seed):
    """One Monte Carlo run plus its analytic counterparts."""
    horizon = spec.N
    cov = estimator.covariance_schedule(spec, horizon + 1)
    if mode == "finite":
        result = sim.monte_carlo(spec, gains["gains"], replicates, seed, cov=cov)
        analytic = controller.analytic_cost_finite(
            spec, gains["steps"], cov).analytic
        mean_cost, std_err = result.mean_cost, result.cost_std_err
    else:
        tail = (horizon + 1) // 2
        result = sim.monte_carlo(spec, gains["gains"], replicates, seed,
                                 cov=cov, stage_tail_window=tail)
        analytic = controller.analytic_cost_stationary(
            spec, gains["sol"], estimator.covariance_limit(spec)).analytic
        good = ~np.isnan(result.tail_stage)
        vals = result.tail_stage[good]
        mean_cost = float(vals.mean())
        std_err = float(vals.std(ddof=1) / np.sqrt(len(vals)))
    msq_ana = sim.msq_analytic(spec, gains["gains"], horizon)
    return result, analytic, mean_cost, std_err, msq_ana


def _prepare_gains(spec, mode, are_tol, max_iter, gains_file=None):
    """Solve (or load) whatever _simulate_one needs for this mode."""
    out = {}
    if mode == "finite":
        steps = riccati.finite_horizon_recursion(model.augment(spec))
        out["steps"] = steps
        if gains_file:
            with open(gains_file) as fh:
                out["gains"] = controller.GainSchedule.from_dict(json.load(fh))
        else:
            out["gains"] = controller.synthesize_finite(steps)
    else:
        sol = riccati.solve_are(model.augment(spec), tol=are_tol,
                                max_iter=max_iter)
        out["sol"] = sol
        if gains_file:
            with open(gains_file) as fh:
                out["gains"] = controller.GainSchedule.from_dict(json.load(fh))
        else:
            out["gains"] = controller.synthesize_stationary(sol)
    return out


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mode = cfg.get("mode", "finite")
    if mode not in ("finite", "stationary"):
        raise ValueError(f"unknown mode {mode!r}")
    replicates = args.replicates or int(cfg.get("replicates", 10000))
    seed = args.seed if args.seed is not None else int(cfg.get("master_seed", 0))
    are_tol, max_iter = _tolerances(cfg, args.tol)
    p_grid = cfg.get("p_grid")
    if p_grid is not None and args.gains:
        raise ValueError("--gains cannot be combined with a p_grid config")

    summary_rows = []
    msq_rows = []
    single = p_grid is None
    for p in ([None] if single else p_grid):
        spec = _spec_from_config(cfg, p)
        gains = _prepare_gains(spec, mode, are_tol, max_iter, args.gains)
        result, analytic, mean_cost, std_err, msq_ana = _simulate_one(
            spec, mode, gains, replicates, seed)
        summary_rows.append((spec.p, replicates, mean_cost, std_err, analytic))
        for k in range(spec.N + 1):
            row = (k, result.msq_state[k], msq_ana[k])
            msq_rows.append(row if single else (spec.p,) + row)
        if single:
            for r in range(min(10, replicates)):
                records = sim.run_replicate(spec, gains["gains"], seed, r)
                _write_traj(out / f"traj_{r}.csv", spec, records)
        if result.diverged:
            print(f"p={spec.p}: {result.diverged} replicate(s) diverged and "
                  "were excluded from moments", file=sys.stderr)

    _write_csv(out / "summary.csv",
               ["p", "replicates", "mean_cost", "std_err", "analytic_cost"],
               summary_rows)
    header = ["k", "msq_empirical", "msq_analytic"]
    _write_csv(out / "msq.csv", header if single else ["p"] + header, msq_rows)
    print(f"wrote {out / 'summary.csv'} and {out / 'msq.csv'}")
    return 0


def _write_traj(path: Path, spec, records) -> None:
    header = (["k", "beta"] + [f"x_{i}" for i in range(spec.n)]
              + [f"xhatW_{i}" for i in range(spec.n)]
              + [f"xhatP_{i}" for i in range(spec.n)]
              + [f"uW_{i}" for i in range(spec.w)]
              + [f"uP_{i}" for i in range(spec.q)] + ["stage_cost"])
    rows = [(r.k, r.beta_k, *r.x_k, *r.x_hat_W, *r.x_hat_P,
             *r.u_W_k, *r.u_P_k, r.stage_cost) for r in records]
    _write_csv(path, header, rows)


def cmd_check(args) -> int:
    cfg = _load_config(args.config)
    spec = _spec_from_config(cfg)
    are_tol, max_iter = _tolerances(cfg, args.tol)
    report = model.check_assumptions(spec)
    noisy = bool(np.linalg.norm(spec.Q_omega) > 0.0)

    sol = None
    solve_error = None
    try:
        sol = riccati.solve_are(model.augment(spec), tol=are_tol,
                                max_iter=max_iter)
    except NcsError as exc:
        solve_error = str(exc)
    verdict = riccati.stabilization_verdict(sol, with_additive_noise=noisy)
    unique = None
    if sol is not None:
        unique = riccati.uniqueness_check(spec, sol)

    print(f"assumptions: weights={report.a1_weights} "
          f"observable/detectable={report.a2_observable_detectable} "
          f"stabilizable={report.a3_stabilizable}")
    if sol is not None:
        c = sol.certificates
        print(f"stationary solve: {sol.iterations} iterations, residuals "
              f"{sol.residual_W:.3e}/{sol.residual_P:.3e}")
        print(f"certificates: P_W_pd={c.P_W_pd} Delta_pd={c.Delta_pd} "
              f"spectral={c.spectral_value:.6f} ({'ok' if c.spectral_ok else 'FAIL'})")
        print(f"uniqueness conditions hold: {unique.unique}")
    else:
        print(f"stationary solve failed: {solve_error}")
    kind = "bounded second moments" if noisy else "stabilizable"
    print(f"verdict ({'noisy' if noisy else 'noiseless'}): "
          f"{kind if verdict.ok else 'NEGATIVE'} ({verdict.reason})")

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "assumptions": {"a1_weights": report.a1_weights,
                            "a2_observable_detectable": report.a2_observable_detectable,
                            "a3_stabilizable": report.a3_stabilizable},
            "verdict": {"ok": verdict.ok, "reason": verdict.reason,
                        "with_additive_noise": verdict.with_additive_noise},
            "unique": None if unique is None else unique.unique,
        }
        if sol is not None:
            payload["solution"] = _riccati_json_stationary(sol)
        with open(out / "check.json", "w") as fh:
            json.dump(payload, fh, indent=2)
    if not verdict.ok:
        print(f"stabilization check failed: {verdict.reason}", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# the underwater-vehicle study

def _packaged_config(name: str) -> dict:
    text = (resources.files("ncs_asym") / "configs" / name).read_text()
    return json.loads(text)


def cmd_reproduce_auuv(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = _packaged_config("auuv_finite.json")
    seed = args.seed if args.seed is not None else int(base["master_seed"])
    replicates = args.replicates or int(base["replicates"])

    # velocity traces for three dropout rates, common random numbers
    vel = {}
    for p in (0.0, 0.5, 1.0):
        spec = _spec_from_config(base, p)
        gains = _prepare_gains(spec, "finite", 1e-10, 100000)
        res = sim.monte_carlo(spec, gains["gains"], min(replicates, 2000),
                              seed, collect_controls=True)
        vel[p] = res.mean_u_W[:, 0] + res.mean_u_P[:, 0]
    _write_csv(out / "fig3.csv", ["k", "v_p0", "v_p05", "v_p1"],
               [(k, vel[0.0][k], vel[0.5][k], vel[1.0][k])
                for k in range(len(vel[0.0]))])

    # optimal cost against dropout rate, analytic and empirical
    rows = []
    for p in (0.0, 0.25, 0.5, 0.75, 1.0):
        spec = _spec_from_config(base, p)
        gains = _prepare_gains(spec, "finite", 1e-10, 100000)
        result, analytic, mean_cost, std_err, _ = _simulate_one(
            spec, "finite", gains, replicates, seed)
        rows.append((spec.p, analytic, mean_cost, std_err))
    _write_csv(out / "fig4.csv", ["p", "analytic_cost", "mc_cost", "std_err"], rows)

    # mean-square state trajectories, stationary gains
    for name, cfg_name in (("fig5.csv", "auuv_fig5_noiseless.json"),
                           ("fig6.csv", "auuv_fig6_noisy.json")):
        cfg = _packaged_config(cfg_name)
        spec = _spec_from_config(cfg)
        g = _prepare_gains(spec, "stationary", 1e-10, 100000)
        fig_seed = args.seed if args.seed is not None else int(cfg["master_seed"])
        fig_reps = args.replicates or int(cfg["replicates"])
        res = sim.monte_carlo(spec, g["gains"], fig_reps, fig_seed)
        msq_ana = sim.msq_analytic(spec, g["gains"], spec.N)
        _write_csv(out / name, ["k", "msq_empirical", "msq_analytic"],
                   [(k, res.msq_state[k], msq_ana[k]) for k in range(spec.N + 1)])
        if name == "fig6.csv":
            ss = sim.msq_steady_state(spec, g["sol"])
            print(f"fig6 steady-state mean square: {ss:.6f} "
                  f"(final analytic {msq_ana[-1]:.6f})")

    print(f"wrote fig3.csv fig4.csv fig5.csv fig6.csv under {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ncs-asym",
        description="optimal control of a networked system with two "
                    "controllers holding asymmetric information")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        if config_required:
            sp.add_argument("--config", required=True, help="experiment config JSON")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="master seed (u64)")
        sp.add_argument("--replicates", type=int, default=None)
        sp.add_argument("--tol", type=float, default=None,
                        help="stationary solve tolerance")

    sp = sub.add_parser("solve", help="Riccati solve and gain synthesis")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("simulate", help="Monte Carlo simulation")
    common(sp)
    sp.add_argument("--gains", default=None,
                    help="re-ingest a gains.json instead of solving")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("check", help="assumption and stabilization report")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--replicates", type=int, default=None)
    sp.add_argument("--tol", type=float, default=None)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("reproduce-auuv",
                        help="regenerate the underwater-vehicle figures")
    common(sp, config_required=False)
    sp.set_defaults(func=cmd_reproduce_auuv)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NcsError as exc:
        print(f"mathematical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
