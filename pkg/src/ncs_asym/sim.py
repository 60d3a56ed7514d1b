"""Monte Carlo simulation of the closed loop, plus mean-square analytics.

Replicates are independent and reproducible: replicate r draws all of its
randomness from a counter-based Philox stream keyed by (master_seed, r),
in a fixed block order (initial state, dropout uniforms, process noise,
observation noise).  Batches are evaluated in fixed 2048-replicate chunks
regardless of worker count, and chunk results are merged in chunk order,
so every statistic and exported byte is independent of NCS_ASYM_THREADS.

Replicates whose state norm passes 1e12 are flagged as diverged: they
stay in the replicate count but are excluded from every moment estimate.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import _linalg as lin
from .controller import GainSchedule
from .errors import NotStable, ScheduleMismatch
from .estimator import (CovarianceStep, covariance_limit, covariance_schedule,
                        remote_error_covariance_limit)
from .model import ValidatedSpec
from .riccati import AreSolution

logger = logging.getLogger(__name__)

CHUNK = 2048
DIVERGE_NORM = 1e12


@dataclass(frozen=True)
class ChannelModel:
    """Bernoulli erasure channel with detected drops; p = drop probability."""

    p: float

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """True where the packet got through (probability 1 - p)."""
        return rng.random(size) >= self.p


@dataclass(frozen=True)
class TrajectoryRecord:
    """One simulated step."""

    k: int
    x_k: np.ndarray
    beta_k: int
    y_P_k: np.ndarray
    x_hat_W: np.ndarray
    x_hat_P: np.ndarray
    u_W_k: np.ndarray
    u_P_k: np.ndarray
    stage_cost: float


@dataclass(frozen=True)
class SimResult:
    """Aggregated Monte Carlo output."""

    replicates: int
    diverged: int
    mean_cost: float
    cost_std_err: float
    msq_state: np.ndarray          # E[x_k' x_k] for k = 0..N
    costs: np.ndarray              # per replicate, nan where diverged
    master_seed: int
    tail_msq: np.ndarray | None = None     # per-replicate tail mean of x'x
    tail_stage: np.ndarray | None = None   # per-replicate tail mean stage cost
    probe: dict | None = None              # state/estimates at probe_step
    mean_u_W: np.ndarray | None = None     # per-step mean remote input
    mean_u_P: np.ndarray | None = None     # per-step mean embedded input


def replicate_stream(master_seed: int, r: int) -> np.random.Generator:
    """Substream for replicate r; key layout (master_seed, r)."""
    return np.random.Generator(np.random.Philox(key=(int(master_seed) << 64) + r))


def _noise_factors(spec: ValidatedSpec):
    return (lin.psd_factor(spec.sigma), lin.psd_factor(spec.Q_omega),
            lin.psd_factor(spec.Q_v))


def _draw_noise(spec: ValidatedSpec, horizon: int, rng: np.random.Generator,
                factors, channel: ChannelModel):
    """All randomness for one replicate, in the fixed block order."""
    Ls, Lw, Lv = factors
    x0 = spec.mu + Ls @ rng.standard_normal(spec.n)
    beta = channel.draw(rng, horizon + 1)
    omega = rng.standard_normal((horizon + 1, spec.n)) @ Lw.T
    v = rng.standard_normal((horizon + 1, spec.m)) @ Lv.T
    return x0, beta, omega, v


def _simulate_chunk(spec: ValidatedSpec, gains: GainSchedule,
                    cov: list[CovarianceStep], horizon: int,
                    master_seed: int, start: int, size: int,
                    record: bool = False, probe_step: int | None = None,
                    collect_controls: bool = False):
    """Simulate replicates [start, start+size); vectorized over the chunk."""
    A, B_W, B_P, H = spec.A, spec.B_W, spec.B_P, spec.H
    Q, R_W, R_P = spec.Q, spec.R_W, spec.R_P
    n, m = spec.n, spec.m
    channel = ChannelModel(spec.p)
    factors = _noise_factors(spec)

    x0 = np.empty((size, n))
    beta = np.empty((size, horizon + 1), dtype=bool)
    omega = np.empty((size, horizon + 1, n))
    v = np.empty((size, horizon + 1, m))
    for i in range(size):
        rng = replicate_stream(master_seed, start + i)
        x0[i], beta[i], omega[i], v[i] = _draw_noise(
            spec, horizon, rng, factors, channel)

    x = x0
    xW_pred = np.tile(spec.mu, (size, 1))
    xP_pred = np.tile(spec.mu, (size, 1))
    stages = np.empty((size, horizon + 1))
    xx = np.empty((size, horizon + 1))
    bad = np.zeros(size, dtype=bool)
    if record:
        rec = {name: np.empty((size, horizon + 1, d)) for name, d in
               (("x", n), ("y", m), ("xhW", n), ("xhP", n),
                ("uW", spec.w), ("uP", spec.q))}
    if collect_controls:
        uWs = np.empty((size, horizon + 1, spec.w))
        uPs = np.empty((size, horizon + 1, spec.q))
    probe = None

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(horizon + 1):
            K_W, K_Phat, K_Ptilde = gains.at(k)
            G = cov[k].gain
            y = x @ H.T + v[:, k]
            xPP = xP_pred + (y - xP_pred @ H.T) @ G.T
            b = beta[:, k][:, None]
            # remote side sees only the dropout-gated state; embedded side
            # additionally folds in the local observation
            xhW = np.where(b, x, xW_pred)
            xhP = np.where(b, x, xPP)
            if record and logger.isEnabledFor(logging.DEBUG):
                logger.debug(
                    "k=%d audit: remote consumed {beta=%d%s}; embedded "
                    "consumed {beta, y_P%s}", k, int(beta[0, k]),
                    ", x" if beta[0, k] else "", ", x" if beta[0, k] else "")
            uW = -(xhW @ K_W.T)
            uhP = -(xhW @ K_Phat.T)
            ucorr = -((xhP - xhW) @ K_Ptilde.T)
            uP = uhP + ucorr
            stages[:, k] = (np.einsum("ri,ij,rj->r", x, Q, x)
                            + np.einsum("ri,ij,rj->r", uW, R_W, uW)
                            + np.einsum("ri,ij,rj->r", uP, R_P, uP))
            xx[:, k] = np.einsum("ri,ri->r", x, x)
            if record:
                rec["x"][:, k] = x
                rec["y"][:, k] = y
                rec["xhW"][:, k] = xhW
                rec["xhP"][:, k] = xhP
                rec["uW"][:, k] = uW
                rec["uP"][:, k] = uP
            if collect_controls:
                uWs[:, k] = uW
                uPs[:, k] = uP
            if probe_step is not None and k == probe_step:
                probe = {"x": x.copy(), "x_hat_W": xhW.copy(),
                         "x_hat_P": xhP.copy()}
            x = x @ A.T + uW @ B_W.T + uP @ B_P.T + omega[:, k]
            xW_pred = xhW @ A.T + uW @ B_W.T + uhP @ B_P.T
            xP_pred = xhP @ A.T + uW @ B_W.T + uP @ B_P.T
            bad |= ~np.isfinite(xx[:, k]) | (xx[:, k] > DIVERGE_NORM ** 2)

        terminal = np.einsum("ri,ij,rj->r", x, spec.P_terminal, x)
        bad |= ~np.isfinite(terminal)
        costs = stages.sum(axis=1) + terminal

    out = {"costs": costs, "good": ~bad, "stages": stages, "xx": xx,
           "beta": beta, "probe": probe}
    if record:
        out["rec"] = rec
    if collect_controls:
        g = ~bad
        out["uW_sum"] = uWs[g].sum(axis=0)
        out["uP_sum"] = uPs[g].sum(axis=0)
    return out


def run_replicate(spec: ValidatedSpec, gains: GainSchedule,
                  stream_or_seed, replicate: int = 0,
                  cov: list[CovarianceStep] | None = None) -> list[TrajectoryRecord]:
    """Simulate a single replicate and return its per-step records.

    stream_or_seed is the master seed (int); the replicate's substream is
    derived from (master_seed, replicate) exactly as monte_carlo does it.
    """
    master_seed = int(stream_or_seed)
    if cov is None:
        cov = covariance_schedule(spec, spec.N)
    _check_schedules(spec, gains, cov, spec.N)
    out = _simulate_chunk(spec, gains, cov, spec.N, master_seed,
                          replicate, 1, record=True)
    rec = out["rec"]
    records = []
    for k in range(spec.N + 1):
        records.append(TrajectoryRecord(
            k=k, x_k=rec["x"][0, k], beta_k=int(out["beta"][0, k]),
            y_P_k=rec["y"][0, k], x_hat_W=rec["xhW"][0, k],
            x_hat_P=rec["xhP"][0, k], u_W_k=rec["uW"][0, k],
            u_P_k=rec["uP"][0, k], stage_cost=float(out["stages"][0, k])))
    return records


def _check_schedules(spec, gains, cov, horizon):
    if not gains.stationary and gains.horizon < horizon:
        raise ScheduleMismatch(
            f"gain schedule horizon {gains.horizon} < simulation horizon {horizon}")
    if len(cov) < horizon + 1:
        raise ScheduleMismatch(
            f"covariance schedule covers {len(cov)} steps, need {horizon + 1}")


def _worker_count() -> int:
    env = os.environ.get("NCS_ASYM_THREADS", "1")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def monte_carlo(spec: ValidatedSpec, gains: GainSchedule, replicates: int,
                master_seed: int, cov: list[CovarianceStep] | None = None,
                tail_window: int | None = None,
                stage_tail_window: int | None = None,
                probe_step: int | None = None,
                collect_controls: bool = False) -> SimResult:
    """Run replicates 0..replicates-1 and aggregate.

    The chunk layout is fixed, so results are bit-identical for any
    worker count; NCS_ASYM_THREADS only sets the thread pool size.
    """
    horizon = spec.N
    if cov is None:
        cov = covariance_schedule(spec, horizon)
    _check_schedules(spec, gains, cov, horizon)

    spans = [(s, min(CHUNK, replicates - s)) for s in range(0, replicates, CHUNK)]

    def task(span):
        start, size = span
        return _simulate_chunk(spec, gains, cov, horizon, master_seed,
                               start, size, probe_step=probe_step,
                               collect_controls=collect_controls)

    workers = min(_worker_count(), len(spans)) if spans else 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(task, spans))
    else:
        chunks = [task(sp) for sp in spans]

    costs = np.concatenate([c["costs"] for c in chunks]) if chunks else np.empty(0)
    good = np.concatenate([c["good"] for c in chunks]) if chunks else np.empty(0, bool)
    n_good = int(good.sum())
    diverged = replicates - n_good

    msq_sum = np.zeros(horizon + 1)
    for c in chunks:
        g = c["good"]
        if g.any():
            msq_sum += c["xx"][g].sum(axis=0)
    msq_state = msq_sum / n_good if n_good else np.full(horizon + 1, np.nan)

    good_costs = costs[good]
    mean_cost = float(good_costs.mean()) if n_good else float("nan")
    std_err = (float(good_costs.std(ddof=1) / np.sqrt(n_good))
               if n_good > 1 else float("nan"))

    tail_msq = None
    if tail_window is not None:
        tail_msq = np.concatenate(
            [c["xx"][:, horizon + 1 - tail_window:].mean(axis=1) for c in chunks])
        tail_msq = np.where(good, tail_msq, np.nan)
    tail_stage = None
    if stage_tail_window is not None:
        tail_stage = np.concatenate(
            [c["stages"][:, horizon + 1 - stage_tail_window:].mean(axis=1)
             for c in chunks])
        tail_stage = np.where(good, tail_stage, np.nan)

    probe = None
    if probe_step is not None:
        probe = {key: np.concatenate([c["probe"][key] for c in chunks])
                 for key in ("x", "x_hat_W", "x_hat_P")}

    mean_u_W = mean_u_P = None
    if collect_controls and n_good:
        mean_u_W = np.zeros((horizon + 1, spec.w))
        mean_u_P = np.zeros((horizon + 1, spec.q))
        for c in chunks:
            mean_u_W += c["uW_sum"]
            mean_u_P += c["uP_sum"]
        mean_u_W /= n_good
        mean_u_P /= n_good

    return SimResult(replicates=replicates, diverged=diverged,
                     mean_cost=mean_cost, cost_std_err=std_err,
                     msq_state=msq_state,
                     costs=np.where(good, costs, np.nan),
                     master_seed=int(master_seed),
                     tail_msq=tail_msq, tail_stage=tail_stage, probe=probe,
                     mean_u_W=mean_u_W, mean_u_P=mean_u_P)


# ---------------------------------------------------------------------------
# mean-square analytics

def _mixing_terms(F, C1, C2, SW, D):
    """Second-moment drive from the estimate-feedback cross terms."""
    return (F @ SW @ C1.T + C1 @ SW @ F.T - F @ D @ C2.T - C2 @ D @ F.T
            + C1 @ SW @ C1.T - C1 @ D @ C2.T - C2 @ D @ C1.T + C2 @ D @ C2.T)


def msq_analytic(spec: ValidatedSpec, gains: GainSchedule,
                 horizon: int) -> np.ndarray:
    """Exact E[x_k' x_k] for k = 0..horizon under the given gains.

    Propagates the full second moment X_k = E[x_k x_k'] using the error
    covariances and the orthogonality identities E[x e^W'] = Sigma^W,
    E[x d'] = E[e^W d'] = E[d d'] = Sigma^W - Sigma^P, where d is the
    estimate gap xhat^P - xhat^W.
    """
    A, B_P, Q_omega, p = spec.A, spec.B_P, spec.Q_omega, spec.p
    B = np.hstack([spec.B_W, spec.B_P])
    cov = covariance_schedule(spec, horizon)
    SW = lin.sym(p * spec.sigma)
    mu = spec.mu[:, None]
    X = lin.sym(spec.sigma + mu @ mu.T)
    out = np.empty(horizon + 1)
    out[0] = float(np.trace(X))
    for k in range(horizon):
        K_W, K_Phat, K_Ptilde = gains.at(k)
        C1 = B @ np.vstack([K_W, K_Phat])
        C2 = B_P @ K_Ptilde
        F = A - C1
        SP = cov[k].Sigma_filt
        D = SW - SP
        X = lin.sym(F @ X @ F.T + _mixing_terms(F, C1, C2, SW, D) + Q_omega)
        out[k + 1] = float(np.trace(X))
        # advance the remote error covariance under the correction gain
        Fc = A - B_P @ K_Ptilde
        SW = lin.sym(p * (Fc @ SW @ Fc.T + B_P @ K_Ptilde @ SP @ Fc.T
                          + A @ SP @ K_Ptilde.T @ B_P.T + Q_omega))
    return out


def msq_steady_state(spec: ValidatedSpec, sol: AreSolution) -> float:
    """Steady-state E[x' x] under the certified stationary gains.

    Solves the discrete Lyapunov equation X = F X F' + W with the drive W
    assembled from the limit covariances; requires the spectral
    certificate (bounded estimation errors) and a stable mean loop.
    """
    if not sol.certificates.spectral_ok:
        raise NotStable("spectral certificate fails: "
                        f"sqrt(p) rho = {sol.certificates.spectral_value:.6f} >= 1")
    A, B_P, Q_omega = spec.A, spec.B_P, spec.Q_omega
    B = np.hstack([spec.B_W, spec.B_P])
    KF = lin.spd_solve(sol.Gamma, sol.M)
    K_Ptilde = lin.spd_solve(sol.Omega, sol.L)
    C1 = B @ KF
    C2 = B_P @ K_Ptilde
    F = A - C1
    rho = lin.spectral_radius(F)
    if rho >= 1.0:
        raise NotStable(f"mean closed loop is unstable: rho(A - B K) = {rho:.6f}")
    SP = covariance_limit(spec).Sigma_filt
    SW = remote_error_covariance_limit(spec, sol.Omega, sol.L)
    D = SW - SP
    W = lin.sym(_mixing_terms(F, C1, C2, SW, D) + Q_omega)
    X = sla.solve_discrete_lyapunov(F, W)
    return float(np.trace(X))
