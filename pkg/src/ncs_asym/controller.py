"""Gain synthesis and analytic cost evaluation.

The optimal inputs are linear in the two estimates:

    u^W_k     = -K^W_k     xhat^W_{k|k}
    uhat^P_k  = -K^Phat_k  xhat^W_{k|k}
    ucorr_k   = -K^Ptilde_k (xhat^P_{k|k} - xhat^W_{k|k})

where [K^W; K^Phat] = Gamma_k^{-1} M_k and K^Ptilde = Omega_k^{-1} L_k.
The embedded controller applies uhat^P + ucorr; the stack [K^W; K^Phat]
is exactly the augmented-input feedback, which tests pin down.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg as lin
from .errors import (NotCertified, ScheduleMismatch, SingularGamma,
                     SingularOmega)
from .estimator import CovarianceStep
from .model import ValidatedSpec
from .riccati import AreSolution, RiccatiStep


@dataclass(frozen=True)
class GainSchedule:
    """Feedback gains; stationary schedules repeat for every k."""

    K_W: np.ndarray        # (T+1, w, n), or (1, w, n) when stationary
    K_Phat: np.ndarray     # (T+1, q, n)
    K_Ptilde: np.ndarray   # (T+1, q, n)
    stationary: bool
    horizon: int | None    # None when stationary

    def at(self, k: int):
        """Gains applied at step k."""
        if self.stationary:
            return self.K_W[0], self.K_Phat[0], self.K_Ptilde[0]
        if not (0 <= k <= self.horizon):
            raise ScheduleMismatch(f"step {k} outside schedule horizon {self.horizon}")
        return self.K_W[k], self.K_Phat[k], self.K_Ptilde[k]

    def scaled(self, block: str, factor: float) -> "GainSchedule":
        """Copy with one gain block scaled; used by perturbation checks."""
        blocks = {"K_W": self.K_W, "K_Phat": self.K_Phat, "K_Ptilde": self.K_Ptilde}
        if block not in blocks:
            raise KeyError(block)
        blocks[block] = blocks[block] * factor
        return GainSchedule(K_W=blocks["K_W"], K_Phat=blocks["K_Phat"],
                            K_Ptilde=blocks["K_Ptilde"],
                            stationary=self.stationary, horizon=self.horizon)

    def to_dict(self) -> dict:
        return {
            "mode": "stationary" if self.stationary else "finite",
            "horizon": self.horizon,
            "K_W": self.K_W.tolist(),
            "K_Phat": self.K_Phat.tolist(),
            "K_Ptilde": self.K_Ptilde.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GainSchedule":
        stationary = d["mode"] == "stationary"
        return cls(K_W=np.asarray(d["K_W"], dtype=float),
                   K_Phat=np.asarray(d["K_Phat"], dtype=float),
                   K_Ptilde=np.asarray(d["K_Ptilde"], dtype=float),
                   stationary=stationary,
                   horizon=None if d["horizon"] is None else int(d["horizon"]))


def _split_gains(Gamma, M, Omega, L, k=None):
    try:
        Z = lin.spd_solve(Gamma, M)
    except np.linalg.LinAlgError:
        raise SingularGamma(k) from None
    try:
        Kc = lin.spd_solve(Omega, L)
    except np.linalg.LinAlgError:
        raise SingularOmega(k) from None
    w = Gamma.shape[0] - Omega.shape[0]
    return Z[:w], Z[w:], Kc


def synthesize_finite(steps: list[RiccatiStep]) -> GainSchedule:
    """Gain schedule for k = 0..N from the backward recursion output."""
    K_W, K_Phat, K_Ptilde = [], [], []
    for st in steps:
        kw, kp, kc = _split_gains(st.Gamma, st.M, st.Omega, st.L, st.k)
        K_W.append(kw)
        K_Phat.append(kp)
        K_Ptilde.append(kc)
    return GainSchedule(K_W=np.array(K_W), K_Phat=np.array(K_Phat),
                        K_Ptilde=np.array(K_Ptilde), stationary=False,
                        horizon=len(steps) - 1)


def synthesize_stationary(sol: AreSolution) -> GainSchedule:
    """Constant gains from a certified stationary solution.

    Refuses to emit gains unless P^W and Delta are positive definite;
    without those certificates the stationary control law has no
    stabilization claim behind it.
    """
    failing = []
    if not sol.certificates.P_W_pd:
        failing.append("P_W_pd")
    if not sol.certificates.Delta_pd:
        failing.append("Delta_pd")
    if failing:
        raise NotCertified(", ".join(failing))
    kw, kp, kc = _split_gains(sol.Gamma, sol.M, sol.Omega, sol.L)
    return GainSchedule(K_W=kw[None], K_Phat=kp[None], K_Ptilde=kc[None],
                        stationary=True, horizon=None)


@dataclass(frozen=True)
class CostReport:
    """Analytic cost with its additive breakdown (analytic == sum of terms)."""

    analytic: float
    terms: dict
    per_step: tuple = ()


def _stage_trace(spec: ValidatedSpec, Sigma_filt, P_P_next, Delta_next, gain_next):
    """Expected stage cost contribution at one step.

    tr{ Sigma^P_{k|k} [A' Delta_{k+1} A + Q
                       - p (A - G_{k+1} H A)' P^P_{k+1} (A - G_{k+1} H A)] }
    + tr{ Q_omega [Delta_{k+1} - p (I - G_{k+1} H)' P^P_{k+1} (I - G_{k+1} H)] }
    - p tr{ Q_v G_{k+1}' P^P_{k+1} G_{k+1} }
    """
    A, H, Q = spec.A, spec.H, spec.Q
    Q_omega, Q_v, p = spec.Q_omega, spec.Q_v, spec.p
    I = np.eye(spec.n)
    AG = A - gain_next @ H @ A
    JG = I - gain_next @ H
    T1 = A.T @ Delta_next @ A + Q - p * AG.T @ P_P_next @ AG
    T2 = Delta_next - p * JG.T @ P_P_next @ JG
    return (float(np.trace(Sigma_filt @ T1)) + float(np.trace(Q_omega @ T2))
            - p * float(np.trace(Q_v @ gain_next.T @ P_P_next @ gain_next)))


def _initial_trace(spec: ValidatedSpec, P_W_0, P_P_0, Sigma_obs_0):
    """Expected cost-to-go at k = 0 before any information arrives."""
    mu = spec.mu[:, None]
    p = spec.p
    return (float(np.trace(P_W_0 @ (mu @ mu.T + (1.0 - p) * spec.sigma)))
            + p * float(np.trace(P_P_0 @ (spec.sigma - Sigma_obs_0))))


def analytic_cost_finite(spec: ValidatedSpec, steps: list[RiccatiStep],
                         cov: list[CovarianceStep]) -> CostReport:
    """Optimal finite-horizon cost from the recursion and the covariance
    schedule; the schedule must cover k = 0..N+1."""
    N = spec.N
    if len(steps) != N + 1:
        raise ScheduleMismatch(f"expected {N + 1} recursion steps, got {len(steps)}")
    if len(cov) < N + 2:
        raise ScheduleMismatch(f"covariance schedule must cover k=0..{N + 1}, got {len(cov)}")

    initial = _initial_trace(spec, steps[0].P_W, steps[0].P_P, cov[0].Sigma_obs)
    P_T = spec.P_terminal
    per_step = []
    for k in range(N + 1):
        if k < N:
            P_P_next, Delta_next = steps[k + 1].P_P, steps[k + 1].Delta
        else:
            P_P_next, Delta_next = P_T, P_T
        per_step.append(_stage_trace(spec, cov[k].Sigma_filt, P_P_next,
                                     Delta_next, cov[k + 1].gain))
    terminal = float(np.trace(cov[N + 1].Sigma_filt @ P_T))
    terms = {"initial": initial, "stage_traces": float(sum(per_step)),
             "terminal": terminal}
    return CostReport(analytic=float(sum(terms.values())), terms=terms,
                      per_step=tuple(per_step))


def analytic_cost_stationary(spec: ValidatedSpec, sol: AreSolution,
                             cov_limit: CovarianceStep, average: bool = True,
                             total_tol: float = 1e-14,
                             total_max_steps: int = 100000) -> CostReport:
    """Stationary cost.

    average=True: long-run average cost per step, the stage trace
    evaluated at the limit covariances and stationary value matrices.

    average=False: total cost over an infinite horizon, which only
    converges for a noiseless plant; evaluated by summing the stage
    traces along the covariance schedule until they vanish.
    """
    if average:
        A, H, Q = spec.A, spec.H, spec.Q
        Q_omega, Q_v, p = spec.Q_omega, spec.Q_v, spec.p
        I = np.eye(spec.n)
        G = cov_limit.gain
        AG = A - G @ H @ A
        JG = I - G @ H
        t_est = float(np.trace(cov_limit.Sigma_filt
                               @ (A.T @ sol.Delta @ A + Q - p * AG.T @ sol.P_P @ AG)))
        t_proc = float(np.trace(Q_omega @ (sol.Delta - p * JG.T @ sol.P_P @ JG)))
        t_obs = -p * float(np.trace(Q_v @ G.T @ sol.P_P @ G))
        terms = {"estimation_trace": t_est, "process_noise_trace": t_proc,
                 "observation_noise_trace": t_obs}
        return CostReport(analytic=float(sum(terms.values())), terms=terms)

    if np.linalg.norm(spec.Q_omega) > 0.0:
        raise ValueError("total infinite-horizon cost diverges with additive "
                         "process noise; use average=True")
    from .estimator import iter_covariance
    it = iter_covariance(spec)
    cur = next(it)
    initial = _initial_trace(spec, sol.P_W, sol.P_P, cur.Sigma_obs)
    per_step = []
    acc = 0.0
    for _ in range(total_max_steps):
        nxt = next(it)
        c = _stage_trace(spec, cur.Sigma_filt, sol.P_P, sol.Delta, nxt.gain)
        per_step.append(c)
        acc += c
        cur = nxt
        if abs(c) < total_tol * max(1.0, abs(acc)):
            break
    terms = {"initial": initial, "stage_traces": float(acc), "terminal": 0.0}
    return CostReport(analytic=float(sum(terms.values())), terms=terms,
                      per_step=tuple(per_step))
