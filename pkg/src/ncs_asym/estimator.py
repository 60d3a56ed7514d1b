"""State estimators for the two controllers and their error covariances.

Information pattern
-------------------
At step k the network either delivers the exact state to the remote
controller (received, probability 1-p) or drops it (probability p), and
both sides know which happened.  The embedded controller always has the
local observation y^P_k = H x_k + v_k on top of everything the remote
controller has.

Remote estimate:

    xhat^W_{k|k-1} = A xhat^W_{k-1|k-1} + B u_{k-1},        xhat^W_{0|-1} = mu
    xhat^W_{k|k}   = x_k                  if received
                     xhat^W_{k|k-1}       otherwise

The remote prediction uses only the shared input u = (u^W, uhat^P); the
embedded controller's private correction term never enters, and neither
does y^P.  That asymmetry is the whole point; the function signatures
below make it impossible to violate.

Embedded estimate:

    xhat^P_{k|k-1} = A xhat^P_{k-1|k-1} + B u_{k-1} + B^P ucorr_{k-1}
    xhat^PP_{k|k}  = xhat^P_{k|k-1} + G_k (y^P_k - H xhat^P_{k|k-1})
    xhat^P_{k|k}   = x_k             if received
                     xhat^PP_{k|k}   otherwise

The gain G_k and the covariances are control-independent, so they are
precomputed once per spec by covariance_schedule:

    Sigma^P_{k|k-1} = A Sigma^P_{k-1|k-1} A' + Q_omega
    G_k             = Sigma^P_{k|k-1} H' (H Sigma^P_{k|k-1} H' + Q_v)^{-1}
    Sigma^PP_{k|k}  = (I - G_k H) Sigma^P_{k|k-1} (I - G_k H)' + G_k Q_v G_k'
    Sigma^P_{k|k}   = p Sigma^PP_{k|k}

The factor p in the last line is the dropout average: with probability
1-p the delivered state zeroes the error outright.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg as lin
from .errors import CovNotConverged, SingularInnovation, SingularOmega
from .model import AugmentedSpec, ValidatedSpec


@dataclass(frozen=True)
class RemoteEstimate:
    """Remote controller's estimate at one step."""

    k: int
    x_pred: np.ndarray
    x_filt: np.ndarray


@dataclass(frozen=True)
class EmbeddedEstimate:
    """Embedded controller's estimate at one step.

    x_obs is the observation-updated value xhat^PP before the dropout
    gate; x_filt is the final estimate after it.
    """

    k: int
    x_pred: np.ndarray
    x_obs: np.ndarray
    x_filt: np.ndarray


@dataclass(frozen=True)
class CovarianceStep:
    """Embedded-filter covariances and gain at one step (k = -1: limit)."""

    k: int
    Sigma_pred: np.ndarray
    gain: np.ndarray
    Sigma_obs: np.ndarray
    Sigma_filt: np.ndarray


def remote_update(aug: AugmentedSpec, prev: RemoteEstimate | None,
                  received: bool, x_k: np.ndarray | None = None,
                  u_prev: np.ndarray | None = None) -> RemoteEstimate:
    """Advance the remote estimate by one step.

    prev=None starts at k=0 from the prior mean.  u_prev is the shared
    input (u^W, uhat^P) applied at k-1.  By construction this function
    never sees the local observation or the private correction input.
    """
    if prev is None:
        k = 0
        x_pred = np.array(aug.base.mu, dtype=float)
    else:
        if u_prev is None:
            raise ValueError("u_prev is required after the initial step")
        k = prev.k + 1
        x_pred = aug.A @ prev.x_filt + aug.B @ np.asarray(u_prev, dtype=float)
    if received:
        if x_k is None:
            raise ValueError("received=True needs the delivered state")
        x_filt = np.array(x_k, dtype=float)
    else:
        x_filt = x_pred
    return RemoteEstimate(k=k, x_pred=x_pred, x_filt=x_filt)


def embedded_update(aug: AugmentedSpec, prev: EmbeddedEstimate | None,
                    gain: np.ndarray, received: bool, y_k: np.ndarray,
                    x_k: np.ndarray | None = None,
                    u_prev: np.ndarray | None = None,
                    u_corr_prev: np.ndarray | None = None) -> EmbeddedEstimate:
    """Advance the embedded estimate by one step.

    gain is the precomputed G_k from covariance_schedule.  u_corr_prev is
    the embedded controller's private correction input at k-1; it enters
    this prediction and only this one.
    """
    H = aug.base.H
    if prev is None:
        k = 0
        x_pred = np.array(aug.base.mu, dtype=float)
    else:
        if u_prev is None:
            raise ValueError("u_prev is required after the initial step")
        k = prev.k + 1
        x_pred = aug.A @ prev.x_filt + aug.B @ np.asarray(u_prev, dtype=float)
        if u_corr_prev is not None:
            x_pred = x_pred + aug.B_P @ np.asarray(u_corr_prev, dtype=float)
    innovation = np.asarray(y_k, dtype=float) - H @ x_pred
    x_obs = x_pred + gain @ innovation
    if received:
        if x_k is None:
            raise ValueError("received=True needs the delivered state")
        x_filt = np.array(x_k, dtype=float)
    else:
        x_filt = x_obs
    return EmbeddedEstimate(k=k, x_pred=x_pred, x_obs=x_obs, x_filt=x_filt)


def _covariance_step(spec: ValidatedSpec, Sigma_pred: np.ndarray, k: int):
    """One observation/dropout covariance update; returns (step, next pred)."""
    H, Q_v, p = spec.H, spec.Q_v, spec.p
    S = lin.sym(H @ Sigma_pred @ H.T + Q_v)
    if lin.chol_pd(S) is None:
        raise SingularInnovation(f"innovation covariance singular at step {k}")
    gain = lin.spd_solve(S, H @ Sigma_pred).T
    J = np.eye(spec.n) - gain @ H
    Sigma_obs = lin.sym(J @ Sigma_pred @ J.T + gain @ Q_v @ gain.T)
    Sigma_filt = p * Sigma_obs
    step = CovarianceStep(k=k, Sigma_pred=Sigma_pred, gain=gain,
                          Sigma_obs=Sigma_obs, Sigma_filt=Sigma_filt)
    next_pred = lin.sym(spec.A @ Sigma_filt @ spec.A.T + spec.Q_omega)
    return step, next_pred


def iter_covariance(spec: ValidatedSpec):
    """Infinite forward iterator over CovarianceStep, starting at k = 0."""
    Sigma_pred = np.array(spec.sigma, dtype=float)
    k = 0
    while True:
        step, Sigma_pred = _covariance_step(spec, Sigma_pred, k)
        yield step
        k += 1


def covariance_schedule(spec: ValidatedSpec, horizon: int) -> list[CovarianceStep]:
    """Embedded-filter covariances and gains for k = 0..horizon.

    Control-independent, so one schedule serves every replicate and the
    analytic cost.  The observation update uses the Joseph form, which
    keeps Sigma^PP PSD regardless of rounding.
    """
    it = iter_covariance(spec)
    return [next(it) for _ in range(horizon + 1)]


def covariance_limit(spec: ValidatedSpec, tol: float = 1e-12,
                     max_iter: int = 10000) -> CovarianceStep:
    """Fixed point of the covariance recursion (returned with k = -1)."""
    Sigma_pred = np.array(spec.sigma, dtype=float)
    for _ in range(max_iter):
        step, nxt = _covariance_step(spec, Sigma_pred, -1)
        if np.linalg.norm(nxt - Sigma_pred) < tol:
            # one more update from the fixed point keeps all fields consistent
            limit, _ = _covariance_step(spec, nxt, -1)
            return limit
        Sigma_pred = nxt
    raise CovNotConverged(max_iter)


def remote_error_covariance(spec: ValidatedSpec, Omega: np.ndarray,
                            L: np.ndarray, horizon: int) -> list[np.ndarray]:
    """Remote filtered error covariance Sigma^W_{k|k} for k = 0..horizon.

    Under the optimal correction input ucorr = -Omega^{-1} L (xhat^P -
    xhat^W) the remote error obeys

        Sigma^W_k = p [ (A - B^P Kc) Sigma^W_{k-1} (A - B^P Kc)'
                        + B^P Kc Sigma^P_{k-1} (A - B^P Kc)'
                        + A Sigma^P_{k-1} Kc' B^P'
                        + Q_omega ],            Kc = Omega^{-1} L,

    with Sigma^W_{0|0} = p sigma.  The Q_omega term drops out for a
    noiseless plant, which recovers the disturbance-free special case;
    keeping it is what the noisy mean-square analytics require.
    """
    if lin.chol_pd(Omega) is None:
        raise SingularOmega()
    Kc = lin.spd_solve(lin.sym(Omega), L)
    A, B_P, Q_omega, p = spec.A, spec.B_P, spec.Q_omega, spec.p
    F = A - B_P @ Kc
    cov = covariance_schedule(spec, max(horizon - 1, 0))
    out = [lin.sym(p * spec.sigma)]
    for k in range(1, horizon + 1):
        SW = out[-1]
        SP = cov[k - 1].Sigma_filt
        X = (F @ SW @ F.T + B_P @ Kc @ SP @ F.T + A @ SP @ Kc.T @ B_P.T
             + Q_omega)
        out.append(lin.sym(p * X))
    return out


def remote_error_covariance_limit(spec: ValidatedSpec, Omega: np.ndarray,
                                  L: np.ndarray, tol: float = 1e-12,
                                  max_iter: int = 100000) -> np.ndarray:
    """Fixed point of the remote error covariance recursion."""
    if lin.chol_pd(Omega) is None:
        raise SingularOmega()
    Kc = lin.spd_solve(lin.sym(Omega), L)
    A, B_P, Q_omega, p = spec.A, spec.B_P, spec.Q_omega, spec.p
    F = A - B_P @ Kc
    SP = covariance_limit(spec).Sigma_filt
    drive = lin.sym(B_P @ Kc @ SP @ F.T + A @ SP @ Kc.T @ B_P.T + Q_omega)
    SW = lin.sym(p * spec.sigma)
    for _ in range(max_iter):
        nxt = lin.sym(p * (F @ SW @ F.T + drive))
        if np.linalg.norm(nxt - SW) < tol:
            return nxt
        SW = nxt
    raise CovNotConverged(max_iter)
