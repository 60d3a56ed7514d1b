"""Coupled Riccati recursions for the two-controller dropout problem.

Backward recursion, k = N..0, from P^W_{N+1} = P^P_{N+1} = P_terminal:

    Gamma_k = B' P^W_{k+1} B + R            (solvability block, shared input)
    M_k     = B' P^W_{k+1} A
    Delta_{k+1} = (1-p) P^W_{k+1} + p P^P_{k+1}
    Omega_k = B^P' Delta_{k+1} B^P + R^P    (solvability block, correction)
    L_k     = B^P' Delta_{k+1} A
    P^W_k   = A' P^W_{k+1} A - M_k' Gamma_k^{-1} M_k + Q
    P^P_k   = A' Delta_{k+1} A - L_k' Omega_k^{-1} L_k + Q

The problem is solvable at step k iff Gamma_k and Omega_k are positive
definite.  The stationary equations are the same with the time index
dropped; value iteration (growing horizon from zero terminal weight)
computes them, and the iterates are monotone nondecreasing, so failure to
converge certifies that no stabilizing solution exists.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg as lin
from .errors import NoConvergence, NotPositiveDefinite
from .model import AugmentedSpec, ValidatedSpec, check_assumptions
from .model import AssumptionReport

DIVERGE_NORM = 1e100


@dataclass(frozen=True)
class RiccatiStep:
    """One step of the backward recursion.

    P_W, P_P, Delta are the time-k value matrices; Gamma, M, Omega, L are
    the time-k operators (built from the k+1 values).
    """

    k: int
    P_W: np.ndarray
    P_P: np.ndarray
    Delta: np.ndarray
    Gamma: np.ndarray
    M: np.ndarray
    Omega: np.ndarray
    L: np.ndarray


@dataclass(frozen=True)
class Certificates:
    """Stabilization certificates for a stationary solution."""

    P_W_pd: bool
    Delta_pd: bool
    spectral_ok: bool
    spectral_value: float


@dataclass(frozen=True)
class AreSolution:
    P_W: np.ndarray
    P_P: np.ndarray
    Delta: np.ndarray
    Gamma: np.ndarray
    M: np.ndarray
    Omega: np.ndarray
    L: np.ndarray
    iterations: int
    residual_W: float
    residual_P: float
    certificates: Certificates


def _operators(aug: AugmentedSpec, P_W_next, P_P_next, k=None):
    """Time-k operators from the k+1 value matrices; PD-checks the blocks."""
    A, B, B_P = aug.A, aug.B, aug.B_P
    p = aug.p
    Gamma = lin.sym(B.T @ P_W_next @ B + aug.R)
    M = B.T @ P_W_next @ A
    Delta_next = lin.sym((1.0 - p) * P_W_next + p * P_P_next)
    Omega = lin.sym(B_P.T @ Delta_next @ B_P + aug.R_P)
    L = B_P.T @ Delta_next @ A
    if lin.chol_pd(Gamma) is None:
        raise NotPositiveDefinite(k, "Gamma", lin.smallest_pivot(Gamma))
    if lin.chol_pd(Omega) is None:
        raise NotPositiveDefinite(k, "Omega", lin.smallest_pivot(Omega))
    P_W = lin.sym(A.T @ P_W_next @ A - M.T @ lin.spd_solve(Gamma, M) + aug.Q)
    P_P = lin.sym(A.T @ Delta_next @ A - L.T @ lin.spd_solve(Omega, L) + aug.Q)
    return Gamma, M, Omega, L, P_W, P_P


def finite_horizon_recursion(aug: AugmentedSpec) -> list[RiccatiStep]:
    """All steps k = 0..N, returned in ascending k (steps[k].k == k)."""
    p = aug.p
    P_W_next = np.array(aug.P_terminal, dtype=float)
    P_P_next = np.array(aug.P_terminal, dtype=float)
    steps: list[RiccatiStep | None] = [None] * (aug.N + 1)
    for k in range(aug.N, -1, -1):
        Gamma, M, Omega, L, P_W, P_P = _operators(aug, P_W_next, P_P_next, k)
        Delta = lin.sym((1.0 - p) * P_W + p * P_P)
        steps[k] = RiccatiStep(k=k, P_W=P_W, P_P=P_P, Delta=Delta,
                               Gamma=Gamma, M=M, Omega=Omega, L=L)
        P_W_next, P_P_next = P_W, P_P
    return steps


def solve_are(aug: AugmentedSpec, tol: float = 1e-10,
              max_iter: int = 100000) -> AreSolution:
    """Stationary solution by value iteration from zero terminal weight.

    Convergence criterion: Frobenius change of both value matrices below
    tol.  The iterates grow monotonically, so a norm blowing past 1e100 is
    a divergence certificate and ends the iteration early.
    """
    n = aug.n
    P_W = np.zeros((n, n))
    P_P = np.zeros((n, n))
    iterations = 0
    for it in range(1, max_iter + 1):
        Gamma, M, Omega, L, P_W_new, P_P_new = _operators(aug, P_W, P_P)
        delta = max(np.linalg.norm(P_W_new - P_W), np.linalg.norm(P_P_new - P_P))
        P_W, P_P = P_W_new, P_P_new
        iterations = it
        if delta < tol:
            break
        if np.linalg.norm(P_W) > DIVERGE_NORM or np.linalg.norm(P_P) > DIVERGE_NORM:
            raise NoConvergence(max_iter, "value iteration diverged")
    else:
        raise NoConvergence(max_iter)

    Gamma, M, Omega, L, P_W_fix, P_P_fix = _operators(aug, P_W, P_P)
    residual_W = float(np.linalg.norm(P_W_fix - P_W))
    residual_P = float(np.linalg.norm(P_P_fix - P_P))
    Delta = lin.sym((1.0 - aug.p) * P_W + aug.p * P_P)

    K_corr = lin.spd_solve(Omega, L)
    spectral_value = float(np.sqrt(aug.p) * lin.spectral_radius(aug.A - aug.B_P @ K_corr))
    certs = Certificates(
        P_W_pd=lin.chol_pd(P_W) is not None,
        Delta_pd=lin.chol_pd(Delta) is not None,
        spectral_ok=spectral_value < 1.0,
        spectral_value=spectral_value,
    )
    return AreSolution(P_W=P_W, P_P=P_P, Delta=Delta, Gamma=Gamma, M=M,
                       Omega=Omega, L=L, iterations=iterations,
                       residual_W=residual_W, residual_P=residual_P,
                       certificates=certs)


@dataclass(frozen=True)
class UniquenessReport:
    """Sufficient conditions for the stationary solution to be unique."""

    assumptions: AssumptionReport
    unique: bool


def uniqueness_check(spec: ValidatedSpec, sol: AreSolution) -> UniquenessReport:
    """Core standing assumptions plus the P^W-dependent pair.

    Uniqueness holds when, on top of the core assumptions, (A, B^P) is
    stabilizable and (A, D) is observable for D D' = p Q + (1-p) P^W.
    """
    report = check_assumptions(spec, P_W=sol.P_W, need_a4=True)
    unique = bool(report.core_ok and report.a4_uniqueness)
    return UniquenessReport(assumptions=report, unique=unique)


@dataclass(frozen=True)
class Verdict:
    """Stabilizability / boundedness verdict from a stationary attempt."""

    ok: bool
    with_additive_noise: bool
    reason: str
    spectral_value: float | None = None


def stabilization_verdict(sol: AreSolution | None,
                          with_additive_noise: bool) -> Verdict:
    """Interpret an ARE attempt.

    sol=None means value iteration failed, which (contrapositive of the
    growing-horizon argument) rules out the certificates.  Noiseless
    systems need P^W and Delta positive definite; with additive noise the
    spectral condition sqrt(p) rho(A - B^P Omega^{-1} L) < 1 must hold on
    top for the second moments to stay bounded.
    """
    if sol is None:
        return Verdict(ok=False, with_additive_noise=with_additive_noise,
                       reason="no stationary solution (value iteration did not converge)")
    c = sol.certificates
    failing = []
    if not c.P_W_pd:
        failing.append("P_W_pd")
    if not c.Delta_pd:
        failing.append("Delta_pd")
    if with_additive_noise and not c.spectral_ok:
        failing.append(f"spectral_ok (sqrt(p) rho = {c.spectral_value:.6f} >= 1)")
    if failing:
        return Verdict(ok=False, with_additive_noise=with_additive_noise,
                       reason="failed certificates: " + ", ".join(failing),
                       spectral_value=c.spectral_value)
    return Verdict(ok=True, with_additive_noise=with_additive_noise,
                   reason="all certificates hold",
                   spectral_value=c.spectral_value)
