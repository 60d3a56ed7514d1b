"""Problem data: system matrices, validation, augmentation, assumptions.

The plant is

    x_{k+1} = A x_k + B^W u^W_k + B^P u^P_k + omega_k,

driven by two controllers.  The remote controller u^W sees the state only
when the network delivers it (dropout probability p, detected erasures);
the embedded controller u^P additionally owns a noisy local observation
y^P_k = H x_k + v_k.  Stage weights are Q on the state and R^W, R^P on the
two inputs; mu and sigma parameterize the Gaussian initial state, and
P_terminal weights the final state over horizon N.

Validation promotes scalars to 1x1, enforces shapes, symmetrizes the
weight/covariance matrices (rejecting material asymmetry), and checks
definiteness.  Augmentation stacks the input channels into B = [B^W B^P],
R = blkdiag(R^W, R^P), which is the coordinate system the Riccati layer
works in.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _linalg as lin
from .errors import BadProbability, DimensionMismatch, NeedPW, NotPD, NotPSD

RANK_TOL = 1e-10
ASYM_TOL = 1e-9
PSD_EIG_TOL = -1e-10

_MATRIX_FIELDS = ("A", "B_W", "B_P", "H", "Q", "R_W", "R_P",
                  "Q_omega", "Q_v", "sigma", "P_terminal")
_PSD_FIELDS = ("Q", "Q_omega", "sigma", "P_terminal")
_PD_FIELDS = ("R_W", "R_P", "Q_v")


def _as_matrix(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if arr.size != 1:
            raise DimensionMismatch(f"{name} must be a matrix, got shape {arr.shape}")
        arr = arr.reshape(1, 1)
    elif arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


def _as_vector(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    return arr


@dataclass(frozen=True)
class SystemSpec:
    """Raw problem data, as supplied by the user or a JSON config."""

    A: np.ndarray
    B_W: np.ndarray
    B_P: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R_W: np.ndarray
    R_P: np.ndarray
    Q_omega: np.ndarray
    Q_v: np.ndarray
    p: float
    mu: np.ndarray
    sigma: np.ndarray
    P_terminal: np.ndarray
    N: int

    @classmethod
    def from_dict(cls, d: dict) -> "SystemSpec":
        missing = [k for k in list(_MATRIX_FIELDS) + ["p", "mu", "N"] if k not in d]
        if missing:
            raise DimensionMismatch(f"config missing fields: {missing}")
        kwargs = {name: _as_matrix(d[name], name) for name in _MATRIX_FIELDS}
        kwargs["mu"] = _as_vector(d["mu"], "mu")
        kwargs["p"] = float(d["p"])
        kwargs["N"] = int(d["N"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {name: getattr(self, name).tolist() for name in _MATRIX_FIELDS}
        out["mu"] = self.mu.tolist()
        out["p"] = self.p
        out["N"] = self.N
        # keep the documented field order
        order = ["A", "B_W", "B_P", "H", "Q", "R_W", "R_P", "Q_omega", "Q_v",
                 "p", "mu", "sigma", "P_terminal", "N"]
        return {k: out[k] for k in order}


def load_spec(path) -> SystemSpec:
    with open(path) as fh:
        return SystemSpec.from_dict(json.load(fh))


@dataclass(frozen=True)
class ValidatedSpec:
    """A SystemSpec that passed validation; weight matrices symmetrized."""

    A: np.ndarray
    B_W: np.ndarray
    B_P: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R_W: np.ndarray
    R_P: np.ndarray
    Q_omega: np.ndarray
    Q_v: np.ndarray
    p: float
    mu: np.ndarray
    sigma: np.ndarray
    P_terminal: np.ndarray
    N: int

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def w(self) -> int:
        return self.B_W.shape[1]

    @property
    def q(self) -> int:
        return self.B_P.shape[1]

    def replace(self, **kw) -> "ValidatedSpec":
        """Re-validate with some fields swapped out."""
        d = {name: getattr(self, name) for name in _MATRIX_FIELDS}
        d.update(p=self.p, mu=self.mu, N=self.N)
        d.update(kw)
        return validate_spec(SystemSpec(**{k: d[k] for k in
                                           list(_MATRIX_FIELDS) + ["p", "mu", "N"]}))

    to_dict = SystemSpec.to_dict


@dataclass(frozen=True)
class AugmentedSpec:
    """Stacked-input view: B = [B^W B^P], R = blkdiag(R^W, R^P)."""

    B: np.ndarray
    R: np.ndarray
    base: ValidatedSpec

    # delegate the fields the Riccati/controller layers read constantly
    @property
    def A(self):
        return self.base.A

    @property
    def B_P(self):
        return self.base.B_P

    @property
    def H(self):
        return self.base.H

    @property
    def Q(self):
        return self.base.Q

    @property
    def R_P(self):
        return self.base.R_P

    @property
    def p(self):
        return self.base.p

    @property
    def P_terminal(self):
        return self.base.P_terminal

    @property
    def N(self):
        return self.base.N

    @property
    def n(self):
        return self.base.n

    @property
    def w(self):
        return self.base.w

    @property
    def q(self):
        return self.base.q


def validate_spec(spec: SystemSpec) -> ValidatedSpec:
    """Check shapes, probability, symmetry and definiteness.

    Symmetric inputs are replaced by (X + X')/2; asymmetry beyond 1e-9
    relative Frobenius norm is rejected rather than silently averaged.
    """
    A = _as_matrix(spec.A, "A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    B_W = _as_matrix(spec.B_W, "B_W")
    B_P = _as_matrix(spec.B_P, "B_P")
    H = _as_matrix(spec.H, "H")
    if B_W.shape[0] != n:
        raise DimensionMismatch(f"B_W has {B_W.shape[0]} rows, expected {n}")
    if B_P.shape[0] != n:
        raise DimensionMismatch(f"B_P has {B_P.shape[0]} rows, expected {n}")
    if H.shape[1] != n:
        raise DimensionMismatch(f"H has {H.shape[1]} columns, expected {n}")
    m, w, q = H.shape[0], B_W.shape[1], B_P.shape[1]

    expected = {"Q": (n, n), "R_W": (w, w), "R_P": (q, q), "Q_omega": (n, n),
                "Q_v": (m, m), "sigma": (n, n), "P_terminal": (n, n)}
    clean = {}
    for name, shape in expected.items():
        X = _as_matrix(getattr(spec, name), name)
        if X.shape != shape:
            raise DimensionMismatch(f"{name} has shape {X.shape}, expected {shape}")
        if lin.asymmetry(X) > ASYM_TOL:
            err = NotPD if name in _PD_FIELDS else NotPSD
            raise err(name, "matrix is materially asymmetric")
        clean[name] = lin.sym(X)

    for name in _PSD_FIELDS:
        me = lin.min_eig(clean[name])
        if me < PSD_EIG_TOL:
            raise NotPSD(name, f"min eigenvalue {me:.3e}")
    for name in _PD_FIELDS:
        if lin.chol_pd(clean[name]) is None:
            raise NotPD(name)

    mu = _as_vector(spec.mu, "mu")
    if mu.shape != (n,):
        raise DimensionMismatch(f"mu has shape {mu.shape}, expected ({n},)")

    p = float(spec.p)
    if not (0.0 <= p <= 1.0) or not np.isfinite(p):
        raise BadProbability(f"dropout probability must lie in [0, 1], got {p}")
    N = int(spec.N)
    if N < 0:
        raise DimensionMismatch(f"horizon N must be nonnegative, got {N}")

    fields = dict(A=A, B_W=B_W, B_P=B_P, H=H, mu=mu, p=p, N=N, **clean)
    for arr in fields.values():
        if isinstance(arr, np.ndarray):
            arr.setflags(write=False)
    return ValidatedSpec(**fields)


def augment(spec: ValidatedSpec) -> AugmentedSpec:
    """Stack the two input channels; idempotent given the same spec."""
    B = np.hstack([spec.B_W, spec.B_P])
    R = np.zeros((spec.w + spec.q, spec.w + spec.q))
    R[:spec.w, :spec.w] = spec.R_W
    R[spec.w:, spec.w:] = spec.R_P
    B.setflags(write=False)
    R.setflags(write=False)
    return AugmentedSpec(B=B, R=R, base=spec)


# ---------------------------------------------------------------------------
# standing assumptions (PBH rank tests)

def _pbh_stabilizable(A, B, tol=RANK_TOL):
    """rank [zI - A, B] = n for every eigenvalue z of A with |z| >= 1."""
    n = A.shape[0]
    diags = {}
    ok = True
    for z in np.linalg.eigvals(A):
        if abs(z) < 1.0 - tol:
            continue
        M = np.hstack([z * np.eye(n) - A, B.astype(complex)])
        r = np.linalg.matrix_rank(M, tol=tol)
        diags[complex(z)] = int(r)
        ok = ok and int(r) == n
    return ok, diags


def _pbh_detectable(A, C, tol=RANK_TOL):
    """rank [zI - A; C] = n for every eigenvalue z of A with |z| >= 1."""
    n = A.shape[0]
    diags = {}
    ok = True
    for z in np.linalg.eigvals(A):
        if abs(z) < 1.0 - tol:
            continue
        M = np.vstack([z * np.eye(n) - A, C.astype(complex)])
        r = np.linalg.matrix_rank(M, tol=tol)
        diags[complex(z)] = int(r)
        ok = ok and int(r) == n
    return ok, diags


def _pbh_observable(A, C, tol=RANK_TOL):
    """rank [zI - A; C] = n for every eigenvalue z of A."""
    n = A.shape[0]
    diags = {}
    ok = True
    for z in np.linalg.eigvals(A):
        M = np.vstack([z * np.eye(n) - A, C.astype(complex)])
        r = np.linalg.matrix_rank(M, tol=tol)
        diags[complex(z)] = int(r)
        ok = ok and int(r) == n
    return ok, diags


@dataclass
class AssumptionReport:
    """Outcome of the standing-assumption checks.

    a1: input weights positive definite, state weight PSD
    a2: (A, Q^{1/2}) observable and (A, H) detectable
    a3: (A, [B^W B^P]) stabilizable
    a4: (A, B^P) stabilizable and (A, D) observable with
        D D' = p Q + (1-p) P^W; None unless a P^W was supplied
    """

    a1_weights: bool
    a2_observable_detectable: bool
    a3_stabilizable: bool
    a4_uniqueness: bool | None
    details: dict = field(default_factory=dict)

    @property
    def core_ok(self) -> bool:
        return self.a1_weights and self.a2_observable_detectable and self.a3_stabilizable


def check_assumptions(spec: ValidatedSpec, P_W: np.ndarray | None = None,
                      need_a4: bool = False) -> AssumptionReport:
    """Run the standing assumptions; a4 additionally needs a stationary P^W."""
    if need_a4 and P_W is None:
        raise NeedPW("the uniqueness assumption needs the stationary cost matrix P_W")

    details = {}

    a1 = (lin.chol_pd(spec.R_W) is not None and lin.chol_pd(spec.R_P) is not None
          and lin.min_eig(spec.Q) >= PSD_EIG_TOL)
    details["a1"] = {"min_eig_Q": lin.min_eig(spec.Q),
                     "R_W_pivot": lin.smallest_pivot(spec.R_W),
                     "R_P_pivot": lin.smallest_pivot(spec.R_P)}

    Q_root = lin.psd_factor(spec.Q).T
    obs_ok, obs_d = _pbh_observable(spec.A, Q_root)
    det_ok, det_d = _pbh_detectable(spec.A, spec.H)
    a2 = obs_ok and det_ok
    details["a2"] = {"Q_root_observable": obs_d, "H_detectable": det_d}

    B = np.hstack([spec.B_W, spec.B_P])
    a3, stab_d = _pbh_stabilizable(spec.A, B)
    details["a3"] = {"B_stabilizable": stab_d}

    a4 = None
    if P_W is not None:
        target = spec.p * spec.Q + (1.0 - spec.p) * lin.sym(P_W)
        me = lin.min_eig(target)
        if me < PSD_EIG_TOL:
            a4 = False
            details["a4"] = {"target_min_eig": me}
        else:
            D = lin.psd_factor(target).T
            bp_ok, bp_d = _pbh_stabilizable(spec.A, spec.B_P)
            d_ok, d_d = _pbh_observable(spec.A, D)
            a4 = bp_ok and d_ok
            details["a4"] = {"B_P_stabilizable": bp_d, "factor_observable": d_d,
                             "target_min_eig": me}

    return AssumptionReport(a1_weights=a1, a2_observable_detectable=a2,
                            a3_stabilizable=a3, a4_uniqueness=a4, details=details)
