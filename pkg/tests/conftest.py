import numpy as np
import pytest

from ncs_asym.model import SystemSpec, validate_spec

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    """Echo one line per acceptance criterion after the run."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def auuv_dict(p=0.5, noisy=True, N=100, **overrides):
    """The scalar underwater-vehicle instance used throughout the tests."""
    d = dict(A=[[1.0]], B_W=[[1.0]], B_P=[[1.0]], H=[[1.0]], Q=[[0.01]],
             R_W=[[5.0]], R_P=[[5.0]],
             Q_omega=[[1.0 if noisy else 0.0]], Q_v=[[1.0]],
             p=p, mu=[-30.0], sigma=[[1.0]], P_terminal=[[0.0]], N=N)
    d.update(overrides)
    return d


def make_spec(**kw):
    return validate_spec(SystemSpec.from_dict(auuv_dict(**kw)))


def random_instance(seed, n_max=4, stable=True, p=None, noisy=True, N=30):
    """A well-scaled random instance; stable=True keeps rho(A) < 1."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    w = int(rng.integers(1, 3))
    q = int(rng.integers(1, 3))
    m = int(rng.integers(1, n + 1))
    A = rng.normal(size=(n, n))
    rho = max(np.max(np.abs(np.linalg.eigvals(A))), 1e-6)
    if stable:
        A = A * (rng.uniform(0.3, 0.9) / rho)

    def psd(d, scale=1.0, reg=0.0):
        F = rng.normal(size=(d, d))
        return scale * (F @ F.T) / d + reg * np.eye(d)

    spec = SystemSpec(
        A=A, B_W=rng.normal(size=(n, w)), B_P=rng.normal(size=(n, q)),
        H=rng.normal(size=(m, n)), Q=psd(n, 0.5),
        R_W=psd(w, 0.3, 0.5), R_P=psd(q, 0.3, 0.5),
        Q_omega=psd(n, 0.3) if noisy else np.zeros((n, n)),
        Q_v=psd(m, 0.3, 0.5), p=float(rng.uniform()) if p is None else p,
        mu=rng.normal(size=n), sigma=psd(n, 0.5),
        P_terminal=np.zeros((n, n)), N=N)
    return validate_spec(spec)


@pytest.fixture
def auuv():
    return make_spec()
