import numpy as np
import pytest

from conftest import make_spec, random_instance
from ncs_asym.errors import CovNotConverged, SingularOmega
from ncs_asym.estimator import (EmbeddedEstimate, RemoteEstimate, covariance_limit,
                                covariance_schedule, embedded_update,
                                remote_error_covariance,
                                remote_error_covariance_limit, remote_update)
from ncs_asym.model import augment
from ncs_asym.riccati import solve_are


def kalman_schedule(spec, horizon):
    """Textbook Kalman recursion (short-form covariance update) as an oracle."""
    out = []
    Sp = spec.sigma.copy()
    for _ in range(horizon + 1):
        S = spec.H @ Sp @ spec.H.T + spec.Q_v
        G = np.linalg.solve(S.T, (Sp @ spec.H.T).T).T
        Sf = Sp - G @ spec.H @ Sp
        out.append((Sp.copy(), G.copy(), Sf.copy()))
        Sp = spec.A @ Sf @ spec.A.T + spec.Q_omega
    return out


def test_hand_values_scalar():
    spec = make_spec(p=0.5)
    cov = covariance_schedule(spec, 2)
    assert cov[0].Sigma_pred[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert cov[0].gain[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert cov[0].Sigma_obs[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert cov[0].Sigma_filt[0, 0] == pytest.approx(0.25, abs=1e-15)
    # k=1: pred = 0.25 + 1 = 1.25, gain = 1.25/2.25, obs = 1.25/2.25
    assert cov[1].Sigma_pred[0, 0] == pytest.approx(1.25, abs=1e-15)
    assert cov[1].gain[0, 0] == pytest.approx(1.25 / 2.25, abs=1e-14)
    assert cov[1].Sigma_obs[0, 0] == pytest.approx(1.25 / 2.25, abs=1e-14)
    assert cov[1].Sigma_filt[0, 0] == pytest.approx(0.5 * 1.25 / 2.25, abs=1e-14)


def test_filtered_is_p_times_observation_update():
    for seed in range(5):
        spec = random_instance(seed)
        for step in covariance_schedule(spec, 10):
            assert np.array_equal(step.Sigma_filt, spec.p * step.Sigma_obs)


def test_covariances_psd_and_contracting():
    for seed in range(8):
        spec = random_instance(100 + seed)
        for step in covariance_schedule(spec, 15):
            assert np.linalg.eigvalsh(step.Sigma_obs).min() >= -1e-12
            # measurement update never increases uncertainty
            gap = np.linalg.eigvalsh(step.Sigma_pred - step.Sigma_obs)
            assert gap.min() >= -1e-10


def test_p_one_matches_kalman_filter():
    for seed in range(20):
        spec = random_instance(200 + seed, p=1.0)
        cov = covariance_schedule(spec, 50)
        oracle = kalman_schedule(spec, 50)
        for step, (Sp, G, Sf) in zip(cov, oracle):
            assert np.allclose(step.Sigma_pred, Sp, rtol=0, atol=1e-12)
            assert np.allclose(step.gain, G, rtol=0, atol=1e-12)
            assert np.allclose(step.Sigma_obs, Sf, rtol=0, atol=1e-12)
            assert np.allclose(step.Sigma_filt, Sf, rtol=0, atol=1e-12)


def test_p_zero_filtered_covariance_vanishes():
    spec = random_instance(3, p=0.0)
    for step in covariance_schedule(spec, 10):
        assert np.all(step.Sigma_filt == 0.0)


def test_estimate_updates_follow_link_state(auuv):
    aug = augment(auuv)
    rng = np.random.default_rng(0)
    prev_w = RemoteEstimate(k=0, x_pred=np.array([-30.0]), x_filt=np.array([-30.0]))
    prev_p = EmbeddedEstimate(k=0, x_pred=np.array([-30.0]),
                              x_obs=np.array([-29.0]), x_filt=np.array([-29.5]))
    u_prev = rng.normal(size=2)
    ucorr = rng.normal(size=1)
    x1 = np.array([-28.0])
    y1 = np.array([-27.5])
    gain = np.array([[0.5]])

    got = remote_update(aug, prev_w, received=True, x_k=x1, u_prev=u_prev)
    pred = aug.A @ prev_w.x_filt + aug.B @ u_prev
    assert np.allclose(got.x_pred, pred, atol=1e-15)
    assert np.array_equal(got.x_filt, x1)
    assert got.k == 1

    got = remote_update(aug, prev_w, received=False, u_prev=u_prev)
    assert np.array_equal(got.x_filt, got.x_pred)
    assert np.allclose(got.x_filt, pred, atol=1e-15)

    # embedded prediction also applies the private correction input
    got = embedded_update(aug, prev_p, gain=gain, received=False, y_k=y1,
                          u_prev=u_prev, u_corr_prev=ucorr)
    pred = aug.A @ prev_p.x_filt + aug.B @ u_prev + aug.B_P @ ucorr
    assert np.allclose(got.x_pred, pred, atol=1e-14)
    assert np.allclose(got.x_obs, pred + gain @ (y1 - aug.H @ pred), atol=1e-14)
    assert np.array_equal(got.x_filt, got.x_obs)

    got = embedded_update(aug, prev_p, gain=gain, received=True, y_k=y1, x_k=x1,
                          u_prev=u_prev, u_corr_prev=ucorr)
    assert np.array_equal(got.x_filt, x1)
    assert np.allclose(got.x_obs, pred + gain @ (y1 - aug.H @ pred), atol=1e-14)


def test_covariance_limit_consistency(auuv):
    lim = covariance_limit(auuv, tol=1e-13)
    assert lim.k == -1
    # the reported fields reproduce themselves under one more step
    S = auuv.H @ lim.Sigma_pred @ auuv.H.T + auuv.Q_v
    G = np.linalg.solve(S.T, (lim.Sigma_pred @ auuv.H.T).T).T
    assert np.allclose(lim.gain, G, atol=1e-12)
    nxt = auuv.A @ lim.Sigma_filt @ auuv.A.T + auuv.Q_omega
    assert np.allclose(nxt, lim.Sigma_pred, atol=1e-10)
    tail = covariance_schedule(auuv, 200)[-1]
    assert np.allclose(tail.Sigma_filt, lim.Sigma_filt, atol=1e-10)


def test_covariance_limit_divergence():
    spec = make_spec(p=1.0, A=[[2.0]], H=[[0.0]])
    with pytest.raises(CovNotConverged):
        covariance_limit(spec, max_iter=200)


def test_remote_error_covariance():
    spec = make_spec(p=0.6, N=500)
    sol = solve_are(augment(spec))
    SW = remote_error_covariance(spec, sol.Omega, sol.L, horizon=400)
    assert SW[0][0, 0] == pytest.approx(spec.p * spec.sigma[0, 0], abs=1e-15)
    lim = remote_error_covariance_limit(spec, sol.Omega, sol.L, tol=1e-13)
    assert np.allclose(SW[-1], lim, atol=1e-10)
    assert np.linalg.eigvalsh(lim).min() >= -1e-12
    # p=0: the remote controller always sees the state, so the gap vanishes
    spec0 = make_spec(p=0.0)
    sol0 = solve_are(augment(spec0))
    SW0 = remote_error_covariance(spec0, sol0.Omega, sol0.L, horizon=20)
    assert all(np.all(S == 0.0) for S in SW0)


def test_remote_error_covariance_singular_omega(auuv):
    with pytest.raises(SingularOmega):
        remote_error_covariance(auuv, np.zeros((1, 1)), np.zeros((1, 1)), horizon=5)
