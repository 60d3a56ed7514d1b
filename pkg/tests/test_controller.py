import dataclasses

import numpy as np
import pytest

from conftest import make_spec, random_instance
from ncs_asym.controller import (GainSchedule, analytic_cost_finite,
                                 analytic_cost_stationary, synthesize_finite,
                                 synthesize_stationary)
from ncs_asym.errors import NotCertified, ScheduleMismatch
from ncs_asym.estimator import covariance_limit, covariance_schedule
from ncs_asym.model import augment
from ncs_asym.riccati import Certificates, finite_horizon_recursion, solve_are
from test_riccati import lqr_recursion


def test_gain_stack_solves_normal_equations():
    for seed in range(6):
        spec = random_instance(seed)
        aug = augment(spec)
        steps = finite_horizon_recursion(aug)
        gains = synthesize_finite(steps)
        assert gains.horizon == spec.N and not gains.stationary
        for k, s in enumerate(steps):
            stack = np.vstack([gains.K_W[k], gains.K_Phat[k]])
            assert np.allclose(s.Gamma @ stack, s.M, atol=1e-11)
            assert np.allclose(s.Omega @ gains.K_Ptilde[k], s.L, atol=1e-11)


def test_terminal_gains_vanish_with_zero_terminal_weight():
    spec = random_instance(17)
    gains = synthesize_finite(finite_horizon_recursion(augment(spec)))
    assert np.all(gains.K_W[-1] == 0.0)
    assert np.all(gains.K_Phat[-1] == 0.0)
    assert np.all(gains.K_Ptilde[-1] == 0.0)


def test_hand_gains_scalar_penultimate():
    spec = make_spec(p=0.5)
    gains = synthesize_finite(finite_horizon_recursion(augment(spec)))
    k = spec.N - 1
    assert gains.K_W[k][0, 0] == pytest.approx(0.01 / 5.02, abs=1e-15)
    assert gains.K_Phat[k][0, 0] == pytest.approx(0.01 / 5.02, abs=1e-15)
    assert gains.K_Ptilde[k][0, 0] == pytest.approx(0.01 / 5.01, abs=1e-15)


def test_schedule_indexing_and_round_trip():
    spec = random_instance(23, N=12)
    gains = synthesize_finite(finite_horizon_recursion(augment(spec)))
    K_W, K_Phat, K_Ptilde = gains.at(5)
    assert np.array_equal(K_W, gains.K_W[5])
    assert np.array_equal(K_Phat, gains.K_Phat[5])
    assert np.array_equal(K_Ptilde, gains.K_Ptilde[5])
    with pytest.raises(ScheduleMismatch):
        gains.at(13)
    with pytest.raises(ScheduleMismatch):
        gains.at(-1)
    back = GainSchedule.from_dict(gains.to_dict())
    assert back.stationary == gains.stationary and back.horizon == gains.horizon
    assert np.array_equal(back.K_W, gains.K_W)
    assert np.array_equal(back.K_Phat, gains.K_Phat)
    assert np.array_equal(back.K_Ptilde, gains.K_Ptilde)


def test_stationary_schedule_repeats(auuv):
    sol = solve_are(augment(auuv))
    gains = synthesize_stationary(sol)
    assert gains.stationary and gains.horizon is None
    a = gains.at(0)
    b = gains.at(12345)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    back = GainSchedule.from_dict(gains.to_dict())
    assert back.stationary
    assert np.array_equal(back.K_W, gains.K_W)


def test_scaled_perturbs_one_block(auuv):
    sol = solve_are(augment(auuv))
    gains = synthesize_stationary(sol)
    up = gains.scaled("K_W", 1.05)
    assert np.allclose(up.K_W, 1.05 * gains.K_W, atol=1e-15)
    assert np.array_equal(up.K_Phat, gains.K_Phat)
    assert np.array_equal(up.K_Ptilde, gains.K_Ptilde)
    with pytest.raises(KeyError):
        gains.scaled("nope", 1.05)


def test_synthesize_stationary_requires_certificates(auuv):
    sol = solve_are(augment(auuv))
    bad = dataclasses.replace(sol, certificates=Certificates(
        P_W_pd=False, Delta_pd=True, spectral_ok=True, spectral_value=0.5))
    with pytest.raises(NotCertified):
        synthesize_stationary(bad)


def test_cost_report_terms_sum(auuv):
    steps = finite_horizon_recursion(augment(auuv))
    cov = covariance_schedule(auuv, auuv.N + 1)
    rep = analytic_cost_finite(auuv, steps, cov)
    assert rep.analytic == sum(rep.terms.values())
    assert set(rep.terms) == {"initial", "stage_traces", "terminal"}
    assert len(rep.per_step) == auuv.N + 1
    assert rep.terms["stage_traces"] == pytest.approx(sum(rep.per_step), rel=1e-12)
    assert rep.analytic == pytest.approx(162.13329792972155, rel=1e-12)


def test_cost_nonnegative_and_monotone_in_p():
    spec = make_spec()
    vals = []
    for p in (0.0, 0.25, 0.5, 0.75, 1.0):
        sp = spec.replace(p=p)
        steps = finite_horizon_recursion(augment(sp))
        cov = covariance_schedule(sp, sp.N + 1)
        rep = analytic_cost_finite(sp, steps, cov)
        assert rep.analytic >= -1e-12
        vals.append(rep.analytic)
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_cost_p_zero_matches_classical_lqg():
    for seed in range(8):
        spec = random_instance(40 + seed, p=0.0, N=20)
        aug = augment(spec)
        steps = finite_horizon_recursion(aug)
        cov = covariance_schedule(spec, spec.N + 1)
        rep = analytic_cost_finite(spec, steps, cov)
        # full state feedback every step: J = mu'P0 mu + tr(P0 sigma)
        #                                     + sum_k tr(Q_omega P_{k+1})
        Ps, _ = lqr_recursion(spec.A, aug.B, spec.Q, aug.R,
                              spec.P_terminal, spec.N)
        Ps.append(spec.P_terminal)
        want = float(spec.mu @ Ps[0] @ spec.mu + np.trace(Ps[0] @ spec.sigma))
        for k in range(spec.N + 1):
            want += float(np.trace(spec.Q_omega @ Ps[k + 1]))
        assert rep.analytic == pytest.approx(want, rel=1e-10, abs=1e-10)


def test_cost_schedule_mismatch(auuv):
    steps = finite_horizon_recursion(augment(auuv))
    with pytest.raises(ScheduleMismatch):
        analytic_cost_finite(auuv, steps, covariance_schedule(auuv, auuv.N))
    with pytest.raises(ScheduleMismatch):
        analytic_cost_finite(auuv, steps[:-1], covariance_schedule(auuv, auuv.N + 1))


def test_average_cost_stationary():
    spec = make_spec(p=0.6, N=500)
    sol = solve_are(augment(spec))
    lim = covariance_limit(spec)
    rep = analytic_cost_stationary(spec, sol, lim, average=True)
    assert rep.analytic == pytest.approx(0.171744, abs=5e-6)
    assert rep.analytic == sum(rep.terms.values())
    assert set(rep.terms) == {"estimation_trace", "process_noise_trace",
                              "observation_noise_trace"}


def test_average_cost_p_zero_is_noise_trace():
    spec = make_spec(p=0.0)
    sol = solve_are(augment(spec))
    lim = covariance_limit(spec)
    rep = analytic_cost_stationary(spec, sol, lim, average=True)
    want = float(np.trace(spec.Q_omega @ sol.P_W))
    assert rep.analytic == pytest.approx(want, rel=1e-12)


def test_total_cost_noiseless():
    spec = make_spec(noisy=False, N=300)
    sol = solve_are(augment(spec))
    lim = covariance_limit(spec)
    total = analytic_cost_stationary(spec, sol, lim, average=False)
    assert total.analytic > 0.0
    # long-horizon optimal cost converges to the same total
    steps = finite_horizon_recursion(augment(spec))
    cov = covariance_schedule(spec, spec.N + 1)
    fin = analytic_cost_finite(spec, steps, cov)
    assert total.analytic == pytest.approx(fin.analytic, rel=1e-4)
    with pytest.raises(ValueError):
        analytic_cost_stationary(make_spec(noisy=True), sol, lim, average=False)
