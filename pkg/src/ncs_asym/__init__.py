"""Optimal control of a networked system with two controllers holding
asymmetric information: a dropout-gated remote controller and an embedded
controller with a private noisy observation channel.

Typical use:

    from ncs_asym import model, riccati, controller, estimator, sim

    spec = model.validate_spec(model.load_spec("config.json"))
    aug = model.augment(spec)
    steps = riccati.finite_horizon_recursion(aug)
    gains = controller.synthesize_finite(steps)
    cov = estimator.covariance_schedule(spec, spec.N + 1)
    cost = controller.analytic_cost_finite(spec, steps, cov)
    result = sim.monte_carlo(spec, gains, replicates=10000, master_seed=1)
"""
from . import controller, errors, estimator, model, riccati, sim
from .controller import (CostReport, GainSchedule, analytic_cost_finite,
                         analytic_cost_stationary, synthesize_finite,
                         synthesize_stationary)
from .estimator import (CovarianceStep, EmbeddedEstimate, RemoteEstimate,
                        covariance_limit, covariance_schedule,
                        remote_error_covariance, remote_error_covariance_limit)
from .model import (AssumptionReport, AugmentedSpec, SystemSpec,
                    ValidatedSpec, augment, check_assumptions, load_spec,
                    validate_spec)
from .riccati import (AreSolution, Certificates, RiccatiStep, Verdict,
                      finite_horizon_recursion, solve_are,
                      stabilization_verdict, uniqueness_check)
from .sim import (ChannelModel, SimResult, TrajectoryRecord, monte_carlo,
                  msq_analytic, msq_steady_state, run_replicate)

__version__ = "0.1.0"

__all__ = [
    "AreSolution", "AssumptionReport", "AugmentedSpec", "Certificates",
    "ChannelModel", "CostReport", "CovarianceStep", "EmbeddedEstimate",
    "GainSchedule", "RemoteEstimate", "RiccatiStep", "SimResult",
    "SystemSpec", "TrajectoryRecord", "ValidatedSpec", "Verdict",
    "analytic_cost_finite", "analytic_cost_stationary", "augment",
    "check_assumptions", "controller", "covariance_limit",
    "covariance_schedule", "errors", "estimator",
    "finite_horizon_recursion", "load_spec", "model", "monte_carlo",
    "msq_analytic", "msq_steady_state", "remote_error_covariance",
    "remote_error_covariance_limit", "riccati", "run_replicate", "sim",
    "solve_are", "stabilization_verdict", "synthesize_finite",
    "synthesize_stationary", "uniqueness_check", "validate_spec",
]
