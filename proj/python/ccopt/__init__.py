"""Chance-constrained trajectory optimization with certified collision risk."""

from ._core import (
    ConvexBody,
    DomainError,
    InputError,
    MonteCarloReport,
    NumericalError,
    PlanResult,
    RiskCertificate,
    RobotModel,
    Scene,
    SCOConfig,
    UncertainObstacle,
    certify_risk,
    chi2_cdf,
    chi2_inv_cdf,
    chi2_inv_sf,
    chi2_sf,
    load_robot,
    load_scene,
    monte_carlo_risk,
    parse_robot,
    parse_scene,
    plan,
    risk_blind_plan,
    risk_gradient,
    run_cli,
    shadow,
    shadow_squared_radius,
    signed_distance,
)

__all__ = [name for name in dir() if not name.startswith("_")]
