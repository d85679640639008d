"""Multi-country time-varying-parameter VAR toolkit.

Estimates stacked multi-country VAR systems with time-varying cross-country
weights, per-equation drifting coefficients, orthogonalized impulse
responses with delta-method error bands, and two-stage out-of-sample
forecasts driven by pluggable parameter-path forecasters.
"""

from .errors import NumericalError, ValidationError
from .forecast import (
    ForecastResult,
    ForecasterConfig,
    LassoFit,
    forecast_constant,
    forecast_lasso,
    forecast_var1,
    lasso_fit,
    lasso_lambda_max,
    mse,
    select_model,
    two_stage_forecast,
)
from .gvar import (
    ActivityCoefficients,
    CountryCoefficients,
    Stability,
    StackedSystem,
    StructuralFit,
    WeightSequence,
    build_link_matrix_activity,
    build_link_matrix_country,
    estimate_structural,
    ma_coefficients,
    stability_check,
    stack_system,
)
from .ingest import (
    RawSeries,
    TimeSeriesPanel,
    ValidationReport,
    align_frequencies,
    load_panel,
    read_panel_csv,
    validate_panel,
    write_panel_csv,
)
from .irf import (
    IRFResult,
    MatrixCalculusKit,
    ShockSpec,
    asymptotic_bands,
    cholesky_lower,
    commutation_matrix,
    derivative_Gn,
    derivative_H,
    duplication_matrix,
    elimination_matrix,
    estimate_asymptotic_inputs,
    girf_point,
    oirf_point,
    vec,
    vech,
)
from .tvp import (
    KalmanState,
    PanelTVPResult,
    TVPConfig,
    TVPEquationSpec,
    TVPPriors,
    TVPTrajectory,
    estimate_all,
    kalman_forward,
    fit_equation,
    sample_sigma,
    sample_theta0_omega,
    sample_theta_tilde,
    sample_theta_tilde_smoothed,
)

__version__ = "0.1.0"

__all__ = [
    "ActivityCoefficients",
    "CountryCoefficients",
    "ForecastResult",
    "ForecasterConfig",
    "IRFResult",
    "KalmanState",
    "LassoFit",
    "MatrixCalculusKit",
    "NumericalError",
    "PanelTVPResult",
    "RawSeries",
    "ShockSpec",
    "Stability",
    "StackedSystem",
    "StructuralFit",
    "TVPConfig",
    "TVPEquationSpec",
    "TVPPriors",
    "TVPTrajectory",
    "TimeSeriesPanel",
    "ValidationError",
    "ValidationReport",
    "WeightSequence",
    "align_frequencies",
    "asymptotic_bands",
    "build_link_matrix_activity",
    "build_link_matrix_country",
    "cholesky_lower",
    "commutation_matrix",
    "derivative_Gn",
    "derivative_H",
    "duplication_matrix",
    "elimination_matrix",
    "estimate_all",
    "estimate_asymptotic_inputs",
    "estimate_structural",
    "forecast_constant",
    "forecast_lasso",
    "forecast_var1",
    "girf_point",
    "kalman_forward",
    "lasso_fit",
    "lasso_lambda_max",
    "load_panel",
    "ma_coefficients",
    "mse",
    "oirf_point",
    "read_panel_csv",
    "fit_equation",
    "sample_sigma",
    "sample_theta0_omega",
    "sample_theta_tilde",
    "sample_theta_tilde_smoothed",
    "select_model",
    "stability_check",
    "stack_system",
    "two_stage_forecast",
    "validate_panel",
    "vec",
    "vech",
    "write_panel_csv",
]
