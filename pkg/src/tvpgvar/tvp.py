"""Per-equation time-varying intercept and slope estimation.

Each panel column i follows a scalar AR(1)-type equation whose intercept and
slope drift as independent random walks. The non-centred parametrization
splits the coefficient path into a constant part and a standardized path,

    theta_t = theta_0 + sqrt(Omega) * theta_tilde_t,

so the state shocks are standard normal and the square-root innovation
scales become plain regression coefficients. Estimation iterates: a Kalman
forward pass and state draw for the standardized path, a normal posterior
draw for (theta_0, sqrt_omega), and an inverse-gamma style draw for the
observation noise. The draws of the final iteration are reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NumericalError, ValidationError
from .ingest import TimeSeriesPanel
from .serialize import read_csv_rows, read_json, write_csv, write_json

RIDGE_JITTER = 1e-8


def _default_a0_inv(design: np.ndarray) -> np.ndarray:
    # data-based prior: A0 = diag{1 / diag((X'X)^-1)}, so A0^-1 = diag{diag((X'X)^-1)}
    xtx = design.T @ design
    diag = np.diag(np.linalg.pinv(xtx)).copy()
    diag = np.clip(diag, 0.0, None)
    return np.diag(diag)


@dataclass(frozen=True)
class TVPPriors:
    """Prior settings; ``a0``/``A0`` default to the data-based choice."""

    m0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    p0: np.ndarray = field(default_factory=lambda: 1e-15 * np.eye(2))
    a0: np.ndarray = field(default_factory=lambda: np.zeros(4))
    big_a0: np.ndarray | None = None  # None -> diag{1/diag((X'X)^-1)} per iteration
    c0: float = 0.01
    big_c0: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "m0", np.asarray(self.m0, float).reshape(2))
        object.__setattr__(self, "p0", np.asarray(self.p0, float).reshape(2, 2))
        object.__setattr__(self, "a0", np.asarray(self.a0, float).reshape(4))
        if self.big_a0 is not None:
            object.__setattr__(self, "big_a0", np.asarray(self.big_a0, float).reshape(4, 4))
        for name, mat in (("p0", self.p0), ("big_a0", self.big_a0)):
            if mat is None:
                continue
            if np.max(np.abs(mat - mat.T)) > 1e-12:
                raise ValidationError(f"prior {name} must be symmetric")
            if np.min(np.linalg.eigvalsh(mat)) < -1e-12:
                raise ValidationError(f"prior {name} must be positive semi-definite")


@dataclass(frozen=True)
class TVPEquationSpec:
    """One column's estimation problem: data, iteration budget, seed, priors.

    ``smooth_states`` selects the state draw: the default joint backward
    draw keeps the innovation scales identified; ``False`` uses independent
    filtered draws (the literal forward-only scheme), which is prone to
    collapsing the scales toward zero on drifting-coefficient data.
    """

    y: np.ndarray
    iters: int = 1000
    seed: int | Sequence[int] = 0
    priors: TVPPriors = field(default_factory=TVPPriors)
    smooth_states: bool = True

    def __post_init__(self):
        y = np.asarray(self.y, float).reshape(-1)
        object.__setattr__(self, "y", y)
        if y.size < 3:
            raise ValidationError("need at least 3 observations per equation")
        if not np.all(np.isfinite(y)):
            raise ValidationError("observations must be finite")
        if self.iters < 1:
            raise ValidationError("iters must be >= 1")


@dataclass(frozen=True)
class KalmanState:
    """Filtered moments and update diagnostics, one row per step t=1..T-1."""

    m: np.ndarray               # (n, 2) filtered means
    p: np.ndarray               # (n, 2, 2) filtered covariances
    innovations: np.ndarray     # (n,)
    innovation_var: np.ndarray  # (n,)
    gains: np.ndarray           # (n, 2)


@dataclass(frozen=True)
class TVPTrajectory:
    """Final-draw coefficient paths for one panel column.

    Row t corresponds to observation t+1 of the input series (the first
    observation is consumed as the initial lag). ``theta`` reconstructs as
    ``theta0 + sqrt_omega * theta_tilde`` row-wise.
    """

    theta0: np.ndarray       # (2,)
    sqrt_omega: np.ndarray   # (2,)
    theta_tilde: np.ndarray  # (n, 2)
    theta: np.ndarray        # (n, 2)
    sigma2: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValidationError("sigma2 must be positive")
        recon = self.theta0[None, :] + self.sqrt_omega[None, :] * self.theta_tilde
        if np.max(np.abs(recon - self.theta)) > 1e-12 * max(1.0, np.max(np.abs(self.theta))):
            raise ValidationError("theta does not reconstruct from theta0 + sqrt_omega * theta_tilde")


def kalman_forward(y: np.ndarray, theta0: np.ndarray, sqrt_omega: np.ndarray,
                   sigma2: float, priors: TVPPriors | None = None,
                   state_noise: float = 1.0) -> KalmanState:
    """Forward Kalman pass for the standardized state path.

    Observation t (t = 1..T-1) is ``y_t - [1, y_{t-1}] @ theta0`` with loading
    ``H_t = [sqrt_omega_1, sqrt_omega_2 * y_{t-1}]``, observation variance
    ``sigma2``, and state innovation covariance ``state_noise * I`` (1 for the
    non-centred random walk; 0 degenerates to recursive least squares).
    """
    y = np.asarray(y, float).reshape(-1)
    if y.size < 2:
        raise ValidationError("need at least 2 observations to filter")
    if sigma2 <= 0:
        raise ValidationError("sigma2 must be positive")
    priors = priors or TVPPriors()
    n = y.size - 1

    m_out = np.empty((n, 2))
    p_out = np.empty((n, 2, 2))
    v_out = np.empty(n)
    s_out = np.empty(n)
    k_out = np.empty((n, 2))

    # scalar 2x2 recursion: much faster than ndarray ops at this size
    m0, m1 = float(priors.m0[0]), float(priors.m0[1])
    p00 = float(priors.p0[0, 0])
    p01 = float((priors.p0[0, 1] + priors.p0[1, 0]) / 2.0)
    p11 = float(priors.p0[1, 1])
    t00, t01 = float(theta0[0]), float(theta0[1])
    w0, w1 = float(sqrt_omega[0]), float(sqrt_omega[1])
    q = float(state_noise)
    r = float(sigma2)
    yv = y

    for t in range(1, y.size):
        ylag = yv[t - 1]
        h0 = w0
        h1 = w1 * ylag
        ystar = yv[t] - (t00 + t01 * ylag)
        p00 += q
        p11 += q
        v = ystar - (h0 * m0 + h1 * m1)
        ph0 = p00 * h0 + p01 * h1
        ph1 = p01 * h0 + p11 * h1
        s = h0 * ph0 + h1 * ph1 + r
        if s <= 0.0:
            raise NumericalError(f"non-positive innovation variance at step {t}")
        k0 = ph0 / s
        k1 = ph1 / s
        m0 += k0 * v
        m1 += k1 * v
        p00 -= s * k0 * k0
        p01 -= s * k0 * k1
        p11 -= s * k1 * k1
        i = t - 1
        m_out[i, 0] = m0
        m_out[i, 1] = m1
        p_out[i, 0, 0] = p00
        p_out[i, 0, 1] = p01
        p_out[i, 1, 0] = p01
        p_out[i, 1, 1] = p11
        v_out[i] = v
        s_out[i] = s
        k_out[i, 0] = k0
        k_out[i, 1] = k1

    return KalmanState(m=m_out, p=p_out, innovations=v_out,
                       innovation_var=s_out, gains=k_out)


def sample_theta_tilde_smoothed(state: KalmanState, rng: np.random.Generator,
                                state_noise: float = 1.0) -> np.ndarray:
    """Joint draw of the standardized path by backward sampling.

    Draws theta_tilde_{T-1} from its filtered distribution, then walks
    backward through the conditionals of the random-walk state equation
    (Carter-Kohn). Unlike independent filtered draws this respects the serial
    dependence of the path, which keeps the scale coefficients identified.
    """
    if state_noise <= 0:
        raise ValidationError("joint state draw needs positive state noise")
    m, p = state.m, state.p
    n = m.shape[0]
    z = rng.standard_normal((n, 2))
    draws = np.empty((n, 2))
    q = float(state_noise)

    def chol_draw(mean0, mean1, c00, c01, c11, z0, z1):
        l00 = np.sqrt(max(c00, 0.0))
        l10 = c01 / l00 if l00 > 0 else 0.0
        l11 = np.sqrt(max(c11 - l10 * l10, 0.0))
        return mean0 + l00 * z0, mean1 + l10 * z0 + l11 * z1

    d0, d1 = chol_draw(m[-1, 0], m[-1, 1], p[-1, 0, 0], p[-1, 0, 1], p[-1, 1, 1],
                       z[-1, 0], z[-1, 1])
    draws[-1] = (d0, d1)
    for t in range(n - 2, -1, -1):
        p00, p01, p11 = p[t, 0, 0], p[t, 0, 1], p[t, 1, 1]
        s00, s01, s11 = p00 + q, p01, p11 + q
        det = s00 * s11 - s01 * s01
        # gain = P_t (P_t + qI)^-1
        g00 = (p00 * s11 - p01 * s01) / det
        g01 = (p01 * s00 - p00 * s01) / det
        g10 = (p01 * s11 - p11 * s01) / det
        g11 = (p11 * s00 - p01 * s01) / det
        r0 = d0 - m[t, 0]
        r1 = d1 - m[t, 1]
        mean0 = m[t, 0] + g00 * r0 + g01 * r1
        mean1 = m[t, 1] + g10 * r0 + g11 * r1
        c00 = p00 - (g00 * p00 + g01 * p01)
        c01 = p01 - (g00 * p01 + g01 * p11)
        c11 = p11 - (g10 * p01 + g11 * p11)
        d0, d1 = chol_draw(mean0, mean1, c00, c01, c11, z[t, 0], z[t, 1])
        draws[t] = (d0, d1)
    return draws


def sample_theta_tilde(state: KalmanState, rng: np.random.Generator) -> np.ndarray:
    """Draw the standardized path row-wise from N(m_t, P_t)."""
    p = state.p
    tr = p[:, 0, 0] + p[:, 1, 1]
    det_gap = np.sqrt(np.maximum((p[:, 0, 0] - p[:, 1, 1]) ** 2 + 4.0 * p[:, 0, 1] ** 2, 0.0))
    eig_min = (tr - det_gap) / 2.0
    if np.min(eig_min) < -1e-10:
        raise NumericalError(
            f"filtered covariance not PSD (min eigenvalue {np.min(eig_min):.3e})")
    l00 = np.sqrt(np.maximum(p[:, 0, 0], 0.0))
    l10 = np.divide(p[:, 1, 0], l00, out=np.zeros_like(l00), where=l00 > 0)
    l11 = np.sqrt(np.maximum(p[:, 1, 1] - l10 ** 2, 0.0))
    z = rng.standard_normal(state.m.shape)
    draws = np.empty_like(state.m)
    draws[:, 0] = state.m[:, 0] + l00 * z[:, 0]
    draws[:, 1] = state.m[:, 1] + l10 * z[:, 0] + l11 * z[:, 1]
    return draws


def _step3_design(y: np.ndarray, theta_tilde: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Regression target/design for the constant and scale coefficients."""
    ylag = y[:-1]
    target = y[1:]
    design = np.column_stack([
        np.ones_like(ylag), ylag,
        theta_tilde[:, 0], ylag * theta_tilde[:, 1],
    ])
    return target, design


def sample_theta0_omega(y: np.ndarray, theta_tilde: np.ndarray, sigma2: float,
                        priors: TVPPriors, rng: np.random.Generator
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Draw (theta0, sqrt_omega) from their joint normal posterior.

    The design row at t is [1, y_{t-1}, tilde_1t, y_{t-1} * tilde_2t], scaled
    by 1/sigma; the posterior is N(A (X'y/sigma^2 + A0^-1 a0), A) with
    A = (X'X/sigma^2 + A0^-1)^-1. Signs of sqrt_omega are unidentified and
    may come back negative; the implied variances use the squares.
    """
    y = np.asarray(y, float).reshape(-1)
    target, design = _step3_design(y, theta_tilde)
    if priors.big_a0 is None:
        a0_inv = _default_a0_inv(design)
    else:
        a0_inv = np.linalg.inv(priors.big_a0)
    prec = design.T @ design / sigma2 + a0_inv
    rhs = design.T @ target / sigma2 + a0_inv @ priors.a0
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(prec + RIDGE_JITTER * np.eye(4))
        except np.linalg.LinAlgError:
            raise NumericalError("rank-deficient design in coefficient posterior") from None
    # mean = prec^-1 rhs; draw = mean + chol^-T z so the covariance is prec^-1
    tmp = np.linalg.solve(chol, rhs)
    mean = np.linalg.solve(chol.T, tmp)
    draw = mean + np.linalg.solve(chol.T, rng.standard_normal(4))
    return draw[:2].copy(), draw[2:].copy()


def sigma_posterior(y: np.ndarray, design: np.ndarray, theta_star: np.ndarray,
                    priors: TVPPriors) -> tuple[float, float]:
    """Gamma posterior (shape, rate) of the observation precision:
    shape c0 + n/2, rate C0 + SSR/2 for the step-3 regression residuals."""
    y = np.asarray(y, float).reshape(-1)
    resid = y - design @ theta_star
    if not np.all(np.isfinite(resid)):
        raise ValidationError("non-finite residuals in variance update")
    c_t = priors.c0 + y.size / 2.0
    big_c_t = priors.big_c0 + 0.5 * float(resid @ resid)
    if big_c_t <= 0:
        raise NumericalError(f"non-positive posterior rate {big_c_t}")
    return c_t, big_c_t


def sample_sigma(y: np.ndarray, design: np.ndarray, theta_star: np.ndarray,
                 priors: TVPPriors, rng: np.random.Generator) -> float:
    """Draw the observation variance: precision ~ Gamma(shape, rate)."""
    c_t, big_c_t = sigma_posterior(y, design, theta_star, priors)
    precision = rng.gamma(shape=c_t, scale=1.0 / big_c_t)
    return 1.0 / precision


def fit_equation(spec: TVPEquationSpec) -> TVPTrajectory:
    """Iterate filter / coefficient / variance draws and keep the final one."""
    y = spec.y
    priors = spec.priors
    rng = np.random.default_rng(spec.seed)
    theta0 = np.zeros(2)
    sqrt_omega = np.ones(2)
    sigma2 = 0.1
    theta_tilde = np.zeros((y.size - 1, 2))
    for it in range(spec.iters):
        try:
            state = kalman_forward(y, theta0, sqrt_omega, sigma2, priors)
            if spec.smooth_states:
                theta_tilde = sample_theta_tilde_smoothed(state, rng)
            else:
                theta_tilde = sample_theta_tilde(state, rng)
            theta0, sqrt_omega = sample_theta0_omega(y, theta_tilde, sigma2, priors, rng)
            target, design = _step3_design(y, theta_tilde)
            theta_star = np.concatenate([theta0, sqrt_omega])
            sigma2 = sample_sigma(target, design, theta_star, priors, rng)
        except (NumericalError, ValidationError) as exc:
            raise NumericalError(f"iteration {it}: {exc}") from exc
    theta = theta0[None, :] + sqrt_omega[None, :] * theta_tilde
    return TVPTrajectory(theta0=theta0, sqrt_omega=sqrt_omega,
                         theta_tilde=theta_tilde, theta=theta, sigma2=sigma2)


@dataclass(frozen=True)
class TVPConfig:
    iters: int = 1000
    seed: int = 0
    priors: TVPPriors = field(default_factory=TVPPriors)
    smooth_states: bool = True


@dataclass
class PanelTVPResult:
    """Per-column trajectories; failed columns carry None plus a reason."""

    trajectories: list[TVPTrajectory | None]
    errors: dict[int, str]

    @property
    def ok(self) -> bool:
        return not self.errors


def estimate_all(panel: TimeSeriesPanel, config: TVPConfig,
                 threads: int = 1) -> PanelTVPResult:
    """Fit every panel column independently with a per-column RNG stream.

    Column i draws from ``default_rng([seed, i])`` so results do not depend
    on evaluation order or thread count; failures are collected and
    estimation continues for the remaining columns.
    """
    def fit_column(i: int) -> TVPTrajectory:
        spec = TVPEquationSpec(y=panel.values[:, i], iters=config.iters,
                               seed=(config.seed, i), priors=config.priors,
                               smooth_states=config.smooth_states)
        return fit_equation(spec)

    trajectories: list[TVPTrajectory | None] = [None] * panel.width
    errors: dict[int, str] = {}
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {i: pool.submit(fit_column, i) for i in range(panel.width)}
        for i, future in futures.items():
            try:
                trajectories[i] = future.result()
            except (NumericalError, ValidationError) as exc:
                errors[i] = str(exc)
    else:
        for i in range(panel.width):
            try:
                trajectories[i] = fit_column(i)
            except (NumericalError, ValidationError) as exc:
                errors[i] = str(exc)
    return PanelTVPResult(trajectories=trajectories, errors=errors)


def write_trajectories(result: PanelTVPResult, panel: TimeSeriesPanel,
                       config: TVPConfig, csv_path: str | Path,
                       meta_path: str | Path | None = None) -> None:
    """Export paths as ``date,column,b,f1`` rows plus a JSON sidecar."""
    names = panel.column_names()
    dates = panel.time_index[1:]
    rows = []
    for i, traj in enumerate(result.trajectories):
        if traj is None:
            continue
        for t, date in enumerate(dates):
            rows.append([date, names[i], traj.theta[t, 0], traj.theta[t, 1]])
    write_csv(csv_path, ["date", "column", "b", "f1"], rows)
    if meta_path is not None:
        meta = {
            "seed": config.seed,
            "iters": config.iters,
            "columns": {
                names[i]: {
                    "theta0": traj.theta0,
                    "sqrt_omega": traj.sqrt_omega,
                    "sigma2": traj.sigma2,
                }
                for i, traj in enumerate(result.trajectories) if traj is not None
            },
            "errors": {names[i]: msg for i, msg in result.errors.items()},
        }
        write_json(meta, meta_path)


def read_trajectories(csv_path: str | Path) -> dict[str, tuple[list[str], np.ndarray]]:
    """Read a trajectory (or predicted-path) CSV: column -> (dates, (n, 2))."""
    header, rows = read_csv_rows(csv_path)
    if header != ["date", "column", "b", "f1"]:
        raise ValidationError(f"{csv_path}: expected header date,column,b,f1")
    dates: dict[str, list[str]] = {}
    values: dict[str, list[list[float]]] = {}
    for date, column, b, f1 in rows:
        dates.setdefault(column, []).append(date)
        values.setdefault(column, []).append([float(b), float(f1)])
    return {col: (dates[col], np.array(values[col])) for col in dates}


def read_trajectory_meta(meta_path: str | Path) -> dict:
    return read_json(meta_path)
