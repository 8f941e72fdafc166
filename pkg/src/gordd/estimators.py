"""Statistical core: weighted least squares, quadratic logistic regression,
plug-in bandwidth selection and local linear discontinuity estimation.

The discontinuity estimator fits one weighted linear regression on each side
of a cutoff under a triangular kernel and reports the gap between the two
boundary intercepts. Bandwidths follow the plug-in selector of Imbens &
Kalyanaraman (2012): a pilot window for density and outcome variance at the
cutoff, third-derivative-based side pilots for the one-sided curvatures, and
a regularized final formula with the triangular-kernel constant 3.4375.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EstimationError,
    EstimationWarning,
    SeparationError,
    SingularDesignError,
)

Z95 = 1.96
DEFAULT_CUTOFFS = (1, 2, 3, 4)


@dataclass(frozen=True)
class WlsFit:
    """Weighted least squares solution with classical and HC1 covariances."""

    beta: np.ndarray
    cov_classical: np.ndarray
    cov_robust: np.ndarray
    residual_variance: float
    n_used: int

    def covariance(self, robust: bool = True) -> np.ndarray:
        return self.cov_robust if robust else self.cov_classical


def weighted_least_squares(
    design: np.ndarray, response: np.ndarray, weights: np.ndarray
) -> WlsFit:
    """Minimize sum of w_i * (y_i - x_i . beta)^2.

    Requires nonnegative weights and at least as many positively weighted
    rows as columns. The design is solved through an SVD of the
    column-normalized weighted system; a smallest singular value below
    1e-10 of the largest raises SingularDesignError.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    w = np.asarray(weights, dtype=float)
    if X.ndim != 2:
        raise EstimationError("design must be a 2-d array")
    n, k = X.shape
    if y.shape != (n,) or w.shape != (n,):
        raise EstimationError("design, response and weights sizes disagree")
    if (w < 0).any():
        raise EstimationError("weights must be nonnegative")
    n_used = int((w > 0).sum())
    if n < k or n_used < k:
        raise EstimationError(
            f"need at least {k} positively weighted rows, have {n_used}"
        )

    sqrt_w = np.sqrt(w)
    Xw = X * sqrt_w[:, None]
    norms = np.linalg.norm(Xw, axis=0)
    if (norms == 0).any():
        raise SingularDesignError("a design column has zero weighted norm")
    u_mat, s, vt = np.linalg.svd(Xw / norms, full_matrices=False)
    if s[-1] < 1e-10 * s[0]:
        raise SingularDesignError(
            f"weighted design is rank deficient (condition {s[0] / s[-1]:.3e})"
        )
    beta = (vt.T @ ((u_mat.T @ (y * sqrt_w)) / s)) / norms
    bread = ((vt.T * (1.0 / s**2)) @ vt) / norms[:, None] / norms[None, :]

    resid = y - X @ beta
    dof = n_used - k
    rss_w = float(np.sum(w * resid**2))
    if dof > 0:
        residual_variance = rss_w / dof
        cov_classical = residual_variance * bread
        meat = (X * ((w * resid) ** 2)[:, None]).T @ X
        cov_robust = bread @ meat @ bread * (n_used / dof)
    else:
        residual_variance = float("nan")
        cov_classical = np.full((k, k), np.nan)
        cov_robust = np.full((k, k), np.nan)
    return WlsFit(
        beta=beta,
        cov_classical=cov_classical,
        cov_robust=cov_robust,
        residual_variance=residual_variance,
        n_used=n_used,
    )


def _expit(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _deviance(y: np.ndarray, eta: np.ndarray) -> float:
    # -2 * loglik, computed on the linear-predictor scale for stability
    return float(-2.0 * (y @ eta - np.logaddexp(0.0, eta).sum()))


@dataclass(frozen=True)
class LogisticFit:
    """Quadratic logistic regression for one handicap segment."""

    level: int | None
    beta: np.ndarray            # (b0, b1, b2) for b0 + b1*z + b2*z^2
    covariance: np.ndarray      # inverse observed information, 3x3
    n: int
    converged: bool
    deviance: float
    deviance_trace: tuple[float, ...] = field(default=(), repr=False)


STEP_TOL = 1e-10
SCORE_TOL = 1e-8
DIVERGENCE_NORM = 1e3
MAX_IRLS_ITERATIONS = 100


def fit_logistic_poly2(
    z: np.ndarray, y: np.ndarray, level: int | None = None
) -> LogisticFit:
    """Maximum likelihood quadratic logistic fit via damped Newton steps.

    Steps are halved whenever they would increase the deviance, so the
    deviance trace is non-increasing. Convergence requires both a step below
    1e-10 and a score below 1e-8 in max norm. Coefficients escaping past
    max-norm 1e3, or a single outcome class, raise SeparationError.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    n = z.size
    if n < 10:
        raise EstimationError(f"need at least 10 observations, have {n}")
    if y.min() == y.max():
        raise SeparationError("only one outcome class present")
    X = np.column_stack([np.ones(n), z, z * z])

    beta = np.zeros(3)
    eta = X @ beta
    dev = _deviance(y, eta)
    trace = [dev]
    converged = False
    for _ in range(MAX_IRLS_ITERATIONS):
        p = _expit(eta)
        score = X.T @ (y - p)
        info = X.T @ ((p * (1.0 - p))[:, None] * X)
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise SeparationError("observed information is singular") from None

        scale = 1.0
        for _ in range(40):
            candidate = beta + scale * step
            eta_new = X @ candidate
            dev_new = _deviance(y, eta_new)
            if dev_new <= dev:
                break
            scale *= 0.5
        else:
            # no productive direction left: treat the current point as final
            trace.append(dev)
            converged = np.abs(score).max() < SCORE_TOL
            break

        step_size = float(np.abs(candidate - beta).max())
        beta, eta, dev = candidate, eta_new, dev_new
        trace.append(dev)
        if np.abs(beta).max() > DIVERGENCE_NORM:
            raise SeparationError(
                "coefficients diverged: the classes are completely separated"
            )
        if step_size < STEP_TOL:
            p = _expit(eta)
            if np.abs(X.T @ (y - p)).max() < SCORE_TOL:
                converged = True
                break

    p = _expit(eta)
    info = X.T @ ((p * (1.0 - p))[:, None] * X)
    try:
        covariance = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise SeparationError("observed information is singular") from None
    return LogisticFit(
        level=level,
        beta=beta,
        covariance=covariance,
        n=n,
        converged=bool(converged),
        deviance=dev,
        deviance_trace=tuple(trace),
    )


def predict_logistic(fit: LogisticFit, z: float) -> tuple[float, tuple[float, float]]:
    """Win probability and its 95% band at z.

    The band is computed on the linear predictor with the delta-method
    variance x' Cov x and then mapped through the logistic function, so it
    always stays inside (0, 1).
    """
    x = np.array([1.0, z, z * z])
    eta = float(x @ fit.beta)
    se_eta = float(np.sqrt(x @ fit.covariance @ x))
    p = float(_expit(np.array([eta]))[0])
    lo = float(_expit(np.array([eta - Z95 * se_eta]))[0])
    hi = float(_expit(np.array([eta + Z95 * se_eta]))[0])
    return p, (lo, hi)


def logistic_curve(
    fit: LogisticFit, points: int = 101
) -> list[tuple[int, float, float, float, float]]:
    """Sample (level, z, p, p_lo, p_hi) on an even grid over the fit's segment."""
    if fit.level is None:
        raise EstimationError("fit has no segment level attached")
    rows = []
    for i in range(points):
        z = fit.level + i / (points - 1)
        p, (lo, hi) = predict_logistic(fit, z)
        rows.append((fit.level, z, p, lo, hi))
    return rows


PILOT_SD_FACTOR = 1.84       # pilot window: 1.84 * sd * n^(-1/5)
CURVATURE_PILOT_FACTOR = 3.56  # side pilots: 3.56 * (.)^(1/7) * n^(-1/7)
REGULARIZER_FACTOR = 2160.0
TRIANGULAR_KERNEL_CONSTANT = 3.4375
PILOT_DENOMINATOR_FLOOR = 1e-10


def ik_bandwidth(z: np.ndarray, y: np.ndarray, cutoff: float) -> float:
    """Plug-in bandwidth for the local linear estimator at a cutoff.

    Stages: (1) pilot window h1 = 1.84 sd(z) n^(-1/5); (2) density and
    outcome variance at the cutoff from that window; (3) a global cubic fit
    with a jump term whose third derivative sets one-sided curvature pilot
    windows (n^(-1/7) rule); (4) one-sided quadratic fits for the boundary
    curvatures; (5) variance regularizers 2160 sigma^2 / (n h^4); (6) the
    final triangular-kernel formula with constant 3.4375.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    n = z.size
    below = z < cutoff
    above = ~below
    n_below, n_above = int(below.sum()), int(above.sum())
    if n_below < 10 or n_above < 10:
        raise EstimationError(
            f"need >= 10 observations per side of {cutoff}, "
            f"have {n_below} below and {n_above} above"
        )

    sd = float(z.std(ddof=1))
    h1 = PILOT_SD_FACTOR * sd * n ** (-1 / 5)
    in_left = (z >= cutoff - h1) & below
    in_right = (z <= cutoff + h1) & above
    n1_left, n1_right = int(in_left.sum()), int(in_right.sum())
    if n1_left < 3 or n1_right < 3:
        raise EstimationError("fewer than 3 points in the variance pilot window")
    sse_left = float(((y[in_left] - y[in_left].mean()) ** 2).sum())
    sse_right = float(((y[in_right] - y[in_right].mean()) ** 2).sum())
    if sse_left == 0.0 or sse_right == 0.0:
        raise EstimationError("zero outcome variance on one side of the cutoff")
    density = (n1_left + n1_right) / (2.0 * n * h1)
    sigma2 = (sse_left + sse_right) / (n1_left + n1_right)

    u = z - cutoff
    cubic = np.column_stack(
        [np.ones(n), above.astype(float), u, u**2, u**3]
    )
    third_derivative = 6.0 * weighted_least_squares(cubic, y, np.ones(n)).beta[4]
    # guard against a vanishing third derivative; the floor lives on the
    # sd-normalized scale (density * curvature^2 carries z^-7) so rescaling
    # z rescales the whole selection, floor included
    pilot_denominator = max(
        density * third_derivative**2, PILOT_DENOMINATOR_FLOOR / sd**7
    )
    pilot_base = CURVATURE_PILOT_FACTOR * (sigma2 / pilot_denominator) ** (1 / 7)
    h2_left = pilot_base * n_below ** (-1 / 7)
    h2_right = pilot_base * n_above ** (-1 / 7)

    in2_left = (z >= cutoff - h2_left) & below
    in2_right = (z <= cutoff + h2_right) & above
    n2_left, n2_right = int(in2_left.sum()), int(in2_right.sum())
    if n2_left < 3 or n2_right < 3:
        raise EstimationError("fewer than 3 points in a curvature pilot window")

    def side_curvature(mask: np.ndarray) -> float:
        design = np.column_stack([np.ones(mask.sum()), u[mask], u[mask] ** 2])
        return 2.0 * weighted_least_squares(design, y[mask], np.ones(mask.sum())).beta[2]

    curv_left = side_curvature(in2_left)
    curv_right = side_curvature(in2_right)
    reg_left = REGULARIZER_FACTOR * sigma2 / (n2_left * h2_left**4)
    reg_right = REGULARIZER_FACTOR * sigma2 / (n2_right * h2_right**4)

    h = (
        TRIANGULAR_KERNEL_CONSTANT
        * (
            2.0
            * sigma2
            / (density * ((curv_right - curv_left) ** 2 + reg_left + reg_right))
        )
        ** (1 / 5)
        * n ** (-1 / 5)
    )
    return float(h)


@dataclass(frozen=True)
class RddEstimate:
    """Discontinuity estimate at one cutoff.

    tau is the boundary mean just below the cutoff minus the one just above,
    so a handicap step that hurts the white player shows up positive.
    """

    cutoff: float
    tau: float
    se: float
    ci95: tuple[float, float]
    bandwidth: float
    n_left: int
    n_right: int


def local_linear_rdd(
    z: np.ndarray,
    y: np.ndarray,
    cutoff: float,
    bandwidth: float,
    kernel: str = "triangular",
    robust: bool = True,
) -> RddEstimate:
    """Local linear discontinuity estimate with a triangular kernel.

    One weighted regression of y on (1, z - cutoff) per side; tau is the
    below intercept minus the above intercept and its variance sums the two
    intercept variances (HC1 by default). Refuses to run with fewer than 3
    positively weighted points on either side.
    """
    if bandwidth <= 0:
        raise EstimationError("bandwidth must be positive")
    if kernel not in ("triangular", "uniform"):
        raise EstimationError(f"unknown kernel {kernel!r}")
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    u = (z - cutoff) / bandwidth
    if kernel == "triangular":
        w = np.maximum(0.0, 1.0 - np.abs(u))
    else:
        w = (np.abs(u) <= 1.0).astype(float)

    below = z < cutoff
    sides = []
    for mask in (below & (w > 0), ~below & (w > 0)):
        count = int(mask.sum())
        if count < 3:
            raise EstimationError(
                f"fewer than 3 weighted points on one side of {cutoff}"
            )
        design = np.column_stack([np.ones(count), z[mask] - cutoff])
        fit = weighted_least_squares(design, y[mask], w[mask])
        sides.append((fit, count))
    (fit_below, n_left), (fit_above, n_right) = sides

    tau = float(fit_below.beta[0] - fit_above.beta[0])
    variance = float(
        fit_below.covariance(robust)[0, 0] + fit_above.covariance(robust)[0, 0]
    )
    se = float(np.sqrt(variance))
    return RddEstimate(
        cutoff=float(cutoff),
        tau=tau,
        se=se,
        ci95=(tau - Z95 * se, tau + Z95 * se),
        bandwidth=float(bandwidth),
        n_left=n_left,
        n_right=n_right,
    )


def estimate_all_cutoffs(
    z: np.ndarray,
    y: np.ndarray,
    cutoffs: Sequence[float] = DEFAULT_CUTOFFS,
    robust: bool = True,
    bandwidth: float | None = None,
) -> list[RddEstimate]:
    """Estimate the handicap effect at each cutoff over its adjacent segments.

    For cutoff c only observations with z in [c-1, c+1) enter; the bandwidth
    is selected per cutoff unless overridden. Cutoffs that cannot be
    estimated are skipped with an EstimationWarning.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    estimates: list[RddEstimate] = []
    for cutoff in cutoffs:
        mask = (z >= cutoff - 1) & (z < cutoff + 1)
        z_c, y_c = z[mask], y[mask]
        try:
            h = bandwidth if bandwidth is not None else ik_bandwidth(z_c, y_c, cutoff)
            estimates.append(
                local_linear_rdd(z_c, y_c, cutoff, h, robust=robust)
            )
        except EstimationError as exc:
            warnings.warn(
                f"cutoff {cutoff} skipped: {exc}", EstimationWarning, stacklevel=2
            )
    return estimates


ESTIMATES_CSV_COLUMNS = [
    "cutoff", "tau", "se", "ci_lo", "ci_hi", "bandwidth", "n_left", "n_right",
]


def write_estimates_csv(estimates: Iterable[RddEstimate], path: str | Path) -> int:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ESTIMATES_CSV_COLUMNS)
        count = 0
        for est in estimates:
            writer.writerow([
                repr(est.cutoff), repr(est.tau), repr(est.se),
                repr(est.ci95[0]), repr(est.ci95[1]), repr(est.bandwidth),
                est.n_left, est.n_right,
            ])
            count += 1
    return count


def write_curves_csv(fits: Iterable[LogisticFit], path: str | Path) -> int:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["H", "z", "p", "p_lo", "p_hi"])
        count = 0
        for fit in fits:
            for level, zv, p, lo, hi in logistic_curve(fit):
                writer.writerow([level, repr(zv), repr(p), repr(lo), repr(hi)])
                count += 1
    return count
