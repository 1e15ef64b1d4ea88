import logging
import math
from typing import Sequence

import numpy as np

from models import EstimatorId, EstimatorReport, MomentSet, QuadraticMseSurface, TABLE_ESTIMATORS
from models.estimator import CONSTRAINED, SURFACE_ESTIMATORS
from models.exceptions import DomainException, EstimatorException

LOGGER = logging.getLogger("estimators")

# Closed-form and solved minima are compared at this relative tolerance.
CROSS_CHECK_TOLERANCE = 1e-9

Weights = Sequence[float] | Sequence[np.ndarray]


def _auxiliary_terms(xbar_star, xbar_pop: float):
    if np.any(np.asarray(xbar_star) <= 0):
        raise DomainException(f"auxiliary mean must be positive, got {np.min(xbar_star)}")
    ratio = xbar_star / xbar_pop
    return ratio, np.exp((xbar_pop - xbar_star) / (xbar_pop + xbar_star))


def _need_weights(estimator: EstimatorId, weights: Weights | None, count: int):
    if weights is None or len(weights) != count:
        raise EstimatorException(f"{estimator.value} needs {count} weight(s), got {weights!r}")
    return weights


def point_estimate(
    estimator: EstimatorId,
    ybar_star,
    xbar_star,
    xbar_pop: float,
    weights: Weights | None = None,
):
    """
    Value of one estimator of the population mean. Accepts scalars or
    equally-shaped arrays, including arrays of per-sample weights.

    The regression estimator takes its slope as its only weight.
    """
    match estimator:
        case EstimatorId.USUAL:
            return ybar_star
        case EstimatorId.RATIO:
            ratio, _ = _auxiliary_terms(xbar_star, xbar_pop)
            return ybar_star / ratio
        case EstimatorId.REGRESSION:
            (beta,) = _need_weights(estimator, weights, 1)
            return ybar_star + beta * (xbar_pop - xbar_star)
        case EstimatorId.EXPONENTIAL:
            _, contrast = _auxiliary_terms(xbar_star, xbar_pop)
            return ybar_star * contrast
        case EstimatorId.P1:
            g1, g2 = _need_weights(estimator, weights, 2)
            ratio, _ = _auxiliary_terms(xbar_star, xbar_pop)
            return ybar_star * (g1 + 1) + g2 * np.log(ratio)
        case EstimatorId.P2_CASE1 | EstimatorId.P2_CASE2:
            g3, g4 = _need_weights(estimator, weights, 2)
            ratio, contrast = _auxiliary_terms(xbar_star, xbar_pop)
            return g3 * ybar_star + g4 * contrast * (1 + np.log(ratio))
        case EstimatorId.P3_CASE1 | EstimatorId.P3_CASE2:
            g5, g6 = _need_weights(estimator, weights, 2)
            ratio, contrast = _auxiliary_terms(xbar_star, xbar_pop)
            return g5 * ybar_star + g6 * contrast / ratio
        case _:
            raise EstimatorException(f"unknown estimator {estimator!r}")


def _regression_mse(mom: MomentSet) -> float:
    if mom.V_x <= 0:
        raise EstimatorException("V_x = 0: the auxiliary mean carries no information")
    return mom.ybar ** 2 * (mom.V_y - mom.V_yx ** 2 / mom.V_x)


def mse_surface(estimator: EstimatorId, mom: MomentSet) -> QuadraticMseSurface:
    """
    Quadratic MSE of a two-weight estimator, taken from the second-order
    expansion in the relative errors of y* and x*.

    P2's auxiliary factor expands as 1 + e/2 - 5e^2/8 and P3's as
    1 - 3e/2 + 15e^2/8, e being the relative error of x*.
    """
    Y, Vy, Vx, Vyx = mom.ybar, mom.V_y, mom.V_x, mom.V_yx
    match estimator:
        case EstimatorId.P1:
            return QuadraticMseSurface(
                const_term=Y * Y * Vy,
                A=Y * Y * (1 + Vy),
                B=Vx,
                C=Y * Y * Vy,
                D=Y * Vyx,
                E=Y * (Vyx - Vx / 2),
            )
        case EstimatorId.P2_CASE2:
            return QuadraticMseSurface(
                const_term=Y * Y,
                A=Y * Y * (1 + Vy),
                B=1 - Vx,
                C=-Y * Y,
                D=-Y * (1 - 5 * Vx / 8),
                E=Y * (1 - 5 * Vx / 8 + Vyx / 2),
            )
        case EstimatorId.P3_CASE2:
            return QuadraticMseSurface(
                const_term=Y * Y,
                A=Y * Y * (1 + Vy),
                B=1 + 6 * Vx,
                C=-Y * Y,
                D=-Y * (1 + 15 * Vx / 8),
                E=Y * (1 + 15 * Vx / 8 - 3 * Vyx / 2),
            )
        case _:
            raise EstimatorException(f"{estimator.value} has no two-weight MSE surface")


def printed_optimum(estimator: EstimatorId, mom: MomentSet) -> tuple[float, float, float]:
    """
    Closed-form optimum weights and minimum MSE written with unsigned
    coefficient magnitudes. P1 keeps its E^2 - AB denominators; P2 and P3
    use AB - E^2. Used as a cross-check of `optimize_weights`.
    """
    s = mse_surface(estimator, mom)
    A, B, E = s.A, s.B, s.E
    if estimator is EstimatorId.P1:
        C, D = s.C, s.D
        denominator = E * E - A * B
        g_a = (B * C - D * E) / denominator
        g_b = (A * D - C * E) / denominator
    else:
        # C and D enter the expansion with a negative sign
        C, D = -s.C, -s.D
        denominator = A * B - E * E
        g_a = (B * C - D * E) / denominator
        g_b = (A * D - C * E) / denominator
    minimum = s.const_term + (B * C * C + A * D * D - 2 * C * D * E) / (E * E - A * B)
    return g_a, g_b, minimum


def optimize_weights(estimator: EstimatorId, mom: MomentSet) -> tuple[float, ...]:
    """
    Plug-in weights for one estimator: the regression slope, the constrained
    (1 - g, g) pair with g = V_yx / V_x, or the free two-weight optimum.
    Estimators without weights return an empty tuple.
    """
    if estimator is EstimatorId.REGRESSION:
        if mom.V_x <= 0:
            raise EstimatorException("V_x = 0: regression slope undefined")
        return (mom.ybar * mom.V_yx / (mom.xbar * mom.V_x),)
    if estimator in CONSTRAINED:
        if mom.V_x <= 0:
            raise EstimatorException(f"V_x = 0: {estimator.value} weight undefined")
        g = mom.V_yx / mom.V_x
        return (1.0 - g, g)
    if estimator in SURFACE_ESTIMATORS:
        g_a, g_b, _ = mse_surface(estimator, mom).minimize()
        return (g_a, g_b)
    return ()


def theoretical_mse(estimator: EstimatorId, mom: MomentSet) -> float:
    Y2 = mom.ybar ** 2
    match estimator:
        case EstimatorId.USUAL:
            return Y2 * mom.V_y
        case EstimatorId.RATIO:
            return Y2 * (mom.V_y + mom.V_x - 2 * mom.V_yx)
        case EstimatorId.REGRESSION | EstimatorId.P2_CASE1 | EstimatorId.P3_CASE1:
            return _regression_mse(mom)
        case EstimatorId.EXPONENTIAL:
            return Y2 * (mom.V_y + mom.V_x / 4 - mom.V_yx)
        case EstimatorId.P1 | EstimatorId.P2_CASE2 | EstimatorId.P3_CASE2:
            _, _, minimum = mse_surface(estimator, mom).minimize()
            _, _, closed_form = printed_optimum(estimator, mom)
            if not math.isclose(minimum, closed_form, rel_tol=CROSS_CHECK_TOLERANCE, abs_tol=1e-12 * Y2):
                LOGGER.warning(
                    f"{estimator.value}: solved minimum {minimum!r} differs from closed form {closed_form!r}"
                )
            return minimum
        case _:
            raise EstimatorException(f"unknown estimator {estimator!r}")


def bias(estimator: EstimatorId, mom: MomentSet, weights: Weights | None = None) -> float:
    """First-order bias; the usual and regression estimators are unbiased to this order."""
    Y, Vx, Vyx = mom.ybar, mom.V_x, mom.V_yx
    match estimator:
        case EstimatorId.USUAL | EstimatorId.REGRESSION:
            return 0.0
        case EstimatorId.RATIO:
            return Y * (Vx - Vyx)
        case EstimatorId.EXPONENTIAL:
            return Y * (3 * Vx / 8 - Vyx / 2)
        case EstimatorId.P1:
            g1, g2 = _need_weights(estimator, weights, 2)
            return Y * g1 - g2 * Vx / 2
        case EstimatorId.P2_CASE1 | EstimatorId.P2_CASE2:
            g3, g4 = _need_weights(estimator, weights, 2)
            return Y * (g3 - 1) + g4 * (1 - 5 * Vx / 8)
        case EstimatorId.P3_CASE1 | EstimatorId.P3_CASE2:
            g5, g6 = _need_weights(estimator, weights, 2)
            return Y * (g5 - 1) + g6 * (1 + 15 * Vx / 8)
        case _:
            raise EstimatorException(f"unknown estimator {estimator!r}")


def grid_search(
    surface: QuadraticMseSurface,
    lower: float = -2.0,
    upper: float = 2.0,
    points: int = 2001,
    scale_b: float = 1.0,
) -> tuple[float, float, float]:
    """
    Brute-force minimum of `surface` over a points x points lattice.

    The second weight is searched as g_b / scale_b, so weights that
    multiply an unscaled term can be searched relative to Ybar.
    """
    axis = np.linspace(lower, upper, points)
    g_a = axis[:, None]
    g_b = scale_b * axis[None, :]
    values = surface.value(g_a, g_b)
    i, j = np.unravel_index(int(np.argmin(values)), values.shape)
    return float(axis[i]), float(scale_b * axis[j]), float(values[i, j])


def weight_scale(estimator: EstimatorId, mom: MomentSet) -> float:
    """Natural unit of an estimator's second weight."""
    return abs(mom.ybar) if estimator in SURFACE_ESTIMATORS else 1.0


def estimate_all(
    ybar_star: float,
    xbar_star: float,
    mom: MomentSet,
    estimators: Sequence[EstimatorId] = TABLE_ESTIMATORS,
) -> list[EstimatorReport]:
    """Point estimates, theoretical MSEs, biases and plug-in weights for one sample."""
    reports = []
    for estimator in estimators:
        try:
            weights = optimize_weights(estimator, mom)
            theo = theoretical_mse(estimator, mom)
        except EstimatorException as e:
            LOGGER.warning(f"{estimator.value}: {e}; using neutral weights")
            weights = neutral_weights(estimator)
            theo = float("nan")
        reports.append(EstimatorReport(
            id=estimator,
            estimate=float(point_estimate(estimator, ybar_star, xbar_star, mom.xbar, weights or None)),
            theo_mse=theo,
            bias=bias(estimator, mom, weights or None),
            weights=weights or None,
        ))
    return reports


def neutral_weights(estimator: EstimatorId) -> tuple[float, ...]:
    """Weights under which an estimator reduces to y*."""
    if estimator is EstimatorId.REGRESSION:
        return (0.0,)
    if estimator is EstimatorId.P1:
        return (0.0, 0.0)
    if estimator.is_proposed:
        return (1.0, 0.0)
    return ()
