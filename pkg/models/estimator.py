from enum import Enum
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .exceptions import NoInteriorMinimumException


class EstimatorId(str, Enum):
    USUAL = "usual"
    RATIO = "ratio"
    REGRESSION = "regression"
    EXPONENTIAL = "exponential"
    P1 = "p1"
    P2_CASE1 = "p2_case1"
    P2_CASE2 = "p2_case2"
    P3_CASE1 = "p3_case1"
    P3_CASE2 = "p3_case2"

    @property
    def is_proposed(self) -> bool:
        return self in PROPOSED


# One row per estimator in every results table; proposed estimators use their free-weight form.
TABLE_ESTIMATORS = (
    EstimatorId.USUAL,
    EstimatorId.RATIO,
    EstimatorId.REGRESSION,
    EstimatorId.EXPONENTIAL,
    EstimatorId.P1,
    EstimatorId.P2_CASE2,
    EstimatorId.P3_CASE2,
)

PROPOSED = frozenset([
    EstimatorId.P1,
    EstimatorId.P2_CASE1,
    EstimatorId.P2_CASE2,
    EstimatorId.P3_CASE1,
    EstimatorId.P3_CASE2,
])

CONSTRAINED = frozenset([EstimatorId.P2_CASE1, EstimatorId.P3_CASE1])

SURFACE_ESTIMATORS = (EstimatorId.P1, EstimatorId.P2_CASE2, EstimatorId.P3_CASE2)

REPORT_COLUMNS = ["estimator", "estimate", "theo_mse", "bias", "g_values"]


class EstimatorReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: EstimatorId
    estimate: float
    theo_mse: float
    bias: float | None = None
    weights: tuple[float, ...] | None = None

    @model_validator(mode="after")
    def _non_negative_mse(self) -> "EstimatorReport":
        if not math.isnan(self.theo_mse) and self.theo_mse < -1e-9:
            raise ValueError(f"{self.id.value}: theoretical MSE {self.theo_mse} is negative")
        return self

    def to_csv_row(self) -> dict[str, str | float]:
        return {
            "estimator": self.id.value,
            "estimate": self.estimate,
            "theo_mse": self.theo_mse,
            "bias": "" if self.bias is None else self.bias,
            "g_values": ";".join(f"{g:.12g}" for g in self.weights or ()),
        }


class QuadraticMseSurface(BaseModel):
    """
    MSE(g_a, g_b) = const + A g_a^2 + B g_b^2 + 2 C g_a + 2 D g_b + 2 E g_a g_b

    Coefficients carry their signs from the second-order expansion.
    """
    model_config = ConfigDict(frozen=True)

    const_term: float
    A: float
    B: float
    C: float
    D: float
    E: float

    def value(self, g_a, g_b):
        return (
            self.const_term
            + self.A * g_a * g_a
            + self.B * g_b * g_b
            + 2 * self.C * g_a
            + 2 * self.D * g_b
            + 2 * self.E * g_a * g_b
        )

    def hessian(self) -> np.ndarray:
        return np.array([[self.A, self.E], [self.E, self.B]])

    @property
    def determinant(self) -> float:
        return self.A * self.B - self.E * self.E

    def minimize(self) -> tuple[float, float, float]:
        """Stationary point and value; the Hessian must be positive definite."""
        det = self.determinant
        scale = max(abs(self.A * self.B), abs(self.E * self.E))
        if self.A <= 0 or self.B <= 0 or det <= 1e-12 * scale:
            raise NoInteriorMinimumException(
                f"no interior minimum: Hessian [[{self.A}, {self.E}], [{self.E}, {self.B}]] is not positive definite"
            )
        g_a, g_b = np.linalg.solve(self.hessian(), -np.array([self.C, self.D]))
        return float(g_a), float(g_b), float(self.value(g_a, g_b))
