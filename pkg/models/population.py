from dataclasses import dataclass
from enum import Enum, IntEnum
import math
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .exceptions import PopulationException


class ResponseGroup(IntEnum):
    RESPONDENT = 1
    NON_RESPONDENT = 2


class MeMode(str, Enum):
    """Where measurement errors live: drawn per observation, or attached to units."""
    FRESH_DRAW = "fresh-draw"
    FIXED_COLUMN = "fixed-column"


class PopulationSpec(BaseModel):
    """
    Parameters of a synthetic finite population.

    u is the error on the study variable Y, v the error on the auxiliary X.
    sigma2_u2 / sigma2_v2 override the error variances inside the
    non-response stratum; when left unset they follow sigma2_u / sigma2_v.
    """
    model_config = ConfigDict(frozen=True)

    N: int = Field(ge=2)
    mu_x: float
    mu_y: float
    sigma2_x: float = Field(ge=0)
    sigma2_y: float = Field(ge=0)
    rho_xy: float = Field(ge=-1, le=1)
    sigma2_u: float = Field(default=0.0, ge=0)
    sigma2_v: float = Field(default=0.0, ge=0)
    rho_uv: float = Field(default=0.0, ge=-1, le=1)
    w2_frac: float = Field(default=0.0, ge=0, lt=1)
    sigma2_u2: float | None = Field(default=None, ge=0)
    sigma2_v2: float | None = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check_strata(self) -> "PopulationSpec":
        if self.N1 < 1:
            raise ValueError(f"N={self.N} with w2_frac={self.w2_frac} leaves no respondents")
        return self

    @property
    def N2(self) -> int:
        return int(math.floor(self.N * self.w2_frac + 0.5))

    @property
    def N1(self) -> int:
        return self.N - self.N2

    @property
    def group2_sigma2_u(self) -> float:
        return self.sigma2_u if self.sigma2_u2 is None else self.sigma2_u2

    @property
    def group2_sigma2_v(self) -> float:
        return self.sigma2_v if self.sigma2_v2 is None else self.sigma2_v2

    @property
    def has_measurement_error(self) -> bool:
        return any(
            s > 0 for s in (self.sigma2_u, self.sigma2_v, self.group2_sigma2_u, self.group2_sigma2_v)
        )

    def updated(self, **changes: Any) -> "PopulationSpec":
        """Copy with changes applied, re-running validation."""
        return PopulationSpec.model_validate({**self.model_dump(), **changes})

    def without_measurement_error(self) -> "PopulationSpec":
        return self.updated(sigma2_u=0.0, sigma2_v=0.0, sigma2_u2=0.0, sigma2_v2=0.0)


@dataclass(eq=False)
class Population:
    y: np.ndarray
    x: np.ndarray
    group: np.ndarray
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    spec: PopulationSpec | None = None

    def __post_init__(self):
        n = len(self.y)
        if len(self.x) != n or len(self.group) != n:
            raise PopulationException(
                f"column lengths differ: y={len(self.y)}, x={len(self.x)}, group={len(self.group)}"
            )
        for name, column in (("u", self.u), ("v", self.v)):
            if column is not None and len(column) != n:
                raise PopulationException(f"error column {name} has length {len(column)}, expected {n}")
        if (self.u is None) != (self.v is None):
            raise PopulationException("error columns u and v must be given together")

    @property
    def N(self) -> int:
        return len(self.y)

    @property
    def N2(self) -> int:
        return int(np.count_nonzero(self.group == ResponseGroup.NON_RESPONDENT))

    @property
    def N1(self) -> int:
        return self.N - self.N2

    @property
    def W2(self) -> float:
        return self.N2 / self.N

    @property
    def me_mode(self) -> MeMode:
        return MeMode.FRESH_DRAW if self.u is None else MeMode.FIXED_COLUMN

    def members(self, group: ResponseGroup) -> np.ndarray:
        """Unit indices belonging to one response stratum."""
        return np.flatnonzero(self.group == group)


class PopulationParams(BaseModel):
    """Realized population moments, divisor N-1 (N2-1 inside the non-response stratum)."""
    model_config = ConfigDict(frozen=True)

    N: int
    N2: int
    ybar: float
    xbar: float
    ybar1: float
    xbar1: float
    ybar2: float
    xbar2: float
    sigma2_y: float = Field(ge=0)
    sigma2_x: float = Field(ge=0)
    sigma_yx: float
    sigma2_y2: float = Field(ge=0)
    sigma2_x2: float = Field(ge=0)
    sigma_yx2: float
    sigma2_u: float = Field(default=0.0, ge=0)
    sigma2_v: float = Field(default=0.0, ge=0)
    sigma2_u2: float = Field(default=0.0, ge=0)
    sigma2_v2: float = Field(default=0.0, ge=0)
    W2: float = Field(ge=0, lt=1)

    @model_validator(mode="after")
    def _cauchy_schwarz(self) -> "PopulationParams":
        for label, cov, var_a, var_b in (
            ("full population", self.sigma_yx, self.sigma2_y, self.sigma2_x),
            ("non-response stratum", self.sigma_yx2, self.sigma2_y2, self.sigma2_x2),
        ):
            bound = var_a * var_b
            if cov * cov > bound * (1 + 1e-9) + 1e-300:
                raise ValueError(f"{label} covariance {cov} exceeds sqrt({var_a} * {var_b})")
        return self
