from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .exceptions import MomentException


@dataclass(eq=False)
class OrderStatMeans:
    """
    Judgment-rank means of the study and auxiliary variables.

    mu_iy / mu_ix are taken over sets drawn from the whole population and
    mu_iy2 / mu_ix2 over sets drawn from the non-response stratum. The
    error-column variants are only filled for fixed-column populations.
    """
    m: int
    mu_iy: np.ndarray
    mu_ix: np.ndarray
    se_iy: np.ndarray
    se_ix: np.ndarray
    mu_iy2: np.ndarray | None = None
    mu_ix2: np.ndarray | None = None
    se_iy2: np.ndarray | None = None
    se_ix2: np.ndarray | None = None
    mu_iu: np.ndarray | None = None
    mu_iv: np.ndarray | None = None
    mu_iu2: np.ndarray | None = None
    mu_iv2: np.ndarray | None = None
    B: int = 0
    seed: int | None = None
    method: str = "monte-carlo"


class DTerms(BaseModel):
    """Ranking reductions of the variance, one per moment."""
    model_config = ConfigDict(frozen=True)

    D2_y: float = Field(ge=0)
    D2_x: float = Field(ge=0)
    D_yx: float
    D2_y2: float = Field(default=0.0, ge=0)
    D2_x2: float = Field(default=0.0, ge=0)
    D_yx2: float = 0.0
    D2_u: float = Field(default=0.0, ge=0)
    D2_v: float = Field(default=0.0, ge=0)
    D2_u2: float = Field(default=0.0, ge=0)
    D2_v2: float = Field(default=0.0, ge=0)
    divisor: float = Field(default=1.0, gt=0)
    divisor2: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _cauchy_schwarz(self) -> "DTerms":
        if self.D_yx ** 2 > self.D2_y * self.D2_x * (1 + 1e-9) + 1e-300:
            raise ValueError(f"D_yx={self.D_yx} exceeds sqrt(D2_y * D2_x)")
        if self.D_yx2 ** 2 > self.D2_y2 * self.D2_x2 * (1 + 1e-9) + 1e-300:
            raise ValueError(f"D_yx2={self.D_yx2} exceeds sqrt(D2_y2 * D2_x2)")
        return self


# Composite relative moments are rejected when they fall below this.
V_TOLERANCE = 1e-9


class MomentSet(BaseModel):
    """Every symbol the first-order MSE expressions consume."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    eta: float = Field(gt=0)
    sigma2_y: float = Field(ge=0)
    sigma2_x: float = Field(ge=0)
    sigma_yx: float
    sigma2_y2: float = Field(default=0.0, ge=0)
    sigma2_x2: float = Field(default=0.0, ge=0)
    sigma_yx2: float = 0.0
    sigma2_u: float = Field(default=0.0, ge=0)
    sigma2_v: float = Field(default=0.0, ge=0)
    sigma2_u2: float = Field(default=0.0, ge=0)
    sigma2_v2: float = Field(default=0.0, ge=0)
    D2_y: float = Field(default=0.0, ge=0)
    D2_x: float = Field(default=0.0, ge=0)
    D_yx: float = 0.0
    D2_y2: float = Field(default=0.0, ge=0)
    D2_x2: float = Field(default=0.0, ge=0)
    D_yx2: float = 0.0
    D2_u: float = Field(default=0.0, ge=0)
    D2_v: float = Field(default=0.0, ge=0)
    D2_u2: float = Field(default=0.0, ge=0)
    D2_v2: float = Field(default=0.0, ge=0)
    W2: float = Field(default=0.0, ge=0, lt=1)
    k: float = Field(default=1.0, ge=1)
    ybar: float
    xbar: float
    V_y: float
    V_x: float
    V_yx: float

    @model_validator(mode="after")
    def _check_composites(self) -> "MomentSet":
        if self.ybar == 0 or self.xbar == 0:
            raise ValueError("relative moments need non-zero population means")
        if self.V_y < -V_TOLERANCE or self.V_x < -V_TOLERANCE:
            raise ValueError(f"negative relative variance: V_y={self.V_y}, V_x={self.V_x}")
        if self.V_yx ** 2 > self.V_y * self.V_x + V_TOLERANCE * max(self.V_y * self.V_x, 1e-12):
            raise ValueError(f"V_yx={self.V_yx} exceeds sqrt(V_y * V_x)")
        return self

    @property
    def rho_star(self) -> float:
        """Correlation of the two relative errors."""
        return self.V_yx / (self.V_y * self.V_x) ** 0.5

    def to_text(self) -> str:
        return "".join(f"{name} = {value!r}\n" for name, value in self.model_dump().items())

    @classmethod
    def from_text(cls, text: str) -> "MomentSet":
        values: dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise MomentException(f"line {lineno}: expected 'key = value', got {raw!r}")
            values[key.strip()] = value.strip()
        try:
            return cls.model_validate(values)
        except ValidationError as e:
            raise MomentException(f"invalid moment set: {e}") from e


Group2Divisor = Literal["initial", "r2"]
