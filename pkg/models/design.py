from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .exceptions import DesignException


class RankOn(str, Enum):
    TRUE = "true"
    OBSERVED = "observed"


class RssDesign(BaseModel):
    """
    Balanced ranked-set design with a Hansen-Hurwitz second phase.

    r1 cycles come from respondents. r2 cycles are attributable to the
    non-respondents before subsampling, of which r2 / k are measured.
    """
    model_config = ConfigDict(frozen=True)

    m: int = Field(ge=1)
    r1: int = Field(ge=1)
    r2: int = Field(default=0, ge=0)
    k: float = Field(default=1.0, ge=1)

    @model_validator(mode="after")
    def _check_subsampling(self) -> "RssDesign":
        if self.r2 == 0:
            return self
        ratio = self.r2 / self.k
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise DesignException(
                f"r2={self.r2} is not a positive multiple of k={self.k}; r2/k must be a whole number of cycles"
            )
        if abs(self.n2 / self.n2_prime - self.k) > 1e-9 or self.n != self.n1 + self.n2_prime:
            raise DesignException(f"inconsistent design counts for {self!r}")
        return self

    @classmethod
    def from_subsampled(cls, m: int, r1: int, r2_prime: int, k: float) -> "RssDesign":
        """Build a design from the measured non-response cycles r2' = r2 / k."""
        r2 = r2_prime * k
        if abs(r2 - round(r2)) > 1e-9:
            raise DesignException(f"r2'={r2_prime} with k={k} gives a fractional r2={r2}")
        return cls(m=m, r1=r1, r2=int(round(r2)), k=k)

    @property
    def r2_prime(self) -> int:
        return int(round(self.r2 / self.k))

    @property
    def r(self) -> int:
        return self.r1 + self.r2_prime

    @property
    def n(self) -> int:
        return self.m * self.r

    @property
    def n1(self) -> int:
        return self.m * self.r1

    @property
    def n2(self) -> int:
        return self.m * self.r2

    @property
    def n2_prime(self) -> int:
        return self.m * self.r2_prime

    @property
    def n_initial(self) -> int:
        """First-phase size n1 + n2, the Hansen-Hurwitz base."""
        return self.n1 + self.n2

    @property
    def w1(self) -> float:
        return self.r1 / (self.r1 + self.r2)

    @property
    def w2(self) -> float:
        return self.r2 / (self.r1 + self.r2)

    @property
    def eta(self) -> float:
        return 1.0 / self.n_initial


SAMPLE_COLUMNS = ["cycle", "rank", "group", "y_true", "x_true", "y_me", "x_me"]


@dataclass(eq=False)
class RssSample:
    """
    One measured ranked-set sample, one array entry per measured unit.

    candidate_keys holds, for every row, the ranking-variable values of the
    set the unit was selected from; it is only kept on request.
    """
    cycle: np.ndarray
    rank: np.ndarray
    group: np.ndarray
    y_true: np.ndarray
    x_true: np.ndarray
    y_me: np.ndarray
    x_me: np.ndarray
    design: RssDesign
    candidate_keys: np.ndarray | None = None
    selected_keys: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.cycle)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({column: getattr(self, column) for column in SAMPLE_COLUMNS})
