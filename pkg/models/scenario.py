from dataclasses import dataclass, field
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .design import RankOn, RssDesign
from .estimator import EstimatorId
from .moments import Group2Divisor, MomentSet
from .population import MeMode, PopulationSpec


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    spec: PopulationSpec
    design: RssDesign
    replications: int = Field(default=10_000, ge=1)
    master_seed: int = Field(ge=0)
    me_on: bool = True
    scenario_id: int = Field(default=0, ge=0)
    delta: float | None = None
    rank_on: RankOn = RankOn.TRUE
    me_mode: MeMode = MeMode.FRESH_DRAW
    reestimate_weights: bool = False
    os_samples: int = Field(default=100_000, ge=1)
    os_method: Literal["monte-carlo", "exact"] = "monte-carlo"
    group2_divisor: Group2Divisor = "initial"
    threads: int = Field(default=1, ge=1)
    chunk_size: int = Field(default=500, ge=1)

    @model_validator(mode="after")
    def _check_strata(self) -> "Scenario":
        m = self.design.m
        if self.spec.N1 < m:
            raise ValueError(f"respondent stratum of {self.spec.N1} units is smaller than set size {m}")
        if self.design.r2 > 0 and self.spec.N2 < m:
            raise ValueError(f"non-response stratum of {self.spec.N2} units is smaller than set size {m}")
        if self.design.r2 == 0 and self.spec.N2 > 0:
            raise ValueError("population has non-respondents but the design draws no non-response cycles")
        return self

    @property
    def effective_spec(self) -> PopulationSpec:
        return self.spec if self.me_on else self.spec.without_measurement_error()

    def updated(self, **changes: Any) -> "Scenario":
        return Scenario.model_validate({**dict(self), **changes})


@dataclass
class EstimatorOutcome:
    id: EstimatorId
    empirical_mse: float
    mc_se: float
    theo_mse: float
    mean_estimate: float
    weights: tuple[float, ...] = ()
    pre: float = float("nan")


@dataclass
class ScenarioResult:
    scenario: Scenario
    ybar: float
    moments: MomentSet
    outcomes: dict[EstimatorId, EstimatorOutcome] = field(default_factory=dict)
    fallbacks: list[EstimatorId] = field(default_factory=list)

    @property
    def replications(self) -> int:
        return self.scenario.replications

    def mse(self, estimator: EstimatorId) -> float:
        return self.outcomes[estimator].empirical_mse
