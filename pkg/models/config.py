from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .design import RankOn, RssDesign
from .population import MeMode, PopulationSpec
from .presets import ME_DELTAS, PRESETS

Command = Literal["gen-pop", "estimate", "simulate", "table1", "table2", "table3", "moments"]

# Commands that draw random numbers and so refuse to run without a seed.
SEEDED_COMMANDS = frozenset(["gen-pop", "simulate", "table1", "table2", "table3", "moments"])


class RunConfig(BaseModel):
    """Fully resolved run configuration; every field doubles as a command-line flag."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    command: Command
    preset: Literal["simulated", "farm-loans"] | None = Field(
        default=None, description="named population parameter set (simulated; farm-loans for table1)")
    population: str | None = Field(default=None, description="population CSV with columns y,x,group")
    N: int | None = Field(default=None, ge=2, description="population size")
    mu_x: float | None = Field(default=None, description="mean of the auxiliary variable X")
    mu_y: float | None = Field(default=None, description="mean of the study variable Y")
    sigma2_x: float | None = Field(default=None, ge=0, description="variance of X")
    sigma2_y: float | None = Field(default=None, ge=0, description="variance of Y")
    rho: float | None = Field(default=None, ge=-1, le=1, description="correlation of X and Y")
    sigma2_u: float | None = Field(default=None, ge=0, description="measurement error variance on Y")
    sigma2_v: float | None = Field(default=None, ge=0, description="measurement error variance on X")
    rho_uv: float | None = Field(default=None, ge=-1, le=1, description="correlation of the two errors")
    w2: float | None = Field(
        default=None, ge=0, lt=1, description="non-response fraction W2; follows r2/(r1+r2) when unset")
    sigma2_u2: float | None = Field(default=None, ge=0, description="error variance on Y among non-respondents")
    sigma2_v2: float | None = Field(default=None, ge=0, description="error variance on X among non-respondents")
    m: int = Field(default=3, ge=1, description="set size")
    r1: int = Field(default=3, ge=1, description="respondent cycles")
    r2: int = Field(default=2, ge=0, description="non-respondent cycles before subsampling")
    k: float = Field(default=2.0, ge=1, description="inverse subsampling rate, r2/k must be whole")
    reps: int = Field(default=10_000, ge=1, description="Monte Carlo replications")
    seed: int | None = Field(default=None, ge=0, description="master seed, required for random commands")
    out: str | None = Field(default=None, description="output path; stdout when unset")
    format: Literal["csv", "markdown"] = Field(default="csv", description="output format")
    rank_on: RankOn = Field(default=RankOn.TRUE, description="rank sets on true or observed X")
    me_mode: MeMode = Field(default=MeMode.FRESH_DRAW, description="draw errors per observation or fix them to units")
    reestimate_weights: bool = Field(default=False, description="re-estimate estimator weights from every sample")
    deltas: tuple[float, ...] = Field(default=ME_DELTAS, description="error-to-true variance ratios for table3")
    os_samples: int = Field(default=100_000, ge=1, description="set draws for order-statistic means")
    os_method: Literal["monte-carlo", "exact"] = Field(default="monte-carlo", description="order-statistic means method")
    group2_divisor: Literal["initial", "r2"] = Field(
        default="initial", description="divisor of non-response ranking terms: m^2(r1+r2) or m^2 r2")
    threads: int = Field(default=1, ge=1, description="worker threads")
    sample: str | None = Field(default=None, description="sample CSV for estimate")
    moments: str | None = Field(default=None, description="moment set file for estimate")

    @field_validator("deltas", mode="before")
    @classmethod
    def _split_deltas(cls, value):
        if isinstance(value, str):
            return tuple(float(part) for part in value.split(",") if part.strip())
        return value

    @field_validator("deltas")
    @classmethod
    def _check_deltas(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value or any(not 0 < d <= 1 for d in value):
            raise ValueError(f"deltas must be a non-empty list within (0, 1], got {value}")
        return value

    @model_validator(mode="after")
    def _check_command(self) -> "RunConfig":
        needs_seed = self.command in SEEDED_COMMANDS or (self.command == "estimate" and self.moments is None)
        if needs_seed and self.seed is None:
            raise ValueError(f"{self.command} needs --seed; runs are never seeded from entropy")
        if self.command == "estimate" and self.sample is None:
            raise ValueError("estimate needs --sample")
        self.design  # raises DesignException when r2 / k is not whole
        return self

    @property
    def design(self) -> RssDesign:
        return RssDesign(m=self.m, r1=self.r1, r2=self.r2, k=self.k)

    @property
    def n(self) -> int:
        return self.design.n

    def population_spec(self) -> PopulationSpec:
        """Preset parameters overridden by every explicitly set field."""
        preset = self.preset or ("farm-loans" if self.command == "table1" else "simulated")
        base = PRESETS[preset]
        overrides = {
            name: value
            for name, value in (
                ("N", self.N), ("mu_x", self.mu_x), ("mu_y", self.mu_y),
                ("sigma2_x", self.sigma2_x), ("sigma2_y", self.sigma2_y), ("rho_xy", self.rho),
                ("sigma2_u", self.sigma2_u), ("sigma2_v", self.sigma2_v), ("rho_uv", self.rho_uv),
                ("sigma2_u2", self.sigma2_u2), ("sigma2_v2", self.sigma2_v2),
            )
            if value is not None
        }
        if self.w2 is not None:
            overrides["w2_frac"] = self.w2
        elif self.command != "table1":
            overrides["w2_frac"] = self.design.w2
        return base.updated(**overrides)
