import logging
import math
import os

import numpy as np
import pandas as pd

from models import Population, PopulationParams, PopulationSpec, ResponseGroup, MeMode
from models.exceptions import PopulationException, PopulationParseException

from .seeding import make_rng

LOGGER = logging.getLogger("population")

PSD_TOLERANCE = 1e-10
POPULATION_COLUMNS = ["y", "x", "group"]


def cholesky_2x2(var_a: float, var_b: float, rho: float, block: str) -> np.ndarray:
    """
    Lower-triangular factor of [[var_a, rho s_a s_b], [rho s_a s_b, var_b]].

    Zero variances are allowed; numpy's factorization rejects singular blocks,
    so the 2x2 case is written out.
    """
    if var_a < -PSD_TOLERANCE or var_b < -PSD_TOLERANCE or abs(rho) > 1 + PSD_TOLERANCE:
        raise PopulationException(
            f"covariance block {block} is not positive semi-definite: "
            f"variances ({var_a}, {var_b}), correlation {rho}"
        )
    s_a = math.sqrt(max(var_a, 0.0))
    s_b = math.sqrt(max(var_b, 0.0))
    rho = max(-1.0, min(1.0, rho))
    return np.array([[s_a, 0.0], [rho * s_b, s_b * math.sqrt(1.0 - rho * rho)]])


def generate_population(
    spec: PopulationSpec, seed: int, me_mode: MeMode = MeMode.FRESH_DRAW
) -> Population:
    """
    Draws N units of (X, Y) from the bivariate normal of `spec`.

    The stream is consumed in a fixed order (values, then the label shuffle,
    then the error columns) so populations that differ only in their
    non-response fraction or error variances share the same (X, Y) draws.
    Normals come from numpy's PCG64 generator via its ziggurat sampler.
    """
    rng = make_rng(seed)
    factor = cholesky_2x2(spec.sigma2_x, spec.sigma2_y, spec.rho_xy, "(X, Y)")
    draws = rng.standard_normal((spec.N, 2)) @ factor.T
    x = spec.mu_x + draws[:, 0]
    y = spec.mu_y + draws[:, 1]

    group = np.full(spec.N, ResponseGroup.RESPONDENT, dtype=np.int8)
    order = rng.permutation(spec.N)
    group[order[spec.N - spec.N2:]] = ResponseGroup.NON_RESPONDENT

    u = v = None
    if me_mode is MeMode.FIXED_COLUMN:
        u, v = _error_columns(rng, group, spec)

    LOGGER.debug(f"Generated population of {spec.N} units ({spec.N2} non-respondents), seed {seed}")
    return Population(y=y, x=x, group=group, u=u, v=v, spec=spec)


def _error_columns(rng: np.random.Generator, group: np.ndarray, spec: PopulationSpec) -> tuple[np.ndarray, np.ndarray]:
    z = rng.standard_normal((len(group), 2))
    u = np.empty(len(group))
    v = np.empty(len(group))
    for g, var_u, var_v in (
        (ResponseGroup.RESPONDENT, spec.sigma2_u, spec.sigma2_v),
        (ResponseGroup.NON_RESPONDENT, spec.group2_sigma2_u, spec.group2_sigma2_v),
    ):
        mask = group == g
        factor = cholesky_2x2(var_u, var_v, spec.rho_uv, "(U, V)")
        errors = z[mask] @ factor.T
        u[mask] = errors[:, 0]
        v[mask] = errors[:, 1]
    return u, v


def _moments(y: np.ndarray, x: np.ndarray) -> tuple[float, float, float, float, float]:
    ybar = float(np.mean(y))
    xbar = float(np.mean(x))
    dy = y - ybar
    dx = x - xbar
    divisor = len(y) - 1
    return ybar, xbar, float(dy @ dy / divisor), float(dx @ dx / divisor), float(dy @ dx / divisor)


def compute_params(pop: Population, spec: PopulationSpec | None = None) -> PopulationParams:
    """
    Realized population moments plus the error variances of `spec`.

    A population without non-respondents is the full-response case: its
    non-response moments are zero and W2 = 0.
    """
    spec = spec or pop.spec
    n2 = pop.N2
    if 0 < n2 < 2:
        raise PopulationException(f"non-response stratum holds {n2} unit; its variances need at least 2")
    if pop.N1 < 1:
        raise PopulationException("population has no respondents")

    ybar, xbar, s2y, s2x, syx = _moments(pop.y, pop.x)
    respondents = pop.group == ResponseGroup.RESPONDENT
    ybar1, xbar1 = float(np.mean(pop.y[respondents])), float(np.mean(pop.x[respondents]))
    if n2 > 0:
        ybar2, xbar2, s2y2, s2x2, syx2 = _moments(pop.y[~respondents], pop.x[~respondents])
    else:
        ybar2, xbar2, s2y2, s2x2, syx2 = ybar1, xbar1, 0.0, 0.0, 0.0

    me = {}
    if spec is not None:
        me = dict(
            sigma2_u=spec.sigma2_u,
            sigma2_v=spec.sigma2_v,
            sigma2_u2=spec.group2_sigma2_u,
            sigma2_v2=spec.group2_sigma2_v,
        )
    return PopulationParams(
        N=pop.N, N2=n2,
        ybar=ybar, xbar=xbar, ybar1=ybar1, xbar1=xbar1, ybar2=ybar2, xbar2=xbar2,
        sigma2_y=s2y, sigma2_x=s2x, sigma_yx=syx,
        sigma2_y2=s2y2, sigma2_x2=s2x2, sigma_yx2=syx2,
        W2=pop.W2,
        **me,
    )


def load_population(path: str | os.PathLike) -> Population:
    """Reads a `y,x,group` CSV file; group 1 marks respondents, 2 non-respondents."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise PopulationParseException(f"cannot read population file {path}: {e}") from e

    missing = [c for c in POPULATION_COLUMNS if c not in frame.columns]
    if missing:
        raise PopulationParseException(f"{path}: missing column(s) {', '.join(missing)}")

    columns = {}
    for name in POPULATION_COLUMNS:
        values = pd.to_numeric(frame[name].str.strip(), errors="coerce")
        bad = np.flatnonzero(values.isna().to_numpy())
        if bad.size:
            # data rows start on line 2, below the header
            row = int(bad[0]) + 2
            raise PopulationParseException(f"{path}: row {row}: non-numeric {name} value {frame[name].iloc[bad[0]]!r}")
        columns[name] = values.to_numpy(dtype=float)

    group = columns["group"]
    unknown = np.flatnonzero(~np.isin(group, [ResponseGroup.RESPONDENT, ResponseGroup.NON_RESPONDENT]))
    if unknown.size:
        row = int(unknown[0]) + 2
        raise PopulationParseException(f"{path}: row {row}: unknown group label {frame['group'].iloc[unknown[0]]!r}")

    for g in ResponseGroup:
        count = int(np.count_nonzero(group == g))
        if count < 2:
            raise PopulationParseException(f"{path}: group {int(g)} has {count} row(s), at least 2 are required")

    LOGGER.info(f"Loaded population of {len(group)} units from {path}")
    return Population(y=columns["y"], x=columns["x"], group=group.astype(np.int8))


def save_population(pop: Population, path: str | os.PathLike) -> None:
    frame = pd.DataFrame({"y": pop.y, "x": pop.x, "group": pop.group.astype(int)})
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def describe_population(
    pop: Population,
    sigma2_u: float = 0.0,
    sigma2_v: float = 0.0,
    rho_uv: float = 0.0,
    sigma2_u2: float | None = None,
    sigma2_v2: float | None = None,
) -> PopulationSpec:
    """Summarizes a realized population as a spec, adding the given error settings."""
    ybar, xbar, s2y, s2x, syx = _moments(pop.y, pop.x)
    rho = syx / math.sqrt(s2y * s2x) if s2y > 0 and s2x > 0 else 0.0
    return PopulationSpec(
        N=pop.N, mu_x=xbar, mu_y=ybar, sigma2_x=s2x, sigma2_y=s2y,
        rho_xy=max(-1.0, min(1.0, rho)),
        sigma2_u=sigma2_u, sigma2_v=sigma2_v, rho_uv=rho_uv,
        w2_frac=pop.W2, sigma2_u2=sigma2_u2, sigma2_v2=sigma2_v2,
    )
