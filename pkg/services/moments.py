import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Literal, Mapping

import numpy as np
from pydantic import ValidationError
from scipy.special import gammaln

from models import (
    DTerms, MomentSet, OrderStatMeans, Population, PopulationParams, ResponseGroup, RssDesign, RssSample,
)
from models.moments import Group2Divisor
from models.exceptions import MomentException

from .rss_sampling import draw_candidate_sets, rank_sets
from .seeding import derive_seed

LOGGER = logging.getLogger("moments")

# Monte Carlo rank means are flagged when their standard error exceeds this share of the stratum mean.
SE_WARNING_SHARE = 0.005
FULL_POPULATION_STREAM = 0
NON_RESPONSE_STREAM = 1


def estimate_order_stat_means(
    pop: Population,
    m: int,
    B: int = 100_000,
    seed: int = 0,
    method: Literal["monte-carlo", "exact"] = "monte-carlo",
    chunk_size: int = 10_000,
    threads: int = 1,
) -> OrderStatMeans:
    """
    Means of the study, auxiliary and (fixed-column) error variables at
    each judgment rank, for sets of m units ranked on true X.

    Sets are drawn from the whole population and, separately, from the
    non-response stratum. The Monte Carlo method draws B sets per stratum
    in chunks with their own seeds; chunks are combined in order, so the
    result does not depend on `threads`. The exact method weights every
    unit by the probability that it holds rank i in a random m-set.
    """
    if B < 1:
        raise MomentException(f"order-statistic means need B >= 1 set draws, got {B}")
    if method == "monte-carlo" and B < 10_000:
        LOGGER.warning(f"Only {B} set draws for order-statistic means; at least 10000 are advised")
    if pop.N < m:
        raise MomentException(f"population of {pop.N} units is smaller than set size {m}")

    strata = [("", np.arange(pop.N), FULL_POPULATION_STREAM)]
    non_respondents = pop.members(ResponseGroup.NON_RESPONDENT)
    if non_respondents.size >= m:
        strata.append(("2", non_respondents, NON_RESPONSE_STREAM))
    elif non_respondents.size > 0:
        LOGGER.warning(f"Non-response stratum of {non_respondents.size} units is smaller than m={m}; skipping it")

    fields: dict[str, np.ndarray] = {}
    for suffix, units, stream in strata:
        if method == "exact":
            means = _exact_rank_means(pop, units, m)
            ses = {name: np.zeros(m) for name in means}
        else:
            means, ses = _monte_carlo_rank_means(pop, units, m, B, seed, stream, chunk_size, threads)
            _warn_on_noise(means, ses, suffix)
        for name, values in means.items():
            fields[f"mu_i{name}{suffix}"] = values
        for name in ("y", "x"):
            fields[f"se_i{name}{suffix}"] = ses[name]

    return OrderStatMeans(m=m, B=B, seed=seed, method=method, **fields)


def _columns(pop: Population) -> dict[str, np.ndarray]:
    columns = {"y": pop.y, "x": pop.x}
    if pop.u is not None and pop.v is not None:
        columns.update(u=pop.u, v=pop.v)
    return columns


def _monte_carlo_rank_means(
    pop: Population,
    units: np.ndarray,
    m: int,
    B: int,
    seed: int,
    stream: int,
    chunk_size: int,
    threads: int,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    columns = _columns(pop)
    starts = range(0, B, chunk_size)

    def run_chunk(index_start: tuple[int, int]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        index, start = index_start
        rng = np.random.default_rng(derive_seed(seed, stream, index))
        count = min(chunk_size, B - start)
        sets = units[draw_candidate_sets(rng, units.size, count, m)]
        ranked = np.take_along_axis(sets, rank_sets(pop.x[sets]), axis=1)
        sums = {}
        for name, column in columns.items():
            values = column[ranked]
            sums[name] = (values.sum(axis=0), (values * values).sum(axis=0))
        return sums

    with ThreadPoolExecutor(max_workers=threads) as pool:
        partials = list(pool.map(run_chunk, enumerate(starts)))

    means, ses = {}, {}
    for name in columns:
        total = np.sum([p[name][0] for p in partials], axis=0)
        total_sq = np.sum([p[name][1] for p in partials], axis=0)
        mean = total / B
        if B > 1:
            variance = np.clip((total_sq - B * mean * mean) / (B - 1), 0.0, None)
            ses[name] = np.sqrt(variance / B)
        else:
            ses[name] = np.zeros(m)
        means[name] = mean
    return means, ses


def _log_comb(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return gammaln(a + 1) - gammaln(b + 1) - gammaln(a - b + 1)


def rank_probabilities(size: int, m: int) -> np.ndarray:
    """
    (m, size) matrix whose [i, j] entry is the probability that the unit
    at sorted position j is the (i+1)-th smallest of a random m-subset.
    """
    j = np.arange(1, size + 1, dtype=float)[None, :]
    i = np.arange(1, m + 1, dtype=float)[:, None]
    valid = (j >= i) & (size - j >= m - i)
    with np.errstate(invalid="ignore"):
        log_p = (
            _log_comb(np.where(valid, j - 1, 0), np.where(valid, i - 1, 0))
            + _log_comb(np.where(valid, size - j, 0), np.where(valid, m - i, 0))
            - _log_comb(np.float64(size), np.float64(m))
        )
    return np.where(valid, np.exp(log_p), 0.0)


def _exact_rank_means(pop: Population, units: np.ndarray, m: int) -> dict[str, np.ndarray]:
    # ties in X are resolved by unit order
    ordered = units[np.argsort(pop.x[units], kind="stable")]
    weights = rank_probabilities(units.size, m)
    return {name: weights @ column[ordered] for name, column in _columns(pop).items()}


def _warn_on_noise(means: dict[str, np.ndarray], ses: dict[str, np.ndarray], suffix: str) -> None:
    stratum = "non-response stratum" if suffix else "full population"
    for name in ("y", "x"):
        centre = abs(float(np.mean(means[name])))
        worst = float(np.max(ses[name]))
        if worst > SE_WARNING_SHARE * centre:
            LOGGER.warning(
                f"Rank means of {name} in the {stratum} have standard error {worst:.4g}, "
                f"above {SE_WARNING_SHARE:.1%} of the mean {centre:.4g}; raise the set draws"
            )


def _sum_sq(a: np.ndarray, centre: float) -> float:
    d = a - centre
    return float(d @ d)


def compute_d_terms(
    os: OrderStatMeans,
    params: PopulationParams,
    design: RssDesign,
    group2_divisor: Group2Divisor = "initial",
) -> DTerms:
    """
    Ranking reductions: squared deviations of the rank means from the
    stratum mean, over m^2 (r1 + r2). Non-response terms are centred on
    the non-response stratum means; `group2_divisor="r2"` divides them by
    m^2 r2 instead. Error terms are zero unless the error columns are fixed
    to units, in which case they come from the ranked error columns.
    """
    if os.m != design.m:
        raise MomentException(f"order-statistic means were estimated for m={os.m}, design has m={design.m}")
    if design.r2 == 0 and params.W2 > 0:
        raise MomentException(f"design draws no non-response cycles but W2={params.W2:.4g}")

    m = design.m
    divisor = m * m * (design.r1 + design.r2)
    divisor2 = m * m * design.r2 if group2_divisor == "r2" and design.r2 > 0 else divisor

    dy = os.mu_iy - params.ybar
    dx = os.mu_ix - params.xbar
    terms = dict(
        D2_y=float(dy @ dy) / divisor,
        D2_x=float(dx @ dx) / divisor,
        D_yx=float(dy @ dx) / divisor,
    )

    needs_group2 = design.r2 > 0 and params.W2 > 0
    if needs_group2:
        if os.mu_iy2 is None or os.mu_ix2 is None:
            raise MomentException("non-response rank means are missing; the stratum is smaller than m")
        dy2 = os.mu_iy2 - params.ybar2
        dx2 = os.mu_ix2 - params.xbar2
        terms.update(
            D2_y2=float(dy2 @ dy2) / divisor2,
            D2_x2=float(dx2 @ dx2) / divisor2,
            D_yx2=float(dy2 @ dx2) / divisor2,
        )

    if os.mu_iu is not None and os.mu_iv is not None:
        # rank means of the error columns average to the column mean
        terms.update(
            D2_u=_sum_sq(os.mu_iu, float(np.mean(os.mu_iu))) / divisor,
            D2_v=_sum_sq(os.mu_iv, float(np.mean(os.mu_iv))) / divisor,
        )
        if needs_group2 and os.mu_iu2 is not None and os.mu_iv2 is not None:
            terms.update(
                D2_u2=_sum_sq(os.mu_iu2, float(np.mean(os.mu_iu2))) / divisor2,
                D2_v2=_sum_sq(os.mu_iv2, float(np.mean(os.mu_iv2))) / divisor2,
            )

    try:
        return DTerms(divisor=divisor, divisor2=divisor2, **terms)
    except ValidationError as e:
        raise MomentException(f"invalid ranking terms: {e}") from e


def compose_relative_moments(values: Mapping[str, float]) -> tuple[float, float, float]:
    """
    V_y, V_x, V_yx from the sampling, ranking, error and non-response
    terms. u is the error on Y, v the error on X.
    """
    eta = values["eta"]
    nr = values["W2"] * (values["k"] - 1)
    ybar, xbar = values["ybar"], values["xbar"]
    v_y = (
        eta * values["sigma2_y"] - values["D2_y"]
        + nr * (eta * values["sigma2_y2"] - values["D2_y2"])
        + eta * values["sigma2_u"] - values["D2_u"]
        + nr * (eta * values["sigma2_u2"] - values["D2_u2"])
    ) / (ybar * ybar)
    v_x = (
        eta * values["sigma2_x"] - values["D2_x"]
        + nr * (eta * values["sigma2_x2"] - values["D2_x2"])
        + eta * values["sigma2_v"] - values["D2_v"]
        + nr * (eta * values["sigma2_v2"] - values["D2_v2"])
    ) / (xbar * xbar)
    v_yx = (
        eta * values["sigma_yx"] - values["D_yx"]
        + nr * (eta * values["sigma_yx2"] - values["D_yx2"])
    ) / (ybar * xbar)
    return v_y, v_x, v_yx


def _build_moment_set(values: dict[str, float]) -> MomentSet:
    if values["ybar"] == 0 or values["xbar"] == 0:
        raise MomentException(f"relative moments undefined: Ybar={values['ybar']}, Xbar={values['xbar']}")
    v_y, v_x, v_yx = compose_relative_moments(values)
    try:
        return MomentSet(**values, V_y=v_y, V_x=v_x, V_yx=v_yx)
    except ValidationError as e:
        raise MomentException(f"invalid moment set: {e}") from e


def compute_vmoments(d: DTerms, params: PopulationParams, design: RssDesign) -> MomentSet:
    values = dict(
        eta=design.eta,
        sigma2_y=params.sigma2_y, sigma2_x=params.sigma2_x, sigma_yx=params.sigma_yx,
        sigma2_y2=params.sigma2_y2, sigma2_x2=params.sigma2_x2, sigma_yx2=params.sigma_yx2,
        sigma2_u=params.sigma2_u, sigma2_v=params.sigma2_v,
        sigma2_u2=params.sigma2_u2, sigma2_v2=params.sigma2_v2,
        W2=params.W2, k=design.k, ybar=params.ybar, xbar=params.xbar,
        **d.model_dump(exclude={"divisor", "divisor2"}),
    )
    moments = _build_moment_set(values)
    LOGGER.debug(f"V_y={moments.V_y:.6g}, V_x={moments.V_x:.6g}, V_yx={moments.V_yx:.6g}")
    return moments


def _sample_moments(y: np.ndarray, x: np.ndarray) -> tuple[float, float, float]:
    if len(y) < 2:
        return float("nan"), float("nan"), float("nan")
    cov = np.cov(y, x, ddof=1)
    return float(cov[0, 0]), float(cov[1, 1]), float(cov[0, 1])


def reestimate_moments(mom: MomentSet, sample: RssSample, ybar_star: float) -> MomentSet:
    """
    Replaces the population moments and Ybar of `mom` by estimates from one
    sample, removing the error variances from the observed variances. The
    ranking terms and Xbar are kept.
    """
    s2y, s2x, syx = _sample_moments(sample.y_me, sample.x_me)
    values = mom.model_dump(exclude={"V_y", "V_x", "V_yx"})
    values.update(
        ybar=ybar_star,
        sigma2_y=max(s2y - mom.sigma2_u, 0.0),
        sigma2_x=max(s2x - mom.sigma2_v, 0.0),
        sigma_yx=syx,
    )
    group2 = sample.group == ResponseGroup.NON_RESPONDENT
    s2y2, s2x2, syx2 = _sample_moments(sample.y_me[group2], sample.x_me[group2])
    if not np.isnan(s2y2):
        values.update(
            sigma2_y2=max(s2y2 - mom.sigma2_u2, 0.0),
            sigma2_x2=max(s2x2 - mom.sigma2_v2, 0.0),
            sigma_yx2=syx2,
        )
    # keep the estimated covariances inside their Cauchy-Schwarz bounds
    for cov, var_a, var_b in (("sigma_yx", "sigma2_y", "sigma2_x"), ("sigma_yx2", "sigma2_y2", "sigma2_x2")):
        bound = (values[var_a] * values[var_b]) ** 0.5
        values[cov] = float(np.clip(values[cov], -bound, bound))
    return _build_moment_set(values)
