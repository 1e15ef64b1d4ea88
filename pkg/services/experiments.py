import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from models import (
    EstimatorId, EstimatorOutcome, MomentSet, Population, PopulationParams, RssDesign, Scenario, ScenarioResult,
    TABLE_ESTIMATORS,
)
from models.exceptions import DomainException, EstimatorException, ExperimentException, MomentException, SamplingException
from models.presets import DEFAULT_DESIGN, FARM_LOANS_POPULATION, GRID_CYCLES, GRID_RATES, GRID_RHOS, ME_DELTAS
from models.population import PopulationSpec

from . import estimators
from .moments import compute_d_terms, compute_vmoments, estimate_order_stat_means, reestimate_moments
from .population import compute_params, generate_population
from .rss_sampling import combined_mean, draw_rss
from .seeding import ORDER_STATS_STREAM, POPULATION_STREAM, REPLICATION_STREAM, derive_seed

LOGGER = logging.getLogger("experiments")

# Relative gap between Monte Carlo and first-order MSEs that is worth a warning.
THEORY_GAP_WARNING = 0.10
CLOSED_FORM = (EstimatorId.USUAL, EstimatorId.RATIO, EstimatorId.REGRESSION, EstimatorId.EXPONENTIAL)

TABLE_COLUMNS = [
    "scenario_id", "n", "rho", "k", "delta", "estimator", "mse", "mse_me",
    "pre", "pcme", "mc_se", "replications", "seed", "theo_mse",
]


def pre(mse_base: float, mse_est: float) -> float:
    """Percent relative efficiency of an estimator against a baseline."""
    if mse_est <= 0:
        raise ExperimentException(f"PRE needs a positive estimator MSE, got {mse_est}")
    return 100.0 * (mse_base / mse_est)


def pcme(mse_with_me: float, mse_without_me: float) -> float:
    """Percentage of the error-free MSE added by measurement error."""
    if mse_without_me <= 0:
        raise ExperimentException(f"PCME needs a positive error-free MSE, got {mse_without_me}")
    return 100.0 * (mse_with_me - mse_without_me) / mse_without_me


def _safe(metric, a: float, b: float) -> float:
    try:
        return metric(a, b)
    except ExperimentException:
        return float("nan")


def population_moments(
    pop: Population,
    spec: PopulationSpec | None,
    design: RssDesign,
    seed: int,
    os_samples: int = 100_000,
    os_method: str = "monte-carlo",
    group2_divisor: str = "initial",
    threads: int = 1,
) -> tuple[PopulationParams, MomentSet]:
    """Population parameters and first-order moment set; `seed` drives the rank means."""
    params = compute_params(pop, spec)
    order_stats = estimate_order_stat_means(
        pop, design.m, B=os_samples, seed=seed, method=os_method, threads=threads,
    )
    d_terms = compute_d_terms(order_stats, params, design, group2_divisor)
    return params, compute_vmoments(d_terms, params, design)


def scenario_population(sc: Scenario) -> tuple[Population, PopulationParams, MomentSet]:
    """Population, its moments and the first-order moment set of a scenario."""
    spec = sc.effective_spec
    pop = generate_population(spec, derive_seed(sc.master_seed, POPULATION_STREAM), sc.me_mode)
    params, mom = population_moments(
        pop, spec, sc.design,
        seed=derive_seed(sc.master_seed, ORDER_STATS_STREAM, sc.scenario_id),
        os_samples=sc.os_samples,
        os_method=sc.os_method,
        group2_divisor=sc.group2_divisor,
        threads=sc.threads,
    )
    return pop, params, mom


def plugin_weights(
    mom: MomentSet, ids: Sequence[EstimatorId]
) -> tuple[dict[EstimatorId, tuple[float, ...]], dict[EstimatorId, float], list[EstimatorId]]:
    """
    Weights and theoretical MSEs from a moment set. Estimators whose
    weights cannot be solved fall back to the weights that reduce them to
    y*; their theoretical MSE is NaN.
    """
    weights, theo, fallbacks = {}, {}, []
    for estimator in ids:
        try:
            weights[estimator] = estimators.optimize_weights(estimator, mom)
            theo[estimator] = estimators.theoretical_mse(estimator, mom)
        except EstimatorException as e:
            LOGGER.warning(f"{estimator.value}: {e}; falling back to neutral weights")
            weights[estimator] = estimators.neutral_weights(estimator)
            theo[estimator] = float("nan")
            fallbacks.append(estimator)
    return weights, theo, fallbacks


def _run_chunk(
    sc: Scenario,
    pop: Population,
    mom: MomentSet,
    weights: dict[EstimatorId, tuple[float, ...]],
    ids: Sequence[EstimatorId],
    indices: range,
) -> np.ndarray:
    spec = sc.effective_spec
    ybar_star = np.empty(len(indices))
    xbar_star = np.empty(len(indices))
    sample_weights: dict[EstimatorId, list[tuple[float, ...]]] = {e: [] for e in ids}

    for pos, i in enumerate(indices):
        seed = derive_seed(sc.master_seed, REPLICATION_STREAM, sc.scenario_id, i)
        try:
            sample = draw_rss(pop, sc.design, seed, spec=spec, rank_on=sc.rank_on)
            ybar_star[pos], xbar_star[pos] = combined_mean(sample)
        except SamplingException as e:
            raise SamplingException(f"replication {i}: {e}") from e
        if sc.reestimate_weights:
            for estimator, w in _reestimated_weights(mom, sample, ybar_star[pos], weights, ids).items():
                sample_weights[estimator].append(w)

    out = np.empty((len(indices), len(ids)))
    for col, estimator in enumerate(ids):
        w = weights[estimator]
        if sc.reestimate_weights and w:
            w = tuple(np.array(column) for column in zip(*sample_weights[estimator]))
        try:
            out[:, col] = estimators.point_estimate(estimator, ybar_star, xbar_star, mom.xbar, w or None)
        except DomainException as e:
            first = indices[int(np.argmax(xbar_star <= 0))]
            raise ExperimentException(f"replication {first}: {estimator.value}: {e}") from e
    return out


def _reestimated_weights(
    mom: MomentSet,
    sample,
    ybar_star: float,
    weights: dict[EstimatorId, tuple[float, ...]],
    ids: Sequence[EstimatorId],
) -> dict[EstimatorId, tuple[float, ...]]:
    try:
        sample_mom = reestimate_moments(mom, sample, ybar_star)
    except MomentException:
        return {e: weights[e] for e in ids}
    result = {}
    for estimator in ids:
        try:
            result[estimator] = estimators.optimize_weights(estimator, sample_mom)
        except EstimatorException:
            result[estimator] = weights[estimator]
    return result


def run_scenario(sc: Scenario, ids: Sequence[EstimatorId] = TABLE_ESTIMATORS) -> ScenarioResult:
    """
    Replicates draw, combine and estimate `sc.replications` times against
    the realized population mean.

    Replications are split into fixed chunks with per-replication seeds;
    chunks run on `sc.threads` workers and are reassembled in order, so the
    result is identical for any thread count.
    """
    LOGGER.info(
        f"Scenario {sc.scenario_id}: n={sc.design.n}, rho={sc.spec.rho_xy}, k={sc.design.k:g}, "
        f"ME {'on' if sc.me_on else 'off'}, {sc.replications} replications"
    )
    pop, params, mom = scenario_population(sc)
    weights, theo, fallbacks = plugin_weights(mom, ids)

    chunks = [
        range(start, min(start + sc.chunk_size, sc.replications))
        for start in range(0, sc.replications, sc.chunk_size)
    ]
    with ThreadPoolExecutor(max_workers=sc.threads) as pool:
        parts = list(pool.map(lambda idx: _run_chunk(sc, pop, mom, weights, ids, idx), chunks))
    estimates = np.concatenate(parts, axis=0)

    squared = (estimates - params.ybar) ** 2
    mse = squared.mean(axis=0)
    if sc.replications > 1:
        mc_se = squared.std(axis=0, ddof=1) / math.sqrt(sc.replications)
    else:
        mc_se = np.zeros(len(ids))
    means = estimates.mean(axis=0)

    result = ScenarioResult(scenario=sc, ybar=params.ybar, moments=mom, fallbacks=fallbacks)
    for col, estimator in enumerate(ids):
        result.outcomes[estimator] = EstimatorOutcome(
            id=estimator,
            empirical_mse=float(mse[col]),
            mc_se=float(mc_se[col]),
            theo_mse=theo[estimator],
            mean_estimate=float(means[col]),
            weights=tuple(float(w) for w in weights[estimator]),
        )
    if EstimatorId.USUAL in result.outcomes:
        base = result.mse(EstimatorId.USUAL)
        for outcome in result.outcomes.values():
            outcome.pre = _safe(pre, base, outcome.empirical_mse)

    _check_theory(result)
    return result


def _check_theory(result: ScenarioResult) -> None:
    for estimator in CLOSED_FORM:
        outcome = result.outcomes.get(estimator)
        if outcome is None or math.isnan(outcome.theo_mse) or outcome.theo_mse <= 0:
            continue
        gap = abs(outcome.empirical_mse - outcome.theo_mse) / outcome.theo_mse
        if gap > THEORY_GAP_WARNING:
            LOGGER.warning(
                f"Scenario {result.scenario.scenario_id}: {estimator.value} Monte Carlo MSE "
                f"{outcome.empirical_mse:.6g} is {gap:.1%} from first-order {outcome.theo_mse:.6g}"
            )


def run_pair(sc: Scenario) -> tuple[ScenarioResult, ScenarioResult]:
    """Runs a scenario with and without measurement error on common random numbers."""
    return run_scenario(sc.updated(me_on=True)), run_scenario(sc.updated(me_on=False))


def table_rows(
    with_me: ScenarioResult,
    without_me: ScenarioResult,
    basis: ScenarioResult,
    delta: float | None = None,
) -> list[dict]:
    """One row per table estimator; PRE and the standard error follow `basis`."""
    sc = with_me.scenario
    base_mse = basis.mse(EstimatorId.USUAL)
    rows = []
    for estimator in TABLE_ESTIMATORS:
        rows.append({
            "scenario_id": sc.scenario_id,
            "n": sc.design.n,
            "rho": sc.spec.rho_xy,
            "k": sc.design.k,
            "delta": float("nan") if delta is None else delta,
            "estimator": estimator.value,
            "mse": without_me.mse(estimator),
            "mse_me": with_me.mse(estimator),
            "pre": _safe(pre, base_mse, basis.mse(estimator)),
            "pcme": _safe(pcme, with_me.mse(estimator), without_me.mse(estimator)),
            "mc_se": basis.outcomes[estimator].mc_se,
            "replications": sc.replications,
            "seed": sc.master_seed,
            "theo_mse": basis.outcomes[estimator].theo_mse,
        })
    return rows


def run_simulation(sc: Scenario) -> pd.DataFrame:
    with_me, without_me = run_pair(sc)
    return pd.DataFrame(table_rows(with_me, without_me, with_me), columns=TABLE_COLUMNS)


def run_table1(
    spec: PopulationSpec = FARM_LOANS_POPULATION,
    design: RssDesign = DEFAULT_DESIGN,
    replications: int = 10_000,
    seed: int = 0,
    **options,
) -> pd.DataFrame:
    """
    Farm-loan illustration: MSE without and with measurement error, PRE
    against the error-free usual estimator and PCME, per estimator.
    """
    sc = Scenario(spec=spec, design=design, replications=replications, master_seed=seed, **options)
    with_me, without_me = run_pair(sc)
    return pd.DataFrame(table_rows(with_me, without_me, without_me), columns=TABLE_COLUMNS)


def run_table2_grid(
    base: Scenario,
    cycles: Iterable[tuple[int, int]] = GRID_CYCLES,
    rhos: Iterable[float] = GRID_RHOS,
    rates: Iterable[float] = GRID_RATES,
    align_w2: bool = True,
) -> pd.DataFrame:
    """
    Sample size, correlation and non-response grid. Every cell is run with
    and without measurement error; the non-response fraction follows the
    design weight r2 / (r1 + r2) unless `align_w2` is off.
    """
    rows = []
    scenario_id = 0
    for k in rates:
        for r1, r2_prime in cycles:
            design = RssDesign.from_subsampled(base.design.m, r1, r2_prime, k)
            for rho in rhos:
                spec = base.spec.updated(rho_xy=rho, w2_frac=design.w2 if align_w2 else base.spec.w2_frac)
                sc = base.updated(spec=spec, design=design, scenario_id=scenario_id)
                with_me, without_me = run_pair(sc)
                rows.extend(table_rows(with_me, without_me, with_me))
                scenario_id += 1
    LOGGER.info(f"Grid finished: {scenario_id} cells")
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def run_table3_grid(base: Scenario, deltas: Sequence[float] = ME_DELTAS) -> pd.DataFrame:
    """
    Measurement-error severity grid: sigma2_u = delta * sigma2_y and
    sigma2_v = delta * sigma2_x. All rows share one error-free baseline and
    the same random streams.
    """
    bad = [d for d in deltas if not 0 < d <= 1]
    if bad:
        raise ExperimentException(f"error-to-true variance ratios must lie in (0, 1], got {bad}")
    without_me = run_scenario(base.updated(me_on=False))
    rows = []
    for delta in deltas:
        spec = base.spec.updated(
            sigma2_u=delta * base.spec.sigma2_y,
            sigma2_v=delta * base.spec.sigma2_x,
            sigma2_u2=None,
            sigma2_v2=None,
        )
        with_me = run_scenario(base.updated(spec=spec, me_on=True, delta=delta))
        rows.extend(table_rows(with_me, without_me, with_me, delta=delta))
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)
