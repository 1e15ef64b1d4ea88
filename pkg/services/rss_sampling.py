import logging
import math
import os

import numpy as np
import pandas as pd

from models import Population, PopulationSpec, ResponseGroup, RssDesign, RssSample, RankOn
from models.design import SAMPLE_COLUMNS
from models.exceptions import SamplingException

from .population import cholesky_2x2
from .seeding import make_rng

LOGGER = logging.getLogger("rss_sampling")

# Below this stratum size sets are drawn by shuffling; above it by rejecting repeated units.
SHUFFLE_LIMIT = 64


def draw_candidate_sets(rng: np.random.Generator, stratum_size: int, count: int, m: int) -> np.ndarray:
    """
    Returns a (count, m) array of positions into a stratum.

    Units are distinct within a row; rows are drawn independently, so a unit
    may appear in several sets.
    """
    if stratum_size < m:
        raise SamplingException(f"cannot draw sets of {m} distinct units from {stratum_size}")
    if m == 1:
        return rng.integers(0, stratum_size, size=(count, 1))
    if stratum_size <= SHUFFLE_LIMIT:
        return np.argsort(rng.random((count, stratum_size)), axis=1)[:, :m]

    sets = rng.integers(0, stratum_size, size=(count, m))
    pending = _rows_with_repeats(sets)
    while pending.size:
        sets[pending] = rng.integers(0, stratum_size, size=(pending.size, m))
        pending = pending[_rows_with_repeats(sets[pending])]
    return sets


def _rows_with_repeats(sets: np.ndarray) -> np.ndarray:
    ordered = np.sort(sets, axis=1)
    return np.flatnonzero((np.diff(ordered, axis=1) == 0).any(axis=1))


def rank_sets(keys: np.ndarray) -> np.ndarray:
    """Column order of each row of `keys`, ascending; ties keep draw order."""
    return np.argsort(keys, axis=1, kind="stable")


def _error_variances(spec: PopulationSpec | None, group: ResponseGroup) -> tuple[float, float, float]:
    if spec is None:
        return 0.0, 0.0, 0.0
    if group is ResponseGroup.RESPONDENT:
        return spec.sigma2_u, spec.sigma2_v, spec.rho_uv
    return spec.group2_sigma2_u, spec.group2_sigma2_v, spec.rho_uv


def draw_rss(
    pop: Population,
    design: RssDesign,
    seed: int | np.random.Generator,
    spec: PopulationSpec | None = None,
    rank_on: RankOn = RankOn.TRUE,
    keep_sets: bool = False,
) -> RssSample:
    """
    Draws one ranked-set sample under the two-phase non-response scheme.

    Respondent cycles sample the respondent stratum and the r2' subsampled
    cycles sample the non-respondent stratum. Each cycle forms m sets of m
    units, ranks every set and measures the i-th ranked unit of the i-th set.
    Errors are drawn for every candidate unit so the stream consumed does not
    depend on the error variances; with fixed-column populations the stored
    error columns are used instead. Error settings come from `spec`, falling
    back to the population's own.
    """
    rng = make_rng(seed)
    spec = spec or pop.spec
    m = design.m
    blocks = []
    first_cycle = 0

    for group, cycles in (
        (ResponseGroup.RESPONDENT, design.r1),
        (ResponseGroup.NON_RESPONDENT, design.r2_prime),
    ):
        if cycles == 0:
            continue
        members = pop.members(group)
        if members.size < m:
            raise SamplingException(
                f"{group.name.lower().replace('_', '-')} stratum holds {members.size} units, fewer than set size {m}"
            )
        count = cycles * m
        units = members[draw_candidate_sets(rng, members.size, count, m)]
        z = rng.standard_normal((count, m, 2))

        if pop.u is not None and pop.v is not None:
            u, v = pop.u[units], pop.v[units]
        else:
            var_u, var_v, rho = _error_variances(spec, group)
            factor = cholesky_2x2(var_u, var_v, rho, "(U, V)")
            u = factor[0, 0] * z[..., 0]
            v = factor[1, 0] * z[..., 0] + factor[1, 1] * z[..., 1]

        x_true = pop.x[units]
        keys = x_true if rank_on is RankOn.TRUE else x_true + v
        rows = np.arange(count)
        rank_index = np.tile(np.arange(m), cycles)
        slot = rank_sets(keys)[rows, rank_index]
        chosen = units[rows, slot]

        block = {
            "cycle": first_cycle + np.repeat(np.arange(cycles), m),
            "rank": rank_index + 1,
            "group": np.full(count, group, dtype=np.int8),
            "y_true": pop.y[chosen],
            "x_true": pop.x[chosen],
            "y_me": pop.y[chosen] + u[rows, slot],
            "x_me": pop.x[chosen] + v[rows, slot],
        }
        if keep_sets:
            block["candidate_keys"] = keys
            block["selected_keys"] = keys[rows, slot]
        blocks.append(block)
        first_cycle += cycles

    columns = {name: np.concatenate([b[name] for b in blocks]) for name in SAMPLE_COLUMNS}
    if keep_sets:
        columns["candidate_keys"] = np.concatenate([b["candidate_keys"] for b in blocks])
        columns["selected_keys"] = np.concatenate([b["selected_keys"] for b in blocks])
    return RssSample(design=design, **columns)


def combined_mean(sample: RssSample) -> tuple[float, float]:
    """Hansen-Hurwitz weighted means (y*, x*) of the measured values."""
    design = sample.design
    respondents = sample.group == ResponseGroup.RESPONDENT
    if not respondents.any():
        raise SamplingException("sample holds no respondent cycles")
    y1 = float(np.mean(sample.y_me[respondents]))
    x1 = float(np.mean(sample.x_me[respondents]))
    if design.w2 == 0:
        return y1, x1
    if respondents.all():
        raise SamplingException(f"non-response weight w2={design.w2:.4g} but the sample holds no non-response cycles")
    y2 = float(np.mean(sample.y_me[~respondents]))
    x2 = float(np.mean(sample.x_me[~respondents]))
    return design.w1 * y1 + design.w2 * y2, design.w1 * x1 + design.w2 * x2


def draw_srs_hh(
    pop: Population,
    n: int,
    k: float,
    seed: int | np.random.Generator,
    spec: PopulationSpec | None = None,
) -> tuple[float, float]:
    """
    Simple random sample without replacement of size n, followed by a
    subsample of ceil(n2 / k) of the non-respondents it contains.
    """
    if n > pop.N:
        raise SamplingException(f"sample size {n} exceeds population size {pop.N}")
    if n < 1 or k < 1:
        raise SamplingException(f"invalid SRS design n={n}, k={k}")
    rng = make_rng(seed)
    spec = spec or pop.spec
    drawn = rng.choice(pop.N, size=n, replace=False)
    respondents = drawn[pop.group[drawn] == ResponseGroup.RESPONDENT]
    non_respondents = drawn[pop.group[drawn] == ResponseGroup.NON_RESPONDENT]

    total_y = total_x = 0.0
    for group, units, count in (
        (ResponseGroup.RESPONDENT, respondents, respondents.size),
        (ResponseGroup.NON_RESPONDENT, non_respondents, non_respondents.size),
    ):
        if count == 0:
            continue
        if group is ResponseGroup.NON_RESPONDENT:
            units = rng.choice(units, size=math.ceil(count / k), replace=False)
        z = rng.standard_normal((units.size, 2))
        if pop.u is not None and pop.v is not None:
            u, v = pop.u[units], pop.v[units]
        else:
            var_u, var_v, rho = _error_variances(spec, group)
            errors = z @ cholesky_2x2(var_u, var_v, rho, "(U, V)").T
            u, v = errors[:, 0], errors[:, 1]
        total_y += count * float(np.mean(pop.y[units] + u))
        total_x += count * float(np.mean(pop.x[units] + v))
    return total_y / n, total_x / n


def dump_sample(sample: RssSample, path: str | os.PathLike) -> None:
    sample.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def load_sample(path: str | os.PathLike, design: RssDesign) -> RssSample:
    """Reads a sample dump and checks it against the cycle accounting of `design`."""
    try:
        frame = pd.read_csv(path)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SamplingException(f"cannot read sample file {path}: {e}") from e
    missing = [c for c in SAMPLE_COLUMNS if c not in frame.columns]
    if missing:
        raise SamplingException(f"{path}: missing column(s) {', '.join(missing)}")
    try:
        columns = {c: frame[c].to_numpy(dtype=float) for c in SAMPLE_COLUMNS}
    except ValueError as e:
        raise SamplingException(f"{path}: non-numeric cell: {e}") from e

    for c in ("cycle", "rank", "group"):
        columns[c] = columns[c].astype(np.int64)
    columns["group"] = columns["group"].astype(np.int8)

    n1 = int(np.count_nonzero(columns["group"] == ResponseGroup.RESPONDENT))
    n2 = int(np.count_nonzero(columns["group"] == ResponseGroup.NON_RESPONDENT))
    if n1 != design.n1 or n2 != design.n2_prime or n1 + n2 != len(frame):
        raise SamplingException(
            f"{path}: {n1} respondent and {n2} non-respondent rows, design expects {design.n1} and {design.n2_prime}"
        )
    if columns["rank"].min() < 1 or columns["rank"].max() > design.m:
        raise SamplingException(f"{path}: ranks must lie in 1..{design.m}")
    return RssSample(design=design, **columns)


def verify_ranking(sample: RssSample) -> bool:
    """Checks that every measured unit holds its rank within its candidate set."""
    if sample.candidate_keys is None or sample.selected_keys is None:
        raise SamplingException("sample was drawn without keep_sets; candidate sets are unavailable")
    ordered = np.sort(sample.candidate_keys, axis=1)
    expected = ordered[np.arange(len(sample)), sample.rank - 1]
    bad = np.flatnonzero(expected != sample.selected_keys)
    if bad.size:
        row = int(bad[0])
        raise SamplingException(
            f"row {row}: rank {sample.rank[row]} unit has key {sample.selected_keys[row]}, "
            f"order statistic is {expected[row]}"
        )
    return True
