import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from models import MeMode, Population, PopulationSpec, ResponseGroup
from models.exceptions import PopulationException, PopulationParseException
from models.presets import FARM_LOANS_POPULATION, SIMULATED_POPULATION
import services.population as population


class TestCholesky:

    @pytest.mark.parametrize("var_a,var_b,rho", [(3300, 1200, 0.9), (1, 4, -0.5), (36, 36, 0.0), (0, 5, 0.3)])
    def test_reproduces_covariance(self, var_a, var_b, rho):
        factor = population.cholesky_2x2(var_a, var_b, rho, "test")
        cov = rho * np.sqrt(var_a * var_b)
        assert factor @ factor.T == pytest.approx(np.array([[var_a, cov], [cov, var_b]]))

    def test_rejects_negative_variance(self):
        with pytest.raises(PopulationException, match="test block"):
            population.cholesky_2x2(-1, 1, 0, "test block")


class TestPopulationSpec:

    def test_strata_sizes(self):
        assert SIMULATED_POPULATION.N2 == 400
        assert SIMULATED_POPULATION.N1 == 600
        assert FARM_LOANS_POPULATION.N2 == 20

    def test_group2_error_overrides(self):
        assert FARM_LOANS_POPULATION.group2_sigma2_u == 1278
        assert SIMULATED_POPULATION.group2_sigma2_u == SIMULATED_POPULATION.sigma2_u

    def test_without_measurement_error(self):
        spec = FARM_LOANS_POPULATION.without_measurement_error()
        assert not spec.has_measurement_error
        assert FARM_LOANS_POPULATION.has_measurement_error

    @pytest.mark.parametrize("changes", [dict(rho_xy=1.2), dict(N=1), dict(N=2, w2_frac=0.9), dict(sigma2_x=-1)])
    def test_invalid(self, changes):
        with pytest.raises(ValidationError):
            SIMULATED_POPULATION.updated(**changes)


class TestGeneratePopulation:

    spec = SIMULATED_POPULATION.updated(N=20_000)

    def test_moments_match_spec(self):
        pop = population.generate_population(self.spec, seed=1)
        assert pop.N == 20_000
        assert pop.N2 == 8_000
        assert np.corrcoef(pop.x, pop.y)[0, 1] == pytest.approx(0.9, abs=0.01)
        assert np.mean(pop.x) == pytest.approx(170, abs=4 * np.sqrt(3300 / 20_000))
        assert np.var(pop.y, ddof=1) == pytest.approx(1200, rel=0.05)

    def test_correlation_within_fisher_interval(self):
        pop = population.generate_population(SIMULATED_POPULATION.updated(w2_frac=0.25), seed=1)
        assert abs(np.mean(pop.x) - 170) < 3 * np.sqrt(3300 / 1000)
        r = np.corrcoef(pop.x, pop.y)[0, 1]
        # 99% interval on the Fisher z scale
        half_width = 2.5758 / np.sqrt(pop.N - 3)
        assert abs(np.arctanh(r) - np.arctanh(0.9)) < half_width

    def test_seeded(self):
        a = population.generate_population(self.spec, seed=3)
        b = population.generate_population(self.spec, seed=3)
        c = population.generate_population(self.spec, seed=4)
        assert np.array_equal(a.y, b.y) and np.array_equal(a.group, b.group)
        assert not np.array_equal(a.y, c.y)

    def test_values_independent_of_non_response(self):
        a = population.generate_population(self.spec, seed=3)
        b = population.generate_population(self.spec.updated(w2_frac=0.2), seed=3)
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.y, b.y)

    def test_error_columns(self):
        fresh = population.generate_population(FARM_LOANS_POPULATION, seed=2)
        fixed = population.generate_population(FARM_LOANS_POPULATION, seed=2, me_mode=MeMode.FIXED_COLUMN)
        assert fresh.u is None and fresh.me_mode is MeMode.FRESH_DRAW
        assert fixed.me_mode is MeMode.FIXED_COLUMN
        assert fixed.u.shape == (50,)
        # non-respondents carry the much larger group-2 error variance
        group2 = fixed.group == ResponseGroup.NON_RESPONDENT
        assert np.std(fixed.u[group2]) > np.std(fixed.u[~group2])


class TestComputeParams:

    def test_realized_moments(self, small_population, small_spec):
        params = population.compute_params(small_population)
        assert params.ybar == pytest.approx(np.mean(small_population.y))
        assert params.sigma2_x == pytest.approx(np.var(small_population.x, ddof=1))
        group2 = small_population.group == ResponseGroup.NON_RESPONDENT
        assert params.ybar2 == pytest.approx(np.mean(small_population.y[group2]))
        assert params.sigma2_y2 == pytest.approx(np.var(small_population.y[group2], ddof=1))
        assert params.W2 == pytest.approx(0.4)
        assert params.sigma2_u == small_spec.sigma2_u

    def test_full_response(self):
        pop = Population(y=np.array([1.0, 2.0, 4.0]), x=np.array([2.0, 3.0, 5.0]), group=np.ones(3, dtype=np.int8))
        params = population.compute_params(pop)
        assert params.N2 == 0 and params.W2 == 0
        assert params.sigma2_y2 == 0

    def test_single_non_respondent(self):
        pop = Population(y=np.arange(4.0), x=np.arange(4.0), group=np.array([1, 1, 1, 2], dtype=np.int8))
        with pytest.raises(PopulationException):
            population.compute_params(pop)

    def test_column_lengths(self):
        with pytest.raises(PopulationException):
            Population(y=np.arange(3.0), x=np.arange(4.0), group=np.ones(3))


class TestPopulationFiles:

    def test_save_and_load(self, tmp_path, small_population):
        path = tmp_path / "pop.csv"
        population.save_population(small_population, path)
        loaded = population.load_population(path)
        assert np.array_equal(loaded.y, small_population.y)
        assert np.array_equal(loaded.group, small_population.group)

    def test_bad_cell_names_row(self, tmp_path):
        path = tmp_path / "pop.csv"
        path.write_text("y,x,group\n1,2,1\n3,abc,1\n5,6,2\n7,8,2\n")
        with pytest.raises(PopulationParseException, match="row 3"):
            population.load_population(path)

    def test_unknown_group(self, tmp_path):
        path = tmp_path / "pop.csv"
        path.write_text("y,x,group\n1,2,1\n3,4,1\n5,6,3\n7,8,2\n")
        with pytest.raises(PopulationParseException, match="group label"):
            population.load_population(path)

    def test_group_needs_two_rows(self, tmp_path):
        path = tmp_path / "pop.csv"
        pd.DataFrame({"y": [1, 2, 3], "x": [1, 2, 3], "group": [1, 1, 2]}).to_csv(path, index=False)
        with pytest.raises(PopulationParseException, match="group 2"):
            population.load_population(path)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "pop.csv"
        path.write_text("y,x\n1,2\n")
        with pytest.raises(PopulationParseException, match="group"):
            population.load_population(path)

    def test_describe(self, small_population):
        spec = population.describe_population(small_population, sigma2_u=4.0)
        assert isinstance(spec, PopulationSpec)
        assert spec.N == 200
        assert spec.w2_frac == pytest.approx(small_population.W2)
        assert spec.rho_xy == pytest.approx(np.corrcoef(small_population.x, small_population.y)[0, 1])
        assert spec.sigma2_u == 4.0

    def test_not_utf8(self, tmp_path):
        path = tmp_path / "pop.csv"
        path.write_bytes(b"y,x,group\n1,2,1\n\xff\xfe,4,1\n5,6,2\n7,8,2\n")
        with pytest.raises(PopulationParseException, match="cannot read"):
            population.load_population(path)
