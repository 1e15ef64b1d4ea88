import numpy as np
import pytest

from models import MomentSet, PopulationSpec, RssDesign, Scenario
from models.presets import SIMULATED_POPULATION
import services.population as population


def make_moments(V_y=0.004, V_x=0.006, V_yx=0.0045, ybar=125.0, xbar=170.0, **extra) -> MomentSet:
    """A valid moment set; only the composite moments matter to the estimators."""
    values = dict(eta=1 / 15, sigma2_y=1200.0, sigma2_x=3300.0, sigma_yx=1782.0)
    values.update(extra)
    return MomentSet(ybar=ybar, xbar=xbar, V_y=V_y, V_x=V_x, V_yx=V_yx, **values)


def random_moments(rng: np.random.Generator, max_rho: float = 0.95) -> MomentSet:
    v_y, v_x = rng.uniform(1e-4, 2e-2, size=2)
    rho = rng.uniform(-max_rho, max_rho)
    return make_moments(
        V_y=v_y, V_x=v_x, V_yx=rho * np.sqrt(v_y * v_x),
        ybar=rng.uniform(10, 500), xbar=rng.uniform(10, 500),
    )


@pytest.fixture
def moment_set() -> MomentSet:
    return make_moments()


@pytest.fixture(scope="session")
def small_spec() -> PopulationSpec:
    return SIMULATED_POPULATION.updated(N=200)


@pytest.fixture(scope="session")
def small_population(small_spec):
    return population.generate_population(small_spec, seed=11)


@pytest.fixture(scope="session")
def design() -> RssDesign:
    return RssDesign(m=3, r1=3, r2=2, k=2)


@pytest.fixture
def quick_scenario(small_spec, design) -> Scenario:
    return Scenario(
        spec=small_spec,
        design=design,
        replications=400,
        master_seed=5,
        os_method="exact",
        chunk_size=100,
    )
