from .design import RssDesign
from .population import PopulationSpec

# Simulated bivariate-normal population with uncorrelated errors on both variables.
SIMULATED_POPULATION = PopulationSpec(
    N=1000, mu_x=170, mu_y=125, sigma2_x=3300, sigma2_y=1200, rho_xy=0.9,
    sigma2_u=36, sigma2_v=36, rho_uv=0, w2_frac=0.4,
)

# Farm-loan parameter set; the non-response stratum carries its own, much larger error variances.
FARM_LOANS_POPULATION = PopulationSpec(
    N=50, mu_x=170, mu_y=127, sigma2_x=3300, sigma2_y=1278, rho_xy=0.964,
    sigma2_u=36, sigma2_v=36, rho_uv=0, w2_frac=0.4,
    sigma2_u2=1278, sigma2_v2=3300,
)

PRESETS = {
    "simulated": SIMULATED_POPULATION,
    "farm-loans": FARM_LOANS_POPULATION,
}

DEFAULT_DESIGN = RssDesign(m=3, r1=3, r2=2, k=2)

GRID_CYCLES = ((3, 1), (3, 2), (3, 3))
GRID_RHOS = (0.9, 0.8, 0.7)
GRID_RATES = (2, 3, 4)
ME_DELTAS = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30)
