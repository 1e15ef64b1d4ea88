from .population import Population, PopulationParams, PopulationSpec, ResponseGroup, MeMode
from .design import RssDesign, RssSample, RankOn
from .moments import OrderStatMeans, DTerms, MomentSet
from .estimator import EstimatorId, EstimatorReport, QuadraticMseSurface, TABLE_ESTIMATORS
from .scenario import Scenario, ScenarioResult, EstimatorOutcome
