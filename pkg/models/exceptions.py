class RssLabException(Exception):
    pass

class PopulationException(RssLabException):
    pass

class PopulationParseException(PopulationException):
    pass

class SamplingException(RssLabException):
    pass

class DesignException(SamplingException):
    pass

class MomentException(RssLabException):
    pass

class EstimatorException(RssLabException):
    pass

class DomainException(EstimatorException):
    pass

class NoInteriorMinimumException(EstimatorException):
    pass

class ExperimentException(RssLabException):
    pass

class ConfigException(RssLabException):
    pass
