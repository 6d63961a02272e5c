"""Exception hierarchy shared by all modules."""


class GalerkinError(Exception):
    pass


class RangeError(GalerkinError, IndexError):
    """Truncation index outside the stored coefficient range."""


class DimensionError(GalerkinError, ValueError):
    pass


class ModelError(GalerkinError, ValueError):
    """Physically or mathematically invalid model parameters."""


class UnsupportedConfigurationError(GalerkinError, ValueError):
    pass


class PreconditionError(GalerkinError, ValueError):
    pass


class NumericError(GalerkinError, RuntimeError):
    pass


class DivergenceError(NumericError):
    """State norm left the a priori bounded regime."""


class NonConvergenceError(NumericError):
    pass


class OracleError(NumericError):
    pass
