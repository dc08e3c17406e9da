"""Exception hierarchy shared by all solver modules."""


class GenBvpError(Exception):
    """Base class for library errors."""


class UnsupportedDerivative(GenBvpError):
    pass


class InvalidExponent(GenBvpError):
    pass


class UnsupportedExponent(GenBvpError):
    pass


class DimensionMismatch(GenBvpError):
    pass


class PointOutOfInterval(GenBvpError):
    pass


class OrderOutOfRange(GenBvpError):
    pass


class InvalidPartition(GenBvpError):
    pass


class IntegrationFailure(GenBvpError):
    """The initial-value integrator could not meet the requested tolerance."""


class SingularProblem(GenBvpError):
    """The characteristic matrix is singular, so the problem is not well posed.

    Attributes:
        dim_ker: Dimension of the kernel of the characteristic matrix.
        dim_coker: Dimension of its co-kernel.
        condition: 2-norm condition number of the matrix (inf when rank deficient).
    """

    def __init__(self, dim_ker: int, dim_coker: int, condition: float = float("inf")):
        self.dim_ker = dim_ker
        self.dim_coker = dim_coker
        self.condition = condition
        super().__init__(
            f"singular problem: dim_ker={dim_ker}, dim_coker={dim_coker}, cond={condition:.3e}"
        )


class NeverWellPosed(GenBvpError):
    """Every approximant in a convergence study was singular."""


class ConfigError(GenBvpError):
    """A configuration file failed to parse or validate."""

    def __init__(self, message: str, where: str = ""):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)
