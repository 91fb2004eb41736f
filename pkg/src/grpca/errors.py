"""Exception types shared across the package."""


class GrpcaError(Exception):
    """Base class for all package-specific errors."""


# --- linear algebra ---

class NotPositiveDefinite(GrpcaError):
    """A matrix required to be SPD has a non-positive pivot or eigenvalue."""


class NoConvergence(GrpcaError):
    """An iterative routine exhausted its iteration budget."""


class RankTooLarge(GrpcaError):
    """Requested rank exceeds min(rows, cols)."""


class DimensionMismatch(GrpcaError):
    """Operands have incompatible shapes."""


# --- graphs ---

class InvalidParameter(GrpcaError):
    """Topology parameter outside its valid range."""


class Infeasible(GrpcaError):
    """Requested edge density below the topology's feasible minimum."""


# --- data generation ---

class DegenerateComponent(GrpcaError):
    """Soft-thresholding wiped out an entire loading column."""


class InsufficientBoundary(GrpcaError):
    """Too few sub-maximal-degree nodes to place nuisance spikes."""


# --- precision estimation ---

class TooFewSamples(GrpcaError):
    """Covariance requires at least two samples."""


class AllFitsFailed(GrpcaError):
    """No penalty on the cross-validation path produced a usable fit."""


# --- factor models ---

class DegenerateLoadings(GrpcaError):
    """Loadings too rank-deficient to compute scores, even with ridge."""


# --- metrics ---

class RankDeficient(GrpcaError):
    """Projector input does not have full column rank."""


class ZeroSubspaceVariance(GrpcaError):
    """Projected test data has zero Frobenius norm."""


class EmptyLoadings(GrpcaError):
    """Alignment needs at least one column on each side."""


class ZeroVariance(GrpcaError):
    """Test data has zero Frobenius norm."""


# --- harness ---

class InsufficientData(GrpcaError):
    """Not enough sweep points to draw a plot."""


class ConfigError(GrpcaError):
    """Base class for configuration-file problems."""


class ParseError(ConfigError):
    """Configuration file is not valid JSON."""


class UnknownKey(ConfigError):
    """Configuration contains a key the schema does not define."""


class RangeViolation(ConfigError):
    """Configuration value outside its allowed range."""
