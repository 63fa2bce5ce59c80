"""Exception types shared across the library."""


class LorenzLabError(Exception):
    """Base class for all library errors."""


class InvalidParameter(LorenzLabError):
    """A raw parameter is outside its admissible range (non-finite, wrong sign...)."""


class EigenvalueOrderViolation(InvalidParameter):
    """Eigenvalue chain 0 < lambda1/2 < -lambda3 < lambda1 < -lambda2 broken."""


class ThetaTooLarge(InvalidParameter):
    """Expansion factor pushes the image of the return map outside the square."""


class ThetaTooSmall(InvalidParameter):
    """Induced one-dimensional map would not be uniformly expanding."""


class LeafImagesOverlap(InvalidParameter):
    """The two branch images of the fiber map intersect or escape the interval."""


class SingularInput(LorenzLabError):
    """Evaluation requested on the singular line x = 0."""


class NonIntegrable(LorenzLabError):
    """Quadrature of the return time fails to stabilise under refinement."""


class DegenerateCell(LorenzLabError):
    """An Ulam cell could not be assigned any image mass."""


class NoConvergence(LorenzLabError):
    """Fixed-point iteration did not reach the residual target within the cap."""


class MassMismatch(LorenzLabError):
    """Operation requires equal total masses."""


class NegativeObservable(LorenzLabError):
    """Observable must be nonnegative on the square."""


class InsufficientSamples(LorenzLabError):
    """Monte Carlo noise exceeds the signal everywhere it matters."""


class TooCensored(LorenzLabError):
    """More than the admissible fraction of samples hit the iteration cap."""


class EmptyBall(LorenzLabError):
    """No measure found in the smallest requested ball."""


class NeverLeft(LorenzLabError):
    """Recurrence query: orbit never exited the initial ball before the cap."""


class SingularOrbit(LorenzLabError):
    """An orbit landed exactly on the singular line and was not resampled."""


class DivergentIntegral(LorenzLabError):
    """Truncated quadrature near the singularity fails Richardson stability."""


class ConfigError(LorenzLabError):
    """Experiment configuration is missing or malformed (carries the field name)."""


class ModelInvalid(LorenzLabError):
    """Model rejected by validation; wraps the named diagnostic."""


class ExperimentFailed(LorenzLabError):
    """An experiment raised; propagated to a nonzero exit status."""


class MissingArtifacts(LorenzLabError):
    """Report requested on a directory without experiment outputs."""
