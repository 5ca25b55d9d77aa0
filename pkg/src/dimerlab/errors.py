"""Exception types shared across the package."""


class DimerlabError(Exception):
    """Base class for all package-specific errors."""


class SizeLimitExceeded(DimerlabError):
    """Exhaustive enumeration requested beyond the supported lattice size."""


class NonGenericWeights(DimerlabError):
    """The two spectral circles are tangent or disjoint, or the zeros of the
    symbol are not transversal; the critical-phase formulas do not apply."""


class NonGenericTilt(DimerlabError):
    """The two Fermi points are opposite modulo 2*pi (zero average tilt), so
    the oscillating wavevectors p+ - p- and p- - p+ coincide and the
    log^2 extraction is degenerate."""


class DegenerateFrame(DimerlabError):
    """The (alpha, beta) pair at a Fermi point does not span C over R."""


class RatioMismatch(DimerlabError):
    """The two dressed amplitude ratios disagree beyond the O(lambda^2)
    budget; signals an inconsistency in the first-order chain."""


class MaxSubdivisions(DimerlabError):
    """Adaptive quadrature exceeded its panel budget (near-singular
    integrand or an unreachable tolerance)."""


class NotFlippable(DimerlabError):
    """Requested a plaquette rotation on a face without a parallel dimer
    pair."""


class InsufficientSamples(DimerlabError):
    """The Monte Carlo series is too short to resolve its autocorrelation
    time or to form the requested number of batches."""
