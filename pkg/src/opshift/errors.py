"""Exception types shared across the package."""


class ResolventSingularityError(ValueError):
    """Shift point is (numerically) an eigenvalue of the operator."""


class SpectralGapError(ValueError):
    """Spectra are not separated well enough for the requested solver."""


class OrderingError(ValueError):
    """One-sided spectral ordering required by the exponential solver fails."""


class ContourError(ValueError):
    """Integration contour has wrong winding numbers or grazes a spectrum."""


class KernelError(ValueError):
    """Time-domain kernel failed its transform self-check or is too coarse."""


class ConvergenceError(RuntimeError):
    """Fixed-point iteration or node doubling did not converge."""


class HypothesisError(ValueError):
    """None of the solvability hypotheses holds for the block problem."""


class MatrixFormatError(ValueError):
    """Malformed matrix text file; message carries the offending line."""
