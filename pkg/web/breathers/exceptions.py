"""Error types raised by the breather pipeline.

Every error carries the process exit code the management commands use:
0 success, 2 certification failure, 3 solver non-convergence, 4 config error.
"""


class BreatherError(Exception):
    """Base class for all pipeline errors"""
    exit_code = 1


class ConfigurationError(BreatherError):
    """Invalid run configuration or material data"""
    exit_code = 4


class UsageError(BreatherError):
    """Mismatched grids or lattices, insufficient oversampling"""
    exit_code = 1


class BandResolutionError(BreatherError):
    """Scan could not separate adjacent band edges"""
    exit_code = 2

    def __init__(self, window):
        self.window = window
        super().__init__(
            f"Band edges in lambda window [{window[0]:.6g}, {window[1]:.6g}] "
            f"could not be resolved; increase discretization.band_resolution"
        )


class SingularOperatorError(BreatherError):
    """A per-frequency operator is singular on the truncated domain"""
    exit_code = 2

    def __init__(self, k, condition):
        self.k = k
        self.condition = condition
        super().__init__(
            f"Operator for frequency k={k} is numerically singular "
            f"(condition estimate {condition:.3e}); omega^2 k^2 collides with an "
            f"eigenvalue of the truncated domain. Move the walls to cell symmetry "
            f"points or change x_min/x_max/n_points"
        )


class CertificationError(BreatherError):
    """Gap hypotheses could not be certified for the required frequencies"""
    exit_code = 2

    def __init__(self, frequencies, message=None):
        self.frequencies = list(frequencies)
        super().__init__(message or f"Uncertified frequencies: {self.frequencies}")


class ReconstructionError(BreatherError):
    """Wave reconstruction refused for non-invertible frequencies"""
    exit_code = 2

    def __init__(self, frequencies):
        self.frequencies = list(frequencies)
        super().__init__(
            f"Non-resonant frequencies {self.frequencies} are not certified; "
            f"L_k may not be invertible there"
        )


class ConvergenceError(BreatherError):
    """The dual solver did not reach its tolerances"""
    exit_code = 3
