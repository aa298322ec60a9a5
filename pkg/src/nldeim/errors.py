"""Exception hierarchy shared by all nldeim modules."""


class NldeimError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(NldeimError, ValueError):
    """Invalid input (empty vectors, non-finite entries, bad parameters)."""


class BudgetError(NldeimError, RuntimeError):
    """An enumeration or iteration budget was exceeded."""


class RankDeficientPatchError(NldeimError):
    """A patch could not be fully factored at the requested tolerance."""

    def __init__(self, patch, stage_count, rank):
        self.patch = patch
        self.stage_count = stage_count
        self.rank = rank
        super().__init__(
            f"patch {patch} reached only {stage_count} of {rank} pivots; "
            "all remaining residuals fell below eps"
        )


class DisconnectedGraphError(NldeimError):
    def __init__(self, n_components):
        self.n_components = n_components
        super().__init__(f"graph is disconnected ({n_components} components)")


class SpectrumError(NldeimError):
    """Requested more Laplacian eigenpairs than the spectrum provides."""


class SingularInterpolantError(NldeimError):
    """d_i - lambda_j vanished in the interpolated eigenfunction."""


class SingularProjectionError(NldeimError):
    """Pi_P^T U is rank deficient, so the reconstruction is undefined."""


class NoPatchesError(NldeimError):
    """Tangent estimation rejected every candidate patch."""


class CFLError(NldeimError):
    """Time integration produced non-finite values."""


class MatrixFormatError(NldeimError):
    """Base for matrix file I/O failures."""


class MatrixHeaderError(MatrixFormatError):
    pass


class TruncatedPayloadError(MatrixFormatError):
    pass


class DimensionMismatchError(MatrixFormatError):
    pass


class ConfigError(NldeimError):
    """A run configuration failed validation; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
