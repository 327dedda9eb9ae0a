"""Exception hierarchy shared by the library and the CLI."""


class MaskSepError(Exception):
    """Base class for every error raised on purpose by this package."""


class ValidationError(MaskSepError, ValueError):
    """Bad shapes, non-finite input, out-of-range parameters or malformed files."""


class CertificateError(MaskSepError):
    """The certificate system has no solution within tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (least-squares residual {residual:.3e})")
        self.residual = residual


class SolverDivergedError(MaskSepError):
    """A single solve produced non-finite iterates."""

    def __init__(self, iterations: int):
        super().__init__(f"solver diverged after {iterations} iterations")
        self.iterations = iterations
