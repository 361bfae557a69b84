"""Exception types raised by the solver library."""


class HammersteinError(Exception):
    """Base class for all library errors."""


class InvalidArgument(HammersteinError, ValueError):
    pass


class Unsupported(HammersteinError, ValueError):
    pass


class InvalidGenerator(HammersteinError, ValueError):
    """Generator whose semigroup would not be non-negative or would gain mass."""


class NoRoot(HammersteinError, ArithmeticError):
    """No bracketing interval found for a threshold equation."""


class InvalidIterate(HammersteinError, ValueError):
    pass


class InvalidShift(HammersteinError, ValueError):
    pass


class CertificateFailure(HammersteinError, ArithmeticError):
    """A convergence constant fell outside its admissible range."""


class OracleFailure(HammersteinError, RuntimeError):
    pass


class ProbeInconclusive(HammersteinError, RuntimeError):
    pass


class AssumptionFailure(HammersteinError, RuntimeError):
    """Raised when solving is requested on an instance failing its checks."""

    def __init__(self, report):
        failed = ", ".join(e.name for e in report.failures())
        super().__init__(f"assumption check failed: {failed}")
        self.report = report
