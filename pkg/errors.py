# errors.py - exception hierarchy


class OpStableError(Exception):
    """Base class for every domain error raised by the library."""


class AsymmetricMatrixError(OpStableError, ValueError):
    def __init__(self, max_asymmetry):
        self.max_asymmetry = float(max_asymmetry)
        super().__init__(f"non-symmetric input (max asymmetry {self.max_asymmetry:.3e})")


class SpectralBoundError(OpStableError):
    def __init__(self, detail=""):
        msg = "spectral bound violation"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class NotInQError(OpStableError):
    def __init__(self, min_eigenvalue):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(f"not in Q(R^m): smallest eigenvalue {self.min_eigenvalue:.6g} <= 0")


class PolarOriginError(OpStableError, ValueError):
    def __init__(self):
        super().__init__("polar undefined at origin")


class ConvergenceError(OpStableError):
    def __init__(self, what, residual):
        self.residual = float(residual)
        super().__init__(f"{what} did not converge (residual {self.residual:.3e})")


class QuadratureError(OpStableError):
    def __init__(self, what, error_estimate):
        self.error_estimate = float(error_estimate)
        super().__init__(f"quadrature failed for {what} (error estimate {self.error_estimate:.3e})")


class FullnessError(OpStableError):
    def __init__(self, detail=""):
        msg = "fullness violation"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class TailCertificationError(OpStableError):
    def __init__(self):
        super().__init__("cannot certify tail: integrand has no support radius and no tail exponent hint")


class NotIntegrableError(OpStableError):
    def __init__(self, detail=""):
        msg = "not integrable"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class ConditionError(OpStableError):
    def __init__(self, verdicts):
        self.verdicts = verdicts
        parts = [f"{v.name} margin {v.margin:.4g}" for v in verdicts]
        super().__init__("existence conditions failed (" + ", ".join(parts) + ")")


class CommutationError(OpStableError):
    def __init__(self, what, defect):
        self.defect = float(defect)
        super().__init__(f"commutation failure: {what} (max defect {self.defect:.3e})")


class AdmissibilityError(OpStableError):
    def __init__(self, detail):
        super().__init__(f"homogeneous function not admissible: {detail}")


class ConfigError(OpStableError):
    def __init__(self, path, detail):
        self.path = path
        super().__init__(f"{path}: {detail}")
