"""Exception hierarchy shared by all rotlab modules."""


class RotlabError(Exception):
    """Base class; ``kind`` is the short machine-readable tag used by the CLI."""

    kind = "error"


class NonFiniteFieldError(RotlabError, ValueError):
    kind = "non-finite"

    def __init__(self, index, value):
        self.index = index
        self.value = value
        super().__init__(f"non-finite value {value!r} at grid index {index}")


class ThresholdBreakdownError(RotlabError, ArithmeticError):
    """Raised when the Riccati inversion matrix becomes singular."""

    kind = "threshold breakdown"

    def __init__(self, t, M0, det):
        self.t = t
        self.M0 = M0
        self.det = det
        super().__init__(f"threshold breakdown at t={t!r}: det={det:.3e}")


class FlowMapInversionError(RotlabError, ArithmeticError):
    kind = "flow-map inversion failure"

    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"flow-map inversion failed after {iterations} iterations, "
            f"worst residual {residual:.3e}"
        )


class VorticityDegeneracyError(RotlabError, ArithmeticError):
    kind = "vorticity degeneracy"


class VacuumError(RotlabError, ValueError):
    kind = "vacuum"

    def __init__(self, minimum):
        self.minimum = minimum
        super().__init__(f"vacuum: min(1 + sigma*h) = {minimum:.6g} <= 0")


class SubcriticalityError(RotlabError, ValueError):
    kind = "supercritical"


class CFLError(RotlabError, ValueError):
    kind = "cfl"

    def __init__(self, dt, admissible):
        self.dt = dt
        self.admissible = admissible
        super().__init__(f"dt={dt:.6g} exceeds admissible dt={admissible:.6g}")


class GridMismatchError(RotlabError, ValueError):
    kind = "grid mismatch"


class ConfigError(RotlabError, ValueError):
    kind = "config"

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
