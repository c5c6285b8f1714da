"""Exception types raised across the package."""


class MtdcError(Exception):
    """Base class for all errors raised by mtdcctl."""


class ValidationError(MtdcError, ValueError):
    """Invalid parameter, topology or configuration value.

    ``field`` names the offending field when known (e.g. ``"dc_lines[2].r"``).
    """

    def __init__(self, message, field=None):
        self.field = field
        self.message = message
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class DimensionError(ValidationError):
    pass


class PreconditionError(MtdcError):
    """An operation was called on inputs that violate its precondition."""


class AnalysisError(MtdcError):
    """Numerical analysis failed (eigensolver, internal consistency)."""


class SingularSystemError(AnalysisError):
    """The closed-loop matrix is singular, so there is no unique equilibrium."""

    def __init__(self, message, direction=None):
        self.direction = direction
        super().__init__(message)


class InfeasibleError(AnalysisError):
    pass


class SimulationError(MtdcError):
    pass


class VoltageCollapseError(SimulationError):
    def __init__(self, t, node, voltage, v_min):
        self.t, self.node, self.voltage, self.v_min = t, node, voltage, v_min
        super().__init__(
            f"voltage collapse at t={t:.6g} s: V_{node + 1} = {voltage:.6g} p.u. "
            f"below v_min = {v_min:g} p.u."
        )


class StiffnessError(SimulationError):
    pass
