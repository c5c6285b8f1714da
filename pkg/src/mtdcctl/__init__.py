"""Coordinated secondary frequency control of AC areas linked by an MTDC grid."""

from .analysis import (
    CertificateReport,
    EquilibriumReport,
    certify,
    check_assumptions,
    equilibrium,
    generation_optimum,
    hurwitz_check,
    lyapunov_certificate,
    objective_gap,
    voltage_optimum,
)
from .config import dump_config, load_config, parse_config
from .graph import (
    Topology,
    incidence_matrix,
    orthonormal_complement,
    proportionality_factor,
    weighted_laplacian,
)
from .model import (
    AcArea,
    ClosedLoopSystem,
    DcLine,
    DcTerminal,
    GainSet,
    SystemDescription,
    assemble_full,
    assemble_reduced,
    converter_control,
    generation_control,
    injected_current,
)
from .sim import Event, Scenario, Trajectory, lyapunov_along, simulate, steady_state_metrics

__version__ = "0.1.0"
