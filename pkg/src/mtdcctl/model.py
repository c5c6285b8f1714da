"""AC-area / DC-terminal models, controller laws and closed-loop assembly.

All states are deviations: ``omega_hat = omega - omega_ref``,
``v_hat = V - V_ref``; ``eta`` and ``phi`` are the controller states. The
full state is ordered ``(omega_hat, v_hat, eta, phi)``, 4n entries. The
reduced state replaces ``phi`` by ``S^T phi`` (n-1 entries), which drops the
unobservable mean of ``phi``.
"""

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional

import numpy as np

from .exceptions import ValidationError, VoltageCollapseError
from .graph import Topology, orthonormal_complement

V_MIN = 0.5


@dataclass(frozen=True)
class AcArea:
    m: float
    p_load: float = 0.0

    def __post_init__(self):
        if not self.m > 0:
            raise ValidationError(f"inertia must be positive, got {self.m!r}", "m")


@dataclass(frozen=True)
class DcTerminal:
    c: float
    v_ref: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValidationError(f"capacitance must be positive, got {self.c!r}", "c")
        if not self.v_ref > 0:
            raise ValidationError(f"reference voltage must be positive, got {self.v_ref!r}", "v_ref")


@dataclass(frozen=True)
class GainSet:
    k_omega: float
    k_v: float
    k_droop: float
    k_droop_i: float
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("k_omega", "k_v", "k_droop"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"must be positive, got {getattr(self, name)!r}", name)
        # zero integral gain is allowed: it is the canonical non-certifiable case
        if not self.k_droop_i >= 0:
            raise ValidationError(f"must be non-negative, got {self.k_droop_i!r}", "k_droop_i")
        if not self.gamma >= 0:
            raise ValidationError(f"must be non-negative, got {self.gamma!r}", "gamma")


@dataclass(frozen=True)
class DcLine:
    """HVDC line between terminals ``i`` and ``j`` (0-based).

    ``l`` and ``c`` are only used by the pi-line simulation mode.
    """

    i: int
    j: int
    r: float
    l: Optional[float] = None
    c: Optional[float] = None

    def __post_init__(self):
        if self.i == self.j:
            raise ValidationError("line endpoints must differ", "j")
        if self.i > self.j:
            i, j = self.j, self.i
            object.__setattr__(self, "i", i)
            object.__setattr__(self, "j", j)
        if not self.r > 0:
            raise ValidationError(f"resistance must be positive, got {self.r!r}", "r")
        if self.l is not None and not self.l > 0:
            raise ValidationError(f"inductance must be positive, got {self.l!r}", "l")
        if self.c is not None and not self.c >= 0:
            raise ValidationError(f"capacitance must be non-negative, got {self.c!r}", "c")


@dataclass(frozen=True)
class SystemDescription:
    """Physical parameters, controller gains and topologies of one system.

    ``gamma`` is shared by all converters and taken from the gain sets,
    which must agree on it.
    """

    areas: tuple
    terminals: tuple
    gains: tuple
    dc_lines: tuple
    eta_topology: Topology
    phi_topology: Topology
    v_nom: float = 1.0
    omega_ref: float = 1.0

    def __post_init__(self):
        for name in ("areas", "terminals", "gains", "dc_lines"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        n = len(self.areas)
        if n < 1:
            raise ValidationError("at least one node is required", "nodes")
        if len(self.terminals) != n or len(self.gains) != n:
            raise ValidationError("areas, terminals and gains must have equal length", "nodes")
        gammas = {g.gamma for g in self.gains}
        if len(gammas) != 1:
            raise ValidationError(f"gamma must be shared by all nodes, got {sorted(gammas)}", "gamma")
        if not self.v_nom > 0:
            raise ValidationError(f"must be positive, got {self.v_nom!r}", "v_nom")
        for name, topo in (("eta_topology", self.eta_topology), ("phi_topology", self.phi_topology)):
            if topo.n != n:
                raise ValidationError(f"has {topo.n} nodes, expected {n}", name)
        for k, line in enumerate(self.dc_lines):
            if not (0 <= line.i < n and 0 <= line.j < n):
                raise ValidationError("endpoint out of range", f"dc_lines[{k}]")
        # validates connectivity and duplicates of the DC grid
        self.dc_topology

    @cached_property
    def dc_topology(self):
        return Topology(self.n, tuple((ln.i, ln.j, 1.0 / ln.r) for ln in self.dc_lines))

    @property
    def n(self):
        return len(self.areas)

    @property
    def gamma(self):
        return self.gains[0].gamma

    def _vec(self, seq, attr):
        return np.array([getattr(x, attr) for x in seq], dtype=float)

    @property
    def m(self):
        return self._vec(self.areas, "m")

    @property
    def p_load(self):
        return self._vec(self.areas, "p_load")

    @property
    def c(self):
        return self._vec(self.terminals, "c")

    @property
    def v_ref(self):
        return self._vec(self.terminals, "v_ref")

    @property
    def k_omega(self):
        return self._vec(self.gains, "k_omega")

    @property
    def k_v(self):
        return self._vec(self.gains, "k_v")

    @property
    def k_droop(self):
        return self._vec(self.gains, "k_droop")

    @property
    def k_droop_i(self):
        return self._vec(self.gains, "k_droop_i")

    @cached_property
    def laplacian_r(self):
        return self.dc_topology.laplacian

    @cached_property
    def laplacian_eta(self):
        return self.eta_topology.laplacian

    @cached_property
    def laplacian_phi(self):
        return self.phi_topology.laplacian

    @property
    def has_line_dynamics(self):
        return bool(self.dc_lines) and all(ln.l is not None and ln.c is not None for ln in self.dc_lines)

    def with_gains(self, **values):
        """Copy with gain fields overridden by scalars or per-node arrays."""
        cols = {name: np.broadcast_to(np.asarray(v, dtype=float), (self.n,)) for name, v in values.items()}
        gains = tuple(
            replace(g, **{name: float(col[i]) for name, col in cols.items()})
            for i, g in enumerate(self.gains)
        )
        return replace(self, gains=gains)

    def with_areas(self, **values):
        cols = {name: np.broadcast_to(np.asarray(v, dtype=float), (self.n,)) for name, v in values.items()}
        areas = tuple(
            replace(a, **{name: float(col[i]) for name, col in cols.items()})
            for i, a in enumerate(self.areas)
        )
        return replace(self, areas=areas)


# -- controller laws -------------------------------------------------------


def generation_control(omega, eta_self, eta_neighbors, gains, omega_ref=1.0):
    """Distributed PI generation controller of one area.

    ``eta_neighbors`` is a sequence of ``(c_eta_ij, eta_j)`` pairs.
    Returns ``(p_gen, eta_dot)``.
    """
    dw = omega - omega_ref
    p_gen = -gains.k_droop * dw - gains.k_v / gains.k_omega * gains.k_droop_i * eta_self
    eta_dot = gains.k_droop_i * dw - sum(w * (eta_self - e) for w, e in eta_neighbors)
    return p_gen, eta_dot


def converter_control(omega, v, phi_self, phi_neighbors, gains, v_ref=1.0, omega_ref=1.0):
    """Converter power-injection controller of one terminal.

    The ``phi_dot`` law uses the frequency deviation; with deviation
    coordinates this is the closed-loop ``(K^V)^-1 K^omega omega_hat`` term.
    Returns ``(p_inj, phi_dot)``.
    """
    dw = omega - omega_ref
    p_inj = (
        gains.k_omega * dw
        + gains.k_v * (v_ref - v)
        + sum(w * (phi_self - p) for w, p in phi_neighbors)
    )
    phi_dot = gains.k_omega / gains.k_v * dw - gains.gamma * phi_self
    return p_inj, phi_dot


def injected_current(p_inj, v, mode="linearized", v_nom=1.0, v_min=V_MIN):
    """DC current delivered by a converter injecting ``p_inj``.

    ``mode="exact"`` divides by the terminal voltage, ``"linearized"`` by
    the global nominal voltage.
    """
    if mode == "linearized":
        return p_inj / v_nom
    if mode == "exact":
        v_arr = np.asarray(v, dtype=float)
        if np.any(v_arr < v_min):
            node = int(np.argmin(v_arr)) if v_arr.ndim else 0
            raise VoltageCollapseError(float("nan"), node, float(np.min(v_arr)), v_min)
        return p_inj / v
    raise ValueError(f"unknown mode {mode!r}")


def generation_power(sd, omega_hat, eta):
    """Vectorised ``P^gen`` for stacked (or sample-stacked) states."""
    return -sd.k_droop * omega_hat - sd.k_v / sd.k_omega * sd.k_droop_i * eta


def injection_power(sd, omega_hat, v_hat, phi):
    """Vectorised ``P^inj``; ``phi`` is the full (non-reduced) state."""
    lap = sd.laplacian_phi
    return sd.k_omega * omega_hat - sd.k_v * v_hat + phi @ lap.T


# -- closed-loop assembly --------------------------------------------------


@dataclass(frozen=True)
class ClosedLoopSystem:
    """Linear closed loop ``x' = A x + B P^m``.

    ``layout`` maps block names to slices of the state vector. ``s`` is the
    orthonormal complement used by the reduced form (``None`` when full).
    """

    a: np.ndarray
    b: np.ndarray
    layout: dict
    reduced: bool
    system: SystemDescription
    s: Optional[np.ndarray] = None

    @property
    def dim(self):
        return self.a.shape[0]

    def state_names(self):
        names = [None] * self.dim
        for block, sl in self.layout.items():
            for k, idx in enumerate(range(sl.start, sl.stop)):
                names[idx] = f"{block}_{k + 1}"
        return names


def _layout(n, last, width):
    return {
        "omega": slice(0, n),
        "v": slice(n, 2 * n),
        "eta": slice(2 * n, 3 * n),
        last: slice(3 * n, 3 * n + width),
    }


def complement_basis(n):
    """``S`` for ``n >= 2``; an empty ``(1, 0)`` basis for a single node."""
    if n == 1:
        return np.zeros((1, 0))
    return orthonormal_complement(n)


def _blocks(sd):
    n = sd.n
    minv = np.diag(1.0 / sd.m)
    e = np.diag(1.0 / sd.c)
    kw, kv, kd, kdi = (np.diag(x) for x in (sd.k_omega, sd.k_v, sd.k_droop, sd.k_droop_i))
    vn = sd.v_nom
    lr, le, lp = sd.laplacian_r, sd.laplacian_eta, sd.laplacian_phi
    rows_w = (
        minv @ -(kd + kw),
        minv @ kv,
        minv @ -(kv @ np.linalg.inv(kw) @ kdi),
        -minv @ lp,
    )
    rows_v = (e @ kw / vn, -e @ (lr + kv / vn), np.zeros((n, n)), e @ lp / vn)
    rows_eta = (kdi, np.zeros((n, n)), -le, np.zeros((n, n)))
    rows_phi = (np.linalg.inv(kv) @ kw, np.zeros((n, n)), np.zeros((n, n)), -sd.gamma * np.eye(n))
    return minv, (rows_w, rows_v, rows_eta, rows_phi)


def assemble_full(sd):
    """4n-state closed loop in ``(omega_hat, v_hat, eta, phi)``."""
    n = sd.n
    minv, rows = _blocks(sd)
    a = np.block([list(r) for r in rows])
    b = np.vstack([minv, np.zeros((3 * n, n))])
    return ClosedLoopSystem(a=a, b=b, layout=_layout(n, "phi", n), reduced=False, system=sd)


def assemble_reduced(sd):
    """(4n-1)-state closed loop in ``(omega_hat, v_hat, eta, S^T phi)``."""
    n = sd.n
    s = complement_basis(n)
    minv, (rw, rv, re, rp) = _blocks(sd)
    a = np.block([
        [rw[0], rw[1], rw[2], rw[3] @ s],
        [rv[0], rv[1], rv[2], rv[3] @ s],
        [re[0], re[1], re[2], re[3] @ s],
        [s.T @ rp[0], s.T @ rp[1], s.T @ rp[2], -sd.gamma * np.eye(n - 1)],
    ])
    b = np.vstack([minv, np.zeros((3 * n - 1, n))])
    return ClosedLoopSystem(a=a, b=b, layout=_layout(n, "phi_pp", n - 1), reduced=True, system=sd, s=s)


def reduce_state(sd, x_full):
    """Map full-layout state(s) to reduced coordinates (last axis)."""
    x_full = np.asarray(x_full, dtype=float)
    n = sd.n
    s = complement_basis(n)
    head = x_full[..., : 3 * n]
    return np.concatenate([head, x_full[..., 3 * n : 4 * n] @ s], axis=-1)


def line_incidence(sd):
    """Incidence matrix of the DC lines in ``sd.dc_lines`` order."""
    b = np.zeros((sd.n, len(sd.dc_lines)))
    for k, ln in enumerate(sd.dc_lines):
        b[ln.i, k] = 1.0
        b[ln.j, k] = -1.0
    return b
