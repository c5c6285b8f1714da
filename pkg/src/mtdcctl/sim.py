"""Time-domain simulation of the closed loop.

Three models are available:

``linear``
    The 4n-state linear closed loop, propagated exactly between input
    changes with the matrix exponential of the augmented system.
``nonlinear``
    Injected currents follow ``I = P / V`` at the actual terminal voltage.
    Integrated with the L-stable Radau IIA method.
``pi-lines``
    ``nonlinear`` plus one series R-L current state per DC line, with half
    of each line's shunt capacitance lumped onto its end terminals.
"""

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as sla
from scipy.integrate import Radau

from .analysis import check_assumptions, equilibrium, lyapunov_weight
from .exceptions import (
    PreconditionError,
    SimulationError,
    SingularSystemError,
    StiffnessError,
    ValidationError,
    VoltageCollapseError,
)
from .model import (
    V_MIN,
    assemble_full,
    assemble_reduced,
    generation_power,
    injection_power,
    line_incidence,
    reduce_state,
)

MODELS = ("linear", "nonlinear", "pi-lines")
MODEL_ALIASES = {"nonlinear+pi-lines": "pi-lines"}
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class Event:
    """Step change ``delta_p_m`` of the load power at ``node`` (0-based)."""

    time: float
    node: int
    delta_p_m: float


@dataclass(frozen=True)
class Scenario:
    events: tuple = ()
    t_end: float = 40.0
    dt_output: float = 0.01
    model: str = "linear"
    initial_state: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "model", MODEL_ALIASES.get(self.model, self.model))
        if self.model not in MODELS:
            raise ValidationError(f"unknown model {self.model!r}; expected one of {MODELS}", "model")
        if not self.t_end > 0:
            raise ValidationError(f"must be positive, got {self.t_end!r}", "t_end")
        if not self.dt_output > 0:
            raise ValidationError(f"must be positive, got {self.dt_output!r}", "dt_output")
        times = [ev.time for ev in self.events]
        if times != sorted(times):
            raise ValidationError("events must be sorted by time", "events")
        for k, ev in enumerate(self.events):
            if not 0 <= ev.time <= self.t_end:
                raise ValidationError(f"event time {ev.time} outside [0, t_end]", f"events[{k}].time")

    @property
    def n_samples(self):
        return int(math.floor(self.t_end / self.dt_output + _TIME_EPS)) + 1

    def sample_times(self):
        return np.arange(self.n_samples) * self.dt_output

    def final_p_m(self, base):
        p = np.array(base, dtype=float)
        for ev in self.events:
            p[ev.node] += ev.delta_p_m
        return p


@dataclass(frozen=True)
class Trajectory:
    """Sampled simulation output; ``state`` rows follow ``layout``."""

    t: np.ndarray
    state: np.ndarray
    layout: dict
    model: str
    p_m: np.ndarray
    p_gen: np.ndarray
    p_inj: np.ndarray
    w_lyap: Optional[np.ndarray] = None
    error_estimate: float = 0.0
    n_steps: int = 0
    meta: dict = field(default_factory=dict)

    def block(self, name):
        return self.state[:, self.layout[name]]

    @property
    def omega_dev(self):
        return self.block("omega")

    @property
    def v_dev(self):
        return self.block("v")

    @property
    def eta(self):
        return self.block("eta")

    @property
    def phi(self):
        return self.block("phi")


def _check_events(sd, sc):
    for k, ev in enumerate(sc.events):
        if not 0 <= ev.node < sd.n:
            raise ValidationError(f"node {ev.node + 1} out of range", f"events[{k}].node")


def _segments(sd, sc):
    """``[(t_start, t_stop, p_m), ...]`` with piecewise-constant load power."""
    p = sd.p_load.copy()
    bounds = []
    t0 = 0.0
    for ev in sc.events:
        if ev.time > t0 + _TIME_EPS:
            bounds.append((t0, ev.time, p.copy()))
            t0 = ev.time
        p[ev.node] += ev.delta_p_m
    bounds.append((t0, sc.t_end, p.copy()))
    return bounds


def _initial(sc, dim, n_core):
    x0 = np.zeros(dim)
    if sc.initial_state is not None:
        init = np.asarray(sc.initial_state, dtype=float)
        if init.shape not in ((n_core,), (dim,)):
            raise ValidationError(f"initial state has {init.size} entries, expected {n_core}", "initial_state")
        x0[: init.size] = init
    return x0


class _Propagator:
    """Exact zero-order-hold propagation of ``x' = A x + B u``."""

    def __init__(self, a, b):
        self.a, self.b = a, b
        self._cache = {}

    def __call__(self, h):
        key = round(h, 15)
        if key not in self._cache:
            n, k = self.b.shape
            aug = np.zeros((n + k, n + k))
            aug[:n, :n] = self.a * h
            aug[:n, n:] = self.b * h
            e = sla.expm(aug)
            self._cache[key] = (e[:n, :n], e[:n, n:])
        return self._cache[key]

    def step(self, x, u, h):
        if h <= 0:
            return x
        phi, gam = self(h)
        return phi @ x + gam @ u


def propagate(cls, x0, times, segments):
    """Exact samples of ``x' = A x + B p_m`` for any closed-loop form.

    ``segments`` lists ``(t_start, t_stop, p_m)`` with piecewise-constant
    input; an input change at a sample time applies from that sample on.
    Returns ``(states, p_m per sample)``.
    """
    prop = _Propagator(cls.a, cls.b)
    t = np.asarray(times, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((t.size, cls.dim))
    pm = np.empty((t.size, cls.b.shape[1]))
    seg_idx = 0
    while seg_idx + 1 < len(segments) and segments[seg_idx][1] <= t[0] + _TIME_EPS:
        seg_idx += 1
    out[0] = x
    pm[0] = segments[seg_idx][2]
    for k in range(1, t.size):
        tau, target = t[k - 1], t[k]
        while True:
            stop = segments[seg_idx][1]
            if seg_idx + 1 < len(segments) and stop < target - _TIME_EPS:
                x = prop.step(x, segments[seg_idx][2], stop - tau)
                tau = stop
                seg_idx += 1
                continue
            x = prop.step(x, segments[seg_idx][2], target - tau)
            if seg_idx + 1 < len(segments) and abs(stop - target) <= _TIME_EPS:
                seg_idx += 1
            break
        out[k] = x
        pm[k] = segments[seg_idx][2]
    return out, pm


def _simulate_linear(sd, sc):
    cls = assemble_full(sd)
    t = sc.sample_times()
    out, pm = propagate(cls, _initial(sc, cls.dim, cls.dim), t, _segments(sd, sc))
    scale = max(1.0, float(np.max(np.abs(out))))
    err = t.size * cls.dim * np.finfo(float).eps * scale
    return out, cls.layout, pm, err, t.size - 1


class _NonlinearRhs:
    def __init__(self, sd, lines, v_min):
        self.sd = sd
        self.n = n = sd.n
        self.lines = lines
        self.v_min = v_min
        self.kw, self.kv, self.kd, self.kdi = sd.k_omega, sd.k_v, sd.k_droop, sd.k_droop_i
        self.m = sd.m
        self.vref = sd.v_ref
        self.lr, self.le, self.lp = sd.laplacian_r, sd.laplacian_eta, sd.laplacian_phi
        # nominal point: currents balancing the reference voltages
        self.i0 = self.lr @ self.vref
        self.p0 = self.vref * self.i0
        if lines:
            self.bl = line_incidence(sd)
            self.r = np.array([ln.r for ln in sd.dc_lines])
            self.ind = np.array([ln.l for ln in sd.dc_lines])
            c_eff = sd.c.copy()
            for ln in sd.dc_lines:
                c_eff[ln.i] += 0.5 * ln.c
                c_eff[ln.j] += 0.5 * ln.c
            self.c = c_eff
            self.dim = 4 * n + len(sd.dc_lines)
        else:
            self.c = sd.c
            self.dim = 4 * n
        self.sl = {
            "omega": slice(0, n),
            "v": slice(n, 2 * n),
            "eta": slice(2 * n, 3 * n),
            "phi": slice(3 * n, 4 * n),
        }
        if lines:
            self.sl["i_line"] = slice(4 * n, self.dim)
        self.jac_const = self._linear_jacobian()

    def _linear_jacobian(self):
        n, sl = self.n, self.sl
        j = np.zeros((self.dim, self.dim))
        w, v, e, p = sl["omega"], sl["v"], sl["eta"], sl["phi"]
        minv = 1.0 / self.m
        j[w, w] = np.diag(minv * (-self.kd - self.kw))
        j[w, v] = np.diag(minv * self.kv)
        j[w, e] = np.diag(minv * (-self.kv / self.kw * self.kdi))
        j[w, p] = -minv[:, None] * self.lp
        j[e, w] = np.diag(self.kdi)
        j[e, e] = -self.le
        j[p, w] = np.diag(self.kw / self.kv)
        j[p, p] = -self.sd.gamma * np.eye(n)
        cinv = 1.0 / self.c
        if self.lines:
            il = sl["i_line"]
            j[v, il] = -cinv[:, None] * self.bl
            j[il, v] = self.bl.T / self.ind[:, None]
            j[il, il] = np.diag(-self.r / self.ind)
        else:
            j[v, v] = -cinv[:, None] * self.lr
        return j

    def p_inj(self, x):
        sl = self.sl
        return self.kw * x[sl["omega"]] - self.kv * x[sl["v"]] + self.lp @ x[sl["phi"]]

    def __call__(self, t, x, p_m):
        sl = self.sl
        w, vh, eta, phi = (x[sl[k]] for k in ("omega", "v", "eta", "phi"))
        pg = -self.kd * w - self.kv / self.kw * self.kdi * eta
        pinj = self.kw * w - self.kv * vh + self.lp @ phi
        volt = self.vref + vh
        i_inj = (self.p0 + pinj) / volt
        dx = np.empty_like(x)
        dx[sl["omega"]] = (pg + p_m - pinj) / self.m
        if self.lines:
            ih = x[sl["i_line"]]
            dx[sl["v"]] = (-self.bl @ ih - self.i0 + i_inj) / self.c
            dx[sl["i_line"]] = (self.bl.T @ vh - self.r * ih) / self.ind
        else:
            dx[sl["v"]] = (-self.lr @ vh - self.i0 + i_inj) / self.c
        dx[sl["eta"]] = self.kdi * w - self.le @ eta
        dx[sl["phi"]] = self.kw / self.kv * w - self.sd.gamma * phi
        return dx

    def jacobian(self, t, x, p_m):
        sl = self.sl
        j = self.jac_const.copy()
        vh = x[sl["v"]]
        volt = self.vref + vh
        pinj = self.p_inj(x)
        cinv = 1.0 / self.c
        scale = (cinv / volt)[:, None]
        v = sl["v"]
        j[v, sl["omega"]] += scale * np.diag(self.kw)
        j[v, v] += scale * np.diag(-self.kv) - np.diag(cinv * (self.p0 + pinj) / volt**2)
        j[v, sl["phi"]] += scale * self.lp
        return j

    def check_voltage(self, t, x):
        volt = self.vref + x[self.sl["v"]]
        k = int(np.argmin(volt))
        if volt[k] < self.v_min:
            raise VoltageCollapseError(t, k, float(volt[k]), self.v_min)


def _simulate_nonlinear(sd, sc, rtol, atol, v_min):
    lines = sc.model == "pi-lines"
    if lines and not sd.has_line_dynamics:
        raise PreconditionError("pi-lines model needs inductance and capacitance on every DC line")
    rhs = _NonlinearRhs(sd, lines, v_min)
    t = sc.sample_times()
    x = _initial(sc, rhs.dim, 4 * sd.n)
    rhs.check_voltage(0.0, x)
    out = np.empty((t.size, rhs.dim))
    pm_out = np.empty((t.size, sd.n))
    filled = 0
    steps = 0
    scale = max(float(np.max(np.abs(x))), 1e-300)
    segs = _segments(sd, sc)
    for seg_no, (t_start, t_stop, p_m) in enumerate(segs):
        last = seg_no == len(segs) - 1
        horizon = t_stop + _TIME_EPS if last else t_stop - _TIME_EPS
        while filled < t.size and t[filled] <= t_start + _TIME_EPS:
            out[filled], pm_out[filled] = x, p_m
            filled += 1
        solver = Radau(
            lambda tt, y: rhs(tt, y, p_m),
            t_start,
            x,
            t_stop,
            rtol=rtol,
            atol=atol,
            jac=lambda tt, y: rhs.jacobian(tt, y, p_m),
        )
        while solver.status == "running":
            msg = solver.step()
            if solver.status == "failed":
                ev = np.linalg.eigvals(rhs.jacobian(solver.t, solver.y, p_m))
                fastest = ev[np.argmax(np.abs(ev.real))]
                raise StiffnessError(
                    f"integration failed at t={solver.t:.6g} s ({msg}); fastest mode "
                    f"lambda = {fastest.real:.4g}{fastest.imag:+.4g}j 1/s"
                )
            steps += 1
            rhs.check_voltage(solver.t, solver.y)
            scale = max(scale, float(np.max(np.abs(solver.y))))
            reach = min(solver.t + _TIME_EPS, horizon)
            if filled < t.size and t[filled] <= reach:
                dense = solver.dense_output()
                while filled < t.size and t[filled] <= reach:
                    tk = min(t[filled], solver.t)
                    out[filled] = dense(tk) if tk < solver.t else solver.y
                    pm_out[filled] = p_m
                    filled += 1
        x = solver.y.copy()
    if filled != t.size:
        raise SimulationError(f"only {filled} of {t.size} samples produced")  # pragma: no cover
    err = steps * (rtol * scale + atol)
    return out, dict(rhs.sl), pm_out, err, steps


def simulate(sd, sc, rtol=1e-8, atol=1e-10, v_min=V_MIN, lyapunov=True):
    """Simulate ``sd`` under scenario ``sc`` and return a :class:`Trajectory`."""
    _check_events(sd, sc)
    if sc.model == "linear":
        state, layout, pm, err, steps = _simulate_linear(sd, sc)
    else:
        state, layout, pm, err, steps = _simulate_nonlinear(sd, sc, rtol, atol, v_min)
    w = state[:, layout["omega"]]
    v = state[:, layout["v"]]
    eta = state[:, layout["eta"]]
    phi = state[:, layout["phi"]]
    traj = Trajectory(
        t=sc.sample_times(),
        state=state,
        layout=layout,
        model=sc.model,
        p_m=pm,
        p_gen=generation_power(sd, w, eta),
        p_inj=injection_power(sd, w, v, phi),
        error_estimate=float(err),
        n_steps=steps,
    )
    if lyapunov:
        traj = replace(traj, w_lyap=_lyapunov_or_none(traj, sd, sc))
    return traj


def _lyapunov_or_none(traj, sd, sc):
    a1, _ = check_assumptions(sd)
    if not a1.holds:
        return None
    try:
        eq = equilibrium(assemble_reduced(sd), sc.final_p_m(sd.p_load))
    except SingularSystemError:
        return None
    return lyapunov_along(traj, sd, eq).values


class LyapunovTrace(NamedTuple):
    values: np.ndarray
    nonincreasing: Optional[bool]


def lyapunov_along(traj, sd, eq, rtol=1e-9):
    """Lyapunov function along a trajectory, shifted to equilibrium ``eq``.

    ``nonincreasing`` is ``None`` unless the damping assumption holds, in
    which case it reports whether samples never rise by more than
    ``rtol * W(0)``.
    """
    a1, a2 = check_assumptions(sd)
    if not a1.holds:
        raise PreconditionError("the Lyapunov function needs L_phi proportional to L_R")
    p = lyapunov_weight(sd)
    core = traj.state[:, : 4 * sd.n]
    xbar = reduce_state(sd, core) - eq.x0
    w = 0.5 * np.einsum("ki,ij,kj->k", xbar, p, xbar)
    flag = None
    if a2.holds:
        tol = rtol * max(float(w[0]), np.finfo(float).tiny)
        flag = bool(np.all(np.diff(w) <= tol))
    return LyapunovTrace(w, flag)


@dataclass(frozen=True)
class SteadyStateMetrics:
    omega_dev: np.ndarray
    v: np.ndarray
    v_dev: np.ndarray
    p_gen: np.ndarray
    p_gen_spread: float
    p_gen_total: float
    settling_omega: list
    settling_v: list
    settling_p_gen: list
    tail_start: float

    @staticmethod
    def _worst(times):
        if any(t is None for t in times):
            return None
        return max(times)

    @property
    def voltage_settling_time(self):
        return self._worst(self.settling_v)

    @property
    def frequency_settling_time(self):
        return self._worst(self.settling_omega)

    @property
    def generation_settling_time(self):
        return self._worst(self.settling_p_gen)


SETTLING_BANDS = {"omega": 1e-4, "v": 1e-3, "p_gen": 1e-3}


def _settling(t, x, tail_mean, band, tail_idx):
    out = []
    for col in range(x.shape[1]):
        outside = np.nonzero(np.abs(x[:, col] - tail_mean[col]) > band)[0]
        if outside.size == 0:
            out.append(float(t[0]))
        elif outside[-1] >= tail_idx:
            out.append(None)
        else:
            out.append(float(t[outside[-1] + 1]))
    return out


def steady_state_metrics(traj, sd, tail_fraction=0.1):
    """Tail means, settling times and power-sharing spread of a trajectory.

    The tail is the last ``tail_fraction`` of the samples. A signal's
    settling time is the first sample after its last excursion outside the
    band around its tail mean; ``None`` marks signals still outside the
    band inside the tail window.
    """
    n_samples = traj.t.size
    n_tail = max(1, int(math.floor(tail_fraction * n_samples)))
    if n_samples < 2:
        raise PreconditionError("trajectory too short for a tail window")
    tail_idx = n_samples - n_tail
    sl = slice(tail_idx, None)
    w = traj.omega_dev
    v = traj.v_dev
    pg = traj.p_gen
    w_tail, v_tail, pg_tail = w[sl].mean(0), v[sl].mean(0), pg[sl].mean(0)
    return SteadyStateMetrics(
        omega_dev=w_tail,
        v=sd.v_ref + v_tail,
        v_dev=v_tail,
        p_gen=pg_tail,
        p_gen_spread=float(np.max(pg_tail) - np.min(pg_tail)),
        p_gen_total=float(np.sum(pg_tail)),
        settling_omega=_settling(traj.t, w, w_tail, SETTLING_BANDS["omega"], tail_idx),
        settling_v=_settling(traj.t, v, v_tail, SETTLING_BANDS["v"], tail_idx),
        settling_p_gen=_settling(traj.t, pg, pg_tail, SETTLING_BANDS["p_gen"], tail_idx),
        tail_start=float(traj.t[tail_idx]),
    )
