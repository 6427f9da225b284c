"""Adaptive propagation with dense output and section crossings.

All public entry points accept a ``field`` name ("circular" or
"elliptic") and run the compiled DOP853 core in ``_dop853``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import _dop853 as core
from .dynamics import (
    SYSTEM_ACTION,
    SYSTEM_CIRCULAR,
    SYSTEM_ELLIPTIC,
    SYSTEM_VARIATIONAL,
    ModelParams,
    energy_ch4bp,
)
from .errors import CollisionError, NoCrossingError, StiffnessError, TangencyError

FIELDS = {"circular": SYSTEM_CIRCULAR, "elliptic": SYSTEM_ELLIPTIC, "action": SYSTEM_ACTION}
COORDINATES = {"x": 0, "y": 1, "px": 2, "py": 3}


@dataclass(frozen=True)
class IntegratorConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_step: float = np.inf
    event_tol: float = 1e-12
    max_time: float = 200.0
    r_min: float = 1e-6
    max_steps: int = 2_000_000
    tangency_tol: float = 1e-10

    def __post_init__(self):
        if min(self.abs_tol, self.rel_tol, self.event_tol) <= 0.0 or self.max_step <= 0.0:
            raise ValueError("tolerances and max_step must be positive")
        if self.event_tol > self.abs_tol * 1e3:
            raise ValueError("event_tol must not exceed 1e3 * abs_tol")

    def scaled(self, factor: float) -> "IntegratorConfig":
        """Copy with both error tolerances multiplied by ``factor``."""
        return replace(self, abs_tol=self.abs_tol * factor, rel_tol=self.rel_tol * factor)


@dataclass(frozen=True)
class SectionSpec:
    """Hyperplane ``normal . z = offset`` in (x, y, px, py).

    ``direction`` is +1 (event increasing in time), -1 or 0 (either).  The
    optional guard keeps only crossings with ``guard_sign * guard_normal . z > 0``.
    """

    normal: tuple = (0.0, 1.0, 0.0, 0.0)
    offset: float = 0.0
    direction: int = 0
    guard_normal: tuple = (0.0, 0.0, 0.0, 0.0)
    guard_sign: float = 0.0
    name: str = ""

    @classmethod
    def coordinate(cls, coord: str, value: float = 0.0, direction: int = 0, guard: tuple | None = None, name: str = ""):
        normal = np.zeros(4)
        normal[COORDINATES[coord]] = 1.0
        guard_normal = np.zeros(4)
        guard_sign = 0.0
        if guard is not None:
            guard_normal[COORDINATES[guard[0]]] = 1.0
            guard_sign = float(np.sign(guard[1]))
        return cls(tuple(normal), float(value), int(direction), tuple(guard_normal), guard_sign, name or coord)

    def event(self, state) -> float:
        return float(np.dot(self.normal, np.asarray(state)[..., :4].T))

    def guard_ok(self, state) -> bool:
        if self.guard_sign == 0.0:
            return True
        return self.guard_sign * float(np.dot(self.guard_normal, np.asarray(state)[:4])) > 0.0


# {y = 0, py < 0}: homoclinic section
SECTION_X = SectionSpec.coordinate("y", 0.0, 0, guard=("py", -1), name="S_x")
# {x = 0, px > 0}: heteroclinic section
SECTION_Y = SectionSpec.coordinate("x", 0.0, 0, guard=("px", +1), name="S_y")


@dataclass(frozen=True)
class Trajectory:
    """Accepted integrator nodes plus per-step dense-output coefficients."""

    t: np.ndarray
    coeffs: np.ndarray = field(repr=False)
    end_state: np.ndarray = field(repr=False)

    @property
    def states(self) -> np.ndarray:
        if self.coeffs.shape[0] == 0:
            return self.end_state[None, :]
        return np.vstack([self.coeffs[:, 0, :], self.end_state[None, :]])

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def t1(self) -> float:
        return float(self.t[-1])

    def __len__(self):
        return len(self.t)

    def __call__(self, tq):
        """Dense evaluation; scalar input gives one state, arrays give rows."""
        tq_arr = np.atleast_1d(np.asarray(tq, dtype=float))
        if self.coeffs.shape[0] == 0:
            out = np.repeat(self.end_state[None, :], tq_arr.size, axis=0)
        else:
            out = core.dense_eval(self.t, self.coeffs, np.ascontiguousarray(tq_arr.ravel()))
        return out[0] if np.ndim(tq) == 0 else out

    def to_csv(self, path, params: ModelParams, times=None):
        times = self.t if times is None else np.asarray(times)
        states = self(times)[:, :4]
        xdot = states[:, 2] + states[:, 1]
        ydot = states[:, 3] - states[:, 0]
        h = energy_ch4bp(states, params)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "px", "py", "xdot", "ydot", "h"])
            for row in zip(times, *states.T, xdot, ydot, h):
                w.writerow([f"{v:.17g}" for v in row])


_NO_SECTION = (np.zeros(4), 0.0, 0, np.zeros(4), 0.0)


def _raw(kind, params, t0, y0, t1, cfg, record, section=None, n_crossings=0):
    if section is None:
        normal, offset, direction, gnormal, gsign = _NO_SECTION
    else:
        normal = np.asarray(section.normal, dtype=float)
        offset, direction = section.offset, section.direction
        gnormal = np.asarray(section.guard_normal, dtype=float)
        gsign = section.guard_sign
    p = params if isinstance(params, np.ndarray) else params.as_array()
    return core.integrate(
        kind,
        p,
        float(t0),
        np.ascontiguousarray(y0, dtype=float),
        float(t1),
        cfg.rel_tol,
        cfg.abs_tol,
        float(cfg.max_step),
        cfg.r_min,
        record,
        normal,
        float(offset),
        int(direction),
        gnormal,
        float(gsign),
        int(n_crossings),
        int(cfg.max_steps),
        cfg.tangency_tol,
    )


def _raise_for(status, t, y):
    if status == core.STATUS_COLLISION:
        raise CollisionError(f"collision floor reached at t={t:.6g}, state={y[:4]}")
    if status == core.STATUS_STEP_UNDERFLOW:
        raise StiffnessError(f"step size underflow at t={t:.6g}")
    if status == core.STATUS_MAX_STEPS:
        raise StiffnessError(f"step budget exhausted at t={t:.6g}")


def propagate(field_name, start, t_span, params: ModelParams, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate ``field_name`` over ``t_span`` and keep the dense output."""
    cfg = cfg or IntegratorConfig()
    kind = FIELDS[field_name] if isinstance(field_name, str) else int(field_name)
    t0, t1 = t_span
    status, t, y, t_nodes, coeffs, _, _ = _raw(kind, params, t0, start, t1, cfg, True)
    _raise_for(status, t, y)
    return Trajectory(t_nodes.copy(), coeffs.copy(), y.copy())


def flow(field_name, start, t_span, params, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Endpoint only (no dense storage)."""
    cfg = cfg or IntegratorConfig()
    kind = FIELDS[field_name] if isinstance(field_name, str) else int(field_name)
    status, t, y, *_ = _raw(kind, params, t_span[0], start, t_span[1], cfg, False)
    _raise_for(status, t, y)
    return y


@dataclass(frozen=True)
class Crossing:
    state: np.ndarray
    time: float
    trajectory: Trajectory | None = None


def flow_to_section(
    field_name,
    start,
    section: SectionSpec,
    n_crossings: int,
    params,
    cfg: IntegratorConfig | None = None,
    t0: float = 0.0,
    backward: bool = False,
    record: bool = False,
    allow_tangency: bool = False,
) -> Crossing:
    """State and time of the n-th guarded crossing after ``t0`` (start excluded)."""
    cfg = cfg or IntegratorConfig()
    kind = FIELDS[field_name] if isinstance(field_name, str) else int(field_name)
    t1 = t0 - cfg.max_time if backward else t0 + cfg.max_time
    status, t, y, t_nodes, coeffs, _, _ = _raw(kind, params, t0, start, t1, cfg, record, section, n_crossings)
    if status == core.STATUS_DONE:
        raise NoCrossingError(f"no crossing #{n_crossings} of {section.name or 'section'} within |t| <= {cfg.max_time}")
    if status == core.STATUS_TANGENCY and not allow_tangency:
        raise TangencyError(f"tangential crossing of {section.name or 'section'} at t={t:.6g}")
    _raise_for(status, t, y)
    traj = Trajectory(t_nodes.copy(), coeffs.copy(), y.copy()) if record else None
    return Crossing(y.copy(), float(t), traj)


def propagate_with_stm(start, t_span, params, cfg: IntegratorConfig | None = None, stm0=None):
    """Joint propagation of a state and its 4x4 state-transition matrix."""
    cfg = cfg or IntegratorConfig()
    z0 = np.concatenate([np.asarray(start, dtype=float)[:4], (np.eye(4) if stm0 is None else np.asarray(stm0)).ravel()])
    status, t, y, *_ = _raw(SYSTEM_VARIATIONAL, params, t_span[0], z0, t_span[1], cfg, False)
    _raise_for(status, t, y)
    return y[:4].copy(), y[4:].reshape(4, 4).copy()


def stm_trajectory(start, t_span, params, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Dense trajectory of the 20-dimensional variational system."""
    cfg = cfg or IntegratorConfig()
    z0 = np.concatenate([np.asarray(start, dtype=float)[:4], np.eye(4).ravel()])
    return propagate(SYSTEM_VARIATIONAL, z0, t_span, params, cfg)
