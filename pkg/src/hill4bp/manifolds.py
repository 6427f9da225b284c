"""Invariant manifolds of Lyapunov orbits, their section cuts and symmetric connections."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _dop853 as core
from .dynamics import (
    SYSTEM_CIRCULAR,
    ModelParams,
    apply_symmetry,
    effective_potential,
    energy_ch4bp,
    to_velocity,
)
from .errors import EmptyCutError, ResolutionError, SeedingError
from .integrator import IntegratorConfig, SectionSpec, _raw
from .orbits import PeriodicOrbit

DEFAULT_DISPLACEMENT = 1e-6
DEFAULT_SEEDS = 2000
SYMMETRY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ManifoldBranch:
    """Linear seeds of one branch of W^u or W^s along the orbit.

    ``branch_sign`` +1 is the inner branch: at the anchor the seed offset
    points towards the small primary (x component of sign -sign(x*)).
    """

    orbit: PeriodicOrbit
    kind: str
    branch_sign: int
    displacement: float
    phases: np.ndarray = field(repr=False)
    seeds: np.ndarray = field(repr=False)
    energy_errors: np.ndarray = field(repr=False)

    @property
    def orientation(self) -> float:
        vu, vs = self.orbit.eigenvectors()
        v0 = vu if self.kind == "unstable" else vs
        return float(self.branch_sign * -np.sign(self.orbit.x_star) * np.sign(v0[0]))

    @property
    def time_direction(self) -> int:
        return 1 if self.kind == "unstable" else -1

    def seed_at(self, phase, displacement: float | None = None) -> np.ndarray:
        """Seed at arbitrary phase(s) with the branch orientation."""
        d = self.displacement if displacement is None else displacement
        phase = np.asarray(phase, dtype=float)
        base = self.orbit.state_at(phase)
        vec = self.orbit.transported_eigenvectors(phase, self.kind)
        out = base + self.orientation * d * vec
        return out[0] if phase.ndim == 0 else out

    def __len__(self):
        return len(self.phases)


def seed_manifold(
    orbit: PeriodicOrbit,
    kind: str = "unstable",
    branch_sign: int = 1,
    displacement: float = DEFAULT_DISPLACEMENT,
    n_seeds: int = DEFAULT_SEEDS,
    cfg: IntegratorConfig | None = None,
) -> ManifoldBranch:
    """Seeds displaced along the STM-transported monodromy eigenvector."""
    if kind not in ("unstable", "stable"):
        raise ValueError("kind must be 'unstable' or 'stable'")
    if branch_sign not in (1, -1):
        raise ValueError("branch_sign must be +1 or -1")
    if displacement < 0.0 or n_seeds < 1:
        raise ValueError("displacement must be >= 0 and n_seeds >= 1")
    spectrum = orbit.monodromy_spectrum
    lam = spectrum[0]
    if abs(lam.imag) > 1e-9 or abs(lam.real) <= 1.0 + 1e-6:
        raise SeedingError(f"monodromy is not hyperbolic (leading multiplier {lam})")
    phases = np.arange(n_seeds) / n_seeds
    branch = ManifoldBranch(orbit, kind, int(branch_sign), float(displacement), phases, np.empty((0, 4)), np.empty(0))
    seeds = branch.seed_at(phases)
    if seeds.ndim == 1:
        seeds = seeds[None, :]
    errors = energy_ch4bp(seeds, orbit.params) - orbit.energy
    return ManifoldBranch(orbit, kind, int(branch_sign), float(displacement), phases, seeds, np.atleast_1d(errors))


# ---------------------------------------------------------------------------
# section cuts


def _free_axes(section: SectionSpec):
    """(position index fixed by the section, free position index)."""
    normal = np.asarray(section.normal, dtype=float)
    nz = np.flatnonzero(normal)
    if len(nz) != 1 or nz[0] > 1 or section.offset != 0.0:
        raise ValueError("symmetric searches need a coordinate-axis section x = 0 or y = 0")
    fixed = int(nz[0])
    return fixed, 1 - fixed


def symmetry_for_section(section: SectionSpec) -> str:
    """Reversor whose fixed set lies in the section: S on y = 0, S' on x = 0."""
    fixed, _ = _free_axes(section)
    return "S" if fixed == 1 else "S'"


def symmetric_coordinate(states, section: SectionSpec):
    """Velocity of the free coordinate: xdot on y = 0, ydot on x = 0."""
    _, free = _free_axes(section)
    return to_velocity(states)[..., 2 + free]


@dataclass(frozen=True, eq=False)
class SectionCut:
    branch: ManifoldBranch
    section: SectionSpec
    cut_index: int
    phases: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    dropped: np.ndarray = field(repr=False)
    seed_index: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.phases)

    def coordinates(self) -> np.ndarray:
        """(free position, its velocity): (x, xdot) on y = 0, (y, ydot) on x = 0."""
        normal = np.asarray(self.section.normal)
        free = 1 - int(np.argmax(np.abs(normal[:2])))
        v = to_velocity(self.states)
        return np.column_stack([v[:, free], v[:, 2 + free]])

    def energy_errors(self) -> np.ndarray:
        return energy_ch4bp(self.states, self.branch.orbit.params) - self.branch.orbit.energy

    def contiguous(self, i: int) -> bool:
        """True if cut points i and i + 1 come from neighbouring seeds."""
        n = len(self.branch.phases)
        return (self.seed_index[i + 1] - self.seed_index[i]) % n == 1

    def to_csv(self, path, curve_id: int = 0):
        v = to_velocity(self.states)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["curve", "seed_phase", "flight_time", "x", "y", "px", "py", "xdot", "ydot"])
            for ph, t, s, vv in zip(self.phases, self.times, self.states, v):
                w.writerow([curve_id] + [f"{val:.17g}" for val in (ph, t, *s, vv[2], vv[3])])


def _cut_one(branch, seed, section, cut_index, cfg, record=False):
    horizon = branch.time_direction * cfg.max_time
    return _raw(SYSTEM_CIRCULAR, branch.orbit.params, 0.0, seed, horizon, cfg, record, section, cut_index)


def globalize_to_cut(
    branch: ManifoldBranch, section: SectionSpec, cut_index: int = 1, cfg: IntegratorConfig | None = None
) -> SectionCut:
    """Propagate every seed to its ``cut_index``-th guarded crossing."""
    cfg = cfg or branch.orbit.cfg
    if cut_index < 1:
        raise ValueError("cut_index must be >= 1")
    keep, states, times, dropped = [], [], [], []
    for k, seed in enumerate(branch.seeds):
        status, t, y, *_ = _cut_one(branch, seed, section, cut_index, cfg)
        if status in (core.STATUS_EVENT, core.STATUS_TANGENCY):
            keep.append(k)
            states.append(y[:4].copy())
            times.append(t)
        else:
            dropped.append(k)
    if not keep:
        raise EmptyCutError(f"no seed of the {branch.kind} branch reached crossing #{cut_index}")
    keep = np.array(keep)
    return SectionCut(
        branch,
        section,
        cut_index,
        branch.phases[keep],
        np.array(states),
        np.array(times),
        branch.phases[np.array(dropped, dtype=int)],
        keep,
    )


# ---------------------------------------------------------------------------
# tangency locus


def tangency_curve(h: float, section: SectionSpec, params: ModelParams, coords=None) -> np.ndarray:
    """States on the section whose crossing velocity vanishes, at energy h.

    On y = 0 this is {ydot = 0} (py = x); on x = 0 it is {xdot = 0}
    (px = -y).  Rows are (x, y, px, py), both signs of the free velocity.
    """
    fixed, free = _free_axes(section)
    coords = np.linspace(-1.5, 1.5, 3001) if coords is None else np.asarray(coords, dtype=float)
    coords = coords[np.abs(coords) > 1e-12]
    pos = np.zeros((len(coords), 2))
    pos[:, free] = coords
    omega = effective_potential(pos[:, 0], pos[:, 1], params)
    # energy = v^2 / 2 - Omega_eff with the only velocity along the free axis
    arg = 2.0 * (h + omega)
    ok = arg >= 0.0
    if not np.any(ok):
        return np.empty((0, 4))
    speed = np.sqrt(arg[ok])
    rows = []
    for sign in (1.0, -1.0):
        v = np.zeros((ok.sum(), 4))
        v[:, :2] = pos[ok]
        v[:, 2 + free] = sign * speed
        rows.append(v)
    vel = np.vstack(rows)
    # back to momenta: px = xdot - y, py = ydot + x
    out = vel.copy()
    out[:, 2] = vel[:, 2] - vel[:, 1]
    out[:, 3] = vel[:, 3] + vel[:, 0]
    return out


# ---------------------------------------------------------------------------
# symmetric connections


@dataclass(frozen=True, eq=False)
class ConnectionCandidate:
    """Symmetric intersection of W^u(source) with W^s(target) on a section."""

    state: np.ndarray
    kind: str
    source: PeriodicOrbit = field(repr=False)
    target: PeriodicOrbit = field(repr=False)
    symmetric: bool
    seed_phase: float
    flight_time: float
    branch: ManifoldBranch = field(repr=False)
    section: SectionSpec = field(repr=False)
    cut_index: int
    residual: float

    @property
    def velocity_form(self) -> np.ndarray:
        return to_velocity(self.state)

    @property
    def reversor(self) -> str:
        return symmetry_for_section(self.section)

    def partner(self) -> np.ndarray:
        """S-image of the point (the hat-partner in the heteroclinic case)."""
        return apply_symmetry(self.state, "S")


def _refine_phase(branch, section, cut_index, cfg, a, b, displacement=None):
    def g(phase):
        seed = branch.seed_at(phase, displacement)
        status, t, y, *_ = _cut_one(branch, seed, section, cut_index, cfg)
        if status not in (core.STATUS_EVENT, core.STATUS_TANGENCY):
            raise ResolutionError("crossing lost while refining")
        return float(symmetric_coordinate(y[:4], section))

    return brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def find_symmetric_connection(
    cut: SectionCut, params: ModelParams | None = None, cfg: IntegratorConfig | None = None, tol: float = SYMMETRY_TOL
) -> list[ConnectionCandidate]:
    """Refine every sign change of the symmetric coordinate along the cut.

    Candidates are ordered by decreasing |free coordinate| (z1 first).
    """
    branch = cut.branch
    cfg = cfg or branch.orbit.cfg
    if branch.kind != "unstable":
        raise ValueError("symmetric search runs on an unstable-branch cut")
    reversor = symmetry_for_section(cut.section)
    kind = "homoclinic" if reversor == "S" else "heteroclinic"
    target = branch.orbit if kind == "homoclinic" else branch.orbit.mirrored()
    vals = symmetric_coordinate(cut.states, cut.section)
    found = []
    for i in range(len(cut) - 1):
        if not cut.contiguous(i) or np.sign(vals[i]) == np.sign(vals[i + 1]):
            continue
        a, b = cut.phases[i], cut.phases[i + 1]
        if b < a:
            b += 1.0
        try:
            phase = _refine_phase(branch, cut.section, cut.cut_index, cfg, a, b)
        except (ResolutionError, ValueError):
            continue
        seed = branch.seed_at(phase)
        status, t, y, *_ = _cut_one(branch, seed, cut.section, cut.cut_index, cfg)
        residual = abs(float(symmetric_coordinate(y[:4], cut.section)))
        if residual > tol:
            # a jump of the cut between seeds, not a genuine zero
            continue
        state = y[:4].copy()
        found.append(
            ConnectionCandidate(
                state, kind, branch.orbit, target, True, float(np.mod(phase, 1.0)), float(t), branch, cut.section,
                cut.cut_index, residual,
            )
        )
    _, free = _free_axes(cut.section)
    found.sort(key=lambda c: -abs(c.state[free]))
    return found


def transversality_angle(cut_u: SectionCut, cut_s: SectionCut, candidate: ConnectionCandidate, max_gap: float = 1e-2) -> float:
    """Angle between the two cut curves at the candidate (section coordinates)."""
    p = _section_point(cut_u, candidate.state)
    tu = _tangent(cut_u, p, max_gap)
    ts = _tangent(cut_s, p, max_gap)
    # atan2 keeps tiny angles accurate where arccos of a rounded cosine does not
    cross = abs(float(tu[0] * ts[1] - tu[1] * ts[0]))
    return float(np.arctan2(cross, abs(float(np.dot(tu, ts)))))


def _section_point(cut, state):
    normal = np.asarray(cut.section.normal)
    free = 1 - int(np.argmax(np.abs(normal[:2])))
    v = to_velocity(state)
    return np.array([v[free], v[2 + free]])


def _tangent(cut, point, max_gap):
    pts = cut.coordinates()
    a, b = pts[:-1], pts[1:]
    seg = b - a
    length2 = np.sum(seg**2, axis=1)
    s = np.clip(np.sum((point - a) * seg, axis=1) / np.where(length2 > 0, length2, 1.0), 0.0, 1.0)
    dist = np.linalg.norm(a + s[:, None] * seg - point, axis=1)
    ok = np.array([cut.contiguous(i) for i in range(len(cut) - 1)]) & (length2 > 0)
    if not np.any(ok):
        raise ResolutionError("cut has no resolved segments")
    dist = np.where(ok, dist, np.inf)
    i = int(np.argmin(dist))
    if dist[i] > max_gap or np.sqrt(length2[i]) > 10 * max_gap:
        raise ResolutionError(f"cut not resolved near the point (gap {dist[i]:.2e}, segment {np.sqrt(length2[i]):.2e})")
    return seg[i] / np.sqrt(length2[i])
