"""Foot-points, asymptotic phases and channels of symmetric connections.

A connection is stored as the exact integrator run from a seed on the
unstable fiber (distance ~1e-9 from the source orbit) to the symmetric
point z.  The forward half is the reversor image of that run, so the full
connection orbit is gamma(u) for u in [-t_f, t_f] with gamma(0) = z.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from . import _dop853 as core
from .dynamics import apply_symmetry, to_velocity
from .errors import ContinuationError, FootpointError, ResolutionError
from .integrator import IntegratorConfig, Trajectory, flow
from .manifolds import (
    ConnectionCandidate,
    _cut_one,
    find_symmetric_connection,
    globalize_to_cut,
    seed_manifold,
    symmetric_coordinate,
)
from .integrator import SECTION_X, SECTION_Y
from .orbits import OrbitFamily, PeriodicOrbit

FOOTPOINT_TOL = 1e-9
MAX_FLIGHT_PERIODS = 12.0


@dataclass(frozen=True, eq=False)
class ConnectionPoint:
    candidate: ConnectionCandidate = field(repr=False)
    source: PeriodicOrbit = field(repr=False)
    target: PeriodicOrbit = field(repr=False)
    theta_minus: float
    theta_plus: float
    delta_raw: float
    leg: Trajectory = field(repr=False)
    seed_phase: float
    seed_displacement: float
    seed_distance: float
    offset: float = 0.0

    @property
    def x_star(self) -> float:
        """x* of the L1 member of the pair (the family parameter)."""
        return abs(self.target.x_star)

    @property
    def period(self) -> float:
        return self.source.period

    @property
    def flight_time(self) -> float:
        return -self.leg.t0

    @property
    def delta(self) -> float:
        return float(np.mod(self.delta_raw, 1.0))

    @property
    def reversor(self) -> str:
        return self.candidate.reversor

    @property
    def u_range(self) -> tuple[float, float]:
        """Span of gamma around the reference point gamma(0) = state."""
        return -self.flight_time - self.offset, self.flight_time - self.offset

    def orbit_state(self, u):
        """gamma(u): the connection orbit, with the reversor image for the forward half."""
        u = np.asarray(u, dtype=float) + self.offset
        flat = np.atleast_1d(u)
        if np.any(np.abs(flat) > self.flight_time * (1 + 1e-12)):
            raise ValueError("time outside the recorded connection orbit")
        back = self.leg(-np.abs(flat))
        back = np.atleast_2d(back)
        fwd = flat > 0
        if np.any(fwd):
            back[fwd] = apply_symmetry(back[fwd], self.reversor)
        return back[0] if u.ndim == 0 else back

    @property
    def state(self) -> np.ndarray:
        return self.orbit_state(0.0)

    @property
    def z_minus(self) -> np.ndarray:
        return self.source.state_at(self.theta_minus)

    @property
    def z_plus(self) -> np.ndarray:
        return self.target.state_at(self.theta_plus)

    def shifted(self, s: float) -> "ConnectionPoint":
        """Same connection with reference point Phi^s(z)."""
        dphase = s / self.period
        return replace(
            self,
            theta_minus=float(np.mod(self.theta_minus + dphase, 1.0)),
            theta_plus=float(np.mod(self.theta_plus + dphase, 1.0)),
            offset=self.offset + s,
        )

    def anchor_footpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Phi^{-theta T}(z^-), Phi^{-theta T}(z^+): the charts' anchors by re-integration."""
        zm = flow("circular", self.z_minus, (0.0, -self.theta_minus * self.period), self.source.params, self.source.cfg)
        zp = flow("circular", self.z_plus, (0.0, -self.theta_plus * self.period), self.target.params, self.target.cfg)
        return zm, zp


def _symmetric_seed_phase(candidate, displacement, cfg, width=1e-3):
    """Seed phase whose run reaches the section exactly on the symmetric set."""
    branch, section, n_cut = candidate.branch, candidate.section, candidate.cut_index

    def g(phase):
        status, t, y, *_ = _cut_one(branch, branch.seed_at(phase, displacement), section, n_cut, cfg)
        if status not in (core.STATUS_EVENT, core.STATUS_TANGENCY):
            return np.nan
        return float(symmetric_coordinate(y[:4], section))

    phi = candidate.seed_phase
    while width < 0.25:
        a, b = phi - width, phi + width
        fa, fb = g(a), g(b)
        if np.isfinite(fa) and np.isfinite(fb) and np.sign(fa) != np.sign(fb):
            return brentq(g, a, b, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
        width *= 2.0
    raise FootpointError("lost the symmetric crossing when shrinking the seed displacement")


def compute_footpoints(
    candidate: ConnectionCandidate,
    source: PeriodicOrbit | None = None,
    target: PeriodicOrbit | None = None,
    cfg: IntegratorConfig | None = None,
    displacement: float | None = None,
) -> ConnectionPoint:
    """Asymptotic phases theta^-, theta^+ and the shift Delta of a symmetric candidate.

    The candidate is re-located from a seed 1/lambda times closer to the
    source orbit, and that run is kept as the backward leg.  theta^- comes
    from the nearest orbit point to the seed, theta^+ from the nearest
    target-orbit point to the reversor image of the seed.
    """
    source = source or candidate.source
    target = target or candidate.target
    cfg = cfg or source.cfg
    lam = source.floquet_multiplier
    d = candidate.branch.displacement / lam if displacement is None else displacement
    phase = _symmetric_seed_phase(candidate, d, cfg)
    branch = candidate.branch
    status, t_end, z, t_nodes, coeffs, *_ = _cut_one(
        branch, branch.seed_at(phase, d), candidate.section, candidate.cut_index, cfg, record=True
    )
    if status not in (core.STATUS_EVENT, core.STATUS_TANGENCY):
        raise FootpointError("connection run did not reach the section")
    t_f = float(t_end)
    if t_f > MAX_FLIGHT_PERIODS * source.period:
        raise FootpointError(f"flight time {t_f:.3f} exceeds {MAX_FLIGHT_PERIODS} periods")
    leg = Trajectory(t_nodes - t_end, coeffs.copy(), z.copy())
    seed = leg.start
    hit_minus, dist_minus = source.nearest_phase(seed)
    end = apply_symmetry(seed, candidate.reversor)
    hit_plus, dist_plus = target.nearest_phase(end)
    dist = max(dist_minus, dist_plus)
    if dist > FOOTPOINT_TOL:
        raise FootpointError(f"leg ends {dist:.2e} from the orbit, above {FOOTPOINT_TOL:.0e}")
    T = source.period
    theta_minus = float(np.mod(hit_minus + t_f / T, 1.0))
    theta_plus = float(np.mod(hit_plus - t_f / T, 1.0))
    # unreduced shift with theta^- in [0, 1) and theta^+ taken next to -theta^-
    plus_rep = theta_plus - np.round(theta_plus + theta_minus)
    return ConnectionPoint(
        candidate, source, target, theta_minus, theta_plus, float(plus_rep - theta_minus), leg, float(np.mod(phase, 1.0)),
        float(d), float(dist),
    )


def phase_shift(connection: ConnectionPoint) -> float:
    """Delta = theta^+ - theta^- mod 1."""
    return connection.delta


# ---------------------------------------------------------------------------
# channels

LABELS = {
    "hom-z1": ("homoclinic", 0),
    "hom-z2": ("homoclinic", 1),
    "het-z1": ("heteroclinic", 0),
    "het-z2": ("heteroclinic", 1),
}
# theta windows of the channels used for the diffusion checks
DEFAULT_WINDOWS = {"hom-z1": (-1.0, 0.0), "hom-z2": (-0.6, 0.4), "het-z1": (-1.0, 0.0), "het-z2": (-0.6, 0.4)}


def connection_cut(orbit_l1: PeriodicOrbit, kind: str, cfg: IntegratorConfig | None = None, n_seeds: int = 2000):
    """Inner unstable cut used for the search: 1st y = 0 cut (homoclinic) or 2nd x = 0 cut of the L2 orbit."""
    cfg = cfg or orbit_l1.cfg
    if kind == "homoclinic":
        source, section, n_cut = orbit_l1, SECTION_X, 1
    else:
        source, section, n_cut = orbit_l1.mirrored(), SECTION_Y, 2
    branch = seed_manifold(source, "unstable", 1, n_seeds=n_seeds, cfg=cfg)
    return globalize_to_cut(branch, section, n_cut, cfg)


def connection_for_orbit(
    orbit_l1: PeriodicOrbit, label: str, cfg: IntegratorConfig | None = None, n_seeds: int = 2000, cut=None
) -> ConnectionPoint:
    """Locate the labelled symmetric connection of one L1/L2 pair."""
    kind, which = LABELS[label]
    cfg = cfg or orbit_l1.cfg
    if cut is None:
        cut = connection_cut(orbit_l1, kind, cfg, n_seeds)
    source = cut.branch.orbit
    found = find_symmetric_connection(cut, source.params, cfg)
    if len(found) <= which:
        raise ResolutionError(f"{label}: only {len(found)} symmetric points on the cut at x*={orbit_l1.x_star}")
    return compute_footpoints(found[which], cfg=cfg)


@dataclass(frozen=True, eq=False)
class Channel:
    label: str
    connections: list = field(repr=False)
    window: tuple = (-1.0, 0.0)

    @property
    def x_star(self) -> np.ndarray:
        return np.array([c.x_star for c in self.connections])

    @property
    def theta_star(self) -> np.ndarray:
        """Offsets theta* with window = (theta^- + theta*, theta^- + 1 + theta*)."""
        return np.array([self.window[0] - c.theta_minus for c in self.connections])

    @property
    def delta(self) -> np.ndarray:
        return np.array([c.delta for c in self.connections])

    def connection(self, x_star: float) -> ConnectionPoint:
        i = int(np.argmin(np.abs(self.x_star - x_star)))
        if abs(self.x_star[i] - x_star) > 1e-9:
            raise KeyError(f"no connection at x*={x_star}")
        return self.connections[i]

    def reduce(self, theta):
        """Representative of theta mod 1 inside the window."""
        lo = self.window[0]
        return lo + np.mod(np.asarray(theta, dtype=float) - lo, 1.0)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["x_star", "x", "y", "xdot", "ydot", "theta_minus", "theta_plus", "delta", "delta_mod1", "window_lo", "window_hi"]
            )
            for c in self.connections:
                v = to_velocity(c.state)
                row = [c.x_star, *v, c.theta_minus, c.theta_plus, c.delta_raw, c.delta, *self.window]
                w.writerow([f"{val:.17g}" for val in row])


def build_channel(
    family: OrbitFamily,
    label: str,
    window: tuple | None = None,
    cfg: IntegratorConfig | None = None,
    n_seeds: int = 2000,
    max_jump: float = 0.2,
    cuts: dict | None = None,
) -> Channel:
    """Connections over the family's x* grid with a common unit theta window.

    ``cuts`` may map x* to precomputed search cuts (see ``connection_cut``).
    """
    if label not in LABELS:
        raise ValueError(f"unknown channel {label!r}; choose from {sorted(LABELS)}")
    window = DEFAULT_WINDOWS[label] if window is None else (float(window[0]), float(window[0]) + 1.0)
    orbits = sorted(family.orbits, key=lambda o: abs(o.x_star))
    orbits_l1 = [o if o.x_star > 0 else o.mirrored() for o in orbits]
    cuts = cuts or {}
    conns = [connection_for_orbit(o, label, cfg, n_seeds, cuts.get(round(o.x_star, 12))) for o in orbits_l1]
    for a, b in zip(conns[:-1], conns[1:]):
        jump = abs((b.delta - a.delta + 0.5) % 1.0 - 0.5)
        if jump > max_jump:
            raise ContinuationError(f"{label}: Delta jumps by {jump:.3f} between x*={a.x_star} and x*={b.x_star}")
    return Channel(label, conns, window)
