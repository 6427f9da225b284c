"""Equilibria, Hill regions and symmetric Lyapunov orbits around L1/L2."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .dynamics import (
    SYSTEM_ACTION,
    SYSTEM_VARIATIONAL,
    ModelParams,
    PhaseState,
    apply_symmetry,
    effective_potential,
    energy_ch4bp,
    field_ch4bp,
    jacobian_ch4bp,
)
from .errors import CorrectionError, FamilyBoundaryError, RangeError
from .integrator import (
    IntegratorConfig,
    SectionSpec,
    Trajectory,
    _raw,
    flow,
    propagate,
    stm_trajectory,
)
from . import _dop853 as core

# ---------------------------------------------------------------------------
# equilibria


@dataclass(frozen=True)
class EquilibriumPoint:
    label: str
    position: tuple
    energy: float
    stability: str
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def state(self) -> np.ndarray:
        x, y = self.position
        return np.array([x, y, -y, x])


def _classify(eigs, tol=1e-9):
    real = np.abs(eigs.real) > tol
    imag = np.abs(eigs.imag) > tol
    n_saddle = np.count_nonzero(real & ~imag)
    n_center = np.count_nonzero(~real & imag)
    if n_saddle == 2 and n_center == 2:
        return "center-saddle"
    if n_center == 4:
        return "center-center"
    return "complex-saddle"


def lagrange_points(params: ModelParams) -> list[EquilibriumPoint]:
    """L1, L2 on the x-axis and L3, L4 on the y-axis."""
    xl = params.lambda2 ** (-1.0 / 3.0)
    yl = params.lambda1 ** (-1.0 / 3.0)
    out = []
    for label, (x, y) in zip(("L1", "L2", "L3", "L4"), ((xl, 0.0), (-xl, 0.0), (0.0, yl), (0.0, -yl))):
        state = np.array([x, y, -y, x])
        eigs = np.linalg.eigvals(jacobian_ch4bp(state, params))
        eigs = eigs[np.lexsort((eigs.imag, eigs.real))]
        out.append(EquilibriumPoint(label, (x, y), float(energy_ch4bp(state, params)), _classify(eigs), eigs))
    return out


def hill_region_contains(x, y, h, params: ModelParams):
    """True where the effective potential satisfies Omega_eff >= -h."""
    return effective_potential(x, y, params) >= -h


def energy_at_rest(x, y, params: ModelParams):
    """Energy of a state with zero rotating-frame velocity at (x, y)."""
    return -effective_potential(x, y, params)


# ---------------------------------------------------------------------------
# periodic orbits

HALF_SECTION = SectionSpec.coordinate("y", 0.0, 0, name="y=0")


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    """Symmetric Lyapunov orbit anchored at (x*, 0, 0, py*).

    The angle chart is theta = t / T measured from the anchor.  For the L2
    orbit the anchor is the S'-image of the L1 anchor, so ``x_star < 0``.
    """

    x_star: float
    py_star: float
    period: float
    energy: float
    action: float
    monodromy: np.ndarray = field(repr=False)
    params: ModelParams = field(repr=False)
    side: str = "L1"
    cfg: IntegratorConfig = field(default_factory=IntegratorConfig, repr=False)
    residual: float = 0.0

    @property
    def anchor(self) -> np.ndarray:
        return np.array([self.x_star, 0.0, 0.0, self.py_star])

    @property
    def ydot_star(self) -> float:
        return self.py_star - self.x_star

    @property
    def frequency(self) -> float:
        return 1.0 / self.period

    @cached_property
    def monodromy_spectrum(self) -> np.ndarray:
        eigs = np.linalg.eigvals(self.monodromy)
        return eigs[np.argsort(-np.abs(eigs))]

    @property
    def floquet_multiplier(self) -> float:
        """Largest (unstable) monodromy eigenvalue."""
        return float(self.monodromy_spectrum[0].real)

    @cached_property
    def trajectory(self) -> Trajectory:
        return propagate("circular", self.anchor, (0.0, self.period), self.params, self.cfg)

    @cached_property
    def stm_trajectory(self) -> Trajectory:
        return stm_trajectory(self.anchor, (0.0, self.period), self.params, self.cfg)

    @cached_property
    def trajectory_backward(self) -> Trajectory:
        return propagate("circular", self.anchor, (0.0, -0.5 * self.period), self.params, self.cfg)

    def state_at(self, theta) -> np.ndarray:
        """k0(theta): the orbit point reached after time theta*T from the anchor.

        Phases past 1/2 are read from a backward run so that neither half
        accumulates a full period of integration error.
        """
        theta = np.asarray(theta, dtype=float)
        phase = np.atleast_1d(np.mod(theta, 1.0))
        late = phase > 0.5
        out = np.empty((phase.size, 4))
        if np.any(~late):
            out[~late] = np.atleast_2d(self.trajectory(phase[~late] * self.period))
        if np.any(late):
            out[late] = np.atleast_2d(self.trajectory_backward((phase[late] - 1.0) * self.period))
        return out[0] if theta.ndim == 0 else out

    def mirrored(self) -> "PeriodicOrbit":
        """S'-image orbit, i.e. the L2 partner of an L1 orbit and vice versa."""
        signs = np.array([-1.0, 1.0, 1.0, -1.0])
        M = np.diag(signs) @ np.linalg.inv(self.monodromy) @ np.diag(signs)
        return PeriodicOrbit(
            -self.x_star,
            -self.py_star,
            self.period,
            self.energy,
            self.action,
            M,
            self.params,
            "L2" if self.side == "L1" else "L1",
            self.cfg,
            self.residual,
        )

    def eigenvectors(self):
        """Unit unstable and stable monodromy eigenvectors at the anchor."""
        w, v = np.linalg.eig(self.monodromy)
        order = np.argsort(-np.abs(w))
        vu = np.real(v[:, order[0]])
        vs = np.real(v[:, order[-1]])
        return vu / np.linalg.norm(vu), vs / np.linalg.norm(vs)

    @cached_property
    def stm_trajectory_backward(self) -> Trajectory:
        return stm_trajectory(self.anchor, (0.0, -self.period), self.params, self.cfg)

    def transported_eigenvectors(self, theta, kind: str = "unstable") -> np.ndarray:
        """Eigen-directions carried by the STM to the phases theta (unit rows).

        The stable direction is carried backwards from the anchor for
        theta >= 1/2 so that it always grows in the transport.
        """
        vu, vs = self.eigenvectors()
        v0 = vu if kind == "unstable" else vs
        theta = np.atleast_1d(np.mod(np.asarray(theta, dtype=float), 1.0))
        stm = self.stm_trajectory(theta * self.period)[:, 4:].reshape(-1, 4, 4)
        vec = stm @ v0
        if kind == "stable":
            late = theta >= 0.5
            if np.any(late):
                back = self.stm_trajectory_backward((theta[late] - 1.0) * self.period)[:, 4:].reshape(-1, 4, 4)
                vec[late] = back @ v0
        return vec / np.linalg.norm(vec, axis=1)[:, None]

    def eigenvector_field(self, theta, kind: str = "unstable") -> np.ndarray:
        """Unnormalised STM(theta T) v0 extended by w(theta + 1) = mu w(theta).

        mu is the monodromy eigenvalue of v0, so the rows trace the linear
        flow of the anchor eigenvector for any real theta.
        """
        vu, vs = self.eigenvectors()
        v0 = vu if kind == "unstable" else vs
        mult = self.floquet_multiplier if kind == "unstable" else 1.0 / self.floquet_multiplier
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        turns = np.floor(theta)
        rows = self.stm_trajectory((theta - turns) * self.period)
        vec = rows[:, 4:].reshape(-1, 4, 4) @ v0
        return vec * (mult**turns)[:, None]

    def nearest_phase(self, state, n_coarse: int = 2000):
        """Phase of the orbit point closest to ``state`` and that distance."""
        from scipy.optimize import minimize_scalar

        state = np.asarray(state, dtype=float)[:4]
        grid = np.arange(n_coarse) / n_coarse
        d2 = np.sum((self.state_at(grid) - state) ** 2, axis=1)
        k = int(np.argmin(d2))
        h = 1.0 / n_coarse
        res = minimize_scalar(
            lambda th: float(np.sum((self.state_at(th) - state) ** 2)),
            bracket=(grid[k] - h, grid[k], grid[k] + h),
            tol=1e-14,
        )
        return float(np.mod(res.x, 1.0)), float(np.sqrt(max(res.fun, 0.0)))

    def points(self, n: int = 400) -> np.ndarray:
        return self.state_at(np.arange(n) / n)


def _half_period_crossing(x_star, py, params, cfg):
    """Return (t_half, state, stm) at the first y = 0 return of the anchor."""
    z0 = np.concatenate([[x_star, 0.0, 0.0, py], np.eye(4).ravel()])
    t1 = cfg.max_time
    status, t, y, *_ = _raw(SYSTEM_VARIATIONAL, params, 0.0, z0, t1, cfg, False, HALF_SECTION, 1)
    if status not in (core.STATUS_EVENT, core.STATUS_TANGENCY):
        raise FamilyBoundaryError(f"no half-period crossing from x*={x_star}, py={py} (status {status})")
    return t, y[:4], y[4:].reshape(4, 4)


def _action(anchor, period, params, cfg):
    z0 = np.concatenate([anchor, [0.0]])
    end = flow(SYSTEM_ACTION, z0, (0.0, period), params, cfg)
    return float(end[4])


def correct_symmetric_orbit(
    x_star: float,
    py_guess: float,
    params: ModelParams,
    cfg: IntegratorConfig | None = None,
    tol: float = 1e-11,
    max_iter: int = 30,
) -> PeriodicOrbit:
    """Newton on py* (x* fixed) so that the half-period y = 0 crossing has px = 0."""
    cfg = cfg or IntegratorConfig()
    py = float(py_guess)
    residual = np.inf
    for _ in range(max_iter):
        t_half, z, M = _half_period_crossing(x_star, py, params, cfg)
        residual = z[2]
        f = field_ch4bp(z, params)
        # derivative of px at the crossing, accounting for the moving crossing time
        dpx = M[2, 3] - f[2] * M[1, 3] / f[1]
        step = -residual / dpx
        py += step
        if abs(residual) < tol and abs(step) < 1e-13:
            break
        if not np.isfinite(py) or abs(step) > 1.0:
            raise CorrectionError(f"correction diverged at x*={x_star}")
    else:
        if abs(residual) >= tol:
            raise CorrectionError(f"no convergence at x*={x_star}: |px|={abs(residual):.3e}")
    t_half, z, _ = _half_period_crossing(x_star, py, params, cfg)
    period = 2.0 * t_half
    anchor = np.array([x_star, 0.0, 0.0, py])
    _, monodromy = _monodromy(anchor, period, params, cfg)
    side = "L1" if x_star > 0 else "L2"
    return PeriodicOrbit(
        float(x_star),
        float(py),
        float(period),
        float(energy_ch4bp(anchor, params)),
        _action(anchor, period, params, cfg),
        monodromy,
        params,
        side,
        cfg,
        float(abs(z[2])),
    )


def _monodromy(anchor, period, params, cfg):
    from .integrator import propagate_with_stm

    return propagate_with_stm(anchor, (0.0, period), params, cfg)


def linear_py_guess(x_star: float, params: ModelParams) -> float:
    """py at the anchor of the linearised Lyapunov orbit through (x*, 0)."""
    lp = lagrange_points(params)[0 if x_star > 0 else 1]
    eq = lp.state
    w, v = np.linalg.eig(jacobian_ch4bp(eq, params))
    k = np.argmax(np.abs(w.imag))
    vec = v[:, k]
    # choose the complex phase that makes the y-offset vanish
    phase = -np.angle(vec[1]) + np.pi / 2
    u = np.real(vec * np.exp(1j * phase))
    scale = (x_star - eq[0]) / u[0]
    return float(eq[3] + scale * u[3])


def continue_family(
    x_star_range,
    step: float = 0.005,
    side: str = "L1",
    params: ModelParams | None = None,
    cfg: IntegratorConfig | None = None,
    py_guess: float | None = None,
) -> "OrbitFamily":
    """Natural-parameter continuation in x* on the L1 side, mirrored for L2."""
    from .dynamics import DEFAULT_MU

    params = params or ModelParams(DEFAULT_MU)
    cfg = cfg or IntegratorConfig()
    lo, hi = float(min(x_star_range)), float(max(x_star_range))
    n = int(round((hi - lo) / step)) if hi > lo else 0
    grid = lo + step * np.arange(n + 1)
    if abs(grid[-1] - hi) > 1e-12:
        grid = np.append(grid, hi)
    # start nearest L1 where the linear guess is best, then walk outwards
    order = np.argsort(-grid)
    orbits: dict[int, PeriodicOrbit] = {}
    failures = []
    prev: list[PeriodicOrbit] = []
    for idx in order:
        xs = grid[idx]
        if prev:
            guess = _extrapolate(xs, [(o.x_star, o.py_star) for o in prev], params)
        else:
            guess = py_guess if py_guess is not None else _walk_from_equilibrium(xs, params, cfg)
        try:
            orbit = correct_symmetric_orbit(xs, guess, params, cfg)
        except CorrectionError as exc:
            failures.append((float(xs), str(exc)))
            break
        orbits[idx] = orbit
        prev.append(orbit)
    members = [orbits[i] for i in sorted(orbits)]
    if side == "L2":
        members = [o.mirrored() for o in members]
    return OrbitFamily(members, side, failures)


def _extrapolate(xs, known, params):
    """py guess at xs from corrected (x*, py*) pairs, as an offset from the linear guess."""
    offsets = [(x, py - linear_py_guess(x, params)) for x, py in known[-2:]]
    if len(offsets) == 2:
        (x0, o0), (x1, o1) = offsets
        off = o1 + (o1 - o0) * (xs - x1) / (x1 - x0)
    else:
        off = offsets[-1][1]
    return linear_py_guess(xs, params) + off


def _walk_from_equilibrium(x_star, params, cfg, step=0.0025):
    """Guess py* at x* by continuation from a small orbit near L1."""
    xl = params.lambda2 ** (-1.0 / 3.0)
    start = xl - 0.005 if x_star < xl - 0.005 else x_star
    n = max(2, int(np.ceil(abs(start - x_star) / step)) + 1)
    xs_path = np.linspace(start, x_star, n)
    first = correct_symmetric_orbit(xs_path[0], linear_py_guess(xs_path[0], params), params, cfg)
    known = [(first.x_star, first.py_star)]
    for xs in xs_path[1:]:
        orbit = correct_symmetric_orbit(xs, _extrapolate(xs, known, params), params, cfg)
        known.append((orbit.x_star, orbit.py_star))
    return known[-1][1]


def orbit_for_energy(
    h: float, side: str = "L1", params: ModelParams | None = None, cfg: IntegratorConfig | None = None, tol: float = 1e-10
) -> PeriodicOrbit:
    """Lyapunov orbit of the family with energy h (secant/bracket in x*)."""
    from .dynamics import DEFAULT_MU

    params = params or ModelParams(DEFAULT_MU)
    cfg = cfg or IntegratorConfig()
    l1 = lagrange_points(params)[0]
    if h <= l1.energy:
        raise RangeError(f"h={h} is below the L1 energy {l1.energy}")
    known: list[tuple[float, float]] = []

    def corrected(xs):
        guess = _extrapolate(xs, known, params) if known else linear_py_guess(xs, params)
        orbit = correct_symmetric_orbit(xs, guess, params, cfg)
        known.append((orbit.x_star, orbit.py_star))
        return orbit

    # walk outwards from L1 until the family energy passes h
    xs = l1.position[0] - 0.005
    orbit = corrected(xs)
    if orbit.energy > h:
        raise RangeError(f"h={h} too close to the L1 energy for this family")
    step = 0.0025
    while orbit.energy < h:
        xs -= step
        if xs < 0.45:
            raise RangeError(f"h={h} beyond the tested family range")
        try:
            orbit = corrected(xs)
        except CorrectionError as exc:
            raise RangeError(f"family breaks down before reaching h={h}") from exc
    # secant iterations on x* inside the last interval
    x0, h0 = xs + step, None
    x1, h1 = xs, orbit.energy
    h0 = corrected(x0).energy
    for _ in range(50):
        x2 = x1 - (h1 - h) * (x1 - x0) / (h1 - h0)
        orbit = corrected(x2)
        x0, h0, x1, h1 = x1, h1, x2, orbit.energy
        if abs(h1 - h) < 0.1 * tol:
            break
    if abs(orbit.energy - h) > tol:
        raise CorrectionError(f"energy mismatch {orbit.energy - h:.3e}")
    return orbit.mirrored() if side == "L2" else orbit


@dataclass
class OrbitFamily:
    orbits: list
    side: str = "L1"
    failures: list = field(default_factory=list)

    def __len__(self):
        return len(self.orbits)

    def __iter__(self):
        return iter(self.orbits)

    def __getitem__(self, i):
        return self.orbits[i]

    @property
    def x_star(self) -> np.ndarray:
        return np.array([o.x_star for o in self.orbits])

    def nearest(self, x_star: float) -> PeriodicOrbit:
        return self.orbits[int(np.argmin(np.abs(np.abs(self.x_star) - abs(x_star))))]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "x_star", "py_star", "ydot_star", "T", "I", "lambda"])
            for o in self.orbits:
                row = [o.energy, o.x_star, o.py_star, o.ydot_star, o.period, o.action, o.floquet_multiplier]
                w.writerow([f"{v:.17g}" for v in row])


def k0_param(orbit: PeriodicOrbit, theta, params: ModelParams | None = None) -> PhaseState:
    """Orbit point at angle theta: the anchor flowed for time theta*T."""
    if params is not None and params.mu != orbit.params.mu:
        raise ValueError("params do not match the orbit's model")
    return PhaseState(*orbit.state_at(float(theta)))


def symmetric_image_distance(orbit: PeriodicOrbit, n: int = 200) -> float:
    """Hausdorff-type distance between the orbit and its S-image."""
    pts = orbit.points(n)
    img = apply_symmetry(pts, "S")
    dense = orbit.points(20 * n)
    d = np.min(np.linalg.norm(img[:, None, :] - dense[None, :, :], axis=2), axis=1)
    return float(d.max())


def y_axis_crossings(orbit: PeriodicOrbit) -> int:
    """Number of y = 0 crossings over one period (anchor counted once)."""
    ys = orbit.trajectory(np.linspace(0.0, orbit.period, 4001))[:, 1]
    return int(np.count_nonzero(np.sign(ys[1:-2]) != np.sign(ys[2:-1]))) + 1
