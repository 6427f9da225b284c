"""Melnikov integrals of the eccentricity term along symmetric connections.

With tau = (theta - theta^-) T and the source/target profiles
h_src(phi) = H1(k0_src(phi)), h_tgt(phi) = H1(k0_tgt(phi)), define along
the connection orbit gamma (gamma(0) = z)

    D^-(u) = H1(gamma(u)) - h_src(theta^- + u/T)
    D^+(u) = H1(gamma(u)) - h_tgt(theta^+ + u/T)

Then, on the s = -pi/2 section,

    d/dtheta S(sigma0(theta)) = -T [ int_{-inf}^{tau} cos(u - tau) D^- du
                                     + int_{tau}^{inf} cos(u - tau) D^+ du ]
    S(theta) = int_{-inf}^{tau'} sin(u - tau') D^- du + int_{tau'}^{inf} sin(u - tau') D^+ du

with tau' = (theta + theta^-) T.  Both integrands decay like lambda^{-|u|/T}.
"""
from __future__ import annotations

import csv
import weakref
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .connections import Channel, ConnectionPoint
from .dynamics import h1_gradient, h1_perturbation
from .errors import DecayError, DomainError, ResolutionError


@dataclass(frozen=True)
class MelnikovConfig:
    tail_cut: float = 1e-12
    quad_tol: float = 1e-9
    max_horizon: float = 40.0  # in periods
    order: int = 16
    max_refine: int = 5

    def __post_init__(self):
        if not 0.0 < self.tail_cut < self.quad_tol:
            raise ValueError("need 0 < tail_cut < quad_tol")
        if self.max_horizon <= 0 or self.order < 2:
            raise ValueError("max_horizon must be positive and order >= 2")


class MelnikovIntegrand:
    """Composite Gauss-Legendre quadrature of the two Melnikov integrals."""

    def __init__(self, connection: ConnectionPoint, mcfg: MelnikovConfig | None = None):
        self.conn = connection
        self.mcfg = mcfg or MelnikovConfig()
        self.params = connection.source.params
        self.T = connection.period
        self.theta_minus = connection.theta_minus
        self.theta_plus = connection.theta_plus
        self.u_min, self.u_max = connection.u_range
        self._setup_tail()
        self.level = 0
        self._panels = self._build_panels(0, self.mcfg.order)
        self._check_decay()
        self._adapt()

    # -- integrand -----------------------------------------------------------

    def _setup_tail(self):
        """Linear model of gamma beyond the seed along the unstable eigen-field."""
        conn = self.conn
        src = conn.source
        seed = conn.leg.start
        self._seed_phase = self.theta_minus + self.u_min / self.T
        w0 = src.eigenvector_field(np.mod(self._seed_phase, 1.0))[0]
        offset = seed - src.state_at(self._seed_phase)
        self._tail_coef = float(offset @ w0 / (w0 @ w0))
        lam = src.floquet_multiplier
        grad = np.hypot(*h1_gradient(*src.points(200)[:, :2].T, self.params)).max()
        start = abs(self._tail_coef) * np.linalg.norm(w0) * grad
        periods = max(1, int(np.ceil(np.log(max(start, self.mcfg.tail_cut) / self.mcfg.tail_cut) / np.log(lam))) + 1)
        horizon = self.mcfg.max_horizon * self.T
        span = min(periods * self.T, max(0.0, horizon - max(-self.u_min, self.u_max)))
        self.tail_length = span
        if start * lam ** (-span / self.T) > self.mcfg.tail_cut and span < periods * self.T:
            raise DecayError(f"integrand not below {self.mcfg.tail_cut:g} within {self.mcfg.max_horizon} periods")

    def _tail_minus(self, u):
        """D^- for u below the recorded orbit (linearised in the fiber offset)."""
        src = self.conn.source
        phi = self.theta_minus + u / self.T
        base = src.state_at(phi)
        disp = self._tail_coef * src.eigenvector_field(np.mod(self._seed_phase, 1.0) + (u - self.u_min) / self.T)
        gx, gy = h1_gradient(base[:, 0], base[:, 1], self.params)
        return gx * disp[:, 0] + gy * disp[:, 1]

    def D(self, u, side: str):
        """D^- (side='minus') or D^+ (side='plus') at the times u."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.empty_like(u)
        inside = (u >= self.u_min) & (u <= self.u_max)
        if np.any(inside):
            g = self.conn.orbit_state(u[inside])
            g = np.atleast_2d(g)
            out[inside] = h1_perturbation(g[:, 0], g[:, 1], self.params)
        if side == "minus":
            ref = self.conn.source.state_at(self.theta_minus + u / self.T)
        else:
            ref = self.conn.target.state_at(self.theta_plus + u / self.T)
        ref = np.atleast_2d(ref)
        out[inside] -= h1_perturbation(ref[inside, 0], ref[inside, 1], self.params)
        below = u < self.u_min
        above = u > self.u_max
        if np.any(below):
            out[below] = self._tail_minus(u[below]) if side == "minus" else np.nan
        if np.any(above):
            # reversor image of the backward tail
            if side == "plus":
                s = self.conn.offset
                out[above] = self._tail_minus(-(u[above] + s) - s)
            else:
                out[above] = np.nan
        return out

    # -- panels ----------------------------------------------------------------

    def _edges(self, level):
        leg_t = self.conn.leg.t
        s = self.conn.offset
        core = np.concatenate([leg_t - s, -leg_t[::-1] - s])
        step = self.T / 32
        n_tail = max(1, int(np.ceil(self.tail_length / step)))
        tail = np.linspace(0.0, self.tail_length, n_tail + 1)[1:]
        edges = np.unique(np.concatenate([self.u_min - tail, core, self.u_max + tail]))
        for _ in range(level):
            mid = 0.5 * (edges[:-1] + edges[1:])
            edges = np.sort(np.concatenate([edges, mid]))
        return edges

    def _build_panels(self, level, order):
        edges = self._edges(level)
        x, w = np.polynomial.legendre.leggauss(order)
        a, b = edges[:-1], edges[1:]
        nodes = 0.5 * (b - a)[:, None] * (x[None, :] + 1.0) + a[:, None]
        weights = 0.5 * (b - a)[:, None] * w[None, :]
        flat = nodes.ravel()
        dm = np.full(flat.shape, np.nan)
        dp = np.full(flat.shape, np.nan)
        left = flat <= self.u_max
        right = flat >= self.u_min
        dm[left] = self.D(flat[left], "minus")
        dp[right] = self.D(flat[right], "plus")
        return {
            "edges": edges,
            "nodes": nodes,
            "weights": weights,
            "dm": dm.reshape(nodes.shape),
            "dp": dp.reshape(nodes.shape),
            "gl": (x, w),
        }

    def _check_decay(self):
        """The recorded orbit must already hug the source orbit at its start."""
        p = self._panels
        peak = np.nanmax(np.abs(p["dm"]))
        start = abs(self.D(np.array([self.u_min]), "minus")[0])
        if start > 1e-6 * peak:
            raise DecayError(f"|D| = {start:.2e} at the seed; the foot-point phase does not match the orbit")

    def _integrate(self, panels, tau, kernel):
        if not self.u_min <= tau <= self.u_max:
            raise DomainError("phase beyond the recorded connection orbit")
        edges, nodes, weights = panels["edges"], panels["nodes"], panels["weights"]
        k = int(np.clip(np.searchsorted(edges, tau) - 1, 0, len(edges) - 2))
        ker = kernel(nodes - tau)
        total = 0.0
        if k > 0:
            total += np.sum(weights[:k] * ker[:k] * panels["dm"][:k])
        if k + 1 < len(nodes):
            total += np.sum(weights[k + 1 :] * ker[k + 1 :] * panels["dp"][k + 1 :])
        x, w = panels["gl"]
        a, b = edges[k], edges[k + 1]
        t = min(max(tau, a), b)
        for lo, hi, side in ((a, t, "minus"), (t, b, "plus")):
            if hi <= lo:
                continue
            uu = 0.5 * (hi - lo) * (x + 1.0) + lo
            total += 0.5 * (hi - lo) * np.sum(w * kernel(uu - tau) * self.D(uu, side))
        return float(total)

    def _adapt(self):
        lo_order = max(2, self.mcfg.order // 2)
        probes = np.linspace(0.0, 1.0, 7)
        for level in range(self.mcfg.max_refine + 1):
            hi = self._build_panels(level, self.mcfg.order)
            lo = self._build_panels(level, lo_order)
            err = 0.0
            for th in probes:
                for fn in (self._dS_with, self._S_with):
                    err = max(err, abs(fn(hi, th) - fn(lo, th)))
            if err < self.mcfg.quad_tol:
                self._panels = hi
                self.level = level
                self.error_estimate = err
                return
        raise ResolutionError(f"quadrature error {err:.2e} above {self.mcfg.quad_tol:g} after refinement")

    # -- formulas --------------------------------------------------------------

    def _dS_with(self, panels, theta):
        tau = (theta - self.theta_minus) * self.T
        return -self.T * self._integrate(panels, tau, np.cos)

    def _S_with(self, panels, theta):
        tau = (theta + self.theta_minus) * self.T
        return self._integrate(panels, tau, np.sin)

    def dS_composed(self, theta) -> float:
        """d/dtheta S(sigma0(x*, theta)) on the s = -pi/2 section."""
        return self._dS_with(self._panels, float(theta))

    def S(self, theta) -> float:
        return self._S_with(self._panels, float(theta))

    def dS_composed_extended(self, theta, s) -> float:
        """Same derivative for a free section phase s of the perturbation."""
        theta, s = float(theta), float(s)
        tau = (theta - self.theta_minus) * self.T
        jump = self.conn.target.state_at(self.theta_plus + tau / self.T)
        base = self.conn.source.state_at(theta)
        boundary = h1_perturbation(jump[0], jump[1], self.params) - h1_perturbation(base[0], base[1], self.params)
        body = self._integrate(self._panels, tau, lambda v: np.sin(v + s))
        return self.T * (np.cos(s) * boundary + body)

    def envelope(self, u):
        """|D^-| along the backward half, for decay-rate checks."""
        return np.abs(self.D(u, "minus"))


_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def melnikov_integrand(connection: ConnectionPoint, mcfg: MelnikovConfig | None = None) -> MelnikovIntegrand:
    mcfg = mcfg or MelnikovConfig()
    per = _CACHE.setdefault(connection, {})
    if mcfg not in per:
        per[mcfg] = MelnikovIntegrand(connection, mcfg)
    return per[mcfg]


def melnikov_S(connection: ConnectionPoint, theta, params=None, mcfg: MelnikovConfig | None = None):
    """Generating function S(x*, theta) of the first-order scattering map."""
    integ = melnikov_integrand(connection, mcfg)
    if np.ndim(theta) == 0:
        return integ.S(theta)
    return np.array([integ.S(t) for t in np.ravel(theta)]).reshape(np.shape(theta))


def melnikov_dS_dtheta_composed(connection: ConnectionPoint, theta, params=None, mcfg: MelnikovConfig | None = None):
    """d/dtheta S composed with the unperturbed shift (not negated)."""
    integ = melnikov_integrand(connection, mcfg)
    if np.ndim(theta) == 0:
        return integ.dS_composed(theta)
    return np.array([integ.dS_composed(t) for t in np.ravel(theta)]).reshape(np.shape(theta))


# ---------------------------------------------------------------------------
# charts


@dataclass(frozen=True, eq=False)
class ScatteringChart:
    channel: Channel = field(repr=False)
    x_grid: np.ndarray
    theta_grid: np.ndarray
    S_values: np.ndarray = field(repr=False)
    minus_dS_composed: np.ndarray = field(repr=False)
    theta_minus: np.ndarray = field(repr=False)
    delta_raw: np.ndarray = field(repr=False)
    actions: np.ndarray = field(repr=False)
    periods: np.ndarray = field(repr=False)
    energies: np.ndarray = field(repr=False)
    mcfg: MelnikovConfig = field(default_factory=MelnikovConfig, repr=False)
    failures: list = field(default_factory=list, repr=False)

    @property
    def label(self) -> str:
        return self.channel.label

    @property
    def window(self) -> tuple:
        return self.channel.window

    def _spline(self, values):
        kx = min(3, len(self.x_grid) - 1)
        ky = min(3, len(self.theta_grid) - 1)
        if kx < 1:
            return None
        return RectBivariateSpline(self.x_grid, self.theta_grid, values, kx=kx, ky=ky)

    def _check_domain(self, x_star, theta):
        if not (self.x_grid[0] - 1e-12 <= x_star <= self.x_grid[-1] + 1e-12):
            raise DomainError(f"x*={x_star} outside the chart range")
        if not (self.theta_grid[0] - 1e-12 <= theta <= self.theta_grid[-1] + 1e-12):
            raise DomainError(f"theta={theta} outside the chart grid")

    def value(self, x_star, theta, which: str = "minus_dS"):
        """Spline interpolation of the chart (single x* rows use theta only)."""
        self._check_domain(x_star, theta)
        values = self.minus_dS_composed if which == "minus_dS" else self.S_values
        if len(self.x_grid) == 1:
            return float(np.interp(theta, self.theta_grid, values[0]))
        return float(self._spline(values).ev(x_star, theta))

    def dS_dx_star(self, x_star, theta):
        self._check_domain(x_star, theta)
        return float(self._spline(self.S_values).ev(x_star, theta, dx=1))

    def delta_at(self, x_star):
        return float(np.interp(x_star, self.x_grid, self.delta_raw))

    def action_at(self, x_star):
        return float(np.interp(x_star, self.x_grid, self.actions))

    def d_action_dx_star(self, x_star):
        """dI/dx* from the orbit actions of the chart rows."""
        if len(self.x_grid) < 2:
            raise DomainError("need at least two x* rows for dI/dx*")
        slope = np.gradient(self.actions, self.x_grid)
        return float(np.interp(x_star, self.x_grid, slope))

    def x_star_for_action(self, action):
        """Inverse of I(x*), extended linearly past the chart rows."""
        order = np.argsort(self.actions)
        a, x = self.actions[order], self.x_grid[order]
        if len(a) < 2:
            return float(x[0])
        if action < a[0]:
            return float(x[0] + (action - a[0]) * (x[1] - x[0]) / (a[1] - a[0]))
        if action > a[-1]:
            return float(x[-1] + (action - a[-1]) * (x[-1] - x[-2]) / (a[-1] - a[-2]))
        return float(np.interp(action, a, x))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x_star", "theta", "S", "minus_dS_composed", "theta_minus", "delta"])
            for i, xs in enumerate(self.x_grid):
                for j, th in enumerate(self.theta_grid):
                    row = [xs, th, self.S_values[i, j], self.minus_dS_composed[i, j], self.theta_minus[i], self.delta_raw[i]]
                    w.writerow([f"{v:.17g}" for v in row])

    def to_gnuplot(self, path, which: str = "minus_dS"):
        """gnuplot 'nonuniform matrix' text: first row theta, first column x*."""
        values = self.minus_dS_composed if which == "minus_dS" else self.S_values
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(" ".join([f"{len(self.theta_grid)}"] + [f"{t:.17g}" for t in self.theta_grid]) + "\n")
            for xs, row in zip(self.x_grid, values):
                fh.write(" ".join([f"{xs:.17g}"] + [f"{v:.17g}" for v in row]) + "\n")


def build_chart(
    channel: Channel, x_grid=None, theta_grid=None, params=None, mcfg: MelnikovConfig | None = None
) -> ScatteringChart:
    """S and -dS/dtheta o sigma0 on an (x*, theta) grid, every node evaluated directly."""
    mcfg = mcfg or MelnikovConfig()
    x_grid = channel.x_star if x_grid is None else np.atleast_1d(np.asarray(x_grid, dtype=float))
    theta_grid = np.linspace(channel.window[0], channel.window[1], 101) if theta_grid is None else np.asarray(theta_grid, float)
    theta_grid = np.atleast_1d(theta_grid)
    order = np.argsort(x_grid)
    x_grid = x_grid[order]
    conns = [channel.connection(x) for x in x_grid]
    S = np.full((len(x_grid), len(theta_grid)), np.nan)
    dS = np.full_like(S, np.nan)
    failures = []
    for i, conn in enumerate(conns):
        try:
            integ = melnikov_integrand(conn, mcfg)
        except (DecayError, ResolutionError) as exc:
            failures.extend((x_grid[i], float(t), str(exc)) for t in theta_grid)
            continue
        for j, th in enumerate(theta_grid):
            try:
                S[i, j] = integ.S(th)
                dS[i, j] = -integ.dS_composed(th)
            except (DecayError, DomainError) as exc:
                failures.append((x_grid[i], float(th), str(exc)))
    if len(failures) > 0.01 * S.size:
        raise ResolutionError(f"{len(failures)} of {S.size} chart points failed")
    return ScatteringChart(
        channel,
        x_grid,
        theta_grid,
        S,
        dS,
        np.array([c.theta_minus for c in conns]),
        np.array([c.delta_raw for c in conns]),
        np.array([c.source.action for c in conns]),
        np.array([c.period for c in conns]),
        np.array([c.source.energy for c in conns]),
        mcfg,
        failures,
    )


class MapImage(NamedTuple):
    x_star: float
    theta: float
    action: float
    d_action: float


def scattering_map_first_order(chart: ScatteringChart, x_star: float, theta: float, eps: float) -> MapImage:
    """sigma_eps = (I, theta + Delta) + eps (-dS/dtheta, dS/dI) o sigma0 to first order."""
    lo, hi = chart.window
    theta_w = lo + np.mod(theta - lo, 1.0)
    if min(theta_w - lo, hi - theta_w) < 1e-9:
        raise DomainError(f"theta={theta} lies on the boundary curve of the channel window")
    delta = chart.delta_at(x_star)
    d_action = eps * chart.value(x_star, theta_w)
    dS_dI = 0.0
    if eps != 0.0:
        dS_dI = chart.dS_dx_star(x_star, theta_w + delta) / chart.d_action_dx_star(x_star)
    action = chart.action_at(x_star) + d_action
    new_x = chart.x_star_for_action(action) if eps != 0.0 else x_star
    return MapImage(new_x, float(theta_w + delta + eps * dS_dI), float(action), float(d_action))
