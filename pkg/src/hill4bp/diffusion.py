"""Checks of the single-map and two-map diffusion conditions, and pseudo-orbits."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import simpson

from .errors import DomainError, ResolutionError
from .scattering import ScatteringChart, scattering_map_first_order

RICHARDSON_TOL = 1e-3
EPS_CAP = 0.01
HOM_TWO_MAP_WINDOWS = ((-0.885, -0.4), (-0.4, 0.115))
HET_TWO_MAP_WINDOWS = ((-0.78, -0.34), (-0.34, 0.22))


def _row(chart: ScatteringChart, x_star: float) -> int:
    i = int(np.argmin(np.abs(chart.x_grid - x_star)))
    if abs(chart.x_grid[i] - x_star) > 1e-9:
        raise DomainError(f"x*={x_star} is not a chart row")
    return i


def birkhoff_integral(chart: ScatteringChart, x_star: float, lo: float = 0.0) -> float:
    """int_lo^{lo+1} -dS/dtheta(x*, theta + Delta) dtheta, Simpson with a Richardson check."""
    i = _row(chart, x_star)
    th = chart.theta_grid
    sel = (th >= lo - 1e-12) & (th <= lo + 1.0 + 1e-12)
    t, v = th[sel], chart.minus_dS_composed[i, sel]
    if len(t) < 5 or abs(t[0] - lo) > 1e-9 or abs(t[-1] - lo - 1.0) > 1e-9:
        raise ResolutionError(f"chart grid does not span [{lo}, {lo + 1}] with at least 5 nodes")
    if (len(t) - 1) % 2:
        raise ResolutionError("need an even number of theta intervals for the halved-grid check")
    fine = simpson(v, x=t)
    coarse = simpson(v[::2], x=t[::2])
    if abs(fine - coarse) > RICHARDSON_TOL:
        raise ResolutionError(f"Richardson disagreement {abs(fine - coarse):.2e} at x*={x_star}")
    return float(fine + (fine - coarse) / 15.0)


@dataclass
class DiffusionReport:
    mechanism: str
    channels: list
    x_range: tuple
    values: dict
    threshold: float
    verdict: bool
    margins: dict
    direction: int = 0
    constant: float | None = None
    details: dict = field(default_factory=dict)

    def to_json(self, path=None) -> str:
        text = json.dumps(_jsonable(asdict(self)), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def to_text(self) -> str:
        lines = [f"mechanism: {self.mechanism}", f"channels: {', '.join(self.channels)}"]
        lines.append(f"{'key':>28}  {'value':>22}  {'margin':>22}")
        for key in sorted(self.values):
            lines.append(f"{key:>28}  {self.values[key]:>22.17g}  {self.margins[key]:>22.17g}")
        lines.append(f"threshold: {self.threshold:.17g}")
        if self.constant is not None:
            lines.append(f"constant: {self.constant:.17g}")
        lines.append(f"direction: {self.direction:+d}")
        lines.append(f"verdict: {'PASS' if self.verdict else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def verify_single_map(chart: ScatteringChart, threshold: float = 0.0, lo: float = 0.0) -> DiffusionReport:
    """Birkhoff integrals at every chart x* must share one sign and exceed ``threshold`` in size."""
    values = {f"{x:.6f}": birkhoff_integral(chart, x, lo) for x in chart.x_grid}
    arr = np.array(list(values.values()))
    direction = int(np.sign(arr[0])) if np.all(np.sign(arr) == np.sign(arr[0])) else 0
    margins = {k: abs(v) - threshold for k, v in values.items()}
    finite = bool(np.all(np.isfinite(chart.minus_dS_composed)))
    verdict = direction != 0 and finite and all(m > 0 for m in margins.values())
    span = float(chart.x_grid[-1] - chart.x_grid[0])
    return DiffusionReport(
        "single-map-birkhoff",
        [chart.label],
        (float(chart.x_grid[0]), float(chart.x_grid[-1])),
        values,
        float(threshold),
        bool(verdict),
        margins,
        direction,
        span * float(np.min(np.abs(arr))),
        {"window_lo": lo, "chart_finite": finite},
    )


def verify_two_map(
    charts, windows=HOM_TWO_MAP_WINDOWS, c_threshold: float = 1.8, min_points: int = 40
) -> DiffusionReport:
    """On window j, map j must have -dS/dtheta o sigma0 > c at every grid node and x*."""
    if len(charts) != len(windows):
        raise ValueError("one window per chart")
    values, margins = {}, {}
    for j, (chart, (a, b)) in enumerate(zip(charts, windows), start=1):
        th = chart.theta_grid
        sel = (th >= a - 1e-12) & (th <= b + 1e-12)
        if sel.sum() < min_points:
            raise ResolutionError(f"window [{a}, {b}] has {sel.sum()} grid points, need {min_points}")
        for i, x in enumerate(chart.x_grid):
            key = f"map{j} x*={x:.6f}"
            values[key] = float(np.min(chart.minus_dS_composed[i, sel]))
            margins[key] = values[key] - c_threshold
    verdict = all(m > 0 for m in margins.values())
    xs = charts[0].x_grid
    return DiffusionReport(
        "two-map",
        [c.label for c in charts],
        (float(xs[0]), float(xs[-1])),
        values,
        float(c_threshold),
        bool(verdict),
        margins,
        1 if verdict else 0,
        None,
        {"windows": [list(w) for w in windows]},
    )


@dataclass
class PseudoOrbit:
    eps: float
    policy: str
    x_star: list
    theta: list
    action: list
    map_id: list
    d_action: list
    exited: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.map_id)

    @property
    def net_action(self) -> float:
        return self.action[-1] - self.action[0]

    @property
    def net_x_star(self) -> float:
        return self.x_star[-1] - self.x_star[0]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "map", "x_star", "theta", "action", "d_action"])
            w.writerow([0, 0] + [f"{v:.17g}" for v in (self.x_star[0], self.theta[0], self.action[0], 0.0)])
            for k in range(self.n_steps):
                vals = (self.x_star[k + 1], self.theta[k + 1], self.action[k + 1], self.d_action[k])
                w.writerow([k + 1, self.map_id[k]] + [f"{v:.17g}" for v in vals])


def _window_value(chart, x, theta):
    lo = chart.window[0]
    return chart.value(x, lo + np.mod(theta - lo, 1.0))


def pseudo_orbit(charts, policy: str = "greedy-two-map", start=(0.628, 0.0), eps: float = 1e-3, n_steps: int = 100) -> PseudoOrbit:
    """Iterate first-order scattering maps; greedy picks the larger -dS/dtheta o sigma0 (ties to map 1)."""
    if not 0.0 <= eps <= EPS_CAP:
        raise ValueError(f"eps must lie in [0, {EPS_CAP}]")
    charts = list(charts)
    if policy == "single":
        charts = charts[:1]
    elif policy != "greedy-two-map":
        raise ValueError("policy must be 'single' or 'greedy-two-map'")
    x, theta = float(start[0]), float(start[1])
    orbit = PseudoOrbit(eps, policy, [x], [theta], [charts[0].action_at(x)], [], [])
    for _ in range(n_steps):
        try:
            scores = [_window_value(c, x, theta) for c in charts]
            j = int(np.argmax(scores))
            img = scattering_map_first_order(charts[j], x, theta, eps)
        except DomainError:
            orbit.exited = True
            break
        lo, hi = charts[j].x_grid[0], charts[j].x_grid[-1]
        action = orbit.action[-1] + img.d_action
        orbit.map_id.append(j + 1)
        orbit.d_action.append(img.d_action)
        orbit.action.append(action)
        x = charts[j].x_star_for_action(action) if eps else x
        theta = img.theta
        orbit.x_star.append(x)
        orbit.theta.append(theta)
        if not lo <= x <= hi:
            orbit.exited = True
            break
    return orbit
