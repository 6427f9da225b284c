"""Command-line pipeline: equilibria -> family -> manifolds -> connections -> chart -> verify / pseudo.

Each stage pickles its result under ``<out>/cache/<stage>-<label>-<hash>.pkl``
where the hash covers only the settings that stage depends on.  A stage that
needs an upstream result which is not cached fails with a message naming the
command to run.  All numbers are written with 17 significant digits.
"""
from __future__ import annotations

import argparse
import csv
import fcntl
import hashlib
import json
import pickle
import sys
from contextlib import contextmanager
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import reference as ref
from .connections import DEFAULT_WINDOWS, LABELS, build_channel, connection_cut
from .diffusion import (
    EPS_CAP,
    HET_TWO_MAP_WINDOWS,
    HOM_TWO_MAP_WINDOWS,
    birkhoff_integral,
    pseudo_orbit,
    verify_single_map,
    verify_two_map,
)
from .dynamics import DEFAULT_MU, ModelParams, to_velocity
from .errors import Hill4bpError, ParameterError, StageDependencyError
from .integrator import IntegratorConfig
from .manifolds import tangency_curve
from .orbits import continue_family, lagrange_points
from .scattering import MelnikovConfig, build_chart

FMT = "{:.17g}"


def fmt(v) -> str:
    return FMT.format(float(v))


# ---------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class RunConfig:
    mu: float = DEFAULT_MU
    eps: float = 1e-3
    x_lo: float = 0.615
    x_hi: float = 0.63
    x_step: float = 0.005
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_time: float = 40.0
    tail_cut: float = 1e-12
    quad_tol: float = 1e-9
    channels: tuple = tuple(LABELS)
    n_x: int = 0  # 0: every family member
    n_theta: int = 321
    theta_lo: float = -2.0
    theta_hi: float = 1.2
    seed_count: int = 2000
    mechanism: str = "two-map"
    kind: str = "het"
    steps: int = 100
    start_x: float = 0.628
    start_theta: float = 0.0
    policy: str = "greedy-two-map"
    out: str = "hill4bp-out"

    def __post_init__(self):
        ModelParams(self.mu)
        if not 0.0 <= self.eps <= EPS_CAP:
            raise ParameterError(f"eps must lie in [0, {EPS_CAP}]")
        xl = ModelParams(self.mu).lambda2 ** (-1.0 / 3.0)
        if not 0.0 < self.x_lo <= self.x_hi < xl:
            raise ParameterError(f"x* range must satisfy 0 < lo <= hi < x_L1 = {xl:.6f}")
        if self.x_step <= 0.0:
            raise ParameterError("x* step must be positive")
        IntegratorConfig(self.abs_tol, self.rel_tol, max_time=self.max_time)
        MelnikovConfig(self.tail_cut, self.quad_tol)
        bad = [c for c in self.channels if c not in LABELS]
        if bad or not self.channels:
            raise ParameterError(f"unknown channels {bad}; choose from {sorted(LABELS)}")
        if self.n_x < 0 or self.n_theta < 1:
            raise ParameterError("grid sizes must be positive")
        if self.theta_hi < self.theta_lo or (self.n_theta > 1 and self.theta_hi == self.theta_lo):
            raise ParameterError("theta range must be increasing")
        if self.seed_count < 16:
            raise ParameterError("seed count must be at least 16")
        if self.mechanism not in ("single", "two-map"):
            raise ParameterError("mechanism must be 'single' or 'two-map'")
        if self.kind not in ("hom", "het"):
            raise ParameterError("type must be 'hom' or 'het'")
        if self.policy not in ("single", "greedy-two-map"):
            raise ParameterError("policy must be 'single' or 'greedy-two-map'")
        if self.steps < 1:
            raise ParameterError("steps must be positive")

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.mu)

    @property
    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(self.abs_tol, self.rel_tol, max_time=self.max_time)

    @property
    def melnikov(self) -> MelnikovConfig:
        return MelnikovConfig(self.tail_cut, self.quad_tol)

    @property
    def theta_grid(self) -> np.ndarray:
        return np.round(np.linspace(self.theta_lo, self.theta_hi, self.n_theta), 12)


_CASTS = {f.name: f.type for f in fields(RunConfig)}


def _cast(key, value):
    kind = _CASTS[key]
    if key == "channels":
        if isinstance(value, str):
            return tuple(v.strip() for v in value.split(",") if v.strip())
        return tuple(value)
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return str(value)


def read_config_file(path) -> dict:
    """Plain ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "range":
            values.update(_parse_range(value))
        elif key == "grid":
            values.update(_parse_grid(value))
        elif key in _CASTS:
            values[key] = _cast(key, value)
        else:
            raise ParameterError(f"{path}:{n}: unknown key {key!r}")
    return values


def _parse_range(text) -> dict:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise ParameterError("range must be A:B or A:B:STEP")
    out = {"x_lo": float(parts[0]), "x_hi": float(parts[1])}
    if len(parts) == 3:
        out["x_step"] = float(parts[2])
    return out


def _parse_grid(text) -> dict:
    try:
        n, m = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise ParameterError("grid must be NxM") from exc
    return {"n_x": n, "n_theta": m}


# ---------------------------------------------------------------------------
# staged cache


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def stage_keys(cfg: RunConfig) -> dict:
    """Hash inputs per stage; each includes its upstream stage's inputs."""
    model = {"mu": cfg.mu, "abs_tol": cfg.abs_tol, "rel_tol": cfg.rel_tol, "max_time": cfg.max_time}
    family = {**model, "range": [cfg.x_lo, cfg.x_hi, cfg.x_step]}
    manifolds = {**family, "seed_count": cfg.seed_count}
    chart = {
        **manifolds,
        "n_x": cfg.n_x,
        "theta": [cfg.theta_lo, cfg.theta_hi, cfg.n_theta],
        "tail_cut": cfg.tail_cut,
        "quad_tol": cfg.quad_tol,
    }
    return {"family": family, "manifolds": manifolds, "connections": manifolds, "chart": chart}


class Cache:
    def __init__(self, cfg: RunConfig):
        self.root = Path(cfg.out) / "cache"
        self.keys = {k: _digest(v) for k, v in stage_keys(cfg).items()}

    def path(self, stage, label="all") -> Path:
        return self.root / f"{stage}-{label}-{self.keys[stage]}.pkl"

    def has(self, stage, label="all") -> bool:
        return self.path(stage, label).exists()

    def load(self, stage, label="all", command=None):
        p = self.path(stage, label)
        if not p.exists():
            hint = command or stage
            raise StageDependencyError(
                f"missing {stage} result for {label}; run `hill4bp {hint}` with the same settings first"
            )
        with open(p, "rb") as fh:
            return pickle.load(fh)

    def save(self, obj, stage, label="all"):
        self.root.mkdir(parents=True, exist_ok=True)
        p = self.path(stage, label)
        tmp = p.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            pickle.dump(obj, fh, protocol=pickle.HIGHEST_PROTOCOL)
        tmp.replace(p)

    @contextmanager
    def locked(self):
        """Serialise concurrent invocations on one cache directory."""
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / ".lock", "w") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                yield self
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)


def _kind(label) -> str:
    return LABELS[label][0]


# ---------------------------------------------------------------------------
# commands


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def cmd_equilibria(cfg: RunConfig, cache: Cache) -> list[Path]:
    out = Path(cfg.out)
    points = lagrange_points(cfg.params)
    report = {
        "mu": fmt(cfg.mu),
        "points": [
            {
                "label": p.label,
                "x": fmt(p.position[0]),
                "y": fmt(p.position[1]),
                "energy": fmt(p.energy),
                "stability": p.stability,
                "eigenvalues": [[fmt(e.real), fmt(e.imag)] for e in p.eigenvalues],
            }
            for p in points
        ],
    }
    _write_json(out / "equilibria.json", report)
    lines = [f"mu = {fmt(cfg.mu)}"]
    lines += [f"{p.label}  x = {fmt(p.position[0])}  y = {fmt(p.position[1])}  h = {fmt(p.energy)}  {p.stability}" for p in points]
    (out / "equilibria.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [out / "equilibria.json", out / "equilibria.txt"]


def _family(cfg, cache):
    if cache.has("family"):
        return cache.load("family")
    fam = continue_family((cfg.x_lo, cfg.x_hi), cfg.x_step, "L1", cfg.params, cfg.integrator)
    if fam.failures:
        raise Hill4bpError(f"continuation stopped: {fam.failures[0][1]}")
    cache.save(fam, "family")
    return fam


def cmd_family(cfg: RunConfig, cache: Cache) -> list[Path]:
    out = Path(cfg.out)
    fam = _family(cfg, cache)
    fam.to_csv(out / "family.csv")
    rows = []
    for o in fam:
        key = _reference_key(o.x_star, ref.LYAPUNOV_ORBITS)
        if key is None:
            continue
        h, ydot, T = ref.LYAPUNOV_ORBITS[key]
        for name, got, want in (("h", o.energy, h), ("ydot_star", o.ydot_star, ydot), ("T", o.period, T)):
            rows.append([key, name, got, want, got - want])
    _write_rows(out / "family_regression.csv", ["x_star", "quantity", "computed", "reference", "delta"], rows)
    return [out / "family.csv", out / "family_regression.csv"]


def _reference_key(x_star, table, tol=1e-9):
    for key in table:
        if abs(abs(x_star) - key) < tol:
            return key
    return None


def _cuts(cfg, cache, kind):
    if cache.has("manifolds", kind):
        return cache.load("manifolds", kind)
    fam = cache.load("family", command="family")
    cuts = {round(o.x_star, 12): connection_cut(o, kind, cfg.integrator, cfg.seed_count) for o in fam}
    cache.save(cuts, "manifolds", kind)
    return cuts


def cmd_manifolds(cfg: RunConfig, cache: Cache) -> list[Path]:
    out = Path(cfg.out) / "manifolds"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for kind in sorted({_kind(c) for c in cfg.channels}):
        cuts = _cuts(cfg, cache, kind)
        for i, (xs, cut) in enumerate(sorted(cuts.items())):
            p = out / f"{kind}-cut-x{xs:.6f}.csv"
            cut.to_csv(p, curve_id=i)
            written.append(p)
            h = cut.branch.orbit.energy
            tang = tangency_curve(h, cut.section, cfg.params)
            p = out / f"{kind}-tangency-x{xs:.6f}.csv"
            _write_rows(p, ["x", "y", "xdot", "ydot"], to_velocity(tang))
            written.append(p)
    return written


def _channel(cfg, cache, label):
    if cache.has("connections", label):
        return cache.load("connections", label)
    fam = cache.load("family", command="family")
    cuts = cache.load("manifolds", _kind(label), command="manifolds")
    ch = build_channel(fam, label, DEFAULT_WINDOWS[label], cfg.integrator, cfg.seed_count, cuts=cuts)
    cache.save(ch, "connections", label)
    return ch


def cmd_connections(cfg: RunConfig, cache: Cache) -> list[Path]:
    out = Path(cfg.out)
    written = []
    for label in cfg.channels:
        ch = _channel(cfg, cache, label)
        p = out / f"connections-{label}.csv"
        ch.to_csv(p)
        written.append(p)
    return written


def _chart_rows(cfg, channel):
    xs = np.sort(channel.x_star)
    if cfg.n_x == 0 or cfg.n_x >= len(xs):
        return xs
    idx = np.unique(np.round(np.linspace(0, len(xs) - 1, cfg.n_x)).astype(int))
    return xs[idx]


def _chart(cfg, cache, label):
    if cache.has("chart", label):
        return cache.load("chart", label)
    ch = cache.load("connections", label, command=f"connections --channel {label}")
    chart = build_chart(ch, _chart_rows(cfg, ch), cfg.theta_grid, cfg.params, cfg.melnikov)
    cache.save(chart, "chart", label)
    return chart


def cmd_chart(cfg: RunConfig, cache: Cache, gnuplot: bool = False) -> list[Path]:
    out = Path(cfg.out)
    written = []
    for label in cfg.channels:
        chart = _chart(cfg, cache, label)
        p = out / f"chart-{label}.csv"
        chart.to_csv(p)
        written.append(p)
        if gnuplot:
            for which in ("minus_dS", "S"):
                p = out / f"chart-{label}-{which}.gnuplot"
                chart.to_gnuplot(p, which)
                written.append(p)
    return written


def _mechanism_charts(cfg, cache):
    if cfg.mechanism == "single":
        labels = [f"{cfg.kind}-z1"]
    else:
        labels = [f"{cfg.kind}-z1", f"{cfg.kind}-z2"]
    return [cache.load("chart", lab, command=f"chart --channel {lab}") for lab in labels]


def cmd_verify(cfg: RunConfig, cache: Cache, tables: bool = False) -> list[Path]:
    out = Path(cfg.out)
    if tables:
        return verify_tables(cfg, cache)
    charts = _mechanism_charts(cfg, cache)
    if cfg.mechanism == "single":
        report = verify_single_map(charts[0], ref.SINGLE_MAP_BOUNDS[f"{cfg.kind}-z1"])
    else:
        windows = HOM_TWO_MAP_WINDOWS if cfg.kind == "hom" else HET_TWO_MAP_WINDOWS
        report = verify_two_map(charts, windows, ref.TWO_MAP_THRESHOLDS[cfg.kind])
    stem = out / f"verify-{cfg.mechanism}-{cfg.kind}"
    report.to_json(stem.with_suffix(".json"))
    stem.with_suffix(".txt").write_text(report.to_text(), encoding="utf-8")
    return [stem.with_suffix(".json"), stem.with_suffix(".txt")]


def verify_tables(cfg: RunConfig, cache: Cache) -> list[Path]:
    """Computed values next to the published ones, one row per cell."""
    out = Path(cfg.out)
    rows = []

    def add(table, row, column, got, want):
        rows.append([table, row if isinstance(row, str) else f"{row:g}", column, fmt(got), fmt(want), fmt(got - want)])

    l1 = lagrange_points(cfg.params)[0]
    add("equilibria", "L1", "h", l1.energy, ref.H_L1)
    fam = cache.load("family", command="family")
    for o in fam:
        key = _reference_key(o.x_star, ref.LYAPUNOV_ORBITS)
        if key is not None:
            h, ydot, T = ref.LYAPUNOV_ORBITS[key]
            add("lyapunov_orbits", key, "h", o.energy, h)
            add("lyapunov_orbits", key, "ydot_star", o.ydot_star, ydot)
            add("lyapunov_orbits", key, "T", o.period, T)
    names = ("x", "y", "xdot", "ydot")
    points = {**ref.HOMOCLINIC_POINTS, **ref.HETEROCLINIC_POINTS}
    for label in LABELS:
        ch = cache.load("connections", label, command=f"connections --channel {label}")
        for c in ch.connections:
            key = _reference_key(c.x_star, points[label])
            if key is None:
                continue
            z = c.candidate.velocity_form
            for name, got, want in zip(names, z, points[label][key]):
                add(f"{label}-point", key, name, got, want)
            z_hat = to_velocity(c.candidate.partner())
            want_hat = np.array(points[label][key]) * np.array([1, -1, -1, 1])
            for name, got, want in zip(names, z_hat, want_hat):
                add(f"{label}-partner", key, name, got, want)
            anchor, theta = ref.FOOTPOINTS[label][key]
            _, zp = c.anchor_footpoints()
            for name, got, want in zip(names, to_velocity(zp), anchor):
                add(f"{label}-footpoint", key, name, got, want)
            add(f"{label}-footpoint", key, "theta_minus", c.theta_minus, theta)
            add(f"{label}-footpoint", key, "theta_plus", c.theta_plus - 1.0, -theta)
    for label, table in ref.BIRKHOFF_INTEGRALS.items():
        chart = cache.load("chart", label, command=f"chart --channel {label}")
        for xs in chart.x_grid:
            key = _reference_key(xs, table)
            if key is not None:
                add(f"{label}-birkhoff", key, "integral", birkhoff_integral(chart, xs), table[key])
    header = ["table", "row", "column", "computed", "reference", "delta"]
    _write_rows(out / "tables.csv", header, rows)
    width = max(len(r[0]) for r in rows)
    lines = [f"{'table':<{width}}  {'row':>8}  {'column':>11}  {'computed':>24}  {'reference':>24}  {'delta':>24}"]
    for r in rows:
        lines.append(f"{r[0]:<{width}}  {r[1]:>8}  {r[2]:>11}  {r[3]:>24}  {r[4]:>24}  {r[5]:>24}")
    (out / "tables.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [out / "tables.csv", out / "tables.txt"]


def cmd_pseudo(cfg: RunConfig, cache: Cache) -> list[Path]:
    out = Path(cfg.out)
    charts = [cache.load("chart", f"{cfg.kind}-z{j}", command=f"chart --channel {cfg.kind}-z{j}") for j in (1, 2)]
    orbit = pseudo_orbit(charts, cfg.policy, (cfg.start_x, cfg.start_theta), cfg.eps, cfg.steps)
    p = out / f"pseudo-{cfg.kind}-{cfg.policy}.csv"
    orbit.to_csv(p)
    summary = {
        "eps": fmt(orbit.eps),
        "exited": orbit.exited,
        "net_action": fmt(orbit.net_action),
        "net_x_star": fmt(orbit.net_x_star),
        "policy": orbit.policy,
        "steps": orbit.n_steps,
    }
    _write_json(p.with_suffix(".json"), summary)
    return [p, p.with_suffix(".json")]


COMMANDS = {
    "equilibria": cmd_equilibria,
    "family": cmd_family,
    "manifolds": cmd_manifolds,
    "connections": cmd_connections,
    "chart": cmd_chart,
    "verify": cmd_verify,
    "pseudo": cmd_pseudo,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key=value settings file (flags override it)")
    common.add_argument("--out", metavar="DIR", help="output directory (cache lives in DIR/cache)")
    common.add_argument("--mu", type=float)
    common.add_argument("--eps", type=float)
    common.add_argument("--range", metavar="A:B:STEP", help="x* range of the orbit family")
    common.add_argument("--channel", action="append", choices=sorted(LABELS), help="repeatable; default all four")
    common.add_argument("--mechanism", choices=("single", "two-map"))
    common.add_argument("--type", dest="kind", choices=("hom", "het"))
    common.add_argument("--tables", action="store_true", help="verify: side-by-side reference tables")
    common.add_argument("--grid", metavar="NxM", help="chart rows (0 = all family members) x theta nodes")
    common.add_argument("--seed-count", type=int, dest="seed_count")
    common.add_argument("--gnuplot", action="store_true", help="chart: also write gnuplot matrix files")
    common.add_argument("--steps", type=int)
    common.add_argument("--start", metavar="X:THETA", help="pseudo: starting (x*, theta)")
    common.add_argument("--policy", choices=("single", "greedy-two-map"))
    parser = argparse.ArgumentParser(prog="hill4bp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(func.__doc__ or name).splitlines()[0])
    return parser


def config_from_args(args) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    if args.range:
        values.update(_parse_range(args.range))
    if args.grid:
        values.update(_parse_grid(args.grid))
    if args.channel:
        values["channels"] = tuple(dict.fromkeys(args.channel))
    if args.start:
        x, theta = args.start.split(":")
        values.update(start_x=float(x), start_theta=float(theta))
    for key in ("out", "mu", "eps", "mechanism", "kind", "seed_count", "steps", "policy"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    return RunConfig(**values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        cache = Cache(cfg)
        extra = {}
        if args.command == "verify":
            extra["tables"] = args.tables
        elif args.command == "chart":
            extra["gnuplot"] = args.gnuplot
        with cache.locked():
            written = COMMANDS[args.command](cfg, cache, **extra)
    except (Hill4bpError, ValueError) as exc:
        print(f"hill4bp {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
