from dataclasses import replace

import numpy as np
import pytest

from conftest import X_STARS
from hill4bp.connections import LABELS, build_channel, compute_footpoints, phase_shift
from hill4bp.errors import ContinuationError
from hill4bp.reference import FOOTPOINTS

ALL = tuple(LABELS)


def wrapped(a):
    """Distance to the nearest integer."""
    return abs((a + 0.5) % 1.0 - 0.5)


@pytest.mark.parametrize("label", ALL)
@pytest.mark.parametrize("x_star", X_STARS)
def test_asymptotic_phases_match_tables(pipeline, label, x_star):
    c = pipeline.connection(label, x_star)
    theta = FOOTPOINTS[label][x_star][1]
    # the pair (theta^-, theta^+) equals (theta, -theta) mod 1
    assert wrapped(c.theta_minus - theta) < 1e-4
    assert wrapped(c.theta_plus + theta) < 1e-4


@pytest.mark.parametrize("label", ALL)
def test_symmetric_phases_and_shift(pipeline, label):
    for c in pipeline.channel(label).connections:
        assert wrapped(c.theta_plus + c.theta_minus) < 1e-6
        assert wrapped(c.delta + 2 * c.theta_minus) < 1e-6
        assert c.delta == phase_shift(c)
        assert 0.0 <= c.delta < 1.0 and 0.0 <= c.theta_minus < 1.0 and 0.0 <= c.theta_plus < 1.0


def test_shift_of_first_homoclinic_channel(pipeline):
    c = pipeline.connection("hom-z1", 0.63)
    # oracle: twice the tabulated phase
    assert wrapped(c.delta - (-2 * 0.30161988)) < 1e-4
    assert c.delta_raw == pytest.approx(-2 * c.theta_minus, abs=1e-6)


@pytest.mark.parametrize("label", ALL)
def test_footpoints_on_orbits(pipeline, label):
    for c in pipeline.channel(label).connections:
        assert c.source.nearest_phase(c.z_minus)[1] < 1e-8
        assert c.target.nearest_phase(c.z_plus)[1] < 1e-8
        assert c.source.x_star * c.target.x_star < 0 or label.startswith("hom")


def test_zero_phase_gives_zero_shift(pipeline):
    c = replace(pipeline.connection("hom-z1", 0.62), theta_minus=0.0, theta_plus=0.0, delta_raw=0.0)
    assert phase_shift(c) == 0.0


@pytest.mark.parametrize("label", ALL)
def test_shift_invariant_along_connection_orbit(pipeline, label):
    c = pipeline.connection(label, 0.625)
    T = c.period
    for s in (0.3 * T, -1.1 * T, 0.5 * T, 1.7 * T, -0.25 * T):
        moved = c.shifted(s)
        assert np.max(np.abs(moved.state - c.orbit_state(s))) < 1e-12
        assert wrapped(moved.delta - c.delta) < 1e-6
        assert wrapped(moved.theta_minus + moved.theta_plus - 2 * s / T) < 1e-6


@pytest.mark.parametrize("label", ALL)
def test_shift_independent_of_seed_distance(pipeline, cfg, label):
    c = pipeline.connection(label, 0.62)
    # a seed closer in starts elsewhere on the fiber and flies longer
    other = compute_footpoints(c.candidate, cfg=cfg, displacement=0.8 * c.seed_displacement)
    assert other.flight_time > c.flight_time + 0.01
    assert np.max(np.abs(other.state - c.state)) < 1e-6 * np.max(np.abs(c.state))
    assert wrapped(other.delta - c.delta) < 1e-6


def test_connection_orbit_is_reversible(pipeline):
    c = pipeline.connection("het-z2", 0.615)
    from hill4bp.dynamics import apply_symmetry

    u = np.linspace(0.1, 0.9 * c.flight_time, 7)
    assert np.max(np.abs(c.orbit_state(u) - apply_symmetry(c.orbit_state(-u), c.reversor))) < 1e-15
    with pytest.raises(ValueError):
        c.orbit_state(2 * c.flight_time)


def test_channel_windows(pipeline):
    assert pipeline.channel("hom-z1").window == (-1.0, 0.0)
    assert pipeline.channel("hom-z2").window == (-0.6, 0.4)
    for label in ALL:
        ch = pipeline.channel(label)
        assert ch.window[1] - ch.window[0] == 1.0
        lo = ch.theta_star + np.array([c.theta_minus for c in ch.connections])
        assert np.allclose(lo, ch.window[0], atol=1e-15)
        r = ch.reduce([-3.7, 0.0, 2.25])
        assert np.all((r >= ch.window[0]) & (r < ch.window[1]))


def test_channel_continuity(pipeline):
    for label in ALL:
        d = pipeline.channel(label).delta
        assert np.all(np.abs((np.diff(d) + 0.5) % 1.0 - 0.5) < 0.2)


def test_branch_jump_is_rejected(pipeline, cfg):
    with pytest.raises(ContinuationError):
        build_channel(pipeline.family, "hom-z1", (-1.0, 0.0), cfg, max_jump=1e-4)
    with pytest.raises(ValueError):
        build_channel(pipeline.family, "hom-z3")


def test_channel_window_from_offset(pipeline, cfg):
    ch = pipeline.channel("hom-z1")
    other = replace(ch, window=(-0.37, -0.37 + 1.0))
    assert other.window[1] - other.window[0] == 1.0


def test_channel_csv(pipeline, tmp_path):
    path = tmp_path / "channel.csv"
    pipeline.channel("het-z1").to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0].split(",")[:5] == ["x_star", "x", "y", "xdot", "ydot"] and len(rows) == 5
