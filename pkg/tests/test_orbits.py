import numpy as np
import pytest

from conftest import X_STARS
from hill4bp.dynamics import DEFAULT_MU, ModelParams, apply_symmetry, field_ch4bp
from hill4bp.errors import RangeError
from hill4bp.integrator import flow
from hill4bp.orbits import (
    continue_family,
    energy_at_rest,
    hill_region_contains,
    k0_param,
    lagrange_points,
    orbit_for_energy,
    symmetric_image_distance,
    y_axis_crossings,
)
from hill4bp.reference import H_L1, LYAPUNOV_ORBITS


def test_lagrange_point_positions():
    p = ModelParams(0.00095)
    l1, l2, l3, l4 = lagrange_points(p)
    # the quoted 0.69351 sits 1.6e-5 below the closed form, so it is checked loosely
    assert l1.position[0] == pytest.approx(0.69351, abs=2e-5)
    assert l1.position[0] == pytest.approx(p.lambda2 ** (-1 / 3), rel=1e-15)
    assert l2.position == (-l1.position[0], 0.0)
    assert l3.position[1] == pytest.approx(p.lambda1 ** (-1 / 3), rel=1e-15)
    assert l4.position == (0.0, -l3.position[1])


def test_lagrange_point_properties(params):
    pts = lagrange_points(params)
    for eq in pts:
        assert np.max(np.abs(field_ch4bp(eq.state, params))) < 1e-12
    assert pts[0].stability == "center-saddle" and pts[1].stability == "center-saddle"
    assert pts[2].stability == "center-center" and pts[3].stability == "center-center"
    assert pts[0].energy == pts[1].energy
    assert np.allclose(apply_symmetry(pts[0].state, "S'"), pts[1].state)
    assert np.allclose(apply_symmetry(pts[2].state, "S"), pts[3].state)


def test_l1_energy():
    assert lagrange_points(ModelParams(0.00095))[0].energy == pytest.approx(H_L1, abs=1e-5)


def test_hill_region(params):
    x, y = 0.4, 0.3
    assert hill_region_contains(x, y, energy_at_rest(x, y, params), params)
    xl = lagrange_points(params)[0].position[0]
    assert hill_region_contains(xl, 0.0, -2.125, params)
    assert not hill_region_contains(xl, 0.0, -2.2, params)
    assert hill_region_contains(50.0, 0.0, -2.125, params)


@pytest.mark.parametrize("x_star", X_STARS)
def test_family_matches_lyapunov_table(pipeline, x_star):
    h, ydot, T = LYAPUNOV_ORBITS[x_star]
    o = pipeline.orbit(x_star)
    assert o.x_star == pytest.approx(x_star, abs=1e-14)
    # the printed momentum column is the velocity ydot* = py* - x*
    assert o.ydot_star == pytest.approx(ydot, abs=1e-6)
    assert o.period == pytest.approx(T, abs=1e-6)
    assert o.energy == pytest.approx(h, abs=1e-6)
    assert o.residual < 1e-11


def test_family_shape(pipeline):
    fam = pipeline.family
    assert len(fam) == 4 and not fam.failures
    assert np.all(np.diff(fam.x_star) > 0)
    assert np.all(np.diff(fam.x_star) <= 0.005 + 1e-12)


def test_single_point_family_and_l2_mirror(params, cfg):
    one = continue_family((0.62, 0.62), 0.005, "L1", params, cfg)
    assert len(one) == 1
    l2 = continue_family((0.62, 0.62), 0.005, "L2", params, cfg)
    assert l2[0].x_star == -one[0].x_star
    assert l2[0].energy == one[0].energy and l2[0].side == "L2"


@pytest.mark.parametrize("x_star", X_STARS)
def test_orbit_invariants(pipeline, params, x_star):
    o = pipeline.orbit(x_star)
    assert np.max(np.abs(flow("circular", o.anchor, (0.0, o.period), params) - o.anchor)) < 1e-8
    assert y_axis_crossings(o) == 2
    assert symmetric_image_distance(o) < 1e-8
    eigs = o.monodromy_spectrum
    lam = eigs[0].real
    assert lam > 1 and abs(eigs[0].imag) < 1e-6
    assert abs(eigs[3] - 1 / lam) < 1e-6
    assert np.all(np.abs(eigs[1:3] - 1.0) < 1e-6)


def test_energy_decreasing_and_action_increasing(pipeline):
    fam = pipeline.family
    h = np.array([o.energy for o in fam])
    action = np.array([o.action for o in fam])
    assert np.all(np.diff(h) < 0)
    order = np.argsort(h)
    assert np.all(np.diff(action[order]) > 0)


def test_action_energy_relation(pipeline):
    fam = pipeline.family
    h = np.array([o.energy for o in fam])
    action = np.array([o.action for o in fam])
    T = np.array([o.period for o in fam])
    slope = np.diff(action) / np.diff(h)
    mid = 0.5 * (T[1:] + T[:-1])
    assert np.all(np.abs(slope / mid - 1.0) < 1e-3)


def test_orbit_for_energy_inverse(params, cfg):
    h = LYAPUNOV_ORBITS[0.615][0]
    o = orbit_for_energy(h, "L1", params, cfg)
    assert o.x_star == pytest.approx(0.615, abs=1e-6)
    assert o.energy == pytest.approx(h, abs=1e-10)
    again = orbit_for_energy(o.energy, "L1", params, cfg)
    assert again.x_star == pytest.approx(o.x_star, abs=1e-9)
    with pytest.raises(RangeError):
        orbit_for_energy(-2.2, "L1", params, cfg)


def test_angle_parameterization(pipeline, params):
    o = pipeline.orbit(0.62)
    assert np.array_equal(np.array(k0_param(o, 0.0, params)), o.anchor)
    half = np.array(k0_param(o, 0.5, params))
    assert abs(half[1]) < 1e-10 and abs(half[2]) < 1e-10 and half[0] > 0.62
    for theta in (0.13, 0.5, 0.87):
        z = np.array(k0_param(o, theta))
        assert np.max(np.abs(flow("circular", z, (0.0, (1 - theta) * o.period), params) - o.anchor)) < 1e-8


def test_family_csv(pipeline, tmp_path):
    path = tmp_path / "family.csv"
    pipeline.family.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "h,x_star,py_star,ydot_star,T,I,lambda" and len(rows) == 5


def test_default_parameters_used(pipeline):
    assert pipeline.family[0].params.mu == DEFAULT_MU
