import numpy as np
import pytest

from hill4bp.dynamics import DEFAULT_MU, ModelParams, PhaseState, energy_ch4bp
from hill4bp.errors import CollisionError, NoCrossingError
from hill4bp.integrator import (
    IntegratorConfig,
    SectionSpec,
    flow,
    flow_to_section,
    propagate,
    propagate_with_stm,
)
from hill4bp.orbits import HALF_SECTION, correct_symmetric_orbit
from hill4bp.reference import LYAPUNOV_ORBITS

J = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])


@pytest.fixture(scope="module")
def orbit(pipeline):
    return pipeline.orbit(0.615)


def test_periodic_orbit_returns_to_anchor(orbit, params):
    end = flow("circular", orbit.anchor, (0.0, orbit.period), params)
    assert np.max(np.abs(end - orbit.anchor)) < 1e-8


def test_zero_span_is_identity(params):
    z = np.array([0.6, 0.1, -0.05, 0.5])
    assert np.array_equal(flow("circular", z, (1.5, 1.5), params), z)
    tr = propagate("circular", z, (0.0, 0.0), params)
    assert np.array_equal(tr(0.0), z)


def test_forward_backward_round_trip(params):
    z = np.array([0.6, 0.05, 0.02, 0.45])
    there = flow("circular", z, (0.0, 5.0), params)
    back = flow("circular", there, (5.0, 0.0), params)
    assert np.max(np.abs(back - z)) < 1e-8


def test_second_crossing_of_y_axis_is_period(orbit, params):
    hit = flow_to_section("circular", orbit.anchor, HALF_SECTION, 2, params)
    assert hit.time == pytest.approx(orbit.period, abs=1e-6)
    assert abs(hit.state[1]) < 1e-12


def test_start_on_section_is_not_a_crossing(orbit, params):
    hit = flow_to_section("circular", orbit.anchor, HALF_SECTION, 1, params)
    assert hit.time == pytest.approx(orbit.period / 2, abs=1e-6)


def test_direction_filter(orbit, params):
    up = SectionSpec.coordinate("y", 0.0, +1)
    down = SectionSpec.coordinate("y", 0.0, -1)
    # the orbit leaves the anchor with ydot > 0, so it next crosses y = 0 downward
    assert flow_to_section("circular", orbit.anchor, down, 1, params).time == pytest.approx(orbit.period / 2, abs=1e-6)
    assert flow_to_section("circular", orbit.anchor, up, 1, params).time == pytest.approx(orbit.period, abs=1e-6)


def test_crossing_time_independent_of_max_step(orbit, params):
    a = flow_to_section("circular", orbit.anchor, HALF_SECTION, 1, params, IntegratorConfig(max_step=0.02))
    b = flow_to_section("circular", orbit.anchor, HALF_SECTION, 1, params, IntegratorConfig(max_step=0.01))
    assert abs(a.time - b.time) < 1e-10


def test_dense_output_matches_endpoints(params):
    z = np.array([0.6, 0.05, 0.02, 0.45])
    tr = propagate("circular", z, (0.0, 3.0), params)
    for t in (0.37, 1.9, 2.71):
        assert np.max(np.abs(tr(t) - flow("circular", z, (0.0, t), params))) < 1e-10
    assert tr.t0 == 0.0 and tr.t1 == 3.0


def test_stm_identity_at_start(params):
    _, M = propagate_with_stm(np.array([0.6, 0.0, 0.0, 0.5]), (0.0, 0.0), params)
    assert np.array_equal(M, np.eye(4))


def test_stm_against_finite_differences(params):
    z = np.array([0.6, 0.05, 0.02, 0.45])
    t = 2.0
    end, M = propagate_with_stm(z, (0.0, t), params)
    # the joint system chooses its own steps, so endpoints agree to the tolerance level
    assert np.max(np.abs(end - flow("circular", z, (0.0, t), params))) < 1e-9
    e = 1e-6
    fd = np.column_stack(
        [(flow("circular", z + e * d, (0.0, t), params) - flow("circular", z - e * d, (0.0, t), params)) / (2 * e) for d in np.eye(4)]
    )
    assert np.max(np.abs(M - fd)) < 1e-5 * np.abs(M).max()


def test_monodromy_spectrum(orbit):
    eigs = orbit.monodromy_spectrum
    lam = eigs[0].real
    assert lam > 1.0
    assert abs(eigs[-1] - 1.0 / lam) < 1e-6 * lam
    assert np.all(np.abs(eigs[1:3] - 1.0) < 1e-4)


def test_symplectic_defect(orbit):
    M = orbit.monodromy
    assert np.max(np.abs(M.T @ J @ M - J)) < 1e-8
    assert np.linalg.det(M) == pytest.approx(1.0, abs=1e-8)


def test_energy_drift_over_ten_periods(orbit, params):
    tr = propagate("circular", orbit.anchor, (0.0, 10 * orbit.period), params)
    h = energy_ch4bp(tr.states, params)
    assert np.max(np.abs(h - orbit.energy)) < 1e-10


def test_deterministic(params):
    z = np.array([0.6, 0.05, 0.02, 0.45])
    a = propagate("circular", z, (0.0, 7.0), params)
    b = propagate("circular", z, (0.0, 7.0), params)
    assert np.array_equal(a.t, b.t) and np.array_equal(a.coeffs, b.coeffs)


def test_event_residual(orbit, params):
    for n in (1, 2, 3):
        hit = flow_to_section("circular", orbit.anchor, HALF_SECTION, n, params)
        assert abs(hit.state[1]) < 1e-12


def test_period_stable_under_tolerance_halving(params):
    x_star, (_, ydot, _) = 0.615, LYAPUNOV_ORBITS[0.615]
    py = PhaseState.from_velocity(x_star, 0.0, 0.0, ydot).py
    a = correct_symmetric_orbit(x_star, py, params, IntegratorConfig(abs_tol=2e-12, rel_tol=2e-12))
    b = correct_symmetric_orbit(x_star, py, params, IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12))
    assert abs(a.period - b.period) < 1e-9


def test_no_crossing_error(params):
    far = SectionSpec.coordinate("x", 5.0)
    with pytest.raises(NoCrossingError):
        flow_to_section("circular", np.array([0.6, 0.0, 0.0, 1.08]), far, 1, params, IntegratorConfig(max_time=5.0))


def test_collision_error(params):
    # released at rest next to the primary, the trajectory falls into it
    z = np.array(PhaseState.from_velocity(1e-3, 0.0, 0.0, 0.0))
    with pytest.raises(CollisionError):
        flow("circular", z, (0.0, 1.0), params)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(abs_tol=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(event_tol=1.0)
    assert IntegratorConfig().scaled(0.5).abs_tol == 5e-13


def test_trajectory_csv(tmp_path, params):
    tr = propagate("circular", np.array([0.6, 0.05, 0.02, 0.45]), (0.0, 1.0), params)
    path = tmp_path / "traj.csv"
    tr.to_csv(path, params, times=[0.0, 0.5, 1.0])
    rows = path.read_text().splitlines()
    assert rows[0] == "t,x,y,px,py,xdot,ydot,h" and len(rows) == 4


def test_default_mu_is_used(params):
    assert params.mu == DEFAULT_MU
