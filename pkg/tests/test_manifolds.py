import numpy as np
import pytest

from hill4bp.connections import connection_cut
from hill4bp.dynamics import apply_symmetry, energy_ch4bp, field_ch4bp, to_velocity
from hill4bp.errors import SeedingError
from hill4bp.integrator import SECTION_X, SECTION_Y, IntegratorConfig, flow
from hill4bp.manifolds import (
    find_symmetric_connection,
    globalize_to_cut,
    seed_manifold,
    tangency_curve,
    transversality_angle,
)
from hill4bp.reference import HETEROCLINIC_POINTS, HOMOCLINIC_POINTS


@pytest.fixture(scope="module")
def orbit(pipeline):
    return pipeline.orbit(0.63)


@pytest.fixture(scope="module")
def cuts(orbit, cfg):
    out = {}
    for n in (2000, 4000):
        for kind in ("unstable", "stable"):
            branch = seed_manifold(orbit, kind, 1, n_seeds=n, cfg=cfg)
            out[kind, n] = globalize_to_cut(branch, SECTION_X, 1, cfg)
    return out


@pytest.fixture(scope="module")
def hom(cuts, params, cfg):
    return find_symmetric_connection(cuts["unstable", 2000], params, cfg)


def test_zero_displacement_seeds_on_orbit(orbit):
    branch = seed_manifold(orbit, "unstable", 1, displacement=0.0, n_seeds=50)
    assert np.array_equal(branch.seeds, orbit.state_at(np.arange(50) / 50))


def test_seed_energy_error_recorded(orbit, cuts):
    branch = cuts["unstable", 2000].branch
    assert len(branch) == 2000
    assert np.allclose(np.diff(branch.phases), 1 / 2000)
    assert np.max(np.abs(branch.energy_errors)) < 1e-10
    assert np.allclose(branch.energy_errors, energy_ch4bp(branch.seeds, orbit.params) - orbit.energy)


def test_unstable_seed_returns_backward_five_periods(orbit, params, cfg):
    branch = seed_manifold(orbit, "unstable", 1, n_seeds=20, cfg=cfg)
    seed = branch.seeds[3]
    end = flow("circular", seed, (0.0, -5 * orbit.period), params, cfg)
    assert orbit.nearest_phase(end)[1] < 10 * branch.displacement


def test_stable_seeds_are_mirrored_unstable_seeds(orbit, cfg):
    unstable = seed_manifold(orbit, "unstable", 1, n_seeds=200, cfg=cfg)
    stable = seed_manifold(orbit, "stable", 1, n_seeds=200, cfg=cfg)
    mirror = apply_symmetry(unstable.seed_at(np.mod(1 - stable.phases, 1.0)), "S")
    assert np.max(np.abs(stable.seeds - mirror)) < 1e-11


def test_stable_cut_is_mirrored_unstable_cut(cuts):
    cu, cs = cuts["unstable", 2000], cuts["stable", 2000]
    image = apply_symmetry(cu.states, "S")
    index = {round(ph, 12): k for k, ph in enumerate(cu.phases)}
    d = []
    for ph, state in zip(cs.phases, cs.states):
        k = index.get(round(np.mod(1 - ph, 1.0), 12))
        if k is not None:
            d.append(np.max(np.abs(image[k] - state)))
    assert len(d) == len(cs)
    assert max(d) < 1e-8


def test_non_hyperbolic_orbit_is_rejected(orbit):
    from dataclasses import replace

    elliptic = replace(orbit, monodromy=np.eye(4))
    with pytest.raises(SeedingError):
        seed_manifold(elliptic, "unstable")


def test_cut_contains_first_homoclinic_point(cuts):
    x, _, xdot, _ = HOMOCLINIC_POINTS["hom-z1"][0.63]
    pts = cuts["unstable", 2000].coordinates()
    a, seg = pts[:-1], np.diff(pts, axis=0)
    target = np.array([x, xdot])
    s = np.clip(np.sum((target - a) * seg, axis=1) / np.sum(seg**2, axis=1), 0.0, 1.0)
    assert np.min(np.linalg.norm(a + s[:, None] * seg - target, axis=1)) < 1e-4


def test_cut_points_on_section_and_energy_level(orbit, cuts):
    cu = cuts["unstable", 2000]
    assert not len(cu.dropped)
    assert np.max(np.abs(cu.states[:, 1])) < 1e-12
    assert np.all(cu.states[:, 3] < 0)
    assert np.max(np.abs(cu.energy_errors())) < 1e-8
    assert np.all(np.diff(cu.phases) > 0)


@pytest.mark.parametrize("label, which", [("hom-z1", 0), ("hom-z2", 1)])
def test_homoclinic_candidates(hom, label, which):
    assert len(hom) >= 2
    c = hom[which]
    assert np.max(np.abs(c.velocity_form - HOMOCLINIC_POINTS[label][0.63])) < 1e-4
    assert abs(c.velocity_form[2]) < 1e-9 and c.symmetric and c.kind == "homoclinic"
    # the S-image lies on the mirrored (stable) cut, i.e. is the same symmetric point
    assert np.max(np.abs(apply_symmetry(c.state, "S") - c.state)) < 1e-9


def test_heteroclinic_candidate(orbit, params, cfg):
    cut = connection_cut(orbit, "heteroclinic", cfg)
    assert cut.section is SECTION_Y and cut.cut_index == 2
    found = find_symmetric_connection(cut, params, cfg)
    c = found[0]
    assert np.max(np.abs(c.velocity_form - HETEROCLINIC_POINTS["het-z1"][0.63])) < 1e-4
    assert abs(c.velocity_form[3]) < 1e-9 and c.kind == "heteroclinic"
    assert c.target.x_star == -c.source.x_star
    partner = to_velocity(c.partner())
    assert np.allclose(partner, c.velocity_form * [1, -1, -1, 1], atol=1e-15)


def test_doubling_seeds_keeps_points(cuts, hom, params, cfg):
    fine = find_symmetric_connection(cuts["unstable", 4000], params, cfg)
    for a, b in zip(hom[:2], fine[:2]):
        assert np.max(np.abs(a.state - b.state)) < 1e-6


def test_transversality(cuts, hom, params, cfg):
    angle = transversality_angle(cuts["unstable", 2000], cuts["stable", 2000], hom[0])
    assert angle > 1e-3
    fine = find_symmetric_connection(cuts["unstable", 4000], params, cfg)[0]
    angle2 = transversality_angle(cuts["unstable", 4000], cuts["stable", 4000], fine)
    assert abs(angle2 / angle - 1) < 0.1
    assert transversality_angle(cuts["unstable", 2000], cuts["unstable", 2000], hom[0]) == 0.0


def test_connection_asymptotic_in_both_directions(orbit, hom, params):
    cfg = IntegratorConfig(max_time=40.0)
    z = hom[0].state
    back = flow("circular", z, (0.0, -8 * orbit.period), params, cfg)
    fwd = flow("circular", z, (0.0, 8 * orbit.period), params, cfg)
    assert orbit.nearest_phase(back)[1] < 1e-6
    assert orbit.nearest_phase(fwd)[1] < 1e-6


def test_recorded_connection_orbit_is_asymptotic(pipeline):
    for label in ("hom-z1", "het-z1"):
        for c in pipeline.channel(label).connections:
            lo, hi = c.u_range
            assert c.source.nearest_phase(c.orbit_state(lo))[1] < 1e-6
            assert c.target.nearest_phase(c.orbit_state(hi))[1] < 1e-6


def test_candidates_continuous_along_family(pipeline):
    for label in ("hom-z1", "hom-z2", "het-z1", "het-z2"):
        states = np.array([c.state for c in pipeline.channel(label).connections])
        assert np.all(np.linalg.norm(np.diff(states, axis=0), axis=1) < 0.1)


def test_tangency_curve(params):
    h = -2.15
    curve = tangency_curve(h, SECTION_X, params)
    assert len(curve)
    v = to_velocity(curve)
    assert np.max(np.abs(curve[:, 1])) == 0.0
    assert np.max(np.abs(v[:, 3])) < 1e-10
    assert np.max(np.abs(energy_ch4bp(curve, params) - h)) < 1e-10
    half = len(curve) // 2
    assert np.allclose(v[:half, 2], -v[half:, 2]) and np.allclose(v[:half, 0], v[half:, 0])
    # crossings through the locus are tangential, nearby crossings on the same level are not
    assert max(abs(field_ch4bp(z, params)[1]) for z in curve) < 1e-10
    k = len(curve) // 4
    probe = curve[k].copy()
    xdot = to_velocity(probe)[2]
    probe[2] -= xdot - 0.9 * xdot
    ydot = np.sqrt(xdot**2 - (0.9 * xdot) ** 2)
    probe[3] += ydot
    assert abs(energy_ch4bp(probe, params) - h) < 1e-10
    assert abs(field_ch4bp(probe, params)[1]) > 1e-3


def test_tangency_curve_empty_in_forbidden_region(params):
    # around L1 at h = -2.2 the bottleneck is closed, so no section state exists there
    assert tangency_curve(-2.2, SECTION_X, params, coords=[0.65, 0.7, 0.75]).shape == (0, 4)


def test_symmetric_search_requires_unstable_branch(cuts, params):
    with pytest.raises(ValueError):
        find_symmetric_connection(cuts["stable", 2000], params)


def test_cut_csv(cuts, tmp_path):
    path = tmp_path / "cut.csv"
    cuts["unstable", 2000].to_csv(path, curve_id=3)
    rows = path.read_text().splitlines()
    assert rows[0].startswith("curve,seed_phase") and rows[1].startswith("3,") and len(rows) == 2001
