import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import ndimage

from etdcapture.cr3bp import SystemParams, eps2_from_arrays, jacobi_constant, jacobi_from_arrays, two_body_energy_moon
from etdcapture.etd import (
    AxisSingularityError,
    Branch,
    PoleError,
    SphereStatus,
    axis_etd_cj,
    degenerate_axis_states,
    etd_initial_conditions,
    etd_membership,
    etd_slice,
    etd_states_batch,
    injection_angle,
    moon_reach_cj,
    zeta_band,
)

PARAMS = SystemParams.earth_moon()
near_moon = st.tuples(st.floats(0.75, 1.15), st.floats(-0.2, 0.2), st.floats(-0.1, 0.1))


@given(near_moon, st.floats(0.0, 1.3), st.floats(-1.2, 1.2))
def test_generated_states_satisfy_constraints(pos, gamma, zeta):
    params = PARAMS
    x, y, z = pos
    assume(math.hypot(x - 1 + params.mu, y) > 1e-3)
    cj = params.cj_from_gamma(gamma)
    for point, s in etd_initial_conditions(x, y, z, gamma, zeta, params):
        assert abs(two_body_energy_moon(s, params.mu)) <= 1e-12
        assert abs(jacobi_constant(s, params.mu) - cj) <= 1e-12
        assert point.zeta == zeta


def test_two_distinct_branches_off_boundary(params):
    out = etd_initial_conditions(1.1, 0.2, 0.0, 0.5, 0.0, params)
    assert [p.branch for p, _ in out] == [Branch.ETA_PLUS, Branch.ETA_MINUS]
    assert np.linalg.norm(out[0][1].v - out[1][1].v) > 1e-3


def test_zeta_band_edges(params):
    x, y, z, g = 1.1, 0.2, 0.0, 0.5
    band = zeta_band(x, y, z, g, params)
    assert band is not None and 0 < band < math.pi / 2
    assert len(etd_initial_conditions(x, y, z, g, band * (1 - 1e-6), params)) == 2
    assert etd_initial_conditions(x, y, z, g, band * (1 + 1e-6), params) == []
    at_edge = etd_initial_conditions(x, y, z, g, band, params)
    assert 1 <= len(at_edge) <= 2
    if len(at_edge) == 2:
        assert np.allclose(at_edge[0][1].v, at_edge[1][1].v, atol=1e-5)


@given(near_moon, st.floats(0.0, 1.3))
def test_membership_iff_nonempty_band(pos, gamma):
    params = PARAMS
    x, y, z = pos
    assume(math.hypot(x - 1 + params.mu, y) > 1e-3)
    s0 = injection_angle(x, y, z, gamma, 0.0, params)
    assume(abs(abs(s0) - 1.0) > 1e-9)
    m = etd_membership(x, y, z, params.cj_from_gamma(gamma), params)
    assert m.is_member == (zeta_band(x, y, z, gamma, params) is not None)


def test_batch_matches_scalar(params):
    rng = np.random.default_rng(3)
    xs = 1 - params.mu + rng.uniform(-0.2, 0.2, 200)
    ys = rng.uniform(-0.2, 0.2, 200)
    gamma, zeta = 0.4, 0.3
    states, sigma, valid = etd_states_batch(xs, ys, 0.02, params.cj_from_gamma(gamma), zeta, params.mu)
    assert valid.any() and not valid.all()
    for k in np.flatnonzero(valid)[:40]:
        out = etd_initial_conditions(xs[k], ys[k], 0.02, gamma, zeta, params)
        for b, (p, s) in enumerate(out):
            assert np.allclose(states[b, k], s.vector, atol=1e-13)
            assert sigma[b, k] == pytest.approx(p.sigma, abs=1e-13)
    assert np.isnan(states[:, ~valid]).all() or np.isnan(sigma[:, ~valid]).all()
    ok = states[:, valid]
    assert np.abs(eps2_from_arrays(ok, params.mu)).max() < 1e-12
    assert np.abs(jacobi_from_arrays(ok[..., :3], ok[..., 3:], params.mu) - params.cj_from_gamma(gamma)).max() < 1e-12


def test_singular_inputs(params):
    with pytest.raises(AxisSingularityError):
        injection_angle(1 - params.mu, 0.0, 0.1, 0.5, 0.0, params)
    with pytest.raises(PoleError):
        injection_angle(0.9, 0.1, 0.0, 0.5, math.pi / 2, params)
    with pytest.raises(ValueError):
        etd_membership(1 - params.mu, 0.0, 0.0, 3.0, params)


def test_gamma_zero_planar_domain_has_two_components(params):
    r = etd_slice(0.0, 0.0, (0.6, 1.4, -0.4, 0.4), 0.004, params)
    _, n = ndimage.label(r.member)
    assert n == 2


def test_domain_reaches_moon_at_closing_energy(params):
    cj = moon_reach_cj(params.mu)
    assert cj == pytest.approx(3 - 4 * params.mu + params.mu ** 2, abs=0)
    assert etd_membership(1 - params.mu - 1e-6, 0.0, 0.0, cj, params).is_member


@pytest.mark.parametrize("z", [0.1, 0.3])
def test_axis_law(params, z):
    cj = axis_etd_cj(z, params.mu)
    m = etd_membership(1 - params.mu, 0.0, z, cj, params)
    assert m.status is SphereStatus.DEGENERATE_COINCIDENT
    assert not etd_membership(1 - params.mu, 0.0, z, cj + 1e-6, params).is_member
    assert not etd_membership(1 - params.mu, 0.0, z, cj - 1e-6, params).is_member
    for s in degenerate_axis_states(z, params, 20, np.random.default_rng(0)):
        assert abs(jacobi_constant(s, params.mu) - cj) <= 1e-10
        assert abs(two_body_energy_moon(s, params.mu)) <= 1e-12


def test_raster_flags_forbidden_region(params):
    r = etd_slice(0.0, 0.0, (0.6, 1.4, -0.4, 0.4), 0.02, params)
    assert r.forbidden.any()
    assert not (r.member & r.forbidden).any()
    with pytest.raises(ValueError):
        etd_slice(0.0, 0.0, (0.6, 1.4, -0.4, 0.4), 0.0, params)
