import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from etdcapture import integrator as ig
from etdcapture.cr3bp import Frame, State6, SystemParams, eps2_from_arrays, jacobi_from_arrays
from etdcapture.etd import etd_states_batch
from etdcapture.propagation import (
    TWO_PI,
    Classification,
    Cr3bpModel,
    EventKind,
    PropagationConfig,
    StopReason,
    anchor_to_etd,
    classify_bc,
    count_revolutions,
    detect_apsides,
    detect_eps2_crossings,
    eps2_dot_cr3bp,
    eps2_dot_sign,
    propagate,
    trajectory_table,
)

P = SystemParams.earth_moon()
MODEL = Cr3bpModel.from_params(P)
CFG = PropagationConfig.for_system(P)
Y_DRO = np.array([1 - P.mu + 0.05, 0.0, 0.01, 0.0, 0.25, 0.02])


def _moon_orbit(r, e=0.0, retro=False):
    # perilune state of a Keplerian lunar orbit expressed in the synodic frame at t = 0
    v = math.sqrt(P.mu * (1 + e) / r) * (-1 if retro else 1)
    r2 = np.array([r, 0.0, 0.0])
    v2 = np.array([0.0, v, 0.0])
    return np.concatenate([r2 + [1 - P.mu, 0, 0], v2 - np.array([-r2[1], r2[0], 0.0])])


def test_dense_output_matches_scipy():
    # one TU: short enough that the close lunar pass does not amplify round-off
    traj = propagate(Y_DRO, MODEL, CFG, 1.0, stop_flags=0)
    f = lambda t, y: ig.rhs_once(0, MODEL.p, MODEL.tab, t, y)
    ref = solve_ivp(f, (0, 1.0), Y_DRO, method="DOP853", rtol=1e-13, atol=1e-13, dense_output=True)
    tq = np.linspace(0, 1.0, 501)
    assert np.abs(traj(tq) - ref.sol(tq).T).max() < 1e-9
    assert traj.status is StopReason.HORIZON and traj.t_end == 1.0


def test_jacobi_conserved_and_reversible():
    fwd = propagate(Y_DRO, MODEL, CFG, 3 * TWO_PI, stop_flags=0)
    cj = jacobi_from_arrays(fwd.y[:, :3], fwd.y[:, 3:], P.mu)
    assert np.abs(cj - cj[0]).max() < 1e-9
    short = propagate(Y_DRO, MODEL, CFG, 1.0, stop_flags=0)
    back = propagate(short.y_end, MODEL, CFG, -1.0, 1.0, stop_flags=0)
    assert back.direction < 0
    assert np.abs(back.y_end - Y_DRO).max() < 1e-8


def test_mirror_symmetry():
    flip = np.array([1, 1, -1, 1, 1, -1.0])
    a = propagate(Y_DRO, MODEL, CFG, TWO_PI, stop_flags=0)
    b = propagate(Y_DRO * flip, MODEL, CFG, TWO_PI, stop_flags=0)
    tq = np.linspace(0, TWO_PI, 300)
    assert np.abs(a(tq) * flip - b(tq)).max() < 1e-10


@pytest.mark.parametrize("retro", [False, True])
def test_revolution_count_matches_kepler_period(retro):
    r = 0.01
    period = TWO_PI * math.sqrt(r ** 3 / P.mu)
    span = 10.5 * period
    traj = propagate(_moon_orbit(r, retro=retro), MODEL, CFG, span, stop_flags=0)
    tot, pro, ret = count_revolutions(traj, (0.0, span))
    assert tot == 10
    assert (pro, ret) == ((0, 10) if retro else (10, 0))
    with pytest.raises(ValueError):
        count_revolutions(traj, (0.0, 2 * span))


def test_perilunes_of_eccentric_orbit():
    r, e = 0.01, 0.3
    a = r / (1 - e)
    period = TWO_PI * math.sqrt(a ** 3 / P.mu)
    traj = propagate(_moon_orbit(r, e), MODEL, CFG, 3.2 * period, stop_flags=0)
    ev = detect_apsides(traj)
    peri = [t for t, k in ev if k is EventKind.PERILUNE]
    apo = [t for t, k in ev if k is EventKind.APOLUNE]
    assert len(peri) >= 3 and len(apo) == 3
    assert np.diff(peri) == pytest.approx(period, rel=0.02)
    assert traj.r2(apo[0])[0] == pytest.approx(a * (1 + e), rel=0.02)


def test_eps2_rate_matches_finite_difference():
    traj = propagate(Y_DRO, MODEL, CFG, 1.0, stop_flags=0)
    h = 1e-5
    for t in (0.2, 0.5, 0.8):
        fd = (traj.eps2(t + h)[0] - traj.eps2(t - h)[0]) / (2 * h)
        assert eps2_dot_cr3bp(traj(t), P.mu) == pytest.approx(fd, rel=1e-6, abs=1e-9)
        assert MODEL.eps2_dot(t, traj(t)) == eps2_dot_cr3bp(traj(t), P.mu)


def _etd_states(gamma=0.5, n=300, seed=0):
    rng = np.random.default_rng(seed)
    xs = 1 - P.mu + rng.uniform(-0.3, 0.3, n)
    ys = rng.uniform(-0.3, 0.3, n)
    st, _, valid = etd_states_batch(xs, ys, 0.0, P.cj_from_gamma(gamma), 0.0, P.mu)
    out = st[:, valid].reshape(-1, 6)
    return out[[eps2_dot_cr3bp(y, P.mu) < 0 for y in out]]


def test_crossings_are_zeros_of_eps2():
    y0 = _etd_states()[0]
    traj = propagate(y0, MODEL, CFG, 2 * TWO_PI)
    cr = detect_eps2_crossings(traj)
    assert cr[0] == 0.0 and len(cr) >= 2
    assert np.abs(traj.eps2(np.array(cr))).max() < 1e-10


def test_crossing_inside_first_sample_interval():
    # far ETD point: eps2 dips below zero and returns well before the first dense sample
    y0 = np.array([1.4487976423195055, 0.9496860498373416, 0.0, 0.9855499406264788, -0.3135231406235158, 0.0])
    assert eps2_dot_cr3bp(y0, P.mu) < 0.0
    traj = propagate(y0, MODEL, CFG, 0.5, stop_flags=ig.STOP_COLLISION)
    cr = detect_eps2_crossings(traj, include_start=False)
    assert cr and cr[0] < traj.sample_times(8)[1]
    assert abs(traj.eps2(cr[0])[0]) < 1e-12
    assert traj.eps2(0.5 * cr[0])[0] < 0.0 < traj.eps2(2.0 * cr[0])[0]


def test_eps_negative_stop():
    y = _etd_states()[0]
    start = propagate(y, MODEL, CFG, -0.01, stop_flags=0).y_end  # slightly positive energy
    traj = propagate(start, MODEL, CFG, 1.0, -0.01, ig.STOP_EPS_NEGATIVE)
    assert traj.status is StopReason.EPS_NEGATIVE
    assert traj.t_end == pytest.approx(0.0, abs=1e-9)


def test_anchor_recovers_etd_point():
    y = _etd_states()[0]
    assert anchor_to_etd(y, MODEL, CFG)[0] == 0.0
    for dt in (-0.01, 0.01):
        moved = propagate(y, MODEL, CFG, dt, stop_flags=0).y_end
        t, ya = anchor_to_etd(moved, MODEL, CFG, dt)
        assert t == pytest.approx(0.0, abs=1e-9)
        assert np.abs(ya - y).max() < 1e-8
        assert abs(float(eps2_from_arrays(ya, P.mu))) < 1e-11
    far = propagate(y, MODEL, CFG, -1.0, stop_flags=0).y_end
    if float(eps2_from_arrays(far, P.mu)) > 0:
        short = PropagationConfig.for_system(P, anchor_window=0.1)
        assert anchor_to_etd(far, MODEL, short, -1.0) is None


def test_classification_outcomes():
    states = _etd_states(n=200)
    reports = [classify_bc(y, MODEL, CFG) for y in states[:60]]
    kinds = {r.classification for r in reports}
    assert Classification.BALLISTIC_CAPTURE in kinds and len(kinds) >= 2
    for r in reports:
        if r.is_capture:
            assert r.n_rev_first >= 1 and r.n_rev_total >= r.n_rev_first
            assert r.n_rev_prograde + r.n_rev_retrograde <= r.n_rev_total + 1
            assert r.t_escape < 0 and r.escaped_backward
            assert np.linalg.norm(r.escape_state[:3] - [1, 0, 0]) > 0  # Earth-centred state
            assert all(t > 0 for t, _ in r.perilunes)


def test_positive_rate_is_not_captured():
    y = _etd_states()[0]
    flipped = y.copy()
    # reversing the Moon-relative velocity flips the sign of the energy rate
    x2 = y[0] - (1 - P.mu)
    v2 = y[3:] + np.array([-y[1], x2, 0.0])
    flipped[3:] = -v2 - np.array([-y[1], x2, 0.0])
    assert eps2_dot_cr3bp(flipped, P.mu) > 0
    assert eps2_dot_sign(State6.from_vector(flipped), P.mu) == 1
    assert classify_bc(flipped, MODEL, CFG).classification is Classification.NO_CAPTURE


def test_input_validation():
    with pytest.raises(ValueError):
        PropagationConfig(rel_tol=0.1)
    with pytest.raises(ValueError):
        PropagationConfig(t_forward=-1.0)
    with pytest.raises(ValueError):
        PropagationConfig(anchor_window=0.0)
    with pytest.raises(ValueError):
        propagate(np.full(6, np.nan), MODEL, CFG, 1.0)
    with pytest.raises(ValueError):
        propagate(State6([0.9, 0, 0], [0, 0, 0], 0.0, Frame.MOON_INERTIAL_ETD), MODEL, CFG, 1.0)


def test_collision_stop():
    y = _moon_orbit(0.01, retro=False)
    y[3:] = -np.array([-y[1], y[0] - (1 - P.mu), 0.0])  # at rest in the inertial frame: falls in
    traj = propagate(y, MODEL, CFG, 1.0)
    assert traj.status is StopReason.COLLISION
    assert traj.r2(traj.t_end)[0] == pytest.approx(P.r_moon_lu, rel=1e-9)


def test_trajectory_table_columns():
    traj = propagate(Y_DRO, MODEL, CFG, 1.0, stop_flags=0)
    tab = trajectory_table(traj, 50, P.mu)
    assert tab.shape == (50, 9)
    assert np.allclose(tab[:, 7], eps2_from_arrays(tab[:, 1:7], P.mu), atol=1e-13)
    assert np.ptp(tab[:, 8]) < 1e-10
    assert np.isnan(trajectory_table(traj, 5)[:, 8]).all()
