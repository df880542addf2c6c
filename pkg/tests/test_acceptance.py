"""Acceptance checks. Each test records one PASS/FAIL line, printed in the terminal summary."""
import dataclasses
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from helpers import ephemeris_reference, report, synthetic_records
from scipy import ndimage
from shapely.geometry import box as shapely_box

from etdcapture import integrator as ig
from etdcapture.analysis import (
    DEG,
    SAMPLE_BC_STATES,
    TransferConfig,
    optimize_three_impulse,
    replay_ephemeris_state,
    state_from_earth_inertial,
)
from etdcapture.cr3bp import (
    Center,
    cartesian_to_elements,
    elements_to_cartesian,
    eps2_from_arrays,
    jacobi_constant,
    jacobi_from_arrays,
)
from etdcapture.database import mirror_record, write_csv
from etdcapture.ephemeris import AnalyticEphemeris, EtdAlignedFrames, TabulatedEphemeris, build_rotopuls
from etdcapture.etd import (
    axis_etd_cj,
    degenerate_axis_states,
    etd_membership,
    etd_slice,
    etd_states_batch,
    moon_reach_cj,
)
from etdcapture.metric import (
    LTB_ELEMENTS_CR3BP,
    ElementSet,
    dv_metric,
    dv_metric_symmetric,
    earth_gm,
    record_metric_arrays,
    threshold_filter,
)
from etdcapture.polygons import PolyRegion
from etdcapture.propagation import (
    Cr3bpModel,
    PropagationConfig,
    classify_bc,
    detect_eps2_crossings,
    eps2_dot_cr3bp,
    propagate,
)
from etdcapture.search import CaptureSearch, CaptureSlice, SearchParams
from etdcapture.transition import (
    EphemerisTransition,
    TransitionParams,
    TransitionStatus,
    write_transition_report,
)

Z_FLIP = np.array([1.0, 1.0, -1.0, 1.0, 1.0, -1.0])
EPHEMERIS_DIR_ENV = "ETDCAPTURE_EPHEMERIS_DIR"


def _etd_ics(params, gamma, n, rng, half=(0.3, 0.3), z=0.0, zeta=0.0):
    """``n`` ETD states at uniform random positions around the Moon, random branch."""
    cj = params.cj_from_gamma(gamma)
    out = []
    while len(out) < n:
        x = rng.uniform(1 - params.mu - half[0], 1 - params.mu + half[0], 4 * n)
        y = rng.uniform(-half[1], half[1], 4 * n)
        states, _, valid = etd_states_batch(x, y, z, cj, zeta, params.mu)
        out.extend(states[rng.integers(0, 2), k] for k in np.nonzero(valid)[0])
    return np.array(out[:n]), cj


# -- 1 ---------------------------------------------------------------------------


def test_c1_energy_conservation(params):
    rng = np.random.default_rng(11)
    model = Cr3bpModel.from_params(params)
    cfg = PropagationConfig.for_system(params)
    t0 = time.perf_counter()
    worst = 0.0
    n = 0
    for gamma in (0.3, 0.7, 1.0):
        ics, cj = _etd_ics(params, gamma, 100, rng)
        for y0 in ics:
            tr = propagate(y0, model, cfg, 10 * 2 * math.pi, stop_flags=ig.STOP_COLLISION)
            worst = max(worst, float(np.abs(jacobi_from_arrays(tr.y[:, :3], tr.y[:, 3:], params.mu) - cj).max()))
            n += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 60.0
    report("C1 energy conservation", ok, f"{n} ICs over 10*2pi TU, max |dC_J| = {worst:.2e} (<= 1e-9), {elapsed:.1f} s (< 60 s)")
    assert ok


# -- 2 ---------------------------------------------------------------------------


def test_c2_etd_constraints(params):
    rng = np.random.default_rng(12)
    worst_e2 = worst_cj = 0.0
    n = 0
    min_gap = math.inf
    while n < 10_000:
        gamma = float(rng.uniform(0.05, 1.3))
        z = float(rng.uniform(-0.15, 0.15))
        zeta = float(rng.uniform(-0.3, 0.3))
        cj = params.cj_from_gamma(gamma)
        x = rng.uniform(1 - params.mu - 0.4, 1 - params.mu + 0.4, 2000)
        y = rng.uniform(-0.4, 0.4, 2000)
        states, sig, valid = etd_states_batch(x, y, z, cj, zeta, params.mu)
        k = np.nonzero(valid)[0]
        if k.size == 0:
            continue
        s = states[:, k].reshape(-1, 6)
        worst_e2 = max(worst_e2, float(np.abs(eps2_from_arrays(s, params.mu)).max()))
        worst_cj = max(worst_cj, float(np.abs(jacobi_from_arrays(s[:, :3], s[:, 3:], params.mu) - cj).max()))
        off = np.abs(np.sin(sig[0, k])) < 1 - 1e-6
        if off.any():
            gap = np.linalg.norm(states[0, k[off], 3:] - states[1, k[off], 3:], axis=1)
            min_gap = min(min_gap, float(gap.min()))
        n += s.shape[0]
    ok = worst_e2 <= 1e-12 and worst_cj <= 1e-12 and min_gap > 0.0
    report(
        "C2 ETD constraints",
        ok,
        f"{n} ICs, max |eps2| = {worst_e2:.1e}, max |C_J - target| = {worst_cj:.1e} (<= 1e-12), "
        f"min branch separation off the boundary {min_gap:.1e} VU",
    )
    assert ok


# -- 3 ---------------------------------------------------------------------------


def test_c3_etd_topology(params):
    raster = etd_slice(0.0, 0.0, (0.6, 1.4, -0.4, 0.4), 0.004, params)
    _, n_comp = ndimage.label(raster.member)
    cj = moon_reach_cj(params.mu)
    reach = cj == 3 - 4 * params.mu + params.mu ** 2 and etd_membership(1 - params.mu - 1e-6, 0.0, 0.0, cj, params).is_member
    axis_err = 0.0
    rng = np.random.default_rng(13)
    for z in (0.1, 0.3):
        law = axis_etd_cj(z, params.mu)
        for s in degenerate_axis_states(z, params, 50, rng):
            axis_err = max(axis_err, abs(jacobi_constant(s, params.mu) - law))
    ok = n_comp == 2 and reach and axis_err <= 1e-10
    report(
        "C3 ETD topology",
        ok,
        f"(a) {n_comp} components at gamma=0 (want 2); (b) member near the Moon at C_J=3-4mu+mu^2: {reach}; "
        f"(c) axis law max |dC_J| = {axis_err:.1e} (<= 1e-10)",
    )
    assert ok


# -- 4 ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_sweep(params):
    cs = CaptureSearch(params, SearchParams.desk_scale(params))
    t0 = time.perf_counter()
    planar = cs.search_planar([0.52])
    zs = cs.search_z_sections(planar)
    return cs, planar + zs, time.perf_counter() - t0


def test_c4_capture_set_sanity(params, desk_sweep):
    cs, slices, elapsed = desk_sweep
    nonempty = [s for s in slices if not s.is_empty]
    contained = True
    for s in nonempty:
        xs = [r.x for r in s.records]
        ys = [r.y for r in s.records]
        contained &= bool(s.region.contains(xs, ys).all())
        # the capture region is a union of grid cells, so allow one step beyond the tested boundary
        contained &= s.region.geom.difference(s.search_region.geom.buffer(s.region.h)).area <= 1e-12
        contained &= bool(s.search_region.contains(xs, ys).all())
        cj = params.cj_from_gamma(s.gamma)
        contained &= all(etd_membership(r.x, r.y, r.z, cj, params).is_member for r in s.records[::10])
    sample = [r for s in nonempty for r in s.records][::100]
    same = 0
    for r in sample:
        rep = classify_bc(r.state, cs.model, cs.full_cfg)
        same += rep.is_capture and rep.n_rev_total == r.n_rev_total and rep.n_rev_prograde == r.n_rev_prograde
    idempotent = same == len(sample)
    ends_empty = slices[-1].is_empty and slices[-1].z > 0
    ok = slices[0].z == 0.0 and not slices[0].is_empty and contained and idempotent and ends_empty and elapsed < 1800
    sizes = ", ".join(f"z={s.z:.2f}:{len(s.records)}" for s in slices)
    report(
        "C4 capture-set sanity",
        ok,
        f"gamma=0.52 desk scale, records per slice [{sizes}]; containment {contained}; "
        f"reclassified {same}/{len(sample)} identically; sweep ends empty: {ends_empty}; {elapsed:.0f} s (< 1800 s)",
    )
    assert ok


@pytest.mark.xfail(strict=True, reason="desk-scale areas grow up to z ~ 0.12 before shrinking")
def test_c4_monotone_area(desk_sweep):
    _, slices, _ = desk_sweep
    areas = [s.region.area for s in slices]
    monotone = all(b <= a for a, b in zip(areas, areas[1:]))
    report(
        "C4 monotone shrink (qualitative)",
        monotone,
        "region areas by z: " + ", ".join(f"{s.z:.2f}:{a:.4f}" for s, a in zip(slices, areas)),
    )
    assert monotone


# -- 5 ---------------------------------------------------------------------------


def test_c5_forward_capture_fraction(params):
    rng = np.random.default_rng(15)
    sp = SearchParams.desk_scale(params)
    ics, _ = _etd_ics(params, 0.5, 1000, rng, half=(sp.x_G, sp.y_G))
    model = Cr3bpModel.from_params(params)
    cfg = PropagationConfig.for_system(params)
    entering = 0
    agree = 0
    for y0 in ics:
        tr = propagate(y0, model, cfg, cfg.anchor_window, stop_flags=ig.STOP_COLLISION)
        later = [t for t in detect_eps2_crossings(tr, include_start=False) if t > 1e-9]
        t_hi = later[0] if later else tr.t_end
        inside = bool(np.all(tr.eps2(np.linspace(1e-3 * t_hi, 0.999 * t_hi, 16)) < 0.0))
        entering += inside
        agree += inside == (eps2_dot_cr3bp(y0, params.mu) < 0.0)
    frac = entering / len(ics)
    ok = 0.4 <= frac <= 0.6
    report(
        "C5 forward-capture fraction",
        ok,
        f"{frac:.3f} of {len(ics)} ETD ICs at gamma=0.5 enter eps2<0 in the first crossing window "
        f"(want [0.4, 0.6]); eps2-rate filter agrees on {agree}/{len(ics)}",
    )
    assert ok and agree == len(ics)


# -- 6 ---------------------------------------------------------------------------


def test_c6_mirror_symmetry(params, mini_slices, mini_search):
    spatial = [r for s in mini_slices if s.z > 0 for r in s.records if np.isfinite(r.a_T)]
    picks = spatial[:: max(1, len(spatial) // 100)][:100]
    model, cfg = mini_search.model, mini_search.full_cfg
    worst_pos = 0.0
    worst_ang = 0.0
    worst_shape = 0.0
    for r in picks:
        m = mirror_record(r)
        for span in (cfg.t_forward, -cfg.t_backward):
            a = propagate(r.state, model, cfg, span, stop_flags=ig.STOP_COLLISION)
            b = propagate(m.state, model, cfg, span, stop_flags=ig.STOP_COLLISION)
            lo, hi = sorted((0.0, a.t_end if abs(a.t_end) < abs(b.t_end) else b.t_end))
            tq = np.linspace(lo, hi, 200)
            worst_pos = max(worst_pos, float(np.abs(b(tq)[:, :3] - a(tq)[:, :3] * Z_FLIP[:3]).max()))
        rep = classify_bc(m.state, model, cfg)
        el = cartesian_to_elements(rep.escape_state[:3], rep.escape_state[3:], model.gm_earth, Center.EARTH)
        for got, want in ((el.raan, m.raan_T), (el.argp, m.argp_T)):
            worst_ang = max(worst_ang, abs(math.remainder(got - want, 2 * math.pi)))
        worst_shape = max(worst_shape, abs(el.a - r.a_T) / r.a_T, abs(el.e - r.e_T), abs(el.i - r.i_T))
    ok = worst_pos <= 1e-8 and worst_ang <= 1e-9 and worst_shape <= 1e-9 and len(picks) == 100
    report(
        "C6 mirror symmetry",
        ok,
        f"{len(picks)} records, max position mismatch {worst_pos:.1e} LU (<= 1e-8); "
        f"recomputed RAAN/argp vs (+pi, -pi) rule {worst_ang:.1e} rad; a, e, i unchanged to {worst_shape:.1e}",
    )
    assert ok


# -- 7 ---------------------------------------------------------------------------


def test_c7_ephemeris_round_trip(params):
    prov = AnalyticEphemeris()
    t_etd = 802221652.5
    frames = EtdAlignedFrames.from_provider(prov, t_etd)
    rng = np.random.default_rng(17)
    r = rng.normal(size=(1000, 3))
    v = rng.normal(size=(1000, 3))
    worst = 0.0
    for dt in (0.0, 3.3e5, 2.1e6):
        rot = build_rotopuls(prov, t_etd + dt, params, frames)
        r2, v2 = rot.inverse(*rot.forward(r, v))
        rel = max(
            np.max(np.linalg.norm(r2 - r, axis=1) / np.linalg.norm(r, axis=1)),
            np.max(np.linalg.norm(v2 - v, axis=1) / np.linalg.norm(v, axis=1)),
        )
        worst = max(worst, float(rel))
    align = float(np.abs(build_rotopuls(prov, t_etd, params, frames).C - np.eye(3)).max())
    ortho = frames.orthonormality_error()
    ok = worst <= 1e-9 and align <= 1e-12 and ortho <= 1e-12
    report(
        "C7 ephemeris round trip",
        ok,
        f"1000 states at 3 epochs, max relative error {worst:.1e} (<= 1e-9); axis alignment at t_etd {align:.1e} (<= 1e-12)",
    )
    assert ok


# -- 8 ---------------------------------------------------------------------------


def _metric_fixture(n, seed):
    """Records near the reference orbit for half of the set, random otherwise."""
    rng = np.random.default_rng(seed)
    ref = LTB_ELEMENTS_CR3BP
    recs = synthetic_records(n, seed=seed)
    out = []
    for k, r in enumerate(recs):
        if k % 2:
            r = r.replace(
                a_T=ref.a + rng.normal(0, 0.05),
                e_T=ref.e + rng.normal(0, 0.02),
                i_T=abs(ref.i + rng.normal(0, 0.05)),
                raan_T=ref.raan + rng.normal(0, 0.3) + (math.pi if k % 4 == 1 else 0.0),
                argp_T=ref.argp + rng.normal(0, 0.2) - (math.pi if k % 4 == 1 else 0.0),
            )
        out.append(r)
    return out


def test_c8_metric_behaviour(params, mini_slices, tmp_path):
    gm, lu = earth_gm(params), params.length_unit
    ref = LTB_ELEMENTS_CR3BP
    zero = dv_metric(ref, ref, gm, lu).dv
    a_km = ref.a * lu
    slow = math.sqrt(gm * (1 - ref.e) / (a_km * (1 + ref.e)))
    semi = math.sqrt(gm / (a_km * (1 - ref.e ** 2)))
    closed = {
        "a": lambda d: 0.5 * d / ref.a * slow,
        "e": lambda d: 0.5 * d * semi,
        "i": lambda d: slow * d,
        "raan": lambda d: slow * math.sin(ref.i) * d,
        "argp": lambda d: 0.5 * ref.e * semi * d,
    }
    rng = np.random.default_rng(18)
    worst_rel = 0.0
    for key, f in closed.items():
        for d in rng.uniform(-0.05, 0.05, 50):
            tgt = dataclasses.replace(ref, **{key: getattr(ref, key) + d})
            want = abs(f(d)) * 1000.0
            worst_rel = max(worst_rel, abs(dv_metric(ref, tgt, gm, lu).dv - want) / want)

    recs = _metric_fixture(1000, 19)
    dv, _, _ = record_metric_arrays(recs, ref, params)
    hits = threshold_filter(recs, ref, 60.0, params)
    keys = {h.record.key for h in hits}
    subset = keys == {r.key for r, d in zip(recs, dv) if d <= 60.0} and 0 < len(keys) < len(recs)
    subset &= {h.record.key for h in threshold_filter(recs, ref, 30.0, params)} <= keys
    write_csv(tmp_path / "fixture.csv", recs)

    model = Cr3bpModel.from_params(params)
    spatial = [r for s in mini_slices if s.z > 0 for r in s.records if np.isfinite(r.a_T)]
    pick = np.random.default_rng(1).choice(len(spatial), 2, replace=False)
    perts = (dict(a=1.01, e=0.005, i=0.3 * DEG), dict(a=0.99, e=-0.01, i=0.5 * DEG))
    ratios = []
    for k, pt in zip(pick, perts):
        tgt = spatial[k]
        el = tgt.origin_elements()
        oe = dataclasses.replace(el, a=el.a * pt["a"], e=el.e + pt["e"], i=el.i + pt["i"])
        d = dv_metric_symmetric(ElementSet.of(oe), el, gm, lu).dv
        rr, vv = elements_to_cartesian(oe, model.gm_earth)
        y0 = state_from_earth_inertial(model, tgt.t_escape, rr, vv)
        res = optimize_three_impulse(model, y0, tgt.t_escape, tgt.state, 0.0, params, config=TransferConfig())
        ratios.append((res.plan.total_dv, d, res.plan.total_dv / d if res.feasible else math.nan))
    ratio_ok = all(0.5 <= q <= 2.5 for _, _, q in ratios)
    ok = zero == 0.0 and worst_rel <= 1e-12 and subset and ratio_ok
    pairs = "; ".join(f"{t:.1f}/{d:.1f} m/s = {q:.2f}" for t, d, q in ratios)
    report(
        "C8 metric behaviour",
        ok,
        f"d_v(ref, ref) = {zero}; closed forms max rel error {worst_rel:.1e} (<= 1e-12); "
        f"60 m/s filter keeps {len(keys)}/1000 with subset semantics {subset}; "
        f"three-impulse/metric ratios {pairs} (want [0.5, 2.5])",
    )
    assert ok


# -- 9 ---------------------------------------------------------------------------


def test_c9_sample_replay(params):
    folder = os.environ.get(EPHEMERIS_DIR_ENV)
    if not folder:
        report("C9 sample-IC replay", None, f"needs tabulated Moon/Sun ephemerides ({EPHEMERIS_DIR_ENV}); analytic provider in use")
        pytest.skip("not applicable with the analytic ephemeris")
    d = Path(folder)
    prov = TabulatedEphemeris.from_csv(d / "moon.csv", d / "sun.csv")
    s = np.array(SAMPLE_BC_STATES["longest"])
    res = replay_ephemeris_state(prov, s[:3], s[3:], params, horizon_days=600.0)
    ok = res.lifetime_days > 300.0 and res.n_rev_total > 30
    report(
        "C9 sample-IC replay",
        ok,
        f"lifetime {res.lifetime_days:.1f} days (> 300), {res.n_rev_total} revolutions (> 30), ended {res.status.name}",
    )
    assert ok


# -- 10 --------------------------------------------------------------------------


def test_c10_transition_miniature(params, mini_search, mini_slices, tmp_path):
    sp = mini_search.sp
    tp = TransitionParams.from_search(sp, coarse_factor=3)
    t0 = time.perf_counter()
    probe = EphemerisTransition(params, sp, tp, AnalyticEphemeris(), mini_slices[0].records[0].origin_elements())
    et = EphemerisTransition(params, sp, tp, AnalyticEphemeris(), ephemeris_reference(probe, mini_slices[0].records))
    triplets = list(mini_slices[:3])
    cx = 1 - params.mu + 0.05
    doomed = PolyRegion.from_geometry(shapely_box(cx - 0.02, 0.03, cx + 0.02, 0.07), sp.h)
    triplets.append(CaptureSlice(0.5, 0.3, 0.0, doomed, ()))
    results = et.run(triplets)
    elapsed = time.perf_counter() - t0
    write_transition_report(tmp_path / "transition_report.csv", [r.report for r in results])
    out = [r for res in results for r in res.slice.records]
    dv = record_metric_arrays(out, et.reference, params)[0] if out else np.empty(0)
    records_ok = bool(out) and float(dv.max()) <= 60.0 and all(r.n_rev_total >= 2 for r in out)
    fail = results[-1].report
    flagged = not fail.flag and fail.status in (TransitionStatus.FAILED, TransitionStatus.PREFILTER_EMPTY) and not results[-1].slice.records
    ok = records_ok and flagged and elapsed < 600.0
    statuses = ", ".join(f"z={r.report.z:.2f}:{r.report.status.value}/{r.report.n_output}" for r in results)
    report(
        "C10 transition miniature",
        ok,
        f"{statuses}; {len(out)} records, max d_v {float(dv.max()) if out else math.nan:.1f} m/s (<= 60), "
        f"min revs {min((r.n_rev_total for r in out), default=0)} (>= 2); designed failure flagged: {flagged}; "
        f"{elapsed:.0f} s (< 600 s)",
    )
    assert ok
