import math

import numpy as np
import pytest
from helpers import synthetic_records
from hypothesis import given
from hypothesis import strategies as st

from etdcapture.cr3bp import SystemParams
from etdcapture.metric import (
    LTB_ELEMENTS_CR3BP,
    ElementSet,
    NearParabolicError,
    dv2_metric,
    dv_metric,
    dv_metric_symmetric,
    earth_gm,
    moon_gm,
    record_metric_arrays,
    threshold_filter,
    wrap_pi,
    write_filter_report,
)

P = SystemParams.earth_moon()
GM = earth_gm(P)
LU = P.length_unit
REF = LTB_ELEMENTS_CR3BP


def _slow(ref):
    a = ref.a * LU
    return math.sqrt(GM * (1 - ref.e) / (a * (1 + ref.e)))


def _semi(ref):
    return math.sqrt(GM / (ref.a * LU * (1 - ref.e ** 2)))


def _shift(ref, **d):
    return ElementSet(*(getattr(ref, k) + d.get(k, 0.0) for k in ("a", "e", "i", "raan", "argp")))


def test_identity_is_zero():
    m = dv_metric(REF, REF, GM, LU)
    assert m.dv == 0.0 and m.subcosts == (0.0,) * 5


small = st.floats(-0.05, 0.05).filter(lambda v: v != 0.0)


@given(small)
def test_single_delta_closed_forms(d):
    cases = {
        "a": 0.5 * (d / REF.a) * _slow(REF),
        "e": 0.5 * d * _semi(REF),
        "i": _slow(REF) * d,
        "raan": _slow(REF) * math.sin(REF.i) * d,
        "argp": 0.5 * REF.e * _semi(REF) * d,
    }
    for k, want_kms in cases.items():
        m = dv_metric(REF, _shift(REF, **{k: d}), GM, LU)
        assert m.dv == pytest.approx(abs(want_kms) * 1000.0, rel=1e-12, abs=1e-12)
        idx = ("a", "e", "i", "raan", "argp").index(k)
        assert m.subcosts[idx] == pytest.approx(want_kms * 1000.0, rel=1e-12, abs=1e-12)


@given(st.floats(-1, 1), st.floats(-0.05, 0.05), st.floats(-0.1, 0.1), st.floats(-7, 7), st.floats(-7, 7))
def test_quadrature_and_linearity(da, de, di, dO, dw):
    tgt = _shift(REF, a=da * 0.1, e=de, i=di, raan=dO, argp=dw)
    m = dv_metric(REF, tgt, GM, LU)
    assert m.dv >= 0.0
    assert m.dv == pytest.approx(math.sqrt(sum(s * s for s in m.subcosts)), rel=1e-12, abs=1e-12)
    for k in ("a", "e", "i", "raan", "argp"):
        dropped = ElementSet(**{**tgt.__dict__, k: getattr(REF, k)})
        assert dv_metric(REF, dropped, GM, LU).dv <= m.dv + 1e-9
    # wrapped angle deltas stay in (-pi, pi], so scale only the unwrapped part
    half = _shift(REF, a=da * 0.05, e=de / 2, i=di / 2, raan=wrap_pi(dO) / 2, argp=wrap_pi(dw) / 2)
    full = dv_metric(REF, _shift(REF, a=da * 0.1, e=de, i=di, raan=wrap_pi(dO), argp=wrap_pi(dw)), GM, LU)
    assert np.allclose(np.array(dv_metric(REF, half, GM, LU).subcosts) * 2, full.subcosts, rtol=1e-9, atol=1e-9)


def test_angle_wrapping():
    assert wrap_pi(math.pi) == math.pi and wrap_pi(-math.pi) == math.pi
    a = dv_metric(REF, _shift(REF, raan=0.1), GM, LU)
    b = dv_metric(REF, _shift(REF, raan=0.1 + 4 * math.pi), GM, LU)
    assert a.dv == pytest.approx(b.dv, rel=1e-12)


def test_symmetric_branch():
    tgt = _shift(REF, raan=math.pi + 0.01, argp=-math.pi + 0.02, a=0.01)
    direct = dv_metric(REF, tgt, GM, LU)
    sym = dv_metric_symmetric(REF, tgt, GM, LU)
    assert sym.branch == 1 and sym.dv < direct.dv
    assert sym.dv == pytest.approx(dv_metric(REF, tgt.mirrored(), GM, LU).dv, rel=1e-12)
    back = dv_metric_symmetric(REF, tgt.mirrored(), GM, LU)
    assert back.dv == pytest.approx(sym.dv, rel=1e-12) and back.branch == 0
    # planar circular reference: the RAAN and argp rows both vanish, so the mirror costs nothing
    flat_ref = ElementSet(1.7, 0.0, 0.0, 0.3, 1.0)
    flat = ElementSet(1.72, 0.21, 0.0, 2.0, 1.0)
    assert dv_metric(flat_ref, flat, GM, LU).dv == pytest.approx(dv_metric(flat_ref, flat.mirrored(), GM, LU).dv, rel=1e-12)
    # with e > 0 the argp row sees the full pi shift even for a planar reference
    ecc_ref = ElementSet(1.7, 0.2, 0.0, 0.3, 1.0)
    gap = dv_metric(ecc_ref, flat.mirrored(), GM, LU).dv_argp - dv_metric(ecc_ref, flat, GM, LU).dv_argp
    assert abs(gap) == pytest.approx(0.5 * 0.2 * _semi(ecc_ref) * math.pi * 1000, rel=1e-12)


def test_near_parabolic_inputs():
    with pytest.raises(NearParabolicError):
        dv_metric(ElementSet(1.7, 1.0, 0.1, 0, 0), REF, GM, LU)
    with pytest.raises(NearParabolicError):
        dv_metric(REF, ElementSet(1.7, 1.2, 0.1, 0, 0), GM, LU)
    with pytest.raises(NearParabolicError):
        dv_metric(ElementSet(-1.0, 0.2, 0.1, 0, 0), REF, GM, LU)


def test_threshold_filter_subset_semantics(tmp_path):
    recs = synthetic_records(1000, seed=3)
    dv, _, _ = record_metric_arrays(recs, REF, P)
    thr = float(np.median(dv))
    hits = threshold_filter(recs, REF, thr, P)
    keys = {h.record.key for h in hits}
    assert keys == {r.key for r, d in zip(recs, dv) if d <= thr}
    assert all(h.metric.dv <= thr for h in hits)
    lower = {h.record.key for h in threshold_filter(recs, REF, thr / 2, P)}
    assert lower <= keys
    assert len(threshold_filter(recs, REF, math.inf, P)) == 1000
    assert threshold_filter(recs, REF, 0.0, P) == []
    exact = recs[0].replace(a_T=REF.a, e_T=REF.e, i_T=REF.i, raan_T=REF.raan, argp_T=REF.argp)
    assert [h.record for h in threshold_filter([exact] + recs[1:], REF, 0.0, P)] == [exact]
    with pytest.raises(ValueError):
        threshold_filter(recs, REF, -1.0, P)
    write_filter_report(tmp_path / "f.csv", hits)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert len(lines) == len(hits) + 1 and "dv_i_mps" in lines[0]


def test_dv2_uses_moon_and_first_reference():
    a = ElementSet(0.03, 0.4, math.radians(88), 1.0, 2.0)
    b = ElementSet(0.031, 0.42, math.radians(92), 1.2, 2.1)
    assert dv2_metric(a, a, P).dv == 0.0
    ab = dv2_metric(a, b, P)
    ba = dv2_metric(b, a, P, reference=a)
    assert ab.dv == pytest.approx(ba.dv, rel=1e-12)
    slow = math.sqrt(moon_gm(P) * (1 - a.e) / (a.a * LU * (1 + a.e)))
    assert ab.dv_i == pytest.approx(slow * (b.i - a.i) * 1000, rel=1e-12)
