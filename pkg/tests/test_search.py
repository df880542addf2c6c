import filecmp
import math
from dataclasses import replace

import numpy as np
import pytest

from etdcapture.cr3bp import eps2_from_arrays, jacobi_from_arrays
from etdcapture.etd import etd_membership
from etdcapture.propagation import classify_bc
from etdcapture.search import (
    CaptureSearch,
    KernelNotFoundError,
    SearchParams,
    duplicate_by_symmetry,
    read_slices,
    write_slices,
)


def test_desk_scale_preset(params):
    full = SearchParams.paper_fidelity(params)
    desk = SearchParams.desk_scale(params)
    assert full.x_G == pytest.approx(7 * params.hill_radius)
    assert (desk.h, desk.d_O, desk.dz) == pytest.approx((10 * full.h, 10 * full.d_O, 10 * full.dz))
    assert desk.tau_s == pytest.approx(full.tau_s / 2)
    assert desk.rel_tol == 1e-11 and full.rel_tol == 1e-12
    assert desk.d_gamma == full.d_gamma and desk.dzeta == full.dzeta


def test_params_validation(params):
    with pytest.raises(ValueError):
        replace(SearchParams.desk_scale(params), d_O=0.001)
    with pytest.raises(ValueError):
        replace(SearchParams.desk_scale(params), h=0.0)


def test_buffer_limit_from_box(params):
    sp = SearchParams.desk_scale(params)
    assert sp.buffer_iter_limit == math.ceil(math.hypot(sp.x_G, sp.y_G) / sp.d_O) + 1
    assert replace(sp, max_buffer_iter=3).buffer_iter_limit == 3


def test_grid_is_centred_on_moon(params):
    g = SearchParams.desk_scale(params).grid(params)
    assert g.xc == 1 - params.mu and g.yc == 0.0


def test_planar_slice_records_are_valid(params, mini_slices, mini_search):
    planar = mini_slices[0]
    assert planar.z == 0.0 and not planar.is_empty
    keys = [r.key for r in planar.records]
    assert len(keys) == len(set(keys))
    cj = params.cj_from_gamma(0.5)
    states = np.array([r.state for r in planar.records])
    assert np.abs(eps2_from_arrays(states, params.mu)).max() < 1e-12
    assert np.abs(jacobi_from_arrays(states[:, :3], states[:, 3:], params.mu) - cj).max() < 1e-12
    xs, ys = states[:, 0], states[:, 1]
    assert planar.region.contains(xs, ys).all()
    assert planar.search_region.contains(xs, ys).all()
    gx, gy = mini_search.grid.coords([r.ix for r in planar.records], [r.iy for r in planar.records])
    assert np.allclose(gx, xs, atol=1e-14) and np.allclose(gy, ys, atol=1e-14)
    for r in planar.records[:: max(1, len(planar.records) // 10)]:
        assert etd_membership(r.x, r.y, r.z, cj, params).is_member
        assert r.n_rev_total >= 1 and r.t_escape < 0 and np.isfinite(r.a_T)


def test_records_reclassify_as_captures(mini_slices, mini_search):
    recs = mini_slices[0].records
    for r in recs[:: max(1, len(recs) // 8)]:
        rep = classify_bc(r.state, mini_search.model, mini_search.full_cfg)
        assert rep.is_capture and rep.n_rev_total == r.n_rev_total


def test_z_sections_follow_planar(mini_slices, mini_search):
    zs = [s.z for s in mini_slices]
    assert zs == pytest.approx([0.0, 0.04, 0.08])
    for s in mini_slices[1:]:
        assert all(r.z == s.z for r in s.records)
        assert not s.is_empty


def test_out_of_range_gamma_gives_empty_slice(mini_search):
    out = mini_search.search_planar([0.0, 2.0])
    assert all(s.is_empty for s in out)


def test_missing_kernel_raises(params, monkeypatch):
    cs = CaptureSearch(params, replace(SearchParams.desk_scale(params), kernel_half_width=0.01))
    monkeypatch.setattr(cs, "test_points", lambda *a, **k: ([], 0))
    with pytest.raises(KernelNotFoundError):
        cs.search_planar([0.5])


def test_duplicate_by_symmetry(mini_slices):
    planar, spatial = mini_slices[0].records, mini_slices[1].records
    assert len(duplicate_by_symmetry(planar)) == len(planar)
    dup = duplicate_by_symmetry(spatial[:5])
    assert len(dup) == 10 and dup[1].z == -spatial[0].z


def test_write_read_round_trip_is_deterministic(tmp_path, mini_slices):
    write_slices(tmp_path / "a", mini_slices)
    write_slices(tmp_path / "b", mini_slices)
    for name in ("slices.csv", "records.csv"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)
    back = read_slices(tmp_path / "a")
    assert [(s.gamma, s.z, s.zeta, len(s.records)) for s in back] == [
        (s.gamma, s.z, s.zeta, len(s.records)) for s in mini_slices
    ]
    assert back[0].region.geom.equals(mini_slices[0].region.geom)
    with pytest.raises(FileNotFoundError):
        read_slices(tmp_path / "missing")
