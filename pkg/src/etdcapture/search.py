"""Capture-set search over (gamma, z, zeta) slices.

Every slice follows the same recipe: start from the previous slice's capture
region, grow it by ``d_O`` while boundary vertices still produce captures,
then classify every grid node inside the grown region. The planar sweep in
gamma seeds itself from a kernel found by scanning the L1 neck.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .cr3bp import SystemParams, cj_from_gamma, l1_position
from .database import CaptureRecord, CaptureStore, mirror_record, record_from_report, slice_id
from .etd import Branch, EtdPoint, etd_states_batch
from .polygons import GridSpec, PolyRegion, boundary_vertices, buffer, clip_grid, region_from_points
from .propagation import (
    Classification,
    Cr3bpModel,
    PropagationConfig,
    TWO_PI,
    classify_bc,
    eps2_dot_cr3bp,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchParams:
    """Grid, buffering and horizon settings for the capture-set search."""

    x_G: float
    y_G: float
    h: float = 4e-4
    d_O: float = 2e-3
    d_gamma: float = 0.02
    dz: float = 4e-3
    dzeta: float = math.radians(1.0)
    tau_s: float = 10.0 * TWO_PI
    tau_sp: float = 2.0 * TWO_PI
    tau_B: float = 2.0 * TWO_PI
    gamma_max: float = 1.36
    max_buffer_iter: int = 0  # 0: derive from box diameter / d_O
    max_sections: int = 200
    kernel_half_width: float = 0.08
    kernel_h: float = 0.0  # 0: use h
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12

    def __post_init__(self):
        for name in ("x_G", "y_G", "h", "d_O", "d_gamma", "dz", "dzeta", "tau_s", "tau_sp", "tau_B"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not self.d_O > self.h:
            raise ValueError("buffer offset d_O must exceed the grid step h")

    @classmethod
    def paper_fidelity(cls, params: SystemParams) -> "SearchParams":
        rh = params.hill_radius
        return cls(x_G=7.0 * rh, y_G=9.0 * rh)

    @classmethod
    def desk_scale(cls, params: SystemParams) -> "SearchParams":
        """Coarse preset: steps x10, horizons halved."""
        return cls.paper_fidelity(params).desk_scaled()

    def desk_scaled(self) -> "SearchParams":
        """Steps x10, horizons halved, tolerances no tighter than 1e-11."""
        return replace(
            self,
            h=self.h * 10,
            d_O=self.d_O * 10,
            dz=self.dz * 10,
            tau_s=self.tau_s / 2,
            tau_sp=self.tau_sp / 2,
            tau_B=self.tau_B / 2,
            rel_tol=max(self.rel_tol, 1e-11),
            abs_tol=max(self.abs_tol, 1e-11),
        )

    def grid(self, params: SystemParams) -> GridSpec:
        return GridSpec(1.0 - params.mu, 0.0, self.x_G, self.y_G, self.h)

    @property
    def buffer_iter_limit(self) -> int:
        if self.max_buffer_iter > 0:
            return self.max_buffer_iter
        return int(math.ceil(math.hypot(self.x_G, self.y_G) / self.d_O)) + 1

    def prop_config(self, params: SystemParams, forward: float, backward: float) -> PropagationConfig:
        return PropagationConfig.for_system(
            params, rel_tol=self.rel_tol, abs_tol=self.abs_tol, t_forward=forward, t_backward=backward
        )


@dataclass(frozen=True)
class CaptureSlice:
    """Captures found at one (gamma, z, zeta) lattice node."""

    gamma: float
    z: float
    zeta: float
    region: PolyRegion
    records: tuple
    search_region: PolyRegion = field(default_factory=PolyRegion.empty)
    n_tested: int = 0
    buffer_iterations: int = 0
    elapsed_s: float = 0.0

    @property
    def is_empty(self) -> bool:
        return len(self.records) == 0


class KernelNotFoundError(RuntimeError):
    pass


@dataclass
class _Candidate:
    ix: int
    iy: int
    point: EtdPoint
    state: np.ndarray


def _candidates(xs, ys, ixs, iys, gamma, z, zeta, params: SystemParams) -> list[_Candidate]:
    """ETD states at the given positions (both branches), eps2-rate filtered."""
    if len(xs) == 0:
        return []
    mu = params.mu
    cj = cj_from_gamma(gamma, params)
    states, sigmas, valid = etd_states_batch(xs, ys, z, cj, zeta, mu)
    out = []
    for k in np.nonzero(valid)[0]:
        for b, branch in enumerate((Branch.ETA_PLUS, Branch.ETA_MINUS)):
            if b == 1 and abs(sigmas[0, k] - sigmas[1, k]) < 1e-12:
                continue
            st = states[b, k]
            if eps2_dot_cr3bp(st, mu) >= 0.0:
                continue
            pt = EtdPoint(float(xs[k]), float(ys[k]), float(z), float(gamma), float(zeta), branch, float(sigmas[b, k]))
            out.append(_Candidate(int(ixs[k]), int(iys[k]), pt, st))
    return out


def _classify_job(args):
    state, mu, cfg, quick = args
    return classify_bc(state, Cr3bpModel(mu), cfg, quick=quick)


def _classify_many(cands: Sequence[_Candidate], mu: float, cfg: PropagationConfig, quick: bool, jobs: int):
    work = [(c.state, mu, cfg, quick) for c in cands]
    if jobs > 1 and len(work) > 64:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_classify_job, work, chunksize=32))
    return [_classify_job(w) for w in work]


class CaptureSearch:
    """Coordinator for the slice-by-slice capture-set computation."""

    def __init__(self, params: SystemParams, search: SearchParams, jobs: int = 1):
        self.params = params
        self.sp = search
        self.jobs = jobs
        self.grid = search.grid(params)
        self.model = Cr3bpModel.from_params(params)
        self.quick_cfg = search.prop_config(params, search.tau_sp, search.tau_B)
        self.full_cfg = search.prop_config(params, search.tau_s, search.tau_B)

    # -- building blocks -------------------------------------------------
    def test_points(self, xs, ys, gamma, z, zeta, ixs=None, iys=None, quick=True):
        """Classify ETD states at positions; returns ``(captures, n_tested)``."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if ixs is None:
            ixs, iys = self.grid.index_of(xs, ys)
        cands = _candidates(xs, ys, ixs, iys, gamma, z, zeta, self.params)
        cfg = self.quick_cfg if quick else self.full_cfg
        reports = _classify_many(cands, self.params.mu, cfg, quick, self.jobs)
        hits = [(c, r) for c, r in zip(cands, reports) if r.classification is Classification.BALLISTIC_CAPTURE]
        return hits, len(cands)

    def grow_region(self, start: PolyRegion, gamma, z, zeta) -> tuple[PolyRegion, int, int]:
        """Buffer ``start`` by d_O while its new boundary vertices yield captures.

        Runs at least once (the first enlargement is always tested). Returns
        the grown region, the iteration count and the number of tested states.
        """
        region = start
        n_tested = 0
        box = self.grid.box()
        for it in range(1, self.sp.buffer_iter_limit + 1):
            region = buffer(region, self.sp.d_O).intersection(box)
            verts = boundary_vertices(region)
            if verts.size == 0:
                return region, it, n_tested
            hits, n = self.test_points(verts[:, 2], verts[:, 3], gamma, z, zeta, quick=True)
            n_tested += n
            if not hits:
                return region, it, n_tested
        log.warning("buffer loop hit its iteration limit at gamma=%.4f z=%.4f zeta=%.4f", gamma, z, zeta)
        return region, self.sp.buffer_iter_limit, n_tested

    def fill_region(self, region: PolyRegion, gamma, z, zeta):
        """Full classification of grid nodes inside ``region``; returns records and test count."""
        ix, iy = clip_grid(region, self.grid)
        xs, ys = self.grid.coords(ix, iy)
        # skip the Moon's own position in the plane z = 0
        keep = ~((np.abs(xs - (1.0 - self.params.mu)) < 1e-15) & (np.abs(ys) < 1e-15) & (z == 0.0))
        cands = _candidates(xs[keep], ys[keep], ix[keep], iy[keep], gamma, z, zeta, self.params)
        quick = _classify_many(cands, self.params.mu, self.quick_cfg, True, self.jobs)
        caps = [c for c, r in zip(cands, quick) if r.classification is Classification.BALLISTIC_CAPTURE]
        full = _classify_many(caps, self.params.mu, self.full_cfg, False, self.jobs)
        records = [
            record_from_report(c.point, r, c.ix, c.iy, c.state, self.model.gm_earth, self.model.gm_moon)
            for c, r in zip(caps, full)
            if r.classification is Classification.BALLISTIC_CAPTURE
        ]
        return records, len(cands)

    def compute_slice(self, start: PolyRegion, gamma, z, zeta) -> CaptureSlice:
        t0 = time.perf_counter()
        if start.is_empty:
            return CaptureSlice(gamma, z, zeta, PolyRegion.empty(self.sp.h), ())
        grown, iters, n_b = self.grow_region(start, gamma, z, zeta)
        records, n_f = self.fill_region(grown, gamma, z, zeta)
        region = region_from_points([(r.x, r.y) for r in records], self.sp.h)
        dt = time.perf_counter() - t0
        log.info(
            "slice gamma=%.3f z=%.4f zeta=%.4f: %d captures, %d tested, %d buffer iterations, %.1fs",
            gamma, z, zeta, len(records), n_b + n_f, iters, dt,
        )
        return CaptureSlice(gamma, z, zeta, region, tuple(records), grown, n_b + n_f, iters, dt)

    # -- kernel ------------------------------------------------------------
    def find_kernel(self, gamma: float) -> Optional[tuple[float, float]]:
        """First capture on a scan of the L1 neck ordered by distance from L1."""
        xl1 = l1_position(self.params.mu)
        hk = self.sp.kernel_h or self.sp.h
        n = int(round(self.sp.kernel_half_width / hk))
        offs = np.arange(-n, n + 1) * hk
        X, Y = np.meshgrid(xl1 + offs, offs)
        X = X.ravel()
        Y = Y.ravel()
        # snap to the search grid so kernel cells align with later slices
        ix, iy = self.grid.index_of(X, Y)
        X, Y = self.grid.coords(ix, iy)
        order = np.argsort(np.hypot(X - xl1, Y), kind="stable")
        X, Y, ix, iy = X[order], Y[order], ix[order], iy[order]
        chunk = 64
        for s in range(0, X.size, chunk):
            hits, _ = self.test_points(X[s : s + chunk], Y[s : s + chunk], gamma, 0.0, 0.0, ix[s : s + chunk], iy[s : s + chunk])
            if hits:
                c = hits[0][0]
                return c.point.x, c.point.y
        return None

    # -- sweeps --------------------------------------------------------------
    def search_planar(self, gammas: Sequence[float]) -> list[CaptureSlice]:
        """Planar capture sets C(gamma, 0, 0) for an increasing gamma sequence.

        Gammas outside ``(0, gamma_max]`` give empty slices. The first admissible
        gamma is seeded from an L1-neck kernel; later ones grow from the
        previous slice.
        """
        out = []
        prev: Optional[PolyRegion] = None
        for g in gammas:
            if not (0.0 < g <= self.sp.gamma_max):
                out.append(CaptureSlice(g, 0.0, 0.0, PolyRegion.empty(self.sp.h), ()))
                continue
            if prev is None or prev.is_empty:
                kernel = self.find_kernel(g)
                if kernel is None:
                    if prev is None:
                        raise KernelNotFoundError(
                            f"no capture found scanning +-{self.sp.kernel_half_width} LU around L1 at gamma={g}"
                        )
                    out.append(CaptureSlice(g, 0.0, 0.0, PolyRegion.empty(self.sp.h), ()))
                    continue
                prev = region_from_points([kernel], self.sp.h)
            sl = self.compute_slice(prev, g, 0.0, 0.0)
            out.append(sl)
            prev = sl.region
        return out

    def search_z_sections(self, planar: Sequence[CaptureSlice]) -> list[CaptureSlice]:
        """z-sections C(gamma, z_j, 0) for j >= 1, stopping at the first empty slice per gamma."""
        out = []
        for base in planar:
            prev = base
            for j in range(1, self.sp.max_sections + 1):
                if prev.is_empty:
                    break
                z = j * self.sp.dz
                sl = self.compute_slice(prev.region, base.gamma, z, 0.0)
                out.append(sl)
                prev = sl
        return out

    def search_zeta_sections(self, zslices: Sequence[CaptureSlice], stride: int = 2) -> list[CaptureSlice]:
        """zeta-sections on the coarsened lattice (every ``stride``-th gamma and z).

        Both zeta signs are swept from each zeta = 0 slice until the first
        empty section.
        """
        gammas = sorted({round(s.gamma, 10) for s in zslices})
        keep_g = set(gammas[::stride])
        by_g: dict = {}
        for s in zslices:
            if round(s.gamma, 10) in keep_g:
                by_g.setdefault(round(s.gamma, 10), []).append(s)
        out = []
        for g in sorted(by_g):
            zs = sorted(by_g[g], key=lambda s: s.z)
            for base in zs[::stride]:
                for sign in (1.0, -1.0):
                    prev = base
                    for k in range(1, self.sp.max_sections + 1):
                        if prev.is_empty:
                            break
                        zeta = sign * k * self.sp.dzeta
                        if abs(zeta) >= 0.5 * math.pi:
                            break
                        sl = self.compute_slice(prev.region, base.gamma, base.z, zeta)
                        out.append(sl)
                        prev = sl
        return out


def duplicate_by_symmetry(records: Iterable[CaptureRecord]) -> list[CaptureRecord]:
    """Input records plus their x-y plane mirrors; in-plane records are not duplicated."""
    out = []
    for r in records:
        out.append(r)
        if r.z == 0.0 and r.vz == 0.0:
            continue
        out.append(mirror_record(r))
    return out


SLICE_INDEX_COLUMNS = ("slice_id", "gamma", "z_LU", "zeta_rad", "n_records", "n_tested", "buffer_iterations", "h_LU")


def write_slices(root, slices: Sequence[CaptureSlice], records_csv: bool = True) -> CaptureStore:
    """Persist slices under ``root``: record store, one region CSV per slice and ``slices.csv``.

    Wall-clock timings are left out so reruns give byte-identical files.

    Slices already present in the index are replaced in the index but their
    records must not collide with stored ones.
    """
    root = Path(root)
    (root / "regions").mkdir(parents=True, exist_ok=True)
    store = CaptureStore(root / "store")
    index = {}
    idx_path = root / "slices.csv"
    if idx_path.exists():
        with open(idx_path, newline="") as fh:
            index = {row["slice_id"]: row for row in csv.DictReader(fh)}
    for sl in slices:
        sid = slice_id(sl.gamma, sl.z, sl.zeta)
        store.append(sl.records)
        sl.region.to_csv(root / "regions" / f"{sid}.csv")
        index[sid] = dict(
            slice_id=sid,
            gamma=repr(float(sl.gamma)),
            z_LU=repr(float(sl.z)),
            zeta_rad=repr(float(sl.zeta)),
            n_records=len(sl.records),
            n_tested=sl.n_tested,
            buffer_iterations=sl.buffer_iterations,
            h_LU=repr(float(sl.region.h)),
        )
    with open(idx_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SLICE_INDEX_COLUMNS)
        w.writeheader()
        for sid in sorted(index, key=lambda k: (float(index[k]["gamma"]), float(index[k]["z_LU"]), float(index[k]["zeta_rad"]))):
            w.writerow(index[sid])
    if records_csv:
        store.export_csv(root / "records.csv")
    return store


def read_slices(root) -> list[CaptureSlice]:
    """Inverse of :func:`write_slices`, in index order."""
    root = Path(root)
    idx_path = root / "slices.csv"
    if not idx_path.exists():
        raise FileNotFoundError(idx_path)
    store = CaptureStore(root / "store", create=False)
    out = []
    with open(idx_path, newline="") as fh:
        for row in csv.DictReader(fh):
            h = float(row["h_LU"])
            reg_path = root / "regions" / f"{row['slice_id']}.csv"
            region = PolyRegion.from_csv(reg_path, h) if reg_path.exists() else PolyRegion.empty(h)
            recs = tuple(store.slice_records(row["slice_id"]))
            out.append(
                CaptureSlice(
                    float(row["gamma"]),
                    float(row["z_LU"]),
                    float(row["zeta_rad"]),
                    region,
                    recs,
                    n_tested=int(row["n_tested"]),
                    buffer_iterations=int(row["buffer_iterations"]),
                )
            )
    return out


__all__ = [
    "CaptureSearch",
    "CaptureSlice",
    "KernelNotFoundError",
    "SearchParams",
    "duplicate_by_symmetry",
    "read_slices",
    "write_slices",
]
