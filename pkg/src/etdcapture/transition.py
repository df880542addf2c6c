"""Transfer of CR3BP capture-set slices into the Earth-Moon-Sun ephemeris model.

For each slice the CR3BP capture region is grown by polygon buffering while
its boundary keeps producing ephemeris captures. A coarse grid inside the
grown region is then scored with the distance metric to carve a smaller
search region, and the fine grid inside it is fully classified. Only
captures with at least ``min_revs`` revolutions and a metric below the final
threshold are kept.
"""
from __future__ import annotations

import csv
import enum
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .cr3bp import Center, SystemParams, T_ETD_J2000_S, cartesian_to_elements, cj_from_gamma, OrbitalElements
from .database import CaptureRecord, record_from_report
from .ephemeris import (
    EphemerisCoverageError,
    EphemerisModel,
    EtdAlignedFrames,
    RotopulsState,
    build_rotopuls,
    synodic_batch_to_model,
)
from .etd import Branch, EtdPoint, etd_states_batch
from .metric import ElementSet, dv_metric_arrays, earth_gm, record_metric_arrays
from .polygons import GridSpec, PolyRegion, boundary_vertices, buffer, clip_grid, intersects_boundary, region_from_points
from .propagation import (
    PropagationConfig,
    StopReason,
    TWO_PI,
    Trajectory,
    backward_escape,
    classify_bc,
)
from .search import CaptureSlice, SearchParams

log = logging.getLogger(__name__)


class NotBackwardEscapingError(ValueError):
    """Backward trajectory did not reach the escape radius with positive lunar energy."""


class TransitionStatus(enum.Enum):
    SUCCESS = "success"  # captures found while growing the boundary
    FALLBACK = "fallback"  # boundary search failed; captures found inside the CR3BP region
    FAILED = "failed"  # nothing found, even after the fallback
    PREFILTER_EMPTY = "prefilter_empty"  # no coarse node passed the metric prefilter
    COVERAGE_ERROR = "coverage_error"  # ephemeris does not span the horizons


@dataclass(frozen=True)
class TransitionParams:
    """Horizons (dimensionless), thresholds (m/s) and loop limits."""

    t_etd: float = T_ETD_J2000_S
    tau_sp: float = 2.0 * TWO_PI
    tau_B: float = 2.0 * TWO_PI
    tau_s: float = 10.0 * TWO_PI
    coarse_factor: int = 10
    prefilter_dv: float = 70.0
    final_dv: float = 60.0
    max_iter: int = 20
    min_revs: int = 2
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12

    def __post_init__(self):
        if not self.prefilter_dv > self.final_dv > 0.0:
            raise ValueError("thresholds must satisfy prefilter_dv > final_dv > 0")
        for name in ("tau_sp", "tau_B", "tau_s"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.coarse_factor < 1 or self.max_iter < 1:
            raise ValueError("coarse_factor and max_iter must be >= 1")

    @classmethod
    def from_search(cls, sp: SearchParams, **kw) -> "TransitionParams":
        kw.setdefault("tau_sp", sp.tau_sp)
        kw.setdefault("tau_B", sp.tau_B)
        kw.setdefault("tau_s", sp.tau_s)
        kw.setdefault("rel_tol", sp.rel_tol)
        kw.setdefault("abs_tol", sp.abs_tol)
        return cls(**kw)


@dataclass(frozen=True)
class TransitionReport:
    gamma: float
    z: float
    zeta: float
    status: TransitionStatus
    flag: bool = False
    fallback: bool = False
    iterations: int = 0
    n_boundary_tested: int = 0
    n_boundary_bcs: int = 0
    n_coarse: int = 0
    n_coarse_pass: int = 0
    n_fine: int = 0
    n_fine_eps_ok: int = 0
    n_fine_bcs: int = 0
    n_output: int = 0
    elapsed_s: float = 0.0
    message: str = ""


REPORT_COLUMNS = tuple(f.name for f in fields(TransitionReport) if f.name != "elapsed_s")  # timings go to the run manifest


@dataclass(frozen=True)
class TransitionResult:
    slice: CaptureSlice
    report: TransitionReport


def escape_elements_ephemeris(traj: Trajectory, gm_earth: float) -> tuple[OrbitalElements, float]:
    """Earth-centred elements at the backward escape crossing and its epoch.

    ``traj`` must be a backward ephemeris arc that ended on the escape event
    (the integrator localises the r2 = r2_lim crossing on its interpolant).
    """
    if traj.status is not StopReason.ESCAPE or traj.direction > 0:
        raise NotBackwardEscapingError(f"trajectory ended with {traj.status.name}")
    y = traj(traj.t_end)
    r, v = traj.model.earth_relative(np.array([traj.t_end]), y[None, :])
    return cartesian_to_elements(r[0], v[0], gm_earth, Center.EARTH), float(traj.t_end)


@dataclass
class _EphCandidate:
    ix: int
    iy: int
    point: EtdPoint
    synodic: np.ndarray
    state: np.ndarray  # nondimensional ephemeris state


def _classify_job(args):
    state, model, cfg, quick = args
    return classify_bc(state, model, cfg, quick=quick)


def _escape_job(args):
    state, model, cfg = args
    traj, escaped = backward_escape(state, model, cfg)
    if not escaped:
        return None
    el, _ = escape_elements_ephemeris(traj, model.gm_earth)
    return el


def _map(fn, work, jobs):
    if jobs > 1 and len(work) > 32:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, work, chunksize=16))
    return [fn(w) for w in work]


class EphemerisTransition:
    """Coordinator for moving CR3BP slices into the ephemeris model."""

    def __init__(
        self,
        params: SystemParams,
        search: SearchParams,
        tparams: TransitionParams,
        provider,
        reference,
        jobs: int = 1,
    ):
        self.params = params
        self.sp = search
        self.tp = tparams
        self.provider = provider
        self.reference = ElementSet.of(reference)
        self.jobs = jobs
        self.frames = EtdAlignedFrames.from_provider(provider, tparams.t_etd)
        self.model = EphemerisModel.from_provider(provider, params, self.frames)
        self.rot: RotopulsState = build_rotopuls(provider, tparams.t_etd, params, self.frames)
        self.grid: GridSpec = search.grid(params)
        self.coarse: GridSpec = self.grid.coarsened(tparams.coarse_factor)
        mk = lambda fwd, bwd: PropagationConfig.for_system(
            params, rel_tol=tparams.rel_tol, abs_tol=tparams.abs_tol, t_forward=fwd, t_backward=bwd
        )
        self.quick_cfg = mk(tparams.tau_sp, tparams.tau_B)
        self.full_cfg = mk(tparams.tau_s, tparams.tau_B)

    # -- helpers -------------------------------------------------------------
    def ephemeris_state(self, synodic: np.ndarray) -> np.ndarray:
        return synodic_batch_to_model(synodic, self.rot, self.model)

    def candidates(self, xs, ys, ixs, iys, gamma, z, zeta, eps_filter: bool = True) -> tuple[list[_EphCandidate], int]:
        """Ephemeris ICs for both branches; returns ``(kept, n_before_eps_filter)``."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.size == 0:
            return [], 0
        cj = cj_from_gamma(gamma, self.params)
        states, sigmas, valid = etd_states_batch(xs, ys, z, cj, zeta, self.params.mu)
        out = []
        n_all = 0
        for k in np.nonzero(valid)[0]:
            for b, branch in enumerate((Branch.ETA_PLUS, Branch.ETA_MINUS)):
                if b == 1 and abs(sigmas[0, k] - sigmas[1, k]) < 1e-12:
                    continue
                n_all += 1
                syn = states[b, k]
                eph = self.ephemeris_state(syn[None, :])[0]
                if eps_filter and self.model.eps2_dot(0.0, eph) >= 0.0:
                    continue
                pt = EtdPoint(float(xs[k]), float(ys[k]), float(z), float(gamma), float(zeta), branch, float(sigmas[b, k]))
                out.append(_EphCandidate(int(ixs[k]), int(iys[k]), pt, syn, eph))
        return out, n_all

    def _classify(self, cands, quick: bool):
        cfg = self.quick_cfg if quick else self.full_cfg
        return _map(_classify_job, [(c.state, self.model, cfg, quick) for c in cands], self.jobs)

    def record_for(self, cand: _EphCandidate, report) -> CaptureRecord:
        return record_from_report(
            cand.point, report, cand.ix, cand.iy, cand.synodic, self.model.gm_earth, self.model.gm_moon
        )

    def classify_record(self, rec: CaptureRecord):
        """Standalone ephemeris re-propagation of a stored record."""
        eph = self.ephemeris_state(rec.state[None, :])[0]
        return classify_bc(eph, self.model, self.full_cfg)

    # -- algorithm -----------------------------------------------------------
    def transition_slice(self, sl: CaptureSlice) -> TransitionResult:
        t_start = time.perf_counter()
        g, z, zeta = sl.gamma, sl.z, sl.zeta
        h = self.sp.h

        def done(status, records=(), region=None, **kw) -> TransitionResult:
            rep = TransitionReport(g, z, zeta, status, n_output=len(records), elapsed_s=time.perf_counter() - t_start, **kw)
            reg = region if region is not None else region_from_points([(r.x, r.y) for r in records], h)
            log.info("transition gamma=%.3f z=%.4f zeta=%.4f: %s, %d records", g, z, zeta, status.value, len(records))
            return TransitionResult(CaptureSlice(g, z, zeta, reg, tuple(records), elapsed_s=rep.elapsed_s), rep)

        try:
            self.model.check_span(-self.tp.tau_B, self.tp.tau_s)
            self.model.check_span(-self.tp.tau_B, self.tp.tau_sp)
        except EphemerisCoverageError as exc:
            return done(TransitionStatus.COVERAGE_ERROR, message=str(exc))

        original = sl.region
        if original.is_empty:
            original = region_from_points([(r.x, r.y) for r in sl.records], h)
        if original.is_empty:
            return done(TransitionStatus.FAILED, message="empty CR3BP slice")

        # boundary growth; the CR3BP captures seed the candidate set, so the
        # loop always runs at least once
        box = self.grid.box()
        S = original
        flag = False
        fallback = False
        it = 0
        n_btest = 0
        n_bbcs = 0
        limit = max(self.tp.max_iter, self.sp.buffer_iter_limit)
        while True:
            S = buffer(S, self.sp.d_O).intersection(box)
            verts = boundary_vertices(S)
            cands, _ = self.candidates(verts[:, 2], verts[:, 3], *self.grid.index_of(verts[:, 2], verts[:, 3]), g, z, zeta)
            reports = self._classify(cands, quick=True)
            hits = [c for c, r in zip(cands, reports) if r.is_capture]
            n_btest += len(cands)
            n_bbcs += len(hits)
            if hits:
                flag = True
            if not flag and it >= self.tp.max_iter:
                S = original
                fallback = True
                break
            it += 1
            on_boundary = bool(hits) and intersects_boundary([(c.point.x, c.point.y) for c in hits], S, h)
            if flag and not on_boundary:
                break
            if it >= limit:
                log.warning("transition buffer loop hit its limit at gamma=%.3f z=%.4f", g, z)
                break

        counts = dict(flag=flag, fallback=fallback, iterations=it, n_boundary_tested=n_btest, n_boundary_bcs=n_bbcs)

        # coarse metric prefilter
        cix, ciy = clip_grid(S, self.coarse)
        cx, cy = self.coarse.coords(cix, ciy)
        ccands, _ = self.candidates(cx, cy, cix, ciy, g, z, zeta, eps_filter=False)
        elements = _map(_escape_job, [(c.state, self.model, self.full_cfg) for c in ccands], self.jobs)
        passed = []
        rows = [(c, el) for c, el in zip(ccands, elements) if el is not None]
        if rows:
            arr = np.array([[el.a, el.e, el.i, el.raan, el.argp] for _, el in rows])
            dv, _, _ = dv_metric_arrays(
                self.reference, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4],
                earth_gm(self.params), self.params.length_unit, symmetric=True,
            )
            passed = [(c.point.x, c.point.y) for (c, _), d in zip(rows, dv) if d < self.tp.prefilter_dv]
        counts.update(n_coarse=len(ccands), n_coarse_pass=len(passed))
        S_dv = region_from_points(passed, self.coarse.h).intersection(S) if passed else PolyRegion.empty(h)
        if S_dv.is_empty:
            return done(TransitionStatus.PREFILTER_EMPTY, **counts)

        # fine grid, eps2-rate filter, full classification
        fix, fiy = clip_grid(S_dv, self.grid)
        fx, fy = self.grid.coords(fix, fiy)
        fcands, n_all = self.candidates(fx, fy, fix, fiy, g, z, zeta)
        reports = self._classify(fcands, quick=False)
        bcs = [(c, r) for c, r in zip(fcands, reports) if r.is_capture]
        records = [self.record_for(c, r) for c, r in bcs if r.n_rev_total >= self.tp.min_revs]
        if records:
            dv, _, _ = record_metric_arrays(records, self.reference, self.params, symmetric=True)
            records = [r for r, d in zip(records, dv) if d <= self.tp.final_dv]
        counts.update(n_fine=n_all, n_fine_eps_ok=len(fcands), n_fine_bcs=len(bcs))
        if flag:
            status = TransitionStatus.SUCCESS
        elif records:
            status = TransitionStatus.FALLBACK
        else:
            status = TransitionStatus.FAILED
        return done(status, records, **counts)

    def run(self, slices: Sequence[CaptureSlice]) -> list[TransitionResult]:
        return [self.transition_slice(s) for s in slices]


def triplets_from_records(records: Sequence[CaptureRecord], reference, params: SystemParams, threshold: float):
    """Sorted unique ``(gamma, z, zeta)`` of records whose symmetric metric is within ``threshold``."""
    dv, _, _ = record_metric_arrays(list(records), reference, params, symmetric=True)
    keys = {(r.gamma, r.z, r.zeta) for r, d in zip(records, dv) if d <= threshold}
    return sorted(keys)


def write_transition_report(path, reports: Sequence[TransitionReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for rep in reports:
            row = []
            for name in REPORT_COLUMNS:
                v = getattr(rep, name)
                if isinstance(v, enum.Enum):
                    v = v.value
                elif isinstance(v, bool):
                    v = int(v)
                elif isinstance(v, float):
                    v = repr(v)
                row.append(v)
            w.writerow(row)


__all__ = [
    "EphemerisTransition",
    "NotBackwardEscapingError",
    "TransitionParams",
    "TransitionReport",
    "TransitionResult",
    "TransitionStatus",
    "escape_elements_ephemeris",
    "triplets_from_records",
    "write_transition_report",
]
