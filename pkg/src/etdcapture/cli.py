"""Command-line driver: ``etdcapture <subcommand> [options]``.

Every subcommand writes its artifacts plus ``manifest.json`` and
``config.resolved.yaml`` into ``--out``. Exit status is 0 on success, 1 on
usage errors (bad flags, missing inputs) and 2 on domain errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import integrator as _ig
from .analysis import (
    BrakingError,
    InfeasibleWindowError,
    TransferConfig,
    builtin_recipes,
    dataset_stats,
    optimize_three_impulse,
    perilune_braking,
    replay_ephemeris_state,
    select,
    phase_matched_state,
    write_selection,
    write_stats,
)
from .config import ConfigError, PipelineConfig, Preset, RunConfig
from .cr3bp import DegenerateOrbitError, SingularityError
from .database import CaptureRecord, CaptureStore, SchemaError, slice_id
from .ephemeris import EphemerisCoverageError, EphemerisFormatError, EphemerisModel, EtdAlignedFrames, build_rotopuls, synodic_batch_to_model
from .etd import etd_slice
from .metric import NearParabolicError, dv_metric_symmetric, earth_gm, threshold_filter, write_filter_report
from .propagation import Cr3bpModel, PropagationConfig, StopReason, TWO_PI, propagate, trajectory_table
from .search import CaptureSearch, KernelNotFoundError, read_slices, write_slices
from .transition import EphemerisTransition, triplets_from_records, write_transition_report

log = logging.getLogger("etdcapture")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DOMAIN = 2

SUBCOMMANDS = (
    "etd-slice",
    "search-planar",
    "search-z",
    "search-zeta",
    "transition",
    "filter",
    "select",
    "stats",
    "braking",
    "transfer",
    "dump-trajectory",
)

DOMAIN_ERRORS = (
    ConfigError,
    KernelNotFoundError,
    EphemerisCoverageError,
    EphemerisFormatError,
    SchemaError,
    NearParabolicError,
    SingularityError,
    DegenerateOrbitError,
    BrakingError,
    InfeasibleWindowError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML configuration file (default: built-in values)")
    p.add_argument("--preset", choices=[x.value for x in Preset], default=Preset.DESK_SCALE.value)
    p.add_argument("--out", type=Path, help="output directory (default: runs/<subcommand>)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for classification batches")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _record_source(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--from", dest="source", type=Path, required=required, help="run directory or record store")


def _record_pick(p: argparse.ArgumentParser) -> None:
    p.add_argument("--key", help="record key SLICE_ID/IX/IY/BRANCH as printed by select")
    p.add_argument("--rank", type=int, help="1-based rank in a selection.csv found in --from")
    p.add_argument("--state", type=float, nargs=6, metavar="S", help="synodic state x y z vx vy vz (LU, VU)")
    p.add_argument("--model", choices=["cr3bp", "ephemeris"], default="cr3bp")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="etdcapture", description="Ballistic lunar capture search from the energy transition domain.")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)

    p = sub.add_parser("etd-slice", help="ETD membership raster at fixed gamma and z")
    _common(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--z", type=float, default=0.0, help="LU")
    p.add_argument("--step", type=float, default=0.005, help="raster step, LU")
    p.add_argument("--box", type=float, nargs=4, default=(-1.5, 1.5, -1.5, 1.5), metavar=("XMIN", "XMAX", "YMIN", "YMAX"))

    p = sub.add_parser("search-planar", help="planar capture sets C(gamma, 0, 0)")
    _common(p)
    p.add_argument("--gammas", type=float, nargs="+", help="gamma values (default: configured range)")

    p = sub.add_parser("search-z", help="z-sections grown from planar capture sets")
    _common(p)
    _record_source(p, required=False)
    p.add_argument("--gammas", type=float, nargs="+", help="gammas to sweep (default: all planar slices)")

    p = sub.add_parser("search-zeta", help="zeta-sections grown from z-sections")
    _common(p)
    _record_source(p)
    p.add_argument("--stride", type=int, help="lattice stride in gamma and z (default from config)")

    p = sub.add_parser("transition", help="move CR3BP slices into the ephemeris model")
    _common(p)
    _record_source(p)
    p.add_argument("--dv-threshold", type=float, help="slices need a record within this metric, m/s")
    p.add_argument("--max-slices", type=int, help="transition at most this many slices")

    p = sub.add_parser("filter", help="sub-database by origin metric threshold")
    _common(p)
    _record_source(p)
    p.add_argument("--dv-threshold", type=float, help="m/s (default from config)")
    p.add_argument("--reference", choices=["ltb_cr3bp", "ltb_ephemeris", "custom"])

    p = sub.add_parser("select", help="rank records with a selection recipe")
    _common(p)
    _record_source(p)
    p.add_argument("--recipe", required=True, help="longest | polar_first_perilune | polar_pair | grazing_polar_pair")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--reference", choices=["ltb_cr3bp", "ltb_ephemeris", "custom"])

    p = sub.add_parser("stats", help="revolution shares and histograms")
    _common(p)
    _record_source(p)
    p.add_argument("--bins", type=int)
    p.add_argument("--reference", choices=["ltb_cr3bp", "ltb_ephemeris", "custom"])

    p = sub.add_parser("braking", help="retro-burns at successive perilunes")
    _common(p)
    _record_source(p, required=False)
    _record_pick(p)
    p.add_argument("--dv-mps", type=float)
    p.add_argument("--max-burns", type=int)
    p.add_argument("--horizon-revs", type=float, default=20.0, help="propagation horizon, units of 2 pi TU")

    p = sub.add_parser("transfer", help="three-impulse transfer from the reference orbit onto a capture")
    _common(p)
    _record_source(p)
    _record_pick(p)
    p.add_argument("--reference", choices=["ltb_cr3bp", "ltb_ephemeris", "custom"])
    p.add_argument("--seeds", type=int)

    p = sub.add_parser("dump-trajectory", help="sampled trajectory as CSV")
    _common(p)
    _record_source(p, required=False)
    _record_pick(p)
    p.add_argument("--ephemeris-state-km", type=float, nargs=6, metavar="S",
                   help="x y z (km) vx vy vz (km/s) in the provider base frame at the ETD epoch")
    p.add_argument("--forward-revs", type=float, default=10.0)
    p.add_argument("--backward-revs", type=float, default=0.0)
    p.add_argument("--horizon-days", type=float, help="with --ephemeris-state-km: run until impact or this many days")
    p.add_argument("--samples", type=int, default=2000)
    return parser


# -- shared plumbing ------------------------------------------------------------


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("etdcapture", "numpy", "scipy", "numba", "shapely", "PyYAML"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _load_pipeline(args) -> PipelineConfig:
    if args.config is not None:
        if not args.config.exists():
            raise UsageError(f"config file not found: {args.config}")
        cfg = PipelineConfig.load(args.config)
    else:
        cfg = PipelineConfig()
    ov = {}
    if getattr(args, "dv_threshold", None) is not None:
        ov["metric.dv_threshold_mps"] = args.dv_threshold
    if getattr(args, "reference", None) is not None:
        ov["metric.reference"] = args.reference
    if getattr(args, "bins", None) is not None:
        ov["analysis.histogram_bins"] = args.bins
    if getattr(args, "dv_mps", None) is not None:
        ov["analysis.braking_dv_mps"] = args.dv_mps
    if getattr(args, "max_burns", None) is not None:
        ov["analysis.braking_max_burns"] = args.max_burns
    if getattr(args, "seeds", None) is not None:
        ov["analysis.transfer_seeds"] = args.seeds
    if getattr(args, "stride", None) is not None:
        ov["search.zeta_stride"] = args.stride
    return cfg.with_overrides(ov)


def _open_store(path: Path) -> CaptureStore:
    for cand in (path / "store", path):
        if (cand / "manifest.json").exists():
            return CaptureStore(cand, create=False)
    raise UsageError(f"no record store under {path}")


def _records(path: Path) -> list[CaptureRecord]:
    return _open_store(path).query()


def _pick_record(args) -> Optional[CaptureRecord]:
    if args.key is None and args.rank is None:
        return None
    if args.source is None:
        raise UsageError("--key and --rank need --from")
    recs = _records(args.source)
    if args.rank is not None:
        sel = args.source / "selection.csv"
        if not sel.exists():
            raise UsageError(f"--rank needs {sel}")
        with open(sel, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not 1 <= args.rank <= len(rows):
            raise UsageError(f"rank {args.rank} outside 1..{len(rows)}")
        row = rows[args.rank - 1]
        key = (slice_id(float(row["gamma"]), float(row["z_LU"]), math.radians(float(row["zeta_deg"]))),
               int(row["ix"]), int(row["iy"]), int(row["branch"]))
    else:
        parts = args.key.split("/")
        if len(parts) != 4:
            raise UsageError("--key must look like SLICE_ID/IX/IY/BRANCH")
        key = (parts[0], int(parts[1]), int(parts[2]), int(parts[3]))
    for r in recs:
        if r.key == key:
            return r
    raise UsageError(f"record {key} not found in {args.source}")


def _models(cfg: PipelineConfig, kind: str, base_dir: Optional[Path] = None):
    params = cfg.system_params()
    if kind == "cr3bp":
        return params, Cr3bpModel.from_params(params), None
    provider = cfg.ephemeris.build(cfg.system, base_dir)
    frames = EtdAlignedFrames.from_provider(provider, cfg.system.t_etd_s)
    model = EphemerisModel.from_provider(provider, params, frames)
    rot = build_rotopuls(provider, cfg.system.t_etd_s, params, frames)
    return params, model, (provider, rot)


def _model_state(model, extra, synodic: np.ndarray) -> np.ndarray:
    if extra is None:
        return np.asarray(synodic, dtype=float)
    return synodic_batch_to_model(np.asarray(synodic)[None, :], extra[1], model)[0]


def _write_traj_csv(path: Path, table: np.ndarray) -> None:
    header = "t_TU,x_LU,y_LU,z_LU,vx_VU,vy_VU,vz_VU,eps2,C_J"
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.15e")


def _write_maneuvers(path: Path, plan, time_unit: float) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "t_TU", "t_days", "dvx_kms", "dvy_kms", "dvz_kms", "dv_mps"])
        for k, m in enumerate(plan.maneuvers, 1):
            w.writerow([k, repr(m.t), repr(m.t * time_unit / 86400.0), *[repr(float(c)) for c in m.dv], repr(m.magnitude_mps)])


# -- subcommands ----------------------------------------------------------------


def cmd_etd_slice(args, run: RunConfig, timings: dict) -> dict:
    params = run.pipeline.system_params()
    if args.step <= 0.0:
        raise UsageError("--step must be positive")
    raster = etd_slice(args.gamma, args.z, tuple(args.box), args.step, params)
    raster.to_csv(run.out_dir / "etd_raster.csv")
    return {"cells": int(raster.member.size), "member_cells": int(raster.member.sum())}


def _search(run: RunConfig) -> CaptureSearch:
    params = run.pipeline.system_params()
    return CaptureSearch(params, run.pipeline.search_params(run.preset), jobs=run.jobs)


def cmd_search_planar(args, run: RunConfig, timings: dict) -> dict:
    cs = _search(run)
    gammas = args.gammas or run.pipeline.search.gammas()
    t = time.perf_counter()
    slices = cs.search_planar(sorted(gammas))
    timings["search_s"] = time.perf_counter() - t
    write_slices(run.out_dir, slices)
    return {"slices": len(slices), "records": sum(len(s.records) for s in slices)}


def cmd_search_z(args, run: RunConfig, timings: dict) -> dict:
    cs = _search(run)
    t = time.perf_counter()
    if args.source is not None:
        planar = [s for s in read_slices(args.source) if s.z == 0.0 and s.zeta == 0.0]
        if args.gammas:
            want = {round(g, 10) for g in args.gammas}
            planar = [s for s in planar if round(s.gamma, 10) in want]
    else:
        planar = cs.search_planar(sorted(args.gammas or run.pipeline.search.gammas()))
    zs = cs.search_z_sections(planar)
    timings["search_s"] = time.perf_counter() - t
    write_slices(run.out_dir, list(planar) + zs)
    return {"planar_slices": len(planar), "z_slices": len(zs), "records": sum(len(s.records) for s in zs)}


def cmd_search_zeta(args, run: RunConfig, timings: dict) -> dict:
    cs = _search(run)
    base = [s for s in read_slices(args.source) if s.zeta == 0.0]
    t = time.perf_counter()
    ks = cs.search_zeta_sections(base, stride=run.pipeline.search.zeta_stride)
    timings["search_s"] = time.perf_counter() - t
    write_slices(run.out_dir, ks)
    return {"base_slices": len(base), "zeta_slices": len(ks), "records": sum(len(s.records) for s in ks)}


def cmd_transition(args, run: RunConfig, timings: dict) -> dict:
    cfg = run.pipeline
    params = cfg.system_params()
    slices = [s for s in read_slices(args.source) if s.records]
    ref = cfg.metric.elements()
    keep = set(triplets_from_records([r for s in slices for r in s.records], ref, params, cfg.metric.dv_threshold_mps))
    todo = [s for s in slices if (s.gamma, s.z, s.zeta) in keep]
    if args.max_slices is not None:
        todo = todo[: args.max_slices]
    provider = cfg.ephemeris.build(cfg.system, args.config.parent if args.config else None)
    et = EphemerisTransition(params, cfg.search_params(run.preset), cfg.transition_params(run.preset), provider, ref, run.jobs)
    t = time.perf_counter()
    results = et.run(todo)
    timings["transition_s"] = time.perf_counter() - t
    timings["per_slice_s"] = [r.report.elapsed_s for r in results]
    write_slices(run.out_dir, [r.slice for r in results])
    write_transition_report(run.out_dir / "transition_report.csv", [r.report for r in results])
    status = {}
    for r in results:
        status[r.report.status.value] = status.get(r.report.status.value, 0) + 1
    return {"slices_in": len(slices), "slices_transitioned": len(todo), "status": status,
            "records": sum(len(r.slice.records) for r in results)}


def cmd_filter(args, run: RunConfig, timings: dict) -> dict:
    cfg = run.pipeline
    params = cfg.system_params()
    recs = _records(args.source)
    hits = threshold_filter(recs, cfg.metric.elements(), cfg.metric.dv_threshold_mps, params)
    store = CaptureStore(run.out_dir / "store")
    store.append([h.record for h in hits])
    store.export_csv(run.out_dir / "records.csv")
    write_filter_report(run.out_dir / "filter_report.csv", hits)
    return {"records_in": len(recs), "records_out": len(hits)}


def cmd_select(args, run: RunConfig, timings: dict) -> dict:
    cfg = run.pipeline
    params = cfg.system_params()
    recipes = builtin_recipes(params)
    if args.recipe not in recipes:
        raise UsageError(f"unknown recipe {args.recipe!r}; choose from {sorted(recipes)}")
    ranked = select(_records(args.source), recipes[args.recipe], params, cfg.metric.elements())
    write_selection(run.out_dir / "selection.csv", ranked[: args.top])
    keys = ["/".join(str(k) for k in rr.record.key) for rr in ranked[: args.top]]
    return {"matches": len(ranked), "top_keys": keys}


def cmd_stats(args, run: RunConfig, timings: dict) -> dict:
    cfg = run.pipeline
    recs = _records(args.source)
    stats = dataset_stats(recs, cfg.system_params(), cfg.metric.elements(), cfg.analysis.histogram_bins)
    write_stats(run.out_dir, stats)
    return {"records": stats.n_records}


def _ic(args, cfg: PipelineConfig):
    rec = _pick_record(args)
    if rec is not None and args.state is not None:
        raise UsageError("give either a record or --state, not both")
    if rec is None and args.state is None:
        return None, None
    syn = rec.state if rec is not None else np.asarray(args.state, dtype=float)
    return rec, syn


def cmd_braking(args, run: RunConfig, timings: dict) -> dict:
    cfg = run.pipeline
    rec, syn = _ic(args, cfg)
    if syn is None:
        raise UsageError("braking needs --key, --rank or --state")
    params, model, extra = _models(cfg, args.model, args.config.parent if args.config else None)
    y0 = _model_state(model, extra, syn)
    pcfg = PropagationConfig.for_system(params, t_forward=args.horizon_revs * TWO_PI)
    a = cfg.analysis
    res = perilune_braking(y0, model, pcfg, params, a.braking_dv_mps, a.braking_max_burns, r2_max=a.braking_r2_max)
    _write_maneuvers(run.out_dir / "maneuvers.csv", res.plan, params.time_unit)
    mu = params.mu if args.model == "cr3bp" else None
    table = np.vstack([trajectory_table(s, 500, mu) for s in res.segments])
    _write_traj_csv(run.out_dir / "trajectory.csv", table)
    days = params.time_unit / 86400.0
    return {
        "burns": len(res.plan.maneuvers),
        "total_dv_mps": res.plan.total_dv,
        "lifetime_days": res.lifetime * days,
        "baseline_lifetime_days": res.baseline_lifetime * days,
        "lifetime_extension_days": res.lifetime_extension * days,
        "end_status": res.end_status.name,
    }


_Z_FLIP = np.array([1.0, 1.0, -1.0, 1.0, 1.0, -1.0])


def cmd_transfer(args, run: RunConfig, timings: dict) -> dict:
    cfg = run.pipeline
    rec = _pick_record(args)
    if rec is None:
        raise UsageError("transfer needs --key or --rank (the record supplies the escape epoch)")
    if not math.isfinite(rec.t_escape):
        raise ConfigError("record has no backward escape epoch")
    params, model, extra = _models(cfg, args.model, args.config.parent if args.config else None)
    ref = cfg.metric.elements()
    metric = dv_metric_symmetric(ref, rec.origin_elements(), earth_gm(params), params.length_unit)
    # the z-mirror of a capture is a capture in the CR3BP (same true anomaly)
    mirrored = metric.branch == 1 and args.model == "cr3bp"
    syn = np.asarray(rec.state, dtype=float) * (_Z_FLIP if mirrored else 1.0)
    y_tgt = _model_state(model, extra, syn)
    pcfg = PropagationConfig.for_system(params)
    back = propagate(y_tgt, model, pcfg, rec.t_escape, 0.0, _ig.STOP_COLLISION)
    if back.status is not StopReason.HORIZON:
        raise ConfigError(f"target arc ends early ({back.status.name}) in the {args.model} model")
    y_ref = phase_matched_state(model, rec.t_escape, ref, back(rec.t_escape)[:3])
    a = cfg.analysis
    tc = TransferConfig(n_seeds=a.transfer_seeds, max_evals=a.transfer_max_evals, pos_tol_km=a.transfer_pos_tol_km)
    t = time.perf_counter()
    res = optimize_three_impulse(model, y_ref, rec.t_escape, y_tgt, 0.0, params, config=tc)
    timings["optimize_s"] = time.perf_counter() - t
    _write_maneuvers(run.out_dir / "maneuvers.csv", res.plan, params.time_unit)
    dv = metric.dv
    out = {
        "mirrored_target": mirrored,
        "total_dv_mps": res.plan.total_dv,
        "burns_mps": res.plan.magnitudes_mps,
        "metric_dv_mps": dv,
        "ratio": res.plan.total_dv / dv if dv > 0 else None,
        "residual_pos_km": res.residual_pos_km,
        "feasible": res.feasible,
        "converged": res.converged,
    }
    (run.out_dir / "transfer.json").write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return out


def cmd_dump_trajectory(args, run: RunConfig, timings: dict) -> dict:
    cfg = run.pipeline
    base = args.config.parent if args.config else None
    if args.ephemeris_state_km is not None:
        if args.key or args.rank or args.state:
            raise UsageError("--ephemeris-state-km excludes other state sources")
        params = cfg.system_params()
        provider = cfg.ephemeris.build(cfg.system, base)
        s = np.asarray(args.ephemeris_state_km)
        horizon = args.horizon_days if args.horizon_days is not None else args.forward_revs * TWO_PI * params.time_unit / 86400.0
        rep = replay_ephemeris_state(provider, s[:3], s[3:], params, horizon, cfg.system.t_etd_s)
        _write_traj_csv(run.out_dir / "trajectory.csv", trajectory_table(rep.trajectory, args.samples))
        return {"lifetime_days": rep.lifetime_days, "n_rev_total": rep.n_rev_total, "status": rep.status.name}
    rec, syn = _ic(args, cfg)
    if syn is None:
        raise UsageError("dump-trajectory needs --key, --rank, --state or --ephemeris-state-km")
    params, model, extra = _models(cfg, args.model, base)
    y0 = _model_state(model, extra, syn)
    pcfg = PropagationConfig.for_system(params)
    parts = []
    mu = params.mu if args.model == "cr3bp" else None
    if args.backward_revs > 0.0:
        b = propagate(y0, model, pcfg, -args.backward_revs * TWO_PI, 0.0, _ig.STOP_COLLISION)
        parts.append(trajectory_table(b, args.samples, mu)[::-1])
    if args.forward_revs > 0.0:
        f = propagate(y0, model, pcfg, args.forward_revs * TWO_PI, 0.0, _ig.STOP_COLLISION)
        parts.append(trajectory_table(f, args.samples, mu))
    if not parts:
        raise UsageError("nothing to propagate: both horizons are zero")
    _write_traj_csv(run.out_dir / "trajectory.csv", np.vstack(parts))
    return {"rows": int(sum(p.shape[0] for p in parts))}


COMMANDS = {
    "etd-slice": cmd_etd_slice,
    "search-planar": cmd_search_planar,
    "search-z": cmd_search_z,
    "search-zeta": cmd_search_zeta,
    "transition": cmd_transition,
    "filter": cmd_filter,
    "select": cmd_select,
    "stats": cmd_stats,
    "braking": cmd_braking,
    "transfer": cmd_transfer,
    "dump-trajectory": cmd_dump_trajectory,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
        if args.subcommand is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        pipeline = _load_pipeline(args)
        out = args.out or Path("runs") / args.subcommand
        run_cfg = RunConfig(args.subcommand, out, Preset(args.preset), args.jobs, args.config, pipeline)
        out.mkdir(parents=True, exist_ok=True)
        timings: dict = {}
        t0 = time.perf_counter()
        summary = COMMANDS[args.subcommand](args, run_cfg, timings)
        timings["total_s"] = time.perf_counter() - t0
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except DOMAIN_ERRORS as exc:
        print(f"etdcapture: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (FileNotFoundError, ValueError) as exc:
        kind = EXIT_USAGE if isinstance(exc, FileNotFoundError) else EXIT_DOMAIN
        print(f"etdcapture: {type(exc).__name__}: {exc}", file=sys.stderr)
        return kind

    args_dict = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    hashed = {k: v for k, v in args_dict.items() if k not in ("out", "log_level", "jobs", "config")}
    manifest = {
        "subcommand": args.subcommand,
        "argv": argv,
        "args": args_dict,
        "preset": run_cfg.preset.value,
        "jobs": run_cfg.jobs,
        "config_hash": pipeline.hash({"preset": run_cfg.preset.value, "args": hashed}),
        "versions": _versions(),
        "timings_s": timings,
        "summary": summary,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    (out / "config.resolved.yaml").write_text(yaml.safe_dump(pipeline.to_dict(), sort_keys=True))
    print(json.dumps(summary, sort_keys=True, default=str))
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
