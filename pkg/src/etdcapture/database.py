"""Capture-record schema and a per-slice columnar store.

Layout of a store directory::

    manifest.json          schema version, column list, slice index
    slices/<slice_id>.npz  one compressed column set per (gamma, z, zeta) slice

Angles are radians in memory and in the ``.npz`` files; the CSV mirror writes
them in degrees under a ``_deg`` suffix.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .cr3bp import Center, DegenerateOrbitError, OrbitalElements, cartesian_to_elements

SCHEMA_VERSION = 1
PERILUNE_TAGS = ("1stRev", "rmin", "rmin1", "rmin2")
_ELEMENT_KEYS = ("a", "e", "i", "raan", "argp", "nu")


class SchemaError(ValueError):
    pass


class DuplicateKeyError(ValueError):
    pass


def _nan() -> float:
    return math.nan


@dataclass(frozen=True)
class CaptureRecord:
    """One ballistic capture: ETD parameters, robustness, origin and perilune groups.

    Lengths in LU, times in TU (from the ETD epoch), angles in radians. Missing
    values are NaN.
    """

    # slice and grid identity
    gamma: float
    z: float
    zeta: float
    ix: int
    iy: int
    branch: int
    # ETD state
    x: float
    y: float
    sigma: float
    vx: float
    vy: float
    vz: float
    # robustness
    n_rev_total: int = 0
    n_rev_prograde: int = 0
    n_rev_retrograde: int = 0
    t_capture: float = 0.0
    n_crossings: int = 0
    t_collision: float = math.nan
    # origin: Earth-centred elements at backward escape
    a_T: float = math.nan
    e_T: float = math.nan
    i_T: float = math.nan
    raan_T: float = math.nan
    argp_T: float = math.nan
    nu_T: float = math.nan
    t_escape: float = math.nan
    # perilunes (Moon-centred elements)
    r2_1stRev: float = math.nan
    t_1stRev: float = math.nan
    a_1stRev: float = math.nan
    e_1stRev: float = math.nan
    i_1stRev: float = math.nan
    raan_1stRev: float = math.nan
    argp_1stRev: float = math.nan
    nu_1stRev: float = math.nan
    r2_rmin: float = math.nan
    t_rmin: float = math.nan
    a_rmin: float = math.nan
    e_rmin: float = math.nan
    i_rmin: float = math.nan
    raan_rmin: float = math.nan
    argp_rmin: float = math.nan
    nu_rmin: float = math.nan
    r2_rmin1: float = math.nan
    t_rmin1: float = math.nan
    a_rmin1: float = math.nan
    e_rmin1: float = math.nan
    i_rmin1: float = math.nan
    raan_rmin1: float = math.nan
    argp_rmin1: float = math.nan
    nu_rmin1: float = math.nan
    r2_rmin2: float = math.nan
    t_rmin2: float = math.nan
    a_rmin2: float = math.nan
    e_rmin2: float = math.nan
    i_rmin2: float = math.nan
    raan_rmin2: float = math.nan
    argp_rmin2: float = math.nan
    nu_rmin2: float = math.nan
    i_polar: float = math.nan
    r2_polar: float = math.nan
    t_polar: float = math.nan

    @property
    def key(self) -> tuple:
        return (slice_id(self.gamma, self.z, self.zeta), self.ix, self.iy, self.branch)

    @property
    def state(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.vx, self.vy, self.vz])

    def origin_elements(self) -> OrbitalElements:
        return OrbitalElements(self.a_T, self.e_T, self.i_T, self.raan_T, self.argp_T, self.nu_T, Center.EARTH)

    def perilune_elements(self, tag: str) -> Optional[OrbitalElements]:
        vals = [getattr(self, f"{k}_{tag}") for k in _ELEMENT_KEYS]
        if any(math.isnan(v) for v in vals):
            return None
        return OrbitalElements(*vals, center=Center.MOON)

    def replace(self, **changes) -> "CaptureRecord":
        return dataclasses.replace(self, **changes)


COLUMNS = tuple(f.name for f in dataclasses.fields(CaptureRecord))
INT_COLUMNS = frozenset(
    ("ix", "iy", "branch", "n_rev_total", "n_rev_prograde", "n_rev_retrograde", "n_crossings")
)
ANGLE_COLUMNS = frozenset(
    ["zeta", "sigma", "i_T", "raan_T", "argp_T", "nu_T", "i_polar"]
    + [f"{k}_{tag}" for tag in PERILUNE_TAGS for k in ("i", "raan", "argp", "nu")]
)


def slice_id(gamma: float, z: float, zeta: float) -> str:
    return f"g{gamma:+.5f}_z{z:+.6f}_k{zeta:+.7f}"


def _safe_elements(state: np.ndarray, gm: float, center: Center) -> Optional[OrbitalElements]:
    try:
        return cartesian_to_elements(state[:3], state[3:], gm, center)
    except (DegenerateOrbitError, ValueError):
        return None


def _element_fields(el: Optional[OrbitalElements], tag: str) -> dict:
    if el is None:
        return {}
    return {f"{k}_{tag}": float(v) for k, v in zip(_ELEMENT_KEYS, el.as_tuple())}


def perilune_fields(perilunes: Sequence, gm_moon: float) -> dict:
    """Group-4 columns from ``(t, moon_inertial_state)`` pairs in time order."""
    out: dict = {}
    if not perilunes:
        return out
    ts = np.array([p[0] for p in perilunes])
    states = np.array([p[1] for p in perilunes])
    r = np.linalg.norm(states[:, :3], axis=1)

    def put(tag, idx):
        out[f"r2_{tag}"] = float(r[idx])
        out[f"t_{tag}"] = float(ts[idx])
        out.update(_element_fields(_safe_elements(states[idx], gm_moon, Center.MOON), tag))

    put("1stRev", 0)
    put("rmin", int(np.argmin(r)))
    later = np.argsort(r[1:], kind="stable") + 1
    if later.size >= 1:
        put("rmin1", int(later[0]))
    if later.size >= 2:
        put("rmin2", int(later[1]))
    incl = []
    for s in states:
        h = np.cross(s[:3], s[3:])
        hn = np.linalg.norm(h)
        incl.append(math.acos(max(-1.0, min(1.0, h[2] / hn))) if hn > 0 else math.nan)
    incl = np.array(incl)
    if np.any(np.isfinite(incl)):
        k = int(np.nanargmin(np.abs(incl - 0.5 * math.pi)))
        out["i_polar"] = float(incl[k])
        out["r2_polar"] = float(r[k])
        out["t_polar"] = float(ts[k])
    return out


def record_from_report(point, report, ix: int, iy: int, state: np.ndarray, gm_earth: float, gm_moon: float) -> CaptureRecord:
    """Assemble a :class:`CaptureRecord` from an ETD point and its classification report.

    ``state`` is the initial state in the propagation frame (synodic for the
    CR3BP); it is stored so the record can be re-propagated standalone.
    """
    fields = dict(
        gamma=float(point.gamma),
        z=float(point.z),
        zeta=float(point.zeta),
        ix=int(ix),
        iy=int(iy),
        branch=int(point.branch),
        x=float(point.x),
        y=float(point.y),
        sigma=float(point.sigma),
        vx=float(state[3]),
        vy=float(state[4]),
        vz=float(state[5]),
        n_rev_total=int(report.n_rev_total),
        n_rev_prograde=int(report.n_rev_prograde),
        n_rev_retrograde=int(report.n_rev_retrograde),
        t_capture=float(report.t_capture),
        n_crossings=int(report.n_crossings),
        t_collision=math.nan if report.t_collision is None else float(report.t_collision),
    )
    if report.escape_state is not None:
        el = _safe_elements(np.asarray(report.escape_state), gm_earth, Center.EARTH)
        if el is not None:
            fields.update({f"{k}_T": float(v) for k, v in zip(_ELEMENT_KEYS, el.as_tuple())})
        fields["t_escape"] = float(report.t_escape)
    fields.update(perilune_fields(report.perilunes, gm_moon))
    return CaptureRecord(**fields)


def _wrap(a: float) -> float:
    return float(np.mod(a, 2.0 * math.pi)) if not math.isnan(a) else a


def mirror_record(rec: CaptureRecord) -> CaptureRecord:
    """Reflection through the x-y plane: z, vz, zeta flip; RAAN + pi and argp - pi."""
    ch = dict(z=-rec.z if rec.z != 0.0 else 0.0, vz=-rec.vz if rec.vz != 0.0 else 0.0, zeta=-rec.zeta if rec.zeta != 0.0 else 0.0)
    for suffix in ["T"] + list(PERILUNE_TAGS):
        ch[f"raan_{suffix}"] = _wrap(getattr(rec, f"raan_{suffix}") + math.pi)
        ch[f"argp_{suffix}"] = _wrap(getattr(rec, f"argp_{suffix}") - math.pi)
    return rec.replace(**ch)


def records_to_columns(records: Sequence[CaptureRecord]) -> dict[str, np.ndarray]:
    cols = {}
    for name in COLUMNS:
        dtype = np.int64 if name in INT_COLUMNS else np.float64
        cols[name] = np.array([getattr(r, name) for r in records], dtype=dtype)
    return cols


def columns_to_records(cols: dict) -> list[CaptureRecord]:
    n = len(cols[COLUMNS[0]]) if cols else 0
    out = []
    for i in range(n):
        kw = {}
        for name in COLUMNS:
            v = cols[name][i]
            kw[name] = int(v) if name in INT_COLUMNS else float(v)
        out.append(CaptureRecord(**kw))
    return out


def _sort_key(r: CaptureRecord):
    return (r.gamma, r.z, r.zeta, r.x, r.y, r.branch)


class CaptureStore:
    """Directory-backed record store with one ``.npz`` file per slice."""

    def __init__(self, root, create: bool = True):
        self.root = Path(root)
        self.manifest_path = self.root / "manifest.json"
        if self.manifest_path.exists():
            manifest = json.loads(self.manifest_path.read_text())
            if manifest.get("schema_version") != SCHEMA_VERSION:
                raise SchemaError(
                    f"store schema {manifest.get('schema_version')} != supported {SCHEMA_VERSION}"
                )
            if tuple(manifest.get("columns", ())) != COLUMNS:
                raise SchemaError("store column set does not match this version")
            self._slices = dict(manifest["slices"])
        elif create:
            (self.root / "slices").mkdir(parents=True, exist_ok=True)
            self._slices = {}
            self._write_manifest()
        else:
            raise FileNotFoundError(self.manifest_path)

    def _write_manifest(self) -> None:
        payload = {"schema_version": SCHEMA_VERSION, "columns": list(COLUMNS), "slices": self._slices}
        _atomic_write(self.manifest_path, json.dumps(payload, indent=1, sort_keys=True).encode())

    def slice_ids(self) -> list[str]:
        return sorted(self._slices)

    def __len__(self) -> int:
        return sum(int(v["n_rows"]) for v in self._slices.values())

    def _load_slice(self, sid: str) -> dict[str, np.ndarray]:
        with np.load(self.root / self._slices[sid]["file"]) as data:
            return {k: data[k] for k in COLUMNS}

    def slice_records(self, sid: str) -> list[CaptureRecord]:
        return columns_to_records(self._load_slice(sid)) if sid in self._slices else []

    def append(self, records: Iterable[CaptureRecord]) -> int:
        """Add records, rejecting any (slice, ix, iy, branch) key already present."""
        records = list(records)
        if not records:
            return 0
        by_slice: dict[str, list[CaptureRecord]] = {}
        seen = set()
        for r in records:
            if r.key in seen:
                raise DuplicateKeyError(f"duplicate key within batch: {r.key}")
            seen.add(r.key)
            by_slice.setdefault(r.key[0], []).append(r)
        for sid, recs in by_slice.items():
            existing = self.slice_records(sid)
            keys = {r.key for r in existing}
            clash = [r.key for r in recs if r.key in keys]
            if clash:
                raise DuplicateKeyError(f"keys already stored: {clash[:3]}")
        for sid, recs in by_slice.items():
            rows = self.slice_records(sid) + recs
            fname = f"slices/{sid}.npz"
            buf_path = self.root / fname
            with tempfile.NamedTemporaryFile(dir=buf_path.parent, suffix=".npz", delete=False) as tmp:
                np.savez_compressed(tmp, **records_to_columns(rows))
            os.replace(tmp.name, buf_path)
            self._slices[sid] = {"file": fname, "n_rows": len(rows)}
        self._write_manifest()
        return len(records)

    def scan(self) -> list[CaptureRecord]:
        out = []
        for sid in self.slice_ids():
            out.extend(self.slice_records(sid))
        return out

    def query(self, predicate: Callable[[CaptureRecord], bool] = lambda r: True) -> list[CaptureRecord]:
        """Records satisfying ``predicate`` in a stable (gamma, z, zeta, x, y, branch) order."""
        return sorted((r for r in self.scan() if predicate(r)), key=_sort_key)

    def export_csv(self, path, records: Optional[Sequence[CaptureRecord]] = None) -> None:
        write_csv(path, self.query() if records is None else records)


def _atomic_write(path: Path, data: bytes) -> None:
    with tempfile.NamedTemporaryFile(dir=path.parent, delete=False) as tmp:
        tmp.write(data)
    os.replace(tmp.name, path)


def csv_header() -> list[str]:
    return [f"{c}_deg" if c in ANGLE_COLUMNS else c for c in COLUMNS]


def write_csv(path, records: Sequence[CaptureRecord], extra: Optional[dict] = None) -> None:
    """CSV mirror; angle columns in degrees. ``extra`` adds named per-row columns."""
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header() + list(extra))
        for i, r in enumerate(records):
            row = []
            for c in COLUMNS:
                v = getattr(r, c)
                if c in ANGLE_COLUMNS:
                    v = math.degrees(v)
                row.append(v if c in INT_COLUMNS else repr(float(v)))
            row.extend(repr(float(extra[k][i])) for k in extra)
            w.writerow(row)


def read_csv(path) -> list[CaptureRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for c in COLUMNS:
                if c in ANGLE_COLUMNS:
                    kw[c] = math.radians(float(row[f"{c}_deg"]))
                elif c in INT_COLUMNS:
                    kw[c] = int(row[c])
                else:
                    kw[c] = float(row[c])
            out.append(CaptureRecord(**kw))
    return out


def merge_stores(sources: Sequence[CaptureStore], dest: CaptureStore) -> int:
    n = 0
    for src in sources:
        n += dest.append(src.scan())
    return n


def histogram(records: Sequence[CaptureRecord], field: str, bins=10) -> tuple[np.ndarray, np.ndarray]:
    """Counts per bin for a numeric field; NaNs are ignored.

    ``bins`` is a bin count or explicit edges. A constant field yields one bin.
    """
    if field not in COLUMNS:
        raise KeyError(field)
    vals = np.array([getattr(r, field) for r in records], dtype=float)
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return np.array([]), np.array([], dtype=int)
    if np.isscalar(bins) and vals.min() == vals.max():
        return np.array([vals[0], vals[0]]), np.array([vals.size])
    counts, edges = np.histogram(vals, bins=bins)
    return edges, counts


def write_histogram_csv(path, edges: np.ndarray, counts: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


__all__ = [
    "ANGLE_COLUMNS",
    "COLUMNS",
    "CaptureRecord",
    "CaptureStore",
    "DuplicateKeyError",
    "PERILUNE_TAGS",
    "SCHEMA_VERSION",
    "SchemaError",
    "columns_to_records",
    "histogram",
    "merge_stores",
    "mirror_record",
    "perilune_fields",
    "read_csv",
    "record_from_report",
    "records_to_columns",
    "slice_id",
    "write_csv",
    "write_histogram_csv",
]
