"""Ephemeris providers, ETD-aligned frames and the rotopulsating transformation.

Two interchangeable providers deliver geocentric Moon and Sun states in an
inertial base frame:

* :class:`AnalyticEphemeris`: Moon on a fixed Kepler ellipse, Sun on a
  circle in the base x-y plane. Hermetic and fast; the default.
* :class:`TabulatedEphemeris`: uniform-step CSV tables (one per body)
  interpolated with cubic Hermite polynomials. Any ephemeris source can be
  exported to this format.

Dimensional quantities are km, km/s and seconds past J2000. The propagation
layer works in the ETD-aligned Earth inertial frame, nondimensionalised with
the CR3BP units and with time counted from the ETD epoch; see
:class:`EphemerisModel`.

Table file format (one file per body)::

    # body: moon
    # frame: EMO2000
    # step_s: 3600
    t_s,x_km,y_km,z_km,vx_kms,vy_kms,vz_kms
    802000000.0,-3.1e5,...

Header lines start with ``#`` and hold ``key: value`` pairs; ``body`` and
``step_s`` are required. Rows are strictly increasing in time with constant
step. Both bodies must share the same epoch grid.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import integrator as _ig
from .cr3bp import (
    G_EFF_KM3_KG_S2,
    MASS_EARTH_KG,
    MASS_MOON_KG,
    MASS_SUN_KG,
    EARTH_MOON_KM,
    SYSTEM_GM_KM3S2,
    T_ETD_J2000_S,
    Frame,
    SingularityError,
    State6,
    SystemParams,
)

AU_KM = 149597870.7
SIDEREAL_YEAR_S = 365.256363004 * 86400.0
FD_STEP_S = 60.0
TABLE_FD_TOL_KMS = 1e-6


class Body(enum.Enum):
    MOON = "moon"
    SUN = "sun"


class ProviderKind(enum.Enum):
    ANALYTIC = "Analytic"
    TABULATED = "Tabulated"


class EphemerisCoverageError(ValueError):
    """Query epoch outside the provider's coverage."""


class EphemerisFormatError(ValueError):
    """Malformed or inconsistent ephemeris table."""


@dataclass(frozen=True)
class NBodyConstants:
    """Gravitational parameters (km^3/s^2) used by the N-body field."""

    gm_earth: float = G_EFF_KM3_KG_S2 * MASS_EARTH_KG
    gm_moon: float = G_EFF_KM3_KG_S2 * MASS_MOON_KG
    gm_sun: float = G_EFF_KM3_KG_S2 * MASS_SUN_KG

    @property
    def gm_system(self) -> float:
        return self.gm_earth + self.gm_moon


def _as_times(t) -> tuple[np.ndarray, bool]:
    arr = np.asarray(t, dtype=float)
    return np.atleast_1d(arr), arr.ndim == 0


def _kepler_E(M: np.ndarray, e: float) -> np.ndarray:
    E = M.copy() if e < 0.8 else np.full_like(M, math.pi)
    for _ in range(60):
        dE = (E - e * np.sin(E) - M) / (1.0 - e * np.cos(E))
        E -= dE
        if np.max(np.abs(dE), initial=0.0) < 1e-15:
            break
    return E


def _pq(raan: float, argp: float, inc: float) -> tuple[np.ndarray, np.ndarray]:
    co, so = math.cos(raan), math.sin(raan)
    cw, sw = math.cos(argp), math.sin(argp)
    ci, si = math.cos(inc), math.sin(inc)
    P = np.array([co * cw - so * sw * ci, so * cw + co * sw * ci, sw * si])
    Q = np.array([-co * sw - so * cw * ci, -so * sw + co * cw * ci, cw * si])
    return P, Q


@dataclass(frozen=True)
class AnalyticEphemeris:
    """Kepler Moon plus circular Sun, both geocentric.

    The default Moon elements are mean J2000 values referred to the ecliptic
    and the default Sun circle lies in the base x-y plane, so the base frame
    is ecliptic-like. Angles in radians.
    """

    moon_a: float = EARTH_MOON_KM
    moon_e: float = 0.0549
    moon_i: float = math.radians(5.145)
    moon_raan: float = math.radians(125.08)
    moon_argp: float = math.radians(318.15)
    moon_M0: float = math.radians(135.27)
    t_ref: float = 0.0
    moon_gm: float = SYSTEM_GM_KM3S2
    sun_radius: float = AU_KM
    sun_rate: float = 2.0 * math.pi / SIDEREAL_YEAR_S
    sun_phase0: float = math.radians(280.46)
    coverage: tuple[float, float] = (-math.inf, math.inf)
    constants: NBodyConstants = field(default_factory=NBodyConstants)
    frame_name: str = "ANALYTIC_BASE"

    kind: ProviderKind = field(default=ProviderKind.ANALYTIC, init=False)

    def __post_init__(self):
        if self.moon_a <= 0.0 or not 0.0 <= self.moon_e < 1.0:
            raise ValueError("Moon orbit needs a > 0 and 0 <= e < 1")
        if self.sun_radius <= 0.0:
            raise ValueError("Sun radius must be positive")
        if not self.coverage[0] < self.coverage[1]:
            raise ValueError("empty coverage interval")

    @property
    def moon_mean_motion(self) -> float:
        return math.sqrt(self.moon_gm / self.moon_a ** 3)

    def check_coverage(self, t_lo: float, t_hi: Optional[float] = None) -> None:
        t_hi = t_lo if t_hi is None else t_hi
        lo, hi = sorted((t_lo, t_hi))
        if lo < self.coverage[0] or hi > self.coverage[1]:
            raise EphemerisCoverageError(f"[{lo}, {hi}] s outside coverage {self.coverage}")

    def body_state(self, body: Body, t):
        """Geocentric position (km) and velocity (km/s) in the base frame."""
        ts, scalar = _as_times(t)
        self.check_coverage(float(ts.min()), float(ts.max()))
        if Body(body) is Body.MOON:
            r, v = self._moon(ts)
        else:
            r, v = self._sun(ts)
        return (r[0], v[0]) if scalar else (r, v)

    def _moon(self, ts):
        a, e, n = self.moon_a, self.moon_e, self.moon_mean_motion
        E = _kepler_E(self.moon_M0 + n * (ts - self.t_ref), e)
        cE, sE = np.cos(E), np.sin(E)
        sq = math.sqrt(1.0 - e * e)
        den = 1.0 - e * cE
        P, Q = _pq(self.moon_raan, self.moon_argp, self.moon_i)
        xp, yp = a * (cE - e), a * sq * sE
        vxp, vyp = -a * n * sE / den, a * n * sq * cE / den
        return np.outer(xp, P) + np.outer(yp, Q), np.outer(vxp, P) + np.outer(vyp, Q)

    def _sun(self, ts):
        th = self.sun_phase0 + self.sun_rate * (ts - self.t_ref)
        c, s = np.cos(th), np.sin(th)
        R, w = self.sun_radius, self.sun_rate
        r = np.column_stack([R * c, R * s, np.zeros_like(c)])
        v = np.column_stack([-R * w * s, R * w * c, np.zeros_like(c)])
        return r, v

    def kernel(self, frames: "EtdAlignedFrames", params: SystemParams):
        """``(kind, p, tab)`` for the compiled integrator, ETD frame, nondimensional."""
        lu, tu = params.length_unit, params.time_unit
        gm_unit = lu ** 3 / tu ** 2
        rot = frames.rotation
        P, Q = _pq(self.moon_raan, self.moon_argp, self.moon_i)
        p = np.zeros(_ig.N_ANALYTIC)
        c = self.constants
        p[_ig.P_GM_E] = c.gm_earth / gm_unit
        p[_ig.P_GM_M] = c.gm_moon / gm_unit
        p[_ig.P_GM_S] = c.gm_sun / gm_unit
        n = self.moon_mean_motion
        m = _ig.P_MOON
        p[m] = self.moon_a / lu
        p[m + 1] = self.moon_e
        p[m + 2] = n * tu
        p[m + 3] = self.moon_M0 + n * (frames.t_etd - self.t_ref)
        p[m + 4 : m + 7] = rot @ P
        p[m + 7 : m + 10] = rot @ Q
        s = _ig.P_SUN
        p[s] = self.sun_radius / lu
        p[s + 1] = self.sun_rate * tu
        p[s + 2] = self.sun_phase0 + self.sun_rate * (frames.t_etd - self.t_ref)
        p[s + 3 : s + 6] = rot @ np.array([1.0, 0.0, 0.0])
        p[s + 6 : s + 9] = rot @ np.array([0.0, 1.0, 0.0])
        return _ig.KIND_EPH_ANALYTIC, p, _ig.EMPTY_TABLE


@dataclass(frozen=True)
class BodyTable:
    """Uniformly sampled geocentric states of one body."""

    body: Body
    t: np.ndarray
    r: np.ndarray
    v: np.ndarray
    frame_name: str = "UNKNOWN"

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        r = np.asarray(self.r, dtype=float).reshape(-1, 3)
        v = np.asarray(self.v, dtype=float).reshape(-1, 3)
        if t.ndim != 1 or t.size < 2 or r.shape[0] != t.size or v.shape[0] != t.size:
            raise EphemerisFormatError("table needs >= 2 rows of (t, r, v)")
        dt = np.diff(t)
        if np.any(dt <= 0.0):
            raise EphemerisFormatError("table epochs must be strictly increasing")
        if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, dt[0]):
            raise EphemerisFormatError("table step is not uniform")
        object.__setattr__(self, "body", Body(self.body))
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "v", v)

    @property
    def step(self) -> float:
        return float(self.t[1] - self.t[0])

    def velocity_residual(self) -> float:
        """Max |v - dr/dt| (km/s) using 4th-order central differences on interior rows."""
        if self.t.size < 5:
            return 0.0
        r, h = self.r, self.step
        d = (r[:-4] - 8.0 * r[1:-3] + 8.0 * r[3:-1] - r[4:]) / (12.0 * h)
        return float(np.max(np.abs(d - self.v[2:-2])))

    def to_csv(self, path) -> None:
        write_table(path, self.body, self.t, self.r, self.v, self.frame_name)


def write_table(path, body: Body, t, r, v, frame_name: str = "UNKNOWN") -> None:
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float).reshape(-1, 3)
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    step = float(t[1] - t[0]) if t.size > 1 else 0.0
    with open(path, "w", newline="") as fh:
        fh.write(f"# body: {Body(body).value}\n# frame: {frame_name}\n# step_s: {step!r}\n")
        w = csv.writer(fh)
        w.writerow(["t_s", "x_km", "y_km", "z_km", "vx_kms", "vy_kms", "vz_kms"])
        for k in range(t.size):
            w.writerow([repr(float(t[k]))] + [repr(float(c)) for c in r[k]] + [repr(float(c)) for c in v[k]])


def read_table(path) -> BodyTable:
    header: dict[str, str] = {}
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh]
    body_lines = []
    for ln in lines:
        if ln.startswith("#"):
            key, _, val = ln[1:].partition(":")
            header[key.strip().lower()] = val.strip()
        elif ln.strip():
            body_lines.append(ln)
    if "body" not in header or "step_s" not in header:
        raise EphemerisFormatError(f"{path}: header must declare body and step_s")
    reader = csv.reader(body_lines)
    cols = next(reader)
    expected = ["t_s", "x_km", "y_km", "z_km", "vx_kms", "vy_kms", "vz_kms"]
    if [c.strip() for c in cols] != expected:
        raise EphemerisFormatError(f"{path}: columns must be {expected}")
    for row in reader:
        rows.append([float(c) for c in row])
    data = np.asarray(rows, dtype=float)
    try:
        body = Body(header["body"].lower())
    except ValueError as exc:
        raise EphemerisFormatError(f"{path}: unknown body {header['body']!r}") from exc
    tab = BodyTable(body, data[:, 0], data[:, 1:4], data[:, 4:7], header.get("frame", "UNKNOWN"))
    if abs(tab.step - float(header["step_s"])) > 1e-9 * max(1.0, tab.step):
        raise EphemerisFormatError(f"{path}: declared step {header['step_s']} != data step {tab.step}")
    return tab


@dataclass(frozen=True, eq=False)
class TabulatedEphemeris:
    """Moon and Sun tables on a shared uniform grid, Hermite-interpolated."""

    moon: BodyTable
    sun: BodyTable
    constants: NBodyConstants = field(default_factory=NBodyConstants)
    fd_tol: float = TABLE_FD_TOL_KMS

    kind: ProviderKind = field(default=ProviderKind.TABULATED, init=False)

    def __post_init__(self):
        if self.moon.body is not Body.MOON or self.sun.body is not Body.SUN:
            raise EphemerisFormatError("expected one Moon table and one Sun table")
        if self.moon.t.shape != self.sun.t.shape or np.max(np.abs(self.moon.t - self.sun.t)) > 1e-6:
            raise EphemerisFormatError("Moon and Sun tables must share the epoch grid")
        for tab in (self.moon, self.sun):
            res = tab.velocity_residual()
            if res > self.fd_tol:
                raise EphemerisFormatError(
                    f"{tab.body.value} velocities inconsistent with positions (residual {res:.3e} km/s); "
                    "use a finer table step"
                )
        splines = {
            Body.MOON: CubicHermiteSpline(self.moon.t, self.moon.r, self.moon.v, axis=0),
            Body.SUN: CubicHermiteSpline(self.sun.t, self.sun.r, self.sun.v, axis=0),
        }
        object.__setattr__(self, "_splines", splines)

    @classmethod
    def from_csv(cls, moon_path, sun_path, **kw) -> "TabulatedEphemeris":
        return cls(read_table(moon_path), read_table(sun_path), **kw)

    @classmethod
    def sample(cls, provider, t_start: float, t_stop: float, step: float, **kw) -> "TabulatedEphemeris":
        """Tabulate another provider on a uniform grid."""
        n = int(math.floor((t_stop - t_start) / step + 1e-9)) + 1
        t = t_start + step * np.arange(n)
        tabs = []
        for body in (Body.MOON, Body.SUN):
            r, v = provider.body_state(body, t)
            tabs.append(BodyTable(body, t, r, v, getattr(provider, "frame_name", "UNKNOWN")))
        return cls(tabs[0], tabs[1], **kw)

    @property
    def coverage(self) -> tuple[float, float]:
        return float(self.moon.t[0]), float(self.moon.t[-1])

    @property
    def frame_name(self) -> str:
        return self.moon.frame_name

    def check_coverage(self, t_lo: float, t_hi: Optional[float] = None) -> None:
        t_hi = t_lo if t_hi is None else t_hi
        lo, hi = sorted((t_lo, t_hi))
        c0, c1 = self.coverage
        if lo < c0 or hi > c1:
            raise EphemerisCoverageError(f"[{lo}, {hi}] s outside table coverage [{c0}, {c1}]")

    def body_state(self, body: Body, t):
        ts, scalar = _as_times(t)
        self.check_coverage(float(ts.min()), float(ts.max()))
        sp = self._splines[Body(body)]
        r, v = sp(ts), sp(ts, 1)
        return (r[0], v[0]) if scalar else (r, v)

    def kernel(self, frames: "EtdAlignedFrames", params: SystemParams):
        lu, tu = params.length_unit, params.time_unit
        vu = lu / tu
        gm_unit = lu ** 3 / tu ** 2
        rot = frames.rotation
        tau = (self.moon.t - frames.t_etd) / tu
        tab = np.column_stack(
            [
                tau,
                self.moon.r @ rot.T / lu,
                self.moon.v @ rot.T / vu,
                self.sun.r @ rot.T / lu,
                self.sun.v @ rot.T / vu,
            ]
        )
        c = self.constants
        p = np.array(
            [c.gm_earth / gm_unit, c.gm_moon / gm_unit, c.gm_sun / gm_unit, tau[0], self.moon.step / tu, tau.size]
        )
        return _ig.KIND_EPH_TABLE, p, np.ascontiguousarray(tab)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


@dataclass(frozen=True, eq=False)
class EtdAlignedFrames:
    """Rotation from the provider base frame to the ETD-aligned axes.

    x points from the Earth to the Moon at ``t_etd`` and z along the Moon's
    orbital angular momentum, so the osculating lunar orbit lies in the x-y
    plane. ``rotation`` has rows e1, e2, e3 (base -> ETD).
    """

    t_etd: float
    rotation: np.ndarray
    moon_r: np.ndarray
    moon_v: np.ndarray

    @classmethod
    def from_provider(cls, provider, t_etd: float = T_ETD_J2000_S) -> "EtdAlignedFrames":
        r, v = provider.body_state(Body.MOON, t_etd)
        h = np.cross(r, v)
        if np.linalg.norm(h) <= 1e-12 * np.linalg.norm(r) * np.linalg.norm(v):
            raise SingularityError("Moon angular momentum vanishes at the ETD epoch")
        e1 = _unit(r)
        e3 = _unit(h)
        e2 = np.cross(e3, e1)
        return cls(float(t_etd), np.vstack([e1, e2, e3]), np.asarray(r), np.asarray(v))

    def to_etd(self, vec: np.ndarray) -> np.ndarray:
        return np.asarray(vec, dtype=float) @ self.rotation.T

    def to_base(self, vec: np.ndarray) -> np.ndarray:
        return np.asarray(vec, dtype=float) @ self.rotation

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.rotation @ self.rotation.T - np.eye(3))))

    def moon_centered(self, provider, R: np.ndarray, V: np.ndarray, t: float):
        """ETD-axes Earth-centred (R, V) -> ETD-axes Moon-centred, km and km/s."""
        rm, vm = provider.body_state(Body.MOON, t)
        return np.asarray(R) - self.to_etd(rm), np.asarray(V) - self.to_etd(vm)


@dataclass(frozen=True, eq=False)
class RotopulsState:
    """Kinematics of the pulsating rotating frame at one epoch.

    ``C`` has columns e1, e2, e3; ``Cprime`` is its time derivative (1/s).
    Lengths in km, velocities km/s, ``tauprime`` in 1/s.
    """

    t: float
    B: np.ndarray
    Bprime: np.ndarray
    ell: float
    ellprime: float
    C: np.ndarray
    Cprime: np.ndarray
    tauprime: float

    def __post_init__(self):
        if not self.ell > 0.0:
            raise ValueError("Earth-Moon distance must be positive")

    def forward(self, r, v):
        """Synodic dimensionless ``(r, v)`` (shape (..., 3)) -> inertial km, km/s."""
        r = np.asarray(r, dtype=float)
        v = np.asarray(v, dtype=float)
        K = self.ellprime * self.C + self.ell * self.Cprime
        R = self.B + self.ell * r @ self.C.T
        Rp = self.Bprime + r @ K.T + self.ell * self.tauprime * v @ self.C.T
        return R, Rp

    def inverse(self, R, Rp):
        R = np.asarray(R, dtype=float)
        Rp = np.asarray(Rp, dtype=float)
        K = self.ellprime * self.C + self.ell * self.Cprime
        r = (R - self.B) @ self.C / self.ell
        v = (Rp - self.Bprime - r @ K.T) @ self.C / (self.ell * self.tauprime)
        return r, v


def build_rotopuls(
    provider,
    t: float,
    params: Optional[SystemParams] = None,
    frames: Optional[EtdAlignedFrames] = None,
    dt: float = FD_STEP_S,
) -> RotopulsState:
    """Frame kinematics at epoch ``t`` from the provider's Moon state.

    Vectors are expressed in the ETD-aligned axes when ``frames`` is given,
    otherwise in the provider base frame. The Moon acceleration and the
    angular-momentum rate come from central differences with step ``dt``.
    """
    params = SystemParams.earth_moon() if params is None else params
    provider.check_coverage(t - dt, t + dt)
    ts = np.array([t - dt, t, t + dt])
    rs, vs = provider.body_state(Body.MOON, ts)
    if frames is not None:
        rs, vs = frames.to_etd(rs), frames.to_etd(vs)
    rm, vm = rs[1], vs[1]
    hs = np.cross(rs, vs)
    hn = np.linalg.norm(hs, axis=1)
    h_vec, h = hs[1], float(hn[1])
    if h <= 1e-12 * np.linalg.norm(rm) * np.linalg.norm(vm):
        raise SingularityError("Moon angular momentum vanishes")
    am = (vs[2] - vs[0]) / (2.0 * dt)
    hprime = float(hn[2] - hn[0]) / (2.0 * dt)

    ell = float(np.linalg.norm(rm))
    ellp = float(rm @ vm) / ell
    e1 = rm / ell
    e3 = h_vec / h
    e2 = np.cross(e3, e1)
    e1p = (ell * vm - ellp * rm) / ell ** 2
    e3p = (h * np.cross(rm, am) - hprime * h_vec) / h ** 2
    e2p = np.cross(e3p, e1) + np.cross(e3, e1p)
    C = np.column_stack([e1, e2, e3])
    Cp = np.column_stack([e1p, e2p, e3p])
    mu = params.mu
    return RotopulsState(
        t=float(t),
        B=mu * rm,
        Bprime=mu * vm,
        ell=ell,
        ellprime=ellp,
        C=C,
        Cprime=Cp,
        tauprime=math.sqrt(params.gm_system / ell ** 3),
    )


def synodic_to_ephemeris(
    ic: State6,
    t_epoch: float,
    provider,
    params: Optional[SystemParams] = None,
    frames: Optional[EtdAlignedFrames] = None,
) -> State6:
    """Map a dimensionless synodic state to a dimensional Earth-inertial state."""
    if ic.frame is not Frame.SYNODIC:
        raise ValueError("expected a synodic state")
    rot = build_rotopuls(provider, t_epoch, params, frames)
    R, Rp = rot.forward(ic.r, ic.v)
    return State6(R, Rp, float(t_epoch), Frame.EPHEMERIS_INERTIAL)


def ephemeris_to_synodic(
    state: State6,
    provider,
    params: Optional[SystemParams] = None,
    frames: Optional[EtdAlignedFrames] = None,
) -> State6:
    if state.frame is not Frame.EPHEMERIS_INERTIAL:
        raise ValueError("expected an ephemeris inertial state")
    rot = build_rotopuls(provider, state.t, params, frames)
    r, v = rot.inverse(state.r, state.v)
    return State6(r, v, 0.0, Frame.SYNODIC)


def eom_nbody(
    state: State6,
    t: float,
    provider,
    constants: Optional[NBodyConstants] = None,
    frames: Optional[EtdAlignedFrames] = None,
) -> np.ndarray:
    """Earth-Moon-Sun acceleration (km/s^2) on a geocentric inertial state.

    Earth monopole plus direct and indirect third-body terms of the Moon and
    the Sun. Body positions are rotated into the ETD axes when ``frames`` is
    given.
    """
    c = provider.constants if constants is None else constants
    R = np.asarray(state.r, dtype=float)
    rm, _ = provider.body_state(Body.MOON, t)
    rs, _ = provider.body_state(Body.SUN, t)
    if frames is not None:
        rm, rs = frames.to_etd(rm), frames.to_etd(rs)
    Rn = np.linalg.norm(R)
    dm = R - rm
    ds = R - rs
    dmn, dsn = np.linalg.norm(dm), np.linalg.norm(ds)
    if Rn == 0.0 or dmn == 0.0 or dsn == 0.0:
        raise SingularityError("spacecraft coincides with a body")
    acc = -c.gm_earth * R / Rn ** 3
    acc -= c.gm_moon * (dm / dmn ** 3 + rm / np.linalg.norm(rm) ** 3)
    acc -= c.gm_sun * (ds / dsn ** 3 + rs / np.linalg.norm(rs) ** 3)
    return acc


@dataclass(frozen=True, eq=False)
class EphemerisModel:
    """N-body dynamics in the ETD-aligned Earth inertial frame.

    States are ``(R / LU, R' / VU)`` and time is ``(T - t_etd) / TU`` with the
    CR3BP units of ``params``. Satisfies the propagation layer's
    ``DynamicsModel`` protocol.
    """

    kind: int
    p: np.ndarray
    tab: np.ndarray
    t_etd: float
    length_unit: float
    time_unit: float
    coverage: tuple[float, float]
    frame: Frame = field(default=Frame.EPHEMERIS_INERTIAL, init=False)

    @classmethod
    def from_provider(
        cls, provider, params: Optional[SystemParams] = None, frames: Optional[EtdAlignedFrames] = None,
        t_etd: float = T_ETD_J2000_S,
    ) -> "EphemerisModel":
        params = SystemParams.earth_moon() if params is None else params
        frames = EtdAlignedFrames.from_provider(provider, t_etd) if frames is None else frames
        kind, p, tab = provider.kernel(frames, params)
        c0, c1 = provider.coverage
        tu = params.time_unit
        return cls(kind, p, tab, frames.t_etd, params.length_unit, tu, ((c0 - frames.t_etd) / tu, (c1 - frames.t_etd) / tu))

    @property
    def gm_earth(self) -> float:
        return float(self.p[_ig.P_GM_E])

    @property
    def gm_moon(self) -> float:
        return float(self.p[_ig.P_GM_M])

    @property
    def velocity_unit(self) -> float:
        return self.length_unit / self.time_unit

    def check_span(self, t_lo: float, t_hi: float) -> None:
        lo, hi = sorted((t_lo, t_hi))
        if lo < self.coverage[0] or hi > self.coverage[1]:
            raise EphemerisCoverageError(
                f"propagation span [{lo:.4f}, {hi:.4f}] TU outside provider coverage "
                f"[{self.coverage[0]:.4f}, {self.coverage[1]:.4f}] TU"
            )

    def body_states(self, t) -> np.ndarray:
        """Rows ``(rM, vM, rS, vS)`` at nondimensional times ``t``."""
        tq = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((tq.size, 12))
        _ig.body_states_many(self.kind, self.p, self.tab, tq, out)
        return out

    def moon_relative(self, t, y):
        y = np.asarray(y, dtype=float)
        b = self.body_states(t).reshape(y.shape[:-1] + (12,))
        return y[..., :3] - b[..., 0:3], y[..., 3:6] - b[..., 3:6]

    def earth_relative(self, t, y):
        y = np.asarray(y, dtype=float)
        return y[..., :3].copy(), y[..., 3:6].copy()

    def eps2_dot(self, t: float, y: np.ndarray) -> float:
        y = np.asarray(y, dtype=float).reshape(6)
        dt = FD_STEP_S / self.time_unit
        b = self.body_states(np.array([t - dt, t, t + dt]))
        a_moon = (b[2, 3:6] - b[0, 3:6]) / (2.0 * dt)
        a_sc = _ig.rhs_once(self.kind, self.p, self.tab, float(t), y)[3:6]
        rr = y[:3] - b[1, 0:3]
        vr = y[3:6] - b[1, 3:6]
        r = float(np.linalg.norm(rr))
        return float(vr @ (a_sc - a_moon + self.gm_moon * rr / r ** 3))

    def to_nondim(self, R, V) -> np.ndarray:
        return np.concatenate([np.asarray(R) / self.length_unit, np.asarray(V) / self.velocity_unit], axis=-1)

    def to_dim(self, y) -> tuple[np.ndarray, np.ndarray]:
        y = np.asarray(y, dtype=float)
        return y[..., :3] * self.length_unit, y[..., 3:6] * self.velocity_unit

    def epoch(self, tau) -> np.ndarray:
        return self.t_etd + np.asarray(tau) * self.time_unit


def synodic_batch_to_model(states: np.ndarray, rot: RotopulsState, model: EphemerisModel) -> np.ndarray:
    """Vectorised synodic ``(n, 6)`` -> nondimensional ephemeris ``(n, 6)``."""
    states = np.asarray(states, dtype=float).reshape(-1, 6)
    R, V = rot.forward(states[:, :3], states[:, 3:])
    return model.to_nondim(R, V)


def default_provider() -> AnalyticEphemeris:
    return AnalyticEphemeris()


__all__ = [
    "AnalyticEphemeris",
    "Body",
    "BodyTable",
    "EphemerisCoverageError",
    "EphemerisFormatError",
    "EphemerisModel",
    "EtdAlignedFrames",
    "NBodyConstants",
    "ProviderKind",
    "RotopulsState",
    "TabulatedEphemeris",
    "build_rotopuls",
    "default_provider",
    "eom_nbody",
    "ephemeris_to_synodic",
    "read_table",
    "synodic_batch_to_model",
    "synodic_to_ephemeris",
    "write_table",
]
