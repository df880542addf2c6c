"""Trajectory propagation, event detection and ballistic-capture classification.

The heavy lifting happens in :mod:`etdcapture.integrator`; this module wraps
the raw node/coefficient arrays in a :class:`Trajectory`, scans them for
energy crossings and apsides, counts revolutions about the Moon and turns a
forward/backward propagation pair into a :class:`TrajectoryReport`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np
from scipy.optimize import brentq

from . import integrator as _ig
from .cr3bp import SystemParams, State6, Frame, jacobi_from_arrays

TWO_PI = 2.0 * math.pi
EVENT_TOL = 1e-12
REV_EPS = 1e-9  # slack on the 2*pi revolution threshold


class StopReason(enum.Enum):
    HORIZON = _ig.STATUS_HORIZON
    COLLISION = _ig.STATUS_COLLISION
    ESCAPE = _ig.STATUS_ESCAPE
    INDETERMINATE = _ig.STATUS_INDETERMINATE
    EPS_NEGATIVE = _ig.STATUS_EPS_NEGATIVE
    CAPTURE_END = _ig.STATUS_CAPTURE_END


class EventKind(enum.Enum):
    EPS2_CROSSING = "eps2_crossing"
    PERILUNE = "perilune"
    APOLUNE = "apolune"
    COLLISION = "collision"
    ESCAPE = "escape"


class Classification(enum.Enum):
    BALLISTIC_CAPTURE = "BallisticCapture"
    NO_CAPTURE = "NoCapture"
    COLLISION_BEFORE_REV = "CollisionBeforeRev"
    NOT_BACKWARD_ESCAPING = "NotBackwardEscaping"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class PropagationConfig:
    """Integrator tolerances, horizons and terminal radii (all dimensionless)."""

    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    max_step: float = math.inf
    t_forward: float = 10.0 * TWO_PI
    t_backward: float = 2.0 * TWO_PI
    r2_lim: float = 0.9
    r_collision: float = 1737.4 / 384399.0
    max_nodes: int = 2_000_000
    anchor_window: float = 0.5

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            val = getattr(self, name)
            if not 0.0 < val <= 1e-3:
                raise ValueError(f"{name} must lie in (0, 1e-3], got {val}")
        if self.t_forward <= 0.0 or self.t_backward <= 0.0:
            raise ValueError("horizons must be positive")
        if self.max_step <= 0.0:
            raise ValueError("max_step must be positive")
        if self.anchor_window <= 0.0:
            raise ValueError("anchor_window must be positive")

    @classmethod
    def for_system(cls, params: SystemParams, **kw) -> "PropagationConfig":
        kw.setdefault("r2_lim", params.r2_lim)
        kw.setdefault("r_collision", params.r_moon_lu)
        return cls(**kw)


class DynamicsModel(Protocol):
    """What the propagation layer needs from a dynamical model."""

    kind: int
    p: np.ndarray
    tab: np.ndarray
    gm_moon: float
    gm_earth: float
    frame: Frame

    def moon_relative(self, t: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    def earth_relative(self, t: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    def eps2_dot(self, t: float, y: np.ndarray) -> float: ...


def _rotate_z(vec: np.ndarray, angle: np.ndarray) -> np.ndarray:
    c = np.cos(angle)
    s = np.sin(angle)
    out = np.empty_like(vec)
    out[..., 0] = c * vec[..., 0] - s * vec[..., 1]
    out[..., 1] = s * vec[..., 0] + c * vec[..., 1]
    out[..., 2] = vec[..., 2]
    return out


@dataclass(frozen=True)
class Cr3bpModel:
    """Synodic CR3BP; inertial frames are aligned with the synodic one at t = 0."""

    mu: float

    kind: int = field(default=_ig.KIND_CR3BP, init=False)
    frame: Frame = field(default=Frame.SYNODIC, init=False)

    @classmethod
    def from_params(cls, params: SystemParams) -> "Cr3bpModel":
        return cls(params.mu)

    @property
    def p(self) -> np.ndarray:
        return np.array([self.mu])

    @property
    def tab(self) -> np.ndarray:
        return _ig.EMPTY_TABLE

    @property
    def gm_moon(self) -> float:
        return self.mu

    @property
    def gm_earth(self) -> float:
        return 1.0 - self.mu

    def _relative(self, t, y, center_x):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        r = y[..., :3].copy()
        r[..., 0] -= center_x
        v = y[..., 3:6].copy()
        v[..., 0] -= r[..., 1]
        v[..., 1] += r[..., 0]
        return _rotate_z(r, t), _rotate_z(v, t)

    def moon_relative(self, t, y):
        return self._relative(t, y, 1.0 - self.mu)

    def earth_relative(self, t, y):
        return self._relative(t, y, -self.mu)

    def eps2_dot(self, t: float, y: np.ndarray) -> float:
        return eps2_dot_cr3bp(y, self.mu)


def eps2_dot_cr3bp(y: np.ndarray, mu: float) -> float:
    """Exact time derivative of the lunar two-body energy in the CR3BP.

    Equal to ``a3b . v2`` where ``a3b`` is the Earth's differential pull on
    the spacecraft relative to the Moon.
    """
    x, yy, z, vx, vy, vz = (float(c) for c in y[:6])
    r1 = math.sqrt((x + mu) ** 2 + yy * yy + z * z)
    x2 = x - 1.0 + mu
    k = (1.0 - mu) / r1 ** 3
    a = (-(x + mu) * k + (1.0 - mu), -yy * k, -z * k)
    v2 = (vx - yy, vy + x2, vz)
    return a[0] * v2[0] + a[1] * v2[1] + a[2] * v2[2]


def eps2_dot_sign(state: State6, mu: float) -> int:
    """Sign (-1, 0, 1) of the lunar two-body energy rate for a synodic state."""
    if state.frame is not Frame.SYNODIC:
        raise ValueError("eps2_dot_sign expects a synodic state")
    val = eps2_dot_cr3bp(state.vector, mu)
    return int(np.sign(val))


@dataclass(frozen=True)
class Trajectory:
    """Dense trajectory: node times/states plus per-step interpolation data."""

    t: np.ndarray
    y: np.ndarray
    coeffs: np.ndarray
    status: StopReason
    t_end: float
    model: DynamicsModel

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def direction(self) -> float:
        return 1.0 if self.t_end >= self.t0 else -1.0

    @property
    def y_end(self) -> np.ndarray:
        return self(self.t_end)

    def __call__(self, tq):
        tq_arr = np.atleast_1d(np.asarray(tq, dtype=float))
        out = np.empty((tq_arr.size, 6))
        _ig.dense_eval_many(self.t, self.y, self.coeffs, self.t.size, tq_arr, out)
        if np.ndim(tq) == 0:
            return out[0]
        return out

    def sample_times(self, per_step: int = 8, t_lo: Optional[float] = None, t_hi: Optional[float] = None):
        """Node times plus ``per_step - 1`` interior points per step, clipped to the span."""
        t = self.t
        if t.size == 1:
            return t.copy()
        frac = np.arange(per_step) / per_step
        pts = (t[:-1, None] + np.diff(t)[:, None] * frac[None, :]).ravel()
        pts = np.append(pts, t[-1])
        lo, hi = sorted((self.t0, self.t_end))
        if t_lo is not None:
            lo = max(lo, t_lo)
        if t_hi is not None:
            hi = min(hi, t_hi)
        pts = pts[(pts >= lo) & (pts <= hi)]
        pts = np.unique(np.concatenate([pts, [lo, hi]]))
        return pts if self.direction > 0 else pts[::-1]

    def moon_quantities(self, tq: np.ndarray) -> np.ndarray:
        """Columns r2, eps2, radial rate at the given times."""
        tq = np.asarray(tq, dtype=float)
        ys = self(tq)
        out = np.empty((tq.size, 3))
        _ig.moon_rel_many(self.model.kind, self.model.p, self.model.tab, tq, ys, out)
        return out

    def eps2(self, tq) -> np.ndarray:
        return self.moon_quantities(np.atleast_1d(tq))[:, 1]

    def r2(self, tq) -> np.ndarray:
        return self.moon_quantities(np.atleast_1d(tq))[:, 0]


def propagate(
    ic,
    model: DynamicsModel,
    config: PropagationConfig,
    t_span: Optional[float] = None,
    t0: float = 0.0,
    stop_flags: int = _ig.STOP_ESCAPE | _ig.STOP_COLLISION,
) -> Trajectory:
    """Integrate ``ic`` for ``t_span`` (negative for backward) from ``t0``.

    ``ic`` is a :class:`State6` in the model's frame or a raw 6-vector. The
    run ends at the horizon, on collision, on escape (r2 >= r2_lim with
    positive lunar energy) or when the step size underflows.
    """
    if isinstance(ic, State6):
        if ic.frame is not model.frame:
            raise ValueError(f"initial state frame {ic.frame} does not match model frame {model.frame}")
        y0 = ic.vector
    else:
        y0 = np.asarray(ic, dtype=float).reshape(6)
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial state must be finite")
    if t_span is None:
        t_span = config.t_forward
    check_span = getattr(model, "check_span", None)
    if check_span is not None:
        check_span(t0, t0 + t_span)
    ts, ys, fs, n, status, t_stop = _ig.integrate(
        model.kind,
        model.p,
        model.tab,
        float(t0),
        y0,
        float(t0 + t_span),
        config.rel_tol,
        config.abs_tol,
        config.max_step,
        config.r_collision,
        config.r2_lim,
        int(stop_flags),
        int(config.max_nodes),
    )
    return Trajectory(ts, ys, fs, StopReason(int(status)), float(t_stop), model)


def _scan_roots(
    traj: Trajectory,
    func: Callable[[np.ndarray], np.ndarray],
    t_lo: Optional[float] = None,
    t_hi: Optional[float] = None,
    per_step: int = 8,
    skip_first: bool = False,
):
    """Sign changes of ``func`` along the trajectory, refined with Brent's method.

    Returns a list of ``(t, slope_sign)`` in propagation order, with
    ``slope_sign`` the sign of d func / dt.
    """
    ts = traj.sample_times(per_step, t_lo, t_hi)
    if ts.size < 2:
        return []
    if skip_first:
        # func vanishes at the start; geometric samples in the first interval keep
        # a short excursion right after t0 bracketed
        near = ts[0] + (ts[1] - ts[0]) * np.logspace(-6, -1, 6)
        ts = np.concatenate([near, ts[1:]])
    vals = func(ts)
    s = np.sign(vals)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    # exact zeros at interior samples
    zero_idx = np.nonzero(s[1:-1] == 0)[0] + 1
    roots = []
    scalar = lambda tt: float(func(np.array([tt]))[0])
    for i in idx:
        a, b = ts[i], ts[i + 1]
        root = brentq(scalar, min(a, b), max(a, b), xtol=EVENT_TOL, rtol=4 * np.finfo(float).eps)
        slope = np.sign(vals[i + 1] - vals[i]) * np.sign(b - a)
        roots.append((root, int(slope)))
    for i in zero_idx:
        if s[i - 1] * s[i + 1] < 0:
            slope = np.sign(vals[i + 1] - vals[i - 1]) * np.sign(ts[i + 1] - ts[i - 1])
            roots.append((float(ts[i]), int(slope)))
    roots.sort(key=lambda r: r[0] * traj.direction)
    return roots


def detect_eps2_crossings(traj: Trajectory, include_start: bool = True) -> list[float]:
    """Times at which the lunar two-body energy changes sign, in propagation order.

    The initial epoch is reported first when ``include_start`` is set and the
    initial state lies on the ETD (energy zero to 1e-12).
    """
    f = lambda tt: traj.moon_quantities(tt)[:, 1]
    roots = [t for t, _ in _scan_roots(traj, f, skip_first=True)]
    if include_start and abs(float(f(np.array([traj.t0]))[0])) <= 1e-12:
        roots = [traj.t0] + [t for t in roots if abs(t - traj.t0) > EVENT_TOL]
    return roots


def detect_apsides(traj: Trajectory, r2_max: float = math.inf):
    """Perilune and apolune times ``(t, kind)`` in propagation order."""
    f = lambda tt: traj.moon_quantities(tt)[:, 2]
    out = []
    for t, slope in _scan_roots(traj, f):
        kind = EventKind.PERILUNE if slope * traj.direction > 0 else EventKind.APOLUNE
        if traj.r2(t)[0] <= r2_max:
            out.append((t, kind))
    return out


def _angle_increments(pos: np.ndarray) -> np.ndarray:
    a = pos[:-1]
    b = pos[1:]
    cr = np.linalg.norm(np.cross(a, b), axis=-1)
    dt = np.einsum("ij,ij->i", a, b)
    return np.arctan2(cr, dt)


def _swept_angles(traj: Trajectory, t_lo: float, t_hi: float, per_step: int = 8, max_angle: float = 0.25):
    """Angle swept between consecutive samples, with the sign of h_z at each interval midpoint."""
    ts = traj.sample_times(per_step, t_lo, t_hi)
    if traj.direction < 0:
        ts = ts[::-1]
    for _ in range(12):
        ys = traj(ts)
        r, _v = traj.model.moon_relative(ts, ys)
        ang = _angle_increments(r)
        big = np.nonzero(ang > max_angle)[0]
        if big.size == 0:
            break
        mids = 0.5 * (ts[big] + ts[big + 1])
        ts = np.sort(np.concatenate([ts, mids]))
    mids = 0.5 * (ts[:-1] + ts[1:])
    ym = traj(mids)
    rm, vm = traj.model.moon_relative(mids, ym)
    hz = rm[:, 0] * vm[:, 1] - rm[:, 1] * vm[:, 0]
    return ang, np.sign(hz)


def count_revolutions(traj: Trajectory, window: tuple[float, float]) -> tuple[int, int, int]:
    """Full revolutions about the Moon inside ``window``.

    The angle between successive Moon-centred inertial positions is summed;
    each increment is credited to the prograde or retrograde tally according
    to the sign of the z angular momentum. Returns ``(total, prograde,
    retrograde)``, all non-negative.
    """
    lo, hi = sorted(window)
    span_lo, span_hi = sorted((traj.t0, traj.t_end))
    if lo < span_lo - 1e-12 or hi > span_hi + 1e-12:
        raise ValueError(f"window {window} outside trajectory span [{span_lo}, {span_hi}]")
    if hi - lo <= 0.0:
        return 0, 0, 0
    ang, sgn = _swept_angles(traj, max(lo, span_lo), min(hi, span_hi))
    total = ang.sum()
    pro = ang[sgn > 0].sum()
    ret = ang[sgn < 0].sum()
    f = lambda a: int(math.floor(a / TWO_PI + REV_EPS))
    return f(total), f(pro), f(ret)


@dataclass(frozen=True)
class Event:
    kind: EventKind
    t: float
    state: np.ndarray


@dataclass(frozen=True)
class TrajectoryReport:
    """Outcome of a capture classification.

    Times are dimensionless and relative to the ETD epoch. ``escape_state``
    holds the Earth-centred inertial state at backward escape and
    ``perilunes`` the Moon-centred inertial states at each forward perilune.
    """

    classification: Classification
    events: tuple = ()
    n_rev_total: int = 0
    n_rev_prograde: int = 0
    n_rev_retrograde: int = 0
    n_rev_first: int = 0
    t_capture: float = 0.0
    n_crossings: int = 0
    t_collision: Optional[float] = None
    escaped_backward: bool = False
    t_escape: Optional[float] = None
    escape_state: Optional[np.ndarray] = None
    perilunes: tuple = ()
    truncated: bool = False
    forward_status: Optional[StopReason] = None
    backward_status: Optional[StopReason] = None
    t_forward_end: Optional[float] = None

    @property
    def is_capture(self) -> bool:
        return self.classification is Classification.BALLISTIC_CAPTURE


def backward_escape(ic: np.ndarray, model: DynamicsModel, config: PropagationConfig, t0: float = 0.0):
    """Propagate backwards until escape, requiring positive lunar energy throughout."""
    stops = _ig.STOP_ESCAPE | _ig.STOP_COLLISION | _ig.STOP_EPS_NEGATIVE
    traj = propagate(ic, model, config, -config.t_backward, t0, stops)
    return traj, traj.status is StopReason.ESCAPE


def anchor_to_etd(y0: np.ndarray, model: DynamicsModel, config: PropagationConfig, t0: float = 0.0):
    """Nearest zero of the lunar energy along a state whose energy is decreasing.

    States already on the ETD (|eps2| <= 1e-12) are returned unchanged. A
    slightly positive energy is followed forward to its downward crossing and
    a slightly negative one backward to the same crossing, both within
    ``config.anchor_window``. Returns ``(t, y)`` or None when no crossing is
    found.
    """
    y0 = np.asarray(y0, dtype=float).reshape(6)
    _r2, eps0, _rd = _ig._moon_rel(model.kind, model.p, model.tab, float(t0), y0)
    if abs(eps0) <= EVENT_TOL:
        return float(t0), y0
    if eps0 > 0.0:
        traj = propagate(y0, model, config, config.anchor_window, t0, _ig.STOP_EPS_NEGATIVE | _ig.STOP_COLLISION)
        wanted = StopReason.EPS_NEGATIVE
    else:
        traj = propagate(y0, model, config, -config.anchor_window, t0, _ig.STOP_CAPTURE_END | _ig.STOP_COLLISION)
        wanted = StopReason.CAPTURE_END
    if traj.status is not wanted:
        return None
    return float(traj.t_end), traj(traj.t_end)


def classify_bc(
    ic,
    model: DynamicsModel,
    config: PropagationConfig,
    quick: bool = False,
    t0: float = 0.0,
    skip_backward: bool = False,
) -> TrajectoryReport:
    """Ballistic-capture classification of an ETD initial condition.

    Forward: the capture phase that starts at ``t0`` must contain at least one
    full revolution before the lunar energy turns positive again (or the run
    ends). Backward: the state must escape (r2 >= r2_lim) within the backward
    horizon while the lunar energy stays positive. ``quick`` stops the forward
    run at the end of the first capture phase and skips the robustness scan.
    """
    y0 = ic.vector if isinstance(ic, State6) else np.asarray(ic, dtype=float).reshape(6)
    if model.eps2_dot(t0, y0) >= 0.0:
        return TrajectoryReport(Classification.NO_CAPTURE)
    anchored = anchor_to_etd(y0, model, config, t0)
    if anchored is None:
        return TrajectoryReport(Classification.NO_CAPTURE)
    t0, y0 = anchored

    t_escape = None
    escape_state = None
    bstatus = None
    if not skip_backward:
        btraj, escaped = backward_escape(y0, model, config, t0)
        bstatus = btraj.status
        if not escaped:
            return TrajectoryReport(Classification.NOT_BACKWARD_ESCAPING, backward_status=bstatus)
        t_escape = btraj.t_end
        ye = btraj(t_escape)
        re, ve = model.earth_relative(np.array([t_escape]), ye[None, :])
        escape_state = np.concatenate([re[0], ve[0]])

    stops = _ig.STOP_ESCAPE | _ig.STOP_COLLISION
    if quick:
        stops |= _ig.STOP_CAPTURE_END
    traj = propagate(y0, model, config, config.t_forward, t0, stops)
    return _forward_report(traj, model, config, t0, quick, t_escape, escape_state, bstatus)


def _forward_report(traj, model, config, t0, quick, t_escape, escape_state, bstatus):
    crossings = detect_eps2_crossings(traj, include_start=True)
    later = [t for t in crossings if t > t0 + EVENT_TOL]
    first_end = later[0] if later else traj.t_end
    n_first, _, _ = count_revolutions(traj, (t0, first_end))
    collided = traj.status is StopReason.COLLISION
    phase_open = not later

    if n_first >= 1:
        cls = Classification.BALLISTIC_CAPTURE
    elif collided and phase_open:
        cls = Classification.COLLISION_BEFORE_REV
    elif traj.status is StopReason.INDETERMINATE and phase_open:
        cls = Classification.INDETERMINATE
    else:
        cls = Classification.NO_CAPTURE

    events = [Event(EventKind.EPS2_CROSSING, t, traj(t)) for t in crossings]
    perilunes = []
    if quick:
        n_tot, n_pro, n_ret = count_revolutions(traj, (t0, first_end))
    else:
        n_tot, n_pro, n_ret = count_revolutions(traj, (t0, traj.t_end))
        for t, kind in detect_apsides(traj, config.r2_lim):
            state = traj(t)
            events.append(Event(kind, t, state))
            if kind is EventKind.PERILUNE:
                r, v = model.moon_relative(np.array([t]), state[None, :])
                perilunes.append((t, np.concatenate([r[0], v[0]])))
    t_collision = traj.t_end if collided else None
    if collided:
        events.append(Event(EventKind.COLLISION, traj.t_end, traj.y_end))
    if traj.status is StopReason.ESCAPE:
        events.append(Event(EventKind.ESCAPE, traj.t_end, traj.y_end))
    events.sort(key=lambda e: e.t)

    # time with negative lunar energy between consecutive crossings
    bounds = [t0] + later + [traj.t_end]
    t_capture = 0.0
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b > a and traj.eps2(0.5 * (a + b))[0] < 0.0:
            t_capture += b - a
    truncated = traj.status is StopReason.HORIZON and traj.eps2(traj.t_end)[0] < 0.0

    return TrajectoryReport(
        classification=cls,
        events=tuple(events),
        n_rev_total=n_tot,
        n_rev_prograde=n_pro,
        n_rev_retrograde=n_ret,
        n_rev_first=n_first,
        t_capture=t_capture,
        n_crossings=len(crossings),
        t_collision=t_collision,
        escaped_backward=t_escape is not None,
        t_escape=t_escape,
        escape_state=escape_state,
        perilunes=tuple(perilunes),
        truncated=bool(truncated),
        forward_status=traj.status,
        backward_status=bstatus,
        t_forward_end=traj.t_end,
    )


def trajectory_table(traj: Trajectory, n_samples: int = 2000, mu: Optional[float] = None) -> np.ndarray:
    """Uniform samples ``(t, x, y, z, vx, vy, vz, eps2, C_J)`` for dumping.

    The Jacobi column is NaN unless ``mu`` is given (CR3BP states only).
    """
    tq = np.linspace(traj.t0, traj.t_end, n_samples)
    ys = traj(tq)
    eps = traj.moon_quantities(tq)[:, 1]
    cj = jacobi_from_arrays(ys[:, :3], ys[:, 3:], mu) if mu is not None else np.full(tq.size, np.nan)
    return np.column_stack([tq, ys, eps, cj])


__all__ = [
    "Classification",
    "Cr3bpModel",
    "DynamicsModel",
    "Event",
    "EventKind",
    "PropagationConfig",
    "StopReason",
    "Trajectory",
    "TrajectoryReport",
    "anchor_to_etd",
    "backward_escape",
    "classify_bc",
    "count_revolutions",
    "detect_apsides",
    "detect_eps2_crossings",
    "eps2_dot_cr3bp",
    "eps2_dot_sign",
    "propagate",
    "trajectory_table",
]
