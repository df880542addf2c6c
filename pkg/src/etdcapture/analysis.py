"""Mission analyses on a capture database.

Selection recipes rank records by the origin metric, by the pairwise
perilune metric or by longevity. :func:`perilune_braking` applies small
retro-burns at successive perilunes. :func:`optimize_three_impulse` checks
the origin metric against an actual three-burn transfer. :func:`dataset_stats`
produces revolution-share tables and histograms.
"""
from __future__ import annotations

import csv
import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import integrator as _ig
from .cr3bp import T_ETD_J2000_S, Frame, OrbitalElements, SystemParams, elements_to_cartesian
from .database import CaptureRecord, histogram
from .ephemeris import EphemerisModel, EtdAlignedFrames
from .metric import ElementSet, MetricResult, dv2_metric, record_metric_arrays
from .propagation import (
    DynamicsModel,
    EventKind,
    PropagationConfig,
    StopReason,
    Trajectory,
    _rotate_z,
    count_revolutions,
    detect_apsides,
    propagate,
)

DEG = math.pi / 180.0
PERILUNE_PAIR_TAGS = ("1stRev", "rmin1", "rmin2")
BRAKING_R2_MAX = 0.2  # LU; perilunes farther out are not braked
REV_BINS = tuple(range(1, 9))


# --------------------------------------------------------------------------
# selection


class Objective(enum.Enum):
    MIN_DV = "min_dv"
    MIN_DV2 = "min_dv2"
    MAX_REVS = "max_revs"


@dataclass(frozen=True)
class SelectionRecipe:
    """Record filter plus ranking objective.

    ``pair_incl_tol`` and ``pair_r2_max`` only apply to ``MIN_DV2``: both
    perilunes of a candidate pair must lie within ``pair_incl_tol`` (rad) of
    polar and, when given, below ``pair_r2_max`` (LU).
    """

    name: str
    predicate: Callable[[CaptureRecord], bool]
    objective: Objective
    pair_incl_tol: float = math.pi
    pair_r2_max: Optional[float] = None


@dataclass(frozen=True)
class RankedRecord:
    record: CaptureRecord
    score: float
    metric: Optional[MetricResult] = None
    pair: Optional[tuple[str, str]] = None


def _finite(v: float) -> bool:
    return not math.isnan(v)


def longest_recipe(min_revs: int = 45) -> SelectionRecipe:
    return SelectionRecipe("longest", lambda r: r.n_rev_total >= min_revs, Objective.MAX_REVS)


def polar_first_perilune_recipe(min_revs: int = 4, incl_tol_deg: float = 20.0) -> SelectionRecipe:
    tol = incl_tol_deg * DEG

    def pred(r: CaptureRecord) -> bool:
        return r.n_rev_total >= min_revs and _finite(r.i_1stRev) and abs(r.i_1stRev - 0.5 * math.pi) < tol

    return SelectionRecipe("polar_first_perilune", pred, Objective.MIN_DV)


def polar_pair_recipe(incl_tol_deg: float = 6.0) -> SelectionRecipe:
    return SelectionRecipe("polar_pair", lambda r: True, Objective.MIN_DV2, pair_incl_tol=incl_tol_deg * DEG)


def grazing_polar_pair_recipe(params: SystemParams, incl_tol_deg: float = 12.0, altitude_km: float = 600.0) -> SelectionRecipe:
    r2_max = (params.r_moon + altitude_km) / params.length_unit
    return SelectionRecipe(
        "grazing_polar_pair", lambda r: True, Objective.MIN_DV2, pair_incl_tol=incl_tol_deg * DEG, pair_r2_max=r2_max
    )


def builtin_recipes(params: SystemParams) -> dict[str, SelectionRecipe]:
    recipes = (longest_recipe(), polar_first_perilune_recipe(), polar_pair_recipe(), grazing_polar_pair_recipe(params))
    return {r.name: r for r in recipes}


def best_perilune_pair(rec: CaptureRecord, params: SystemParams, incl_tol: float = math.pi, r2_max: Optional[float] = None):
    """Lowest Moon-centred metric over the admissible pairs of stored perilunes.

    Returns ``(metric, (tag_a, tag_b))`` or None when no pair qualifies.
    """
    best = None
    for ta, tb in itertools.combinations(PERILUNE_PAIR_TAGS, 2):
        ea, eb = rec.perilune_elements(ta), rec.perilune_elements(tb)
        if ea is None or eb is None:
            continue
        ok = True
        for tag, el in ((ta, ea), (tb, eb)):
            if abs(el.i - 0.5 * math.pi) >= incl_tol:
                ok = False
            if r2_max is not None and not getattr(rec, f"r2_{tag}") < r2_max:
                ok = False
        if not ok or not (ea.e < 1.0 and eb.e < 1.0 and ea.a > 0.0 and eb.a > 0.0):
            continue
        m = dv2_metric(ea, eb, params)
        if best is None or m.dv < best[0].dv:
            best = (m, (ta, tb))
    return best


def select(
    records: Sequence[CaptureRecord],
    recipe: SelectionRecipe,
    params: Optional[SystemParams] = None,
    reference=None,
) -> list[RankedRecord]:
    """Records passing the recipe predicate, best first.

    ``MIN_DV`` needs ``reference`` (origin elements) and ``params``;
    ``MIN_DV2`` needs ``params``. Ties are broken by the record key so the
    ranking is deterministic.
    """
    kept = [r for r in records if recipe.predicate(r)]
    if not kept:
        return []
    out: list[RankedRecord] = []
    if recipe.objective is Objective.MAX_REVS:
        out = [RankedRecord(r, -float(r.n_rev_total)) for r in kept]
    elif recipe.objective is Objective.MIN_DV:
        if reference is None or params is None:
            raise ValueError("MIN_DV selection needs a reference and system parameters")
        dv, sub, br = record_metric_arrays(kept, ElementSet.of(reference), params, symmetric=True)
        for k, r in enumerate(kept):
            if np.isfinite(dv[k]):
                m = MetricResult(float(dv[k]), *(float(s) for s in sub[k]), branch=int(br[k]))
                out.append(RankedRecord(r, m.dv, m))
    else:
        if params is None:
            raise ValueError("MIN_DV2 selection needs system parameters")
        for r in kept:
            best = best_perilune_pair(r, params, recipe.pair_incl_tol, recipe.pair_r2_max)
            if best is not None:
                out.append(RankedRecord(r, best[0].dv, best[0], best[1]))
    out.sort(key=lambda rr: (rr.score, rr.record.key))
    return out


def write_selection(path, ranked: Sequence[RankedRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "gamma", "z_LU", "zeta_deg", "ix", "iy", "branch", "n_rev_total", "score", "pair"])
        for k, rr in enumerate(ranked, 1):
            r = rr.record
            pair = "" if rr.pair is None else "/".join(rr.pair)
            w.writerow([k, repr(r.gamma), repr(r.z), repr(math.degrees(r.zeta)), r.ix, r.iy, r.branch, r.n_rev_total, repr(rr.score), pair])


# --------------------------------------------------------------------------
# impulses


@dataclass(frozen=True)
class Maneuver:
    """Impulse at dimensionless time ``t``; ``dv`` in km/s, inertial axes."""

    t: float
    dv: np.ndarray

    @property
    def magnitude_mps(self) -> float:
        return float(np.linalg.norm(self.dv)) * 1000.0


@dataclass(frozen=True)
class ImpulsePlan:
    maneuvers: tuple[Maneuver, ...] = ()
    total_dv: float = 0.0  # m/s

    def __post_init__(self):
        ts = [m.t for m in self.maneuvers]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("maneuver times must be strictly increasing")
        total = sum(m.magnitude_mps for m in self.maneuvers)
        if abs(total - self.total_dv) > 1e-9 * max(1.0, total):
            raise ValueError(f"total_dv {self.total_dv} does not match the burns ({total})")

    @classmethod
    def of(cls, maneuvers: Sequence[Maneuver]) -> "ImpulsePlan":
        return cls(tuple(maneuvers), sum(m.magnitude_mps for m in maneuvers))

    @property
    def magnitudes_mps(self) -> list[float]:
        return [m.magnitude_mps for m in self.maneuvers]


def _inertial_to_model(model: DynamicsModel, t: float, vec: np.ndarray) -> np.ndarray:
    """Velocity increment expressed in the model's propagation axes."""
    if model.frame is Frame.SYNODIC:
        return _rotate_z(np.asarray(vec, dtype=float), -t)
    return np.asarray(vec, dtype=float)


def _model_to_inertial(model: DynamicsModel, t: float, vec: np.ndarray) -> np.ndarray:
    if model.frame is Frame.SYNODIC:
        return _rotate_z(np.asarray(vec, dtype=float), t)
    return np.asarray(vec, dtype=float)


def state_from_earth_inertial(model: DynamicsModel, t: float, r: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Model-frame state from an Earth-centred inertial one (dimensionless)."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    if model.frame is Frame.SYNODIC:
        rho = _rotate_z(r, -t)
        w = _rotate_z(v, -t)
        y = rho - np.array([model.mu, 0.0, 0.0])
        return np.concatenate([y, w - np.array([-rho[1], rho[0], 0.0])])
    return np.concatenate([r, v])


def phase_matched_state(model: DynamicsModel, t: float, elements, target_position: np.ndarray, n_grid: int = 360) -> np.ndarray:
    """Model-frame state on the orbit ``elements`` at epoch ``t`` nearest ``target_position``.

    The distance metric is phase free, so a reference orbit has no preferred
    true anomaly. This picks the one closest to the target in position.
    """
    el = ElementSet.of(elements)
    gm = model.gm_earth
    goal = np.asarray(target_position, dtype=float)

    def state(nu):
        r, v = elements_to_cartesian(OrbitalElements(el.a, el.e, el.i, el.raan, el.argp, float(nu)), gm)
        return state_from_earth_inertial(model, t, r, v)

    def dist(nu):
        return float(np.linalg.norm(state(nu)[:3] - goal))

    grid = np.linspace(0.0, 2.0 * math.pi, n_grid, endpoint=False)
    k = int(np.argmin([dist(nu) for nu in grid]))
    step = grid[1] - grid[0]
    r = minimize_scalar(dist, bounds=(grid[k] - step, grid[k] + step), method="bounded", options=dict(xatol=1e-10))
    return state(r.x)


class BrakingError(RuntimeError):
    """The trajectory collides with the Moon before its first perilune."""


@dataclass(frozen=True)
class BrakingResult:
    """Braked trajectory split at each burn, the burn plan and lifetimes (TU)."""

    segments: tuple[Trajectory, ...]
    plan: ImpulsePlan
    baseline: Trajectory
    eps2_before: tuple[float, ...]
    eps2_after: tuple[float, ...]

    @property
    def lifetime(self) -> float:
        return self.segments[-1].t_end - self.segments[0].t0

    @property
    def baseline_lifetime(self) -> float:
        return self.baseline.t_end - self.baseline.t0

    @property
    def lifetime_extension(self) -> float:
        return self.lifetime - self.baseline_lifetime

    @property
    def end_status(self) -> StopReason:
        return self.segments[-1].status


def _eps2(model: DynamicsModel, t: float, y: np.ndarray) -> float:
    return float(_ig._moon_rel(model.kind, model.p, model.tab, float(t), np.asarray(y, dtype=float))[1])


def perilune_braking(
    ic,
    model: DynamicsModel,
    config: PropagationConfig,
    params: SystemParams,
    dv_mps: float = 5.0,
    max_burns: int = 7,
    t0: float = 0.0,
    horizon: Optional[float] = None,
    r2_max: float = BRAKING_R2_MAX,
) -> BrakingResult:
    """Retro-burns of ``dv_mps`` at successive perilunes below ``r2_max``.

    Each burn opposes the Moon-relative inertial velocity, then propagation
    restarts from the burned state. Propagation stops at collision, escape or
    ``t0 + horizon`` (default ``config.t_forward``).
    """
    if dv_mps < 0.0 or max_burns < 0:
        raise ValueError("dv_mps and max_burns must be non-negative")
    horizon = config.t_forward if horizon is None else horizon
    t_end = t0 + horizon
    stops = _ig.STOP_COLLISION | _ig.STOP_ESCAPE
    y = np.asarray(ic, dtype=float).reshape(6)
    baseline = propagate(y, model, config, horizon, t0, stops)
    dv_nd = dv_mps / 1000.0 / params.velocity_unit

    segments: list[Trajectory] = []
    burns: list[Maneuver] = []
    before: list[float] = []
    after: list[float] = []
    t_cur = t0
    traj = baseline
    while True:
        peri = [t for t, kind in detect_apsides(traj, r2_max) if kind is EventKind.PERILUNE and t > t_cur + 1e-9]
        if not burns and not peri and traj.status is StopReason.COLLISION:
            raise BrakingError("collision before the first perilune")
        if len(burns) >= max_burns or not peri:
            segments.append(traj)
            break
        tb = peri[0]
        yb = traj(tb)
        r_rel, v_rel = model.moon_relative(np.array([tb]), yb[None, :])
        u = v_rel[0] / np.linalg.norm(v_rel[0])
        dv_inertial = -dv_nd * u
        yn = yb.copy()
        yn[3:] += _inertial_to_model(model, tb, dv_inertial)
        before.append(_eps2(model, tb, yb))
        after.append(_eps2(model, tb, yn))
        burns.append(Maneuver(tb, dv_inertial * params.velocity_unit))
        segments.append(_truncate(traj, tb))
        t_cur = tb
        traj = propagate(yn, model, config, t_end - tb, tb, stops)
    return BrakingResult(tuple(segments), ImpulsePlan.of(burns), baseline, tuple(before), tuple(after))


def _truncate(traj: Trajectory, t_stop: float) -> Trajectory:
    """Copy of ``traj`` ending at ``t_stop`` (forward trajectories only)."""
    k = int(np.searchsorted(traj.t, t_stop, side="left"))
    k = max(1, min(k, traj.t.size - 1))  # keep the step that contains t_stop
    return Trajectory(traj.t[: k + 1].copy(), traj.y[: k + 1].copy(), traj.coeffs[:k].copy(), StopReason.HORIZON, float(t_stop), traj.model)


# --------------------------------------------------------------------------
# replay of a dimensional ephemeris state

# Published sample captures: EMO2000 position (km) and velocity (km/s) at the ETD epoch.
SAMPLE_BC_STATES = {
    "longest": (-500754.648873973, 96930.0726983651, -28315.7473944248,
                -0.0262302667192358, -0.966278607253216, -0.182778054922072),
    "stable_polar": (-485952.557622184, 12484.7053447739, -32398.9385774915,
                     -0.0290637180948451, -0.972684625927066, -0.0988095375176495),
    "multiple_polar": (-502151.104316433, 67890.4520791561, -50012.4217631616,
                       -0.0279032774486339, -0.942356982288852, -0.141908744346009),
    "grazing_polar": (-456081.713990439, -2451.70963369324, -76462.9670875461,
                      -0.0366896820620522, -0.983876646961336, -0.0958194874764763),
    "braking": (-509026.731598873, 46561.0023634826, -42387.9887255228,
                -0.0351690791481468, -0.961755240640447, -0.0900457348096386),
    "butterfly": (-483653.619368984, 43594.8128371648, -61529.9871265759,
                  -0.0272893185001766, -0.996138672414697, -0.129261358637946),
}


@dataclass(frozen=True)
class ReplayResult:
    trajectory: Trajectory
    lifetime_days: float
    n_rev_total: int
    n_rev_prograde: int
    n_rev_retrograde: int
    status: StopReason


def replay_ephemeris_state(
    provider,
    r_km: np.ndarray,
    v_kms: np.ndarray,
    params: SystemParams,
    horizon_days: float = 500.0,
    t_etd: float = T_ETD_J2000_S,
    config: Optional[PropagationConfig] = None,
) -> ReplayResult:
    """Propagate a state given in the provider's base frame at ``t_etd`` until lunar impact.

    The run stops at collision or after ``horizon_days``; escapes are not
    terminal because a long capture may wander past the escape radius.
    """
    frames = EtdAlignedFrames.from_provider(provider, t_etd)
    model = EphemerisModel.from_provider(provider, params, frames)
    y0 = model.to_nondim(frames.to_etd(r_km), frames.to_etd(v_kms))
    cfg = PropagationConfig.for_system(params) if config is None else config
    span = horizon_days * 86400.0 / params.time_unit
    traj = propagate(y0, model, cfg, span, 0.0, _ig.STOP_COLLISION)
    n_tot, n_pro, n_ret = count_revolutions(traj, (traj.t0, traj.t_end))
    days = (traj.t_end - traj.t0) * params.time_unit / 86400.0
    return ReplayResult(traj, days, n_tot, n_pro, n_ret, traj.status)


# --------------------------------------------------------------------------
# three-impulse transfer


class InfeasibleWindowError(ValueError):
    """The maneuver window is empty or not covered by both trajectories."""


@dataclass(frozen=True)
class TransferResult:
    """Best three-burn plan found. Residuals are in km and km/s."""

    plan: ImpulsePlan
    residual_pos_km: float
    residual_vel_kms: float
    feasible: bool
    converged: bool
    n_evaluations: int
    seed_costs: tuple[float, ...] = field(default=())


@dataclass(frozen=True)
class TransferConfig:
    n_seeds: int = 5
    seed: int = 0
    pos_tol_km: float = 1.0
    max_evals: int = 600
    newton_iter: int = 10
    rel_tol: float = 1e-11
    abs_tol: float = 1e-11


class _Shooter:
    """Evaluates total cost of (epochs, first burn) with the middle burn found by shooting."""

    def __init__(self, model, ref: Trajectory, tgt: Trajectory, params: SystemParams, cfg: TransferConfig, pcfg):
        self.model = model
        self.ref = ref
        self.tgt = tgt
        self.vu_mps = params.velocity_unit * 1000.0
        self.cfg = cfg
        self.pcfg = pcfg
        self.pos_tol = cfg.pos_tol_km / params.length_unit
        self.w_guess = np.zeros(3)
        self.n = 0

    def _flow(self, y, ta, tb):
        if abs(tb - ta) < 1e-12:
            return np.asarray(y, dtype=float).copy(), True
        tr = propagate(y, self.model, self.pcfg, tb - ta, ta, _ig.STOP_COLLISION)
        return tr(tb), tr.status is StopReason.HORIZON

    def solve(self, t1, t2, t3, dv1):
        """Return (burns in model axes, position residual LU) or None."""
        self.n += 1
        y1 = self.ref(t1).copy()
        y1[3:] += dv1
        y2, ok = self._flow(y1, t1, t2)
        if not ok:
            return None
        r_goal = self.tgt(t3)[:3]
        w = self.w_guess.copy()
        res = None
        for _ in range(self.cfg.newton_iter):
            ya = y2.copy()
            ya[3:] += w
            y3, ok = self._flow(ya, t2, t3)
            if not ok:
                return None
            res = y3[:3] - r_goal
            if np.linalg.norm(res) < 1e-3 * self.pos_tol:
                break
            jac = np.empty((3, 3))
            h = 1e-7
            for k in range(3):
                yp = ya.copy()
                yp[3 + k] += h
                yk, ok = self._flow(yp, t2, t3)
                if not ok:
                    return None
                jac[:, k] = (yk[:3] - y3[:3]) / h
            try:
                step = np.linalg.solve(jac, -res)
            except np.linalg.LinAlgError:
                return None
            cap = 0.05  # ~50 m/s per Newton step
            nrm = np.linalg.norm(step)
            if nrm > cap:
                step *= cap / nrm
            w = w + step
        ya = y2.copy()
        ya[3:] += w
        y3, ok = self._flow(ya, t2, t3)
        if not ok:
            return None
        res = float(np.linalg.norm(y3[:3] - r_goal))
        dv3 = self.tgt(t3)[3:] - y3[3:]
        if res < self.pos_tol:
            self.w_guess = w
        return (np.asarray(dv1, dtype=float), w, dv3), res


def optimize_three_impulse(
    model: DynamicsModel,
    reference_state: np.ndarray,
    t_reference: float,
    target_state: np.ndarray,
    t_target: float,
    params: SystemParams,
    window: Optional[tuple[float, float]] = None,
    config: Optional[TransferConfig] = None,
    prop_config: Optional[PropagationConfig] = None,
) -> TransferResult:
    """Cheapest three-burn transfer from a reference arc onto a target capture.

    The reference arc starts from ``reference_state`` at ``t_reference`` and
    the target arc ends at ``target_state`` at ``t_target`` (model frame,
    dimensionless). Burn epochs lie in ``window`` (default
    ``[t_reference, t_target]``). The first burn and the three epochs are
    searched with Nelder-Mead from several seeds. The middle burn is solved by
    Newton shooting onto the target position at the third epoch, and the third
    burn then matches the target velocity exactly. Plans whose position
    residual exceeds the tolerance are reported with ``feasible=False``.
    """
    cfg = TransferConfig() if config is None else config
    if prop_config is None:
        prop_config = PropagationConfig.for_system(params, rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol)
    t_lo, t_hi = (t_reference, t_target) if window is None else window
    if not (t_reference <= t_lo < t_hi <= t_target):
        raise InfeasibleWindowError(f"window [{t_lo}, {t_hi}] must lie inside [{t_reference}, {t_target}]")
    ref = propagate(np.asarray(reference_state, dtype=float), model, prop_config, t_hi - t_reference, t_reference, _ig.STOP_COLLISION)
    tgt = propagate(np.asarray(target_state, dtype=float), model, prop_config, t_lo - t_target, t_target, _ig.STOP_COLLISION)
    if ref.status is not StopReason.HORIZON or tgt.status is not StopReason.HORIZON:
        raise InfeasibleWindowError("reference or target arc does not span the window")
    shoot = _Shooter(model, ref, tgt, params, cfg, prop_config)
    span = t_hi - t_lo
    dv_scale = 10.0 / shoot.vu_mps  # optimiser works in units of 10 m/s
    big = 1e4

    def decode(x):
        u = np.clip(x[:3], 0.0, 1.0)
        ts = t_lo + span * np.sort(u)
        return ts, x[3:] * dv_scale, float(np.sum((x[:3] - u) ** 2))

    def cost(x):
        ts, dv1, out_of_box = decode(x)
        sol = shoot.solve(ts[0], ts[1], ts[2], dv1)
        if sol is None:
            return big + 1e3 * out_of_box
        burns, res = sol
        total = sum(float(np.linalg.norm(b)) for b in burns) * shoot.vu_mps
        if res > shoot.pos_tol:
            total += big * min(1.0, res / shoot.pos_tol * 1e-3) + 100.0
        return total + 1e3 * out_of_box

    rng = np.random.default_rng(cfg.seed)
    seeds = [np.array([0.05, 0.5, 0.95])]
    while len(seeds) < cfg.n_seeds:
        seeds.append(np.sort(rng.uniform(0.02, 0.98, 3)))
    best_x, best_f, conv, seed_costs = None, math.inf, False, []
    for s in seeds:
        shoot.w_guess = np.zeros(3)
        x0 = np.concatenate([s, np.zeros(3)])
        simplex = np.vstack([x0] + [x0 + d for d in np.diag([0.1, 0.1, 0.1, 0.5, 0.5, 0.5])])
        r = minimize(
            cost,
            x0,
            method="Nelder-Mead",
            options=dict(maxfev=cfg.max_evals, initial_simplex=simplex, xatol=1e-4, fatol=1e-3),
        )
        seed_costs.append(float(r.fun))
        if r.fun < best_f:
            best_x, best_f, conv = r.x, float(r.fun), bool(r.success)

    ts, dv1, _ = decode(best_x)
    shoot.w_guess = np.zeros(3)
    sol = shoot.solve(ts[0], ts[1], ts[2], dv1)
    if sol is None:
        plan = ImpulsePlan()
        return TransferResult(plan, math.inf, math.inf, False, conv, shoot.n, tuple(seed_costs))
    burns, res = sol
    times = list(ts)
    for k in range(1, 3):  # coincident epochs merge into one burn
        if times[k] <= times[k - 1]:
            times[k] = np.nextafter(times[k - 1], math.inf)
    mans = [Maneuver(float(t), _model_to_inertial(model, t, b) * params.velocity_unit) for t, b in zip(times, burns)]
    plan = ImpulsePlan.of(mans)
    res_km = res * params.length_unit
    return TransferResult(plan, res_km, 0.0, res_km <= cfg.pos_tol_km, conv, shoot.n, tuple(seed_costs))


# --------------------------------------------------------------------------
# dataset statistics


@dataclass(frozen=True)
class RevolutionShares:
    """Shares (percent) of records per revolution count; ``tail`` is above the last bin."""

    bins: tuple[int, ...]
    individual: tuple[float, ...]
    cumulative: tuple[float, ...]
    tail: float


@dataclass(frozen=True)
class DatasetStats:
    n_records: int
    total: RevolutionShares
    prograde: RevolutionShares
    retrograde: RevolutionShares
    histograms: dict


HISTOGRAM_FIELDS = (
    "gamma",
    "z",
    "zeta",
    "n_rev_total",
    "t_collision",
    "r2_1stRev",
    "r2_rmin",
    "r2_rmin1",
    "r2_rmin2",
    "i_1stRev",
    "i_rmin1",
    "i_rmin2",
    "i_polar",
)


def revolution_shares(counts: Sequence[int], bins: Sequence[int] = REV_BINS) -> RevolutionShares:
    counts = np.asarray(counts, dtype=int)
    n = counts.size
    if n == 0:
        z = tuple(0.0 for _ in bins)
        return RevolutionShares(tuple(bins), z, z, 0.0)
    ind = [100.0 * np.count_nonzero(counts == b) / n for b in bins]
    cum = list(np.cumsum(ind))
    tail = 100.0 * np.count_nonzero(counts > bins[-1]) / n
    return RevolutionShares(tuple(bins), tuple(float(v) for v in ind), tuple(float(v) for v in cum), float(tail))


def dataset_stats(
    records: Sequence[CaptureRecord],
    params: SystemParams,
    reference=None,
    bins: int = 20,
) -> DatasetStats:
    """Revolution shares and histograms.

    The total-revolution table starts at one revolution. The prograde and
    retrograde rows give, for each count, the share of all records with that
    many revolutions in that sense. ``r2_etd`` (distance from the Moon at the
    ETD) and, with a ``reference``, ``dv`` are added to the histograms.
    """
    records = list(records)
    total = revolution_shares([r.n_rev_total for r in records])
    pro = revolution_shares([r.n_rev_prograde for r in records])
    ret = revolution_shares([r.n_rev_retrograde for r in records])
    hists = {}
    for name in HISTOGRAM_FIELDS:
        hists[name] = histogram(records, name, bins)
    if records:
        r2 = np.array([math.sqrt((r.x - 1.0 + params.mu) ** 2 + r.y ** 2 + r.z ** 2) for r in records])
        c, e = np.histogram(r2, bins=bins)
        hists["r2_etd"] = (e, c)
        if reference is not None:
            dv, _, _ = record_metric_arrays(records, ElementSet.of(reference), params)
            dv = dv[np.isfinite(dv)]
            if dv.size:
                c, e = np.histogram(dv, bins=bins)
                hists["dv"] = (e, c)
    return DatasetStats(len(records), total, pro, ret, hists)


def write_stats(out_dir, stats: DatasetStats) -> None:
    """``revolutions.csv``, one ``hist_<field>.csv`` per histogram and ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "revolutions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        bins = stats.total.bins
        w.writerow(["row", *[f"{b}_revs_pct" for b in bins], f"gt{bins[-1]}_revs_pct"])
        w.writerow(["total_individual", *[repr(v) for v in stats.total.individual], repr(stats.total.tail)])
        w.writerow(["total_cumulative", *[repr(v) for v in stats.total.cumulative], ""])
        w.writerow(["prograde", *[repr(v) for v in stats.prograde.individual], repr(stats.prograde.tail)])
        w.writerow(["retrograde", *[repr(v) for v in stats.retrograde.individual], repr(stats.retrograde.tail)])
    for name, (edges, counts) in stats.histograms.items():
        with open(out / f"hist_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
    summary = {"n_records": stats.n_records, "total_tail_pct": stats.total.tail}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


__all__ = [
    "BrakingError",
    "BrakingResult",
    "DatasetStats",
    "ImpulsePlan",
    "InfeasibleWindowError",
    "Maneuver",
    "Objective",
    "RankedRecord",
    "ReplayResult",
    "RevolutionShares",
    "SAMPLE_BC_STATES",
    "SelectionRecipe",
    "TransferConfig",
    "TransferResult",
    "best_perilune_pair",
    "builtin_recipes",
    "dataset_stats",
    "grazing_polar_pair_recipe",
    "longest_recipe",
    "optimize_three_impulse",
    "perilune_braking",
    "polar_first_perilune_recipe",
    "polar_pair_recipe",
    "replay_ephemeris_state",
    "revolution_shares",
    "select",
    "phase_matched_state",
    "state_from_earth_inertial",
    "write_selection",
    "write_stats",
]
