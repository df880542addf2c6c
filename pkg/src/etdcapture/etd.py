"""Energy Transition Domain: membership test and initial-condition generation.

At a position (x, y, z) the synodic velocities with zero lunar two-body energy
form a sphere of radius ``r_eps`` centred at ``C1 = (y2, -x2, 0)``; those with
the prescribed Jacobi constant form a sphere of radius ``r_j`` about the
origin. A point belongs to the ETD when the two spheres meet. The meeting
circle is parameterised by the declination ``zeta`` of the Moon-relative
inertial velocity and, for each admissible ``zeta``, by two azimuth roots.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cr3bp import Frame, State6, SystemParams, cj_from_gamma

TANGENT_TOL = 1e-12


class SphereStatus(enum.IntEnum):
    CIRCLE = 0
    TANGENT = 1
    DISJOINT = 2
    CONTAINED = 3
    DEGENERATE_COINCIDENT = 4


MEMBER_STATUSES = (SphereStatus.CIRCLE, SphereStatus.TANGENT, SphereStatus.DEGENERATE_COINCIDENT)


class Branch(enum.IntEnum):
    ETA_PLUS = 1
    ETA_MINUS = -1


class AxisSingularityError(ValueError):
    """Position directly above or below the Moon (x2 = y2 = 0)."""


class PoleError(ValueError):
    """cos(zeta) == 0: the velocity has no in-plane component to solve for."""


@dataclass(frozen=True)
class SphereIntersection:
    r_eps: float
    r_j: float
    r_c1: float
    status: SphereStatus

    @property
    def is_member(self) -> bool:
        return self.status in MEMBER_STATUSES


def _geometry(x, y, z, cj, mu):
    """Sphere radii (squared for r_j) and centre offset; works on arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    x2 = x - (1.0 - mu)
    r1 = np.sqrt((x + mu) ** 2 + y * y + z * z)
    r2 = np.sqrt(x2 * x2 + y * y + z * z)
    with np.errstate(divide="ignore", invalid="ignore"):
        reps2 = 2.0 * mu / r2
        rj2 = x * x + y * y + 2.0 * (1.0 - mu) / r1 + reps2 - cj
    rc1 = np.sqrt(x2 * x2 + y * y)
    return x2, r1, r2, np.sqrt(reps2), rj2, rc1


def _classify(reps, rj2, rc1, tol=TANGENT_TOL):
    rj = np.sqrt(np.maximum(rj2, 0.0))
    diff = np.abs(rj - reps)
    summ = rj + reps
    status = np.full(np.shape(rc1), SphereStatus.CONTAINED, dtype=np.int8)
    status[rc1 > summ] = SphereStatus.DISJOINT
    status[(rc1 > diff) & (rc1 < summ)] = SphereStatus.CIRCLE
    tangent = (np.abs(rc1 - summ) < tol) | (np.abs(rc1 - diff) < tol)
    status[tangent] = SphereStatus.TANGENT
    degenerate = (rc1 == 0.0) & (diff < tol)
    status[degenerate] = SphereStatus.DEGENERATE_COINCIDENT
    status[(rc1 == 0.0) & ~degenerate] = SphereStatus.CONTAINED
    status[rj2 < 0.0] = SphereStatus.DISJOINT
    return rj, status


def membership_arrays(x, y, z, cj, mu):
    """Vectorised sphere-intersection status for arrays of positions.

    Returns ``(status, r_eps, r_j, r_c1, rj2)``; ``status`` holds
    :class:`SphereStatus` codes. Points on the Moon get DISJOINT.
    """
    _x2, _r1, r2, reps, rj2, rc1 = _geometry(x, y, z, cj, mu)
    on_moon = r2 == 0.0
    reps = np.where(on_moon, 0.0, reps)
    rj2 = np.where(on_moon, -1.0, rj2)
    rj, status = _classify(np.atleast_1d(reps), np.atleast_1d(rj2), np.atleast_1d(rc1))
    return status.reshape(np.shape(rc1)), reps, rj.reshape(np.shape(rc1)), rc1, rj2


def etd_membership(x: float, y: float, z: float, cj: float, params: SystemParams) -> SphereIntersection:
    """Sphere-intersection status of one position at Jacobi constant ``cj``."""
    x2 = x - (1.0 - params.mu)
    if x2 == 0.0 and y == 0.0 and z == 0.0:
        raise ValueError("ETD membership undefined at the Moon's position")
    status, reps, rj, rc1, _ = membership_arrays(x, y, z, cj, params.mu)
    return SphereIntersection(float(reps), float(rj), float(rc1), SphereStatus(int(status)))


def _num(x, r1, cj, mu):
    # twice the in-plane cross term  x2*v2y - y2*v2x, up to sign
    return 2.0 * (1.0 - mu) / r1 + 2.0 * (1.0 - mu) * x - (1.0 - mu) ** 2 - cj


def injection_angle(x: float, y: float, z: float, gamma: float, zeta: float, params: SystemParams) -> float:
    """sin(sigma): the ETD exists at this (position, gamma, zeta) iff |sin sigma| <= 1."""
    mu = params.mu
    cj = cj_from_gamma(gamma, params)
    x2, r1, r2, reps, _rj2, rc1 = _geometry(x, y, z, cj, mu)
    if float(rc1) == 0.0:
        raise AxisSingularityError("injection angle undefined on the axis through the Moon")
    cz = math.cos(zeta)
    if abs(cz) < 1e-15:
        raise PoleError("cos(zeta) vanishes")
    return float(_num(x, r1, cj, mu) / (2.0 * reps * cz * rc1))


def sin_sigma_arrays(x, y, z, cj, zeta, mu):
    """Vectorised sin(sigma); NaN on the Moon axis."""
    x2, r1, r2, reps, _rj2, rc1 = _geometry(x, y, z, cj, mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = _num(np.asarray(x, dtype=float), r1, cj, mu) / (2.0 * reps * math.cos(zeta) * rc1)
    return np.where(rc1 > 0.0, s, np.nan)


def zeta_band(x: float, y: float, z: float, gamma: float, params: SystemParams) -> Optional[float]:
    """Largest |zeta| for which ETD states exist, or None if the band is empty.

    From |c/A| <= 1 with c proportional to 1/cos(zeta): cos(zeta) >= |s0|
    where s0 is the planar (zeta = 0) injection sine.
    """
    s0 = abs(injection_angle(x, y, z, gamma, 0.0, params))
    if s0 > 1.0:
        return None
    return math.acos(s0)


@dataclass(frozen=True)
class EtdPoint:
    """An ETD initial condition described by position, energy and velocity angles."""

    x: float
    y: float
    z: float
    gamma: float
    zeta: float
    branch: Branch
    sigma: float

    def state(self, params: SystemParams) -> State6:
        eta = self.sigma + _alpha(self.x, self.y, params.mu)
        return _state_from_angles(self.x, self.y, self.z, eta, self.zeta, params.mu)


def _alpha(x, y, mu):
    x2 = x - (1.0 - mu)
    return math.atan2(-y, -x2)


def _state_from_angles(x, y, z, eta, zeta, mu) -> State6:
    x2 = x - (1.0 - mu)
    r2 = math.sqrt(x2 * x2 + y * y + z * z)
    v2 = math.sqrt(2.0 * mu / r2)
    cz = math.cos(zeta)
    vel2 = np.array([v2 * math.cos(eta) * cz, v2 * math.sin(eta) * cz, v2 * math.sin(zeta)])
    # v = v2 - k x r2
    v = vel2 - np.array([-y, x2, 0.0])
    return State6(np.array([x, y, z]), v, 0.0, Frame.SYNODIC)


def _wrap_pi(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def etd_initial_conditions(
    x: float, y: float, z: float, gamma: float, zeta: float, params: SystemParams
) -> list[tuple[EtdPoint, State6]]:
    """ETD states at a position for energy ``gamma`` and declination ``zeta``.

    Two states off the boundary, one when the two azimuth roots coincide
    (tangency), none when ``zeta`` lies outside the admissible band.
    """
    s = injection_angle(x, y, z, gamma, zeta, params)
    if abs(s) > 1.0:
        if abs(s) - 1.0 > 1e-12:
            return []
        s = math.copysign(1.0, s)
    sig1 = math.asin(s)
    sig2 = math.pi - sig1
    out = []
    for branch, sig in ((Branch.ETA_PLUS, sig1), (Branch.ETA_MINUS, sig2)):
        sig = _wrap_pi(sig)
        point = EtdPoint(float(x), float(y), float(z), float(gamma), float(zeta), branch, sig)
        out.append((point, point.state(params)))
    if abs(_wrap_pi(sig1 - sig2)) < 1e-12:
        out = out[:1]
    return out


def etd_states_batch(x, y, z, cj, zeta, mu):
    """Both ETD branches for arrays of positions at one (cj, zeta).

    Returns ``(states, sigma, valid)`` with shapes (2, n, 6), (2, n), (n,).
    Row 0 is the ``ETA_PLUS`` root, row 1 ``ETA_MINUS``. Invalid points
    (outside the band or on the Moon axis) carry NaNs.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    z = np.broadcast_to(np.asarray(z, dtype=float), x.shape)
    s = sin_sigma_arrays(x, y, z, cj, zeta, mu)
    valid = np.isfinite(s) & (np.abs(s) <= 1.0)
    s = np.clip(np.where(valid, s, np.nan), -1.0, 1.0)
    x2 = x - (1.0 - mu)
    r2 = np.sqrt(x2 * x2 + y * y + z * z)
    v2 = np.sqrt(2.0 * mu / r2)
    alpha = np.arctan2(-y, -x2)
    sig1 = np.arcsin(s)
    sigmas = np.stack([sig1, math.pi - sig1])
    sigmas = (sigmas + math.pi) % (2.0 * math.pi) - math.pi
    states = np.empty((2, x.size, 6))
    cz, sz = math.cos(zeta), math.sin(zeta)
    for b in range(2):
        eta = sigmas[b] + alpha
        states[b, :, 0] = x
        states[b, :, 1] = y
        states[b, :, 2] = z
        states[b, :, 3] = v2 * np.cos(eta) * cz + y
        states[b, :, 4] = v2 * np.sin(eta) * cz - x2
        states[b, :, 5] = v2 * sz
    return states, sigmas, valid


def axis_etd_cj(z: float, mu: float) -> float:
    """Jacobi constant at which the point (1 - mu, 0, z) belongs to the ETD."""
    return (1.0 - mu) ** 2 + 2.0 * (1.0 - mu) / math.sqrt(1.0 + z * z)


def moon_reach_cj(mu: float) -> float:
    """Jacobi constant at which the ETD closes onto the Moon's position."""
    return 3.0 - 4.0 * mu + mu * mu


def degenerate_axis_states(z: float, params: SystemParams, n: int, rng: np.random.Generator) -> list[State6]:
    """Random ETD states above the Moon where every velocity direction is admissible.

    Two-parameter family (azimuth and declination), sampled uniformly on the sphere.
    """
    mu = params.mu
    if z == 0.0:
        raise ValueError("z must be non-zero on the Moon axis")
    v2 = math.sqrt(2.0 * mu / abs(z))
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    r = np.array([1.0 - mu, 0.0, z])
    # r2 is parallel to z, so k x r2 = 0 and synodic velocity equals v2
    return [State6(r, v2 * d, 0.0, Frame.SYNODIC) for d in dirs]


@dataclass(frozen=True)
class EtdRaster:
    """Membership raster over an (x, y) box at fixed gamma and z."""

    xs: np.ndarray
    ys: np.ndarray
    gamma: float
    z: float
    member: np.ndarray  # shape (len(ys), len(xs))
    forbidden: np.ndarray
    status: np.ndarray

    def to_csv(self, path) -> None:
        X, Y = np.meshgrid(self.xs, self.ys)
        table = np.column_stack(
            [X.ravel(), Y.ravel(), self.member.ravel().astype(int), self.forbidden.ravel().astype(int)]
        )
        np.savetxt(path, table, delimiter=",", header="x_LU,y_LU,member,forbidden", comments="", fmt=["%.10f", "%.10f", "%d", "%d"])


def etd_slice(
    gamma: float,
    z: float,
    box: tuple[float, float, float, float],
    resolution: float,
    params: SystemParams,
) -> EtdRaster:
    """Membership raster on ``box = (xmin, xmax, ymin, ymax)`` with step ``resolution``.

    Each cell uses exactly the pointwise sphere test of :func:`etd_membership`.
    """
    if resolution <= 0.0:
        raise ValueError("resolution must be positive")
    xmin, xmax, ymin, ymax = box
    xs = xmin + resolution * np.arange(int(math.floor((xmax - xmin) / resolution + 1e-9)) + 1)
    ys = ymin + resolution * np.arange(int(math.floor((ymax - ymin) / resolution + 1e-9)) + 1)
    X, Y = np.meshgrid(xs, ys)
    cj = cj_from_gamma(gamma, params)
    status, _reps, _rj, _rc1, rj2 = membership_arrays(X, Y, np.full_like(X, z), cj, params.mu)
    member = np.isin(status, [int(s) for s in MEMBER_STATUSES])
    return EtdRaster(xs, ys, float(gamma), float(z), member, rj2 < 0.0, status)


__all__ = [
    "AxisSingularityError",
    "Branch",
    "EtdPoint",
    "EtdRaster",
    "MEMBER_STATUSES",
    "PoleError",
    "SphereIntersection",
    "SphereStatus",
    "axis_etd_cj",
    "degenerate_axis_states",
    "etd_initial_conditions",
    "etd_membership",
    "etd_slice",
    "etd_states_batch",
    "injection_angle",
    "membership_arrays",
    "moon_reach_cj",
    "sin_sigma_arrays",
    "zeta_band",
]
