"""Spatial circular restricted three-body problem: constants, frames, energies
and osculating-element conversions.

Everything here works in dimensionless synodic units (LU, TU = 1/n, VU = LU/TU)
unless a function says otherwise. Dimensional values only enter through
:class:`SystemParams` at I/O boundaries.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

# Table-of-constants defaults for the Earth-Moon system.
MASS_SUN_KG = 1.9885e30
MASS_EARTH_KG = 5.9724e24
MASS_MOON_KG = 7.3461e22
EARTH_MOON_KM = 384399.0
MOON_RADIUS_KM = 1737.4
SYSTEM_GM_KM3S2 = 4.035032e5  # G (m_E + m_M)
T_ETD_J2000_S = 802221652.5  # 2025 JUN 03 11:19:43.3 TDB
DEFAULT_R2_LIM = 0.9

# effective G that reproduces SYSTEM_GM exactly from the two masses
G_EFF_KM3_KG_S2 = SYSTEM_GM_KM3S2 / (MASS_EARTH_KG + MASS_MOON_KG)

ANGLE_EPS = 1e-10


class SingularityError(ValueError):
    """Raised when a state sits on a primary (r1 == 0 or r2 == 0)."""


class DegenerateOrbitError(ValueError):
    """Raised for rectilinear orbits where the angular momentum vanishes."""


class Frame(enum.Enum):
    SYNODIC = "synodic"
    EARTH_INERTIAL_ETD = "earth_inertial_etd"
    MOON_INERTIAL_ETD = "moon_inertial_etd"
    EPHEMERIS_INERTIAL = "ephemeris_inertial"


class Center(enum.Enum):
    EARTH = "earth"
    MOON = "moon"


def collinear_residual(x: float, mu: float) -> float:
    """x-acceleration of a body at rest on the x-axis between the primaries."""
    return x - (1.0 - mu) / (x + mu) ** 2 + mu / (x - (1.0 - mu)) ** 2


def _l1_quintic(gamma: float, mu: float) -> tuple[float, float]:
    # distance gamma from M2 towards M1; returns (p, dp/dgamma)
    c = (1.0, -(3.0 - mu), 3.0 - 2.0 * mu, -mu, 2.0 * mu, -mu)
    p = 0.0
    dp = 0.0
    for coef in c:
        dp = dp * gamma + p
        p = p * gamma + coef
    return p, dp


def l1_position(mu: float, tol: float = 1e-14, max_iter: int = 200) -> float:
    """x-coordinate of L1 from the collinear quintic.

    Safeguarded Newton iteration inside a bisection bracket on the distance
    from the secondary. The bracket never loses the root, so the iteration
    converges for any ``0 < mu < 0.5``.
    """
    if not 0.0 < mu < 0.5:
        raise ValueError(f"mass ratio must lie in (0, 0.5), got {mu}")
    lo, hi = 0.0, 1.0
    f_lo, _ = _l1_quintic(lo, mu)
    f_hi, _ = _l1_quintic(hi, mu)
    if f_lo * f_hi > 0.0:
        raise RuntimeError(f"L1 quintic bracket [{lo}, {hi}] does not straddle a root")
    g = (mu / 3.0) ** (1.0 / 3.0)
    for _ in range(max_iter):
        f, df = _l1_quintic(g, mu)
        if f == 0.0:
            break
        if (f < 0.0) == (f_lo < 0.0):
            lo, f_lo = g, f
        else:
            hi = g
        step_ok = df != 0.0
        g_new = g - f / df if step_ok else 0.5 * (lo + hi)
        if not (lo < g_new < hi):
            g_new = 0.5 * (lo + hi)
        if abs(g_new - g) <= tol * max(1.0, abs(g)):
            g = g_new
            break
        g = g_new
    else:
        raise RuntimeError(f"L1 solve did not converge, last bracket [{lo}, {hi}]")
    return 1.0 - mu - g


def jacobi_from_arrays(r: np.ndarray, v: np.ndarray, mu: float) -> np.ndarray:
    """Vectorised Jacobi constant for position/velocity arrays of shape (..., 3)."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    r1 = np.sqrt((x + mu) ** 2 + y ** 2 + z ** 2)
    r2 = np.sqrt((x - (1.0 - mu)) ** 2 + y ** 2 + z ** 2)
    return -np.sum(v * v, axis=-1) + x * x + y * y + 2.0 * (1.0 - mu) / r1 + 2.0 * mu / r2


def lagrange_cj(mu: float) -> tuple[float, float]:
    """Jacobi constants at L1 and L4."""
    x1 = l1_position(mu)
    cj_l1 = float(jacobi_from_arrays(np.array([x1, 0.0, 0.0]), np.zeros(3), mu))
    return cj_l1, 3.0 - mu + mu * mu


@dataclass(frozen=True)
class SystemParams:
    """Immutable description of a CR3BP system and its scaling units.

    ``time_unit`` is the inverse mean motion of the secondary, so one orbital
    period of the primaries is ``2*pi`` in dimensionless time.
    """

    mu: float
    length_unit: float  # km
    time_unit: float  # s
    velocity_unit: float  # km/s
    cj_l1: float
    cj_l4: float
    r_moon: float  # km
    r2_lim: float = DEFAULT_R2_LIM  # LU
    gm_system: float = SYSTEM_GM_KM3S2  # km^3/s^2

    def __post_init__(self):
        if not 0.0 < self.mu < 0.5:
            raise ValueError(f"mu must be in (0, 0.5), got {self.mu}")
        if not self.cj_l4 < self.cj_l1:
            raise ValueError("expected cj_l4 < cj_l1")
        if abs(self.cj_l4 - (3.0 - self.mu + self.mu ** 2)) > 1e-12:
            raise ValueError("cj_l4 inconsistent with the analytic L4 value")
        if not 0.0 < self.r2_lim < 1.0:
            raise ValueError(f"r2_lim must be in (0, 1), got {self.r2_lim}")

    @classmethod
    def from_masses(
        cls,
        m_primary: float = MASS_EARTH_KG,
        m_secondary: float = MASS_MOON_KG,
        length_unit: float = EARTH_MOON_KM,
        gm_system: float = SYSTEM_GM_KM3S2,
        r_moon: float = MOON_RADIUS_KM,
        r2_lim: float = DEFAULT_R2_LIM,
    ) -> "SystemParams":
        mu = m_secondary / (m_primary + m_secondary)
        time_unit = math.sqrt(length_unit ** 3 / gm_system)
        cj_l1, cj_l4 = lagrange_cj(mu)
        return cls(
            mu=mu,
            length_unit=length_unit,
            time_unit=time_unit,
            velocity_unit=length_unit / time_unit,
            cj_l1=cj_l1,
            cj_l4=cj_l4,
            r_moon=r_moon,
            r2_lim=r2_lim,
            gm_system=gm_system,
        )

    @classmethod
    def earth_moon(cls, **overrides) -> "SystemParams":
        return cls.from_masses(**overrides)

    @property
    def r_moon_lu(self) -> float:
        return self.r_moon / self.length_unit

    @property
    def hill_radius(self) -> float:
        return (self.mu / 3.0) ** (1.0 / 3.0)

    @property
    def period_s(self) -> float:
        return 2.0 * math.pi * self.time_unit

    @property
    def moon_position(self) -> np.ndarray:
        return np.array([1.0 - self.mu, 0.0, 0.0])

    def gamma_from_cj(self, cj):
        return gamma_from_cj(cj, self)

    def cj_from_gamma(self, gamma):
        return cj_from_gamma(gamma, self)


_FRAME_LOOKUP = {f.value: f for f in Frame}


def load_system_params(path) -> SystemParams:
    """Read constants from a YAML file (keys mu, length_unit_km, time_unit_s,
    r_moon_km, r2_lim). Missing keys fall back to Earth-Moon defaults."""
    import yaml

    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    raw = raw.get("system", raw)
    base = SystemParams.earth_moon()
    mu = float(raw.get("mu", base.mu))
    length_unit = float(raw.get("length_unit_km", base.length_unit))
    time_unit = float(raw.get("time_unit_s", base.time_unit))
    cj_l1, cj_l4 = lagrange_cj(mu)
    return SystemParams(
        mu=mu,
        length_unit=length_unit,
        time_unit=time_unit,
        velocity_unit=length_unit / time_unit,
        cj_l1=cj_l1,
        cj_l4=cj_l4,
        r_moon=float(raw.get("r_moon_km", base.r_moon)),
        r2_lim=float(raw.get("r2_lim", base.r2_lim)),
        gm_system=length_unit ** 3 / time_unit ** 2,
    )


@dataclass(frozen=True)
class State6:
    """Position, velocity and epoch tagged with the frame they live in."""

    r: np.ndarray
    v: np.ndarray
    t: float = 0.0
    frame: Frame = Frame.SYNODIC

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).reshape(3)
        v = np.asarray(self.v, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v)) and math.isfinite(self.t)):
            raise ValueError("State6 components must be finite")
        if isinstance(self.frame, str):
            object.__setattr__(self, "frame", _FRAME_LOOKUP[self.frame])
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "v", v)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.r, self.v])

    @classmethod
    def from_vector(cls, y, t: float = 0.0, frame: Frame = Frame.SYNODIC) -> "State6":
        y = np.asarray(y, dtype=float)
        return cls(y[:3], y[3:6], t, frame)

    def mirrored(self) -> "State6":
        """Reflection through the x-y plane: (z, vz) -> (-z, -vz)."""
        s = np.array([1.0, 1.0, -1.0])
        return State6(self.r * s, self.v * s, self.t, self.frame)


def _require_frame(state: State6, frame: Frame):
    if state.frame is not frame:
        raise ValueError(f"expected a {frame.value} state, got {state.frame.value}")


def _distances(r: np.ndarray, mu: float) -> tuple[float, float]:
    x, y, z = r
    r1 = math.sqrt((x + mu) ** 2 + y * y + z * z)
    r2 = math.sqrt((x - (1.0 - mu)) ** 2 + y * y + z * z)
    if r1 == 0.0 or r2 == 0.0:
        raise SingularityError(f"collision singularity at r={r}")
    return r1, r2


def eom_cr3bp(state: State6, mu: float) -> np.ndarray:
    """Time derivative (vx, vy, vz, ax, ay, az) of a synodic state."""
    _require_frame(state, Frame.SYNODIC)
    r1, r2 = _distances(state.r, mu)
    x, y, z = state.r
    vx, vy, vz = state.v
    k1 = (1.0 - mu) / r1 ** 3
    k2 = mu / r2 ** 3
    ax = 2.0 * vy + x - k1 * (x + mu) - k2 * (x - (1.0 - mu))
    ay = -2.0 * vx + y - k1 * y - k2 * y
    az = -k1 * z - k2 * z
    return np.array([vx, vy, vz, ax, ay, az])


def jacobi_constant(state: State6, mu: float) -> float:
    _require_frame(state, Frame.SYNODIC)
    _distances(state.r, mu)
    return float(jacobi_from_arrays(state.r, state.v, mu))


def gamma_from_cj(cj, params: SystemParams):
    """Three-body energy parameter: 0 at the L1 value, 1 at the L4 value."""
    return (cj - params.cj_l1) / (params.cj_l4 - params.cj_l1)


def cj_from_gamma(gamma, params: SystemParams):
    return params.cj_l1 + gamma * (params.cj_l4 - params.cj_l1)


def _rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def synodic_to_moon_inertial(state: State6, mu: float) -> State6:
    """Moon-centred inertial state, axes aligned with the synodic frame at t=0.

    At epoch ``t`` the synodic frame has turned by ``t`` radians about z.
    """
    _require_frame(state, Frame.SYNODIC)
    r2 = state.r - np.array([1.0 - mu, 0.0, 0.0])
    v2 = state.v + np.array([-r2[1], r2[0], 0.0])
    if state.t != 0.0:
        rot = _rot_z(state.t)
        r2, v2 = rot @ r2, rot @ v2
    return State6(r2, v2, state.t, Frame.MOON_INERTIAL_ETD)


def moon_inertial_to_synodic(state: State6, mu: float) -> State6:
    _require_frame(state, Frame.MOON_INERTIAL_ETD)
    r2, v2 = state.r, state.v
    if state.t != 0.0:
        rot = _rot_z(-state.t)
        r2, v2 = rot @ r2, rot @ v2
    v = v2 - np.array([-r2[1], r2[0], 0.0])
    return State6(r2 + np.array([1.0 - mu, 0.0, 0.0]), v, state.t, Frame.SYNODIC)


def synodic_to_earth_inertial(state: State6, mu: float) -> State6:
    """Earth-centred inertial counterpart of :func:`synodic_to_moon_inertial`."""
    _require_frame(state, Frame.SYNODIC)
    r1 = state.r + np.array([mu, 0.0, 0.0])
    v1 = state.v + np.array([-r1[1], r1[0], 0.0])
    if state.t != 0.0:
        rot = _rot_z(state.t)
        r1, v1 = rot @ r1, rot @ v1
    return State6(r1, v1, state.t, Frame.EARTH_INERTIAL_ETD)


def two_body_energy_moon(state: State6, mu: float) -> float:
    """Keplerian energy relative to the secondary, v2^2/2 - mu/r2."""
    if state.frame is Frame.SYNODIC:
        state = synodic_to_moon_inertial(state, mu)
    _require_frame(state, Frame.MOON_INERTIAL_ETD)
    r2 = float(np.linalg.norm(state.r))
    if r2 == 0.0:
        raise SingularityError("two-body energy undefined at the secondary")
    return 0.5 * float(state.v @ state.v) - mu / r2


def eps2_from_arrays(y: np.ndarray, mu: float) -> np.ndarray:
    """Vectorised two-body energy w.r.t. the secondary for synodic states (..., 6)."""
    y = np.asarray(y, dtype=float)
    x2 = y[..., 0] - 1.0 + mu
    yy = y[..., 1]
    z = y[..., 2]
    r2 = np.sqrt(x2 * x2 + yy * yy + z * z)
    vx2 = y[..., 3] - yy
    vy2 = y[..., 4] + x2
    vz2 = y[..., 5]
    return 0.5 * (vx2 * vx2 + vy2 * vy2 + vz2 * vz2) - mu / r2


@dataclass(frozen=True)
class OrbitalElements:
    """Osculating elements. Angles in radians, normalised to [0, 2*pi)."""

    a: float
    e: float
    i: float
    raan: float
    argp: float
    nu: float
    center: Center = Center.EARTH

    def __post_init__(self):
        if self.e < 0.0:
            raise ValueError("eccentricity must be non-negative")
        if self.e < 1.0 and self.a <= 0.0:
            raise ValueError("elliptic orbits need a > 0")
        if self.e > 1.0 and self.a >= 0.0:
            raise ValueError("hyperbolic orbits need a < 0")
        for name in ("raan", "argp", "nu"):
            object.__setattr__(self, name, float(np.mod(getattr(self, name), 2 * math.pi)))
        object.__setattr__(self, "i", float(self.i))

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return (self.a, self.e, self.i, self.raan, self.argp, self.nu)

    def mirrored(self) -> "OrbitalElements":
        """Elements of the z-mirrored orbit: RAAN + pi, argp - pi."""
        return OrbitalElements(
            self.a, self.e, self.i, self.raan + math.pi, self.argp - math.pi, self.nu, self.center
        )


def _wrap(angle: float) -> float:
    return float(np.mod(angle, 2.0 * math.pi))


def cartesian_to_elements(r, v, gm: float, center: Center = Center.EARTH) -> OrbitalElements:
    """Osculating elements from an inertial position/velocity pair.

    Conventions for the singular cases: ``raan = 0`` when ``i < 1e-10`` (argp
    then measured from the x-axis), ``argp = 0`` when ``e < 1e-10`` (nu then
    measured from the node, or from the x-axis when also equatorial).
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    rn = float(np.linalg.norm(r))
    h = np.cross(r, v)
    hn = float(np.linalg.norm(h))
    if rn == 0.0 or hn <= 1e-14 * rn * max(float(np.linalg.norm(v)), 1e-300):
        raise DegenerateOrbitError("rectilinear or degenerate orbit (h ~ 0)")
    energy = 0.5 * float(v @ v) - gm / rn
    e_vec = np.cross(v, h) / gm - r / rn
    e = float(np.linalg.norm(e_vec))
    a = -gm / (2.0 * energy) if energy != 0.0 else math.inf
    i = math.acos(max(-1.0, min(1.0, h[2] / hn)))

    node = np.array([-h[1], h[0], 0.0])
    node_n = float(np.linalg.norm(node))
    equatorial = i < ANGLE_EPS or (math.pi - i) < ANGLE_EPS
    circular = e < ANGLE_EPS

    if equatorial:
        raan = 0.0
        node_dir = np.array([1.0, 0.0, 0.0])
    else:
        node_dir = node / node_n
        raan = math.atan2(node_dir[1], node_dir[0])

    # in-plane basis: node direction and its 90 deg advance along the motion
    h_hat = h / hn
    q_dir = np.cross(h_hat, node_dir)

    if circular:
        argp = 0.0
        nu = math.atan2(r @ q_dir, r @ node_dir)
    else:
        argp = math.atan2(e_vec @ q_dir, e_vec @ node_dir)
        p_hat = e_vec / e
        nu = math.atan2(float(np.cross(p_hat, r) @ h_hat), float(p_hat @ r))
    return OrbitalElements(a, e, i, _wrap(raan), _wrap(argp), _wrap(nu), center)


def elements_to_cartesian(el: OrbitalElements, gm: float) -> tuple[np.ndarray, np.ndarray]:
    a, e, i, raan, argp, nu = el.as_tuple()
    p = a * (1.0 - e * e)
    if p <= 0.0:
        raise DegenerateOrbitError("semi-latus rectum must be positive")
    cnu, snu = math.cos(nu), math.sin(nu)
    rmag = p / (1.0 + e * cnu)
    r_pf = np.array([rmag * cnu, rmag * snu, 0.0])
    k = math.sqrt(gm / p)
    v_pf = np.array([-k * snu, k * (e + cnu), 0.0])
    co, so = math.cos(raan), math.sin(raan)
    cw, sw = math.cos(argp), math.sin(argp)
    ci, si = math.cos(i), math.sin(i)
    rot = np.array(
        [
            [co * cw - so * sw * ci, -co * sw - so * cw * ci, so * si],
            [so * cw + co * sw * ci, -so * sw + co * cw * ci, -co * si],
            [sw * si, cw * si, ci],
        ]
    )
    return rot @ r_pf, rot @ v_pf


__all__ = [
    "Center",
    "DegenerateOrbitError",
    "Frame",
    "OrbitalElements",
    "SingularityError",
    "State6",
    "SystemParams",
    "cartesian_to_elements",
    "cj_from_gamma",
    "collinear_residual",
    "elements_to_cartesian",
    "eom_cr3bp",
    "eps2_from_arrays",
    "gamma_from_cj",
    "jacobi_constant",
    "jacobi_from_arrays",
    "l1_position",
    "lagrange_cj",
    "load_system_params",
    "moon_inertial_to_synodic",
    "synodic_to_earth_inertial",
    "synodic_to_moon_inertial",
    "two_body_energy_moon",
]
