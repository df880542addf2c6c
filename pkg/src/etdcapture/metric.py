"""First-order impulsive distance between two osculating orbits.

Each sub-cost estimates the single impulse needed to change one element
while the others stay at their reference values. The total is the
quadrature sum. Semi-major axes are in LU and angles in radians on input;
every cost is returned in m/s.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .cr3bp import SystemParams

NEAR_PARABOLIC_E = 1.0 - 1e-6
SUBCOST_NAMES = ("dv_a", "dv_e", "dv_i", "dv_raan", "dv_argp")


class NearParabolicError(ValueError):
    """Reference or target eccentricity too close to (or above) one."""


@dataclass(frozen=True)
class ElementSet:
    """The five shape/orientation elements compared by the metric."""

    a: float
    e: float
    i: float
    raan: float
    argp: float

    @classmethod
    def of(cls, el) -> "ElementSet":
        if isinstance(el, ElementSet):
            return el
        if hasattr(el, "raan"):
            return cls(float(el.a), float(el.e), float(el.i), float(el.raan), float(el.argp))
        a, e, i, raan, argp = (float(v) for v in tuple(el)[:5])
        return cls(a, e, i, raan, argp)

    def mirrored(self) -> "ElementSet":
        return ElementSet(self.a, self.e, self.i, self.raan + math.pi, self.argp - math.pi)


@dataclass(frozen=True)
class MetricResult:
    """Total distance and signed sub-costs, m/s."""

    dv: float
    dv_a: float
    dv_e: float
    dv_i: float
    dv_raan: float
    dv_argp: float
    branch: int = 0  # 1 when the mirrored target gave the minimum

    @property
    def subcosts(self) -> tuple[float, float, float, float, float]:
        return (self.dv_a, self.dv_e, self.dv_i, self.dv_raan, self.dv_argp)


_D = math.pi / 180.0

# Lunar Trailblazer at its escape epoch: a in LU, angles in radians.
LTB_ELEMENTS_EPHEMERIS = ElementSet(1.8137, 0.2915, 3.4401 * _D, 125.2589 * _D, 217.7110 * _D)
LTB_ELEMENTS_CR3BP = ElementSet(1.6839, 0.2282, 3.434 * _D, 124.9858 * _D, 213.7120 * _D)
LTB_NU_EPHEMERIS = 317.7567 * _D
LTB_NU_CR3BP = 313.9816 * _D


def wrap_pi(angle):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(angle, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    w = np.where(w == -math.pi, math.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def earth_gm(params: SystemParams) -> float:
    return params.gm_system * (1.0 - params.mu)


def moon_gm(params: SystemParams) -> float:
    return params.gm_system * params.mu


def _check(ref: ElementSet):
    if not ref.a > 0.0:
        raise NearParabolicError(f"reference semi-major axis must be positive, got {ref.a}")
    if not 0.0 <= ref.e < NEAR_PARABOLIC_E:
        raise NearParabolicError(f"reference eccentricity {ref.e} is not safely elliptic")


def subcosts_arrays(ref: ElementSet, a_t, e_t, i_t, raan_t, argp_t, gm: float, length_unit: float) -> np.ndarray:
    """Signed sub-costs, shape (n, 5), m/s.

    Targets that are not elliptic (e >= 1 or a <= 0) give NaN rows.
    """
    _check(ref)
    a_t, e_t, i_t, raan_t, argp_t = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (a_t, e_t, i_t, raan_t, argp_t))
    a_km = ref.a * length_unit
    e = ref.e
    slow = math.sqrt(gm * (1.0 - e) / (a_km * (1.0 + e)))  # apogee speed, km/s
    semi = math.sqrt(gm / (a_km * (1.0 - e * e)))
    da = a_t - ref.a
    de = e_t - e
    di = i_t - ref.i
    dO = wrap_pi(raan_t - ref.raan)
    dw = wrap_pi(argp_t - ref.argp)
    out = np.column_stack(
        [
            0.5 * (da / ref.a) * slow,
            0.5 * de * semi,
            slow * di,
            slow * math.sin(ref.i) * dO,
            0.5 * e * semi * dw,
        ]
    ) * 1000.0
    bad = ~((a_t > 0.0) & (e_t >= 0.0) & (e_t < 1.0))
    out[bad] = np.nan
    return out


def dv_metric_arrays(ref, a_t, e_t, i_t, raan_t, argp_t, gm: float, length_unit: float, symmetric: bool = False):
    """Vectorised metric. Returns ``(dv, subcosts, branch)``."""
    ref = ElementSet.of(ref)
    sub = subcosts_arrays(ref, a_t, e_t, i_t, raan_t, argp_t, gm, length_unit)
    dv = np.sqrt(np.sum(sub * sub, axis=1))
    branch = np.zeros(dv.shape, dtype=int)
    if symmetric:
        raan_m = np.asarray(raan_t, dtype=float) + math.pi
        argp_m = np.asarray(argp_t, dtype=float) - math.pi
        sub_m = subcosts_arrays(ref, a_t, e_t, i_t, raan_m, argp_m, gm, length_unit)
        dv_m = np.sqrt(np.sum(sub_m * sub_m, axis=1))
        take = dv_m < dv
        dv = np.where(take, dv_m, dv)
        sub = np.where(take[:, None], sub_m, sub)
        branch = take.astype(int)
    return dv, sub, branch


def _result(dv, sub, branch=0) -> MetricResult:
    return MetricResult(float(dv), *(float(s) for s in sub), branch=int(branch))


def _check_target(tgt: ElementSet):
    if not (tgt.a > 0.0 and 0.0 <= tgt.e < NEAR_PARABOLIC_E):
        raise NearParabolicError(f"target elements are not safely elliptic (a={tgt.a}, e={tgt.e})")


def dv_metric(reference, target, gm: float, length_unit: float) -> MetricResult:
    """Distance from ``reference`` to ``target`` with the central body ``gm`` (km^3/s^2)."""
    ref, tgt = ElementSet.of(reference), ElementSet.of(target)
    _check_target(tgt)
    dv, sub, _ = dv_metric_arrays(ref, tgt.a, tgt.e, tgt.i, tgt.raan, tgt.argp, gm, length_unit)
    return _result(dv[0], sub[0])


def dv_metric_symmetric(reference, target, gm: float, length_unit: float) -> MetricResult:
    """Minimum over the target and its z-mirror (RAAN + pi, argp - pi)."""
    ref, tgt = ElementSet.of(reference), ElementSet.of(target)
    _check_target(tgt)
    dv, sub, br = dv_metric_arrays(ref, tgt.a, tgt.e, tgt.i, tgt.raan, tgt.argp, gm, length_unit, symmetric=True)
    return _result(dv[0], sub[0], br[0])


def dv2_metric(first, second, params: SystemParams, reference=None) -> MetricResult:
    """Moon-centred distance between two perilune element sets.

    ``reference`` (default ``first``) supplies a, e and i inside the formulas;
    the other argument order does not matter once it is fixed.
    """
    a, b = ElementSet.of(first), ElementSet.of(second)
    ref = a if reference is None else ElementSet.of(reference)
    _check_target(a)
    _check_target(b)
    dv, sub, _ = dv_metric_arrays(
        ref,
        b.a - a.a + ref.a,
        b.e - a.e + ref.e,
        b.i - a.i + ref.i,
        b.raan - a.raan + ref.raan,
        b.argp - a.argp + ref.argp,
        moon_gm(params),
        params.length_unit,
    )
    return _result(dv[0], sub[0])


def record_metric_arrays(records: Sequence, reference, params: SystemParams, symmetric: bool = True):
    """Origin-element metric for a sequence of capture records."""
    n = len(records)
    if n == 0:
        return np.empty(0), np.empty((0, 5)), np.empty(0, dtype=int)
    cols = np.array([[r.a_T, r.e_T, r.i_T, r.raan_T, r.argp_T] for r in records], dtype=float)
    return dv_metric_arrays(
        reference, cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3], cols[:, 4], earth_gm(params), params.length_unit, symmetric
    )


@dataclass(frozen=True)
class FilterHit:
    record: object
    metric: MetricResult


def threshold_filter(records: Iterable, reference, threshold: float, params: SystemParams) -> list[FilterHit]:
    """Records whose symmetric origin metric does not exceed ``threshold`` (m/s)."""
    if threshold < 0.0 or math.isnan(threshold):
        raise ValueError("threshold must be non-negative")
    records = list(records)
    dv, sub, br = record_metric_arrays(records, reference, params, symmetric=True)
    keep = np.nonzero(dv <= threshold)[0]
    return [FilterHit(records[k], _result(dv[k], sub[k], br[k])) for k in keep]


def write_filter_report(path, hits: Sequence[FilterHit]) -> None:
    """CSV with the record key, total metric, branch and sub-costs (m/s)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "z_LU", "zeta_deg", "ix", "iy", "branch", "dv_mps", *[f"{n}_mps" for n in SUBCOST_NAMES], "mirror"])
        for h in hits:
            r = h.record
            m = h.metric
            w.writerow(
                [repr(r.gamma), repr(r.z), repr(math.degrees(r.zeta)), r.ix, r.iy, r.branch, repr(m.dv)]
                + [repr(s) for s in m.subcosts]
                + [m.branch]
            )


__all__ = [
    "ElementSet",
    "LTB_ELEMENTS_CR3BP",
    "LTB_ELEMENTS_EPHEMERIS",
    "LTB_NU_CR3BP",
    "LTB_NU_EPHEMERIS",
    "FilterHit",
    "MetricResult",
    "NearParabolicError",
    "dv2_metric",
    "dv_metric",
    "dv_metric_arrays",
    "dv_metric_symmetric",
    "earth_gm",
    "moon_gm",
    "record_metric_arrays",
    "subcosts_arrays",
    "threshold_filter",
    "wrap_pi",
    "write_filter_report",
]
