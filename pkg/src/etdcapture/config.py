"""Run configuration: YAML file sections, presets and resolved parameter objects.

The checked-in ``configs/default.yaml`` holds the full-resolution values.
The desk-scale preset coarsens them (steps x10, horizons halved); command
line flags override both.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from .cr3bp import (
    DEFAULT_R2_LIM,
    EARTH_MOON_KM,
    MASS_EARTH_KG,
    MASS_MOON_KG,
    MASS_SUN_KG,
    MOON_RADIUS_KM,
    SYSTEM_GM_KM3S2,
    T_ETD_J2000_S,
    SystemParams,
)
from .ephemeris import AnalyticEphemeris, NBodyConstants, TabulatedEphemeris
from .metric import LTB_ELEMENTS_CR3BP, LTB_ELEMENTS_EPHEMERIS, ElementSet
from .propagation import TWO_PI
from .search import SearchParams
from .transition import TransitionParams


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


class Preset(enum.Enum):
    DESK_SCALE = "desk_scale"
    PAPER_FIDELITY = "paper_fidelity"


@dataclass(frozen=True)
class SystemConfig:
    m_sun_kg: float = MASS_SUN_KG
    m_earth_kg: float = MASS_EARTH_KG
    m_moon_kg: float = MASS_MOON_KG
    r_em_km: float = EARTH_MOON_KM
    r_moon_km: float = MOON_RADIUS_KM
    gm_system: float = SYSTEM_GM_KM3S2  # G (m_E + m_M), km^3/s^2
    t_etd_s: float = T_ETD_J2000_S  # seconds past J2000
    r2_lim: float = DEFAULT_R2_LIM  # LU

    def params(self) -> SystemParams:
        return SystemParams.from_masses(
            self.m_earth_kg, self.m_moon_kg, self.r_em_km, self.gm_system, self.r_moon_km, self.r2_lim
        )

    def nbody_constants(self) -> NBodyConstants:
        g = self.gm_system / (self.m_earth_kg + self.m_moon_kg)
        return NBodyConstants(g * self.m_earth_kg, g * self.m_moon_kg, g * self.m_sun_kg)


@dataclass(frozen=True)
class SearchConfig:
    """Full-resolution grid, buffer and horizon settings (horizons in revolutions of 2 pi)."""

    x_G_hill: float = 7.0
    y_G_hill: float = 9.0
    h: float = 4e-4
    d_O: float = 2e-3
    d_gamma: float = 0.02
    dz: float = 4e-3
    dzeta_deg: float = 1.0
    tau_s_revs: float = 10.0
    tau_sp_revs: float = 2.0
    tau_B_revs: float = 2.0
    gamma_min: float = 0.02
    gamma_max: float = 1.36
    zeta_stride: int = 2
    kernel_half_width: float = 0.08
    max_buffer_iter: int = 0
    max_sections: int = 200
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12

    def search_params(self, params: SystemParams, preset: Preset) -> SearchParams:
        rh = params.hill_radius
        sp = SearchParams(
            x_G=self.x_G_hill * rh,
            y_G=self.y_G_hill * rh,
            h=self.h,
            d_O=self.d_O,
            d_gamma=self.d_gamma,
            dz=self.dz,
            dzeta=math.radians(self.dzeta_deg),
            tau_s=self.tau_s_revs * TWO_PI,
            tau_sp=self.tau_sp_revs * TWO_PI,
            tau_B=self.tau_B_revs * TWO_PI,
            gamma_max=self.gamma_max,
            max_buffer_iter=self.max_buffer_iter,
            max_sections=self.max_sections,
            kernel_half_width=self.kernel_half_width,
            rel_tol=self.rel_tol,
            abs_tol=self.abs_tol,
        )
        return sp.desk_scaled() if preset is Preset.DESK_SCALE else sp

    def gammas(self) -> list[float]:
        n = int(math.floor((self.gamma_max - self.gamma_min) / self.d_gamma + 1e-9)) + 1
        return [round(self.gamma_min + k * self.d_gamma, 12) for k in range(n)]


@dataclass(frozen=True)
class TransitionConfig:
    coarse_factor: int = 10
    prefilter_dv_mps: float = 70.0
    final_dv_mps: float = 60.0
    max_iter: int = 20
    min_revs: int = 2


@dataclass(frozen=True)
class MetricConfig:
    """``reference`` is ``ltb_cr3bp``, ``ltb_ephemeris`` or ``custom`` (then ``custom_elements`` is used)."""

    reference: str = "ltb_cr3bp"
    custom_elements: Optional[dict] = None  # a_lu, e, i_deg, raan_deg, argp_deg
    dv_threshold_mps: float = 60.0

    def elements(self) -> ElementSet:
        if self.reference == "ltb_cr3bp":
            return LTB_ELEMENTS_CR3BP
        if self.reference == "ltb_ephemeris":
            return LTB_ELEMENTS_EPHEMERIS
        if self.reference == "custom":
            c = self.custom_elements or {}
            try:
                return ElementSet(
                    float(c["a_lu"]),
                    float(c["e"]),
                    math.radians(float(c["i_deg"])),
                    math.radians(float(c["raan_deg"])),
                    math.radians(float(c["argp_deg"])),
                )
            except KeyError as exc:
                raise ConfigError(f"custom reference elements missing {exc}") from None
        raise ConfigError(f"unknown metric reference {self.reference!r}")


@dataclass(frozen=True)
class AnalysisConfig:
    braking_dv_mps: float = 5.0
    braking_max_burns: int = 7
    braking_r2_max: float = 0.2
    transfer_seeds: int = 5
    transfer_max_evals: int = 600
    transfer_pos_tol_km: float = 1.0
    histogram_bins: int = 20


@dataclass(frozen=True)
class EphemerisConfig:
    """``provider`` is ``analytic`` or ``table``; tables are CSV files (see the manual)."""

    provider: str = "analytic"
    moon_table: Optional[str] = None
    sun_table: Optional[str] = None

    def build(self, system: SystemConfig, base_dir: Optional[Path] = None):
        consts = system.nbody_constants()
        if self.provider == "analytic":
            return AnalyticEphemeris(constants=consts)
        if self.provider == "table":
            if not self.moon_table or not self.sun_table:
                raise ConfigError("table provider needs moon_table and sun_table")
            base = Path(".") if base_dir is None else Path(base_dir)
            moon = Path(self.moon_table)
            sun = Path(self.sun_table)
            moon = moon if moon.is_absolute() else base / moon
            sun = sun if sun.is_absolute() else base / sun
            return TabulatedEphemeris.from_csv(moon, sun, constants=consts)
        raise ConfigError(f"unknown ephemeris provider {self.provider!r}")


_SECTIONS = {
    "system": SystemConfig,
    "search": SearchConfig,
    "transition": TransitionConfig,
    "metric": MetricConfig,
    "analysis": AnalysisConfig,
    "ephemeris": EphemerisConfig,
}


def _build_section(cls, data: Any):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section for {cls.__name__} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in {cls.__name__}: {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        default = getattr(cls(), k)
        if isinstance(default, bool) or v is None or isinstance(default, (str, dict)) or default is None:
            kw[k] = v
        elif isinstance(default, int):
            if isinstance(v, float) and not v.is_integer():
                raise ConfigError(f"{cls.__name__}.{k} must be an integer")
            kw[k] = int(v)
        else:
            kw[k] = float(v)
    return cls(**kw)


@dataclass(frozen=True)
class PipelineConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    transition: TransitionConfig = field(default_factory=TransitionConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    ephemeris: EphemerisConfig = field(default_factory=EphemerisConfig)

    @classmethod
    def from_mapping(cls, data: Optional[dict]) -> "PipelineConfig":
        data = data or {}
        unknown = set(data) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        return cls(**{name: _build_section(sc, data.get(name)) for name, sc in _SECTIONS.items()})

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        return cls.from_mapping(data)

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    def with_overrides(self, overrides: dict) -> "PipelineConfig":
        """``overrides`` maps ``"section.key"`` to a value; None values are ignored."""
        secs = {name: getattr(self, name) for name in _SECTIONS}
        for dotted, val in overrides.items():
            if val is None:
                continue
            sec, key = dotted.split(".", 1)
            if sec not in secs or key not in {f.name for f in fields(secs[sec])}:
                raise ConfigError(f"unknown override {dotted}")
            secs[sec] = replace(secs[sec], **{key: val})
        return PipelineConfig(**secs)

    def hash(self, extra: Optional[dict] = None) -> str:
        payload = {"config": self.to_dict(), "extra": extra or {}}
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    # resolved objects

    def system_params(self) -> SystemParams:
        return self.system.params()

    def search_params(self, preset: Preset) -> SearchParams:
        return self.search.search_params(self.system_params(), preset)

    def transition_params(self, preset: Preset) -> TransitionParams:
        t = self.transition
        return TransitionParams.from_search(
            self.search_params(preset),
            t_etd=self.system.t_etd_s,
            coarse_factor=t.coarse_factor,
            prefilter_dv=t.prefilter_dv_mps,
            final_dv=t.final_dv_mps,
            max_iter=t.max_iter,
            min_revs=t.min_revs,
        )


@dataclass(frozen=True)
class RunConfig:
    """One CLI invocation: what to run, where to write and how."""

    subcommand: str
    out_dir: Path
    preset: Preset = Preset.DESK_SCALE
    jobs: int = 1
    config_path: Optional[Path] = None
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


__all__ = [
    "AnalysisConfig",
    "ConfigError",
    "EphemerisConfig",
    "MetricConfig",
    "PipelineConfig",
    "Preset",
    "RunConfig",
    "SearchConfig",
    "SystemConfig",
    "TransitionConfig",
]
