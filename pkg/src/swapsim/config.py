"""Scenario configuration: flat ``key = value`` text, one parameter per line."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .link import ChannelParams, ClockParams, DetectorParams, fiber_delay, propagation_delay
from .sources import HomParams, SourceError, SourceParams, StatModel, calibrate_pair_prob


class ConfigError(ValueError):
    """Raised with every validation failure listed in ``errors``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


MODES = ("local", "remote")
ANALYSES = ("witness", "chsh")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "remote"
    analysis: str = "witness"
    seed: int = 1
    duration_s: float = 16260.0
    block_seconds: float = 30.0

    rep_rate_hz: float = 80e6
    two_fold_rate_hz: float = 130e3
    eta_local: float = 1.0
    stat_model: str = "poissonian"
    intrinsic_visibility: float = 0.439474

    delta_l_mm: float = 0.0
    center_wavelength_nm: float = 808.0
    bsm_filter_fwhm_nm: float = 3.0
    outer_filter_fwhm_nm: float = 8.0  # metadata only
    hom_width_scale: float = 1.0

    mean_loss_db: float = 32.0
    scint_sigma_db: float = 0.0
    length_km: float = 143.0

    dark_rate_local_hz: float = 100.0
    dark_rate_remote_hz: float = 500.0
    jitter_local_ps: float = 150.0
    jitter_remote_ps: float = 250.0
    dead_time_ns: float = 0.0

    alice_fiber_m: float = 100.0
    bob_fiber_m: float = 50.0

    lapalma_offset_ns: float = 0.0
    lapalma_drift_ppm: float = 0.0
    tenerife_offset_ns: float = 137_000.0
    tenerife_drift_ppm: float = 0.02

    bsm_window_ns: float = 1.0
    threefold_window_ns: float = 5.0
    fourfold_window_ns: float = 5.0
    xcorr_span_us: float = 500.0
    xcorr_bin_ns: float = 1.0
    drift_search_ppm: float = 0.1
    sync_threshold: float = 5.0
    sideband_offset_ns: float = 100.0
    bootstrap_resamples: int = 200

    # -- derived views ---------------------------------------------------------

    @property
    def pair_prob(self) -> float:
        return calibrate_pair_prob(self.two_fold_rate_hz, self.rep_rate_hz, self.eta_local)

    @property
    def source(self) -> SourceParams:
        return SourceParams(self.pair_prob, self.intrinsic_visibility, StatModel(self.stat_model))

    @property
    def hom(self) -> HomParams:
        return HomParams(self.delta_l_mm, self.center_wavelength_nm, self.bsm_filter_fwhm_nm, self.hom_width_scale)

    @property
    def channel(self) -> ChannelParams:
        return ChannelParams(self.mean_loss_db, self.scint_sigma_db, self.length_km, self.block_seconds)

    @property
    def local_detector(self) -> DetectorParams:
        return DetectorParams(self.eta_local, self.dark_rate_local_hz, self.jitter_local_ps, self.dead_time_ns)

    @property
    def remote_detector(self) -> DetectorParams:
        return DetectorParams(self.eta_local, self.dark_rate_remote_hz, self.jitter_remote_ps, self.dead_time_ns)

    @property
    def lapalma_clock(self) -> ClockParams:
        return ClockParams(self.lapalma_offset_ns, self.lapalma_drift_ppm)

    @property
    def tenerife_clock(self) -> ClockParams:
        if self.mode == "local":
            return self.lapalma_clock
        return ClockParams(self.tenerife_offset_ns, self.tenerife_drift_ppm)

    @property
    def n_blocks(self) -> int:
        return int(round(self.duration_s / self.block_seconds))

    @property
    def alice_delay_ns(self) -> float:
        return fiber_delay(self.alice_fiber_m)

    @property
    def bob_delay_ns(self) -> float:
        d = fiber_delay(self.bob_fiber_m)
        if self.mode == "remote":
            d += propagation_delay(self.channel)
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # -- validation --------------------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        errors = []
        if self.mode not in MODES:
            errors.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.analysis not in ANALYSES:
            errors.append(f"analysis must be one of {ANALYSES}, got {self.analysis!r}")
        if self.block_seconds <= 0:
            errors.append("block_seconds must be positive")
        elif self.duration_s <= 0:
            errors.append("duration_s must be positive")
        else:
            ratio = self.duration_s / self.block_seconds
            if abs(ratio - round(ratio)) > 1e-9:
                errors.append(
                    f"duration_s ({self.duration_s}) must be a multiple of block_seconds ({self.block_seconds})"
                )
        if self.rep_rate_hz <= 0:
            errors.append("rep_rate_hz must be positive")
        elif abs(self.rep_rate_hz * self.block_seconds - round(self.rep_rate_hz * self.block_seconds)) > 1e-6:
            errors.append("rep_rate_hz * block_seconds must be an integer pulse count")
        elif abs(1e12 / self.rep_rate_hz - round(1e12 / self.rep_rate_hz)) > 1e-9:
            errors.append("pulse period must be an integer number of picoseconds")
        if not 0 < self.eta_local <= 1:
            errors.append("eta_local must lie in (0, 1]")
        if self.stat_model not in {m.value for m in StatModel}:
            errors.append(f"stat_model must be poissonian or thermal, got {self.stat_model!r}")
        if self.two_fold_rate_hz < 0:
            errors.append("two_fold_rate_hz must be >= 0")
        elif self.rep_rate_hz > 0 and 0 < self.eta_local <= 1:
            try:
                calibrate_pair_prob(self.two_fold_rate_hz, self.rep_rate_hz, self.eta_local)
            except SourceError as exc:
                errors.append(f"two_fold_rate_hz: {exc}")
        if not 0 <= self.intrinsic_visibility <= 1:
            errors.append("intrinsic_visibility must lie in [0, 1]")
        if self.bsm_filter_fwhm_nm <= 0 or self.outer_filter_fwhm_nm <= 0:
            errors.append("filter FWHM values must be positive")
        if self.hom_width_scale <= 0:
            errors.append("hom_width_scale must be positive")
        if self.mean_loss_db < 0 or self.scint_sigma_db < 0:
            errors.append("loss parameters must be >= 0")
        for name in ("dark_rate_local_hz", "dark_rate_remote_hz", "jitter_local_ps", "jitter_remote_ps",
                     "dead_time_ns", "alice_fiber_m", "bob_fiber_m", "length_km"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        for name in ("bsm_window_ns", "threefold_window_ns", "fourfold_window_ns", "xcorr_span_us",
                     "xcorr_bin_ns", "sync_threshold"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive")
        if self.drift_search_ppm < 0:
            errors.append("drift_search_ppm must be >= 0")
        for name in ("lapalma_drift_ppm", "tenerife_drift_ppm"):
            if getattr(self, name) <= -1e6:
                errors.append(f"{name} must exceed -1e6")
        if self.lapalma_offset_ns < 0 or self.tenerife_offset_ns < 0:
            errors.append("clock offsets must be >= 0 (tags cannot precede the recorder origin)")
        if self.sideband_offset_ns <= self.fourfold_window_ns:
            errors.append("sideband_offset_ns must exceed the 4-fold window")
        if self.bootstrap_resamples < 0:
            errors.append("bootstrap_resamples must be >= 0")
        if errors:
            raise ConfigError(errors)
        return self

    # -- text format ---------------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        errors = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                errors.append(f"line {lineno}: expected key = value, got {raw!r}")
                continue
            key, _, value = (s.strip() for s in line.partition("="))
            if key not in types:
                errors.append(f"line {lineno}: unknown key {key!r}")
                continue
            if key in values:
                errors.append(f"line {lineno}: duplicate key {key!r}")
                continue
            try:
                values[key] = _parse_value(types[key], value)
            except ValueError:
                errors.append(f"line {lineno}: cannot parse {key} = {value!r} as {types[key]}")
        if errors:
            raise ConfigError(errors)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values).validate()

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), **overrides)


def _parse_value(type_name, value: str):
    if type_name in ("int", int):
        return int(value)
    if type_name in ("float", float):
        v = float(value)
        if not math.isfinite(v):
            raise ValueError(value)
        return v
    return value


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def default_config(mode: str = "remote", **changes) -> ExperimentConfig:
    """Paper scenarios: remote 130 kHz over 271 min, or local 15 kHz over 8000 s."""
    if mode == "local":
        base = ExperimentConfig(mode="local", analysis="chsh", duration_s=8000.0, block_seconds=20.0,
                                two_fold_rate_hz=15e3, intrinsic_visibility=0.805431)
    else:
        base = ExperimentConfig()
    return base.replace(**changes).validate()

