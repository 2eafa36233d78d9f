"""Physical layer: free-space loss, detectors, fibre delays and recorder clocks.

Simulation times are carried as integer picoseconds; recorder output is in
integer ticks of 156 ps.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

C_VACUUM = 299_792_458.0  # m/s
FIBER_GROUP_INDEX = 1.5
TICK_PS = 156


class LinkError(ValueError):
    pass


class Channel(enum.IntEnum):
    A = 0
    B = 1
    C = 2
    D = 3
    E = 4
    F = 5
    G = 6
    H = 7


BSM_CHANNELS = (Channel.A, Channel.B, Channel.C, Channel.D)
ALICE_CHANNELS = (Channel.E, Channel.F)
BOB_CHANNELS = (Channel.G, Channel.H)
LAPALMA_CHANNELS = BSM_CHANNELS + ALICE_CHANNELS


@dataclass(frozen=True)
class ChannelParams:
    mean_loss_db: float = 32.0
    scint_sigma_db: float = 0.0
    length_km: float = 143.0
    block_seconds: float = 30.0

    def __post_init__(self):
        if self.mean_loss_db < 0:
            raise LinkError("mean_loss_db must be >= 0")
        if self.scint_sigma_db < 0:
            raise LinkError("scint_sigma_db must be >= 0")
        if self.length_km < 0 or self.block_seconds <= 0:
            raise LinkError("length_km must be >= 0 and block_seconds > 0")


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 1.0
    dark_rate: float = 0.0
    jitter_sigma_ps: float = 0.0
    dead_time_ns: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise LinkError("efficiency must lie in [0, 1]")
        if min(self.dark_rate, self.jitter_sigma_ps, self.dead_time_ns) < 0:
            raise LinkError("detector parameters must be non-negative")


@dataclass(frozen=True)
class ClockParams:
    offset_ns: float = 0.0
    drift_ppm: float = 0.0
    tick_ps: int = TICK_PS

    def __post_init__(self):
        if self.tick_ps != TICK_PS:
            raise LinkError(f"tick is fixed at {TICK_PS} ps")
        if self.drift_ppm <= -1e6:
            raise LinkError("drift_ppm must exceed -1e6")


@dataclass(frozen=True)
class DetectionEvent:
    channel: Channel
    tag: int
    truth: Optional[tuple] = None  # (pulse_index, photon id)

    def __post_init__(self):
        if self.tag < 0:
            raise LinkError("tag must be non-negative")


def transmission(loss_db):
    return 10.0 ** (-np.asarray(loss_db, dtype=float) / 10.0)


def transmit(block_loss_db: float, rng: np.random.Generator) -> bool:
    if block_loss_db < 0:
        raise LinkError("loss must be >= 0")
    return bool(rng.random() < transmission(block_loss_db))


def sample_block_loss(ch: ChannelParams, rng: np.random.Generator) -> float:
    """Loss for one block; Gaussian in dB around the mean, clipped at 0 dB."""
    if ch.scint_sigma_db == 0.0:
        return ch.mean_loss_db
    return max(0.0, float(rng.normal(ch.mean_loss_db, ch.scint_sigma_db)))


def apply_dead_time(times_ps: np.ndarray, dead_time_ps: float) -> np.ndarray:
    """Drop events within ``dead_time_ps`` of the previous kept event (sorted input)."""
    if dead_time_ps <= 0 or times_ps.size < 2:
        return times_ps
    keep = np.zeros(times_ps.size, dtype=bool)
    last = None
    for i, t in enumerate(times_ps):
        if last is None or t - last >= dead_time_ps:
            keep[i] = True
            last = t
    return times_ps[keep]


def detect(arrivals_ns, det: DetectorParams, rng: np.random.Generator) -> np.ndarray:
    """Detector response on one channel: efficiency, Gaussian jitter, dead time.

    Returns the kept event times in ns, sorted.
    """
    t = np.sort(np.asarray(arrivals_ns, dtype=float))
    kept = t[rng.random(t.size) < det.efficiency]
    if det.jitter_sigma_ps > 0:
        kept = np.sort(kept + rng.normal(0.0, det.jitter_sigma_ps * 1e-3, kept.size))
    return apply_dead_time(kept, det.dead_time_ns)


def dark_events(det: DetectorParams, duration_s: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous Poisson dark counts over [0, duration), times in ns."""
    if duration_s <= 0:
        raise LinkError("duration must be positive")
    n = rng.poisson(det.dark_rate * duration_s)
    return np.sort(rng.random(n) * duration_s * 1e9)


def dark_events_ps(rate_hz: float, start_ps: int, duration_ps: int, rng: np.random.Generator) -> np.ndarray:
    n = rng.poisson(rate_hz * duration_ps * 1e-12)
    return np.sort(start_ps + rng.integers(0, duration_ps, n))


def apply_clock(true_time_ns: float, clk: ClockParams) -> int:
    """Recorder tag (in ticks) for a true time in ns."""
    if true_time_ns < 0:
        raise LinkError("true_time must be >= 0")
    local = true_time_ns * (1.0 + clk.drift_ppm * 1e-6) + clk.offset_ns
    if local < 0:
        raise LinkError("clock offset maps the event before the recorder origin")
    return int(math.floor(local * 1000.0 / clk.tick_ps))


def apply_clock_ps(times_ps: np.ndarray, clk: ClockParams) -> np.ndarray:
    """Vectorized ``apply_clock`` on integer picosecond times, exact for int64 input."""
    t = np.asarray(times_ps, dtype=np.int64)
    frac = np.floor(t.astype(float) * (clk.drift_ppm * 1e-6) + clk.offset_ns * 1000.0).astype(np.int64)
    local = t + frac
    if local.size and local.min() < 0:
        raise LinkError("clock offset maps events before the recorder origin")
    return local // clk.tick_ps


def propagation_delay(ch: ChannelParams) -> float:
    """Free-space flight time in ns."""
    return ch.length_km * 1e3 / C_VACUUM * 1e9


def fiber_delay(length_m: float) -> float:
    if length_m < 0:
        raise LinkError("fiber length must be >= 0")
    return length_m * FIBER_GROUP_INDEX / C_VACUUM * 1e9
