"""Interference models: DTIM buffering, network-manager scans, AP stalls, ACI.

Every model is a deterministic function of its configuration plus, where a
random phase is needed, a counter-based draw from a dedicated stream. The
network model queries them; nothing here holds simulation events.
"""

from __future__ import annotations

import bisect
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .core import MS, S, US, RngStream
from .mac import BAND_24, ChannelConfig, ConfigError, band_of, center_mhz

# --------------------------------------------------------------------------
# interval sets


class IntervalSchedule:
    """A set of half-open ``[start, end)`` intervals, explicit or periodic."""

    def __init__(self, offsets: Sequence[tuple[int, int]], period: Optional[int] = None, phase: int = 0,
                 horizon: Optional[int] = None):
        self.offsets = sorted((int(a), int(b)) for a, b in offsets)
        self.period = period
        self.phase = int(phase)
        self.horizon = horizon
        if period is not None and self.offsets and self.offsets[-1][1] > period:
            raise ValueError("periodic intervals must fit inside one period")
        self._starts = [a for a, _ in self.offsets]

    @classmethod
    def explicit(cls, intervals: Iterable[tuple[int, int]]) -> IntervalSchedule:
        return cls(list(intervals))

    def _cycles(self, a: int, b: int) -> range:
        if self.period is None:
            return range(0, 1)
        first = max(0, (a - self.phase) // self.period - 1)
        last = (b - self.phase) // self.period + 1
        if self.horizon is not None:
            last = min(last, (self.horizon - self.phase) // self.period)
        return range(first, max(first, last + 1))

    def _base(self, cycle: int) -> int:
        return 0 if self.period is None else self.phase + cycle * self.period

    def first_overlap(self, a: int, b: int) -> Optional[tuple[int, int]]:
        """Earliest interval meeting ``s < b and e > a``."""
        for cycle in self._cycles(a, b):
            base = self._base(cycle)
            if base >= b:
                break
            i = max(0, bisect.bisect_right(self._starts, a - base) - 1)
            for s, e in self.offsets[i:]:
                s += base
                e += base
                if s >= b:
                    break
                if e > a:
                    if self.horizon is not None and s >= self.horizon:
                        return None
                    return s, e
        return None

    def covering(self, t: int) -> Optional[tuple[int, int]]:
        hit = self.first_overlap(t, t + 1)
        if hit is not None and hit[0] <= t:
            return hit
        return None

    def between(self, a: int, b: int) -> list[tuple[int, int]]:
        out = []
        t = a
        while True:
            hit = self.first_overlap(t, b)
            if hit is None:
                return out
            out.append(hit)
            t = hit[1]


# --------------------------------------------------------------------------
# DTIM


@dataclass(frozen=True)
class DtimConfig:
    enabled: bool = False
    t_beac: int = 102_400 * US
    p: int = 1
    beacon_offset: Optional[int] = None

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError("impairments.dtim.p", "DTIM period must be >= 1")
        if self.t_beac <= 0:
            raise ConfigError("impairments.dtim.t_beac", "beacon interval must be positive")


def dtim_count(beacon_index: int, p: int) -> int:
    """DTIM count carried by beacon ``j``; the first beacon carries ``p - 1``."""
    return (p - 1 - beacon_index) % p


def dtim_release_time(t_arrival: int, config: DtimConfig, beacon_offset: Optional[int] = None) -> int:
    """First beacon at or after ``t_arrival`` whose DTIM count is zero."""
    offset = config.beacon_offset if beacon_offset is None else beacon_offset
    offset = offset or 0
    t_beac, p = config.t_beac, config.p
    j = max(0, -(-(t_arrival - offset) // t_beac))
    j += dtim_count(j, p)
    return offset + j * t_beac


def next_beacon(t: int, t_beac: int, offset: int) -> int:
    j = max(0, -(-(t - offset) // t_beac))
    return offset + j * t_beac


class DtimState:
    """AP-side DTIM gate for one BSS: count ``c`` plus the multicast buffer.

    The count is advanced lazily to the beacon that precedes the queried time.
    """

    def __init__(self, config: DtimConfig, beacon_offset: int = 0):
        self.config = config
        self.offset = beacon_offset
        self.beacon_index = -1
        self.c = config.p - 1
        self.buffer: deque = deque()

    def advance_to(self, t: int) -> None:
        """Apply every beacon with time ``<= t``."""
        if t < self.offset:
            return
        j = (t - self.offset) // self.config.t_beac
        if j > self.beacon_index:
            self.beacon_index = j
            self.c = dtim_count(j, self.config.p)

    def admit(self, item, t_arrival: int) -> int:
        self.buffer.append(item)
        return dtim_release_time(t_arrival, self.config, self.offset)

    def release(self, t_beacon: int) -> list:
        """Hand out buffered frames at a beacon with ``c == 0``."""
        self.advance_to(t_beacon)
        if self.c != 0:
            return []
        out = list(self.buffer)
        self.buffer.clear()
        return out


# --------------------------------------------------------------------------
# network-manager scans


@dataclass(frozen=True)
class NmConfig:
    enabled: bool = False
    scan_period: int = 120 * S
    n_probes: int = 13
    probe_dwell: int = 60 * MS
    probe_gap: int = 170 * MS
    simultaneous_on_all_adapters: bool = True
    multicast_mode: str = "dtim-buffer"
    probes_per_release: int = 2
    buffer_capacity: int = 64
    first_scan: int = 0
    return_on_beacon: bool = True

    def __post_init__(self):
        if self.probe_dwell <= 0 or self.probe_gap <= 0:
            raise ConfigError("impairments.nm.probe_dwell", "dwell and gap must be positive")
        if self.n_probes < 1 or self.probes_per_release < 1:
            raise ConfigError("impairments.nm.n_probes", "need at least one probe per scan and per release")
        if self.multicast_mode not in ("drop", "dtim-buffer"):
            raise ConfigError("impairments.nm.multicast_mode", f"unknown mode {self.multicast_mode!r}")
        if self.scan_span > self.scan_period:
            raise ConfigError("impairments.nm.scan_period", "a scan must fit inside the scan period")
        if self.buffer_capacity < 1:
            raise ConfigError("impairments.nm.buffer_capacity", "buffer capacity must be >= 1")

    @property
    def scan_span(self) -> int:
        return self.n_probes * self.probe_dwell + (self.n_probes - 1) * self.probe_gap


def _probe_offsets(cfg: NmConfig, grouped: bool) -> list[tuple[int, int]]:
    step = cfg.probe_dwell + cfg.probe_gap
    if not grouped:
        return [(i * step, i * step + cfg.probe_dwell) for i in range(cfg.n_probes)]
    # probes of one group run back to back in a single off-channel excursion
    out = []
    ppr = cfg.probes_per_release
    for g in range(math.ceil(cfg.n_probes / ppr)):
        n = min(ppr, cfg.n_probes - g * ppr)
        start = g * ppr * step
        out.append((start, start + n * cfg.probe_dwell))
    return out


def nm_schedule(cfg: NmConfig, adapter_index: int = 0, n_adapters: int = 1, grouped: bool = False,
                run_length: Optional[int] = None) -> IntervalSchedule:
    phase = cfg.first_scan
    if not cfg.simultaneous_on_all_adapters and n_adapters > 1:
        phase += adapter_index * cfg.scan_period // n_adapters
    return IntervalSchedule(_probe_offsets(cfg, grouped), cfg.scan_period, phase, horizon=run_length)


def align_to_beacons(sched: IntervalSchedule, run_length: int, t_beac: int, offset: int) -> IntervalSchedule:
    """Delay each excursion so that it ends on a beacon of the home channel.

    A station in power save returns in time to hear the beacon that
    announces its buffered frames.
    """
    out = []
    for s, e in sched.between(0, run_length):
        end = next_beacon(e, t_beac, offset)
        out.append((end - (e - s), end))
    return IntervalSchedule.explicit(out)


def nm_blackout_intervals(cfg: NmConfig, run_length: int, adapters: Sequence[str] = ("sta",),
                          grouped: Sequence[str] = ()) -> list[tuple[str, int, int]]:
    """Off-channel intervals per adapter over ``[0, run_length)``.

    Adapters named in ``grouped`` receive multicast under ``dtim-buffer``
    mode and probe ``probes_per_release`` channels per excursion.
    """
    if not cfg.enabled:
        return []
    out = []
    for j, name in enumerate(adapters):
        sched = nm_schedule(cfg, j, len(adapters), name in grouped and cfg.multicast_mode == "dtim-buffer")
        out.extend((name, s, e) for s, e in sched.between(0, run_length) if s < run_length)
    out.sort(key=lambda x: (x[1], x[0]))
    return out


def _as_schedule(blackouts) -> IntervalSchedule:
    if isinstance(blackouts, IntervalSchedule):
        return blackouts
    return IntervalSchedule.explicit(blackouts)


def nm_apply_unicast(blackouts, pending_tx_times: Sequence[int],
                     capacity: int = 64) -> list[Optional[int]]:
    """Earliest transmission time per request; ``None`` for buffer drops.

    Requests inside a blackout wait for its end and leave in FIFO order.
    When more than ``capacity`` wait, the oldest are discarded.
    """
    sched = _as_schedule(blackouts)
    out: list[Optional[int]] = []
    waiting: deque[int] = deque()
    current = None
    for i, t in enumerate(pending_tx_times):
        hit = sched.covering(t)
        if hit is None:
            out.append(t)
            continue
        if current != hit:
            waiting.clear()
            current = hit
        out.append(hit[1])
        waiting.append(i)
        if len(waiting) > capacity:
            out[waiting.popleft()] = None
    return out


def nm_apply_multicast(blackouts, arrivals: Sequence[int], mode: str,
                       t_beac: int = 102_400 * US, beacon_offset: int = 0,
                       dtim: Optional[DtimConfig] = None) -> list[Optional[int]]:
    """AP-side handling of multicast frames toward a scanning station.

    Returns per arrival the earliest time the AP may send it (``None`` when
    dropped). ``drop`` loses frames arriving off-channel; ``dtim-buffer``
    holds them until the first beacon after the blackout ends (the first
    DTIM beacon when ``dtim`` is enabled).
    """
    sched = _as_schedule(blackouts)
    out: list[Optional[int]] = []
    for t in arrivals:
        hit = sched.covering(t)
        if hit is None:
            out.append(t)
        elif mode == "drop":
            out.append(None)
        elif mode == "dtim-buffer":
            if dtim is not None and dtim.enabled:
                out.append(dtim_release_time(hit[1], dtim, beacon_offset))
            else:
                out.append(next_beacon(hit[1], t_beac, beacon_offset))
        else:
            raise ValueError(f"unknown multicast mode {mode!r}")
    return out


# --------------------------------------------------------------------------
# AP internal stalls


@dataclass(frozen=True)
class ApStallConfig:
    enabled: bool = False
    period: int = 10 * S
    max_stall: int = 20 * MS
    shared_across_channels: Optional[bool] = None
    phase_offset_per_ap: Optional[int] = None
    jitter: int = 0

    def __post_init__(self):
        if not 0 <= self.max_stall < self.period:
            raise ConfigError("impairments.ap_stall.max_stall", "max_stall must be in [0, period)")
        if not 0 <= self.jitter <= self.period - self.max_stall:
            raise ConfigError("impairments.ap_stall.jitter", "jitter must be in [0, period - max_stall]")


def ap_stall_delay(t: int, config: ApStallConfig, phase: int = 0, jitter_draw: Optional[RngStream] = None) -> int:
    """Extra forwarding delay for a frame reaching the AP at ``t``.

    Each cycle ``k`` holds one busy window starting at
    ``phase + k * period (+ jitter)``; arrivals inside wait for its end.
    """
    if not config.enabled:
        return 0
    k = (t - phase) // config.period
    start = phase + k * config.period
    if config.jitter and jitter_draw is not None:
        start += int(jitter_draw.at(k) * config.jitter)
    if start <= t < start + config.max_stall:
        return start + config.max_stall - t
    return 0


class StallSchedule:
    """Stall process of one AP, with its phase resolved."""

    def __init__(self, config: ApStallConfig, phase: int, jitter_draw: Optional[RngStream] = None):
        self.config = config
        self.phase = phase
        self.jitter_draw = jitter_draw
        self._cycle = None
        self._window = (0, 0)

    def window(self, cycle: int) -> tuple[int, int]:
        if cycle != self._cycle:
            cfg = self.config
            start = self.phase + cycle * cfg.period
            if cfg.jitter and self.jitter_draw is not None:
                start += int(self.jitter_draw.at(cycle) * cfg.jitter)
            self._cycle, self._window = cycle, (start, start + cfg.max_stall)
        return self._window

    def __call__(self, t: int) -> int:
        if not self.config.enabled:
            return 0
        start, end = self.window((t - self.phase) // self.config.period)
        return end - t if start <= t < end else 0


# --------------------------------------------------------------------------
# adjacent-channel interference

DEFAULT_COUPLING = {20: 1.0, 40: 0.9, 60: 0.5, 80: 0.3, "far": 0.1, "cross_band": 0.0}


def _normalise_coupling(table: dict) -> dict:
    out: dict = {}
    for key, value in table.items():
        if isinstance(key, str) and key.isdigit():
            key = int(key)
        if not 0.0 <= float(value) <= 1.0:
            raise ConfigError(f"impairments.aci.coupling.{key}", "coupling outside [0, 1]")
        out[key] = float(value)
    merged = dict(DEFAULT_COUPLING)
    merged.update(out)
    return merged


@dataclass(frozen=True)
class AciConfig:
    enabled: bool = False
    coupling: dict = field(default_factory=lambda: dict(DEFAULT_COUPLING))
    p_ack_corrupt: float = 1.0
    busy_sense_threshold: float = 0.2

    def __post_init__(self):
        table = _normalise_coupling(self.coupling)
        object.__setattr__(self, "coupling", table)
        ordered = [table[k] for k in sorted(k for k in table if isinstance(k, int))]
        ordered += [table["far"], table["cross_band"]]
        if any(b > a for a, b in zip(ordered, ordered[1:])):
            raise ConfigError("impairments.aci.coupling", "coupling must not increase with channel separation")
        if table["cross_band"] != 0.0:
            raise ConfigError("impairments.aci.coupling.cross_band", "cross-band coupling must be 0")
        if not 0.0 <= self.p_ack_corrupt <= 1.0:
            raise ConfigError("impairments.aci.p_ack_corrupt", "probability outside [0, 1]")


def coupling_between(ch_a: int, ch_b: int, config: AciConfig) -> float:
    """Coupling between two co-located radios, by frequency separation class."""
    if band_of(ch_a) != band_of(ch_b):
        return config.coupling["cross_band"]
    offset = abs(center_mhz(ch_a) - center_mhz(ch_b))
    classes = sorted(k for k in config.coupling if isinstance(k, int))
    width = classes[0] if classes else 20
    cls = max(width, math.ceil(offset / width) * width)
    if band_of(ch_a) == BAND_24:
        # 2.4 GHz channels are 5 MHz apart but 20 MHz wide
        cls = max(width, math.ceil(offset / 20) * width)
    return config.coupling.get(cls, config.coupling["far"])


@dataclass
class AciOutcome:
    m_start: list[int]
    i_start: list[int]
    m_ack_lost: list[bool]
    i_ack_lost: list[bool]


def aci_couple(m_access: Sequence[int], i_access: Sequence[int], m_channel: ChannelConfig,
               i_channel: ChannelConfig, config: AciConfig, backoff: RngStream, corrupt: RngStream,
               m_payload: int = 50, i_payload: int = 1500) -> AciOutcome:
    """Resolve frame delaying and ACK collisions between two co-located radios.

    ``*_access`` are the instants each radio would seize its medium without
    the neighbour. A radio whose neighbour's data frame is already on air
    (and coupled above the sensing threshold) defers to the end of that
    frame plus DIFS and a fresh backoff. A data frame overlapping the
    neighbour's ACK window destroys that ACK with probability
    ``p_ack_corrupt * coupling``.
    """
    c = coupling_between(m_channel.channel_number, i_channel.channel_number, config) if config.enabled else 0.0
    senses = c > 0.0 and c >= config.busy_sense_threshold
    chans = (m_channel, i_channel)
    air = (m_channel.airtime(m_payload), i_channel.airtime(i_payload))
    heap = [(t, side, idx) for side, seq in enumerate((m_access, i_access)) for idx, t in enumerate(seq)]
    heapq.heapify(heap)
    starts: tuple[list, list] = ([0] * len(m_access), [0] * len(i_access))
    on_air: list[Optional[tuple[int, int]]] = [None, None]
    while heap:
        t, side, idx = heapq.heappop(heap)
        other = on_air[1 - side]
        if senses and other is not None and other[0] < t < other[1]:
            cfg = chans[side]
            k = backoff.randint(cfg.cw_min + 1)
            heapq.heappush(heap, (other[1] + cfg.difs + k * cfg.slot, side, idx))
            continue
        starts[side][idx] = t
        on_air[side] = (t, t + air[side])

    def ack_lost(side: int) -> list[bool]:
        cfg = chans[side]
        others = sorted((s, s + air[1 - side]) for s in starts[1 - side])
        out = []
        for s in starts[side]:
            a = s + air[side] + cfg.sifs
            b = a + cfg.ack_airtime
            hit = any(os < b and oe > a for os, oe in others)
            out.append(bool(hit and c > 0.0 and corrupt.random() < config.p_ack_corrupt * c))
        return out

    return AciOutcome(starts[0], starts[1], ack_lost(0), ack_lost(1))
