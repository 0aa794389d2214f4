"""Packet generators: cyclic measurement streams, bursty interferers, ACI pairs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import MS, US, RngStream
from .mac import ConfigError

STREAM_KINDS = ("unicast-up", "multicast-down")


@dataclass(frozen=True)
class StreamConfig:
    name: str
    kind: str
    channels: tuple
    Tc: int
    payload: int = 50
    count: Optional[int] = None
    duration: Optional[int] = None
    start_phase: int = 0

    def __post_init__(self):
        where = f"streams.{self.name}"
        if self.kind not in STREAM_KINDS:
            raise ConfigError(f"{where}.kind", f"unknown stream kind {self.kind!r}")
        if self.Tc <= 0:
            raise ConfigError(f"{where}.Tc", "generation period must be positive")
        if self.payload < 0:
            raise ConfigError(f"{where}.payload", "payload must be non-negative")
        if self.count is not None and self.count < 0:
            raise ConfigError(f"{where}.count", "count must be non-negative")
        if self.start_phase < 0:
            raise ConfigError(f"{where}.start_phase", "start phase must be non-negative")
        if not self.channels:
            raise ConfigError(f"{where}.channels", "a stream needs at least one channel")


def stream_count(cfg: StreamConfig, horizon: Optional[int] = None) -> int:
    """Number of packets, honouring ``count``, ``duration`` and a run horizon."""
    limits = []
    if cfg.count is not None:
        limits.append(cfg.count)
    for span in (cfg.duration, horizon):
        if span is not None:
            limits.append(max(0, math.ceil((span - cfg.start_phase) / cfg.Tc)))
    if not limits:
        raise ConfigError(f"streams.{cfg.name}", "stream needs a count, a duration or a run duration")
    return min(limits)


def cyclic_times(cfg: StreamConfig, horizon: Optional[int] = None) -> np.ndarray:
    n = stream_count(cfg, horizon)
    return cfg.start_phase + cfg.Tc * np.arange(n, dtype=np.int64)


def cyclic_stream(cfg: StreamConfig, horizon: Optional[int] = None) -> list[tuple[int, int]]:
    """``(seq, t_gen)`` pairs with ``t_gen = start_phase + (seq - 1) * Tc``."""
    return [(i + 1, int(t)) for i, t in enumerate(cyclic_times(cfg, horizon))]


@dataclass(frozen=True)
class BurstLoadConfig:
    channel: object
    n_nodes: int = 1
    payload: int = 1500
    intra_gap: int = 400 * US
    mean_burst_len: float = 300
    mean_gap: int = 200 * MS
    queue_limit: int = 100

    def __post_init__(self):
        if self.n_nodes < 0:
            raise ConfigError("loads.n_nodes", "n_nodes must be non-negative")
        for name in ("payload", "intra_gap", "mean_burst_len", "mean_gap", "queue_limit"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"loads.{name}", f"{name} must be positive")

    @property
    def duty_cycle(self) -> float:
        busy = self.mean_burst_len * self.intra_gap
        return busy / (busy + self.mean_gap)

    @property
    def request_rate(self) -> float:
        """Long-run requests per ns for one node."""
        return self.mean_burst_len / (self.mean_burst_len * self.intra_gap + self.mean_gap)


def burst_lengths(rng: RngStream, mean: float, n: int) -> list[int]:
    # exponential lengths rounded to the nearest packet, at least one
    return [max(1, int(round(rng.exponential(mean)))) for _ in range(n)]


def burst_interferer(cfg: BurstLoadConfig, rng: RngStream, duration: int, t0: int = 0):
    """Request times of one node: an idle gap, then a burst, repeated.

    Yields integer ns times in ``[t0, duration)``.
    """
    t = t0 + int(rng.exponential(cfg.mean_gap))
    while t < duration:
        n = burst_lengths(rng, cfg.mean_burst_len, 1)[0]
        for i in range(n):
            ti = t + i * cfg.intra_gap
            if ti >= duration:
                return
            yield ti
        t += n * cfg.intra_gap + int(rng.exponential(cfg.mean_gap))


@dataclass(frozen=True)
class AciExperimentConfig:
    m_channel: object
    i_channel: object
    Tc: int = 100 * MS
    lead: int = -10 * US
    duplex_every: int = 2
    payload: int = 50
    i_payload: int = 1500
    count: Optional[int] = None
    duration: Optional[int] = None
    start_phase: int = 0

    def __post_init__(self):
        if self.duplex_every < 1:
            raise ConfigError("aci_experiment.duplex_every", "duplex_every must be >= 1")
        if self.Tc <= 0:
            raise ConfigError("aci_experiment.Tc", "generation period must be positive")
        if abs(self.lead) >= self.Tc:
            raise ConfigError("aci_experiment.lead", "lead must be shorter than Tc")


@dataclass(frozen=True)
class AciRequest:
    seq: int
    tag: str
    t_m: int
    t_i: Optional[int]


def aci_experiment_schedule(cfg: AciExperimentConfig, horizon: Optional[int] = None) -> list[AciRequest]:
    """Interleaved A / NA requests.

    Every ``duplex_every``-th packet is also sent on the interfering channel
    ``lead`` ns after the one under test (negative: before it).
    """
    as_stream = StreamConfig("aci", "unicast-up", ("m",), cfg.Tc, cfg.payload, cfg.count, cfg.duration, cfg.start_phase)
    out = []
    for seq, t in cyclic_stream(as_stream, horizon):
        if seq % cfg.duplex_every == 0:
            out.append(AciRequest(seq, "A", t, t + cfg.lead))
        else:
            out.append(AciRequest(seq, "NA", t, None))
    return out
