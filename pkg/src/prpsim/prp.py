"""Duplicate-and-discard redundancy over several channels."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .analysis import LatencySamples
from .mac import Frame
from .trace import ABSENT, ChannelTrace, RedundantTrace


class DuplicateAcceptError(RuntimeError):
    """A sequence number was accepted twice."""


def duplicate(packet: Frame, channels: Sequence[str]) -> list[Frame]:
    """One copy per channel, sharing ``seq`` and ``t_gen``."""
    if not channels:
        raise ValueError("need at least one channel")
    return [replace(packet, channel=c) for c in channels]


class Deduplicator:
    """First copy of each sequence number wins; later copies are discarded."""

    def __init__(self):
        self.accepted: dict[int, tuple[str, int]] = {}
        self.discarded = 0
        self._last_t = None

    def offer(self, seq: int, channel: str, t_arrival: int) -> bool:
        if self._last_t is not None and t_arrival < self._last_t:
            raise ValueError(f"arrival at {t_arrival} out of time order")
        self._last_t = t_arrival
        if seq in self.accepted:
            self.discarded += 1
            return False
        self._accept(seq, channel, t_arrival)
        return True

    def _accept(self, seq, channel, t) -> None:
        if seq in self.accepted:
            raise DuplicateAcceptError(f"seq {seq} accepted twice")
        self.accepted[seq] = (channel, t)


def dedup(arrivals: Iterable[tuple[int, str, int]]) -> list[tuple[int, str, int]]:
    """Accepted ``(seq, channel, t_arrival)`` in arrival order.

    Same rule as :class:`Deduplicator`, in one tight loop for long traces.
    """
    seen: set = set()
    out = []
    last = None
    for item in arrivals:
        seq, _, t = item
        if last is not None and t < last:
            raise ValueError(f"arrival at {t} out of time order")
        last = t
        if seq not in seen:
            seen.add(seq)
            out.append(item)
    return out


@dataclass
class RedundantLinkView:
    """Per-seq alignment of the copies of one stream over its channels."""

    channels: tuple
    seq: np.ndarray
    t_gen: np.ndarray
    t_eth: np.ndarray  # (n, channels), ABSENT where missing or lost
    link: np.ndarray  # (n, channels) d' where ACKed, ABSENT otherwise

    @classmethod
    def from_traces(cls, traces: Sequence[ChannelTrace]) -> RedundantLinkView:
        if not traces:
            raise ValueError("need at least one channel trace")
        seq = traces[0].seq
        for tr in traces[1:]:
            seq = np.union1d(seq, tr.seq)
        n, m = len(seq), len(traces)
        t_gen = np.full(n, ABSENT, dtype=np.int64)
        t_eth = np.full((n, m), ABSENT, dtype=np.int64)
        link = np.full((n, m), ABSENT, dtype=np.int64)
        for j, tr in enumerate(traces):
            idx = np.searchsorted(seq, tr.seq)
            known = t_gen[idx] != ABSENT
            if np.any(t_gen[idx][known] != tr.t_gen[known]):
                raise ValueError(f"copies on {tr.channel} disagree on generation time")
            t_gen[idx] = tr.t_gen
            t_eth[idx, j] = tr.t_eth
            acked = tr.t_ack != ABSENT
            link[idx[acked], j] = (tr.t_air_end - tr.t_gen)[acked]
        return cls(tuple(tr.channel for tr in traces), seq, t_gen, t_eth, link)

    def _first(self, times: np.ndarray):
        big = np.iinfo(np.int64).max
        masked = np.where(times == ABSENT, big, times)
        j = np.argmin(masked, axis=1) if times.shape[1] else np.zeros(len(times), dtype=np.int64)
        best = masked[np.arange(len(times)), j]
        lost = best == big
        return j, np.where(lost, ABSENT, best), lost

    def redundant_trace(self) -> RedundantTrace:
        j, t_acc, lost = self._first(self.t_eth)
        names = np.array(self.channels, dtype=object)[j]
        names[lost] = "-"
        return RedundantTrace(self.seq.copy(), names, self.t_gen.copy(), t_acc, lost)


def redundant_samples(view: RedundantLinkView, kind: str = "d") -> LatencySamples:
    """Per-seq minimum latency over delivered copies; lost iff every copy is.

    ``kind="d'"`` uses ACK-derived link latencies instead of delivery times.
    """
    if kind == "d":
        _, t_acc, lost = view._first(view.t_eth)
        return LatencySamples(view.seq, t_acc - view.t_gen, ~lost)
    if kind in ("d'", "d_prime"):
        _, best, lost = view._first(view.link)
        return LatencySamples(view.seq, best, ~lost)
    raise ValueError(f"unknown latency kind {kind!r}")
