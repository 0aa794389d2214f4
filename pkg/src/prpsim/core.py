"""Deterministic discrete-event engine.

Time is an integer count of nanoseconds. Events with equal firing time are
ordered by ``(priority, id)``, so a run is a pure function of its inputs.
Randomness comes from label-keyed streams derived from one master seed:
adding a stream never perturbs the draws of another.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from typing import Any, Callable, NamedTuple

import numpy as np

NS = 1
US = 1_000
MS = 1_000_000
S = 1_000_000_000

_BLOCK = 4096


class SchedulingError(RuntimeError):
    """An event was scheduled before the current clock."""


class Event(NamedTuple):
    fire_at: int
    priority: int
    id: int
    action: Callable[..., Any]
    args: tuple


class Simulator:
    """Single-threaded event loop with a global integer clock."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.now = 0
        self._queue: list[tuple] = []
        self._last_id = 0
        self._streams: dict[str, RngStream] = {}

    def schedule(self, fire_at: int, action: Callable[..., Any], *args, priority: int = 0) -> int:
        if fire_at < self.now:
            raise SchedulingError(f"event at t={fire_at} scheduled at clock {self.now}")
        self._last_id += 1
        heapq.heappush(self._queue, (fire_at, priority, self._last_id, action, args))
        return self._last_id

    def schedule_event(self, event: Event) -> int:
        """Schedule a prebuilt :class:`Event`; its ``id`` field is ignored."""
        return self.schedule(event.fire_at, event.action, *event.args, priority=event.priority)

    def run_until(self, t_end: int) -> int:
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) behind clock {self.now}")
        queue = self._queue
        pop = heapq.heappop
        fired = 0
        while queue and queue[0][0] <= t_end:
            fire_at, _, _, action, args = pop(queue)
            self.now = fire_at
            action(*args)
            fired += 1
        return fired

    def run(self) -> int:
        """Fire events until the queue drains."""
        queue = self._queue
        pop = heapq.heappop
        fired = 0
        while queue:
            fire_at, _, _, action, args = pop(queue)
            self.now = fire_at
            action(*args)
            fired += 1
        return fired

    def pending(self) -> list[Event]:
        return [Event(*entry) for entry in sorted(self._queue)]

    def __len__(self) -> int:
        return len(self._queue)

    def rng(self, label: str) -> RngStream:
        stream = self._streams.get(label)
        if stream is None:
            stream = self._streams[label] = RngStream(self.seed, label)
        return stream


def _label_key(label: str) -> tuple[int, ...]:
    digest = hashlib.sha256(label.encode()).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


class RngStream:
    """Reproducible uniform source keyed by ``(master_seed, label)``.

    Uniforms are drawn from PCG64 in blocks; every other distribution is an
    inverse transform of one uniform, so the sequence of calls fully
    determines the sequence of values.
    """

    __slots__ = ("master_seed", "label", "_gen", "_buf", "_pos")

    def __init__(self, master_seed: int, label: str):
        self.master_seed = int(master_seed) & (2**64 - 1)
        self.label = label
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=_label_key(label))
        self._gen = np.random.Generator(np.random.PCG64(seq))
        self._buf: list[float] = []
        self._pos = 0

    def random(self) -> float:
        pos = self._pos
        if pos >= len(self._buf):
            self._buf = self._gen.random(_BLOCK).tolist()
            pos = 0
        self._pos = pos + 1
        return self._buf[pos]

    def uniform(self, lo: float, hi: float) -> float:
        if hi < lo:
            raise ValueError(f"uniform bounds reversed: lo={lo} > hi={hi}")
        if hi == lo:
            return lo
        return lo + (hi - lo) * self.random()

    def randint(self, n: int) -> int:
        """Integer uniform on ``[0, n)``."""
        if n <= 0:
            raise ValueError("randint needs n >= 1")
        return int(self.random() * n)

    def exponential(self, mean: float) -> float:
        if mean <= 0:
            raise ValueError(f"exponential mean must be positive, got {mean}")
        return -mean * math.log1p(-self.random())

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def at(self, index: int) -> float:
        """Counter-based uniform: depends only on (seed, label, index)."""
        h = hashlib.blake2b(f"{self.master_seed}:{self.label}:{index}".encode(), digest_size=8)
        return (int.from_bytes(h.digest(), "little") >> 11) / float(1 << 53)


def rng_uniform(stream: RngStream, lo: float, hi: float) -> float:
    return stream.uniform(lo, hi)


def rng_exponential(stream: RngStream, mean: float) -> float:
    return stream.exponential(mean)


_UNITS = {"ns": NS, "us": US, "µs": US, "ms": MS, "s": S, "min": 60 * S, "h": 3600 * S}


def parse_duration(value: Any) -> int:
    """Parse ``"102.4ms"``, ``"6h"``, ``150000`` (ns) into integer nanoseconds."""
    if isinstance(value, bool):
        raise ValueError(f"not a duration: {value!r}")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, float):
        return int(round(value))
    if isinstance(value, str):
        text = value.strip()
        for unit in sorted(_UNITS, key=len, reverse=True):
            if text.endswith(unit):
                number = text[: -len(unit)].strip()
                try:
                    return int(round(float(number) * _UNITS[unit]))
                except ValueError:
                    break
        try:
            return int(text)
        except ValueError:
            pass
    raise ValueError(f"not a duration: {value!r}")
