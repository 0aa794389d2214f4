"""Columnar packet traces and their CSV form.

ABSENT timestamps are stored as ``-1``; flags as 0/1.
"""

from __future__ import annotations

import csv
from operator import attrgetter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

ABSENT = -1
CHANNEL_HEADER = ("seq", "channel", "set_tag", "t_gen_ns", "t_air_start_ns", "t_air_end_ns", "t_ack_ns",
                  "t_eth_ns", "retries", "data_lost", "ack_lost")
REDUNDANT_HEADER = ("seq", "accepted_channel", "t_gen_ns", "t_accept_ns", "lost")
SET_TAGS = ("A", "NA", "-")


class TraceError(ValueError):
    """Malformed trace file; ``row`` is the 1-based line number."""

    def __init__(self, path, row: int, message: str):
        super().__init__(f"{path}:{row}: {message}")
        self.row = row


@dataclass
class ChannelTrace:
    channel: str
    seq: np.ndarray
    set_tag: np.ndarray
    t_gen: np.ndarray
    t_air_start: np.ndarray
    t_air_end: np.ndarray
    t_ack: np.ndarray
    t_eth: np.ndarray
    retries: np.ndarray
    data_lost: np.ndarray
    ack_lost: np.ndarray

    def __len__(self) -> int:
        return len(self.seq)

    @classmethod
    def from_records(cls, channel: str, records: Sequence) -> ChannelTrace:
        n = len(records)

        def col(name, optional=False):
            if optional:
                vals = [ABSENT if v is None else v for v in map(attrgetter(name), records)]
            else:
                vals = list(map(attrgetter(name), records))
            return np.array(vals, dtype=np.int64) if n else np.array([], dtype=np.int64)

        return cls(
            channel,
            col("seq"),
            np.array([r.set_tag for r in records], dtype=object) if n else np.array([], dtype=object),
            col("t_gen"),
            col("t_air_start", True),
            col("t_air_end", True),
            col("t_ack", True),
            col("t_eth", True),
            col("retries"),
            col("data_lost").astype(bool),
            col("ack_lost").astype(bool),
        )

    @property
    def acknowledged(self) -> bool:
        """True when the trace carries confirmed (unicast) traffic."""
        return bool(np.any(self.t_ack != ABSENT) or np.any(self.ack_lost))

    def select(self, mask: np.ndarray) -> ChannelTrace:
        return ChannelTrace(self.channel, *(getattr(self, c)[mask] for c in _COLUMNS[1:]))

    def with_tag(self, tag: str) -> ChannelTrace:
        return self.select(self.set_tag == tag)

    def to_csv(self, path) -> None:
        cols = [
            self.seq.astype(str),
            np.full(len(self), self.channel, dtype=object),
            self.set_tag.astype(str) if len(self) else np.array([], dtype=str),
            self.t_gen.astype(str), self.t_air_start.astype(str), self.t_air_end.astype(str),
            self.t_ack.astype(str), self.t_eth.astype(str), self.retries.astype(str),
            self.data_lost.astype(np.int8).astype(str), self.ack_lost.astype(np.int8).astype(str),
        ]
        _write(path, CHANNEL_HEADER, cols)

    @classmethod
    def read_csv(cls, path) -> ChannelTrace:
        rows = _read(path, CHANNEL_HEADER)
        channel = None
        ints = {k: [] for k in ("seq", "t_gen", "t_air_start", "t_air_end", "t_ack", "t_eth", "retries")}
        flags = {"data_lost": [], "ack_lost": []}
        tags = []
        for lineno, row in rows:
            try:
                vals = [int(row[i]) for i in (0, 3, 4, 5, 6, 7, 8)]
                dl, al = int(row[9]), int(row[10])
            except ValueError:
                raise TraceError(path, lineno, "non-integer field") from None
            if channel is None:
                channel = row[1]
            elif row[1] != channel:
                raise TraceError(path, lineno, f"mixed channels {channel!r} and {row[1]!r}")
            if row[2] not in SET_TAGS:
                raise TraceError(path, lineno, f"set_tag {row[2]!r} not in {SET_TAGS}")
            if dl not in (0, 1) or al not in (0, 1):
                raise TraceError(path, lineno, "flags must be 0 or 1")
            seq, t_gen, t_as, t_ae, t_ack, t_eth, retries = vals
            _check_record(path, lineno, t_gen, t_as, t_ae, t_ack, t_eth, dl, al)
            for k, v in zip(ints, vals):
                ints[k].append(v)
            flags["data_lost"].append(dl)
            flags["ack_lost"].append(al)
            tags.append(row[2])
        if channel is None:
            raise TraceError(path, 1, "trace has no rows")
        arr = {k: np.array(v, dtype=np.int64) for k, v in ints.items()}
        if np.any(np.diff(arr["seq"]) <= 0):
            bad = int(np.argmax(np.diff(arr["seq"]) <= 0)) + 3
            raise TraceError(path, bad, "seq must be strictly increasing")
        return cls(channel, arr["seq"], np.array(tags, dtype=object), arr["t_gen"], arr["t_air_start"],
                   arr["t_air_end"], arr["t_ack"], arr["t_eth"], arr["retries"],
                   np.array(flags["data_lost"], dtype=bool), np.array(flags["ack_lost"], dtype=bool))


_COLUMNS = ("channel", "seq", "set_tag", "t_gen", "t_air_start", "t_air_end", "t_ack", "t_eth", "retries",
            "data_lost", "ack_lost")


def _check_record(path, lineno, t_gen, t_as, t_ae, t_ack, t_eth, dl, al) -> None:
    if t_gen < 0:
        raise TraceError(path, lineno, "t_gen must be non-negative")
    if (t_as == ABSENT) != (t_ae == ABSENT):
        raise TraceError(path, lineno, "air start and end must be both present or both absent")
    if t_as != ABSENT and not t_gen <= t_as < t_ae:
        raise TraceError(path, lineno, "expected t_gen <= t_air_start < t_air_end")
    if t_ack != ABSENT and (t_ae == ABSENT or t_ack <= t_ae):
        raise TraceError(path, lineno, "t_ack must follow t_air_end")
    if al and t_ack != ABSENT:
        raise TraceError(path, lineno, "ack_lost with an ACK timestamp")
    if dl and t_eth != ABSENT:
        raise TraceError(path, lineno, "data_lost with a delivery timestamp")


@dataclass
class RedundantTrace:
    seq: np.ndarray
    accepted_channel: np.ndarray
    t_gen: np.ndarray
    t_accept: np.ndarray
    lost: np.ndarray

    def __len__(self) -> int:
        return len(self.seq)

    def to_csv(self, path) -> None:
        cols = [self.seq.astype(str), self.accepted_channel.astype(str), self.t_gen.astype(str),
                self.t_accept.astype(str), self.lost.astype(np.int8).astype(str)]
        _write(path, REDUNDANT_HEADER, cols)

    @classmethod
    def read_csv(cls, path) -> RedundantTrace:
        seq, chan, t_gen, t_acc, lost = [], [], [], [], []
        for lineno, row in _read(path, REDUNDANT_HEADER):
            try:
                s, g, a, lo = int(row[0]), int(row[2]), int(row[3]), int(row[4])
            except ValueError:
                raise TraceError(path, lineno, "non-integer field") from None
            if lo not in (0, 1):
                raise TraceError(path, lineno, "lost must be 0 or 1")
            if lo != (a == ABSENT):
                raise TraceError(path, lineno, "lost rows have t_accept -1, delivered rows a time")
            if a != ABSENT and a < g:
                raise TraceError(path, lineno, "t_accept before t_gen")
            seq.append(s)
            chan.append(row[1])
            t_gen.append(g)
            t_acc.append(a)
            lost.append(lo)
        if not seq:
            raise TraceError(path, 1, "trace has no rows")
        return cls(np.array(seq, dtype=np.int64), np.array(chan, dtype=object), np.array(t_gen, dtype=np.int64),
                   np.array(t_acc, dtype=np.int64), np.array(lost, dtype=bool))


def _write(path, header, cols) -> None:
    lines = [",".join(header)]
    if len(cols[0]):
        lines.extend(map(",".join, zip(*(c.tolist() for c in cols))))
    Path(path).write_text("\n".join(lines) + "\n")


def _read(path, header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise TraceError(path, 1, "empty file")
        if tuple(first) != header:
            raise TraceError(path, 1, f"unexpected header {','.join(first)!r}")
        for i, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise TraceError(path, i, f"expected {len(header)} fields, got {len(row)}")
            yield i, row


def trace_kind(path) -> str:
    """``channel`` or ``redundant``, judged from the header line."""
    with open(path) as fh:
        first = fh.readline().strip()
    if first == ",".join(CHANNEL_HEADER):
        return "channel"
    if first == ",".join(REDUNDANT_HEADER):
        return "redundant"
    raise TraceError(path, 1, "not a channel or redundant-link trace")
