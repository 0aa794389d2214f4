"""Latency statistics, distribution curves and channel-independence checks.

Latencies are integer nanoseconds internally; summaries report milliseconds
and loss ratios in percent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats

from .core import MS, US
from .trace import ABSENT, ChannelTrace, RedundantTrace

PERCENTILES = (50, 99, 99.9, 99.99)


class LatencySample(NamedTuple):
    seq: int
    latency: int
    delivered: bool


class LatencySamples:
    """Column view over a set of samples; ``latency`` is -1 where lost."""

    def __init__(self, seq, latency, delivered):
        self.seq = np.asarray(seq, dtype=np.int64)
        self.delivered = np.asarray(delivered, dtype=bool)
        lat = np.asarray(latency, dtype=np.int64).copy()
        lat[~self.delivered] = ABSENT
        self.latency = lat
        if not (len(self.seq) == len(self.delivered) == len(self.latency)):
            raise ValueError("sample columns differ in length")

    @classmethod
    def from_list(cls, samples: Sequence[LatencySample]) -> LatencySamples:
        if not samples:
            return cls([], [], [])
        seq, lat, ok = zip(*samples)
        return cls(seq, lat, ok)

    def __len__(self) -> int:
        return len(self.seq)

    def __iter__(self):
        for s, d, ok in zip(self.seq.tolist(), self.latency.tolist(), self.delivered.tolist()):
            yield LatencySample(s, d, ok)

    @property
    def values(self) -> np.ndarray:
        """Latencies of delivered samples."""
        return self.latency[self.delivered]

    @property
    def n_lost(self) -> int:
        return int(len(self) - self.delivered.sum())

    def select(self, mask) -> LatencySamples:
        return LatencySamples(self.seq[mask], self.latency[mask], self.delivered[mask])


def end_to_end_samples(trace: ChannelTrace) -> LatencySamples:
    """d = t_eth - t_gen."""
    ok = trace.t_eth != ABSENT
    return LatencySamples(trace.seq, trace.t_eth - trace.t_gen, ok)


def link_samples(trace: ChannelTrace) -> LatencySamples:
    """d' from ACK-confirmed transmissions; frames without ACK count as lost."""
    ok = trace.t_ack != ABSENT
    return LatencySamples(trace.seq, trace.t_air_end - trace.t_gen, ok)


def redundant_trace_samples(trace: RedundantTrace) -> LatencySamples:
    return LatencySamples(trace.seq, trace.t_accept - trace.t_gen, ~trace.lost)


def nearest_rank(sorted_values: np.ndarray, q: float):
    """Nearest-rank percentile: the ``ceil(q/100 * n)``-th smallest value."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("no values")
    rank = max(1, math.ceil(round(q / 100.0 * n, 9)))
    return sorted_values[min(rank, n) - 1]


@dataclass(frozen=True)
class StatsSummary:
    n: int
    delivered: int
    plr: float
    mean: Optional[float] = None
    std: Optional[float] = None
    min: Optional[float] = None
    p50: Optional[float] = None
    p99: Optional[float] = None
    p99_9: Optional[float] = None
    p99_99: Optional[float] = None
    max: Optional[float] = None
    plr_prime: Optional[float] = None

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def summarize(samples: LatencySamples, link: Optional[LatencySamples] = None) -> StatsSummary:
    """Table statistics of ``samples``; ``link`` adds PLR' from ACK-based samples."""
    n = len(samples)
    if n == 0:
        raise ValueError("cannot summarize an empty sample set")
    plr = 100.0 * samples.n_lost / n
    plr_prime = None if link is None or len(link) == 0 else 100.0 * link.n_lost / len(link)
    vals = np.sort(samples.values)
    if len(vals) == 0:
        return StatsSummary(n, 0, plr, plr_prime=plr_prime)
    ms = vals / MS
    pct = [float(nearest_rank(ms, q)) for q in PERCENTILES]
    # rounding in the mean can otherwise step just outside [min, max]
    mean = min(max(float(ms.mean()), float(ms[0])), float(ms[-1]))
    return StatsSummary(n, len(vals), plr, mean, float(ms.std()), float(ms[0]), *pct, float(ms[-1]),
                        plr_prime)


def summarize_trace(trace: ChannelTrace) -> StatsSummary:
    d = end_to_end_samples(trace)
    return summarize(d, link_samples(trace) if trace.acknowledged else None)


def summarize_by_set(trace: ChannelTrace) -> dict:
    """One summary per set tag present (``A`` / ``NA``), in that order."""
    out = {}
    for tag in ("A", "NA", "-"):
        sub = trace.with_tag(tag)
        if len(sub):
            out[tag] = summarize(end_to_end_samples(sub), link_samples(sub) if trace.acknowledged else None)
    return out


# --------------------------------------------------------------------------
# curves


@dataclass
class DistCurve:
    grid: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        self.grid = np.asarray(self.grid)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.shape != self.values.shape:
            raise ValueError("grid and values differ in shape")
        if self.kind not in ("ccdf", "pdf"):
            raise ValueError(f"unknown curve kind {self.kind!r}")

    def to_csv(self, path, unit: float = MS) -> None:
        head = "latency_ms," + self.kind
        rows = [f"{g / unit!r},{v!r}" for g, v in zip(self.grid.tolist(), self.values.tolist())]
        with open(path, "w") as fh:
            fh.write("\n".join([head] + rows) + "\n")


def _values(samples) -> np.ndarray:
    if isinstance(samples, LatencySamples):
        return samples.values
    return np.asarray(samples)


def ccdf(samples, grid=None) -> DistCurve:
    """Fraction of delivered samples strictly above each grid point."""
    vals = np.sort(_values(samples))
    if len(vals) == 0:
        raise ValueError("ccdf needs at least one delivered sample")
    if grid is None:
        grid = np.unique(vals)
    grid = np.asarray(grid)
    above = len(vals) - np.searchsorted(vals, grid, side="right")
    return DistCurve(grid, above / len(vals), "ccdf")


def pdf(samples, bin_width: int = 1 * US) -> DistCurve:
    """Histogram density; ``grid`` holds the left bin edges."""
    vals = _values(samples)
    if len(vals) == 0:
        raise ValueError("pdf needs at least one delivered sample")
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    lo = int(vals.min()) // bin_width
    idx = vals // bin_width - lo
    counts = np.bincount(idx.astype(np.int64))
    grid = (np.arange(len(counts)) + lo) * bin_width
    return DistCurve(grid, counts / (len(vals) * bin_width), "pdf")


def pdf_peaks(curve: DistCurve, min_height: float = 0.0) -> np.ndarray:
    """Grid points of strict local maxima (plateaus count once, at their left end)."""
    v = curve.values
    if len(v) == 0:
        return np.array([])
    padded = np.concatenate(([-np.inf], v, [-np.inf]))
    out = []
    i = 1
    while i <= len(v):
        j = i
        while j + 1 <= len(v) and padded[j + 1] == padded[i]:
            j += 1
        if padded[i] > padded[i - 1] and padded[i] > padded[j + 1] and padded[i] > min_height:
            out.append(curve.grid[i - 1])
        i = j + 1
    return np.array(out)


def compose_ccdf(ccdf1, plr1: float, ccdf2, plr2: float):
    """Redundant-link CCDF predicted from two independent channels.

    PLRs are fractions. Accepts :class:`DistCurve` (on a common grid) or
    plain arrays of CCDF values.
    """
    if plr1 * plr2 >= 1.0:
        raise ValueError("both channels lose every packet; the estimate is undefined")
    if not (0.0 <= plr1 <= 1.0 and 0.0 <= plr2 <= 1.0):
        raise ValueError("loss ratios must lie in [0, 1]")
    grid = None
    if isinstance(ccdf1, DistCurve) or isinstance(ccdf2, DistCurve):
        if not (isinstance(ccdf1, DistCurve) and isinstance(ccdf2, DistCurve)):
            raise ValueError("mixing curves and arrays")
        if ccdf1.grid.shape != ccdf2.grid.shape or np.any(ccdf1.grid != ccdf2.grid):
            raise ValueError("curves must share one grid")
        grid = ccdf1.grid
        ccdf1, ccdf2 = ccdf1.values, ccdf2.values
    c1 = np.asarray(ccdf1, dtype=float)
    c2 = np.asarray(ccdf2, dtype=float)
    only2 = plr1 * (1.0 - plr2) * c2
    only1 = plr2 * (1.0 - plr1) * c1
    both = (1.0 - plr1) * (1.0 - plr2) * c1 * c2
    est = (only2 + only1 + both) / (1.0 - plr1 * plr2)
    if grid is not None:
        return DistCurve(grid, est, "ccdf")
    return est


def compose_plr(plr1: float, plr2: float) -> float:
    """Redundant loss ratio of two independent channels."""
    for p in (plr1, plr2):
        if not 0.0 <= p <= 1.0:
            raise ValueError("loss ratios must lie in [0, 1]")
    return plr1 * plr2


# --------------------------------------------------------------------------
# independence


@dataclass(frozen=True)
class IndependenceReport:
    ks_distance: float
    plr_measured: float
    plr_estimated: float
    verdict: str
    ks_threshold: float = 0.01
    plr_threshold: float = 0.10
    n: Optional[int] = None

    @property
    def plr_gap(self) -> float:
        """Relative gap between measured and estimated PLR."""
        if self.plr_measured == 0.0 and self.plr_estimated == 0.0:
            return 0.0
        return abs(self.plr_measured - self.plr_estimated) / max(self.plr_measured, self.plr_estimated)

    @property
    def plr_agrees(self) -> bool:
        if self.plr_gap < self.plr_threshold:
            return True
        if not self.n:
            return False
        # too few packets to resolve the relative gap: allow 3 binomial standard errors
        p = self.plr_estimated / 100.0
        return abs(self.plr_measured - self.plr_estimated) / 100.0 <= 3.0 * math.sqrt(p * (1.0 - p) / self.n)


def independence_report(measured: DistCurve, estimated: DistCurve, plr_measured: float = 0.0,
                        plr_estimated: float = 0.0, ks_threshold: float = 0.01,
                        plr_threshold: float = 0.10, n: Optional[int] = None) -> IndependenceReport:
    """Compare the measured redundant CCDF with its independence estimate (PLRs in percent).

    ``n`` is the number of redundant packets; when given, a PLR gap within
    sampling noise of the estimate still counts as agreement.
    """
    if measured.grid.shape != estimated.grid.shape or np.any(measured.grid != estimated.grid):
        raise ValueError("curves must share one grid")
    ks = float(np.max(np.abs(measured.values - estimated.values))) if len(measured.grid) else 0.0
    probe = IndependenceReport(ks, plr_measured, plr_estimated, "", ks_threshold, plr_threshold, n)
    ok = ks < ks_threshold and probe.plr_agrees
    return IndependenceReport(ks, plr_measured, plr_estimated, "independent" if ok else "dependent",
                              ks_threshold, plr_threshold, n)


def assess_independence(ch1: LatencySamples, ch2: LatencySamples, redundant: LatencySamples,
                        ks_threshold: float = 0.01, plr_threshold: float = 0.10) -> IndependenceReport:
    """Full check from per-channel and redundant samples.

    The curves are compared on the union of all observed latencies, where
    the sup-distance between step functions is attained.
    """
    grid = np.unique(np.concatenate([ch1.values, ch2.values, redundant.values]))
    p1 = ch1.n_lost / len(ch1)
    p2 = ch2.n_lost / len(ch2)
    est = compose_ccdf(ccdf(ch1, grid), p1, ccdf(ch2, grid), p2)
    meas = ccdf(redundant, grid)
    return independence_report(meas, est, 100.0 * redundant.n_lost / len(redundant),
                               100.0 * compose_plr(p1, p2), ks_threshold, plr_threshold, len(redundant))


def ks_two_sample(a: LatencySamples, b: LatencySamples) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and p-value on delivered latencies."""
    res = stats.ks_2samp(_values(a), _values(b))
    return float(res.statistic), float(res.pvalue)


@dataclass
class JointScatter:
    points: np.ndarray  # columns (d_ch2, d_ch1), ns
    seq: np.ndarray
    excess: float
    tau: int


def scatter_joint(samples_ch1: LatencySamples, samples_ch2: LatencySamples, tau: int = 5 * MS) -> JointScatter:
    """Pair both copies of each packet and measure joint-tail excess at ``tau``.

    The excess is ``P(both > tau) / (P(ch1 > tau) P(ch2 > tau))`` over the
    pairs where both copies arrived; 1.0 when a marginal is never exceeded.
    """
    seq, i1, i2 = np.intersect1d(samples_ch1.seq, samples_ch2.seq, assume_unique=True, return_indices=True)
    ok = samples_ch1.delivered[i1] & samples_ch2.delivered[i2]
    d1 = samples_ch1.latency[i1][ok]
    d2 = samples_ch2.latency[i2][ok]
    n = len(d1)
    excess = 1.0
    if n:
        a, b = d1 > tau, d2 > tau
        denom = a.mean() * b.mean()
        if denom > 0:
            excess = float((a & b).mean() / denom)
    return JointScatter(np.column_stack([d2, d1]) if n else np.empty((0, 2), dtype=np.int64), seq[ok], excess, tau)


# --------------------------------------------------------------------------
# tables

_COLS = (("mean", "mean"), ("std", "std"), ("min", "min"), ("p50", "p50"), ("p99", "p99"), ("p99_9", "p99.9"),
         ("p99_99", "p99.99"), ("max", "max"))


def _fmt(v, digits=3) -> str:
    return "-" if v is None else f"{v:.{digits}f}"


def format_table(rows: dict, show_prime: Optional[bool] = None) -> str:
    """Aligned table: latencies in ms, loss ratios in percent."""
    if show_prime is None:
        show_prime = any(s.plr_prime is not None for s in rows.values())
    head = ["", "n"] + [label for _, label in _COLS] + ["PLR%"] + (["PLR'%"] if show_prime else [])
    body = []
    for name, s in rows.items():
        line = [name, str(s.n)] + [_fmt(getattr(s, k)) for k, _ in _COLS] + [_fmt(s.plr, 4)]
        if show_prime:
            line.append(_fmt(s.plr_prime, 4))
        body.append(line)
    widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
    out = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in [head] + body]
    return "\n".join(out) + "\n"


def delta_table(a: StatsSummary, b: StatsSummary, name_a: str = "a", name_b: str = "b") -> str:
    """Side-by-side comparison; changed fields are marked with ``*``."""
    keys = [k for k, _ in _COLS] + ["plr", "plr_prime"]
    labels = [lab for _, lab in _COLS] + ["PLR%", "PLR'%"]
    head = ["metric", name_a, name_b, "delta"]
    body = []
    for k, lab in zip(keys, labels):
        va, vb = getattr(a, k), getattr(b, k)
        if va is None and vb is None:
            continue
        delta = None if va is None or vb is None else vb - va
        mark = "*" if delta is None or delta != 0 else ""
        body.append([lab, _fmt(va, 4), _fmt(vb, 4), _fmt(delta, 4) + mark])
    widths = [max(len(r[i]) for r in [head] + body) for i in range(4)]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in [head] + body) + "\n"
