"""Run scenarios to traces on disk, and report on existing traces."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import (
    assess_independence,
    ccdf,
    delta_table,
    end_to_end_samples,
    format_table,
    pdf,
    redundant_trace_samples,
    scatter_joint,
    summarize,
    summarize_by_set,
    summarize_trace,
)
from .network import simulate
from .prp import RedundantLinkView, redundant_samples
from .scenario import Scenario
from .trace import ChannelTrace, RedundantTrace, TraceError, trace_kind

log = logging.getLogger(__name__)


@dataclass
class SimulationOutput:
    scenario: Scenario
    traces: dict  # channel id -> ChannelTrace
    kinds: dict  # channel id -> stream kind
    streams: dict  # stream name -> channel ids
    redundant: dict  # stream name -> RedundantTrace
    views: dict  # stream name -> RedundantLinkView
    load_stats: dict
    events: int
    busy_ns: dict


def simulate_traces(scenario: Scenario) -> SimulationOutput:
    res = simulate(scenario)
    traces = {cid: ChannelTrace.from_records(cid, recs) for cid, recs in res.records.items()}
    views, redundant = {}, {}
    for name, chans in res.streams.items():
        view = RedundantLinkView.from_traces([traces[c] for c in chans])
        views[name] = view
        redundant[name] = view.redundant_trace()
    return SimulationOutput(scenario, traces, res.kinds, res.streams, redundant, views, res.load_stats,
                            res.event_count, res.busy_ns)


def summary_text(out: SimulationOutput) -> str:
    parts = [f"scenario {out.scenario.name}  seed {out.scenario.seed}\n"]
    for name, chans in out.streams.items():
        rows = {}
        for cid in chans:
            rows[cid] = summarize_trace(out.traces[cid])
        view = out.views[name]
        acked = all(out.kinds[c] == "unicast-up" for c in chans)
        rows["redundant"] = summarize(redundant_samples(view, "d"), redundant_samples(view, "d'") if acked else None)
        parts.append(f"\nstream {name} ({out.kinds[chans[0]]})\n")
        parts.append(format_table(rows, show_prime=acked))
        for cid in chans:
            sets = summarize_by_set(out.traces[cid])
            if "A" in sets or "NA" in sets:
                parts.append(f"\n{cid} by set\n")
                parts.append(format_table(sets, show_prime=acked))
    return "".join(parts)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_scenario(scenario: Scenario, out_dir) -> SimulationOutput:
    """Simulate and write traces, summary and manifest under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    out = simulate_traces(scenario)
    log.info("simulated %s: %d events in %.1fs", scenario.name, out.events, time.perf_counter() - t0)
    files = {}
    for cid, tr in out.traces.items():
        name = f"trace_{cid}.csv"
        tr.to_csv(out_dir / name)
        files[name] = _sha256(out_dir / name)
    for sname, rt in out.redundant.items():
        name = f"redundant_{sname}.csv"
        rt.to_csv(out_dir / name)
        files[name] = _sha256(out_dir / name)
    (out_dir / "summary.txt").write_text(summary_text(out))
    manifest = {
        "generator": f"prpsim {__version__}",
        "config_hash": scenario.config_hash(),
        "seed": scenario.seed,
        "streams": {k: {"channels": list(v), "kind": out.kinds[v[0]]} for k, v in out.streams.items()},
        "files": files,
        "resolved_config": scenario.to_dict(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def _load_trace(path):
    kind = trace_kind(path)
    if kind == "channel":
        return kind, ChannelTrace.read_csv(path)
    return kind, RedundantTrace.read_csv(path)


def _samples(kind, trace):
    if kind == "channel":
        return end_to_end_samples(trace)
    return redundant_trace_samples(trace)


def _summary(kind, trace):
    if kind == "channel":
        return summarize_trace(trace)
    return summarize(redundant_trace_samples(trace))


def _label(path: Path) -> str:
    parent = path.resolve().parent.name
    return f"{parent}/{path.stem}" if parent else path.stem


def analyze(trace_paths: Sequence, out_dir, tau: Optional[int] = None, bin_width: Optional[int] = None) -> dict:
    """Summaries, curves, and (for two channel traces) independence and scatter."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loaded = [(Path(p), *_load_trace(p)) for p in trace_paths]
    if not loaded:
        raise ValueError("no traces given")
    rows, report = {}, {}
    lines = []
    for path, kind, tr in loaded:
        label = _label(path)
        rows[label] = _summary(kind, tr)
        samples = _samples(kind, tr)
        stem = label.replace("/", "_")
        if samples.delivered.any():
            ccdf(samples).to_csv(out_dir / f"ccdf_{stem}.csv")
            pdf(samples, bin_width or 1000).to_csv(out_dir / f"pdf_{stem}.csv")
        if kind == "channel":
            sets = summarize_by_set(tr)
            if "A" in sets or "NA" in sets:
                lines.append(f"\n{label} by set\n" + format_table(sets, show_prime=tr.acknowledged))
                report[f"{label}.sets"] = {k: v.as_dict() for k, v in sets.items()}
    text = format_table(rows) + "".join(lines)
    report["summary"] = {k: v.as_dict() for k, v in rows.items()}
    channel = [(p, t) for p, k, t in loaded if k == "channel"]
    if len(channel) == 2:
        (pa, ta), (pb, tb) = channel
        view = RedundantLinkView.from_traces([ta, tb])
        s1, s2 = end_to_end_samples(ta), end_to_end_samples(tb)
        rep = assess_independence(s1, s2, redundant_samples(view))
        sc = scatter_joint(s1, s2, tau) if tau is not None else scatter_joint(s1, s2)
        text += (f"\nindependence {ta.channel} / {tb.channel}\n"
                 f"  ks_distance {rep.ks_distance:.5f}\n"
                 f"  plr_measured {rep.plr_measured:.5f}%  plr_estimated {rep.plr_estimated:.5f}%\n"
                 f"  joint_tail_excess {sc.excess:.3f} at tau {sc.tau / 1e6:g} ms\n"
                 f"  verdict {rep.verdict}\n")
        report["independence"] = {"ks_distance": rep.ks_distance, "plr_measured": rep.plr_measured,
                                  "plr_estimated": rep.plr_estimated, "verdict": rep.verdict,
                                  "joint_tail_excess": sc.excess}
        _write_scatter(out_dir / "scatter.csv", s1, s2, ta.channel, tb.channel)
    (out_dir / "report.txt").write_text(text)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def _write_scatter(path: Path, s1, s2, c1: str, c2: str) -> None:
    # one row per packet; lost copies appear as -1
    seq, i1, i2 = np.intersect1d(s1.seq, s2.seq, return_indices=True)
    d1 = np.where(s1.delivered[i1], s1.latency[i1] / 1e6, -1.0)
    d2 = np.where(s2.delivered[i2], s2.latency[i2] / 1e6, -1.0)
    rows = [f"seq,{c2}_ms,{c1}_ms"] + [f"{s},{b!r},{a!r}" for s, a, b in zip(seq.tolist(), d1.tolist(), d2.tolist())]
    path.write_text("\n".join(rows) + "\n")


def _stream_kind(kind, trace) -> str:
    if kind == "redundant":
        return "redundant"
    return "unicast" if trace.acknowledged else "multicast"


def compare(path_a, path_b, out_dir=None) -> str:
    ka, ta = _load_trace(path_a)
    kb, tb = _load_trace(path_b)
    sa, sb = _stream_kind(ka, ta), _stream_kind(kb, tb)
    if sa != sb:
        raise TraceError(path_b, 1, f"stream kind {sb} does not match {sa} of {path_a}")
    text = delta_table(_summary(ka, ta), _summary(kb, tb), _label(Path(path_a)), _label(Path(path_b)))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "compare.txt").write_text(text)
    return text
