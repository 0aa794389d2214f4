"""Shared scenario builders and trace comparison for the test suite."""

import random

import numpy as np

from prpsim.trace import ChannelTrace

COLUMNS = ("seq", "set_tag", "t_gen", "t_air_start", "t_air_end", "t_ack", "t_eth", "retries", "data_lost",
           "ack_lost")


def traces_equal(a: ChannelTrace, b: ChannelTrace) -> bool:
    return a.channel == b.channel and all(np.array_equal(getattr(a, c), getattr(b, c)) for c in COLUMNS)


def _loss(r):
    if r.random() < 0.3:
        return {"kind": "gilbert-elliott", "p_gb": round(r.uniform(0, 0.05), 4), "p_bg": round(r.uniform(0.05, 0.5), 4),
                "p_loss_good": round(r.uniform(0, 0.05), 4), "p_loss_bad": round(r.uniform(0.2, 1), 4),
                "p_ack_loss": round(r.uniform(0, 0.1), 4)}
    return {"p_loss": round(r.uniform(0, 0.3), 4), "p_ack_loss": round(r.uniform(0, 0.1), 4)}


def random_scenario(seed: int, duration_s: float = 3.0) -> dict:
    """A small scenario drawing from every feature the simulator offers."""
    r = random.Random(seed)
    chans = r.sample([1, 6, 11, 36, 40, 149, 153, 157, 161, 165], r.randint(1, 3))
    channels = [{"channel_number": c, "retry_limit": r.randint(0, 7), "bitrate": r.choice([6, 24, 54]),
                 "loss_model": _loss(r)} for c in chans]
    streams, free = [], list(chans)
    r.shuffle(free)
    i = 0
    while free:
        take = free[: r.randint(1, min(2, len(free)))]
        free = free[len(take):]
        streams.append({"name": f"s{i}", "kind": r.choice(["unicast-up", "multicast-down"]), "channels": take,
                        "Tc": f"{r.choice([2, 5, 10, 20])}ms", "payload": r.choice([10, 50, 300]),
                        "start_phase": f"{r.randint(0, 3000)}us"})
        i += 1
        if r.random() < 0.3:
            break
    imp = {}
    if r.random() < 0.5:
        imp["dtim"] = {"enabled": True, "t_beac": "102.4ms", "p": r.randint(1, 3)}
    if r.random() < 0.5:
        imp["nm"] = {"enabled": True, "scan_period": "4s", "n_probes": r.randint(1, 5), "probe_dwell": "30ms",
                     "probe_gap": "100ms", "first_scan": f"{r.randint(0, 1500)}ms",
                     "simultaneous_on_all_adapters": r.random() < 0.5,
                     "multicast_mode": r.choice(["drop", "dtim-buffer"])}
    if r.random() < 0.5:
        imp["ap_stall"] = {"enabled": True, "period": "500ms", "max_stall": f"{r.randint(1, 30)}ms",
                           "jitter": f"{r.randint(0, 400)}ms"}
    if r.random() < 0.5:
        imp["aci"] = {"enabled": True}
    loads = []
    if r.random() < 0.4:
        loads.append({"channel": r.choice(chans), "n_nodes": r.randint(0, 2), "mean_gap": "50ms",
                      "mean_burst_len": r.randint(5, 50)})
    return {"name": f"random-{seed}", "seed": seed, "duration": f"{duration_s}s",
            "ap": {"mode": r.choice(["two-aps", "one-dual-band-ap"])}, "channels": channels, "streams": streams,
            "loads": loads, "impairments": imp, "engine": r.choice(["auto", "event"])}


def random_channel_traces(rng: np.random.Generator, n: int, channels=("c1", "c165")) -> list:
    """Unicast-looking traces of one stream with random losses and delays."""
    out = []
    seq = np.arange(1, n + 1, dtype=np.int64)
    t_gen = seq * 10_000_000
    p_loss = rng.uniform(0, 0.3)
    for ch in channels:
        lost = rng.random(n) < p_loss
        start = t_gen + rng.integers(0, 3_000_000, n)
        end = start + 32_000
        eth = np.where(lost, -1, end + rng.integers(0, 200_000, n))
        ack_ok = ~lost & (rng.random(n) > 0.05)
        out.append(ChannelTrace(ch, seq, np.full(n, "-", dtype=object), t_gen, start, end,
                                np.where(ack_ok, end + 44_000, -1), eth, np.zeros(n, dtype=np.int64), lost,
                                ~lost & ~ack_ok))
    return out


def arrivals_of(traces) -> list:
    """Delivered copies as ``(seq, channel, t)``, in time order, channel order breaking ties."""
    rows = []
    for j, tr in enumerate(traces):
        ok = tr.t_eth != -1
        rows.append(np.stack([tr.t_eth[ok], np.full(ok.sum(), j), tr.seq[ok]], axis=1))
    allr = np.concatenate(rows) if rows else np.empty((0, 3), dtype=np.int64)
    allr = allr[np.lexsort((allr[:, 1], allr[:, 0]))]
    names = [tr.channel for tr in traces]
    return [(s, names[j], t) for t, j, s in allr.tolist()]


def brute_force_first(arrivals) -> dict:
    """seq -> (channel, t) of the earliest copy, by exhaustive grouping."""
    groups: dict = {}
    for pos, (seq, ch, t) in enumerate(arrivals):
        groups.setdefault(seq, []).append((t, pos, ch))
    return {seq: (min(c)[2], min(c)[0]) for seq, c in groups.items()}
