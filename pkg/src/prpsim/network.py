"""Event-driven model of a redundant station, its APs and interfering nodes.

Every configured channel is one BSS: a station adapter (all adapters sit on
the same redundant station), an AP radio and optional interferer nodes.
Channels whose transmitter can never meet another one are simulated with
the sequential functions of :mod:`prpsim.mac`; the rest go through the
event loop, which adds carrier sensing across nodes, collisions and the
adjacent-channel coupling between co-located adapters.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import MS, Simulator
from .impairments import (
    IntervalSchedule,
    align_to_beacons,
    StallSchedule,
    coupling_between,
    dtim_release_time,
    nm_apply_multicast,
    nm_apply_unicast,
    nm_schedule,
)
from .mac import (
    ChannelConfig,
    ChannelState,
    Frame,
    LossModel,
    LossProcess,
    TxRecord,
    ap_forward,
    multicast_delivery,
    plan_access,
    unicast_exchange,
)
from .traffic import BurstLoadConfig, aci_experiment_schedule, burst_interferer, cyclic_times

log = logging.getLogger(__name__)

# how long finished transmissions stay visible to carrier sensing
_HISTORY = 50 * MS


class Medium:
    """Busy intervals of one channel, as seen by every node on it."""

    __slots__ = ("intervals", "busy_ns", "_covered", "_longest")

    def __init__(self):
        self.intervals: deque = deque()  # in order of start time
        self.busy_ns = 0  # length of the union of all busy intervals
        self._covered = 0
        self._longest = 0

    def add(self, start: int, end: int, owner) -> None:
        iv = self.intervals
        while iv and iv[0][1] < start - _HISTORY:
            iv.popleft()
        iv.append((start, end, owner))
        if end - start > self._longest:
            self._longest = end - start
        if end > self._covered:
            self.busy_ns += end - max(start, self._covered)
            self._covered = end

    def busy_end(self, now: int, owner) -> int:
        """End of the busy period covering ``now``; ``now`` when idle."""
        t = now
        horizon = now - self._longest
        for s, e, o in reversed(self.intervals):
            if s < horizon:
                break
            if e > t and s <= t and o is not owner:
                t = e
        return t

    def blocking(self, owner, ref: int, now: int) -> Optional[int]:
        """Latest end among others' transmissions that began inside ``[., now)``
        and were still on after ``ref``."""
        end = None
        horizon = ref - self._longest
        for s, e, o in reversed(self.intervals):
            if s < horizon:
                break
            if o is not owner and s < now and e > ref:
                end = e if end is None else max(end, e)
        return end

    def starting_at(self, now: int, owner) -> list:
        out = []
        for s, e, o in reversed(self.intervals):
            if s < now:
                break
            if s == now and o is not owner:
                out.append(o)
        return out


@dataclass(slots=True)
class Job:
    frame: Frame
    rec: Optional[TxRecord]
    pinned: bool = False
    follower: Optional[Callable[[int], None]] = None


class Transmitter:
    """One radio with a FIFO queue running DCF on a shared medium."""

    def __init__(self, sim: Simulator, name: str, config: ChannelConfig, medium: Medium, state: ChannelState,
                 unicast: bool = True, queue_limit: Optional[int] = None, records: Optional[list] = None):
        self.sim = sim
        self.name = name
        self.config = config
        self.medium = medium
        self.state = state
        self.unicast = unicast
        self.queue_limit = queue_limit
        self.records = records
        self.queue: deque = deque()
        self.job: Optional[Job] = None
        self.attempt = 0
        self.delivered = False
        self.ref = 0
        self.collided = False
        self.data_iv: deque = deque()  # own data frames, visible to co-located radios
        self.sense_partners: list = []
        self.ack_partners: list = []
        self.corrupt_rng = None
        self.p_ack_corrupt = 0.0
        self.dropped = 0

    # queueing

    def offer(self, job: Job) -> None:
        if self.queue_limit is not None and len(self.queue) >= self.queue_limit:
            self.dropped += 1
            return
        self.queue.append(job)
        if self.job is None:
            self._next()

    def _next(self) -> None:
        if not self.queue:
            self.job = None
            return
        self.job = self.queue.popleft()
        self.attempt = 0
        self.delivered = False
        self._begin()

    # channel access

    def _partner_block(self, ref: int, now: int) -> Optional[int]:
        end = None
        for p in self.sense_partners:
            for s, e in reversed(p.data_iv):
                if s < now and e > ref:
                    end = e if end is None else max(end, e)
                if e < ref:
                    break
        return end

    def _begin(self) -> None:
        now = self.sim.now
        job = self.job
        ref = self.medium.busy_end(now, self)
        pend = self._partner_block(now, now + 1)
        if pend is not None and pend > ref:
            ref = pend
        blackouts = self.state.blackouts
        if job.pinned and self.attempt == 0 and ref == now and (
                blackouts is None or blackouts.first_overlap(now, now + 1) is None):
            start = now
        else:
            start, _ = plan_access(self.config, self.state.backoff_rng, ref,
                                   self.config.contention_window(self.attempt), blackouts)
        self.ref = ref
        self.sim.schedule(start, self._attempt)
        if self.attempt == 0 and job.follower is not None:
            job.follower(start)

    def _attempt(self) -> None:
        now = self.sim.now
        block = self.medium.blocking(self, self.ref, now)
        pend = self._partner_block(self.ref, now)
        if pend is not None and (block is None or pend > block):
            block = pend
        if block is not None:
            # something started during the countdown: wait for it, fresh backoff
            self.ref = max(block, now)
            start, _ = plan_access(self.config, self.state.backoff_rng, self.ref,
                                   self.config.contention_window(self.attempt), self.state.blackouts)
            self.sim.schedule(start, self._attempt)
            return
        others = self.medium.starting_at(now, self)
        self.collided = bool(others)
        for o in others:
            o.collided = True
        cfg = self.config
        end = now + cfg.airtime(self.job.frame.payload)
        rec = self.job.rec
        if rec is not None:
            rec.t_air_start, rec.t_air_end, rec.retries = now, end, self.attempt
        if self.unicast:
            ack_end = end + cfg.sifs + cfg.ack_airtime
            self.medium.add(now, ack_end, self)
            self._publish(now, end)
            self.sim.schedule(ack_end, self._ack_done, end)
        else:
            self.medium.add(now, end, self)
            self._publish(now, end)
            self.sim.schedule(end, self._multicast_done, now)

    def _publish(self, start: int, end: int) -> None:
        iv = self.data_iv
        while iv and iv[0][1] < start - _HISTORY:
            iv.popleft()
        iv.append((start, end))

    # completion

    def _ack_done(self, end: int) -> None:
        now = self.sim.now
        st = self.state
        rec = self.job.rec
        data_ok = not self.collided and not st.data_loss.lost()
        if data_ok and not self.delivered:
            self.delivered = True
            if rec is not None:
                rec.t_eth = st.forward(end) if st.forward else end
        ack_ok = data_ok and not (st.ack_loss is not None and st.ack_loss.lost())
        if ack_ok and self.ack_partners:
            a = end + self.config.sifs
            for p, c in self.ack_partners:
                if any(s < now and e > a for s, e in p.data_iv):
                    if self.corrupt_rng.random() < self.p_ack_corrupt * c:
                        ack_ok = False
                        break
        if ack_ok:
            if rec is not None:
                rec.t_ack = now
            self._finish()
        elif self.attempt < self.config.retry_limit:
            self.attempt += 1
            self._begin()
        else:
            self._finish()

    def _multicast_done(self, start: int) -> None:
        now = self.sim.now
        st = self.state
        lost = st.data_loss.lost() or self.collided
        if st.rx_blackouts is not None and st.rx_blackouts.first_overlap(start, now) is not None:
            lost = True
        rec = self.job.rec
        if rec is not None:
            rec.data_lost = lost
            if not lost:
                rec.t_eth = now
        self._finish(multicast=True)

    def _finish(self, multicast: bool = False) -> None:
        rec = self.job.rec
        if rec is not None:
            if not multicast:
                rec.data_lost = not self.delivered
                rec.ack_lost = self.delivered and rec.t_ack is None
            self.records.append(rec)
        self._next()


class Feeder:
    """Offers a channel's planned frames to its transmitter, in request order."""

    def __init__(self, sim: Simulator, tx: Transmitter, plan: ChannelPlan):
        self.sim = sim
        self.tx = tx
        self.plan = plan
        self.pos = 0

    def start(self) -> None:
        if self.plan.items:
            self.sim.schedule(self.plan.items[0][0], self._fire)

    def _fire(self) -> None:
        items = self.plan.items
        item = items[self.pos]
        self.pos += 1
        if self.pos < len(items):
            self.sim.schedule(items[self.pos][0], self._fire)
        self.tx.offer(self.plan.job(item))


class LoadFeeder:
    """Draws interferer requests lazily from a generator."""

    def __init__(self, sim: Simulator, tx: Transmitter, times, payload: int, channel: str):
        self.sim = sim
        self.tx = tx
        self.times = iter(times)
        self.payload = payload
        self.channel = channel
        self.count = 0

    def start(self) -> None:
        self._schedule_next()

    def _schedule_next(self) -> None:
        t = next(self.times, None)
        if t is not None:
            self.sim.schedule(t, self._fire)

    def _fire(self) -> None:
        self.count += 1
        self._schedule_next()
        self.tx.offer(Job(Frame(self.count, self.channel, self.sim.now, self.payload), None))


@dataclass
class ChannelPlan:
    """Everything needed to simulate the measurement traffic of one channel."""

    config: ChannelConfig
    stream: Optional[str] = None
    kind: Optional[str] = None
    payload: int = 50
    # (t_request, seq, t_gen, set_tag, pinned), in request order
    items: list = field(default_factory=list)
    followers: dict = field(default_factory=dict)
    dropped: list = field(default_factory=list)  # records of frames never put on air
    state: Optional[ChannelState] = None
    interactive: bool = False
    records: list = field(default_factory=list)

    def frame(self, item) -> Frame:
        _, seq, t_gen, tag, _ = item
        return Frame(seq, self.config.id, t_gen, self.payload, tag, self.kind == "multicast-down")

    def job(self, item) -> Job:
        _, seq, t_gen, tag, pinned = item
        return Job(self.frame(item), TxRecord(seq, self.config.id, t_gen, set_tag=tag), pinned,
                   self.followers.get(seq))


@dataclass
class RunResult:
    records: dict  # channel id -> list[TxRecord] sorted by seq
    kinds: dict  # channel id -> stream kind
    streams: dict  # stream name -> tuple of channel ids
    load_stats: dict = field(default_factory=dict)
    event_count: int = 0
    busy_ns: dict = field(default_factory=dict)  # channel id -> medium busy time (event-driven channels)


class Network:
    """Builds the entities of a scenario and runs it to completion."""

    def __init__(self, scenario):
        self.scenario = scenario
        self.sim = Simulator(scenario.seed)
        self.rng = self.sim.rng
        self.channels = {c.id: c for c in scenario.channels}
        self.order = [c.id for c in scenario.channels]
        self.horizon = self._horizon()
        imp = scenario.impairments
        self.stalls = self._stall_schedules(imp.ap_stall)
        self.beacon_offsets = {cid: self._beacon_offset(cid) for cid in self.order}
        self.plans: dict[str, ChannelPlan] = {cid: ChannelPlan(self.channels[cid]) for cid in self.order}
        self.stream_channels: dict[str, tuple] = {}
        self._assign_streams()
        self._blackouts = self._nm_schedules()
        self._build_states()
        self._build_traffic()
        self._mark_interactive()

    # setup

    def _horizon(self) -> Optional[int]:
        sc = self.scenario
        if sc.duration is not None:
            return sc.duration
        ends = []
        for st in sc.streams:
            if st.count is not None:
                ends.append(st.start_phase + st.count * st.Tc)
            elif st.duration is not None:
                ends.append(st.duration)
        ex = sc.aci_experiment
        if ex is not None:
            if ex.count is not None:
                ends.append(ex.start_phase + ex.count * ex.Tc)
            elif ex.duration is not None:
                ends.append(ex.duration)
        return max(ends) if ends else None

    def _stall_key(self, cid: str) -> str:
        cfg = self.scenario.impairments.ap_stall
        shared = cfg.shared_across_channels
        if shared is None:
            shared = self.scenario.ap.mode == "one-dual-band-ap"
        return "ap" if shared else f"ap.{cid}"

    def _stall_schedules(self, cfg) -> dict:
        out = {}
        if not cfg.enabled:
            return out
        keys = []
        for cid in self.order:
            key = self._stall_key(cid)
            if key not in keys:
                keys.append(key)
        for j, key in enumerate(keys):
            if cfg.phase_offset_per_ap is not None:
                phase = (j * cfg.phase_offset_per_ap) % cfg.period
            else:
                phase = int(self.rng(f"stall.{key}.phase").random() * cfg.period)
            out[key] = StallSchedule(cfg, phase, self.rng(f"stall.{key}.jitter"))
        return out

    def _beacon_offset(self, cid: str) -> int:
        dtim = self.scenario.impairments.dtim
        if dtim.beacon_offset is not None:
            return dtim.beacon_offset
        return int(self.rng(f"dtim.{cid}.offset").random() * dtim.t_beac)

    def _forward(self, cid: str) -> Callable[[int], int]:
        ap = self.scenario.ap
        band = self.channels[cid].band
        stall = self.stalls.get(self._stall_key(cid))
        if stall is None:
            return lambda t: ap_forward(t, ap, band)
        return lambda t: ap_forward(t, ap, band, stall(t))

    def _assign_streams(self) -> None:
        for st in self.scenario.streams:
            self.stream_channels[st.name] = tuple(st.channels)
            for cid in st.channels:
                self.plans[cid].stream, self.plans[cid].kind = st.name, st.kind
        ex = self.scenario.aci_experiment
        if ex is not None:
            self.stream_channels["aci"] = (ex.m_channel, ex.i_channel)
            for cid in (ex.m_channel, ex.i_channel):
                self.plans[cid].stream, self.plans[cid].kind = "aci", "unicast-up"

    def _nm_schedules(self) -> dict:
        nm = self.scenario.impairments.nm
        if not nm.enabled:
            return {}
        out = {}
        n = len(self.order)
        for j, cid in enumerate(self.order):
            grouped = self.plans[cid].kind == "multicast-down" and nm.multicast_mode == "dtim-buffer"
            sched = nm_schedule(nm, j, n, grouped)
            if grouped and nm.return_on_beacon and self.horizon is not None:
                sched = align_to_beacons(sched, self.horizon, self.scenario.impairments.dtim.t_beac,
                                         self.beacon_offsets[cid])
            out[cid] = sched
        return out

    def _build_states(self) -> None:
        for cid in self.order:
            plan = self.plans[cid]
            bl = self._blackouts.get(cid)
            if plan.kind == "multicast-down":
                plan.state = ChannelState.from_streams(plan.config, self.rng, rx_blackouts=bl)
            else:
                plan.state = ChannelState.from_streams(plan.config, self.rng, forward=self._forward(cid), blackouts=bl)

    def _build_traffic(self) -> None:
        sc = self.scenario
        for st in sc.streams:
            times = cyclic_times(st, self.horizon)
            for cid in st.channels:
                if st.kind == "unicast-up":
                    self._uplink_items(self.plans[cid], times, st.payload)
                else:
                    self._downlink_items(self.plans[cid], times, st.payload)
        if sc.aci_experiment is not None:
            self._aci_items(sc.aci_experiment)

    def _uplink_items(self, plan: ChannelPlan, times: np.ndarray, payload: int, tags=None) -> None:
        cid = plan.config.id
        plan.payload = payload
        gen = times.tolist()
        bl = self._blackouts.get(cid)
        if tags is None:
            tags = ["-"] * len(gen)
        if bl is None:
            plan.items = [(t, i + 1, t, tag, False) for i, (t, tag) in enumerate(zip(gen, tags))]
            return
        req = nm_apply_unicast(bl, gen, self.scenario.impairments.nm.buffer_capacity)
        for i, (t, r) in enumerate(zip(gen, req)):
            if r is None:
                plan.dropped.append(TxRecord(i + 1, cid, t, data_lost=True, set_tag=tags[i]))
            else:
                plan.items.append((r, i + 1, t, tags[i], False))

    def _downlink_items(self, plan: ChannelPlan, times: np.ndarray, payload: int) -> None:
        cid = plan.config.id
        plan.payload = payload
        imp = self.scenario.impairments
        fwd = self._forward(cid)
        offset = self.beacon_offsets[cid]
        at_ap = [fwd(t) for t in times.tolist()]
        bl = self._blackouts.get(cid)
        gated: list = list(at_ap)
        held = [False] * len(at_ap)
        if bl is not None and imp.nm.multicast_mode == "dtim-buffer":
            rel = nm_apply_multicast(bl, at_ap, "dtim-buffer", imp.dtim.t_beac, offset, imp.dtim)
            for i, (a, r) in enumerate(zip(at_ap, rel)):
                if r != a:
                    gated[i], held[i] = r, True
        if imp.dtim.enabled:
            for i, a in enumerate(at_ap):
                if not held[i]:
                    gated[i], held[i] = dtim_release_time(a, imp.dtim, offset), True
        items = [(gated[i], i + 1, t, "-", held[i]) for i, t in enumerate(times.tolist())]
        items.sort(key=lambda x: (x[0], x[1]))
        plan.items = items

    def _aci_items(self, ex) -> None:
        sched = aci_experiment_schedule(ex, self.horizon)
        m_plan, i_plan = self.plans[ex.m_channel], self.plans[ex.i_channel]
        times = np.array([r.t_m for r in sched], dtype=np.int64)
        self._uplink_items(m_plan, times, ex.payload, [r.tag for r in sched])
        sent = {item[1] for item in m_plan.items}
        i_plan.payload = ex.i_payload
        for r in sched:
            if r.tag != "A" or r.seq not in sent:
                continue
            job = i_plan.job((r.t_m, r.seq, r.t_m, "A", True))
            m_plan.followers[r.seq] = self._pin_follower(ex.i_channel, job, ex.lead)
        i_plan.items = []

    def _pin_follower(self, cid: str, job: Job, lead: int) -> Callable[[int], None]:
        def follow(start: int) -> None:
            t = max(self.sim.now, start + lead)
            self.sim.schedule(t, self._tx[cid].offer, job)
        return follow

    def _mark_interactive(self) -> None:
        sc = self.scenario
        aci = sc.impairments.aci
        self.pairs: list = []
        uplink = [cid for cid in self.order if self.plans[cid].kind == "unicast-up"]
        if aci.enabled:
            for a in uplink:
                for b in uplink:
                    if a != b:
                        c = coupling_between(self.channels[a].channel_number, self.channels[b].channel_number, aci)
                        if c > 0.0:
                            self.pairs.append((a, b, c))
        touched = {a for a, _, _ in self.pairs}
        touched.update(ld.channel for ld in sc.loads if ld.n_nodes > 0)
        if sc.aci_experiment is not None:
            touched.update((sc.aci_experiment.m_channel, sc.aci_experiment.i_channel))
        for cid in self.order:
            self.plans[cid].interactive = sc.engine == "event" or cid in touched

    # execution

    def run(self) -> RunResult:
        self._tx: dict[str, Transmitter] = {}
        sim = self.sim
        mediums = {cid: Medium() for cid in self.order}
        load_feeders = []
        for cid in self.order:
            plan = self.plans[cid]
            if plan.kind is None or not plan.interactive:
                continue
            tx = Transmitter(sim, f"{cid}.{'ap' if plan.kind == 'multicast-down' else 'sta'}", plan.config,
                             mediums[cid], plan.state, unicast=plan.kind == "unicast-up", records=plan.records)
            self._tx[cid] = tx
            Feeder(sim, tx, plan).start()
        aci = self.scenario.impairments.aci
        for a, b, c in self.pairs:
            ta, tb = self._tx[a], self._tx[b]
            if c >= aci.busy_sense_threshold:
                ta.sense_partners.append(tb)
            ta.ack_partners.append((tb, c))
            ta.corrupt_rng = self.rng(f"aci.{a}.corrupt")
            ta.p_ack_corrupt = aci.p_ack_corrupt
        for ld in self.scenario.loads:
            load_feeders.extend(self._build_load(ld, mediums[ld.channel]))
        for f in load_feeders:
            f.start()
        fired = sim.run()
        for cid in self.order:
            plan = self.plans[cid]
            if plan.kind is not None and not plan.interactive:
                self._run_sequential(plan)
        records = {}
        for cid in self.order:
            plan = self.plans[cid]
            if plan.kind is None:
                continue
            recs = plan.records + plan.dropped
            recs.sort(key=lambda r: r.seq)
            records[cid] = recs
        load_stats = {f"{f.tx.name}": {"requests": f.count, "dropped": f.tx.dropped} for f in load_feeders}
        busy = {cid: m.busy_ns for cid, m in mediums.items() if m.intervals}
        return RunResult(records, {cid: self.plans[cid].kind for cid in records}, dict(self.stream_channels),
                         load_stats, fired, busy)

    def _build_load(self, ld: BurstLoadConfig, medium: Medium) -> list:
        cfg = self.channels[ld.channel]
        out = []
        end = self.horizon if self.horizon is not None else 0
        for j in range(ld.n_nodes):
            name = f"load.{ld.channel}.{j}"
            # interferer frames are sent once and never lost; they only occupy the medium
            node_cfg = ChannelConfig(cfg.channel_number, bitrate=cfg.bitrate, ack_bitrate=cfg.ack_bitrate,
                                     slot=cfg.slot, sifs=cfg.sifs, cw_min=cfg.cw_min, retry_limit=0,
                                     loss_model=LossModel(), id=name)
            state = ChannelState(node_cfg, self.rng(f"{name}.backoff"),
                                 LossProcess(node_cfg.loss_model, self.rng(f"{name}.loss")))
            tx = Transmitter(self.sim, name, node_cfg, medium, state, unicast=True, queue_limit=ld.queue_limit)
            times = burst_interferer(ld, self.rng(f"{name}.arrivals"), end)
            out.append(LoadFeeder(self.sim, tx, times, ld.payload, name))
        return out

    def _run_sequential(self, plan: ChannelPlan) -> None:
        st = plan.state
        out = plan.records
        frame = plan.frame
        if plan.kind == "unicast-up":
            for item in plan.items:
                out.append(unicast_exchange(frame(item), st, item[0]))
        else:
            for item in plan.items:
                out.append(multicast_delivery(frame(item), st, item[0], pinned=item[4]))


def simulate(scenario) -> RunResult:
    return Network(scenario).run()
