import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prpsim.core import MS, S, US, RngStream
from prpsim.impairments import (
    AciConfig,
    ApStallConfig,
    DtimConfig,
    DtimState,
    IntervalSchedule,
    NmConfig,
    StallSchedule,
    aci_couple,
    align_to_beacons,
    ap_stall_delay,
    coupling_between,
    dtim_count,
    dtim_release_time,
    nm_apply_multicast,
    nm_apply_unicast,
    nm_blackout_intervals,
    nm_schedule,
    next_beacon,
)
from prpsim.mac import ChannelConfig, ConfigError


class FixedDraws:
    def __init__(self, ks):
        self.ks = list(ks)

    def randint(self, n):
        return self.ks.pop(0)


# -- intervals


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 900), st.integers(1, 100)), max_size=6),
       st.integers(0, 5000), st.integers(1, 3000), st.integers(0, 999))
def test_periodic_intervals_match_enumeration(raw, a, width, phase):
    # build disjoint offsets inside a 1000 ns period
    offsets, t = [], 0
    for gap, w in sorted(raw):
        s = max(gap, t)
        e = min(s + w, 1000)
        if s < e:
            offsets.append((s, e))
            t = e
    sched = IntervalSchedule(offsets, period=1000, phase=phase)
    b = a + width
    brute = [(phase + k * 1000 + s, phase + k * 1000 + e) for k in range(0, 8) for s, e in offsets]
    expect = sorted(iv for iv in brute if iv[0] < b and iv[1] > a)
    assert sched.between(a, b) == expect
    for t in (a, b - 1):
        cover = [iv for iv in brute if iv[0] <= t < iv[1]]
        assert sched.covering(t) == (cover[0] if cover else None)


def test_horizon_truncates_cycles():
    sched = IntervalSchedule([(0, 10)], period=100, horizon=250)
    assert sched.between(0, 1000) == [(0, 10), (100, 110), (200, 210)]


# -- DTIM


def test_dtim_count_sequence():
    assert [dtim_count(j, 3) for j in range(6)] == [2, 1, 0, 2, 1, 0]
    assert [dtim_count(j, 1) for j in range(3)] == [0, 0, 0]


@pytest.mark.parametrize("t_ms,release_ms", [(0, 100), (5, 100), (100, 100), (101, 300), (150, 300), (300, 300)])
def test_dtim_release_period_two(t_ms, release_ms):
    cfg = DtimConfig(True, t_beac=100 * MS, p=2)
    assert dtim_release_time(t_ms * MS, cfg, 0) == release_ms * MS


def test_dtim_release_every_beacon_when_p_is_one():
    cfg = DtimConfig(True, t_beac=102_400 * US, p=1)
    assert dtim_release_time(1, cfg, 0) == 102_400 * US
    assert dtim_release_time(0, cfg, 0) == 0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**10), st.integers(1, 5), st.integers(1, 200 * MS), st.integers(0, 200 * MS))
def test_dtim_release_is_next_zero_count_beacon(t, p, t_beac, offset):
    cfg = DtimConfig(True, t_beac=t_beac, p=p)
    r = dtim_release_time(t, cfg, offset)
    assert r >= t and r >= offset
    j = (r - offset) // t_beac
    assert (r - offset) % t_beac == 0 and dtim_count(j, p) == 0
    assert r - max(t, offset) < p * t_beac


def test_dtim_state_releases_only_at_dtim_beacons():
    state = DtimState(DtimConfig(True, t_beac=100 * MS, p=2))
    assert state.admit("a", 30 * MS) == 100 * MS
    assert state.release(0) == []
    assert state.release(100 * MS) == ["a"]
    state.admit("b", 130 * MS)
    assert state.release(200 * MS) == []
    assert state.release(300 * MS) == ["b"]


def test_dtim_rejects_bad_period():
    with pytest.raises(ConfigError):
        DtimConfig(True, p=0)


# -- network-manager scans


def test_scan_has_thirteen_probes_spanning_about_three_seconds():
    cfg = NmConfig(True)
    iv = nm_schedule(cfg).between(0, cfg.scan_period)
    assert len(iv) == 13
    assert all(e - s == 60 * MS for s, e in iv)
    assert iv[-1][1] - iv[0][0] == 2820 * MS
    assert nm_schedule(cfg).between(0, 2 * cfg.scan_period)[13][0] == 120 * S


def test_staggered_adapters_are_half_a_period_apart_and_disjoint():
    cfg = NmConfig(True, simultaneous_on_all_adapters=False)
    out = nm_blackout_intervals(cfg, 240 * S, adapters=("a", "b"))
    a = [(s, e) for n, s, e in out if n == "a"]
    b = [(s, e) for n, s, e in out if n == "b"]
    assert [s + 60 * S for s, _ in a] == [s for s, _ in b]
    assert not any(s1 < e2 and s2 < e1 for s1, e1 in a for s2, e2 in b)


def test_simultaneous_adapters_share_intervals():
    out = nm_blackout_intervals(NmConfig(True), 120 * S, adapters=("a", "b"))
    assert [x[1:] for x in out if x[0] == "a"] == [x[1:] for x in out if x[0] == "b"]


def test_grouped_scan_makes_fewer_longer_excursions():
    cfg = NmConfig(True, probes_per_release=2)
    iv = nm_schedule(cfg, grouped=True).between(0, cfg.scan_period)
    assert len(iv) == 7
    assert [e - s for s, e in iv] == [120 * MS] * 6 + [60 * MS]


@settings(max_examples=50, deadline=None)
@given(offset=st.integers(0, 102_400 * US - 1))
def test_aligned_excursions_end_on_beacons(offset):
    cfg = NmConfig(True, probes_per_release=2)
    raw = nm_schedule(cfg, grouped=True).between(0, 2 * cfg.scan_period)
    moved = align_to_beacons(nm_schedule(cfg, grouped=True), 2 * cfg.scan_period, 102_400 * US, offset)
    got = moved.between(0, 3 * cfg.scan_period)
    assert [e - s for s, e in got] == [e - s for s, e in raw]
    for (s0, _), (s, e) in zip(raw, got):
        assert (e - offset) % (102_400 * US) == 0 and 0 <= s - s0 < 102_400 * US
        assert next_beacon(e, 102_400 * US, offset) == e


def test_disabled_scans_produce_nothing():
    assert nm_blackout_intervals(NmConfig(False), 10 * S) == []


def test_unicast_buffer_drops_oldest():
    blackouts = [(100, 200)]
    times = [50, 110, 120, 130, 140, 150, 160, 250]
    out = nm_apply_unicast(blackouts, times, capacity=2)
    assert out == [50, None, None, None, None, 200, 200, 250]


def test_unicast_buffer_resets_between_blackouts():
    out = nm_apply_unicast([(0, 10), (20, 30)], [1, 2, 21, 22], capacity=2)
    assert out == [10, 10, 30, 30]


def test_multicast_modes():
    blackouts = [(100 * MS, 160 * MS)]
    arrivals = [50 * MS, 120 * MS, 200 * MS]
    assert nm_apply_multicast(blackouts, arrivals, "drop") == [50 * MS, None, 200 * MS]
    buffered = nm_apply_multicast(blackouts, arrivals, "dtim-buffer", t_beac=100 * MS)
    assert buffered == [50 * MS, 200 * MS, 200 * MS]
    dtim = DtimConfig(True, t_beac=100 * MS, p=3)
    # beacon 2 is the first with count zero
    assert nm_apply_multicast(blackouts, arrivals, "dtim-buffer", 100 * MS, 0, dtim)[1] == 200 * MS
    with pytest.raises(ValueError):
        nm_apply_multicast(blackouts, arrivals, "queue")


def test_nm_config_validation():
    with pytest.raises(ConfigError):
        NmConfig(True, multicast_mode="hold")
    with pytest.raises(ConfigError):
        NmConfig(True, scan_period=1 * S)


# -- AP stalls


def test_stall_delay_inside_window():
    cfg = ApStallConfig(True, period=10 * S, max_stall=20 * MS)
    phase = 3 * S
    assert ap_stall_delay(phase + 5 * MS, cfg, phase) == 15 * MS
    assert ap_stall_delay(phase + 20 * MS, cfg, phase) == 0
    assert ap_stall_delay(phase - 1, cfg, phase) == 0
    assert ap_stall_delay(phase + 10 * S, cfg, phase) == 20 * MS
    assert ap_stall_delay(phase + 5 * MS, ApStallConfig(False), phase) == 0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**11), st.integers(0, 10 * S), st.integers(0, 900 * MS), st.integers(0, 2**31))
def test_stall_schedule_matches_direct_formula(t, phase, jitter, seed):
    cfg = ApStallConfig(True, period=1 * S, max_stall=20 * MS, jitter=jitter)
    draw = RngStream(seed, "stall.ap.jitter")
    d = ap_stall_delay(t, cfg, phase, draw)
    assert 0 <= d <= cfg.max_stall
    assert StallSchedule(cfg, phase, draw)(t) == d


def test_stall_config_validation():
    with pytest.raises(ConfigError):
        ApStallConfig(True, period=10 * MS, max_stall=20 * MS)
    with pytest.raises(ConfigError):
        ApStallConfig(True, period=1 * S, max_stall=20 * MS, jitter=990 * MS)


# -- adjacent-channel interference


@pytest.mark.parametrize("a,b,c", [(165, 161, 1.0), (165, 157, 0.9), (165, 153, 0.5), (165, 149, 0.3),
                                   (165, 36, 0.1), (1, 165, 0.0), (1, 5, 1.0), (1, 13, 0.5)])
def test_coupling_classes(a, b, c):
    assert coupling_between(a, b, AciConfig(True)) == c


def test_coupling_must_not_grow_with_separation():
    with pytest.raises(ConfigError):
        AciConfig(True, coupling={20: 0.5, 40: 0.9})
    with pytest.raises(ConfigError):
        AciConfig(True, coupling={"cross_band": 0.2})
    assert AciConfig(True, coupling={"20": 0.95}).coupling[20] == 0.95


def test_aci_defers_behind_neighbour_frame():
    m, i = ChannelConfig(165), ChannelConfig(161)
    out = aci_couple([0], [-10 * US], m, i, AciConfig(True), FixedDraws([2]), RngStream(1, "c"))
    # the 1500-byte frame ends at 238 us, then DIFS and two slots
    assert out.i_start == [-10 * US]
    assert out.m_start == [(238 + 34 + 18) * US]


def test_aci_late_neighbour_defers_and_hits_ack():
    m, i = ChannelConfig(165), ChannelConfig(161)
    out = aci_couple([0], [10 * US], m, i, AciConfig(True), FixedDraws([0]), RngStream(1, "c"))
    # I senses the 32 us M frame, then starts right inside M's ACK window
    assert out.m_start == [0] and out.i_start == [66 * US]
    assert out.m_ack_lost == [True] and out.i_ack_lost == [False]


def test_aci_cross_band_is_inert():
    m, i = ChannelConfig(165), ChannelConfig(1)
    out = aci_couple([0], [-10 * US], m, i, AciConfig(True), FixedDraws([]), RngStream(1, "c"))
    assert out.m_start == [0] and out.m_ack_lost == [False]
