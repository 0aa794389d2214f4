import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prpsim.analysis import (
    DistCurve,
    LatencySample,
    LatencySamples,
    assess_independence,
    ccdf,
    compose_ccdf,
    compose_plr,
    delta_table,
    format_table,
    independence_report,
    ks_two_sample,
    nearest_rank,
    pdf,
    pdf_peaks,
    scatter_joint,
    summarize,
)

MS = 1_000_000
US = 1_000


def delivered(values_ns):
    v = np.asarray(values_ns, dtype=np.int64)
    return LatencySamples(np.arange(1, len(v) + 1), v, np.ones(len(v), dtype=bool))


def test_nearest_rank_one_to_hundred():
    s = summarize(delivered(np.arange(1, 101) * MS))
    assert (s.p99, s.min, s.max, s.p50) == (99.0, 1.0, 100.0, 50.0)
    assert nearest_rank(np.arange(1, 101), 99.9) == 100


def test_one_loss_in_a_thousand():
    samples = LatencySamples.from_list([LatencySample(i, MS, i != 7) for i in range(1, 1001)])
    s = summarize(samples)
    assert s.plr == pytest.approx(0.1) and s.delivered == 999 and s.n == 1000


def test_no_deliveries_keeps_plr():
    s = summarize(LatencySamples([1, 2], [0, 0], [False, False]))
    assert s.plr == 100.0 and s.mean is None and s.p99 is None


def test_empty_samples_rejected():
    with pytest.raises(ValueError):
        summarize(LatencySamples([], [], []))


def test_tail_quantiles_round_trip():
    # 100000 samples whose nearest-rank tail lands on prescribed values
    n = 100_000
    v = np.full(n, 300 * US, dtype=np.int64)
    v[99_000:99_900] = 10 * MS
    v[99_899] = 18_457 * US
    v[99_900:99_990] = 19 * MS
    v[99_989] = 20_241 * US
    v[99_990:] = 20_300 * US
    v[-1] = 20_430 * US
    s = summarize(delivered(v))
    assert (s.p99_9, s.p99_99, s.max) == (18.457, 20.241, 20.43)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 10**9), min_size=1, max_size=300), st.floats(0, 1))
def test_summary_order_and_loss_bounds(vals, lost_share):
    n = len(vals)
    ok = np.arange(n) >= int(lost_share * n)
    s = summarize(LatencySamples(np.arange(n), vals, ok), LatencySamples(np.arange(n), vals, ok & (np.arange(n) % 3 > 0)))
    assert s.plr_prime >= s.plr
    if s.delivered:
        seq = [s.min, s.p50, s.p99, s.p99_9, s.p99_99, s.max]
        assert seq == sorted(seq)
        assert s.min <= s.mean <= s.max


def test_ccdf_of_a_constant():
    c = ccdf(delivered([5 * MS] * 10), grid=[4 * MS, 5 * MS, 6 * MS])
    assert c.values.tolist() == [1.0, 0.0, 0.0]


def test_ccdf_of_uniform_at_half():
    rng = np.random.default_rng(0)
    c = ccdf(rng.uniform(0, 1 * MS, 100_000).astype(np.int64), grid=[MS // 2])
    assert abs(c.values[0] - 0.5) < 0.01


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 10**7), min_size=1, max_size=500))
def test_curves_are_valid(vals):
    c = ccdf(np.array(vals))
    assert ((0 <= c.values) & (c.values <= 1)).all()
    assert (np.diff(c.values) <= 0).all()
    p = pdf(np.array(vals), bin_width=1000)
    assert (p.values >= 0).all()
    assert abs(p.values.sum() * 1000 - 1) < 1e-9


def test_pdf_peaks_at_slot_spacing():
    vals = np.concatenate([np.full(50, 100 * US), np.full(30, 109 * US), np.full(10, 118 * US)])
    peaks = pdf_peaks(pdf(vals))
    assert np.diff(peaks).tolist() == [9 * US, 9 * US]


def test_pdf_rejects_bad_input():
    with pytest.raises(ValueError):
        pdf(np.array([], dtype=np.int64))
    with pytest.raises(ValueError):
        pdf(np.array([1]), bin_width=0)


def test_compose_example_and_monte_carlo():
    assert compose_ccdf([0.5], 0.1, [0.5], 0.2)[0] == pytest.approx(0.31 / 0.98)
    # two independent channels with P(d > x) = 0.5 and the given losses
    rng = np.random.default_rng(11)
    n = 2_000_000
    lost1, lost2 = rng.random(n) < 0.1, rng.random(n) < 0.2
    late1, late2 = rng.random(n) < 0.5, rng.random(n) < 0.5
    got = ~(lost1 & lost2)
    late = np.where(lost1, late2, np.where(lost2, late1, late1 & late2))
    assert abs(late[got].mean() - 0.3163) < 0.002


def test_compose_degenerate_cases():
    c1, c2 = np.array([1, 0.7, 0.2, 0.0]), np.array([0.9, 0.5, 0.5, 0.1])
    assert np.array_equal(compose_ccdf(c1, 0.0, c2, 0.0), c1 * c2)
    assert np.array_equal(compose_ccdf(c1, 0.3, np.zeros(4), 0.0), np.zeros(4))
    with pytest.raises(ValueError):
        compose_ccdf(c1, 1.0, c2, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=30), st.lists(st.floats(0, 1), min_size=2, max_size=30),
       st.floats(0, 0.99), st.floats(0, 0.99))
def test_compose_keeps_ccdf_shape(a, b, p1, p2):
    m = min(len(a), len(b))
    c1, c2 = np.sort(a[:m])[::-1], np.sort(b[:m])[::-1]
    est = compose_ccdf(c1, p1, c2, p2)
    assert ((est >= -1e-12) & (est <= 1 + 1e-12)).all()
    assert (np.diff(est) <= 1e-12).all()


def test_compose_curves_need_one_grid():
    a = DistCurve([1, 2], [1.0, 0.0], "ccdf")
    b = DistCurve([1, 3], [1.0, 0.0], "ccdf")
    with pytest.raises(ValueError):
        compose_ccdf(a, 0.1, b, 0.1)
    assert compose_ccdf(a, 0.0, a, 0.0).grid.tolist() == [1, 2]


@pytest.mark.parametrize("p1,p2,percent,places", [(0.06483, 0.19318, 1.2524, 4), (0.05574, 0.05477, 0.305, 3),
                                                  (0.06131, 0.00000278, 0.000017, 6)])
def test_compose_plr_loss_table(p1, p2, percent, places):
    assert round(100 * compose_plr(p1, p2), places) == percent


def test_compose_plr_exact_product():
    assert compose_plr(0.06483, 0.19318) == 0.06483 * 0.19318
    with pytest.raises(ValueError):
        compose_plr(1.2, 0.1)


def test_identical_curves_are_independent():
    c = DistCurve([1, 2, 3], [0.8, 0.3, 0.0], "ccdf")
    rep = independence_report(c, c, 1.0, 1.0)
    assert rep.ks_distance == 0.0 and rep.verdict == "independent"
    rep = independence_report(c, c, 1.0, 2.0)
    assert rep.verdict == "dependent" and rep.plr_gap == pytest.approx(0.5)


def _independent_channels(n, seed):
    rng = np.random.default_rng(seed)
    d1 = rng.exponential(1 * MS, n).astype(np.int64)
    d2 = (0.3 * MS + rng.exponential(0.5 * MS, n)).astype(np.int64)
    ok1, ok2 = rng.random(n) > 0.05, rng.random(n) > 0.1
    seq = np.arange(n)
    red = np.where(ok1 & ok2, np.minimum(d1, d2), np.where(ok1, d1, d2))
    return (LatencySamples(seq, d1, ok1), LatencySamples(seq, d2, ok2), LatencySamples(seq, red, ok1 | ok2))


def test_assess_independence_on_independent_samples():
    a, b, r = _independent_channels(200_000, 1)
    rep = assess_independence(a, b, r)
    assert rep.ks_distance < 0.01 and rep.verdict == "independent"


def test_assess_independence_on_shared_delays():
    a, b, _ = _independent_channels(200_000, 2)
    # a common delay added to both copies of every tenth packet
    common = np.where(np.arange(len(a)) % 10 == 0, 5 * MS, 0)
    a = LatencySamples(a.seq, a.latency + common, a.delivered)
    b = LatencySamples(b.seq, b.latency + common, b.delivered)
    red = LatencySamples(a.seq, np.where(a.delivered & b.delivered, np.minimum(a.latency, b.latency),
                                         np.where(a.delivered, a.latency, b.latency)), a.delivered | b.delivered)
    rep = assess_independence(a, b, red)
    assert rep.ks_distance > 0.05 and rep.verdict == "dependent"
    assert scatter_joint(a, b).excess > 5


def test_joint_tail_excess():
    a, b, _ = _independent_channels(400_000, 3)
    assert abs(scatter_joint(a, b, tau=1 * MS).excess - 1) < 0.1
    flat = LatencySamples(b.seq, np.full(len(b), 1 * MS), b.delivered)
    sj = scatter_joint(a, flat)
    assert sj.excess == 1.0
    assert sj.points.shape[1] == 2 and (sj.points[:, 0] == 1 * MS).all()


def test_ks_two_sample():
    a, b, _ = _independent_channels(20_000, 4)
    d, p = ks_two_sample(a, a)
    assert d == 0.0 and p == 1.0
    d, p = ks_two_sample(a, b)
    assert d > 0.1 and p < 1e-6


def test_tables_render():
    s1 = summarize(delivered(np.arange(1, 101) * MS))
    s2 = summarize(delivered(np.arange(1, 101) * MS), delivered(np.arange(1, 101) * MS))
    t = format_table({"c1": s1, "c165": s2})
    assert "PLR'%" in t and "p99.9" in t and len(t.splitlines()) == 3
    assert "PLR'%" not in format_table({"c1": s1})
    d = delta_table(s1, s1)
    assert "*" not in d
    assert "*" in delta_table(s1, summarize(delivered(np.arange(2, 102) * MS)))


def test_plr_gap_below_sampling_noise_still_agrees():
    c = DistCurve([1, 2, 3], [0.8, 0.3, 0.0], "ccdf")
    assert independence_report(c, c, 0.0, 0.00002, n=6000).verdict == "independent"
    assert independence_report(c, c, 0.0, 0.00002).verdict == "dependent"
    # one loss in 6000 is far beyond an expected 1e-3 losses
    assert independence_report(c, c, 100 / 6000, 0.00002, n=6000).verdict == "dependent"
    assert independence_report(c, c, 1.0, 2.0, n=10**6).verdict == "dependent"
