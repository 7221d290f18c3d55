import math
from fractions import Fraction

import numpy as np
import pytest

from chunknet.codes import CodeParams, PrecodeParams
from chunknet.simulator import (
    SimConfig,
    _mean_over_traffic,
    ccp_config,
    estimate_average_delay,
    estimate_delay_quantile,
    measure_undecodable_fraction,
    run_ccp,
    run_once,
    run_trials,
)
from chunknet.traffic import NetworkParams, sample_trace
from oracles import full_rank_prob, markov_undecodable


def lossless(k, q=1, L=1, m=0, **kw):
    return SimConfig(CodeParams(k, q, m), NetworkParams.line(1.0, L), **kw)


def exact_delay_cdf(k, n):
    """Pr{coding delay <= n} on one lossless link with q = 1."""
    return full_rank_prob(n, k)


def test_delay_at_least_k():
    for r in run_trials(lossless(8), 300):
        assert r.coding_delay >= 8


def test_two_hops_delay_at_least_k_plus_one():
    delays = [r.coding_delay for r in run_trials(lossless(4, L=2), 2000)]
    assert min(delays) == 5


def test_exact_delay_probability():
    n = 20_000
    delays = np.array([r.coding_delay for r in run_trials(lossless(4), n)])
    p = float(exact_delay_cdf(4, 4))
    assert p == pytest.approx(315 / 1024)
    assert abs(np.mean(delays == 4) - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_delay_distribution_matches_cdf():
    n = 20_000
    delays = np.array([r.coding_delay for r in run_trials(lossless(4), n)])
    for t in range(4, 10):
        p = float(exact_delay_cdf(4, t))
        assert abs(np.mean(delays <= t) - p) < 4 * math.sqrt(p * (1 - p) / n) + 1e-9


def test_quantile_from_exact_cdf():
    # Pr{D<=5} = 0.596 < 0.7 <= Pr{D<=6} = 0.782, so the 0.7-quantile is 6
    assert float(exact_delay_cdf(4, 5)) == pytest.approx(0.596, abs=1e-3)
    assert exact_delay_cdf(4, 5) < Fraction(7, 10) <= exact_delay_cdf(4, 6)
    est = estimate_delay_quantile(lossless(4), 5000, 0.3)
    assert est.quantile == 6
    assert est.ci_low <= est.quantile <= est.ci_high


def test_median_and_monotone_in_eps():
    cfg = lossless(16, q=2)
    est = estimate_delay_quantile(cfg, 400, 0.5)
    assert est.quantile == sorted(est.delays)[199]
    qs = [estimate_delay_quantile(cfg, 400, e).quantile for e in (0.01, 0.05, 0.1, 0.3, 0.5, 0.9)]
    assert qs == sorted(qs, reverse=True)


def test_few_trials_warns():
    with pytest.warns(UserWarning):
        estimate_delay_quantile(lossless(4), 5, 0.01)


def test_deterministic_and_worker_invariant():
    cfg = SimConfig(CodeParams(32, 4), NetworkParams.line([0.9, 0.6]), code_seed=3, traffic_seed=8)
    a = run_once(cfg)
    b = run_once(cfg)
    assert a == b
    seq = [(r.coding_delay, r.successes) for r in run_trials(cfg, 12, workers=1)]
    par = [(r.coding_delay, r.successes) for r in run_trials(cfg, 12, workers=3)]
    assert seq == par


def test_trace_replay_matches_stream():
    net = NetworkParams.line([0.9, 0.7, 0.8])
    cfg = SimConfig(CodeParams(48, 4, m=8), net, code_seed=1, traffic_seed=2)
    live = run_once(cfg)
    trace = sample_trace(net.with_horizon(cfg.cap), 2)
    replay = run_once(cfg, trace=trace)
    assert replay.coding_delay == live.coding_delay
    assert replay.successes == live.successes
    assert replay.recovered_message == live.recovered_message == live.message
    assert live.successes == [int(np.count_nonzero(t <= live.end_time)) for t in trace.times]
    assert all(s <= tx for s, tx in zip(live.successes, live.transmissions))


def test_rank_never_exceeds_any_link_count():
    net = NetworkParams.line([0.8, 0.5, 0.9])
    cfg = SimConfig(CodeParams(40, 5), net, code_seed=4, traffic_seed=4)
    res = run_once(cfg)
    trace = sample_trace(net.with_horizon(res.end_time), 4)
    ranks = [r for _, r in res.rank_trajectory]
    assert ranks == list(range(1, len(ranks) + 1))
    for t, r in res.rank_trajectory:
        for times in trace.times:
            assert r <= np.count_nonzero(times <= t)
    assert ranks[-1] == 40


def test_decoding_needs_upstream_arrivals():
    # a node can only forward what it received strictly earlier
    net = NetworkParams.line([1.0, 1.0, 1.0])
    res = run_once(SimConfig(CodeParams(6, 1), net, code_seed=0))
    assert res.rank_trajectory[0][0] >= 3


@pytest.mark.parametrize("seed", range(5))
def test_payload_recovery(seed):
    cfg = SimConfig(CodeParams(24, 3, m=20), NetworkParams.line([0.7, 0.9]), code_seed=seed, traffic_seed=seed)
    res = run_once(cfg)
    assert res.recovered_message == res.message


def test_cap_exceeded():
    cfg = SimConfig(CodeParams(64, 1), NetworkParams.line(0.5), cap_factor=0.5)
    res = run_once(cfg)
    assert res.cap_exceeded and math.isinf(res.coding_delay)
    assert res.end_time == pytest.approx(64.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(CodeParams(8), NetworkParams.line(0.5), horizon="fixed")
    with pytest.raises(ValueError):
        SimConfig(CodeParams(8), NetworkParams.line(0.5), horizon="forever")
    with pytest.raises(ValueError):
        SimConfig(CodeParams(8), NetworkParams.line(0.5), precode=PrecodeParams(8, 0.1, 0.1))


def test_average_equals_delay_on_lossless_traffic():
    cfg = lossless(16, q=2)
    avg = estimate_average_delay(cfg, 50, 3, 0.1)
    est = estimate_delay_quantile(cfg, 50, 0.1)
    assert avg.per_code_mean == est.delays
    assert avg.quantile == est.quantile


def test_traffic_mean_variance_scaling():
    cfg = SimConfig(CodeParams(16, 2), NetworkParams.line([0.7, 0.6]), code_seed=5, record_trajectory=False)
    sizes = [2, 8, 32]
    blocks = 100
    variances = []
    for n in sizes:
        means = [_mean_over_traffic((cfg, 5, 10_000 + b * n, n)) for b in range(blocks)]
        variances.append(np.var(means, ddof=1))
    slope = np.polyfit(np.log(sizes), np.log(variances), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.2)


def test_average_vs_delay_quantile_reported():
    # not a universal inequality; recorded for inspection
    cfg = SimConfig(CodeParams(32, 4), NetworkParams.line([0.8, 0.7]))
    avg = estimate_average_delay(cfg, 40, 10, 0.1)
    est = estimate_delay_quantile(cfg, 400, 0.1)
    print(f"average-delay quantile {avg.quantile:.2f}, delay quantile {est.quantile:.2f}")
    assert avg.quantile > 0 and est.quantile > 0


def test_fraction_zero_horizon():
    cfg = SimConfig(CodeParams(32, 4), NetworkParams.line(0.8, horizon=0), horizon="fixed")
    est = measure_undecodable_fraction(cfg, 5, threshold=0.5)
    assert est.fractions == [1.0] * 5


def test_fraction_long_horizon():
    cfg = SimConfig(CodeParams(32, 4), NetworkParams.line(1.0, 2, horizon=2000), horizon="fixed")
    est = measure_undecodable_fraction(cfg, 10, threshold=0.5)
    assert est.fractions == [0.0] * 10


def test_fraction_monotone_in_time():
    cfg = SimConfig(CodeParams(64, 8), NetworkParams.line([0.9, 0.8], horizon=150), horizon="fixed")
    res = run_once(cfg)
    fr = [res.undecodable_fraction_at(t) for t in range(0, 151)]
    assert fr[0] == 1.0
    assert all(a >= b for a, b in zip(fr, fr[1:]))


def test_fraction_variance_shrinks_with_q():
    variances = []
    for q in (8, 16, 32, 64):
        k = 8 * q
        net = NetworkParams.line([0.9, 0.8], horizon=1.2 * k / 0.8)
        est = measure_undecodable_fraction(SimConfig(CodeParams(k, q), net, horizon="fixed"), 100, threshold=0.1)
        variances.append(np.var(est.fractions))
    assert variances == sorted(variances, reverse=True)


def test_fraction_matches_rank_chain_oracle():
    q, alpha, ps = 16, 8, [0.9, 0.8]
    horizon = 1.3 * q * alpha / 0.8
    cfg = SimConfig(CodeParams(q * alpha, q), NetworkParams.line(ps, horizon=horizon), horizon="fixed")
    sim = np.array(measure_undecodable_fraction(cfg, 300, threshold=0.1).fractions)
    ref = markov_undecodable(q, alpha, ps, horizon, 300, seed=11)
    se = math.sqrt(sim.var() / len(sim) + ref.var() / len(ref))
    assert abs(sim.mean() - ref.mean()) < 4 * se


def test_ccp_pipeline_recovers_message():
    net = NetworkParams.line([0.9, 0.8])
    pp = PrecodeParams(256, 0.1, 0.1)
    horizon = 2.0 * pp.n_intermediate / 0.8
    cfg = ccp_config(256, 16, 0.1, 0.1, net.with_horizon(horizon), m=12, horizon="fixed")
    assert cfg.code.k == pp.padded_length(16)
    est = measure_undecodable_fraction(cfg, 20)
    assert est.threshold == pytest.approx(0.11)
    for f, r in zip(est.fractions, est.results):
        if f <= est.threshold:
            assert r.precode_decoded and r.recovered_message == r.message


def test_ccp_decode_mode_stops_at_precode_success():
    net = NetworkParams.line([0.9, 0.8])
    early = 0
    for seed in range(10):
        cfg = ccp_config(128, 8, 0.1, 0.1, net, m=6, code_seed=seed, traffic_seed=seed)
        res = run_ccp(cfg)
        assert res.precode_decoded and res.recovered_message == res.message
        assert res.coding_delay == res.end_time
        early += any(math.isinf(t) for t in res.per_chunk_decode_time)
    # the outer code lets the sink stop before every chunk is complete
    assert early > 0


def test_run_ccp_needs_precode():
    with pytest.raises(ValueError):
        run_ccp(lossless(4))
