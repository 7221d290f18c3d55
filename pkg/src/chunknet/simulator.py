"""Event-driven chunked coding over a line network, and Monte Carlo estimators on top of it.

Nodes ``v_0 .. v_L``; link ``i`` carries packets from ``v_i`` to ``v_{i+1}``.
Every successful transmission on link ``i`` at time ``t`` is built from what
``v_i`` had received strictly before ``t`` and reaches ``v_{i+1}`` at ``t``.

Code randomness and traffic randomness come from disjoint, labeled streams
keyed by ``code_seed`` and ``traffic_seed``; fixing one and varying the other
is how the average coding delay is estimated.
"""

from __future__ import annotations

import math
import random
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .codes import CodeParams, Precode, PrecodeParams, combine
from .gf2 import EliminationState
from .traffic import NetworkParams, TrafficStream, TrafficTrace

__all__ = [
    "AverageDelayEstimate",
    "FractionEstimate",
    "QuantileEstimate",
    "SimConfig",
    "SimResult",
    "ccp_config",
    "estimate_average_delay",
    "estimate_delay_quantile",
    "measure_undecodable_fraction",
    "run_ccp",
    "run_once",
    "run_trials",
]

CODE_LABEL = 0x636F
MESSAGE_LABEL = 0x6D73
PRECODE_LABEL = 0x7072
HORIZONS = ("decode", "fixed")


def labeled_rng(seed: int, label: int) -> random.Random:
    """MT19937 seeded from a SeedSequence over ``(seed, label)``."""
    words = np.random.SeedSequence([int(seed), label]).generate_state(4, np.uint64)
    return random.Random(sum(int(w) << (64 * i) for i, w in enumerate(words)))


@dataclass(frozen=True)
class SimConfig:
    """One simulation: the chunked code, the network, seeds and the stopping rule.

    ``horizon="decode"`` runs until everything is decoded or until
    ``cap_factor * k / capacity`` time units pass; ``"fixed"`` runs to
    ``net.horizon``. With a precode, ``code`` describes the chunked code over
    the padded intermediate vectors (see :func:`ccp_config`).
    """

    code: CodeParams
    net: NetworkParams
    precode: PrecodeParams | None = None
    code_seed: int = 0
    traffic_seed: int = 0
    horizon: str = "decode"
    cap_factor: float = 20.0
    record_trajectory: bool = True

    def __post_init__(self):
        if self.horizon not in HORIZONS:
            raise ValueError(f"horizon must be one of {HORIZONS}")
        if self.horizon == "fixed" and not math.isfinite(self.net.horizon):
            raise ValueError("fixed horizon needs a finite net.horizon")
        if self.cap_factor <= 0:
            raise ValueError("cap_factor must be positive")
        if self.precode is not None:
            padded = self.precode.padded_length(self.code.alpha)
            if self.code.k != padded:
                raise ValueError(
                    f"with a precode the chunked code must span {padded} padded "
                    f"intermediate vectors, got k={self.code.k}"
                )

    @property
    def cap(self) -> float:
        if self.horizon == "fixed":
            return self.net.horizon
        return min(self.net.horizon, self.cap_factor * self.code.k / self.net.capacity)

    @property
    def n_real(self) -> int:
        """Vectors that count toward decoding (padding excluded)."""
        return self.precode.n_intermediate if self.precode else self.code.k

    def with_seeds(self, code_seed: int, traffic_seed: int) -> "SimConfig":
        return replace(self, code_seed=code_seed, traffic_seed=traffic_seed)


def ccp_config(
    k: int,
    alpha: int,
    gamma_a: float,
    gamma_b: float,
    net: NetworkParams,
    c: float = 1.0,
    m: int = 0,
    **kwargs,
) -> SimConfig:
    """Config for a chunked code with precoding: ``k`` messages, chunks of ``alpha``."""
    pp = PrecodeParams(k, gamma_a, gamma_b, c)
    n_pad = pp.padded_length(alpha)
    return SimConfig(CodeParams(n_pad, n_pad // alpha, m), net, precode=pp, **kwargs)


@dataclass
class SimResult:
    coding_delay: float
    cap_exceeded: bool
    end_time: float
    per_chunk_decode_time: list[float]
    chunk_weights: list[int]
    successes: list[int]
    transmissions: list[int] | None = None
    rank_trajectory: list[tuple[float, int]] = field(default_factory=list)
    code_seed: int = 0
    traffic_seed: int = 0
    message: list[int] | None = None
    recovered_message: list[int] | None = None
    recovered_intermediate: dict[int, int] | None = None
    precode_decoded: bool | None = None

    def undecodable_fraction_at(self, t: float) -> float:
        """Share of (non-padding) vectors lying in chunks still undecoded at time ``t``."""
        total = sum(self.chunk_weights)
        missing = sum(w for w, d in zip(self.chunk_weights, self.per_chunk_decode_time) if d > t)
        return missing / total

    @property
    def undecodable_fraction(self) -> float:
        return self.undecodable_fraction_at(self.end_time)


def _windows(cfg: SimConfig, trace: TrafficTrace | None, stream: TrafficStream | None):
    if trace is not None:
        yield trace.events()
        return
    first = 1.25 * cfg.code.k / cfg.net.capacity + 16.0
    yield from stream.windows(min(first, cfg.cap), cfg.cap)


def run_once(cfg: SimConfig, trace: TrafficTrace | None = None) -> SimResult:
    """Simulate one (code, traffic) realization; deterministic in the config's seeds.

    ``trace`` replays recorded traffic instead of sampling it from
    ``traffic_seed``.
    """
    code = cfg.code
    k, q, alpha = code.k, code.q, code.alpha
    L = cfg.net.L if trace is None else trace.L
    payload = code.payload_mode
    rng = labeled_rng(cfg.code_seed, CODE_LABEL)
    getrandbits, randrange = rng.getrandbits, rng.randrange

    precode = Precode.sample(cfg.precode, labeled_rng(cfg.code_seed, PRECODE_LABEL)) if cfg.precode else None
    n_real = cfg.n_real
    message = source = None
    if payload:
        mrng = labeled_rng(cfg.code_seed, MESSAGE_LABEL)
        message = [mrng.getrandbits(code.m) for _ in range(precode.k if precode else k)]
        source = precode.encode(message) if precode else list(message)
        source += [0] * (k - len(source))
    weights = [max(0, min(alpha, n_real - c * alpha)) for c in range(q)]

    relays = [[EliminationState(alpha, payload) for _ in range(q)] for _ in range(L - 1)]
    sink = [EliminationState(alpha, payload) for _ in range(q)]
    decode_time = [math.inf] * q
    trajectory: list[tuple[float, int]] = []
    record = cfg.record_trajectory
    fixed = cfg.horizon == "fixed"
    stream = TrafficStream(cfg.net, cfg.traffic_seed) if trace is None else None

    n_decoded = 0
    total_rank = 0
    recovered_real = 0
    skip_checks = 0
    decoded_chunks: list[int] = []
    coding_delay = math.inf
    done = False
    last = L - 1
    pl = 0

    for times, links in _windows(cfg, trace, stream):
        for t, i in zip(times, links):
            c = randrange(q) if q > 1 else 0
            if i == 0:
                coeff = getrandbits(alpha)
                if payload:
                    pl = combine(source, coeff, c * alpha)
            else:
                st = relays[i - 1][c]
                r = len(st.rows)
                if r == 0:
                    continue
                if r == alpha and not payload:
                    coeff = getrandbits(alpha)
                else:
                    mask = getrandbits(r)
                    coeff = combine(st.rows, mask)
                    if payload:
                        pl = combine(st.payloads, mask)
            if not coeff:
                continue
            if i != last:
                relays[i][c].insert(coeff, pl)
                continue
            st = sink[c]
            if not st.insert(coeff, pl):
                continue
            total_rank += 1
            if record:
                trajectory.append((t, total_rank))
            if len(st.rows) < alpha:
                continue
            decode_time[c] = t
            n_decoded += 1
            decoded_chunks.append(c)
            if done:
                continue
            if precode is None:
                if n_decoded == q:
                    done, coding_delay = True, t
            else:
                recovered_real += weights[c]
                if recovered_real >= precode.k:
                    if skip_checks:
                        skip_checks -= 1
                    else:
                        deficit = precode.deficit(_chunk_indices(decoded_chunks, alpha, n_real))
                        if deficit == 0:
                            done, coding_delay = True, t
                        else:
                            skip_checks = -(-deficit // alpha) - 1
            if done and not fixed:
                break
        if done and not fixed:
            break

    end_time = coding_delay if (done and not fixed) else cfg.cap
    if trace is not None:
        successes = [int(np.count_nonzero(x <= end_time)) for x in trace.times]
        transmissions = None
    else:
        transmissions, successes = stream.counts(end_time)

    result = SimResult(
        coding_delay=coding_delay,
        cap_exceeded=not done and not fixed,
        end_time=end_time,
        per_chunk_decode_time=decode_time,
        chunk_weights=weights,
        successes=successes,
        transmissions=transmissions,
        rank_trajectory=trajectory,
        code_seed=cfg.code_seed,
        traffic_seed=cfg.traffic_seed,
        message=message,
    )
    if precode is not None:
        result.precode_decoded = done
    if payload:
        decoded = {}
        for c in decoded_chunks:
            for j, v in enumerate(sink[c].solve()):
                decoded[c * alpha + j] = v
        if precode is None:
            if done:
                result.recovered_message = [decoded[j] for j in range(k)]
        else:
            result.recovered_intermediate = {j: v for j, v in decoded.items() if j < n_real}
            if done:
                result.recovered_message = precode.decode(result.recovered_intermediate)
    return result


def _chunk_indices(chunks: Sequence[int], alpha: int, n_real: int) -> list[int]:
    out = []
    for c in chunks:
        out.extend(range(c * alpha, min((c + 1) * alpha, n_real)))
    return out


def run_ccp(cfg: SimConfig, trace: TrafficTrace | None = None) -> SimResult:
    """Chunked code with precoding: delay is the first time the precode can decode."""
    if cfg.precode is None:
        raise ValueError("run_ccp needs a config with a precode")
    return run_once(cfg, trace)


# ---------------------------------------------------------------- Monte Carlo


def _run_seeds(args: tuple[SimConfig, int, int]) -> SimResult:
    cfg, cs, ts = args
    return run_once(cfg.with_seeds(cs, ts))


def _map(fn: Callable, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def run_trials(cfg: SimConfig, trials: int, workers: int = 1) -> list[SimResult]:
    """Trial ``i`` uses ``code_seed + i`` and ``traffic_seed + i``; order is by trial index."""
    base = replace(cfg, record_trajectory=False)
    items = [(base, cfg.code_seed + i, cfg.traffic_seed + i) for i in range(trials)]
    return _map(_run_seeds, items, workers)


@dataclass
class QuantileEstimate:
    quantile: float
    ci_low: float
    ci_high: float
    level: float
    trials: int
    delays: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.delays))


def _order_stat_quantile(values: Sequence[float], eps: float, z: float = 1.96) -> tuple[float, float, float]:
    """(1-eps)-quantile as an order statistic, with a normal-approximation binomial CI on the rank."""
    xs = sorted(values)
    n = len(xs)
    level = 1.0 - eps
    idx = min(max(math.ceil(level * n - 1e-9), 1), n) - 1
    half = z * math.sqrt(n * eps * (1 - eps))
    lo = min(max(math.floor(level * n - half), 1), n) - 1
    hi = min(max(math.ceil(level * n + half), 1), n) - 1
    return xs[idx], xs[lo], xs[hi]


def estimate_delay_quantile(cfg: SimConfig, trials: int, eps: float, workers: int = 1) -> QuantileEstimate:
    """Empirical (1-eps)-quantile of the coding delay over joint code and traffic randomness."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if trials < 1.0 / eps:
        warnings.warn(f"{trials} trials is fewer than 1/eps = {1 / eps:.0f}; the quantile is the sample maximum")
    delays = [r.coding_delay for r in run_trials(cfg, trials, workers)]
    qv, lo, hi = _order_stat_quantile(delays, eps)
    return QuantileEstimate(qv, lo, hi, 1.0 - eps, trials, delays)


@dataclass
class AverageDelayEstimate:
    quantile: float
    ci_low: float
    ci_high: float
    level: float
    per_code_mean: list[float]
    code_trials: int
    traffic_trials: int


def _mean_over_traffic(args: tuple[SimConfig, int, int, int]) -> float:
    cfg, cs, ts0, n = args
    return float(np.mean([run_once(cfg.with_seeds(cs, ts0 + j)).coding_delay for j in range(n)]))


def estimate_average_delay(
    cfg: SimConfig, code_trials: int, traffic_trials: int, eps: float, workers: int = 1
) -> AverageDelayEstimate:
    """(1-eps)-quantile over codes of the traffic-averaged coding delay.

    Code ``i`` is ``code_seed + i``; every code is averaged over traffic seeds
    ``traffic_seed .. traffic_seed + traffic_trials - 1``.
    """
    if code_trials < 1 or traffic_trials < 1:
        raise ValueError("code_trials and traffic_trials must be >= 1")
    base = replace(cfg, record_trajectory=False)
    items = [(base, cfg.code_seed + i, cfg.traffic_seed, traffic_trials) for i in range(code_trials)]
    means = _map(_mean_over_traffic, items, workers)
    qv, lo, hi = _order_stat_quantile(means, eps)
    return AverageDelayEstimate(qv, lo, hi, 1.0 - eps, means, code_trials, traffic_trials)


@dataclass
class FractionEstimate:
    mean: float
    exceed_rate: float
    threshold: float
    fractions: list[float]
    results: list[SimResult] = field(repr=False, default_factory=list)


def measure_undecodable_fraction(
    cfg: SimConfig, trials: int, threshold: float | None = None, workers: int = 1
) -> FractionEstimate:
    """Mean undecodable fraction at ``net.horizon`` and how often it exceeds ``threshold``.

    ``threshold`` defaults to the precode's designed erasure fraction.
    """
    if cfg.horizon != "fixed":
        raise ValueError("measure_undecodable_fraction needs horizon='fixed'")
    if threshold is None:
        if cfg.precode is None:
            raise ValueError("threshold required without a precode")
        threshold = cfg.precode.erasure_fraction
    results = run_trials(cfg, trials, workers)
    fr = [r.undecodable_fraction for r in results]
    return FractionEstimate(float(np.mean(fr)), float(np.mean([f > threshold for f in fr])), threshold, fr, results)
