"""Per-link transmission and loss processes for a line network.

Every link owns an independent numpy ``Generator`` derived from
``(traffic_seed, TRAFFIC_LABEL, link_index)``. A link's randomness is an
infinite sequence consumed in fixed batches of ``BATCH`` draws, so a trace cut
at any horizon is a prefix of the same realization. The simulator reads the
stream lazily and :func:`sample_trace` materializes it; both see identical
events for the same seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "LinkParams",
    "NetworkParams",
    "TrafficStream",
    "TrafficTrace",
    "make_unequal_params",
    "read_trace_csv",
    "sample_trace",
    "write_trace_csv",
]

SCHEDULES = ("deterministic", "poisson")
TRAFFIC_LABEL = 0x7472
BATCH = 256


@dataclass(frozen=True)
class LinkParams:
    p: float
    schedule: str = "deterministic"
    lam: float = 1.0

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"success probability p={self.p} outside (0, 1]")
        if self.schedule == "poisson" and not 0.0 < self.lam <= 1.0:
            raise ValueError(f"poisson rate lam={self.lam} outside (0, 1]")

    @property
    def rate(self) -> float:
        """Expected successes per time unit."""
        return self.p * (self.lam if self.schedule == "poisson" else 1.0)


@dataclass(frozen=True)
class NetworkParams:
    links: tuple[LinkParams, ...]
    horizon: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        if len(self.links) < 1:
            raise ValueError("a line network needs at least one link")
        if not self.horizon >= 0:
            raise ValueError("horizon must be non-negative")

    @classmethod
    def line(
        cls,
        p: float | Sequence[float],
        L: int | None = None,
        schedule: str = "deterministic",
        lam: float | Sequence[float] = 1.0,
        horizon: float = math.inf,
    ) -> "NetworkParams":
        """Line network from scalar or per-link ``p`` / ``lam``."""
        ps = [p] * (L or 1) if np.isscalar(p) else list(p)
        if L is not None and len(ps) != L:
            raise ValueError(f"got {len(ps)} success probabilities for L={L}")
        lams = [lam] * len(ps) if np.isscalar(lam) else list(lam)
        if len(lams) != len(ps):
            raise ValueError("lam and p lengths differ")
        links = tuple(LinkParams(float(pi), schedule, float(li)) for pi, li in zip(ps, lams))
        return cls(links, horizon)

    @property
    def L(self) -> int:
        return len(self.links)

    @property
    def capacity(self) -> float:
        return min(link.rate for link in self.links)

    def with_horizon(self, horizon: float) -> "NetworkParams":
        return NetworkParams(self.links, horizon)


def link_generator(traffic_seed: int, link_index: int) -> np.random.Generator:
    return np.random.default_rng([int(traffic_seed), TRAFFIC_LABEL, int(link_index)])


class _LinkStream:
    """Lazily extended transmission/success record of one link."""

    def __init__(self, link: LinkParams, rng: np.random.Generator):
        self.link = link
        self.rng = rng
        self.poisson = link.schedule == "poisson"
        self._tx_times: list[np.ndarray] = []
        self._ok: list[np.ndarray] = []
        self.last_time = 0.0

    def _extend(self) -> None:
        rng = self.rng
        if self.poisson:
            gaps = rng.exponential(1.0 / self.link.lam, BATCH)
            times = self.last_time + np.cumsum(gaps)
        else:
            start = int(self.last_time)
            times = np.arange(start + 1, start + BATCH + 1, dtype=np.float64)
        ok = rng.random(BATCH) < self.link.p
        self._tx_times.append(times)
        self._ok.append(ok)
        self.last_time = float(times[-1])

    def cover(self, t: float) -> None:
        while self.last_time < t:
            self._extend()

    def successes(self, t0: float, t1: float) -> np.ndarray:
        """Success times in the half-open window (t0, t1]."""
        self.cover(t1)
        out = []
        for times, ok in zip(self._tx_times, self._ok):
            if times[-1] <= t0:
                continue
            if times[0] > t1:
                break
            sel = ok & (times > t0) & (times <= t1)
            out.append(times[sel])
        return np.concatenate(out) if out else np.empty(0)

    def counts(self, t: float) -> tuple[int, int]:
        """(transmissions, successes) in (0, t]."""
        self.cover(t)
        tx = ok = 0
        for times, good in zip(self._tx_times, self._ok):
            if times[0] > t:
                break
            sel = times <= t
            tx += int(sel.sum())
            ok += int((good & sel).sum())
        return tx, ok


class TrafficStream:
    """Merged, time-ordered success events of all links, produced window by window.

    Events at equal times are ordered by descending link index: an emission on
    link ``i`` at time ``t`` then never sees what node ``i`` received at ``t``.
    """

    def __init__(self, net: NetworkParams, traffic_seed: int):
        self.net = net
        self.links = [_LinkStream(link, link_generator(traffic_seed, i)) for i, link in enumerate(net.links)]

    def windows(self, first: float, horizon: float) -> Iterator[tuple[list[float], list[int]]]:
        t0, width = 0.0, max(float(first), 1.0)
        while t0 < horizon:
            t1 = min(t0 + width, horizon)
            times, links = [], []
            for i, ls in enumerate(self.links):
                s = ls.successes(t0, t1)
                times.append(s)
                links.append(np.full(len(s), i, dtype=np.int64))
            t = np.concatenate(times)
            li = np.concatenate(links)
            order = np.lexsort((-li, t))
            yield t[order].tolist(), li[order].tolist()
            t0 = t1
            width *= 2

    def counts(self, t: float) -> tuple[list[int], list[int]]:
        tx, ok = zip(*(ls.counts(t) for ls in self.links))
        return list(tx), list(ok)


@dataclass
class TrafficTrace:
    """Success times per link on (0, horizon]; transmission counts when known."""

    horizon: float
    times: list[np.ndarray]
    transmissions: list[int] | None = None
    schedules: tuple[str, ...] = field(default=())

    @property
    def L(self) -> int:
        return len(self.times)

    def success_counts(self) -> list[int]:
        return [len(t) for t in self.times]

    def events(self) -> tuple[list[float], list[int]]:
        """All events merged in simulator order (time ascending, link descending)."""
        t = np.concatenate(self.times) if self.times else np.empty(0)
        li = np.concatenate([np.full(len(x), i, dtype=np.int64) for i, x in enumerate(self.times)])
        order = np.lexsort((-li, t))
        return t[order].tolist(), li[order].tolist()


def sample_trace(net: NetworkParams, traffic_seed: int) -> TrafficTrace:
    """Realize the traffic on (0, net.horizon] for ``traffic_seed``."""
    if not math.isfinite(net.horizon):
        raise ValueError("sample_trace needs a finite horizon")
    stream = TrafficStream(net, traffic_seed)
    times = [ls.successes(0.0, net.horizon) for ls in stream.links]
    tx, _ = stream.counts(net.horizon)
    return TrafficTrace(net.horizon, times, tx, tuple(link.schedule for link in net.links))


def make_unequal_params(L: int, p_min: float, gamma_e: float) -> list[float]:
    """Strictly decreasing success probabilities spaced by ``gamma_e`` ending at ``p_min``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if not 0.0 < p_min <= 1.0:
        raise ValueError("p_min must lie in (0, 1]")
    if L > 1 and not gamma_e > 0:
        raise ValueError("gamma_e must be positive")
    top = p_min + (L - 1) * gamma_e
    if top > 1.0 + 1e-12:
        raise ValueError(f"infeasible gap: p_min + (L-1)*gamma_e = {top} > 1")
    return [min(p_min + (L - 1 - i) * gamma_e, 1.0) for i in range(L)]


def write_trace_csv(trace: TrafficTrace, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["link_index", "time"])
        for i, times in enumerate(trace.times):
            integral = trace.schedules[i] == "deterministic" if trace.schedules else False
            for t in times.tolist():
                w.writerow([i, int(t) if integral else repr(t)])


def read_trace_csv(path: str | Path, horizon: float | None = None) -> TrafficTrace:
    per_link: dict[int, list[float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            per_link.setdefault(int(row["link_index"]), []).append(float(row["time"]))
    L = max(per_link) + 1 if per_link else 0
    times = [np.asarray(sorted(per_link.get(i, [])), dtype=np.float64) for i in range(L)]
    for t in times:
        if len(t) and np.any(np.diff(t) <= 0):
            raise ValueError("success times must be strictly increasing per link")
    if horizon is None:
        horizon = max((float(t[-1]) for t in times if len(t)), default=0.0)
    return TrafficTrace(horizon, times)
