"""Random block lower-triangular (RBLT) matrices and their rank-deficiency bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .gf2 import BitMatrix, random_rows, rank_of_rows

__all__ = [
    "BoundValue",
    "DeficiencyEstimate",
    "RbltSpec",
    "estimate_rank_deficiency",
    "lemma2_bound",
    "lemma3_bound",
    "sample_rblt",
]

UPPER_FILLS = ("zeros", "uniform")


@dataclass(frozen=True)
class RbltSpec:
    """``w`` block rows of height ``r``; block column ``j`` has width ``r_list[j]``.

    Blocks on or below the diagonal are uniform; blocks above it are zero or
    uniform according to ``upper_fill``.
    """

    w: int
    r: int
    r_list: tuple[int, ...]
    upper_fill: str = "zeros"

    def __post_init__(self):
        object.__setattr__(self, "r_list", tuple(int(x) for x in self.r_list))
        if len(self.r_list) != self.w:
            raise ValueError(f"r_list has {len(self.r_list)} entries, expected w={self.w}")
        if self.r < 0 or any(x < 0 for x in self.r_list):
            raise ValueError("block sizes must be non-negative")
        if self.upper_fill not in UPPER_FILLS:
            raise ValueError(f"upper_fill must be one of {UPPER_FILLS}")

    @property
    def n_rows(self) -> int:
        return self.w * self.r

    @property
    def n_cols(self) -> int:
        return sum(self.r_list)

    @property
    def r_max(self) -> int:
        return max(self.r_list, default=0)

    @property
    def r_min(self) -> int:
        return min(self.r_list, default=0)


class BoundValue(NamedTuple):
    value: float
    vacuous: bool


class DeficiencyEstimate(NamedTuple):
    frequency: float
    half_width: float
    trials: int
    failures: int


def _prefix_masks(spec: RbltSpec) -> list[int]:
    masks, width = [], 0
    for rj in spec.r_list:
        width += rj
        masks.append((1 << width) - 1)
    return masks


def _sample_rows(spec: RbltSpec, rng: np.random.Generator) -> list[int]:
    # Same draws for both fill modes; zeros mode just masks the upper blocks.
    rows = random_rows(rng, spec.n_rows, spec.n_cols)
    if spec.upper_fill == "zeros":
        masks = _prefix_masks(spec)
        r = spec.r
        for i in range(spec.w):
            m = masks[i]
            for a in range(i * r, (i + 1) * r):
                rows[a] &= m
    return rows


def sample_rblt(spec: RbltSpec, rng: np.random.Generator) -> BitMatrix:
    return BitMatrix(spec.n_rows, spec.n_cols, tuple(_sample_rows(spec, rng)))


def _bound(u: int, factor_bits: int, exponent: int) -> BoundValue:
    value = float(u * (1 - Fraction(1, 2 ** factor_bits)) * Fraction(2) ** exponent)
    return BoundValue(value, value >= 1.0)


def lemma2_bound(spec: RbltSpec, gamma: int) -> BoundValue:
    """Upper bound on Pr{rank < n - gamma} for tall specs (every r_j <= r), n = sum r_j."""
    n, r, w = spec.n_cols, spec.r, spec.w
    if any(x > r for x in spec.r_list):
        raise ValueError("lemma 2 needs r_j <= r for every block column")
    if not 0 <= gamma <= n - 1:
        raise ValueError(f"gamma must lie in [0, {n - 1}]")
    r_min = spec.r_min
    if r_min == 0:
        raise ValueError("r_min = 0 leaves u undefined")
    u = math.ceil((n - gamma) / r_min)
    return _bound(u, spec.r_max, -gamma + n - w * r + (r - r_min) * (u - 1))


def lemma3_bound(spec: RbltSpec, gamma: int) -> BoundValue:
    """Upper bound on Pr{rank < n - gamma} for wide specs (every r_j >= r), n = w*r."""
    n, r, w = spec.n_rows, spec.r, spec.w
    if any(x < r for x in spec.r_list):
        raise ValueError("lemma 3 needs r_j >= r for every block column")
    if not 0 <= gamma <= n - 1:
        raise ValueError(f"gamma must lie in [0, {n - 1}]")
    if r == 0:
        raise ValueError("r = 0 leaves u undefined")
    r_min = spec.r_min
    u = math.ceil((n - gamma) / r)
    return _bound(u, r, -gamma + n - w * r_min + (r_min - r) * (u - 1))


def estimate_rank_deficiency(
    spec: RbltSpec,
    gamma: int,
    n_target: int,
    trials: int,
    rng: np.random.Generator,
) -> DeficiencyEstimate:
    """Fraction of sampled matrices with rank < n_target - gamma, with a 3-sigma half-width."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    threshold = n_target - gamma
    failures = 0
    if threshold > 0:
        for _ in range(trials):
            if rank_of_rows(_sample_rows(spec, rng)) < threshold:
                failures += 1
    freq = failures / trials
    # Floor the variance at one event so a zero count still gets a usable width.
    var = max(freq * (1 - freq), 1.0 / trials) / trials
    return DeficiencyEstimate(freq, 3.0 * math.sqrt(var), trials, failures)


def bound_for(spec: RbltSpec, gamma: int) -> tuple[str, BoundValue]:
    """Pick whichever lemma applies to ``spec`` (lemma 2 when both do)."""
    if all(x <= spec.r for x in spec.r_list):
        return "lemma2", lemma2_bound(spec, gamma)
    if all(x >= spec.r for x in spec.r_list):
        return "lemma3", lemma3_bound(spec, gamma)
    raise ValueError("spec is neither tall (r_j <= r) nor wide (r_j >= r)")


def target_size(spec: RbltSpec, lemma: str) -> int:
    return spec.n_cols if lemma == "lemma2" else spec.n_rows

