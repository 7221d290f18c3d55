"""Closed-form delay and overhead curves for chunked codes on line networks.

The bounds are asymptotic statements, so turning them into numbers needs
fixed conventions. Every report carries them:

* ``(1 + o(1))`` factors are dropped;
* implied constants of ``O``, ``Omega``, ``o`` and ``~`` are 1;
* ``log`` is base 2, except the natural log inside ``gamma_star``;
* the partition count ``w`` is evaluated from its stated form, then rounded
  up and floored at ``L``.

These are analytic curves under the stated conventions, not guarantees for
any finite ``k``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

__all__ = [
    "BoundInputs",
    "BoundReport",
    "CONVENTIONS",
    "FeasibilityReport",
    "PartitionScheme",
    "TABLE_ROWS",
    "TableRow",
    "bottleneck",
    "ccp_delay_bound",
    "delay_bound",
    "feasibility",
    "gamma_star",
    "minimize_w",
    "overhead_table",
    "partition_scheme",
    "poisson_adjust",
]

CONVENTIONS = {
    "o(1)": "(1+o(1)) factors dropped",
    "constants": "implied constants of O, Omega, o and ~ set to 1",
    "log": "base 2",
    "gamma_star_log": "natural",
    "w": "stated form evaluated exactly, then ceil and floored at L",
}

F_CHOICES = ("gamma_e_log2", "log2", "sqrt")
DEFAULT_THRESHOLD = 0.1


def log2(x: float) -> float:
    return math.log2(x)


@dataclass(frozen=True)
class BoundInputs:
    """Scalar parameters shared by every evaluator.

    ``p`` is the bottleneck success rate (min p_i, or min lam_i p_i after
    :func:`poisson_adjust`). ``gamma_e`` is the smallest gap between
    consecutive success parameters. ``c`` is the second-order constant of the
    precode expansion.
    """

    k: int
    L: int
    eps: float
    q: int = 1
    p: float = 1.0
    gamma_e: float | None = None
    gamma_a: float | None = None
    gamma_b: float | None = None
    gamma_c: float | None = None
    lam: float = 1.0
    f_choice: str = "gamma_e_log2"
    c: float = 1.0
    p_list: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.k < 1 or self.L < 1 or self.q < 1:
            raise ValueError("k, L and q must be positive")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must lie in (0, 1]")
        for name in ("gamma_a", "gamma_b", "gamma_c"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.gamma_e is not None and not 0.0 < self.gamma_e <= 1.0:
            raise ValueError("gamma_e must lie in (0, 1]")
        if self.f_choice not in F_CHOICES:
            raise ValueError(f"f_choice must be one of {F_CHOICES}")
        if self.p_list is not None:
            object.__setattr__(self, "p_list", tuple(float(x) for x in self.p_list))

    @classmethod
    def from_links(cls, k: int, eps: float, p_list: Sequence[float], **kwargs) -> "BoundInputs":
        """Derive ``L``, ``p`` and (for distinct values) ``gamma_e`` from per-link success rates."""
        ps = sorted((float(x) for x in p_list), reverse=True)
        gaps = [a - b for a, b in zip(ps, ps[1:])]
        gamma_e = min(gaps) if gaps and min(gaps) > 0 else None
        kwargs.setdefault("gamma_e", gamma_e)
        return cls(k=k, L=len(ps), eps=eps, p=min(ps), p_list=tuple(p_list), **kwargs)

    @property
    def alpha(self) -> float:
        return self.k / self.q

    def f(self, k: float | None = None) -> float:
        k = self.k if k is None else k
        if self.f_choice == "gamma_e_log2":
            return self._need("gamma_e") * log2(k)
        if self.f_choice == "log2":
            return log2(k)
        return math.sqrt(k)

    def _need(self, name: str) -> float:
        v = getattr(self, name)
        if v is None:
            raise ValueError(f"{name} is required here")
        return v

    def to_dict(self) -> dict:
        return asdict(self)


def gamma_star(phi: float, w_T: float, eps: float) -> float:
    """Chernoff deviation sqrt((2/phi) ln(2 w_T / eps)); values >= 1 leave no usable partition."""
    if phi <= 0:
        raise ValueError("phi must be positive")
    return math.sqrt((2.0 / phi) * math.log(2.0 * w_T / eps))


@dataclass
class PartitionScheme:
    w: int
    w_T: int
    phi: list[float]
    gamma_star: list[float]
    r: list[int]

    @property
    def valid(self) -> bool:
        return self.w_T >= 1 and all(0 < g < 1 for g in self.gamma_star)


def partition_scheme(inp: BoundInputs, N_T: float, w: int) -> PartitionScheme:
    """Per-link expected chunk counts per partition, their deviations and floors."""
    w_T = inp.L * (w - inp.L + 1)
    ps = inp.p_list if inp.p_list is not None else (inp.p,) * inp.L
    phi = [p * N_T / (w * inp.q) for p in ps]
    gs = [gamma_star(x, max(w_T, 1) * inp.q, inp.eps) if x > 0 else math.inf for x in phi]
    r = [math.floor((1 - g) * x) if g < 1 else 0 for g, x in zip(gs, phi)]
    return PartitionScheme(w, w_T, phi, gs, r)


@dataclass
class BoundReport:
    theorem: int
    value: float
    capacity_time: float
    overhead: float
    w_raw: float | None
    w: int | None
    flags: list[str] = field(default_factory=list)
    feasibility: dict[str, float] = field(default_factory=dict)
    extras: dict[str, float] = field(default_factory=dict)
    partition: dict | None = None
    inputs: dict = field(default_factory=dict)
    conventions: dict = field(default_factory=lambda: dict(CONVENTIONS))

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _round_w(w_raw: float, L: int) -> int:
    return max(math.ceil(w_raw), L)


def _w_raw(thm: int, inp: BoundInputs, q: int) -> float:
    k, L = inp.k, inp.L
    lg = log2(k * L / inp.eps)
    if thm in (1, 5):
        return (k * L * L / (q * lg)) ** (1 / 3)
    if thm in (2, 6):
        return (k * L / (q * lg)) ** 0.5
    ge = inp._need("gamma_e")
    if thm in (3, 7):
        return ge * (k * L * L / (q * lg)) ** (1 / 3)
    return ge * k / (q * inp.f() * lg)


def _cc_terms(thm: int, inp: BoundInputs, q: int, w: float) -> list[float]:
    """The overhead terms (times p) of the CC bound family, one-chunk case included."""
    k, L = inp.k, inp.L
    a = w * q * log2(w * q * L / inp.eps)
    kind = (thm - 1) % 4
    if kind == 0:
        return [k * L / w, math.sqrt(k * a), a]
    if kind == 1:
        return [k * L / w, a]
    if kind == 2:
        return [k * L / w, math.sqrt(k * a)]
    return [k * L / w]


def _cc_value(thm: int, inp: BoundInputs, q: int, w: float) -> float:
    return (inp.k + sum(_cc_terms(thm, inp, q, w))) / inp.p


def delay_bound(thm: int, inp: BoundInputs) -> BoundReport:
    """Evaluate a stand-alone code bound; 1-4 are the one-chunk (dense) cases of 5-8."""
    if thm not in range(1, 9):
        raise ValueError(f"theorem must be 1..8, got {thm}")
    q = 1 if thm <= 4 else inp.q
    w_raw = _w_raw(thm, inp, q)
    w = _round_w(w_raw, inp.L)
    value = _cc_value(thm, inp, q, w)
    flags = []
    if math.ceil(w_raw) < inp.L:
        flags.append(f"infeasible w: stated form gives {w_raw:.4g} < L={inp.L}; evaluated at w=L")
    scheme = partition_scheme(replace(inp, q=q), value, w)
    if not scheme.valid:
        flags.append("gamma_star >= 1: partition scheme infeasible at this N_T")
    feas = feasibility(replace(inp, q=q), f"thm{thm}")
    flags += feas.warnings
    return BoundReport(
        theorem=thm,
        value=value,
        capacity_time=inp.k / inp.p,
        overhead=value - inp.k / inp.p,
        w_raw=w_raw,
        w=w,
        flags=flags,
        feasibility=feas.ratios,
        partition=asdict(scheme),
        inputs=inp.to_dict(),
    )


def minimize_w(thm: int, inp: BoundInputs, w_max: int | None = None) -> tuple[int, float]:
    """Not part of the theorems: exhaustive search for the w minimizing the bound (for plots)."""
    if thm not in range(1, 9):
        raise ValueError(f"theorem must be 1..8, got {thm}")
    q = 1 if thm <= 4 else inp.q
    w_max = w_max or max(inp.L, inp.k)
    best = min(range(inp.L, w_max + 1), key=lambda w: _cc_value(thm, inp, q, w))
    return best, _cc_value(thm, inp, q, best)


def ccp_delay_bound(inp: BoundInputs) -> BoundReport:
    """(1+gamma_c)(1+(1+gamma_a)gamma_b + c gamma_b^2) k/p, shared by the four precoded cases."""
    ga, gb, gc = inp._need("gamma_a"), inp._need("gamma_b"), inp._need("gamma_c")
    gamma_o_prime = (1 + ga) * gb + inp.c * gb * gb
    gamma_o = gc + (1 + gc) * gamma_o_prime
    value = (1 + gc) * (1 + gamma_o_prime) * inp.k / inp.p
    feas = feasibility(inp, "thm9")
    return BoundReport(
        theorem=9,
        value=value,
        capacity_time=inp.k / inp.p,
        overhead=value - inp.k / inp.p,
        w_raw=None,
        w=None,
        flags=list(feas.warnings),
        feasibility=feas.ratios,
        extras={
            "gamma_o": gamma_o,
            "gamma_o_prime": gamma_o_prime,
            "precode_rate_construction": 1 - (1 + ga) * gb,
            "precode_rate_theorem_statement": 1 - ga,
            "n_intermediate_factor": 1 + gamma_o_prime,
        },
        inputs=inp.to_dict(),
    )


@dataclass
class FeasibilityReport:
    scenario: str
    ratios: dict[str, float]
    warnings: list[str]
    threshold: float


def _conditions(inp: BoundInputs) -> dict[str, Callable[[], float]]:
    """Each condition as a ratio oriented so that small means comfortably satisfied."""
    k, L, q, a, eps = inp.k, inp.L, inp.q, inp.alpha, inp.eps
    lg = log2(k * L / eps)

    def w_cond(thm):
        w = _round_w(_w_raw(thm, inp, q), L)
        w_T = L * (w - L + 1)
        ratio = w * q * log2(max(w_T, 1) * q / eps) / k
        return ratio / inp._need("gamma_e") if thm in (3, 4, 7, 8) else ratio

    g = inp._need
    conds = {
        "w_condition_1": lambda: w_cond(5),
        "w_condition_2": lambda: w_cond(6),
        "w_condition_3": lambda: w_cond(7),
        "w_condition_4": lambda: w_cond(8),
        "q_capacity": lambda: q * L * lg / k,
        "q_capacity_unequal": lambda: q * L * lg / (g("gamma_e") ** 3 * k),
        "q_capacity_unequal_avg": lambda: q * inp.f() * L * lg / (g("gamma_e") * k),
        "lemma5": lambda: (a * a / (g("gamma_a") ** 2 * g("gamma_b") ** 2)) / (k / log2(1 / eps)),
        "alpha_L4": lambda: L ** 4 * log2(L / g("gamma_b")) / a,
        "alpha_gamma_c3": lambda: (L / g("gamma_c") ** 3) * log2(L / (g("gamma_b") * g("gamma_c"))) / a,
        "alpha_gamma_c": lambda: (L / g("gamma_c")) * log2(L / (g("gamma_b") * g("gamma_c"))) / a,
        "alpha_gamma_e3": lambda: (L / g("gamma_e") ** 3) * log2(L / (g("gamma_e") * g("gamma_b"))) / a,
        "alpha_gamma_e2_c": lambda: (L / (g("gamma_e") ** 2 * g("gamma_c")))
        * log2(L / (g("gamma_b") * g("gamma_c"))) / a,
    }
    return {name: _inf_on_zero(fn) for name, fn in conds.items()}


def _inf_on_zero(fn: Callable[[], float]) -> Callable[[], float]:
    # A zero gap or zero gamma makes a condition unsatisfiable, not an error.
    def wrapped():
        try:
            return fn()
        except ZeroDivisionError:
            return math.inf

    return wrapped


SCENARIOS = {
    "thm1": ("w_condition_1", "q_capacity"),
    "thm2": ("w_condition_2", "q_capacity"),
    "thm3": ("w_condition_3", "q_capacity_unequal"),
    "thm4": ("w_condition_4", "q_capacity_unequal_avg"),
    "thm5": ("w_condition_1", "q_capacity"),
    "thm6": ("w_condition_2", "q_capacity"),
    "thm7": ("w_condition_3", "q_capacity_unequal"),
    "thm8": ("w_condition_4", "q_capacity_unequal_avg"),
    "thm9": ("alpha_gamma_c3", "alpha_L4", "lemma5"),
    "thm10": ("alpha_gamma_c", "lemma5"),
    "thm11": ("alpha_gamma_c3", "alpha_gamma_e3", "lemma5"),
    "thm12": ("alpha_gamma_e2_c", "lemma5"),
    "lemma5": ("lemma5",),
}


def feasibility(inp: BoundInputs, scenario: str, threshold: float = DEFAULT_THRESHOLD) -> FeasibilityReport:
    """Ratios of each asymptotic side condition (constants = 1) with a warning above ``threshold``."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {sorted(SCENARIOS)}")
    conds = _conditions(inp)
    ratios, warnings = {}, []
    for name in SCENARIOS[scenario]:
        try:
            ratios[name] = conds[name]()
        except ValueError as exc:
            warnings.append(f"{name}: not evaluated ({exc})")
            continue
        if ratios[name] > threshold:
            warnings.append(f"{name}: ratio {ratios[name]:.4g} > {threshold}")
    return FeasibilityReport(scenario, ratios, warnings, threshold)


@dataclass
class TableRow:
    row: str
    quantity: str
    value: float
    w: int | None = None
    m: float | None = None
    alpha_condition: float | None = None
    alpha_upper_condition: float | None = None

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


TABLE_ROWS = (
    "I.det.eta",
    "I.det.etabar",
    "I.arb.eta",
    "I.arb.etabar",
    "I.uneq.eta",
    "I.uneq.etabar",
    "II.det",
    "II.arb.eta",
    "II.arb.etabar",
    "II.uneq.eta",
    "II.uneq.etabar",
)


def overhead_table(row: str, inp: BoundInputs) -> TableRow:
    """Evaluate one comparison-table row, written in terms of the chunk size alpha = k/q."""
    if row not in TABLE_ROWS:
        raise ValueError(f"unknown table row {row!r}; choose from {TABLE_ROWS}")
    k, L, eps, p, a = inp.k, inp.L, inp.eps, inp.p, inp.alpha
    lg = log2(k * L / eps)
    quantity = "etabar" if row.endswith("etabar") else "eta"
    conds = _conditions(inp)

    if row.startswith("I.det"):
        value = k * L * (lg / a) ** (1 / 3)
        return TableRow(row, "eta=etabar", value, alpha_condition=L ** 3 * lg / a)

    if row.startswith("I."):
        if row == "I.arb.eta":
            w_raw = (a * L * L / lg) ** (1 / 3)
        elif row == "I.arb.etabar":
            w_raw = (a * L / lg) ** 0.5
        elif row == "I.uneq.eta":
            w_raw = (inp._need("gamma_e") ** 3 * a * L * L / lg) ** (1 / 3)
        else:
            w_raw = inp._need("gamma_e") * a / (inp.f() * lg)
        w = _round_w(w_raw, L)
        m = (k * w / a) * log2(k * L * w / (a * eps))
        terms = {
            "I.arb.eta": [k * L / w, math.sqrt(k * m), m],
            "I.arb.etabar": [k * L / w, m],
            "I.uneq.eta": [k * L / w, math.sqrt(k * m)],
            "I.uneq.etabar": [k * L / w],
        }[row]
        alpha_cond = {
            "I.arb.eta": L * lg / a,
            "I.arb.etabar": L * lg / a,
            "I.uneq.eta": (L / inp._need("gamma_e") ** 3) * lg / a,
            "I.uneq.etabar": inp.f() * (L / inp._need("gamma_e")) * lg / a,
        }[row]
        return TableRow(row, quantity, sum(terms) / p, w=w, m=m, alpha_condition=alpha_cond)

    ccp = ccp_delay_bound(inp)
    gamma_o = ccp.extras["gamma_o"]
    upper = conds["lemma5"]()
    if row == "II.det":
        gb, gc = inp._need("gamma_b"), inp._need("gamma_c")
        cond = _inf_on_zero(lambda: (L ** 3 / gc ** 3) * log2(L / (gb * gc)) / a)()
        return TableRow(row, "eta=etabar", gamma_o * k, alpha_condition=cond, alpha_upper_condition=upper)
    names = {
        "II.arb.eta": ("alpha_gamma_c3", "alpha_L4"),
        "II.arb.etabar": ("alpha_gamma_c",),
        "II.uneq.eta": ("alpha_gamma_c3", "alpha_gamma_e3"),
        "II.uneq.etabar": ("alpha_gamma_e2_c",),
    }[row]
    cond = max(conds[n]() for n in names)
    return TableRow(row, quantity, gamma_o * k / p, alpha_condition=cond, alpha_upper_condition=upper)


def bottleneck(links: Sequence[tuple[float, float]]) -> int:
    """Index of the link with the smallest lam * p (first one on ties)."""
    if not links:
        raise ValueError("no links")
    products = [lam * p for lam, p in links]
    return products.index(min(products))


def poisson_adjust(inp: BoundInputs, links: Sequence[tuple[float, float]]) -> BoundInputs:
    """Substitute p <- lam_mu * p_mu for the bottleneck link mu; ``links`` holds (lam, p) pairs."""
    mu = bottleneck(links)
    lam, p = links[mu]
    return replace(inp, p=lam * p, lam=lam)
