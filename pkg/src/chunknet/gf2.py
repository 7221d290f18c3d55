"""Bit-packed GF(2) linear algebra.

Rows are Python ints: bit ``j`` of a row is the entry in column ``j``.
Arbitrary-precision ints give word-parallel XOR for free and keep the
simulator's inner loop free of array allocation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "BitMatrix",
    "EliminationState",
    "NotDecodable",
    "bits_to_int",
    "int_to_bits",
    "insert_row",
    "multiply",
    "random_rows",
    "rank",
    "rank_of_rows",
    "sample_uniform",
    "solve",
]


class NotDecodable(Exception):
    """Raised when a solve is attempted on a rank-deficient system."""

    def __init__(self, rank: int, n_cols: int):
        super().__init__(f"rank {rank} < {n_cols}; system not yet decodable")
        self.rank = rank
        self.n_cols = n_cols
        self.deficit = n_cols - rank


def bits_to_int(bits: Sequence[int] | str) -> int:
    """Pack a bit sequence (``"101"`` or ``[1, 0, 1]``) with entry 0 in bit 0."""
    value = 0
    for j, b in enumerate(bits):
        if int(b) not in (0, 1):
            raise ValueError(f"not a bit: {b!r}")
        if int(b):
            value |= 1 << j
    return value


def int_to_bits(value: int, n: int) -> list[int]:
    return [(value >> j) & 1 for j in range(n)]


def _as_row(row: int | Sequence[int] | str, n_cols: int) -> int:
    if isinstance(row, (int, np.integer)):
        value = int(row)
        if value < 0 or value >> n_cols:
            raise ValueError(f"row {value:#x} does not fit in {n_cols} columns")
        return value
    if len(row) != n_cols:
        raise ValueError(f"row length {len(row)} != n_cols {n_cols}")
    return bits_to_int(row)


@dataclass(frozen=True)
class BitMatrix:
    n_rows: int
    n_cols: int
    rows: tuple[int, ...]

    def __post_init__(self):
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        if len(self.rows) != self.n_rows:
            raise ValueError(f"expected {self.n_rows} rows, got {len(self.rows)}")
        for r in self.rows:
            if r < 0 or r >> self.n_cols:
                raise ValueError(f"row {r:#x} wider than {self.n_cols} columns")

    @classmethod
    def from_rows(cls, rows: Iterable[int | Sequence[int] | str], n_cols: int) -> "BitMatrix":
        packed = tuple(_as_row(r, n_cols) for r in rows)
        return cls(len(packed), n_cols, packed)

    @classmethod
    def from_bits(cls, rows: Sequence[Sequence[int] | str]) -> "BitMatrix":
        """Build from a list of bit lists/strings; width taken from the first row."""
        if not rows:
            return cls(0, 0, ())
        return cls.from_rows(rows, len(rows[0]))

    @classmethod
    def from_array(cls, a) -> "BitMatrix":
        a = np.asarray(a, dtype=np.uint8)
        if a.ndim != 2:
            raise ValueError("expected a 2-D array")
        return cls.from_rows((list(r) for r in a), a.shape[1])

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> "BitMatrix":
        return cls(n_rows, n_cols, (0,) * n_rows)

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls(n, n, tuple(1 << i for i in range(n)))

    def to_array(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols), dtype=np.uint8)
        for i, r in enumerate(self.rows):
            out[i] = int_to_bits(r, self.n_cols)
        return out

    def to_bits(self) -> list[list[int]]:
        return [int_to_bits(r, self.n_cols) for r in self.rows]

    def rank(self) -> int:
        return rank(self)

    def __matmul__(self, other: "BitMatrix") -> "BitMatrix":
        return multiply(self, other)


def rank_of_rows(rows: Iterable[int]) -> int:
    """Rank of the span of int-packed rows (echelon by leading bit)."""
    basis: dict[int, int] = {}
    for row in rows:
        while row:
            lead = row.bit_length() - 1
            b = basis.get(lead)
            if b is None:
                basis[lead] = row
                break
            row ^= b
    return len(basis)


def rank(m: BitMatrix) -> int:
    """Dimension of the row space of ``m`` over GF(2)."""
    return rank_of_rows(m.rows)


def multiply(t: BitMatrix, q: BitMatrix) -> BitMatrix:
    """GF(2) product ``t @ q``."""
    if t.n_cols != q.n_rows:
        raise ValueError(f"dimension mismatch: {t.n_rows}x{t.n_cols} @ {q.n_rows}x{q.n_cols}")
    out = []
    qrows = q.rows
    for row in t.rows:
        acc = 0
        while row:
            low = row & -row
            acc ^= qrows[low.bit_length() - 1]
            row ^= low
        out.append(acc)
    return BitMatrix(t.n_rows, q.n_cols, tuple(out))


def random_rows(rng: np.random.Generator, n_rows: int, n_cols: int) -> list[int]:
    """``n_rows`` uniform ``n_cols``-bit rows drawn from ``rng.bytes``."""
    if n_rows == 0:
        return []
    if n_cols == 0:
        return [0] * n_rows
    nbytes = (n_cols + 7) // 8
    mask = (1 << n_cols) - 1
    buf = rng.bytes(nbytes * n_rows)
    return [
        int.from_bytes(buf[i * nbytes:(i + 1) * nbytes], "little") & mask
        for i in range(n_rows)
    ]


def sample_uniform(n: int, k: int, rng: np.random.Generator) -> BitMatrix:
    """An ``n x k`` matrix of i.i.d. fair bits; reproducible for a seeded ``rng``."""
    return BitMatrix(n, k, tuple(random_rows(rng, n, k)))


class EliminationState:
    """Incrementally maintained reduced row-echelon basis.

    Each basis row owns a distinct pivot column (its lowest set bit) and is
    zero in every other row's pivot column. With ``track_payloads`` each row
    carries an int payload that undergoes the same XORs, so once the basis is
    full the payload of the row pivoted on column ``j`` is the solution for
    unknown ``j``.
    """

    __slots__ = ("n_cols", "rows", "payloads", "pivots", "_pivot_row", "_mask", "track_payloads")

    def __init__(self, n_cols: int, track_payloads: bool = False):
        if n_cols < 0:
            raise ValueError("n_cols must be non-negative")
        self.n_cols = n_cols
        self.track_payloads = track_payloads
        self.rows: list[int] = []
        self.payloads: list[int] = []
        self.pivots: list[int] = []
        self._pivot_row = [-1] * n_cols
        self._mask = 0

    @property
    def rank(self) -> int:
        return len(self.rows)

    @property
    def full(self) -> bool:
        return len(self.rows) == self.n_cols

    def reduce(self, row: int, payload: int = 0) -> tuple[int, int]:
        """Residual of ``row`` (and its payload) modulo the current basis."""
        hits = row & self._mask
        rows = self.rows
        pivot_row = self._pivot_row
        if self.track_payloads:
            payloads = self.payloads
            while hits:
                low = hits & -hits
                idx = pivot_row[low.bit_length() - 1]
                row ^= rows[idx]
                payload ^= payloads[idx]
                hits ^= low
        else:
            while hits:
                low = hits & -hits
                row ^= rows[pivot_row[low.bit_length() - 1]]
                hits ^= low
        return row, payload

    def contains(self, row: int) -> bool:
        return self.reduce(_as_row(row, self.n_cols))[0] == 0

    def insert(self, row: int, payload: int = 0) -> bool:
        """Add ``row``; True iff it was outside the span (rank grew)."""
        if not row or len(self.rows) == self.n_cols:
            return False
        row, payload = self.reduce(row, payload)
        if not row:
            return False
        low = row & -row
        col = low.bit_length() - 1
        rows = self.rows
        if self.track_payloads:
            payloads = self.payloads
            for i, r in enumerate(rows):
                if r & low:
                    rows[i] = r ^ row
                    payloads[i] ^= payload
            payloads.append(payload)
        else:
            for i, r in enumerate(rows):
                if r & low:
                    rows[i] = r ^ row
        self._pivot_row[col] = len(rows)
        rows.append(row)
        self.pivots.append(col)
        self._mask |= low
        return True

    def solve(self) -> list[int]:
        """Payload solution per column; raises NotDecodable below full rank."""
        if not self.full:
            raise NotDecodable(self.rank, self.n_cols)
        return [self.payloads[self._pivot_row[j]] for j in range(self.n_cols)]

    def copy(self) -> "EliminationState":
        other = EliminationState(self.n_cols, self.track_payloads)
        other.rows = list(self.rows)
        other.payloads = list(self.payloads)
        other.pivots = list(self.pivots)
        other._pivot_row = list(self._pivot_row)
        other._mask = self._mask
        return other

    def is_reduced(self) -> bool:
        if len(set(self.pivots)) != len(self.pivots):
            return False
        for i, r in enumerate(self.rows):
            if (r & -r).bit_length() - 1 != self.pivots[i]:
                return False
            for j, col in enumerate(self.pivots):
                if i != j and (r >> col) & 1:
                    return False
        return True


def insert_row(state: EliminationState, row: int | Sequence[int] | str, payload: int = 0) -> bool:
    """Checked form of :meth:`EliminationState.insert` (validates the width)."""
    return state.insert(_as_row(row, state.n_cols), payload)


def solve(state: EliminationState) -> list[int]:
    return state.solve()
