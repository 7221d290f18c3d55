"""Chunked random linear network coding over GF(2), plus a systematic outer precode.

Packets carry the global encoding vector restricted to their chunk as an
``alpha``-bit int and, in payload mode, an ``m``-bit payload int. Randomness
for coding comes from ``random.Random`` (MT19937) because the simulator needs
millions of cheap ``getrandbits`` calls.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from .gf2 import EliminationState, NotDecodable

__all__ = [
    "CodeParams",
    "NodeBuffer",
    "NotDecodable",
    "Packet",
    "Precode",
    "PrecodeFailure",
    "PrecodeParams",
    "combine",
    "decode_chunk",
    "make_decoders",
    "precode_decode",
    "precode_encode",
    "random_message",
    "recode",
    "sink_receive",
    "source_emit",
]


@dataclass(frozen=True)
class CodeParams:
    """``k`` vectors in ``q`` chunks of ``alpha = k/q``; ``m`` payload bits (0 = coefficients only)."""

    k: int
    q: int = 1
    m: int = 0

    def __post_init__(self):
        if self.k < 1 or self.q < 1:
            raise ValueError("k and q must be positive")
        if self.k % self.q:
            raise ValueError(f"q={self.q} does not divide k={self.k}")
        if self.m < 0:
            raise ValueError("m must be non-negative")

    @property
    def alpha(self) -> int:
        return self.k // self.q

    @property
    def payload_mode(self) -> bool:
        return self.m > 0


@dataclass(frozen=True)
class Packet:
    chunk_id: int
    coeffs: int
    payload: int | None = None


def random_message(params: CodeParams, rng: random.Random) -> list[int]:
    return [rng.getrandbits(params.m) for _ in range(params.k)]


def combine(vectors: Sequence[int], mask: int, offset: int = 0) -> int:
    """XOR of ``vectors[offset + j]`` over the set bits ``j`` of ``mask``."""
    acc = 0
    while mask:
        low = mask & -mask
        acc ^= vectors[offset + low.bit_length() - 1]
        mask ^= low
    return acc


def source_emit(params: CodeParams, message: Sequence[int] | None, rng: random.Random) -> Packet:
    """A uniformly chosen chunk with i.i.d. uniform coefficients over its message vectors."""
    if params.payload_mode != (message is not None):
        raise ValueError("message must be given exactly when m > 0")
    c = rng.randrange(params.q) if params.q > 1 else 0
    coeffs = rng.getrandbits(params.alpha)
    payload = combine(message, coeffs, c * params.alpha) if message is not None else None
    return Packet(c, coeffs, payload)


class NodeBuffer:
    """Packets a relay has received, per chunk.

    With ``compact=True`` (the simulator's setting) only packets that grow the
    chunk's span are kept, in reduced form. A uniform combination of any
    spanning set is uniform over the span, so recoding from the compact form
    has the same output distribution as recoding from every packet received.
    """

    def __init__(self, params: CodeParams, compact: bool = True):
        self.params = params
        self.compact = compact
        self.states = [EliminationState(params.alpha, params.payload_mode) for _ in range(params.q)]
        self.packets: list[list[Packet]] = [[] for _ in range(params.q)]

    def add(self, pkt: Packet) -> bool:
        """Store ``pkt`` under its chunk; True iff it was innovative for this node."""
        innovative = self.states[pkt.chunk_id].insert(pkt.coeffs, pkt.payload or 0)
        if not self.compact:
            self.packets[pkt.chunk_id].append(pkt)
        return innovative

    def generators(self, chunk: int) -> tuple[list[int], list[int]]:
        if self.compact:
            st = self.states[chunk]
            return st.rows, st.payloads
        pkts = self.packets[chunk]
        return [p.coeffs for p in pkts], [p.payload or 0 for p in pkts]

    def rank(self, chunk: int) -> int:
        return self.states[chunk].rank


def recode(buffer: NodeBuffer, params: CodeParams, rng: random.Random) -> Packet:
    """Random combination of the buffered packets of a uniformly chosen chunk.

    The chunk is drawn before looking at the buffer; an empty chunk yields the
    all-zero packet.
    """
    c = rng.randrange(params.q) if params.q > 1 else 0
    coeffs, payloads = buffer.generators(c)
    mask = rng.getrandbits(len(coeffs)) if coeffs else 0
    coeff = combine(coeffs, mask)
    payload = combine(payloads, mask) if params.payload_mode else None
    return Packet(c, coeff, payload)


def make_decoders(params: CodeParams) -> list[EliminationState]:
    return [EliminationState(params.alpha, params.payload_mode) for _ in range(params.q)]


def sink_receive(decoders: Sequence[EliminationState], pkt: Packet) -> tuple[bool, bool]:
    """Route ``pkt`` to its chunk decoder: (innovative, chunk became decodable now)."""
    st = decoders[pkt.chunk_id]
    innovative = st.insert(pkt.coeffs, pkt.payload or 0)
    return innovative, innovative and st.full


def decode_chunk(decoder: EliminationState, params: CodeParams) -> list[int]:
    """The chunk's ``alpha`` message vectors; NotDecodable below full rank."""
    if not params.payload_mode:
        raise ValueError("decode_chunk needs payload mode (m > 0)")
    return decoder.solve()


# ---------------------------------------------------------------- precode


@dataclass(frozen=True)
class PrecodeParams:
    """Systematic random GF(2) precode for ``k`` messages.

    Output length is ceil((1 + (1+gamma_a)*gamma_b + c*gamma_b**2) * k);
    ``c`` stands in for the unspecified second-order constant.
    """

    k: int
    gamma_a: float
    gamma_b: float
    c: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        for name in ("gamma_a", "gamma_b"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name}={v} outside (0, 1)")
        if self.c < 0:
            raise ValueError("c must be non-negative")
        if not 0.0 < self.rate < 1.0:
            raise ValueError(f"precode rate {self.rate} outside (0, 1)")

    @property
    def erasure_fraction(self) -> float:
        """Fraction of intermediate vectors the precode is designed to lose."""
        return (1.0 + self.gamma_a) * self.gamma_b

    @property
    def rate(self) -> float:
        return 1.0 - self.erasure_fraction

    @property
    def expansion(self) -> float:
        return 1.0 + self.erasure_fraction + self.c * self.gamma_b ** 2

    @property
    def n_intermediate(self) -> int:
        # Tolerance keeps exact products such as 1.12 * 100 from rounding up.
        return max(math.ceil(self.expansion * self.k - 1e-9), self.k + 1)

    def padded_length(self, alpha: int) -> int:
        return -(-self.n_intermediate // alpha) * alpha


class PrecodeFailure(Exception):
    """The recovered intermediate vectors do not determine the message."""

    def __init__(self, deficit: int):
        super().__init__(f"precode decoding failed: rank deficit {deficit}")
        self.deficit = deficit


@dataclass
class Precode:
    """Generator of a systematic code: identity on the first ``k`` outputs,
    uniform random ``k``-bit rows (``parity``) for the rest."""

    params: PrecodeParams
    parity: list[int]

    @classmethod
    def sample(cls, params: PrecodeParams, rng: random.Random) -> "Precode":
        n_par = params.n_intermediate - params.k
        return cls(params, [rng.getrandbits(params.k) for _ in range(n_par)])

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def n_intermediate(self) -> int:
        return self.params.n_intermediate

    def generator_row(self, i: int) -> int:
        return 1 << i if i < self.k else self.parity[i - self.k]

    def encode(self, message: Sequence[int]) -> list[int]:
        if len(message) != self.k:
            raise ValueError(f"message has {len(message)} vectors, expected {self.k}")
        planes = _bit_planes(message, range(self.k))
        return list(message) + [_dot_planes(g, planes) for g in self.parity]

    def _restricted(self, indices, payloads: Mapping[int, int] | None):
        """Eliminate parity rows over the columns whose systematic vector is missing."""
        k = self.k
        known = {i for i in indices if i < k}
        unknown_mask = (1 << k) - 1
        for i in known:
            unknown_mask ^= 1 << i
        st = EliminationState(k, payloads is not None)
        if payloads is not None:
            planes = _bit_planes(payloads, known)
        need = k - len(known)
        for i in indices:
            if k <= i < self.n_intermediate and st.rank < need:
                g = self.parity[i - k]
                if payloads is None:
                    st.insert(g & unknown_mask)
                else:
                    st.insert(g & unknown_mask, payloads[i] ^ _dot_planes(g, planes))
        return known, need, st

    def deficit(self, indices) -> int:
        """Number of message dimensions the vectors at ``indices`` leave undetermined."""
        _, need, st = self._restricted(sorted(set(indices)), None)
        return need - st.rank

    def decode(self, recovered: Mapping[int, int]) -> list[int]:
        """Message from ``{intermediate index: vector}``; PrecodeFailure if underdetermined."""
        indices = sorted(i for i in recovered if i < self.n_intermediate)
        known, need, st = self._restricted(indices, recovered)
        if st.rank < need:
            raise PrecodeFailure(need - st.rank)
        solved = {}
        for row, payload in zip(st.rows, st.payloads):
            solved[(row & -row).bit_length() - 1] = payload
        return [recovered[j] if j in known else solved[j] for j in range(self.k)]


def _bit_planes(vectors, indices) -> list[int]:
    """Plane ``b`` has bit ``j`` set iff bit ``b`` of ``vectors[j]`` is set (j in indices)."""
    width = max((vectors[j].bit_length() for j in indices), default=0)
    planes = [0] * width
    for j in indices:
        v = vectors[j]
        while v:
            low = v & -v
            planes[low.bit_length() - 1] |= 1 << j
            v ^= low
    return planes


def _dot_planes(g: int, planes: Sequence[int]) -> int:
    out = 0
    for b, plane in enumerate(planes):
        if (g & plane).bit_count() & 1:
            out |= 1 << b
    return out


def precode_encode(message: Sequence[int], pp: PrecodeParams, rng: random.Random) -> tuple[list[int], Precode]:
    """Intermediate vectors (message first) and the generator needed to decode them."""
    code = Precode.sample(pp, rng)
    return code.encode(message), code


def precode_decode(recovered: Mapping[int, int], code: Precode) -> list[int]:
    return code.decode(recovered)

