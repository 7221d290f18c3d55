"""Chunked random linear network codes over GF(2) on lossy line networks.

Submodules: ``gf2`` (bit matrices and elimination), ``rblt`` (random block
lower-triangular matrices), ``codes`` (chunked coding and the precode),
``traffic`` (per-link loss processes), ``simulator`` (event-driven runs and
Monte Carlo estimators), ``bounds`` (closed-form delay curves) and ``cli``.
"""

from .bounds import BoundInputs, BoundReport, ccp_delay_bound, delay_bound, gamma_star
from .codes import CodeParams, PrecodeParams, precode_decode, precode_encode
from .gf2 import BitMatrix, EliminationState, NotDecodable, rank
from .rblt import RbltSpec, estimate_rank_deficiency, lemma2_bound, lemma3_bound, sample_rblt
from .simulator import (
    SimConfig,
    ccp_config,
    estimate_average_delay,
    estimate_delay_quantile,
    measure_undecodable_fraction,
    run_ccp,
    run_once,
)
from .traffic import NetworkParams, make_unequal_params, sample_trace

__version__ = "0.1.0"

__all__ = [
    "BitMatrix",
    "BoundInputs",
    "BoundReport",
    "CodeParams",
    "EliminationState",
    "NetworkParams",
    "NotDecodable",
    "PrecodeParams",
    "RbltSpec",
    "SimConfig",
    "ccp_config",
    "ccp_delay_bound",
    "delay_bound",
    "estimate_average_delay",
    "estimate_delay_quantile",
    "estimate_rank_deficiency",
    "gamma_star",
    "lemma2_bound",
    "lemma3_bound",
    "make_unequal_params",
    "measure_undecodable_fraction",
    "precode_decode",
    "precode_encode",
    "rank",
    "run_ccp",
    "run_once",
    "sample_rblt",
    "sample_trace",
]
