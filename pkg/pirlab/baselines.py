"""
Auxiliary retrieval schemes.

  * ``xor``: two databases, a uniform mask vector and its copy with the desired
    coordinate flipped (rate 1/2).
  * ``grouped22``: K=2, N=2 with bits grouped so each database faces only two
    possible queries (rate 2/3).
  * ``asym22``: K=2, N=2 with 2-bit messages and an asymmetric download of two
    bits from DB1 and one from DB2 (rate 2/3).
  * ``f5-aligned``: K=3, N=2 over F5 where the upload picks one of three
    possibilities per database and the undesired symbols align into one
    dimension (rate 1/2, the upload-constrained capacity).

Each scheme is split into a deterministic query builder driven by a small
randomness atom (mask vector, coin, row index) and a run function that draws
the atom from a seed.
"""

import logging
import struct
from fractions import Fraction
from typing import Annotated, Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator, validate_call

from pirlab.database import ReplicaSet
from pirlab.exceptions import InvalidArgumentError
from pirlab.linalg import GF5, alignment_coefficients, decode_by_elimination, rank
from pirlab.models import DatabaseQuery, Equation, MessageStore, SchemeParams, SchemeRun, Transcript
from pirlab.wire import serialize_query

logger = logging.getLogger(__name__)

F5Symbol = Annotated[int, Field(ge=0, lt=5)]

F5_UPLOAD_CONSTRAINED_CAPACITY = Fraction(1, 2)

_XOR_HEADER = struct.Struct(">4sBHH")
_F5_FRAME = struct.Struct(">4sBHB")


class XorVectorQuery(BaseModel):
    """Mask vector h sent to one database; DB2's copy has the desired coordinate flipped.

    ``flipped_index`` is user-side bookkeeping and never leaves the user.
    """

    model_config = ConfigDict(frozen=True)

    database: int = Field(..., ge=1, le=2)
    h: Tuple[int, ...]
    flipped_index: Optional[int] = Field(None, exclude=True)

    @field_validator("h")
    @classmethod
    def _binary(cls, h: Tuple[int, ...]) -> Tuple[int, ...]:
        if not h or any(x not in (0, 1) for x in h):
            raise ValueError("h must be a non-empty binary vector")
        return h

    @model_validator(mode="after")
    def _flip_only_on_second(self) -> "XorVectorQuery":
        if (self.flipped_index is not None) != (self.database == 2):
            raise ValueError("only database 2's query carries the flipped index")
        if self.flipped_index is not None and not 1 <= self.flipped_index <= len(self.h):
            raise ValueError(f"flipped index {self.flipped_index} outside the mask")
        return self

    def to_bytes(self) -> bytes:
        packed = np.packbits(np.array(self.h, dtype=np.uint8)).tobytes()
        return _XOR_HEADER.pack(b"PIRX", 0x01, self.database, len(self.h)) + packed


class F5Query(BaseModel):
    """Index of the linear combination requested from one database (f_row or g_row)."""

    model_config = ConfigDict(frozen=True)

    database: int = Field(..., ge=1, le=2)
    row: int = Field(..., ge=1, le=3)

    def to_bytes(self) -> bytes:
        return _F5_FRAME.pack(b"PIR5", 0x01, self.database, self.row)


class GroupedChoice(BaseModel):
    """Uniform coin selecting one of the two table variants."""

    model_config = ConfigDict(frozen=True)

    coin: int = Field(..., ge=0, le=1)

    @classmethod
    def from_seed(cls, seed: int) -> "GroupedChoice":
        return cls(coin=int(np.random.default_rng(seed).integers(0, 2)))


# ============================================================================
# XOR MASK SCHEME (N = 2)
# ============================================================================

def xor_queries(K: int, desired: int, h: Sequence[int]) -> Tuple[XorVectorQuery, XorVectorQuery]:
    """Queries for mask ``h``: DB1 gets h, DB2 gets h with coordinate ``desired`` flipped."""
    if not 1 <= desired <= K:
        raise InvalidArgumentError(f"desired index {desired} outside [1, {K}]")
    flipped = list(h)
    flipped[desired - 1] ^= 1
    return (
        XorVectorQuery(database=1, h=tuple(h)),
        XorVectorQuery(database=2, h=tuple(flipped), flipped_index=desired),
    )


def xor_answer(query: XorVectorQuery, store: MessageStore) -> np.ndarray:
    """sum_k h_k W_k over every bit position."""
    if len(query.h) != store.K:
        raise InvalidArgumentError(f"mask of length {len(query.h)} for {store.K} messages")
    return ((np.array(query.h, dtype=np.int64) @ store.bits) % 2).astype(np.uint8)


def xor_scheme_run(
    K: int, desired: int, store: MessageStore, seed: int, h: Optional[Sequence[int]] = None
) -> SchemeRun:
    """Two-database retrieval by flipping one mask coordinate; W_i = A_2 - A_1.

    ``h`` pins the mask; otherwise it is drawn uniformly from ``seed``. A mask
    is not a list of bit equations (it may be all zeros), so the run carries
    the two ``XorVectorQuery`` objects in ``native_queries`` and no transcript.
    """
    if h is None:
        h = np.random.default_rng(seed).integers(0, 2, size=K, dtype=np.uint8).tolist()
    q1, q2 = xor_queries(K, desired, h)
    a1, a2 = xor_answer(q1, store), xor_answer(q2, store)
    decoded = np.bitwise_xor(a1, a2)
    return SchemeRun(
        scheme_id="xor",
        params=SchemeParams(K=K, N=2),
        desired=desired,
        seed=seed,
        query_keys=(q1.to_bytes(), q2.to_bytes()),
        download_units=(len(a1), len(a2)),
        desired_units=store.L,
        decoded=tuple(int(b) for b in decoded),
        native_queries=(q1, q2),
    )


# ============================================================================
# TABLE-DRIVEN SCHEMES (K = 2, N = 2)
# ============================================================================

# (message, bit) pairs per downloaded sum; u_j = W1[j-1], v_j = W2[j-1]
_GROUPED_DB1 = {
    0: ((1, 0), (2, 0), ((1, 1), (2, 1))),
    1: ((1, 2), (2, 2), ((1, 3), (2, 3))),
}
_GROUPED_DB2 = {
    "a": ((1, 3), (2, 1), ((1, 2), (2, 0))),
    "b": ((1, 1), (2, 3), ((1, 0), (2, 2))),
}
# (coin, desired) -> DB2 variant
_GROUPED_DB2_CHOICE = {(0, 1): "a", (0, 2): "b", (1, 1): "b", (1, 2): "a"}

_ASYM_DB1 = {0: ((1, 0), (2, 1)), 1: ((1, 1), (2, 0))}
_ASYM_DB2 = {"a": (((1, 1), (2, 1)),), "b": (((1, 0), (2, 0)),)}
_ASYM_DB2_CHOICE = {(0, 1): "a", (0, 2): "b", (1, 1): "b", (1, 2): "a"}


def _equations(rows) -> Tuple[Equation, ...]:
    result = []
    for row in rows:
        pairs = row if isinstance(row[0], tuple) else (row,)
        result.append(Equation.of(*pairs))
    return tuple(result)


def _check_desired(desired: int) -> None:
    if desired not in (1, 2):
        raise InvalidArgumentError(f"desired index {desired} outside [1, 2]")


def grouped_queries(desired: int, choice: GroupedChoice) -> Tuple[DatabaseQuery, DatabaseQuery]:
    _check_desired(desired)
    variant = _GROUPED_DB2_CHOICE[(choice.coin, desired)]
    return (
        DatabaseQuery(database=1, equations=_equations(_GROUPED_DB1[choice.coin])),
        DatabaseQuery(database=2, equations=_equations(_GROUPED_DB2[variant])),
    )


def asym_queries(desired: int, choice: GroupedChoice) -> Tuple[DatabaseQuery, DatabaseQuery]:
    _check_desired(desired)
    variant = _ASYM_DB2_CHOICE[(choice.coin, desired)]
    return (
        DatabaseQuery(database=1, equations=_equations(_ASYM_DB1[choice.coin])),
        DatabaseQuery(database=2, equations=_equations(_ASYM_DB2[variant])),
    )


def _table_run(
    scheme_id: str,
    queries: Tuple[DatabaseQuery, DatabaseQuery],
    desired: int,
    store: MessageStore,
    seed: int,
) -> SchemeRun:
    params = SchemeParams(K=2, N=2)
    answers = ReplicaSet(store, 2).answer_all(queries)
    transcript = Transcript(
        params=params, desired=desired, queries=queries, answers=tuple(answers), seed=seed
    )
    equations = [eq for q in queries for eq in q.equations]
    values = [b for a in answers for b in a.bits]
    decoded = decode_by_elimination(equations, values, desired, K=2, L=store.L)
    return SchemeRun(
        scheme_id=scheme_id,
        params=params,
        desired=desired,
        seed=seed,
        query_keys=tuple(serialize_query(q) for q in queries),
        download_units=tuple(len(a.bits) for a in answers),
        desired_units=store.L,
        decoded=tuple(int(b) for b in decoded),
        transcript=transcript,
    )


def _check_store(store: MessageStore, L: int) -> None:
    if store.K != 2 or store.L != L:
        raise InvalidArgumentError(f"store must hold 2 messages of {L} bits, got {store.K} x {store.L}")


def grouped_scheme_run(
    desired: int, store: MessageStore, seed: int, choice: Optional[GroupedChoice] = None
) -> SchemeRun:
    """Three downloads per database from one of two fixed bit groups."""
    _check_store(store, 4)
    choice = choice or GroupedChoice.from_seed(seed)
    return _table_run("grouped22", grouped_queries(desired, choice), desired, store, seed)


def asym_scheme_run(
    desired: int, store: MessageStore, seed: int, choice: Optional[GroupedChoice] = None
) -> SchemeRun:
    """Two bits from DB1 and one sum from DB2 for 2-bit messages."""
    _check_store(store, 2)
    choice = choice or GroupedChoice.from_seed(seed)
    return _table_run("asym22", asym_queries(desired, choice), desired, store, seed)


# ============================================================================
# ALIGNED F5 SCHEME (K = 3, N = 2)
# ============================================================================

# Rows are f_1..f_3 (DB1) and g_1..g_3 (DB2); columns are W1, W2, W3.
F_COEFFICIENTS = GF5([[1, 2, 1], [1, 4, 3], [3, 4, 1]])
G_COEFFICIENTS = GF5([[1, 4, 2], [3, 4, 3], [2, 4, 1]])


def f5_pairing(desired: int, row: int) -> int:
    """DB2 row paired with DB1 row ``row`` when retrieving W_desired."""
    return (row + desired - 2) % 3 + 1


def _pair_matrix(f_row: int, g_row: int):
    return GF5(np.vstack([np.asarray(F_COEFFICIENTS[f_row - 1]), np.asarray(G_COEFFICIENTS[g_row - 1])]))


def _derive_decode_table() -> Dict[Tuple[int, int], Tuple[int, int, int]]:
    table = {}
    for desired in (1, 2, 3):
        for j in (1, 2, 3):
            g_row = f5_pairing(desired, j)
            pair = _pair_matrix(j, g_row)
            alpha, beta = alignment_coefficients(pair, desired - 1)
            table[(desired, j)] = (g_row, int(alpha), int(beta))
    return table


# (desired, f row) -> (g row, coefficient on f, coefficient on g)
DECODE_TABLE = _derive_decode_table()


def undesired_rank(desired: int, row: int) -> int:
    """Rank of the 2x2 undesired coefficient block for one valid pairing."""
    pair = _pair_matrix(row, f5_pairing(desired, row))
    return rank(GF5(np.delete(np.asarray(pair), desired - 1, axis=1)))


@validate_call
def f5_scheme_answers(store: Tuple[F5Symbol, F5Symbol, F5Symbol]) -> Tuple[int, ...]:
    """(f1, f2, f3, g1, g2, g3) for message symbols (W1, W2, W3)."""
    w = GF5(list(store))
    return tuple(int(x) for x in F_COEFFICIENTS @ w) + tuple(int(x) for x in G_COEFFICIENTS @ w)


@validate_call
def f5_decode(desired: int, pairing: Tuple[int, int], values: Tuple[F5Symbol, F5Symbol]) -> int:
    """Recover W_desired from the values of (f_j, g_l)."""
    j, g_row = pairing
    entry = DECODE_TABLE.get((desired, j))
    if entry is None or entry[0] != g_row:
        raise InvalidArgumentError(f"pairing (f{j}, g{g_row}) does not recover W{desired}")
    _, alpha, beta = entry
    return int(GF5(alpha) * GF5(values[0]) + GF5(beta) * GF5(values[1]))


def f5_queries(desired: int, row: int) -> Tuple[F5Query, F5Query]:
    if desired not in (1, 2, 3):
        raise InvalidArgumentError(f"desired index {desired} outside [1, 3]")
    return F5Query(database=1, row=row), F5Query(database=2, row=f5_pairing(desired, row))


def f5_scheme_run(
    desired: int, store: Sequence[int], seed: int, row: Optional[int] = None
) -> SchemeRun:
    """One desired symbol from one f and one g download.

    Queries and answers are F5 symbols rather than bits, so the run carries the
    two ``F5Query`` objects in ``native_queries`` and no transcript.
    """
    if row is None:
        row = int(np.random.default_rng(seed).integers(1, 4))
    q1, q2 = f5_queries(desired, row)
    answers = f5_scheme_answers(tuple(int(x) for x in store))
    f, g = answers[q1.row - 1], answers[3 + q2.row - 1]
    decoded = f5_decode(desired, (q1.row, q2.row), (f, g))
    return SchemeRun(
        scheme_id="f5-aligned",
        params=SchemeParams(K=3, N=2),
        desired=desired,
        seed=seed,
        query_keys=(q1.to_bytes(), q2.to_bytes()),
        download_units=(1, 1),
        desired_units=1,
        decoded=(decoded,),
        native_queries=(q1, q2),
    )
