"""
Capacity-achieving retrieval scheme for arbitrary K and N.

The plan is built block by block. Block k holds, at every database,

  * mixed equations: one fresh desired bit plus the undesired part of a
    block-(k-1) side-information equation downloaded from another database,
  * pure equations: sums of fresh bits of k distinct undesired messages,
    (N-1)^(k-1) of them per undesired signature.

Per database, block k therefore holds (N-1)^(k-1)*C(K,k) equations of which
(N-1)^(k-1)*C(K-1,k-1) contain a desired bit. Each pure equation of block k-1
at database m is reused by exactly one mixed equation at every other database,
so every desired bit can be recovered by cancelling known side information.

Symbolic bits live in message *slots*: slot 0 is the desired message, slots
1..K-1 are the undesired messages in ascending index order. Randomisation maps
slots to messages, serials to bit positions through independent uniform
permutations, and shuffles the order of each database's equation list.
"""

import io
import logging
import math
import re
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator

from pirlab.exceptions import DecodeError, InvalidArgumentError
from pirlab.models import BitRef, DatabaseQuery, Equation, SchemeParams, Transcript

logger = logging.getLogger(__name__)

DESIRED_SLOT = 0


class SymbolicBit(NamedTuple):
    """Bit ``serial`` (1-based) of message slot ``slot``; rendered ``a3``, ``b2``..."""

    slot: int
    serial: int

    def __str__(self) -> str:
        return f"{slot_letter(self.slot)}{self.serial}"


class SymbolicEquation(NamedTuple):
    """Sum of symbolic bits, desired slot first, undesired slots ascending."""

    bits: Tuple[SymbolicBit, ...]

    @property
    def signature(self) -> Tuple[int, ...]:
        return tuple(b.slot for b in self.bits)

    @property
    def desired_bit(self) -> Optional[SymbolicBit]:
        for b in self.bits:
            if b.slot == DESIRED_SLOT:
                return b
        return None

    def __str__(self) -> str:
        return "+".join(str(b) for b in self.bits)


class SchemePlan(BaseModel):
    """Symbolic query structure for one (K, N, desired index).

    ``routing`` maps ``(database, position)`` of every mixed equation of block
    k >= 2 to the ``(database, position)`` of the side-information equation
    whose value cancels its undesired part. Positions are 0-based indices into
    ``per_database[database - 1]`` before shuffling.
    """

    model_config = ConfigDict(frozen=True)

    params: SchemeParams
    desired: int
    per_database: Tuple[Tuple[SymbolicEquation, ...], ...]
    routing: Dict[Tuple[int, int], Tuple[int, int]]
    bit_budget: Tuple[int, ...]

    @property
    def equation_count(self) -> int:
        return sum(len(column) for column in self.per_database)

    def equation(self, database: int, position: int) -> SymbolicEquation:
        return self.per_database[database - 1][position]


class Randomness(BaseModel):
    """Per-message bit permutations and per-database order shuffles.

    ``permutations[m - 1][s - 1]`` is the bit position of serial ``s`` of the
    slot mapped to message ``m``. ``shuffles[n - 1][j]`` is the plan position
    of the equation sent at position ``j`` to database ``n``.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    seed: Optional[int]
    permutations: Tuple[np.ndarray, ...]
    shuffles: Tuple[np.ndarray, ...]

    @field_validator("permutations", "shuffles")
    @classmethod
    def _bijections(cls, value: Tuple[np.ndarray, ...]) -> Tuple[np.ndarray, ...]:
        for perm in value:
            if not np.array_equal(np.sort(perm), np.arange(len(perm))):
                raise ValueError("every permutation must be a bijection of 0..n-1")
        return value

    @classmethod
    def from_seed(cls, plan: SchemePlan, seed: int) -> "Randomness":
        """Uniform permutations and shuffles derived from ``seed`` alone."""
        rng = np.random.default_rng(seed)
        size = message_length(plan.params)
        permutations = tuple(rng.permutation(size) for _ in range(plan.params.K))
        shuffles = tuple(rng.permutation(len(column)) for column in plan.per_database)
        return cls(seed=seed, permutations=permutations, shuffles=shuffles)

    @classmethod
    def identity(cls, plan: SchemePlan) -> "Randomness":
        """Identity permutations and shuffles; concrete queries mirror the plan."""
        size = message_length(plan.params)
        return cls(
            seed=None,
            permutations=tuple(np.arange(size) for _ in range(plan.params.K)),
            shuffles=tuple(np.arange(len(column)) for column in plan.per_database),
        )


# ============================================================================
# CAPACITY AND COUNTING
# ============================================================================

def capacity(params: SchemeParams) -> Fraction:
    """(1 + 1/N + ... + 1/N^(K-1))^-1 as an exact rational."""
    K, N = params.K, params.N
    if K < 1 or N < 1:
        raise InvalidArgumentError(f"capacity needs K >= 1 and N >= 1, got {params}")
    if N == 1:
        return Fraction(1, K)
    return Fraction(N ** (K - 1) * (N - 1), N**K - 1)


def capacity_lower_bound(N: int) -> Fraction:
    """1 - 1/N, the rate of the best scheme known before the capacity result."""
    if N < 1:
        raise InvalidArgumentError(f"N must be at least 1, got {N}")
    return 1 - Fraction(1, N)


def message_length(params: SchemeParams) -> int:
    """Bits per message used by one run of the scheme: N^K."""
    return params.N ** params.K


def expected_block_counts(params: SchemeParams) -> List[Tuple[int, int, int]]:
    """Closed-form ``(k, equations, desired-containing)`` per database for each block."""
    K, N = params.K, params.N
    return [
        (k, (N - 1) ** (k - 1) * math.comb(K, k), (N - 1) ** (k - 1) * math.comb(K - 1, k - 1))
        for k in range(1, K + 1)
    ]


def block_census(plan: SchemePlan) -> Dict[int, List[Tuple[int, int, int]]]:
    """Observed ``(k, equations, desired-containing)`` per database, by direct count."""
    census = {}
    for n, column in enumerate(plan.per_database, start=1):
        rows = []
        for k in range(1, plan.params.K + 1):
            block = [eq for eq in column if len(eq.bits) == k]
            rows.append((k, len(block), sum(1 for eq in block if eq.desired_bit is not None)))
        census[n] = rows
    return census


# ============================================================================
# PLAN CONSTRUCTION
# ============================================================================

def slot_messages(K: int, desired: int) -> Tuple[int, ...]:
    """Message index of each slot: desired first, then the others ascending."""
    return (desired,) + tuple(m for m in range(1, K + 1) if m != desired)


def slot_letter(slot: int) -> str:
    return chr(ord("a") + slot)


@lru_cache(maxsize=128)
def build_plan(params: SchemeParams, desired: int) -> SchemePlan:
    """Deterministic symbolic plan for retrieving message ``desired``.

    Blocks are generated for k = 1..K. Desired serials are drawn block by block,
    database by database; mixed equations at a database follow signature order,
    then source database order, then source position. Pure equations follow
    signature order then database order, drawing fresh serials per message.
    """
    K, N = params.K, params.N
    if not 1 <= desired <= K:
        raise InvalidArgumentError(f"desired index {desired} outside [1, {K}]")

    undesired_slots = range(1, K)
    columns: List[List[SymbolicEquation]] = [[] for _ in range(N)]
    routing: Dict[Tuple[int, int], Tuple[int, int]] = {}
    next_serial = [1] * K

    def fresh(slot: int) -> SymbolicBit:
        bit = SymbolicBit(slot, next_serial[slot])
        next_serial[slot] += 1
        return bit

    # (database, undesired signature) -> plan positions of the previous block's pure equations
    side_information: Dict[Tuple[int, Tuple[int, ...]], List[int]] = {}

    for k in range(1, K + 1):
        for n in range(1, N + 1):
            column = columns[n - 1]
            for undesired in combinations(undesired_slots, k - 1):
                if k == 1:
                    column.append(SymbolicEquation((fresh(DESIRED_SLOT),)))
                    continue
                for m in range(1, N + 1):
                    if m == n:
                        continue
                    for source in side_information.get((m, undesired), []):
                        source_eq = columns[m - 1][source]
                        routing[(n, len(column))] = (m, source)
                        column.append(SymbolicEquation((fresh(DESIRED_SLOT),) + source_eq.bits))

        pure_per_signature = (N - 1) ** (k - 1)
        current: Dict[Tuple[int, Tuple[int, ...]], List[int]] = {}
        for signature in combinations(undesired_slots, k):
            for n in range(1, N + 1):
                column = columns[n - 1]
                for _ in range(pure_per_signature):
                    current.setdefault((n, signature), []).append(len(column))
                    column.append(SymbolicEquation(tuple(fresh(slot) for slot in signature)))
        side_information = current

    plan = SchemePlan(
        params=params,
        desired=desired,
        per_database=tuple(tuple(column) for column in columns),
        routing=routing,
        bit_budget=tuple(serial - 1 for serial in next_serial),
    )
    logger.debug(
        f"Built plan {params} desired={desired}: {plan.equation_count} equations, "
        f"{plan.bit_budget[DESIRED_SLOT]} desired bits"
    )
    return plan


def plan_rate(plan: SchemePlan) -> Fraction:
    """Desired bits retrieved per downloaded bit."""
    return Fraction(plan.bit_budget[DESIRED_SLOT], plan.equation_count)


def download_cost(plan: SchemePlan) -> Fraction:
    """Downloaded bits per desired bit (the reciprocal of the rate)."""
    return 1 / plan_rate(plan)


# ============================================================================
# RANDOMISATION AND DECODING
# ============================================================================

def concretize(plan: SchemePlan, randomness: Randomness) -> List[List[Equation]]:
    """Concrete equations of every database, in plan order (before shuffling)."""
    messages = slot_messages(plan.params.K, plan.desired)
    refs: Dict[SymbolicBit, BitRef] = {}

    def concrete(bit: SymbolicBit) -> BitRef:
        ref = refs.get(bit)
        if ref is None:
            message = messages[bit.slot]
            position = int(randomness.permutations[message - 1][bit.serial - 1])
            ref = refs[bit] = BitRef(message=message, bit=position)
        return ref

    return [
        [Equation(terms=tuple(concrete(b) for b in eq.bits)) for eq in column]
        for column in plan.per_database
    ]


def randomize(
    plan: SchemePlan, seed: int, randomness: Optional[Randomness] = None
) -> Tuple[List[DatabaseQuery], Randomness]:
    """Concrete, shuffled queries for every database.

    ``randomness`` overrides the seed-derived permutations; it exists so tests
    can pin identity randomness. Production callers pass only ``seed``.
    """
    if randomness is None:
        randomness = Randomness.from_seed(plan, seed)
    columns = concretize(plan, randomness)
    queries = [
        DatabaseQuery(
            database=n,
            equations=tuple(column[int(j)] for j in randomness.shuffles[n - 1]),
        )
        for n, column in enumerate(columns, start=1)
    ]
    return queries, randomness


def decode(transcript: Transcript, plan: SchemePlan, randomness: Randomness) -> np.ndarray:
    """Recover all N^K bits of the desired message, in message bit order."""
    params = plan.params
    if transcript.params != params or transcript.desired != plan.desired:
        raise DecodeError(
            f"transcript for {transcript.params} desired={transcript.desired} does not match "
            f"plan for {params} desired={plan.desired}"
        )
    for n, column in enumerate(plan.per_database, start=1):
        if len(transcript.answers[n - 1].bits) != len(column):
            raise DecodeError(
                f"database {n} returned {len(transcript.answers[n - 1].bits)} bits, "
                f"plan expects {len(column)}"
            )

    # positions[n - 1][p] = index at which plan equation p was sent to database n
    positions = [np.argsort(shuffle) for shuffle in randomness.shuffles]

    def answer_bit(n: int, p: int) -> int:
        return transcript.answers[n - 1].bits[positions[n - 1][p]]

    def sent_equation(n: int, p: int) -> Equation:
        return transcript.queries[n - 1].equations[positions[n - 1][p]]

    size = message_length(params)
    desired_bits = np.zeros(size, dtype=np.uint8)
    for n, column in enumerate(plan.per_database, start=1):
        for p, eq in enumerate(column):
            bit = eq.desired_bit
            if bit is None:
                continue
            value = answer_bit(n, p)
            if len(eq.bits) > 1:
                source = plan.routing.get((n, p))
                if source is None:
                    raise DecodeError(f"mixed equation DB{n}#{p} has no side-information route")
                undesired = {r.key for r in sent_equation(n, p).terms if r.message != plan.desired}
                if undesired != {r.key for r in sent_equation(*source).terms}:
                    raise DecodeError(
                        f"routing inconsistency: DB{n}#{p} does not align with DB{source[0]}#{source[1]}"
                    )
                value ^= answer_bit(*source)
            desired_bits[bit.serial - 1] = value

    message = np.zeros(size, dtype=np.uint8)
    message[randomness.permutations[plan.desired - 1]] = desired_bits
    return message


# ============================================================================
# TABLE RENDERING
# ============================================================================

_TERM_PATTERN = re.compile(r"([a-z])(\d+)")


def _table(columns: Sequence[Sequence[str]]) -> pd.DataFrame:
    depth = max((len(c) for c in columns), default=0)
    return pd.DataFrame(
        {f"DB{n}": list(c) + [""] * (depth - len(c)) for n, c in enumerate(columns, start=1)}
    )


def plan_table(plan: SchemePlan) -> pd.DataFrame:
    """Column-per-database table of symbolic equations (``a4+b2``)."""
    return _table([[str(eq) for eq in column] for column in plan.per_database])


def render_plan(plan: SchemePlan) -> str:
    return plan_table(plan).to_string(index=False)


def render_queries(queries: Sequence[DatabaseQuery]) -> str:
    """Column-per-database table of concrete equations (``W1[3]+W2[0]``)."""
    return _table([[str(eq) for eq in q.equations] for q in queries]).to_string(index=False)


def parse_table(text: str) -> pd.DataFrame:
    """Read a whitespace-aligned symbolic table such as ``render_plan`` produces."""
    return pd.read_csv(io.StringIO(text), sep=r"\s+", dtype=str)


def normalize_table(table: pd.DataFrame) -> pd.DataFrame:
    """Canonical form of a symbolic table, invariant under serial renaming.

    Each column is stably sorted by (signature size, signature); serials are
    then renumbered per letter by first appearance, scanning columns in order.
    """
    parsed = {
        column: sorted(
            ([(letter, int(serial)) for letter, serial in _TERM_PATTERN.findall(cell)]
             for cell in table[column] if isinstance(cell, str) and cell),
            key=lambda terms: (len(terms), [letter for letter, _ in terms]),
        )
        for column in table.columns
    }
    renamed: Dict[Tuple[str, int], int] = {}
    counters: Dict[str, int] = {}
    columns = []
    for column in table.columns:
        cells = []
        for terms in parsed[column]:
            rendered = []
            for letter, serial in terms:
                if (letter, serial) not in renamed:
                    counters[letter] = counters.get(letter, 0) + 1
                    renamed[(letter, serial)] = counters[letter]
                rendered.append(f"{letter}{renamed[(letter, serial)]}")
            cells.append("+".join(rendered))
        columns.append(cells)
    return _table(columns)
