"""
Scheme registry.

Every scheme exposes the same surface to the verifiers and the CLI: a store
generator, a seeded ``run``, and a *randomness atom* abstraction. An atom is
everything the user draws at random for one retrieval (mask vector, coin,
permutations); ``run`` and ``sample_query_keys`` draw one atom from the seed,
while the exhaustive checker enumerates them all.
"""

import itertools
import logging
import math
from abc import ABC, abstractmethod
from functools import lru_cache
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from pirlab.baselines import (
    GroupedChoice,
    asym_queries,
    asym_scheme_run,
    f5_queries,
    f5_scheme_run,
    grouped_queries,
    grouped_scheme_run,
    xor_queries,
    xor_scheme_run,
)
from pirlab.database import ReplicaSet
from pirlab.exceptions import CapabilityRefusedError, InvalidArgumentError
from pirlab.messages import generate_messages
from pirlab.models import MessageStore, SchemeParams, SchemeRun, Transcript
from pirlab.scheme import (
    DESIRED_SLOT,
    Randomness,
    SchemePlan,
    SymbolicBit,
    SymbolicEquation,
    build_plan,
    decode,
    expected_block_counts,
    message_length,
    randomize,
)
from pirlab.wire import serialize_query

logger = logging.getLogger(__name__)


class SchemeProvider(ABC):
    """A retrieval scheme as seen by the verifiers and the CLI."""

    scheme_id: str = ""
    description: str = ""
    # Fixtures that are deliberately not private set this to False.
    private: bool = True
    # Download unit: "bit" for GF(2) schemes, "symbol" for field schemes.
    unit: str = "bit"
    binary: bool = True

    def supports(self, params: SchemeParams) -> bool:
        return True

    @abstractmethod
    def default_params(self) -> SchemeParams:
        ...

    def check_params(self, params: SchemeParams) -> None:
        if not self.supports(params):
            raise InvalidArgumentError(f"scheme '{self.scheme_id}' does not support {params}")

    def message_length(self, params: SchemeParams) -> int:
        """Bits (or symbols) per message retrieved by one run."""
        return 1

    def generate_store(self, params: SchemeParams, seed: int) -> Any:
        return generate_messages(params, self.message_length(params), seed)

    def desired_message(self, store: Any, desired: int) -> Tuple[int, ...]:
        return tuple(int(b) for b in store.message(desired))

    def enumerate_stores(self, params: SchemeParams) -> Iterator[Any]:
        """Every possible store, for exhaustive correctness checks."""
        L = self.message_length(params)
        for bits in itertools.product((0, 1), repeat=params.K * L):
            yield MessageStore(bits=np.array(bits, dtype=np.uint8).reshape(params.K, L))

    def store_space_size(self, params: SchemeParams) -> int:
        return 2 ** (params.K * self.message_length(params))

    @abstractmethod
    def sample_atom(self, params: SchemeParams, seed: int) -> Any:
        ...

    @abstractmethod
    def enumerate_atoms(self, params: SchemeParams) -> Iterator[Any]:
        ...

    @abstractmethod
    def randomness_space_size(self, params: SchemeParams) -> int:
        ...

    def log_randomness_space_size(self, params: SchemeParams) -> float:
        """Natural log of ``randomness_space_size``."""
        return math.log(self.randomness_space_size(params))

    @abstractmethod
    def query_keys_for_atom(self, params: SchemeParams, desired: int, atom: Any) -> Tuple[bytes, ...]:
        ...

    @abstractmethod
    def run_atom(self, params: SchemeParams, desired: int, store: Any, seed: int, atom: Any) -> SchemeRun:
        ...

    def run(self, params: SchemeParams, desired: int, store: Any, seed: int) -> SchemeRun:
        """Retrieve message ``desired`` from ``store`` with randomness drawn from ``seed``."""
        self.check_params(params)
        return self.run_atom(params, desired, store, seed, self.sample_atom(params, seed))

    def sample_query_keys(self, params: SchemeParams, desired: int, seed: int) -> Tuple[bytes, ...]:
        """Serialized per-database queries for one seeded retrieval."""
        return self.query_keys_for_atom(params, desired, self.sample_atom(params, seed))


# ============================================================================
# PLAN-BASED SCHEMES
# ============================================================================

class PlanScheme(SchemeProvider):
    """Schemes driven by a symbolic plan, bit permutations and order shuffles."""

    @abstractmethod
    def plan(self, params: SchemeParams, desired: int) -> SchemePlan:
        ...

    def randomness(self, plan: SchemePlan, seed: int) -> Randomness:
        return Randomness.from_seed(plan, seed)

    def message_length(self, params: SchemeParams) -> int:
        return message_length(params)

    def sample_atom(self, params: SchemeParams, seed: int) -> Randomness:
        # Column lengths do not depend on the desired index, so any plan shapes the atom.
        return self.randomness(self.plan(params, 1), seed)

    def column_lengths(self, params: SchemeParams) -> Tuple[int, ...]:
        """Equations downloaded from each database."""
        return tuple(len(column) for column in self.plan(params, 1).per_database)

    def randomness_space_size(self, params: SchemeParams) -> int:
        size = math.factorial(message_length(params)) ** params.K
        for length in self.column_lengths(params):
            size *= math.factorial(length)
        return size

    def log_randomness_space_size(self, params: SchemeParams) -> float:
        # lgamma(n + 1) = log(n!)
        log_size = params.K * math.lgamma(message_length(params) + 1)
        return log_size + sum(math.lgamma(length + 1) for length in self.column_lengths(params))

    def enumerate_atoms(self, params: SchemeParams) -> Iterator[Randomness]:
        plan = self.plan(params, 1)
        per_message = list(itertools.permutations(range(message_length(params))))
        per_column = [list(itertools.permutations(range(len(c)))) for c in plan.per_database]
        for perms in itertools.product(per_message, repeat=params.K):
            for shuffles in itertools.product(*per_column):
                yield Randomness(
                    seed=None,
                    permutations=tuple(np.array(p) for p in perms),
                    shuffles=tuple(np.array(s) for s in shuffles),
                )

    def query_keys_for_atom(self, params: SchemeParams, desired: int, atom: Randomness) -> Tuple[bytes, ...]:
        queries, _ = randomize(self.plan(params, desired), atom.seed or 0, randomness=atom)
        return tuple(serialize_query(q) for q in queries)

    def run_atom(
        self, params: SchemeParams, desired: int, store: MessageStore, seed: int, atom: Randomness
    ) -> SchemeRun:
        plan = self.plan(params, desired)
        queries, randomness = randomize(plan, seed, randomness=atom)
        answers = ReplicaSet(store, params.N).answer_all(queries)
        transcript = Transcript(
            params=params, desired=desired, queries=tuple(queries), answers=tuple(answers), seed=seed
        )
        decoded = decode(transcript, plan, randomness)
        return SchemeRun(
            scheme_id=self.scheme_id,
            params=params,
            desired=desired,
            seed=seed,
            query_keys=tuple(serialize_query(q) for q in queries),
            download_units=tuple(len(a.bits) for a in answers),
            desired_units=plan.bit_budget[DESIRED_SLOT],
            decoded=tuple(int(b) for b in decoded),
            transcript=transcript,
        )


class CapacityScheme(PlanScheme):
    scheme_id = "capacity"
    description = "capacity-achieving scheme for any K, N"

    def default_params(self) -> SchemeParams:
        return SchemeParams(K=2, N=2)

    def plan(self, params: SchemeParams, desired: int) -> SchemePlan:
        return build_plan(params, desired)

    def column_lengths(self, params: SchemeParams) -> Tuple[int, ...]:
        per_database = sum(count for _, count, _ in expected_block_counts(params))
        return (per_database,) * params.N


@lru_cache(maxsize=64)
def _desired_only_plan(params: SchemeParams, desired: int) -> SchemePlan:
    K, N = params.K, params.N
    if not 1 <= desired <= K:
        raise InvalidArgumentError(f"desired index {desired} outside [1, {K}]")
    per_database = N ** (K - 1)
    columns = tuple(
        tuple(
            SymbolicEquation((SymbolicBit(DESIRED_SLOT, n * per_database + j + 1),))
            for j in range(per_database)
        )
        for n in range(N)
    )
    return SchemePlan(
        params=params,
        desired=desired,
        per_database=columns,
        routing={},
        bit_budget=(N**K,) + (0,) * (K - 1),
    )


class BrokenNoMaskScheme(PlanScheme):
    """Fixture: downloads only desired bits, so every query reveals the index."""

    scheme_id = "broken-nomask"
    description = "non-private fixture: requests desired bits only"
    private = False

    def default_params(self) -> SchemeParams:
        return SchemeParams(K=2, N=2)

    def plan(self, params: SchemeParams, desired: int) -> SchemePlan:
        return _desired_only_plan(params, desired)

    def column_lengths(self, params: SchemeParams) -> Tuple[int, ...]:
        return (params.N ** (params.K - 1),) * params.N


class BrokenFixedPermScheme(CapacityScheme):
    """Fixture: capacity plan with identity bit permutations (only the order is shuffled)."""

    scheme_id = "broken-fixedperm"
    description = "non-private fixture: fixed bit permutations"
    private = False

    def randomness(self, plan: SchemePlan, seed: int) -> Randomness:
        rng = np.random.default_rng(seed)
        size = message_length(plan.params)
        return Randomness(
            seed=seed,
            permutations=tuple(np.arange(size) for _ in range(plan.params.K)),
            shuffles=tuple(rng.permutation(len(column)) for column in plan.per_database),
        )


# ============================================================================
# BASELINES
# ============================================================================

class XorScheme(SchemeProvider):
    scheme_id = "xor"
    description = "two-database mask vector scheme"

    def supports(self, params: SchemeParams) -> bool:
        return params.N == 2

    def default_params(self) -> SchemeParams:
        return SchemeParams(K=3, N=2)

    def sample_atom(self, params: SchemeParams, seed: int) -> Tuple[int, ...]:
        return tuple(np.random.default_rng(seed).integers(0, 2, size=params.K, dtype=np.uint8).tolist())

    def enumerate_atoms(self, params: SchemeParams) -> Iterator[Tuple[int, ...]]:
        return itertools.product((0, 1), repeat=params.K)

    def randomness_space_size(self, params: SchemeParams) -> int:
        return 2**params.K

    def query_keys_for_atom(self, params: SchemeParams, desired: int, atom: Tuple[int, ...]) -> Tuple[bytes, ...]:
        return tuple(q.to_bytes() for q in xor_queries(params.K, desired, atom))

    def run_atom(self, params, desired, store, seed, atom) -> SchemeRun:
        return xor_scheme_run(params.K, desired, store, seed, h=atom)


class _CoinScheme(SchemeProvider):
    def supports(self, params: SchemeParams) -> bool:
        return (params.K, params.N) == (2, 2)

    def default_params(self) -> SchemeParams:
        return SchemeParams(K=2, N=2)

    def sample_atom(self, params: SchemeParams, seed: int) -> GroupedChoice:
        return GroupedChoice.from_seed(seed)

    def enumerate_atoms(self, params: SchemeParams) -> Iterator[GroupedChoice]:
        return (GroupedChoice(coin=c) for c in (0, 1))

    def randomness_space_size(self, params: SchemeParams) -> int:
        return 2


class GroupedScheme(_CoinScheme):
    scheme_id = "grouped22"
    description = "K=2, N=2 scheme with two possible queries per database"

    def message_length(self, params: SchemeParams) -> int:
        return 4

    def query_keys_for_atom(self, params, desired, atom) -> Tuple[bytes, ...]:
        return tuple(serialize_query(q) for q in grouped_queries(desired, atom))

    def run_atom(self, params, desired, store, seed, atom) -> SchemeRun:
        return grouped_scheme_run(desired, store, seed, choice=atom)


class AsymScheme(_CoinScheme):
    scheme_id = "asym22"
    description = "K=2, N=2 asymmetric scheme with 2-bit messages"

    def message_length(self, params: SchemeParams) -> int:
        return 2

    def query_keys_for_atom(self, params, desired, atom) -> Tuple[bytes, ...]:
        return tuple(serialize_query(q) for q in asym_queries(desired, atom))

    def run_atom(self, params, desired, store, seed, atom) -> SchemeRun:
        return asym_scheme_run(desired, store, seed, choice=atom)


class F5AlignedScheme(SchemeProvider):
    scheme_id = "f5-aligned"
    description = "K=3, N=2 interference-aligned scheme over F5"
    unit = "symbol"
    binary = False

    def supports(self, params: SchemeParams) -> bool:
        return (params.K, params.N) == (3, 2)

    def default_params(self) -> SchemeParams:
        return SchemeParams(K=3, N=2)

    def generate_store(self, params: SchemeParams, seed: int) -> Tuple[int, ...]:
        return tuple(int(x) for x in np.random.default_rng(seed).integers(0, 5, size=3))

    def desired_message(self, store: Tuple[int, ...], desired: int) -> Tuple[int, ...]:
        return (store[desired - 1],)

    def enumerate_stores(self, params: SchemeParams) -> Iterator[Tuple[int, ...]]:
        return itertools.product(range(5), repeat=3)

    def store_space_size(self, params: SchemeParams) -> int:
        return 5**3

    def sample_atom(self, params: SchemeParams, seed: int) -> int:
        return int(np.random.default_rng(seed).integers(1, 4))

    def enumerate_atoms(self, params: SchemeParams) -> Iterator[int]:
        return iter((1, 2, 3))

    def randomness_space_size(self, params: SchemeParams) -> int:
        return 3

    def query_keys_for_atom(self, params, desired, atom) -> Tuple[bytes, ...]:
        return tuple(q.to_bytes() for q in f5_queries(desired, atom))

    def run_atom(self, params, desired, store, seed, atom) -> SchemeRun:
        return f5_scheme_run(desired, store, seed, row=atom)


REGISTRY: Dict[str, SchemeProvider] = {
    provider.scheme_id: provider
    for provider in (
        CapacityScheme(),
        XorScheme(),
        GroupedScheme(),
        F5AlignedScheme(),
        AsymScheme(),
        BrokenNoMaskScheme(),
        BrokenFixedPermScheme(),
    )
}


def get_scheme(scheme_id: str) -> SchemeProvider:
    """Look up a registered scheme by id."""
    try:
        return REGISTRY[scheme_id]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown scheme '{scheme_id}'; choose from {', '.join(REGISTRY)}"
        ) from None


def scheme_ids(include_fixtures: bool = True) -> List[str]:
    return [sid for sid, p in REGISTRY.items() if include_fixtures or p.private]


def describe_schemes() -> str:
    """One ``id: description`` entry per registered scheme, for ``--scheme`` help."""
    return "; ".join(f"{sid}: {REGISTRY[sid].description}" for sid in sorted(REGISTRY))


# ============================================================================
# EXHAUSTIVE LIMITS
# ============================================================================

# Absorbs lgamma rounding; sizes this close to the limit are compared exactly.
_LOG_SLACK = 1e-6


def within_limit(log_size: float, limit: int) -> bool:
    """True unless ``exp(log_size)`` clearly exceeds ``limit``."""
    return log_size <= math.log(limit) + _LOG_SLACK


def format_size(log_size: float, exact: Optional[int] = None) -> str:
    if exact is not None:
        return str(exact)
    return f"~10^{log_size / math.log(10):.0f}"


def require_exhaustive(provider: SchemeProvider, params: SchemeParams, limit: int) -> int:
    """Randomness-space size, or ``CapabilityRefusedError`` when it exceeds ``limit``.

    The size is compared in log space first, so huge spaces are refused without
    evaluating their factorials.
    """
    log_size = provider.log_randomness_space_size(params)
    size = provider.randomness_space_size(params) if within_limit(log_size, limit) else None
    if size is None or size > limit:
        raise CapabilityRefusedError(
            f"{provider.scheme_id} at {params} has {format_size(log_size, size)} "
            f"randomness atoms (limit {limit}); use --privacy structural or sampled"
        )
    return size
