"""
Replicated databases and their answering logic.

Each of the N non-communicating databases stores all K messages and answers a
query deterministically from the query and the stored data alone.
"""

import logging
from typing import List, Sequence

import numpy as np
from joblib import Parallel, delayed

from pirlab.config import settings
from pirlab.exceptions import BitRefRangeError, InvalidArgumentError
from pirlab.models import AnswerString, DatabaseQuery, MessageStore

logger = logging.getLogger(__name__)


def answer_query(q: DatabaseQuery, store: MessageStore) -> AnswerString:
    """Evaluate every equation of ``q`` on ``store``; bit j answers equation j."""
    if not q.equations:
        return AnswerString(database=q.database, bits=())

    messages = np.fromiter(
        (ref.message for eq in q.equations for ref in eq.terms), dtype=np.int64
    )
    bit_indices = np.fromiter(
        (ref.bit for eq in q.equations for ref in eq.terms), dtype=np.int64
    )
    if messages.max() > store.K:
        raise BitRefRangeError(f"query references message {messages.max()} but store holds {store.K}")
    if bit_indices.max() >= store.L:
        raise InvalidArgumentError(
            f"store too short: query to database {q.database} needs bit {bit_indices.max()}, "
            f"messages hold {store.L} bits"
        )

    offsets = np.cumsum([0] + [len(eq.terms) for eq in q.equations[:-1]])
    values = store.bits[messages - 1, bit_indices]
    bits = np.bitwise_xor.reduceat(values, offsets)
    return AnswerString(database=q.database, bits=tuple(int(b) for b in bits))


class DatabaseServer:
    """One database replica holding the full message store."""

    def __init__(self, index: int, store: MessageStore):
        self.index = index
        self.store = store
        self.queries_served = 0

    def answer(self, query: DatabaseQuery) -> AnswerString:
        """Answer a query addressed to this database."""
        if query.database != self.index:
            raise InvalidArgumentError(
                f"query for database {query.database} sent to database {self.index}"
            )
        answer = answer_query(query, self.store)
        self.queries_served += 1
        logger.debug(f"DB{self.index} answered {len(answer.bits)} equations")
        return answer


class ReplicaSet:
    """The N replicated databases of one retrieval session."""

    def __init__(self, store: MessageStore, num_databases: int):
        if num_databases < 1:
            raise InvalidArgumentError("at least one database is required")
        self.store = store
        self.servers: List[DatabaseServer] = [
            DatabaseServer(n, store) for n in range(1, num_databases + 1)
        ]

    def server(self, index: int) -> DatabaseServer:
        """Database ``index`` (1-based)."""
        if not 1 <= index <= len(self.servers):
            raise InvalidArgumentError(f"no database {index} among {len(self.servers)}")
        return self.servers[index - 1]

    def answer_all(self, queries: Sequence[DatabaseQuery]) -> List[AnswerString]:
        """Send one query to each database; answers come back in database order."""
        if len(queries) != len(self.servers):
            raise InvalidArgumentError(
                f"expected {len(self.servers)} queries, got {len(queries)}"
            )
        if settings.n_jobs == 1:
            return [self.server(q.database).answer(q) for q in queries]
        return Parallel(n_jobs=settings.n_jobs, prefer="threads")(
            delayed(self.server(q.database).answer)(q) for q in queries
        )
