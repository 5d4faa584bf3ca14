"""
Pydantic models for pirlab.

These models represent the objects exchanged between a user and the N
replicated databases (queries, answering strings, transcripts) and the reports
produced by the verifiers. Message and database indices are 1-based everywhere,
matching the usual W_1..W_K / DB1..DBN numbering; bit indices are 0-based.
"""

from fractions import Fraction
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SchemeParams(BaseModel):
    """Problem size: K messages replicated on N databases."""

    model_config = ConfigDict(frozen=True)

    K: int = Field(..., ge=1, description="Number of messages")
    N: int = Field(..., ge=1, description="Number of databases")

    def __str__(self) -> str:
        return f"K={self.K}, N={self.N}"


class MessageStore(BaseModel):
    """K equal-length binary messages, stored as a read-only K x L array."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    bits: np.ndarray

    @field_validator("bits", mode="before")
    @classmethod
    def _as_bit_array(cls, value):
        array = np.array(value, dtype=np.uint8)
        if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
            raise ValueError("message store must be a non-empty K x L array")
        if np.any(array > 1):
            raise ValueError("message store holds binary values only")
        array.flags.writeable = False
        return array

    @property
    def K(self) -> int:
        return int(self.bits.shape[0])

    @property
    def L(self) -> int:
        return int(self.bits.shape[1])

    def message(self, index: int) -> np.ndarray:
        """Bits of message ``index`` (1-based)."""
        return self.bits[index - 1]

    def zero_message(self, index: int) -> "MessageStore":
        """Copy of this store with message ``index`` replaced by zeros."""
        bits = self.bits.copy()
        bits[index - 1, :] = 0
        return MessageStore(bits=bits)

    def window(self, start: int, stop: int) -> "MessageStore":
        """Store restricted to bit positions ``[start, stop)`` of every message."""
        return MessageStore(bits=self.bits[:, start:stop])


class BitRef(BaseModel):
    """One bit of one message: (message id, bit index)."""

    model_config = ConfigDict(frozen=True)

    message: int = Field(..., ge=1, lt=2**16)
    bit: int = Field(..., ge=0, lt=2**32)

    @property
    def key(self) -> Tuple[int, int]:
        return (self.message, self.bit)


class Equation(BaseModel):
    """GF(2) sum of distinct bits; the atomic download unit."""

    model_config = ConfigDict(frozen=True)

    terms: Tuple[BitRef, ...]

    @field_validator("terms")
    @classmethod
    def _canonical_terms(cls, terms: Tuple[BitRef, ...]) -> Tuple[BitRef, ...]:
        if not terms:
            raise ValueError("an equation needs at least one term")
        ordered = tuple(sorted(terms, key=lambda ref: ref.key))
        for left, right in zip(ordered, ordered[1:]):
            if left.key == right.key:
                raise ValueError(f"duplicate term W{left.message}[{left.bit}]")
        return ordered

    @classmethod
    def of(cls, *pairs: Tuple[int, int]) -> "Equation":
        """Build an equation from ``(message, bit)`` pairs."""
        return cls(terms=tuple(BitRef(message=m, bit=b) for m, b in pairs))

    @property
    def signature(self) -> Tuple[int, ...]:
        """Sorted message indices among the terms."""
        return tuple(sorted({ref.message for ref in self.terms}))

    def __str__(self) -> str:
        return "+".join(f"W{ref.message}[{ref.bit}]" for ref in self.terms)


class DatabaseQuery(BaseModel):
    """Ordered equations requested from one database (Q_n)."""

    model_config = ConfigDict(frozen=True)

    database: int = Field(..., ge=1, lt=2**16)
    equations: Tuple[Equation, ...] = ()

    def has_unique_bits(self) -> bool:
        """True when no bit reference occurs in two equations of this query."""
        seen = set()
        for equation in self.equations:
            for ref in equation.terms:
                if ref.key in seen:
                    return False
                seen.add(ref.key)
        return True


class AnswerString(BaseModel):
    """Bits returned by one database (A_n), one per equation of its query."""

    model_config = ConfigDict(frozen=True)

    database: int = Field(..., ge=1, lt=2**16)
    bits: Tuple[int, ...] = ()

    @field_validator("bits")
    @classmethod
    def _binary(cls, bits: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(b not in (0, 1) for b in bits):
            raise ValueError("answer bits must be 0 or 1")
        return bits


class Transcript(BaseModel):
    """Queries sent and answers received for one retrieval."""

    model_config = ConfigDict(frozen=True)

    params: SchemeParams
    desired: int = Field(..., ge=1)
    queries: Tuple[DatabaseQuery, ...]
    answers: Tuple[AnswerString, ...]
    seed: int

    @model_validator(mode="after")
    def _one_per_database(self) -> "Transcript":
        N = self.params.N
        if self.desired > self.params.K:
            raise ValueError(f"desired index {self.desired} outside [1, {self.params.K}]")
        if len(self.queries) != N or len(self.answers) != N:
            raise ValueError(f"expected exactly {N} queries and {N} answers")
        for n, (query, answer) in enumerate(zip(self.queries, self.answers), start=1):
            if query.database != n or answer.database != n:
                raise ValueError(f"database {n} query/answer out of order")
            if len(answer.bits) != len(query.equations):
                raise ValueError(f"database {n} answer length does not match its query")
        return self

    @property
    def download_bits(self) -> int:
        return sum(len(answer.bits) for answer in self.answers)


class SchemeRun(BaseModel):
    """Result of running one registered scheme end to end.

    ``query_keys`` are the serialized per-database queries exactly as a database
    would see them; the privacy checkers only ever look at these.
    ``transcript`` holds the bit-equation queries and answers; schemes whose
    queries are not bit equations (mask vectors, F5 rows) leave it unset and
    carry their query objects in ``native_queries`` instead.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    scheme_id: str
    params: SchemeParams
    desired: int
    seed: int
    query_keys: Tuple[bytes, ...]
    download_units: Tuple[int, ...]
    desired_units: int
    decoded: Tuple[int, ...]
    transcript: Optional[Transcript] = None
    native_queries: Tuple[BaseModel, ...] = ()

    @property
    def upload_bits(self) -> int:
        return 8 * sum(len(key) for key in self.query_keys)

    @property
    def download_total(self) -> int:
        return sum(self.download_units)


# ============================================================================
# VERIFIER REPORTS
# ============================================================================

class SignatureProfile(BaseModel):
    """Count of equations per message signature within one database query."""

    model_config = ConfigDict(frozen=True)

    counts: Dict[Tuple[int, ...], int] = Field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_text(self) -> str:
        ordered = sorted(self.counts.items(), key=lambda item: (len(item[0]), item[0]))
        return " ".join(f"{format_signature(sig)}:{count}" for sig, count in ordered)


class PrivacyWitness(BaseModel):
    """First observation that distinguishes two desired indices."""

    database: int
    desired_pair: Tuple[int, int]
    signature: Optional[str] = None
    query_key: Optional[str] = None
    detail: Optional[str] = None


class DatabaseVerdict(BaseModel):
    """Privacy verdict for a single database."""

    database: int
    verdict: Literal["pass", "fail", "inconclusive"]
    tv_distance: Optional[str] = None
    p_value: Optional[float] = None
    support_size: Optional[int] = None
    profile: Optional[str] = None


class PrivacyReport(BaseModel):
    """Outcome of one privacy check."""

    scheme_id: str
    params: SchemeParams
    mode: Literal["structural", "exhaustive", "sampled"]
    verdict: Literal["pass", "fail", "inconclusive"]
    per_database: List[DatabaseVerdict] = Field(default_factory=list)
    statistic: Optional[float] = None
    tv_distance: Optional[str] = None
    p_value: Optional[float] = None
    trials: Optional[int] = None
    witness: Optional[PrivacyWitness] = None
    notes: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _pass_has_no_witness(self) -> "PrivacyReport":
        if self.verdict == "pass" and self.witness is not None:
            raise ValueError("a passing privacy report cannot carry a witness")
        return self

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


class CorrectnessFailure(BaseModel):
    """One failed retrieval: seed, desired index, first mismatching bit."""

    seed: int
    desired: int
    bit_index: int


class CorrectnessReport(BaseModel):
    """Outcome of repeated retrieve-and-compare trials."""

    scheme_id: str
    params: SchemeParams
    trials: int = 0
    retrievals: int = 0
    failures: List[CorrectnessFailure] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def merge(self, other: "CorrectnessReport") -> "CorrectnessReport":
        """Combine two reports of the same scheme and parameters."""
        if (self.scheme_id, self.params) != (other.scheme_id, other.params):
            raise ValueError("cannot merge reports of different schemes")
        return CorrectnessReport(
            scheme_id=self.scheme_id,
            params=self.params,
            trials=self.trials + other.trials,
            retrievals=self.retrievals + other.retrievals,
            failures=self.failures + other.failures,
        )


class RateReport(BaseModel):
    """Measured rate of a scheme against the capacity formula."""

    scheme_id: str
    params: SchemeParams
    achieved: str
    capacity: str
    lower_bound: str
    meets_capacity: bool
    exceeds_capacity: bool
    notes: List[str] = Field(default_factory=list)


class RunSummary(BaseModel):
    """Summary of one end-to-end retrieval as printed by the CLI."""

    scheme_id: str
    params: SchemeParams
    desired: int
    seed: int
    message_bits: int
    chunks: int = 1
    rate: str
    capacity: str
    bits_up: int
    bits_down: int
    decode_ok: bool


class VerifySummary(BaseModel):
    """Reports produced by one ``verify`` invocation."""

    privacy: Optional[PrivacyReport] = None
    correctness: Optional[CorrectnessReport] = None
    rate: Optional[RateReport] = None
    passed: bool


class RunConfig(BaseModel):
    """Validated command-line configuration shared by ``run`` and ``verify``."""

    scheme_id: str = "capacity"
    K: int = Field(..., ge=1)
    N: int = Field(..., ge=1)
    desired: Union[int, Literal["all"]] = "all"
    seed: int = Field(0, ge=0)
    trials: int = Field(1, ge=1)
    output_format: Literal["text", "json", "csv"] = "text"
    output_path: Optional[str] = None

    @model_validator(mode="after")
    def _desired_in_range(self) -> "RunConfig":
        if self.desired != "all" and not 1 <= self.desired <= self.K:
            raise ValueError(f"desired index {self.desired} outside [1, {self.K}]")
        return self

    @property
    def params(self) -> SchemeParams:
        return SchemeParams(K=self.K, N=self.N)

    def desired_indices(self) -> List[int]:
        if self.desired == "all":
            return list(range(1, self.K + 1))
        return [self.desired]


def format_signature(signature: Tuple[int, ...]) -> str:
    """Render a signature as ``{1,2}``."""
    return "{" + ",".join(str(m) for m in signature) + "}"


def format_fraction(value: Fraction) -> str:
    """Render an exact rational as ``p/q`` (always with a denominator)."""
    return f"{value.numerator}/{value.denominator}"
