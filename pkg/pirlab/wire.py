"""
Bit-exact framing of queries and answers.

Frame layout (all integers big-endian)::

    magic "PIR1" (4) | role (1) | database index u16 | record count u32 | records

Query records are ``term count u16`` followed by ``message u16, bit u32`` per
term, terms in canonical (message, bit) order. An answer frame carries exactly
one record block: ``bit count u32`` followed by the bits packed MSB-first, the
final partial byte zero-padded.
"""

import struct
from typing import Tuple

import numpy as np
from pydantic import ValidationError

from pirlab.exceptions import WireFormatError
from pirlab.models import AnswerString, BitRef, DatabaseQuery, Equation

MAGIC = b"PIR1"
ROLE_QUERY = 0x01
ROLE_ANSWER = 0x02

_HEADER = struct.Struct(">4sBHI")
_TERM_COUNT = struct.Struct(">H")
_TERM = struct.Struct(">HI")
_BIT_COUNT = struct.Struct(">I")


def _encode_header(role: int, database: int, count: int) -> bytes:
    return _HEADER.pack(MAGIC, role, database, count)


def _decode_header(data: bytes, expected_role: int) -> Tuple[int, int]:
    if len(data) < _HEADER.size:
        raise WireFormatError("frame shorter than header", len(data))
    magic, role, database, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise WireFormatError("invalid frame magic", 0)
    if role != expected_role:
        raise WireFormatError(f"unexpected role byte 0x{role:02x}", 4)
    if database < 1:
        raise WireFormatError("database index must be at least 1", 5)
    return database, count


def serialize_query(q: DatabaseQuery) -> bytes:
    """Encode a query frame."""
    parts = [_encode_header(ROLE_QUERY, q.database, len(q.equations))]
    for equation in q.equations:
        parts.append(_TERM_COUNT.pack(len(equation.terms)))
        parts.extend(_TERM.pack(ref.message, ref.bit) for ref in equation.terms)
    return b"".join(parts)


def deserialize_query(data: bytes) -> DatabaseQuery:
    """Parse a query frame; raises ``WireFormatError`` with the failing offset."""
    database, count = _decode_header(data, ROLE_QUERY)
    offset = _HEADER.size
    equations = []
    for _ in range(count):
        if offset + _TERM_COUNT.size > len(data):
            raise WireFormatError("truncated equation record", offset)
        record_start = offset
        (term_count,) = _TERM_COUNT.unpack_from(data, offset)
        offset += _TERM_COUNT.size
        if offset + term_count * _TERM.size > len(data):
            raise WireFormatError("truncated term list", offset)
        terms = []
        for _ in range(term_count):
            message, bit = _TERM.unpack_from(data, offset)
            offset += _TERM.size
            try:
                terms.append(BitRef(message=message, bit=bit))
            except ValidationError as e:
                raise WireFormatError(f"invalid term: {e.errors()[0]['msg']}", offset - _TERM.size)
        try:
            equations.append(Equation(terms=tuple(terms)))
        except ValidationError as e:
            raise WireFormatError(f"invalid equation: {e.errors()[0]['msg']}", record_start)
    if offset != len(data):
        raise WireFormatError("trailing bytes after last record", offset)
    return DatabaseQuery(database=database, equations=tuple(equations))


def serialize_answer(a: AnswerString) -> bytes:
    """Encode an answer frame."""
    packed = np.packbits(np.array(a.bits, dtype=np.uint8)).tobytes() if a.bits else b""
    return _encode_header(ROLE_ANSWER, a.database, 1) + _BIT_COUNT.pack(len(a.bits)) + packed


def deserialize_answer(data: bytes) -> AnswerString:
    """Parse an answer frame; raises ``WireFormatError`` with the failing offset."""
    database, count = _decode_header(data, ROLE_ANSWER)
    if count != 1:
        raise WireFormatError(f"answer frames carry one record block, found {count}", 7)
    offset = _HEADER.size
    if offset + _BIT_COUNT.size > len(data):
        raise WireFormatError("truncated bit count", offset)
    (bit_count,) = _BIT_COUNT.unpack_from(data, offset)
    offset += _BIT_COUNT.size
    n_bytes = (bit_count + 7) // 8
    payload = data[offset:offset + n_bytes]
    if len(payload) != n_bytes:
        raise WireFormatError("truncated bit payload", len(data))
    if offset + n_bytes != len(data):
        raise WireFormatError("trailing bytes after bit payload", offset + n_bytes)
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
    if np.any(bits[bit_count:]):
        raise WireFormatError("non-zero padding bits", offset + n_bytes - 1)
    return AnswerString(database=database, bits=tuple(int(b) for b in bits[:bit_count]))
