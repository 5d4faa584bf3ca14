"""
Tests for query and answer framing.
"""

import struct

import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st

from pirlab.exceptions import WireFormatError
from pirlab.models import AnswerString, DatabaseQuery, Equation, SchemeParams
from pirlab.scheme import build_plan, randomize
from pirlab.wire import (
    MAGIC,
    ROLE_ANSWER,
    deserialize_answer,
    deserialize_query,
    serialize_answer,
    serialize_query,
)

HEADER_SIZE = 11


class TestQueryFrames:
    def test_single_equation_layout(self):
        query = DatabaseQuery(database=1, equations=(Equation.of((1, 0)),))
        data = serialize_query(query)
        assert data[:4] == MAGIC
        assert data[4] == 0x01
        assert struct.unpack(">HI", data[5:11]) == (1, 1)
        assert data[HEADER_SIZE:] == struct.pack(">HHI", 1, 1, 0)
        assert deserialize_query(data) == query

    def test_empty_query(self):
        query = DatabaseQuery(database=4)
        data = serialize_query(query)
        assert len(data) == HEADER_SIZE
        assert deserialize_query(data) == query

    def test_terms_written_in_canonical_order(self):
        query = DatabaseQuery(database=2, equations=(Equation.of((3, 1), (1, 9)),))
        data = serialize_query(query)
        assert struct.unpack(">HIHI", data[HEADER_SIZE + 2:]) == (1, 9, 3, 1)

    def test_full_k3_n3_database_query(self):
        plan = build_plan(SchemeParams(K=3, N=3), 1)
        queries, _ = randomize(plan, seed=42)
        first = queries[0]
        assert len(first.equations) == 13
        data = serialize_query(first)
        parsed = deserialize_query(data)
        assert parsed == first
        assert serialize_query(parsed) == data

    def test_bad_magic(self):
        data = b"XXXX" + serialize_query(DatabaseQuery(database=1))[4:]
        with pytest.raises(WireFormatError) as exc:
            deserialize_query(data)
        assert exc.value.offset == 0

    def test_wrong_role(self):
        data = serialize_answer(AnswerString(database=1, bits=(1,)))
        with pytest.raises(WireFormatError) as exc:
            deserialize_query(data)
        assert exc.value.offset == 4

    def test_short_header(self):
        with pytest.raises(WireFormatError) as exc:
            deserialize_query(MAGIC)
        assert exc.value.offset == 4

    def test_truncated_terms(self):
        data = serialize_query(DatabaseQuery(database=1, equations=(Equation.of((1, 0), (2, 0)),)))
        with pytest.raises(WireFormatError) as exc:
            deserialize_query(data[:-3])
        assert exc.value.offset == HEADER_SIZE + 2

    def test_missing_record(self):
        data = serialize_query(DatabaseQuery(database=1, equations=(Equation.of((1, 0)),)))
        with pytest.raises(WireFormatError) as exc:
            deserialize_query(data[:HEADER_SIZE])
        assert exc.value.offset == HEADER_SIZE

    def test_trailing_bytes(self):
        data = serialize_query(DatabaseQuery(database=1)) + b"\x00"
        with pytest.raises(WireFormatError) as exc:
            deserialize_query(data)
        assert exc.value.offset == HEADER_SIZE

    def test_duplicate_terms_rejected(self):
        header = struct.pack(">4sBHI", MAGIC, 0x01, 1, 1)
        record = struct.pack(">HHIHI", 2, 1, 0, 1, 0)
        with pytest.raises(WireFormatError) as exc:
            deserialize_query(header + record)
        assert exc.value.offset == HEADER_SIZE

    def test_zero_message_index_rejected(self):
        header = struct.pack(">4sBHI", MAGIC, 0x01, 1, 1)
        record = struct.pack(">HHI", 1, 0, 0)
        with pytest.raises(WireFormatError) as exc:
            deserialize_query(header + record)
        assert exc.value.offset == HEADER_SIZE + 2

    @hypothesis_settings(max_examples=60, deadline=None)
    @given(
        database=st.integers(1, 2**16 - 1),
        equations=st.lists(
            st.sets(st.tuples(st.integers(1, 2**16 - 1), st.integers(0, 2**32 - 1)), min_size=1, max_size=5),
            max_size=6,
        ),
    )
    def test_round_trip(self, database, equations):
        query = DatabaseQuery(database=database, equations=tuple(Equation.of(*terms) for terms in equations))
        assert deserialize_query(serialize_query(query)) == query


class TestAnswerFrames:
    @staticmethod
    def _payload(answer: AnswerString) -> bytes:
        return serialize_answer(answer)[HEADER_SIZE + 4:]

    def test_single_bit_is_msb_first(self):
        assert self._payload(AnswerString(database=1, bits=(1,))) == b"\x80"

    def test_alternating_byte(self):
        assert self._payload(AnswerString(database=1, bits=(1, 0, 1, 0, 1, 0, 1, 0))) == b"\xaa"

    def test_thirteen_bits_pad_with_zeros(self):
        answer = AnswerString(database=3, bits=(1,) * 13)
        data = serialize_answer(answer)
        assert data[4] == ROLE_ANSWER
        assert struct.unpack(">I", data[HEADER_SIZE:HEADER_SIZE + 4]) == (13,)
        assert self._payload(answer) == b"\xff\xf8"
        assert deserialize_answer(data) == answer

    def test_empty_answer(self):
        answer = AnswerString(database=2)
        data = serialize_answer(answer)
        assert len(data) == HEADER_SIZE + 4
        assert deserialize_answer(data) == answer

    def test_nonzero_padding_rejected(self):
        data = bytearray(serialize_answer(AnswerString(database=1, bits=(1, 0, 1))))
        data[-1] |= 0x01
        with pytest.raises(WireFormatError) as exc:
            deserialize_answer(bytes(data))
        assert exc.value.offset == HEADER_SIZE + 4

    def test_truncated_payload(self):
        data = serialize_answer(AnswerString(database=1, bits=(1,) * 9))
        with pytest.raises(WireFormatError):
            deserialize_answer(data[:-1])

    def test_multiple_record_blocks_rejected(self):
        data = bytearray(serialize_answer(AnswerString(database=1, bits=(1,))))
        data[10] = 2
        with pytest.raises(WireFormatError) as exc:
            deserialize_answer(bytes(data))
        assert exc.value.offset == 7

    @hypothesis_settings(max_examples=60, deadline=None)
    @given(bits=st.lists(st.integers(0, 1), max_size=70))
    def test_round_trip(self, bits):
        answer = AnswerString(database=1, bits=tuple(bits))
        assert deserialize_answer(serialize_answer(answer)) == answer
