"""
Finite-field helpers shared by the decoders.

GF(2) elimination recovers desired bits from any set of downloaded sums, and
GF(5) null-space arithmetic derives the interference-alignment decoders.
"""

import logging
from typing import Optional, Sequence, Tuple

import galois
import numpy as np

from pirlab.exceptions import DecodeError
from pirlab.models import Equation

logger = logging.getLogger(__name__)

GF2 = galois.GF(2)
GF5 = galois.GF(5)


def coefficient_matrix(
    equations: Sequence[Equation], variables: Sequence[Tuple[int, int]]
) -> galois.FieldArray:
    """GF(2) matrix with one row per equation and one column per ``(message, bit)``."""
    column = {key: j for j, key in enumerate(variables)}
    rows = np.zeros((len(equations), len(variables)), dtype=np.uint8)
    for r, equation in enumerate(equations):
        for ref in equation.terms:
            rows[r, column[ref.key]] = 1
    return GF2(rows)


def solve_combination(
    rows: galois.FieldArray, target: galois.FieldArray
) -> Optional[galois.FieldArray]:
    """Coefficients ``c`` with ``c @ rows == target``, or None when ``target`` is not spanned."""
    field = type(rows)
    m = rows.shape[0]
    augmented = field(np.hstack([np.asarray(rows).T, np.asarray(target).reshape(-1, 1)]))
    reduced = augmented.row_reduce()
    solution = field.Zeros(m)
    for row in reduced:
        pivots = np.flatnonzero(np.asarray(row))
        if pivots.size == 0:
            continue
        if pivots[0] == m:
            return None
        solution[pivots[0]] = row[m]
    return solution


def decode_by_elimination(
    equations: Sequence[Equation], answers: Sequence[int], desired: int, K: int, L: int
) -> np.ndarray:
    """Recover all L bits of message ``desired`` from downloaded sums and their values."""
    variables = [(m, b) for m in range(1, K + 1) for b in range(L)]
    rows = coefficient_matrix(equations, variables)
    values = GF2(np.asarray(answers, dtype=np.uint8))
    message = np.zeros(L, dtype=np.uint8)
    for b in range(L):
        target = GF2.Zeros(len(variables))
        target[variables.index((desired, b))] = 1
        combination = solve_combination(rows, target)
        if combination is None:
            raise DecodeError(f"W{desired}[{b}] is not recoverable from the downloaded sums")
        message[b] = int(combination @ values)
    return message


def rank(matrix: galois.FieldArray) -> int:
    return int(np.linalg.matrix_rank(matrix))


def alignment_coefficients(
    matrix: galois.FieldArray, desired_column: int
) -> galois.FieldArray:
    """Row combination of ``matrix`` that cancels every column but ``desired_column``
    and leaves a unit coefficient on it.

    Requires the undesired columns to collapse into a single dimension and the
    desired column to lie outside it.
    """
    field = type(matrix)
    undesired = np.delete(np.asarray(matrix), desired_column, axis=1)
    undesired = field(undesired)
    if rank(undesired) != undesired.shape[0] - 1:
        raise ValueError(
            f"undesired submatrix has rank {rank(undesired)}, alignment needs {undesired.shape[0] - 1}"
        )
    null = undesired.left_null_space()
    combination = null[0]
    scale = combination @ matrix[:, desired_column]
    if scale == 0:
        raise ValueError("desired column lies in the aligned interference direction")
    return combination / scale
