"""
Combinatorial kernels for the schedulers.
Maximisation assignment on square matrices, exact 0/1 knapsack, the
m-cardinality transformation, and exhaustive oracles used by the tests.
"""

import functools
import logging
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import EnumerationBudgetExceeded

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 1 << 20
VIRTUAL_WEIGHT = 1.0


@dataclass(frozen=True)
class WeightMatrix:
    """
    Dense weight grid with a forbidden mask (True = the -M sentinel).
    Zero-sized axes are allowed; solvers treat them as empty problems.
    """
    cells: np.ndarray
    forbidden: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=float)
        forbidden = np.asarray(self.forbidden, dtype=bool)
        if cells.ndim != 2:
            raise ValueError(f'weight matrix must be 2-D, got shape {cells.shape}')
        if forbidden.shape != cells.shape:
            raise ValueError('forbidden mask shape does not match cells')
        if not np.isfinite(cells[~forbidden]).all():
            raise ValueError('non-forbidden weights must be finite')
        cells = np.where(forbidden, 0.0, cells)
        object.__setattr__(self, 'cells', cells)
        object.__setattr__(self, 'forbidden', forbidden)

    @classmethod
    def from_rows(cls, rows):
        """
        Build from nested lists; None marks a forbidden cell.
        """
        width = len(rows[0]) if rows else 0
        cells = np.zeros((len(rows), width))
        forbidden = np.zeros((len(rows), width), dtype=bool)
        for r, row in enumerate(rows):
            if len(row) != width:
                raise ValueError('ragged matrix rows')
            for c, value in enumerate(row):
                if value is None:
                    forbidden[r, c] = True
                else:
                    cells[r, c] = value
        return cls(cells, forbidden)

    @property
    def rows(self):
        return self.cells.shape[0]

    @property
    def cols(self):
        return self.cells.shape[1]

    def allowed(self, row, col):
        return not self.forbidden[row, col]


@dataclass(frozen=True)
class Matching:
    """
    One-to-one assignment: assignment[row] is a column index or None.
    """
    assignment: tuple
    objective: float

    def pairs(self):
        return [(r, c) for r, c in enumerate(self.assignment) if c is not None]


@dataclass(frozen=True)
class KnapsackResult:
    selected: tuple
    value: float


@dataclass(frozen=True)
class GapSolution:
    """
    Chunk (column) -> neighbor (row) map for the generalized assignment problem.
    """
    assignment: dict
    objective: float


class KnapsackSolver(Protocol):
    def __call__(self, values: Sequence[float], weights: Sequence[int], capacity: int) -> KnapsackResult:
        ...


def _objective(matrix, assignment):
    total = 0.0
    for r, c in enumerate(assignment):
        if c is not None:
            total += float(matrix.cells[r, c])
    return total


def hungarian_max(matrix):
    """
    Maximum-weight perfect matching on a square matrix.
    Forbidden cells get a finite penalty larger than any feasible objective; a row
    that still ends on a forbidden cell is reported as unassigned.
    When several matchings reach the optimum, which one comes back is up to
    linear_sum_assignment and is not specified.
    """
    if matrix.rows != matrix.cols:
        raise ValueError(f'hungarian_max needs a square matrix, got {matrix.rows}x{matrix.cols}')
    n = matrix.rows
    if n == 0:
        return Matching((), 0.0)

    allowed = ~matrix.forbidden
    finite_max = float(np.abs(matrix.cells[allowed]).max()) if allowed.any() else 0.0
    penalty = n * (finite_max + 1.0) + 1.0
    work = np.where(allowed, matrix.cells, -penalty)

    row_ind, col_ind = linear_sum_assignment(work, maximize=True)
    assignment = [None] * n
    for r, c in zip(row_ind, col_ind):
        if allowed[r, c]:
            assignment[int(r)] = int(c)
    return Matching(tuple(assignment), _objective(matrix, assignment))


def knapsack_max(values, weights, capacity):
    """
    Exact 0/1 knapsack over integer weights.
    Among optimal subsets the lexicographically smallest index set is returned.
    """
    if len(values) != len(weights):
        raise ValueError(f'{len(values)} values but {len(weights)} weights')
    if capacity < 0:
        raise ValueError(f'capacity must be >= 0, got {capacity}')
    if any(w < 1 for w in weights):
        raise ValueError('knapsack weights must be >= 1')

    n = len(values)
    if n == 0 or capacity == 0:
        return KnapsackResult((), 0.0)

    if all(w == 1 for w in weights):
        order = sorted(range(n), key=lambda i: (-values[i], i))
        chosen = sorted(i for i in order[:capacity] if values[i] > 0)
        return KnapsackResult(tuple(chosen), float(sum(values[i] for i in chosen)))

    # best[i, c]: optimum over items i.. with capacity c; take[i, c]: item i is in that optimum
    best = np.zeros((n + 1, capacity + 1))
    take = np.zeros((n, capacity + 1), dtype=bool)
    for i in range(n - 1, -1, -1):
        w, v = weights[i], values[i]
        best[i] = best[i + 1]
        if w <= capacity and v > 0:
            candidate = best[i + 1, :capacity + 1 - w] + v
            take[i, w:] = candidate >= best[i + 1, w:]
            best[i, w:] = np.where(take[i, w:], candidate, best[i + 1, w:])

    chosen = []
    c = capacity
    for i in range(n):
        if take[i, c]:
            chosen.append(i)
            c -= weights[i]
    return KnapsackResult(tuple(chosen), float(sum(values[i] for i in chosen)))


def square_for_assignment(matrix, virtual_weight=VIRTUAL_WEIGHT):
    """
    Square an m x l matrix for the assignment kernel.
    l > m: append l - m virtual rows of virtual_weight. m > l: append m - l dummy
    columns of virtual_weight. Forbidden and non-positive real cells become 0,
    the value of leaving a row unassigned, and the result carries no mask.
    """
    m, l = matrix.rows, matrix.cols
    n = max(m, l)
    cells = np.full((n, n), float(virtual_weight))
    real = np.where(matrix.forbidden, 0.0, np.maximum(matrix.cells, 0.0))
    cells[:m, :l] = real
    if l > m:
        cells[m:, :] = virtual_weight
    elif m > l:
        cells[:, l:] = virtual_weight
    return WeightMatrix(cells, np.zeros((n, n), dtype=bool))


def mcap_assignment(matrix, virtual_weight=VIRTUAL_WEIGHT):
    """
    Maximum-weight m-cardinality assignment through squaring + hungarian_max.
    Real cells are divided by their largest positive value before squaring so they
    sit on the same scale as virtual_weight. Only real rows matched to real,
    allowed, positive cells are kept; the objective is taken on the original weights.
    """
    m, l = matrix.rows, matrix.cols
    if m == 0 or l == 0:
        return Matching((None,) * m, 0.0)
    positive = ~matrix.forbidden & (matrix.cells > 0)
    scale = float(matrix.cells[positive].max()) if positive.any() else 1.0
    squared = square_for_assignment(
        WeightMatrix(np.where(positive, matrix.cells / scale, 0.0), matrix.forbidden), virtual_weight)
    solved = hungarian_max(squared)
    assignment = [None] * m
    for r in range(m):
        c = solved.assignment[r]
        if c is not None and c < l and not matrix.forbidden[r, c] and matrix.cells[r, c] > 0:
            assignment[r] = c
    return Matching(tuple(assignment), _objective(matrix, assignment))


def brute_force_mcap(matrix, budget=DEFAULT_BUDGET):
    """
    Exhaustive m-cardinality optimum: every row takes an unused allowed column or
    stays unassigned (contributing 0). Searches all (row, used-column-set) states.
    """
    m, l = matrix.rows, matrix.cols
    if m * (1 << l) > budget:
        raise EnumerationBudgetExceeded(f'{m}x{l} instance exceeds enumeration budget {budget}')

    cells = matrix.cells.tolist()
    allowed = (~matrix.forbidden).tolist()

    @functools.lru_cache(maxsize=None)
    def best(row, used):
        if row == m:
            return 0.0
        value = best(row + 1, used)
        for col in range(l):
            if allowed[row][col] and not used >> col & 1:
                value = max(value, cells[row][col] + best(row + 1, used | 1 << col))
        return value

    assignment = [None] * m
    used = 0
    for row in range(m):
        target = best(row, used)
        for col in range(l):
            if not allowed[row][col] or cells[row][col] <= 0 or used >> col & 1:
                continue
            if cells[row][col] + best(row + 1, used | 1 << col) == target:
                assignment[row] = col
                used |= 1 << col
                break
    return Matching(tuple(assignment), _objective(matrix, assignment))


def brute_force_gap(priorities, capacities, sizes, budget=DEFAULT_BUDGET):
    """
    Exhaustive optimum of the capacity-constrained chunk assignment: each chunk goes
    to at most one holder, and per-row total size stays within capacity.
    """
    rows, cols = priorities.rows, priorities.cols
    if len(capacities) != rows or len(sizes) != cols:
        raise ValueError('capacities/sizes do not match the matrix shape')

    holders = [[r for r in range(rows) if not priorities.forbidden[r, c]] for c in range(cols)]
    candidates = math.prod(len(h) + 1 for h in holders)
    if candidates > budget:
        raise EnumerationBudgetExceeded(f'{candidates} candidate maps exceed enumeration budget {budget}')

    cells = priorities.cells.tolist()
    residual = list(capacities)
    current = {}
    best = {'objective': 0.0, 'assignment': {}}

    def search(col, total):
        if col == cols:
            if total > best['objective']:
                best['objective'] = total
                best['assignment'] = dict(current)
            return
        for r in holders[col]:
            if residual[r] >= sizes[col]:
                residual[r] -= sizes[col]
                current[col] = r
                search(col + 1, total + cells[r][col])
                del current[col]
                residual[r] += sizes[col]
        search(col + 1, total)

    search(0, 0.0)
    objective = sum(cells[r][c] for c, r in sorted(best['assignment'].items()))
    return GapSolution(best['assignment'], float(objective))
