"""
Binary contingency tables with prescribed margins

One margin is enforced exactly by the configuration space (the "branch"),
the other is scored: -sum |line sum - target|. The kernel moves a single 1
within its enforced line, so the enforced margin never changes.

Internally the row branch works on the transposed matrix, so the sweep is
written once, for the column branch.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from errors import InfeasibleMargins, ParseError
from models.base import CountingModel, State, choose_admissible, shuffled_columns
from utils.helpers import decode_text, exact_binomial, log_of_count, read_text

logger = logging.getLogger(__name__)

BRANCHES = ('column', 'row', 'auto')


@dataclass(frozen=True)
class TableInstance:
    """Row sums r (length m), column sums c (length n)"""
    row_sums: Tuple[int, ...]
    col_sums: Tuple[int, ...]
    branch: str = 'auto'
    source: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'row_sums', tuple(int(v) for v in self.row_sums))
        object.__setattr__(self, 'col_sums', tuple(int(v) for v in self.col_sums))
        m, n = self.shape
        if m == 0 or n == 0:
            raise InfeasibleMargins("margins must be non-empty")
        if self.branch not in BRANCHES:
            raise InfeasibleMargins(f"branch must be one of {BRANCHES}, got {self.branch!r}")
        if sum(self.row_sums) != sum(self.col_sums):
            raise InfeasibleMargins(
                f"row sums total {sum(self.row_sums)} but column sums total {sum(self.col_sums)}"
            )
        if any(not 0 <= r <= n for r in self.row_sums):
            raise InfeasibleMargins(f"row sums must lie in [0, {n}]")
        if any(not 0 <= c <= m for c in self.col_sums):
            raise InfeasibleMargins(f"column sums must lie in [0, {m}]")

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.row_sums), len(self.col_sums)

    def branch_count(self, branch: str) -> int:
        """|X^(c)| or |X^(r)| exactly"""
        m, n = self.shape
        total = 1
        if branch == 'column':
            for c in self.col_sums:
                total *= exact_binomial(m, c)
        else:
            for r in self.row_sums:
                total *= exact_binomial(n, r)
        return total

    def is_realizable(self) -> bool:
        """Gale–Ryser: some 0-1 matrix carries both margins"""
        rows = np.sort(np.asarray(self.row_sums, dtype=np.int64))[::-1]
        cols = np.asarray(self.col_sums, dtype=np.int64)
        k = np.arange(1, len(rows) + 1)
        capacity = np.minimum(cols[None, :], k[:, None]).sum(axis=1)
        return bool((np.cumsum(rows) <= capacity).all())

    def resolved_branch(self) -> str:
        """Requested branch, or the one with the smaller space for 'auto'"""
        if self.branch != 'auto':
            return self.branch
        if self.branch_count('row') < self.branch_count('column'):
            return 'row'
        return 'column'


def parse_table_spec(text: Union[str, bytes], source: Optional[str] = None,
                     branch: Optional[str] = None) -> TableInstance:
    """JSON object with integer arrays "r" and "c", optional "branch"

    An explicit `branch` argument overrides the file's.
    """
    if isinstance(text, bytes):
        text = decode_text(text, source)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", e.lineno) from None

    if not isinstance(data, dict) or 'r' not in data or 'c' not in data:
        raise ParseError('table spec must be an object with "r" and "c" arrays')

    margins = []
    for name in ('r', 'c'):
        values = data[name]
        if not isinstance(values, list) or not all(isinstance(v, int) and not isinstance(v, bool)
                                                   for v in values):
            raise ParseError(f'"{name}" must be an array of integers')
        margins.append(tuple(values))

    chosen = branch or data.get('branch', 'auto')
    if chosen not in BRANCHES:
        raise ParseError(f'"branch" must be one of {", ".join(BRANCHES)}')

    return TableInstance(margins[0], margins[1], chosen, source)


def load_table_spec(path: Union[str, Path], branch: Optional[str] = None) -> TableInstance:
    """Read a table spec file"""
    path = Path(path)
    return parse_table_spec(read_text(path), source=str(path), branch=branch)


class TableModel(CountingModel):
    """Counting model over one margin-exact branch of 0-1 matrices"""

    def __init__(self, inst: TableInstance):
        self.inst = inst
        self.branch = inst.resolved_branch()
        m, n = inst.shape

        # Oriented view: enforced sums run along the columns of the oriented matrix
        if self.branch == 'column':
            self.enforced = np.asarray(inst.col_sums, dtype=np.int64)
            self.scored = np.asarray(inst.row_sums, dtype=np.int64)
        else:
            self.enforced = np.asarray(inst.row_sums, dtype=np.int64)
            self.scored = np.asarray(inst.col_sums, dtype=np.int64)

        total = int(self.enforced.sum())
        self.max_score = 0
        # Moving a 1 inside its line breaks two scored sums
        self.moves_at_target = False
        # Both margins share one total, so the deviation total is even
        self.score_step = 2
        self.min_score = -2 * total
        self.log_space_size = log_of_count(inst.branch_count(self.branch))
        self.payload_shape = (m, n)
        self.descriptor = {
            'model': 'table',
            'rows': m,
            'columns': n,
            'branch': self.branch,
            'source': inst.source,
        }
        if not inst.is_realizable():
            logger.warning("margins r=%s c=%s fail Gale–Ryser; no table exists",
                           list(inst.row_sums), list(inst.col_sums))
        logger.debug("table %dx%d on the %s branch, ln|X_0| = %.6f", m, n, self.branch,
                     self.log_space_size)

    def _orient(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.uint8)
        return states if self.branch == 'column' else states.transpose(0, 2, 1)

    def sample_batch(self, size: int, rng: np.random.Generator) -> np.ndarray:
        lines, cols = len(self.scored), len(self.enforced)

        # Each enforced line independently a uniform subset of its cells
        ranks = np.argsort(np.argsort(rng.random((size, lines, cols)), axis=1), axis=1)
        oriented = (ranks < self.enforced[None, None, :]).astype(np.uint8)
        return np.ascontiguousarray(self._orient(oriented))

    def score_batch(self, states: np.ndarray) -> np.ndarray:
        sums = self._orient(states).sum(axis=2, dtype=np.int64)
        return -np.abs(sums - self.scored).sum(axis=1)

    def sweep_scored(self, states, threshold, rng):
        x = np.array(self._orient(states), dtype=np.uint8, copy=True)
        size, lines, cols = x.shape
        sums = x.sum(axis=2, dtype=np.int64)
        scores = -np.abs(sums - self.scored).sum(axis=1)
        rows = np.arange(size)

        for j in range(cols):
            ones = int(self.enforced[j])
            if ones == 0 or ones == lines or size == 0:
                continue

            # Rows holding a 1 in column j, visited in random order
            occupied = np.argsort(x[:, :, j] == 0, axis=1, kind='stable')[:, :ones]
            occupied = shuffled_columns(occupied, rng)

            for p in range(ones):
                i = occupied[:, p]
                x[rows, i, j] = 0
                sums[rows, i] -= 1

                deviation = np.abs(sums - self.scored)
                gain = np.abs(sums + 1 - self.scored) - deviation
                candidate = (-deviation.sum(axis=1))[:, None] - gain

                admissible = (x[:, :, j] == 0) & (candidate >= threshold)
                choice = choose_admissible(admissible, rng)

                x[rows, choice, j] = 1
                sums[rows, choice] += 1
                occupied[:, p] = choice
                scores = candidate[rows, choice]

        return np.ascontiguousarray(self._orient(x)), scores

    def matrix(self, state: State) -> np.ndarray:
        return np.array(state.payload, dtype=np.int64)


def table_init(inst: Union[TableInstance, TableModel], rng: np.random.Generator) -> State:
    """Uniform point of the enforced branch"""
    model = inst if isinstance(inst, TableModel) else TableModel(inst)
    return model.sample_uniform(rng)


def table_score(inst: Union[TableInstance, TableModel], s: State) -> int:
    """-sum |line sum - target| over the scored margin"""
    model = inst if isinstance(inst, TableModel) else TableModel(inst)
    return model.score(s)


def table_gibbs_sweep(inst: Union[TableInstance, TableModel], s: State, threshold: int,
                      rng: np.random.Generator) -> State:
    """Move every 1 once within its enforced line, keeping score >= threshold"""
    model = inst if isinstance(inst, TableModel) else TableModel(inst)
    return model.gibbs_sweep(s, threshold, rng)
