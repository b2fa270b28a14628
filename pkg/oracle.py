"""
Exact counters for small instances

Ground truth for tests and for the --oracle report columns. Results are
exact Python integers; convert to log space only where they are compared.
"""
import itertools
import logging
from typing import Dict, Iterator, Tuple

import numpy as np

from config import OracleBudget, oracle_defaults
from errors import BudgetExceeded
from models.base import CountingModel
from models.graph import DegreeInstance, GraphModel
from models.sat import CnfInstance, SatModel, encode_linear
from models.table import TableInstance, TableModel
from utils.helpers import exact_binomial

logger = logging.getLogger(__name__)

# Assignments evaluated per vectorised SAT chunk
SAT_CHUNK = 1 << 16


class _Counter:
    """Visit counter that enforces an OracleBudget"""

    def __init__(self, budget: OracleBudget, what: str):
        self.limit = budget.max_configurations
        self.what = what
        self.visits = 0

    def tick(self, amount: int = 1):
        self.visits += amount
        if self.visits > self.limit:
            raise BudgetExceeded(f"{self.what}: more than {self.limit} configurations visited")


def all_assignments(n_vars: int, start: int = 0, stop: int = None) -> np.ndarray:
    """Assignments start..stop-1 of {0,1}^n, bit j of the index is x_{j+1}"""
    stop = 2 ** n_vars if stop is None else stop
    index = np.arange(start, stop, dtype=np.int64)
    return ((index[:, None] >> np.arange(n_vars)) & 1).astype(np.uint8)


def exact_count_sat(inst: CnfInstance, budget: OracleBudget = oracle_defaults) -> int:
    """Number of satisfying assignments by plain enumeration"""
    total = 2 ** inst.n_vars
    if total > budget.max_configurations:
        raise BudgetExceeded(f"2^{inst.n_vars} assignments exceed the budget "
                             f"of {budget.max_configurations}")

    encoding = encode_linear(inst)
    count = 0
    for start in range(0, total, SAT_CHUNK):
        block = all_assignments(inst.n_vars, start, min(start + SAT_CHUNK, total))
        count += int(encoding.satisfied(block).all(axis=1).sum())
    return count


def exact_count_graphs(inst: DegreeInstance, budget: OracleBudget = oracle_defaults) -> int:
    """
    Number of labeled simple graphs realizing the degree sequence

    Vertices are handled in order; vertex i picks its remaining neighbours
    among later vertices with residual degree left. Sub-counts depend only on
    (i, residual degrees of vertices i..n-1) and are memoised on that.
    """
    n = inst.n_vertices
    counter = _Counter(budget, "graph enumeration")
    memo: Dict[Tuple[int, Tuple[int, ...]], int] = {}

    def count(i: int, residual: Tuple[int, ...]) -> int:
        if i == n:
            return 1
        key = (i, residual)
        if key in memo:
            return memo[key]
        counter.tick()

        need, rest = residual[0], residual[1:]
        remaining = n - i - 1
        if sum(residual) % 2 or max(residual) > remaining:
            memo[key] = 0
            return 0

        candidates = [j for j, r in enumerate(rest) if r > 0]
        total = 0
        for chosen in itertools.combinations(candidates, need):
            counter.tick()
            nxt = list(rest)
            for j in chosen:
                nxt[j] -= 1
            total += count(i + 1, tuple(nxt))

        memo[key] = total
        return total

    return count(0, tuple(inst.degrees))


def _compositions(hist: Tuple[int, ...], need: int, value: int = 1) -> Iterator[Tuple[int, ...]]:
    """Ways to take `need` rows from residual groups value..max, a_v <= hist[v]"""
    if value >= len(hist):
        if need == 0:
            yield ()
        return
    for take in range(min(hist[value], need) + 1):
        for tail in _compositions(hist, need - take, value + 1):
            yield (take,) + tail


def exact_count_tables(inst: TableInstance, budget: OracleBudget = oracle_defaults) -> int:
    """
    Number of 0-1 matrices with the given row and column sums

    Columns are filled left to right. Rows are interchangeable with respect to
    the columns still to fill, so the state is the histogram of residual row
    sums; each column picks how many rows to take from every residual group.
    """
    m, n = inst.shape
    counter = _Counter(budget, "table enumeration")
    cols = inst.col_sums
    top = max(inst.row_sums)
    memo: Dict[Tuple[int, Tuple[int, ...]], int] = {}

    start = [0] * (top + 1)
    for r in inst.row_sums:
        start[r] += 1

    def count(j: int, hist: Tuple[int, ...]) -> int:
        if j == n:
            return 1 if hist[0] == m else 0
        key = (j, hist)
        if key in memo:
            return memo[key]
        counter.tick()

        # A row needing more ones than columns left is dead
        highest = max((v for v, rows in enumerate(hist) if rows), default=0)
        if highest > n - j:
            memo[key] = 0
            return 0

        total = 0
        for take in _compositions(hist, cols[j]):
            counter.tick()
            ways = 1
            nxt = list(hist)
            for offset, a in enumerate(take):
                if a:
                    v = offset + 1
                    ways *= exact_binomial(hist[v], a)
                    nxt[v] -= a
                    nxt[v - 1] += a
            total += ways * count(j + 1, tuple(nxt))

        memo[key] = total
        return total

    return count(0, tuple(start))


def exact_count(model: CountingModel, budget: OracleBudget = oracle_defaults) -> int:
    """Dispatch to the exact counter of the model's family"""
    if isinstance(model, SatModel):
        return exact_count_sat(model.inst, budget)
    if isinstance(model, GraphModel):
        return exact_count_graphs(model.inst, budget)
    if isinstance(model, TableModel):
        return exact_count_tables(model.inst, budget)
    raise TypeError(f"no exact counter for {type(model).__name__}")


def enumerate_states(model: CountingModel, budget: OracleBudget = oracle_defaults) -> np.ndarray:
    """Every configuration of X_0 as a batch (tiny instances only)"""
    if isinstance(model, SatModel):
        if 2 ** model.inst.n_vars > budget.max_configurations:
            raise BudgetExceeded("assignment space exceeds the budget")
        return all_assignments(model.inst.n_vars)

    if isinstance(model, GraphModel):
        slots, k = model.inst.n_slots, model.k
        if exact_binomial(slots, k) > budget.max_configurations:
            raise BudgetExceeded("edge-subset space exceeds the budget")
        states = []
        for chosen in itertools.combinations(range(slots), k):
            row = np.zeros(slots, dtype=np.uint8)
            row[list(chosen)] = 1
            states.append(row)
        return np.array(states, dtype=np.uint8)

    if isinstance(model, TableModel):
        if model.inst.branch_count(model.branch) > budget.max_configurations:
            raise BudgetExceeded("table branch exceeds the budget")
        lines = len(model.scored)
        per_line = [list(itertools.combinations(range(lines), int(e))) for e in model.enforced]
        states = []
        for choice in itertools.product(*per_line):
            oriented = np.zeros((lines, len(model.enforced)), dtype=np.uint8)
            for j, rows in enumerate(choice):
                oriented[list(rows), j] = 1
            states.append(oriented if model.branch == 'column' else oriented.T)
        return np.array(states, dtype=np.uint8)

    raise TypeError(f"cannot enumerate {type(model).__name__}")
