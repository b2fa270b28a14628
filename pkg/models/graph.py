"""
Labeled simple graphs with a prescribed degree sequence

A state is a k-subset of the m = n(n-1)/2 edge slots of K_n, k = sum(d)/2,
stored as a 0-1 vector over the lexicographically ordered slots. The score is
-sum_i |deg(v_i) - d_i|, so solutions score 0 and every other state is
negative.
"""
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from errors import InfeasibleDegrees, ParseError
from models.base import CountingModel, State, choose_admissible, shuffled_columns
from utils.helpers import decode_text, exact_binomial, log_of_count, read_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DegreeInstance:
    """Degree sequence d over vertices 0..n-1"""
    degrees: Tuple[int, ...]
    source: Optional[str] = None
    edge_table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        degrees = tuple(int(d) for d in self.degrees)
        object.__setattr__(self, 'degrees', degrees)
        n = len(degrees)
        if n < 2:
            raise InfeasibleDegrees("a degree sequence needs at least two vertices")
        if any(d < 0 for d in degrees):
            raise InfeasibleDegrees("degrees must be non-negative")
        if sum(degrees) % 2:
            raise InfeasibleDegrees(f"degree sum {sum(degrees)} is odd")
        if max(degrees) > n - 1:
            raise InfeasibleDegrees(f"degree {max(degrees)} exceeds n-1 = {n - 1}")
        if self.edge_target > self.n_slots:
            raise InfeasibleDegrees(f"{self.edge_target} edges do not fit in K_{n}")

        # Slot index -> (u, v) with u < v, lexicographic
        upper, lower = np.triu_indices(n, k=1)
        table = np.stack([upper, lower], axis=1).astype(np.int64)
        table.setflags(write=False)
        object.__setattr__(self, 'edge_table', table)

    @property
    def n_vertices(self) -> int:
        return len(self.degrees)

    @property
    def n_slots(self) -> int:
        n = self.n_vertices
        return n * (n - 1) // 2

    @property
    def edge_target(self) -> int:
        return sum(self.degrees) // 2

    def incidence(self) -> np.ndarray:
        """n x m vertex-edge incidence matrix of K_n"""
        inc = np.zeros((self.n_vertices, self.n_slots), dtype=np.int64)
        slots = np.arange(self.n_slots)
        inc[self.edge_table[:, 0], slots] = 1
        inc[self.edge_table[:, 1], slots] = 1
        return inc

    def slot_of(self, u: int, v: int) -> int:
        """Slot index of the edge {u, v}"""
        if u == v:
            raise ValueError("self loops have no slot")
        u, v = min(u, v), max(u, v)
        n = self.n_vertices
        return u * n - u * (u + 1) // 2 + (v - u - 1)


def is_graphical(degrees: Sequence[int]) -> bool:
    """Erdős–Gallai test"""
    return nx.is_graphical([int(d) for d in degrees], method="eg")


def parse_degrees(text: Union[str, bytes], source: Optional[str] = None) -> DegreeInstance:
    """Whitespace-separated non-negative integers; '#' starts a comment"""
    if isinstance(text, bytes):
        text = decode_text(text, source)
    values: List[int] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0]
        for token in re.split(r'[\s,]+', line.strip()):
            if not token:
                continue
            try:
                value = int(token)
            except ValueError:
                raise ParseError(f"invalid degree {token!r}", lineno) from None
            if value < 0:
                raise ParseError(f"negative degree {value}", lineno)
            values.append(value)
    if not values:
        raise ParseError("empty degree sequence")
    return DegreeInstance(tuple(values), source)


def load_degrees(path: Union[str, Path]) -> DegreeInstance:
    """Read a degree-sequence file"""
    path = Path(path)
    return parse_degrees(read_text(path), source=str(path))


class GraphModel(CountingModel):
    """Counting model over fixed-size edge subsets of K_n"""

    def __init__(self, inst: DegreeInstance):
        self.inst = inst
        self.target = np.asarray(inst.degrees, dtype=np.int64)
        self.k = inst.edge_target
        self.ends_u = inst.edge_table[:, 0]
        self.ends_v = inst.edge_table[:, 1]
        self._incidence_t = inst.incidence().T

        self.max_score = 0
        # Every relocation at level 0 breaks two degrees
        self.moves_at_target = False
        # sum(deg) == sum(d), so the deviation total is even
        self.score_step = 2
        self.min_score = -4 * self.k
        self.log_space_size = log_of_count(exact_binomial(inst.n_slots, self.k))
        self.payload_shape = (inst.n_slots,)
        self.descriptor = {
            'model': 'graph',
            'n_vertices': inst.n_vertices,
            'n_slots': inst.n_slots,
            'edge_target': self.k,
            'source': inst.source,
        }

        if not is_graphical(inst.degrees):
            logger.warning("degree sequence %s is not graphical; no realization exists",
                           list(inst.degrees))

    def degrees_of(self, states: np.ndarray) -> np.ndarray:
        """Vertex degrees of each state, shape (B, n)"""
        return np.asarray(states, dtype=np.int64) @ self._incidence_t

    def sample_batch(self, size: int, rng: np.random.Generator) -> np.ndarray:
        # Random permutation of the slots, first k places chosen
        order = np.argsort(rng.random((size, self.inst.n_slots)), axis=1)
        states = np.zeros((size, self.inst.n_slots), dtype=np.uint8)
        np.put_along_axis(states, order[:, :self.k], 1, axis=1)
        return states

    def score_batch(self, states: np.ndarray) -> np.ndarray:
        return -np.abs(self.degrees_of(states) - self.target).sum(axis=1)

    def sweep_scored(self, states, threshold, rng):
        x = np.array(states, dtype=np.uint8, copy=True)
        deg = self.degrees_of(x)
        size = len(x)
        if self.k == 0 or size == 0:
            return x, -np.abs(deg - self.target).sum(axis=1)

        rows = np.arange(size)
        edges = np.nonzero(x)[1].reshape(size, self.k)
        edges = shuffled_columns(edges, rng)
        scores = None

        for p in range(self.k):
            slot = edges[:, p]
            x[rows, slot] = 0
            deg[rows, self.ends_u[slot]] -= 1
            deg[rows, self.ends_v[slot]] -= 1

            # Score of re-inserting the edge at every slot
            deviation = np.abs(deg - self.target)
            gain = np.abs(deg + 1 - self.target) - deviation
            candidate = (-deviation.sum(axis=1))[:, None] - gain[:, self.ends_u] - gain[:, self.ends_v]

            admissible = (x == 0) & (candidate >= threshold)
            choice = choose_admissible(admissible, rng)

            x[rows, choice] = 1
            deg[rows, self.ends_u[choice]] += 1
            deg[rows, self.ends_v[choice]] += 1
            edges[:, p] = choice
            scores = candidate[rows, choice]

        return x, scores

    def edge_list(self, state: State) -> List[Tuple[int, int]]:
        """Edges of a state as 1-based vertex pairs"""
        slots = np.nonzero(state.payload)[0]
        return [(int(self.ends_u[s]) + 1, int(self.ends_v[s]) + 1) for s in slots]


def graph_init(inst: Union[DegreeInstance, GraphModel], rng: np.random.Generator) -> State:
    """Uniformly random k-subset of the edge slots"""
    model = inst if isinstance(inst, GraphModel) else GraphModel(inst)
    return model.sample_uniform(rng)


def graph_score(inst: Union[DegreeInstance, GraphModel], s: State) -> int:
    """-sum |deg(v_i) - d_i|"""
    model = inst if isinstance(inst, GraphModel) else GraphModel(inst)
    return model.score(s)


def graph_gibbs_sweep(inst: Union[DegreeInstance, GraphModel], s: State, threshold: int,
                      rng: np.random.Generator) -> State:
    """Relocate every edge once, each among the placements keeping score >= threshold"""
    model = inst if isinstance(inst, GraphModel) else GraphModel(inst)
    return model.gibbs_sweep(s, threshold, rng)
