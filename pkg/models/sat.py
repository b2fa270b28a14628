"""
3-SAT counting model

Configuration space {0,1}^n, score = number of satisfied clauses, target m.
Clause satisfaction is tracked through per-clause counts of true literals so
a single-variable flip only touches the clauses the variable occurs in.
"""
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from errors import ParseError
from models.base import CountingModel
from utils.helpers import decode_text, read_text

logger = logging.getLogger(__name__)

Clause = Tuple[int, ...]


@dataclass(frozen=True)
class CnfInstance:
    """CNF formula over variables 1..n_vars"""
    n_vars: int
    clauses: Tuple[Clause, ...]
    source: Optional[str] = None
    occurrences: Tuple[Tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_vars < 1:
            raise ParseError("formula needs at least one variable")
        if not self.clauses:
            raise ParseError("formula needs at least one clause")
        for idx, clause in enumerate(self.clauses):
            _check_clause(clause, self.n_vars, idx)
        object.__setattr__(self, 'occurrences', build_occurrences(self.n_vars, self.clauses))

    @property
    def n_clauses(self) -> int:
        return len(self.clauses)

    def with_clauses(self, extra: Sequence[Clause]) -> "CnfInstance":
        """Copy with `extra` clauses appended"""
        return CnfInstance(self.n_vars, self.clauses + tuple(tuple(c) for c in extra), self.source)


@dataclass(frozen=True)
class LinearEncoding:
    """Ax >= b form of a CNF formula"""
    a: np.ndarray
    b: np.ndarray

    def satisfied(self, x: np.ndarray) -> np.ndarray:
        """Row-wise constraint check for a batch of assignments"""
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        return x @ self.a.T >= self.b


def _check_clause(clause: Clause, n_vars: int, idx: int, line: int = None):
    if not clause:
        raise ParseError(f"clause {idx + 1} is empty", line)
    for lit in clause:
        if lit == 0 or abs(lit) > n_vars:
            raise ParseError(f"literal {lit} out of range 1..{n_vars}", line)
    variables = {abs(lit) for lit in clause}
    if len(variables) != len(set(clause)):
        raise ParseError(f"clause {idx + 1} contains a variable and its negation", line)
    if len(set(clause)) != len(clause):
        raise ParseError(f"clause {idx + 1} repeats a literal", line)


def build_occurrences(n_vars: int, clauses: Sequence[Clause]) -> Tuple[Tuple[int, ...], ...]:
    """Clause ids touching each variable (0-based variable index)"""
    touching = [[] for _ in range(n_vars)]
    for idx, clause in enumerate(clauses):
        for lit in clause:
            touching[abs(lit) - 1].append(idx)
    return tuple(tuple(ids) for ids in touching)


# ============================================
# DIMACS
# ============================================

def parse_dimacs(text: Union[str, bytes, TextIO], source: Optional[str] = None) -> CnfInstance:
    """
    Parse DIMACS CNF text

    Args:
        text: file contents (str/bytes) or an open text stream
        source: file name echoed in the instance metadata

    Returns:
        CnfInstance

    Raises:
        ParseError: malformed header, literal out of range, count mismatch,
            empty or tautological clause
    """
    if not isinstance(text, (str, bytes)):
        try:
            text = text.read()
        except UnicodeDecodeError as e:
            raise ParseError(f"{source or 'input'} is not UTF-8 text ({e.reason})") from None
    if isinstance(text, bytes):
        text = decode_text(text, source)
    stream = io.StringIO(text)

    n_vars = n_clauses = None
    clauses: List[Clause] = []
    pending: List[int] = []
    pending_line = None

    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()

        # Skip comments and empty lines
        if not line or line.startswith('c'):
            continue

        # SATLIB files close with a '%' line
        if line.startswith('%'):
            break

        if line.startswith('p'):
            if n_vars is not None:
                raise ParseError("duplicate problem line", lineno)
            parts = line.split()
            if len(parts) != 4 or parts[1] != 'cnf':
                raise ParseError(f"invalid problem line: {line}", lineno)
            try:
                n_vars, n_clauses = int(parts[2]), int(parts[3])
            except ValueError:
                raise ParseError(f"invalid problem line: {line}", lineno) from None
            if n_vars < 1 or n_clauses < 1:
                raise ParseError("problem line needs positive variable and clause counts", lineno)
            continue

        if n_vars is None:
            raise ParseError("clause before problem line", lineno)

        for token in line.split():
            try:
                lit = int(token)
            except ValueError:
                raise ParseError(f"invalid literal {token!r}", lineno) from None
            if pending_line is None:
                pending_line = lineno
            if lit == 0:
                clause = tuple(dict.fromkeys(pending))
                if len(clause) != len(pending):
                    logger.warning("line %d: repeated literal dropped from clause %d",
                                   pending_line, len(clauses) + 1)
                _check_clause(clause, n_vars, len(clauses), pending_line)
                clauses.append(clause)
                pending, pending_line = [], None
            else:
                pending.append(lit)

    if n_vars is None:
        raise ParseError("missing problem line")
    if pending:
        raise ParseError("last clause is not terminated by 0", pending_line)
    if len(clauses) != n_clauses:
        raise ParseError(f"header declares {n_clauses} clauses, found {len(clauses)}")

    return CnfInstance(n_vars, tuple(clauses), source)


def load_cnf(path: Union[str, Path]) -> CnfInstance:
    """Read a DIMACS CNF file"""
    return parse_dimacs(read_text(path), source=str(path))


def write_dimacs(inst: CnfInstance, stream: TextIO, comment: Optional[str] = None):
    """Write an instance in DIMACS CNF"""
    if comment:
        for line in comment.splitlines():
            stream.write(f"c {line}\n")
    stream.write(f"p cnf {inst.n_vars} {inst.n_clauses}\n")
    for clause in inst.clauses:
        stream.write(' '.join(str(lit) for lit in clause) + ' 0\n')


def random_clause(n_vars: int, rng: np.random.Generator, width: int = 3) -> Clause:
    """Clause over `width` distinct variables with uniform polarities"""
    variables = rng.choice(n_vars, size=width, replace=False) + 1
    signs = np.where(rng.random(width) < 0.5, -1, 1)
    return tuple(int(v) for v in variables * signs)


def random_3sat(n_vars: int, n_clauses: int, rng: Union[int, np.random.Generator]) -> CnfInstance:
    """Seeded uniform random 3-SAT formula"""
    if n_vars < 3:
        raise ParseError("random 3-SAT needs at least 3 variables")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    clauses = tuple(random_clause(n_vars, rng) for _ in range(n_clauses))
    return CnfInstance(n_vars, clauses, source=f"random-3sat(n={n_vars}, m={n_clauses})")


# ============================================
# Scoring and encoding
# ============================================

def encode_linear(inst: CnfInstance) -> LinearEncoding:
    """Matrix A (m x n, entries -1/0/1) and vector b with x in X* <=> Ax >= b"""
    a = np.zeros((inst.n_clauses, inst.n_vars), dtype=np.int64)
    for i, clause in enumerate(inst.clauses):
        for lit in clause:
            a[i, abs(lit) - 1] = 1 if lit > 0 else -1
    b = 1 - (a == -1).sum(axis=1)
    return LinearEncoding(a, b)


def sat_score(inst: CnfInstance, x: Sequence[int]) -> int:
    """Number of clauses with at least one true literal"""
    if len(x) != inst.n_vars:
        raise ValueError(f"assignment has {len(x)} values, formula has {inst.n_vars} variables")
    satisfied = 0
    for clause in inst.clauses:
        if any((x[abs(lit) - 1] == 1) == (lit > 0) for lit in clause):
            satisfied += 1
    return satisfied


class SatModel(CountingModel):
    """Counting model over all assignments of a CNF formula"""

    def __init__(self, inst: CnfInstance):
        self.inst = inst
        self.encoding = encode_linear(inst)
        self.max_score = inst.n_clauses
        self.min_score = 0
        self.log_space_size = inst.n_vars * math.log(2.0)
        self.payload_shape = (inst.n_vars,)
        self.descriptor = {
            'model': 'sat',
            'n_vars': inst.n_vars,
            'n_clauses': inst.n_clauses,
            'source': inst.source,
        }

        # Per-variable occurrence lists as arrays, and whether the literal is positive
        self._occ_clauses = []
        self._occ_positive = []
        for j, ids in enumerate(inst.occurrences):
            ids = np.asarray(ids, dtype=np.int64)
            positive = self.encoding.a[ids, j] > 0
            self._occ_clauses.append(ids)
            self._occ_positive.append(positive)

    def sample_batch(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return (rng.random((size, self.inst.n_vars)) < 0.5).astype(np.uint8)

    def true_literal_counts(self, states: np.ndarray) -> np.ndarray:
        """Per state and clause, how many literals are true"""
        ax = np.asarray(states, dtype=np.int64) @ self.encoding.a.T
        return ax - self.encoding.b + 1

    def score_batch(self, states: np.ndarray) -> np.ndarray:
        return (self.true_literal_counts(states) > 0).sum(axis=1).astype(np.int64)

    def sweep_scored(self, states, threshold, rng):
        x = np.array(states, dtype=np.uint8, copy=True)
        counts = self.true_literal_counts(x)
        scores = (counts > 0).sum(axis=1).astype(np.int64)
        size = len(x)

        for j in range(self.inst.n_vars):
            coin = rng.random(size) < 0.5
            ids = self._occ_clauses[j]
            if len(ids) == 0:
                x[coin, j] ^= 1
                continue

            lit_true = (x[:, j].astype(bool)[:, None]) == self._occ_positive[j][None, :]
            current = counts[:, ids]
            lost = (lit_true & (current == 1)).sum(axis=1)
            gained = (~lit_true & (current == 0)).sum(axis=1)
            flipped_score = scores - lost + gained

            # Both values admissible -> pick one uniformly; otherwise keep x_j
            flip = coin & (flipped_score >= threshold)
            rows = np.nonzero(flip)[0]
            if len(rows) == 0:
                continue

            delta = np.where(lit_true[rows], -1, 1)
            counts[rows[:, None], ids[None, :]] += delta
            x[rows, j] ^= 1
            scores[rows] = flipped_score[rows]

        return x, scores


def sat_gibbs_sweep(inst: Union[CnfInstance, SatModel], x, threshold: int,
                    rng: np.random.Generator) -> np.ndarray:
    """One sweep x_1..x_n of the single-site kernel at `threshold`"""
    model = inst if isinstance(inst, SatModel) else SatModel(inst)
    batch = np.asarray(x, dtype=np.uint8).reshape(1, -1)
    return model.sweep_batch(batch, threshold, rng)[0]
