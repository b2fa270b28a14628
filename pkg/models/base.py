"""
Contract shared by every counting model

A model owns a finite configuration space X_0, an integer score S on it and
a Gibbs kernel that is stationary for the uniform law on every level set
{x : S(x) >= threshold}. The engine, the capture-recapture estimators and
the oracles only talk to models through this interface.

States travel in numpy batches: axis 0 indexes the state, the remaining
axes are the model's payload shape. `State` wraps a single payload with its
canonical key for callers that want value semantics.
"""
from abc import ABC, abstractmethod
from typing import Dict, List, Sequence, Tuple

import numpy as np


class State:
    """One configuration with its canonical serialization"""

    __slots__ = ('payload', 'canonical_key')

    def __init__(self, payload: np.ndarray, canonical_key: bytes):
        payload = np.array(payload, dtype=np.uint8, copy=True)
        payload.setflags(write=False)
        self.payload = payload
        self.canonical_key = canonical_key

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return self.canonical_key == other.canonical_key

    def __hash__(self):
        return hash(self.canonical_key)

    def __repr__(self):
        return f"State(key={self.canonical_key.hex()})"


class CountingModel(ABC):
    """Abstract counting problem"""

    #: highest score; S(x) == max_score iff x is a solution
    max_score: int
    #: lower bound on every score, used as the "unconstrained" threshold
    min_score: int
    #: ln |X_0|
    log_space_size: float
    #: payload shape of one state
    payload_shape: Tuple[int, ...]
    #: whether the kernel can leave a solution without leaving X*
    moves_at_target: bool = True
    #: scores differ from max_score by multiples of this
    score_step: int = 1
    #: instance metadata (dimensions, source file)
    descriptor: Dict

    # ============================================
    # Batch operations (implemented per model)
    # ============================================

    @abstractmethod
    def sample_batch(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw `size` independent uniform points of X_0"""

    @abstractmethod
    def score_batch(self, states: np.ndarray) -> np.ndarray:
        """Scores of a batch, as int64"""

    @abstractmethod
    def sweep_scored(self, states: np.ndarray, threshold: int,
                     rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """One Gibbs sweep of every state at `threshold`; returns (states, scores)"""

    def sweep_batch(self, states: np.ndarray, threshold: int,
                    rng: np.random.Generator) -> np.ndarray:
        return self.sweep_scored(states, threshold, rng)[0]

    def keys(self, states: np.ndarray) -> np.ndarray:
        """Packed canonical keys, one row of bytes per state"""
        flat = np.asarray(states, dtype=np.uint8).reshape(len(states), -1)
        return np.packbits(flat, axis=1)

    def distinct_indices(self, states: np.ndarray) -> np.ndarray:
        """Indices of the first occurrence of each distinct state, in input order"""
        if len(states) == 0:
            return np.zeros(0, dtype=np.int64)
        _, first = np.unique(self.keys(states), axis=0, return_index=True)
        return np.sort(first)

    def key_set(self, states: np.ndarray) -> set:
        return {row.tobytes() for row in self.keys(states)}

    # ============================================
    # Single-state wrappers
    # ============================================

    def to_state(self, payload: np.ndarray) -> State:
        payload = np.asarray(payload, dtype=np.uint8).reshape(self.payload_shape)
        key = self.keys(payload[None, ...])[0].tobytes()
        return State(payload, key)

    def to_states(self, states: np.ndarray) -> List[State]:
        return [self.to_state(row) for row in states]

    def snap_level(self, level: int) -> int:
        """Smallest attainable score >= level; both define the same level set"""
        step = self.score_step
        return self.max_score - ((self.max_score - level) // step) * step

    def stack(self, states: Sequence[State]) -> np.ndarray:
        """Batch array from a sequence of States"""
        if len(states) == 0:
            return np.zeros((0,) + tuple(self.payload_shape), dtype=np.uint8)
        return np.stack([s.payload for s in states]).astype(np.uint8)

    def serialize(self, state: State) -> bytes:
        return state.canonical_key

    def deserialize(self, key: bytes) -> State:
        size = int(np.prod(self.payload_shape))
        bits = np.unpackbits(np.frombuffer(key, dtype=np.uint8), count=size)
        return self.to_state(bits.reshape(self.payload_shape))

    def sample_uniform(self, rng: np.random.Generator) -> State:
        return self.to_state(self.sample_batch(1, rng)[0])

    def score(self, state: State) -> int:
        return int(self.score_batch(state.payload[None, ...])[0])

    def gibbs_sweep(self, state: State, threshold: int, rng: np.random.Generator) -> State:
        batch = np.array(state.payload[None, ...], dtype=np.uint8)
        return self.to_state(self.sweep_batch(batch, threshold, rng)[0])

    def is_solution(self, state: State) -> bool:
        return self.score(state) == self.max_score


def sample_uniform(instance: CountingModel, rng: np.random.Generator) -> State:
    """Uniform point of the instance's configuration space"""
    return instance.sample_uniform(rng)


def score(instance: CountingModel, s: State) -> int:
    """Score of a state; equals instance.max_score exactly on solutions"""
    return instance.score(s)


def gibbs_sweep(instance: CountingModel, s: State, threshold: int,
                rng: np.random.Generator) -> State:
    """One systematic Gibbs sweep restricted to {x : S(x) >= threshold}"""
    return instance.gibbs_sweep(s, threshold, rng)


def choose_admissible(admissible: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Per row, a uniformly random column among the True entries of `admissible`

    Every row must contain at least one True entry.
    """
    keys = rng.random(admissible.shape)
    keys[~admissible] = -1.0
    return np.argmax(keys, axis=1)


def shuffled_columns(values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independently permute each row of a 2-D array"""
    order = np.argsort(rng.random(values.shape), axis=1)
    return np.take_along_axis(values, order, axis=1)
