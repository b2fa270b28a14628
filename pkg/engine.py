"""
Adaptive splitting for counting

Each iteration keeps the top rho-fraction of the current sample (the elites),
drops duplicate elites, and restarts Gibbs chains from the distinct ones to
refill the sample inside the new level set. The product of the elite
fractions times |X_0| estimates the number of solutions; everything is
accumulated in log space.
"""
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from config import CHAIN_BLOCK, STREAM_CHAINS, STREAM_EXTEND, STREAM_INIT, SplitConfig
from errors import EstimatorError, IterationLimitExceeded, StagnationFailure
from models.base import CountingModel, State
from utils.helpers import LevelProgress, block_slices, log10_from_ln, parallel_map, random_stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterationTrace:
    """Per-level record"""
    t: int
    m_upper: int
    m_lower: int
    n_elites: int
    n_screened: int
    c_hat: float
    log_estimate_so_far: float
    sample_size: int

    @property
    def log10_estimate(self) -> float:
        return log10_from_ln(self.log_estimate_so_far)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class RunResult:
    """Outcome of one splitting run"""
    log_estimate: float
    iterations: int
    traces: List[IterationTrace]
    final_batch: np.ndarray = field(repr=False)
    final_states: List[State] = field(repr=False)
    wall_time: float
    seed: int
    log_space_size: float

    @property
    def estimate(self) -> float:
        """exp(log_estimate), inf when it does not fit a float"""
        try:
            return math.exp(self.log_estimate)
        except OverflowError:
            return float('inf')

    @property
    def log10_estimate(self) -> float:
        return log10_from_ln(self.log_estimate)


# ============================================
# Level operations
# ============================================

def elite_count(n: int, rho: float) -> int:
    """ceil(N rho), clipped to 1..N"""
    # round() guards against 0.1 * 30 = 3.0000000000000004
    return min(n, max(1, math.ceil(round(n * rho, 9))))


def select_threshold(scores: Sequence[int], previous: int, rho: float, m: int) -> int:
    """
    Next level: the ceil(N rho)-th largest score, clamped at m

    Args:
        scores: scores of the current sample
        previous: last threshold (anything below the minimum score on the first call)
        rho: splitting control parameter
        m: target score

    Returns:
        m_t with previous < m_t <= m

    Raises:
        StagnationFailure: no score exceeds `previous`
    """
    scores = np.asarray(scores, dtype=np.int64)
    if scores.size == 0:
        raise ValueError("cannot select a threshold from an empty sample")

    k = elite_count(scores.size, rho)
    q = int(np.partition(scores, scores.size - k)[scores.size - k])
    level = min(q, m)

    if level <= previous:
        # Force one unit of progress when the quantile ties with the last level
        if (scores >= previous + 1).any():
            return previous + 1
        raise StagnationFailure(f"no sample scores above level {previous}")

    return level


def extract_elites(samples, scores: Sequence[int], threshold: int):
    """Samples scoring >= threshold, in input order"""
    mask = np.asarray(scores) >= threshold
    if isinstance(samples, np.ndarray):
        return samples[mask]
    return [s for s, keep in zip(samples, mask) if keep]


def screen(elites: Sequence[State]) -> List[State]:
    """Drop duplicate states, keeping the first occurrence"""
    seen = set()
    distinct = []
    for state in elites:
        if state.canonical_key not in seen:
            seen.add(state.canonical_key)
            distinct.append(state)
    return distinct


def run_chains(model: CountingModel, seeds: np.ndarray, length: int, extend: np.ndarray,
               threshold: int, thinning: int, rng: np.random.Generator) -> np.ndarray:
    """
    Advance one chain per seed and return every recorded state in chain order

    Chain i records its seed plus `length - 1` sweep states; chains flagged
    in `extend` record one more.
    """
    size = len(seeds)
    current = np.array(seeds, dtype=np.uint8, copy=True)
    slots = np.zeros((size, length + 1) + current.shape[1:], dtype=np.uint8)
    slots[:, 0] = current

    for step in range(1, length):
        for _ in range(thinning):
            current = model.sweep_batch(current, threshold, rng)
        slots[:, step] = current

    keep = np.zeros((size, length + 1), dtype=bool)
    keep[:, :length] = True
    if extend.any():
        tail = current[extend]
        for _ in range(thinning):
            tail = model.sweep_batch(tail, threshold, rng)
        slots[extend, length] = tail
        keep[extend, length] = True

    return slots[keep]


def repopulate(screened, instance: CountingModel, threshold: int, n: int,
               rng: np.random.Generator, thinning: int = 1):
    """
    Refill a sample of exactly n states from the distinct elites

    Every elite seeds a chain of b = n // len(screened) recorded states; the
    n - len(screened) * b leftover points come from one extra sweep of
    chains chosen uniformly without replacement.
    """
    as_states = not isinstance(screened, np.ndarray)
    seeds = instance.stack(screened) if as_states else screened
    if len(seeds) == 0:
        raise ValueError("cannot repopulate from an empty elite set")

    length = n // len(seeds)
    extend = np.zeros(len(seeds), dtype=bool)
    extend[rng.choice(len(seeds), size=n - len(seeds) * length, replace=False)] = True

    states = run_chains(instance, seeds, length, extend, threshold, thinning, rng)
    return instance.to_states(states) if as_states else states


# ============================================
# Engine
# ============================================

class SplittingEngine:
    """Run the adaptive splitting algorithm on one model"""

    def __init__(self, model: CountingModel, cfg: SplitConfig):
        self.model = model
        self.cfg = cfg.validate()

    def run(self) -> RunResult:
        """
        One splitting run

        Returns:
            RunResult whose last trace sits at the target level

        Raises:
            IterationLimitExceeded: target not reached within cfg.max_iterations
            StagnationFailure: a level admits no strict progress
        """
        model, cfg = self.model, self.cfg
        target = model.max_score
        started = time.perf_counter()

        samples = self._initial_sample(cfg.sample_size)
        scores = model.score_batch(samples)

        log_estimate = model.log_space_size
        previous = model.min_score - 1
        traces: List[IterationTrace] = []
        progress = LevelProgress(target)

        for t in range(1, cfg.max_iterations + 1):
            if scores.min() < previous:
                raise EstimatorError(f"iteration {t}: a sample left the level set {previous}")

            try:
                level = select_threshold(scores, previous, cfg.rho, target)
            except StagnationFailure as e:
                raise StagnationFailure(f"iteration {t}: {e}", traces) from None
            level = model.snap_level(level)

            elites = extract_elites(samples, scores, level)
            screened = elites[model.distinct_indices(elites)]
            c_hat = len(elites) / len(samples)
            log_estimate += math.log(c_hat)

            trace = IterationTrace(
                t=t,
                m_upper=int(scores.max()),
                m_lower=int(level),
                n_elites=len(elites),
                n_screened=len(screened),
                c_hat=c_hat,
                log_estimate_so_far=log_estimate,
                sample_size=len(samples),
            )
            traces.append(trace)
            progress.update(level)
            logger.info("t=%d m*=%d m_*=%d N_t=%d N_t(s)=%d c=%.4g log10|X*|~%.4f (%.0f%%)",
                        t, trace.m_upper, trace.m_lower, trace.n_elites, trace.n_screened,
                        c_hat, trace.log10_estimate, progress.get_percentage())

            if progress.is_complete():
                return RunResult(
                    log_estimate=log_estimate,
                    iterations=t,
                    traces=traces,
                    final_batch=screened,
                    final_states=model.to_states(screened),
                    wall_time=time.perf_counter() - started,
                    seed=cfg.seed,
                    log_space_size=model.log_space_size,
                )

            n_next = cfg.sample_size_for(target - level)
            samples = self._repopulate(screened, level, n_next, t)
            scores = model.score_batch(samples)
            previous = level

        raise IterationLimitExceeded(
            f"target level {target} not reached in {cfg.max_iterations} iterations "
            f"(last level {previous})", traces)

    def _initial_sample(self, n: int) -> np.ndarray:
        """n uniform points of X_0, one random stream per block"""
        seed = self.cfg.seed

        def draw(block):
            index, start, stop = block
            return self.model.sample_batch(stop - start, random_stream(seed, STREAM_INIT, index))

        return np.concatenate(parallel_map(draw, block_slices(n, CHAIN_BLOCK), self.cfg.threads))

    def _repopulate(self, screened: np.ndarray, threshold: int, n: int, t: int) -> np.ndarray:
        """Block-parallel version of `repopulate` with per-block streams"""
        seed, thinning = self.cfg.seed, self.cfg.chain_thinning
        n_chains = len(screened)
        length = n // n_chains
        n_extra = n - n_chains * length

        extend = np.zeros(n_chains, dtype=bool)
        if n_extra:
            chooser = random_stream(seed, STREAM_EXTEND, t)
            extend[chooser.choice(n_chains, size=n_extra, replace=False)] = True
        logger.debug("t=%d: %d chains of length %d, %d extended", t, n_chains, length, n_extra)

        def advance(block):
            index, start, stop = block
            rng = random_stream(seed, STREAM_CHAINS, t, index)
            return run_chains(self.model, screened[start:stop], length, extend[start:stop],
                              threshold, thinning, rng)

        parts = parallel_map(advance, block_slices(n_chains, CHAIN_BLOCK), self.cfg.threads)
        return np.concatenate(parts)


def run_splitting(instance: CountingModel, cfg: SplitConfig) -> RunResult:
    """Run adaptive splitting; deterministic given (instance, cfg.seed)"""
    return SplittingEngine(instance, cfg).run()
