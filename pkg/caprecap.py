"""
Capture-recapture estimation of the solution count

After the splitting run reaches the target level, two batches of (roughly)
uniform solutions are drawn and their overlap gives the classic and the
Chapman estimates. For solution sets too large for a useful overlap, the
extended procedure first shrinks the set with random auxiliary clauses and
scales the inner estimate back by the surviving fraction.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from config import (CHAIN_BLOCK, STREAM_AUX, STREAM_CAPTURE, CapRecapConfig, EcapConfig,
                    caprecap_defaults, ecap_defaults)
from errors import AuxLimitExceeded, ConfigError, DegenerateInput, WindowOvershoot, ZeroOverlap
from models.base import CountingModel, State
from models.sat import Clause, SatModel, random_clause
from utils.helpers import block_slices, parallel_map, random_stream

logger = logging.getLogger(__name__)

# Size regimes of the three estimators
CAPRECAP_LIMIT = 1e6
ECAP_LIMIT = 1e9

# Batch tags inside the capture stream
BATCH_FIRST = 1
BATCH_SECOND = 2
BATCH_LEVEL_POINTS = 3
BATCH_INNER = (4, 5)


@dataclass(frozen=True)
class CapRecapResult:
    """Two-batch overlap estimate"""
    n1: int
    n2: int
    overlap: int
    naive_estimate: float
    chapman_estimate: float
    chapman_variance_estimate: float

    @property
    def log_estimate(self) -> float:
        return math.log(self.chapman_estimate) if self.chapman_estimate > 0 else float('-inf')

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.chapman_variance_estimate)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class EcapResult:
    """Extended capture-recapture estimate"""
    tau: int
    c_hat_aux: float
    inner: CapRecapResult
    log_estimate: float
    aux_clauses: Tuple[Clause, ...] = field(repr=False)
    n_points: int = 0
    n_accepted: int = 0

    @property
    def estimate(self) -> float:
        return math.exp(self.log_estimate)


def chapman_from_counts(n1: int, n2: int, overlap: int) -> CapRecapResult:
    """
    Naive and Chapman estimates from distinct batch sizes and their overlap

    The naive estimate is +inf when overlap == 0.
    """
    if n1 < 0 or n2 < 0 or overlap < 0:
        raise DegenerateInput("batch sizes and overlap must be non-negative")
    if overlap > min(n1, n2):
        raise DegenerateInput(f"overlap {overlap} exceeds the smaller batch ({min(n1, n2)})")

    naive = n1 * n2 / overlap if overlap else float('inf')
    chapman = (n1 + 1) * (n2 + 1) / (overlap + 1) - 1
    variance = ((n1 + 1) * (n2 + 1) * (n1 - overlap) * (n2 - overlap)
                / ((overlap + 1) ** 2 * (overlap + 2)))
    return CapRecapResult(n1, n2, overlap, naive, chapman, variance)


def _keys(batch: Union[Sequence[State], Iterable[bytes]]) -> set:
    keys = set()
    for item in batch:
        keys.add(item.canonical_key if isinstance(item, State) else bytes(item))
    return keys


def cap_recap(batch1: Sequence[State], batch2: Sequence[State]) -> CapRecapResult:
    """
    Capture-recapture estimate of |X*| from two batches of solutions

    Duplicates inside each batch are dropped before counting.

    Raises:
        ZeroOverlap: the batches share no state (the partial result rides on
            the exception)
    """
    first, second = _keys(batch1), _keys(batch2)
    result = chapman_from_counts(len(first), len(second), len(first & second))
    if result.overlap == 0:
        logger.warning("capture batches of %d and %d distinct states do not overlap; "
                       "enlarge them or switch to the extended estimator", result.n1, result.n2)
        raise ZeroOverlap(f"no overlap between {result.n1} and {result.n2} distinct states", result)
    return result


def cap_recap_batches(model: CountingModel, batch1: np.ndarray, batch2: np.ndarray) -> CapRecapResult:
    """`cap_recap` on state arrays"""
    first, second = model.key_set(batch1), model.key_set(batch2)
    result = chapman_from_counts(len(first), len(second), len(first & second))
    if result.overlap == 0:
        logger.warning("capture batches of %d and %d distinct states do not overlap",
                       result.n1, result.n2)
        raise ZeroOverlap(f"no overlap between {result.n1} and {result.n2} distinct states", result)
    return result


# ============================================
# Batch generation
# ============================================

def capture_chains(model: CountingModel, seeds: np.ndarray, size: int, cfg: CapRecapConfig,
                   threshold: int, seed: int, tag: int, threads: int = 1) -> np.ndarray:
    """
    `size` states recorded along chains at `threshold`

    Each chain starts at a seed drawn with replacement, runs cfg.chain_sweeps
    sweeps and records every cfg.thinning-th sweep state. The last chain is
    cut short so exactly `size` states come back.
    """
    seeds = np.asarray(seeds, dtype=np.uint8)
    if len(seeds) == 0:
        raise ValueError("capture chains need at least one seed state")

    per_chain = cfg.records_per_chain
    n_chains = -(-size // per_chain)

    def advance(block):
        index, start, stop = block
        rng = random_stream(seed, STREAM_CAPTURE, tag, index)
        current = seeds[rng.integers(len(seeds), size=stop - start)]
        records = []
        for _ in range(per_chain):
            for _ in range(cfg.thinning):
                current = model.sweep_batch(current, threshold, rng)
            records.append(current)
        # Chain-major order: all records of chain 0, then chain 1, ...
        chain_major = np.stack(records, axis=1).reshape((-1,) + seeds.shape[1:])
        return chain_major[:min(stop * per_chain, size) - start * per_chain]

    return np.concatenate(parallel_map(advance, block_slices(n_chains, CHAIN_BLOCK), threads))


def draw_final_batches(instance: CountingModel, final_states, cfg: CapRecapConfig = caprecap_defaults,
                       seed: int = 0, threshold: Optional[int] = None, threads: int = 1,
                       tags: Tuple[int, int] = (BATCH_FIRST, BATCH_SECOND)) -> Tuple[np.ndarray, np.ndarray]:
    """
    Two batches of raw size cfg.n1 / cfg.n2 at the target level

    Both batches descend from the same final elites but use disjoint random
    streams.

    Raises:
        ConfigError: the model's kernel cannot move inside the solution set,
            so both batches would only resample the final elites
    """
    cfg.validate()
    level = instance.max_score if threshold is None else threshold
    if level >= instance.max_score and not instance.moves_at_target:
        raise ConfigError(
            f"{type(instance).__name__} chains stand still on the solution set; "
            "capture-recapture would count the final elites, not the solutions")
    if not isinstance(final_states, np.ndarray):
        final_states = instance.stack(final_states)

    first = capture_chains(instance, final_states, cfg.n1, cfg, level, seed, tags[0], threads)
    second = capture_chains(instance, final_states, cfg.n2, cfg, level, seed, tags[1], threads)
    return first, second


def estimate_caprecap(model: CountingModel, final_states, cfg: CapRecapConfig = caprecap_defaults,
                      seed: int = 0, threads: int = 1) -> CapRecapResult:
    """Draw both batches from a finished run and estimate"""
    first, second = draw_final_batches(model, final_states, cfg, seed, threads=threads)
    return cap_recap_batches(model, first, second)


# ============================================
# Extended CAP-RECAP
# ============================================

def backward_log_estimate(inner_chapman: float, c_hat: float) -> float:
    """ln(inner estimate) - ln(surviving fraction)"""
    if inner_chapman <= 0 or not 0 < c_hat <= 1:
        raise DegenerateInput("inner estimate must be positive and the ratio in (0, 1]")
    return math.log(inner_chapman) - math.log(c_hat)


def clause_mask(points: np.ndarray, clause: Clause) -> np.ndarray:
    """Which assignments satisfy a clause"""
    hits = np.zeros(len(points), dtype=bool)
    for lit in clause:
        column = points[:, abs(lit) - 1].astype(bool)
        hits |= column if lit > 0 else ~column
    return hits


def grow_auxiliary(points: np.ndarray, n_vars: int, cfg: EcapConfig,
                   rng: np.random.Generator) -> Tuple[List[Clause], np.ndarray]:
    """
    Append random 3-clauses until the surviving fraction of `points` lies in
    [cfg.window_low, cfg.window_high]

    Returns:
        (clauses, mask of surviving points)

    Raises:
        WindowOvershoot: every retry of some clause fell below the window
        AuxLimitExceeded: window not reached within cfg.max_aux clauses
    """
    survivors = np.ones(len(points), dtype=bool)
    ratio = 1.0
    clauses: List[Clause] = []

    while not cfg.window_low <= ratio <= cfg.window_high:
        if len(clauses) >= cfg.max_aux:
            raise AuxLimitExceeded(
                f"ratio {ratio:.3g} still above the window after {len(clauses)} auxiliary clauses")

        for attempt in range(cfg.max_retries + 1):
            clause = random_clause(n_vars, rng)
            candidate = survivors & clause_mask(points, clause)
            candidate_ratio = candidate.mean()
            if candidate_ratio >= cfg.window_low:
                break
            logger.debug("auxiliary clause %s overshoots (ratio %.3g), retry %d",
                         clause, candidate_ratio, attempt + 1)
        else:
            raise WindowOvershoot(
                f"{cfg.max_retries + 1} candidate clauses all pushed the ratio below {cfg.window_low}")

        survivors, ratio = candidate, float(candidate_ratio)
        clauses.append(clause)
        logger.info("tau=%d ratio=%.4g", len(clauses), ratio)

    return clauses, survivors


def extended_cap_recap(instance: SatModel, final_states, cap_cfg: CapRecapConfig = caprecap_defaults,
                       cfg: EcapConfig = ecap_defaults, seed: int = 0, threads: int = 1,
                       product_log_estimate: Optional[float] = None) -> EcapResult:
    """
    Extended capture-recapture for a 3-SAT model

    Args:
        instance: SAT model the splitting run counted
        final_states: distinct solutions of the finished run
        cap_cfg: inner capture batch settings
        cfg: ratio window and clause caps
        seed: random seed (streams disjoint from the splitting run's)
        threads: worker threads for chain blocks
        product_log_estimate: splitting estimate, checked against cfg.min_estimate

    Returns:
        EcapResult with log_estimate = ln(inner Chapman) - ln(ratio)
    """
    cfg.validate()
    if product_log_estimate is not None and product_log_estimate < math.log(cfg.min_estimate):
        logger.warning("product estimate %.3g is below the extended regime (%.3g); "
                       "the classic estimator is usually enough",
                       math.exp(product_log_estimate), cfg.min_estimate)

    if not isinstance(final_states, np.ndarray):
        final_states = instance.stack(final_states)

    # Uniform points of X_m
    points = capture_chains(instance, final_states, cfg.sample_size, cap_cfg,
                            instance.max_score, seed, BATCH_LEVEL_POINTS, threads)

    clauses, survivors = grow_auxiliary(points, instance.inst.n_vars, cfg,
                                        random_stream(seed, STREAM_AUX))
    c_hat = float(survivors.mean())

    extended = SatModel(instance.inst.with_clauses(clauses))
    seeds = points[survivors]
    seeds = seeds[extended.distinct_indices(seeds)]

    first, second = draw_final_batches(extended, seeds, cap_cfg, seed=seed, threads=threads,
                                       tags=BATCH_INNER)
    inner = cap_recap_batches(extended, first, second)

    return EcapResult(
        tau=len(clauses),
        c_hat_aux=c_hat,
        inner=inner,
        log_estimate=backward_log_estimate(inner.chapman_estimate, c_hat),
        aux_clauses=tuple(clauses),
        n_points=len(points),
        n_accepted=int(survivors.sum()),
    )


# ============================================
# Cross-run statistics
# ============================================

def relative_error(estimates: Sequence[float]) -> float:
    """Sample standard deviation (n-1) over sample mean"""
    values = np.asarray(estimates, dtype=float)
    if values.size < 2:
        raise DegenerateInput("relative error needs at least two estimates")
    mean = values.mean()
    if mean == 0:
        raise DegenerateInput("relative error is undefined for a zero mean")
    return float(values.std(ddof=1) / mean)


def suggest_estimator(log_estimate: float) -> str:
    """Estimator suited to the size of the solution set"""
    if log_estimate <= math.log(CAPRECAP_LIMIT):
        return 'caprecap'
    if log_estimate <= math.log(ECAP_LIMIT):
        return 'ecap'
    return 'split'


def relative_error_from_logs(log_estimates: Sequence[float]) -> float:
    """relative_error of exp(log_estimates), computed without overflow

    RE is scale-free, so the values are shifted by their maximum first.
    """
    logs = np.asarray(log_estimates, dtype=float)
    if logs.size == 0:
        raise DegenerateInput("relative error needs at least two estimates")
    return relative_error(np.exp(logs - logs.max()))


def mean_log_estimate(log_estimates: Sequence[float]) -> float:
    """ln of the arithmetic mean of exp(log_estimates)"""
    logs = np.asarray(log_estimates, dtype=float)
    return float(logsumexp(logs) - math.log(logs.size))
