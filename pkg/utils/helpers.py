"""
Helper utility functions
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import comb

from config import log_config
from errors import ParseError

LN10 = math.log(10.0)


def configure_logging(level: Optional[str] = None):
    """Configure the root logger once from SPLITCOUNT_LOG (or an explicit level)"""
    level_name = (level or log_config.LEVEL).upper()
    numeric = getattr(logging, level_name, None)
    if not isinstance(numeric, int):
        numeric = logging.WARNING

    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(format=log_config.FORMAT, datefmt=log_config.DATE_FORMAT)
    root.setLevel(numeric)
    return numeric


def random_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key...); same inputs give the same stream"""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def derive_run_seed(seed: int, run_index: int) -> int:
    """Seed of the run_index-th independent run"""
    return (seed + run_index) % 2 ** 64


def exact_binomial(n: int, k: int) -> int:
    """C(n, k) as an exact integer (0 outside 0 <= k <= n)"""
    if k < 0 or k > n:
        return 0
    return int(comb(n, k, exact=True))


def log_of_count(count: int) -> float:
    """Natural log of a (possibly huge) positive integer"""
    if count <= 0:
        return float('-inf')
    return math.log(count)


def log10_from_ln(value: float) -> float:
    return value / LN10


def format_scientific(log_value: float, digits: int = 3) -> str:
    """Render exp(log_value) in scientific notation without leaving log space"""
    if log_value == float('-inf'):
        return "0"
    if not math.isfinite(log_value):
        return "inf"

    log10 = log10_from_ln(log_value)
    exponent = math.floor(log10)
    mantissa = round(10 ** (log10 - exponent), digits - 1)

    # 9.995 rounds to 10.0
    if mantissa >= 10:
        mantissa /= 10
        exponent += 1

    return f"{mantissa:.{digits - 1}f}E{exponent:+03d}"


def format_seconds(seconds: float) -> str:
    """Format wall time the way the run tables print it"""
    return f"{seconds:.3f}"


def ensure_directory(directory):
    """Ensure directory exists, create if not"""
    if directory and not os.path.exists(directory):
        os.makedirs(directory)

    return directory


class LevelProgress:
    """Track how far the lower elite level is from the target level"""

    def __init__(self, target: int):
        self.target = target
        self.start = None
        self.current = None

    def update(self, level: int):
        """Record the newest lower level"""
        if self.start is None:
            self.start = level
        self.current = level

    def get_percentage(self):
        """Share of the distance from the first level to the target already covered"""
        if self.current is None:
            return 0
        span = self.target - self.start
        if span <= 0:
            return 100.0
        return (self.current - self.start) / span * 100

    def is_complete(self):
        """Check if the target level was reached"""
        return self.current is not None and self.current >= self.target


def parallel_map(fn, items, threads: int = 1):
    """Map fn over items, results in input order whatever the thread count"""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def block_slices(n: int, block: int):
    """(index, start, stop) of consecutive fixed-size blocks covering range(n)"""
    return [(i, start, min(start + block, n)) for i, start in enumerate(range(0, n, block))]


def decode_text(data: bytes, source: Optional[str] = None) -> str:
    """UTF-8 decode of an instance file, ParseError on bad bytes"""
    try:
        return data.decode('utf-8')
    except UnicodeDecodeError as e:
        line = data[:e.start].count(b'\n') + 1
        raise ParseError(f"{source or 'input'} is not UTF-8 text "
                         f"(byte 0x{data[e.start]:02x} at offset {e.start})", line) from None


def read_text(path) -> str:
    """Contents of an instance file as text"""
    return decode_text(Path(path).read_bytes(), str(path))
