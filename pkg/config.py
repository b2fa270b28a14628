"""
Configuration for splitcount
"""
import os
from dataclasses import dataclass, replace
from typing import Optional

from errors import ConfigError

# Chains are advanced in fixed-size blocks, one random stream per block
CHAIN_BLOCK = 2048

# Random stream tags (first element of a SeedSequence spawn key)
STREAM_INIT = 0
STREAM_CHAINS = 1
STREAM_EXTEND = 2
STREAM_CAPTURE = 3
STREAM_AUX = 4


@dataclass(frozen=True)
class SplitConfig:
    """Splitting engine settings"""
    sample_size: int = 10000
    rho: float = 0.1
    seed: int = 0
    max_iterations: int = 1000

    # Enlarged N near the final level
    boost_sample_size: Optional[int] = None
    boost_trigger: int = 2

    # Sweeps per recorded chain point
    chain_thinning: int = 1
    threads: int = 1

    def validate(self) -> "SplitConfig":
        """Check ranges, return self so calls can be chained"""
        if self.sample_size < 100:
            raise ConfigError(f"sample size must be >= 100, got {self.sample_size}")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError(f"rho must lie in (0, 1), got {self.rho}")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be positive")
        if self.boost_sample_size is not None and self.boost_sample_size < self.sample_size:
            raise ConfigError(
                f"boost sample size {self.boost_sample_size} is below sample size {self.sample_size}"
            )
        if self.boost_trigger < 0:
            raise ConfigError("boost_trigger must be >= 0")
        if self.chain_thinning < 1:
            raise ConfigError("chain_thinning must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        return self

    def with_seed(self, seed: int) -> "SplitConfig":
        return replace(self, seed=seed)

    def sample_size_for(self, levels_left: int) -> int:
        """N to use when the target is `levels_left` score units away"""
        if self.boost_sample_size is not None and levels_left <= self.boost_trigger:
            return self.boost_sample_size
        return self.sample_size


@dataclass(frozen=True)
class CapRecapConfig:
    """Capture-recapture batch settings"""
    n1: int = 5000
    n2: int = 5000

    # Sweeps per capture chain; every `thinning`-th sweep state is recorded
    chain_sweeps: int = 20
    thinning: int = 2

    @property
    def records_per_chain(self) -> int:
        return self.chain_sweeps // self.thinning

    def validate(self) -> "CapRecapConfig":
        if self.n1 < 1 or self.n2 < 1:
            raise ConfigError("capture batch sizes must be positive")
        if self.thinning < 1:
            raise ConfigError(f"capture thinning must be >= 1, got {self.thinning}")
        if self.chain_sweeps < self.thinning:
            raise ConfigError(
                f"capture chains of {self.chain_sweeps} sweeps record nothing at thinning {self.thinning}")
        return self


@dataclass(frozen=True)
class EcapConfig:
    """Extended capture-recapture settings"""
    window_low: float = 1e-3
    window_high: float = 1e-2
    max_aux: int = 64
    max_retries: int = 20

    # Levels from the top at which the boosted N takes over
    trigger: int = 1

    # Product estimates below this stay with the classic estimator
    min_estimate: float = 1e6

    # Uniform X_m points used to estimate the auxiliary ratio
    sample_size: int = 10000

    def validate(self) -> "EcapConfig":
        if not 0.0 < self.window_low <= self.window_high < 1.0:
            raise ConfigError(
                f"ecap window must satisfy 0 < low <= high < 1, got [{self.window_low}, {self.window_high}]"
            )
        if self.max_aux < 1 or self.max_retries < 0:
            raise ConfigError("max_aux must be positive and max_retries non-negative")
        if self.trigger < 0:
            raise ConfigError("ecap trigger must be >= 0")
        if self.sample_size < 100:
            raise ConfigError("ecap sample size must be >= 100")
        return self


@dataclass(frozen=True)
class OracleBudget:
    """Cap on configurations an exact counter may visit"""
    max_configurations: int = 2 ** 26

    def __post_init__(self):
        if self.max_configurations < 1:
            raise ConfigError("oracle budget must be positive")


@dataclass
class LogConfig:
    """Logging settings"""
    LEVEL = os.getenv("SPLITCOUNT_LOG", "WARNING").upper()
    FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
    DATE_FORMAT = "%H:%M:%S"


@dataclass
class ReportConfig:
    """Report rendering settings"""
    HUMAN_DIGITS = 3
    MACHINE_DIGITS = 10
    TRACE_COLUMNS = [
        't', 'log10_estimate', 'N_t', 'N_t_screened', 'm_upper', 'm_lower', 'c_hat'
    ]


# Export configs
split_defaults = SplitConfig()
caprecap_defaults = CapRecapConfig()
ecap_defaults = EcapConfig()
oracle_defaults = OracleBudget()
log_config = LogConfig()
report_config = ReportConfig()
