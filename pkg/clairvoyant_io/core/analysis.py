"""
Analysis of per-worker access-frequency distributions.

Under full randomization a fixed sample lands on a fixed worker with probability
1/N in every epoch, so its access frequency on that worker over E epochs is
Binomial(E, 1/N). This module evaluates the binomial tail in log space, turns it
into an expected count of "hot" samples, checks the closed form against real
generated streams (Monte Carlo) and computes the counterpart bounds that guarantee
some other worker reads a hot sample rarely (and vice versa).
"""
import logging
import math

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

from dataclasses_json import dataclass_json
from scipy.special import logsumexp
from scipy.stats import binom

from clairvoyant_io.core.access import (
    AccessStream,
    FrequencyTable,
    PartitionSpec,
    access_frequencies,
    iter_worker_epochs,
)
from clairvoyant_io.core.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_PER_WORKER_BATCH = 32


@dataclass(frozen=True)
class AccessDistributionParams:
    """
    Parameters of the per-worker access-frequency distribution.

    Attributes
    ----------
    num_workers : int
        N >= 1.
    epochs : int
        E >= 1.
    num_samples : int
        F >= 0 (0 is allowed so that expectations degenerate cleanly).
    delta : float
        Excess factor over the mean, >= 0.
    """

    num_workers: int
    epochs: int
    num_samples: int
    delta: float = 0.0

    def __post_init__(self):
        if self.num_workers < 1:
            raise ConfigError(f"num_workers must be >= 1, got {self.num_workers}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.num_samples < 0:
            raise ConfigError(f"num_samples must be >= 0, got {self.num_samples}")
        if self.delta < 0:
            raise ConfigError(f"delta must be >= 0, got {self.delta}")

    @property
    def mean(self) -> Fraction:
        return Fraction(self.epochs, self.num_workers)


@dataclass(frozen=True, eq=False)
class FrequencyHistogram:
    """
    Number of samples per access count.

    Attributes
    ----------
    buckets : numpy.ndarray
        ``buckets[x]`` is the number of samples accessed exactly ``x`` times,
        for ``x`` in ``0..E``.
    """

    buckets: np.ndarray

    @property
    def num_samples(self) -> int:
        return int(self.buckets.sum())

    def mean(self) -> float:
        counts = np.arange(len(self.buckets))
        return float((counts * self.buckets).sum() / self.buckets.sum())

    def samples_above(self, threshold: float) -> int:
        """Number of samples accessed strictly more than ``threshold`` times."""
        first = math.floor(threshold) + 1
        return int(self.buckets[max(first, 0) :].sum())

    def rows(self) -> List[Tuple[int, int]]:
        return [(count, int(samples)) for count, samples in enumerate(self.buckets)]


@dataclass_json
@dataclass
class AnalysisSummary:
    num_workers: int
    epochs: int
    num_samples: int
    delta: float
    threshold_accesses: float
    prob_exceeds: float
    expected_hot_samples: float
    monte_carlo_hot_samples: Optional[int] = None
    monte_carlo_mean_accesses: Optional[float] = None
    monte_carlo_relative_error: Optional[float] = None
    lemma_violations: Optional[int] = None


def _exact(value: float) -> Fraction:
    # str() first so that 0.8 means 4/5 and not its binary neighbour
    return Fraction(str(float(value)))


def first_hot_count(params: AccessDistributionParams, inclusive: bool = False) -> int:
    """
    Smallest access count that counts as "hot".

    With ``inclusive=False`` this is the smallest integer strictly greater than
    ``(1+delta)*E/N``; with ``inclusive=True`` it is ``ceil((1+delta)*E/N)``. The two
    differ only when ``(1+delta)*E/N`` is an integer.
    """
    threshold = (1 + _exact(params.delta)) * params.mean
    if inclusive:
        return math.ceil(threshold)
    return math.floor(threshold) + 1


def prob_exceeds(params: AccessDistributionParams, inclusive: bool = False) -> float:
    """
    Probability that one worker accesses one sample more than ``(1+delta)*E/N`` times.

    The binomial tail is summed in log space (``binom.logpmf`` + ``logsumexp``) so
    that E in the thousands neither overflows nor underflows.

    Parameters
    ----------
    params : AccessDistributionParams
        N, E, F and delta.
    inclusive : bool, default=False
        Start the sum at ``ceil((1+delta)*mu)`` even when that equals ``(1+delta)*mu``.

    Returns
    -------
    float
        A probability in [0, 1].
    """
    first = max(first_hot_count(params, inclusive), 0)
    if first > params.epochs:
        return 0.0
    ks = np.arange(first, params.epochs + 1)
    log_terms = binom.logpmf(ks, params.epochs, 1.0 / params.num_workers)
    total = float(np.exp(logsumexp(log_terms)))
    return min(max(total, 0.0), 1.0)


def expected_hot_samples(params: AccessDistributionParams, inclusive: bool = False) -> float:
    """Expected number of samples a worker accesses more than ``(1+delta)*E/N`` times: ``F * P``."""
    if params.num_samples == 0:
        return 0.0
    return params.num_samples * prob_exceeds(params, inclusive)


def worker_counts(
    seed: int,
    num_workers: int,
    epochs: int,
    num_samples: int,
    worker: int = 0,
    global_batch: Optional[int] = None,
    drop_last: bool = False,
) -> np.ndarray:
    """Access counts of one worker, accumulated epoch by epoch from real generated streams."""
    if global_batch is None:
        global_batch = max(min(DEFAULT_PER_WORKER_BATCH * num_workers, num_samples), num_workers)
    part = PartitionSpec(
        num_workers=num_workers, global_batch=global_batch, epochs=epochs, drop_last=drop_last
    )
    counts = np.zeros(num_samples, dtype=np.int64)
    for entries in iter_worker_epochs(seed, num_samples, part, worker):
        counts += np.bincount(entries, minlength=num_samples)
    return counts


def monte_carlo_histogram(
    seed: int,
    num_workers: int,
    epochs: int,
    num_samples: int,
    worker: int = 0,
    global_batch: Optional[int] = None,
) -> FrequencyHistogram:
    """
    Histogram of one worker's access counts over a real generated run.

    The counts come from the access streams themselves (shuffle, batch, slice), not
    from binomial draws, so the independence assumption behind the closed form is
    checked end to end. The last short batch is kept so that every sample is read
    exactly E times in total.

    Returns
    -------
    FrequencyHistogram
        Buckets for counts ``0..E``; they sum to F.
    """
    counts = worker_counts(
        seed, num_workers, epochs, num_samples, worker=worker, global_batch=global_batch
    )
    buckets = np.bincount(counts, minlength=epochs + 1)
    logger.debug(
        "Monte Carlo histogram: N=%d E=%d F=%d worker=%d mean=%.4f",
        num_workers,
        epochs,
        num_samples,
        worker,
        float(counts.mean()) if num_samples else 0.0,
    )
    return FrequencyHistogram(buckets=buckets)


def lemma1_bounds(num_workers: int, epochs: int, delta: float) -> Tuple[int, int, int, int]:
    """
    Counterpart bounds for a worker with an unusually high or low access count.

    If some worker reads a sample at least ``high_threshold`` times, another worker
    reads it at most ``counterpart_low_bound`` times; if some worker reads it at most
    ``low_threshold`` times, another reads it at least ``counterpart_high_bound`` times.

    Returns
    -------
    tuple of int
        ``(high_threshold, counterpart_low_bound, low_threshold, counterpart_high_bound)``
        = ``(ceil((1+d)E/N), ceil((N-1-d)/(N-1) * E/N), floor((1-d)E/N), floor((N-1+d)/(N-1) * E/N))``.

    Raises
    ------
    ConfigError
        If N = 1 or delta is outside [0, N-1].
    """
    if num_workers <= 1:
        raise ConfigError("Counterpart bounds need at least two workers")
    if not 0 <= delta <= num_workers - 1:
        raise ConfigError(f"delta must lie in [0, {num_workers - 1}], got {delta}")

    d = _exact(delta)
    mean = Fraction(epochs, num_workers)
    others = Fraction(num_workers - 1)
    return (
        math.ceil((1 + d) * mean),
        math.ceil((others - d) / others * mean),
        math.floor((1 - d) * mean),
        math.floor((others + d) / others * mean),
    )


def lemma1_violations(counts: np.ndarray, epochs: int, delta: float) -> int:
    """
    Count (worker, sample) pairs that break the counterpart bounds.

    Parameters
    ----------
    counts : numpy.ndarray
        Shape ``(N, F)``; row ``i`` holds worker ``i``'s access counts. Every sample
        must be accessed exactly ``epochs`` times in total (drop_last disabled).
    epochs : int
        E.
    delta : float
        Excess factor in [0, N-1].

    Returns
    -------
    int
        Number of violations; 0 for every valid stream set.
    """
    counts = np.asarray(counts)
    num_workers = counts.shape[0]
    high, counterpart_low, low, counterpart_high = lemma1_bounds(num_workers, epochs, delta)

    ordered = np.sort(counts, axis=0)
    argmin = np.argmin(counts, axis=0)
    argmax = np.argmax(counts, axis=0)
    violations = 0
    for worker in range(num_workers):
        min_other = np.where(argmin == worker, ordered[1], ordered[0])
        max_other = np.where(argmax == worker, ordered[-2], ordered[-1])
        hot = (counts[worker] >= high) & (min_other > counterpart_low)
        cold = (counts[worker] <= low) & (max_other < counterpart_high)
        violations += int(np.count_nonzero(hot)) + int(np.count_nonzero(cold))
    return violations


def stream_counts(streams: Sequence[AccessStream], num_samples: int) -> np.ndarray:
    """Stack every worker's frequency table into an ``(N, F)`` matrix."""
    tables: List[FrequencyTable] = [access_frequencies(s, num_samples) for s in streams]
    return np.stack([t.counts for t in tables])


def expected_histogram(params: AccessDistributionParams) -> np.ndarray:
    """Expected number of samples per access count ``0..E``: ``F * Binomial(E, 1/N).pmf``."""
    counts = np.arange(params.epochs + 1)
    return params.num_samples * binom.pmf(counts, params.epochs, 1.0 / params.num_workers)


def analyze(
    params: AccessDistributionParams,
    seed: int = 0,
    monte_carlo: bool = False,
    worker: int = 0,
    lemma_delta: Optional[float] = None,
    inclusive: bool = False,
) -> Tuple[AnalysisSummary, Optional[FrequencyHistogram]]:
    """
    Closed-form tail, and optionally a Monte Carlo check and a counterpart-bound check.

    Parameters
    ----------
    params : AccessDistributionParams
        N, E, F and delta.
    seed : int, default=0
        Seed of the generated streams used by the checks.
    monte_carlo : bool, default=False
        Count hot samples of ``worker`` over a real generated run.
    worker : int, default=0
        The worker whose counts the Monte Carlo check histograms.
    lemma_delta : float, optional
        When given, count counterpart-bound violations over all workers' streams.
    inclusive : bool, default=False
        See ``prob_exceeds``.

    Returns
    -------
    tuple
        The summary, and the Monte Carlo histogram when one was computed.
    """
    threshold = (1 + _exact(params.delta)) * params.mean
    summary = AnalysisSummary(
        num_workers=params.num_workers,
        epochs=params.epochs,
        num_samples=params.num_samples,
        delta=float(params.delta),
        threshold_accesses=float(threshold),
        prob_exceeds=prob_exceeds(params, inclusive),
        expected_hot_samples=expected_hot_samples(params, inclusive),
    )

    histogram = None
    if monte_carlo and params.num_samples:
        histogram = monte_carlo_histogram(
            seed, params.num_workers, params.epochs, params.num_samples, worker=worker
        )
        first = first_hot_count(params, inclusive)
        hot = int(histogram.buckets[min(first, len(histogram.buckets)) :].sum())
        summary.monte_carlo_hot_samples = hot
        summary.monte_carlo_mean_accesses = histogram.mean()
        if summary.expected_hot_samples > 0:
            summary.monte_carlo_relative_error = (
                abs(hot - summary.expected_hot_samples) / summary.expected_hot_samples
            )

    if lemma_delta is not None:
        lemma1_bounds(params.num_workers, params.epochs, lemma_delta)
        counts = np.stack(
            [
                worker_counts(seed, params.num_workers, params.epochs, params.num_samples, w)
                for w in range(params.num_workers)
            ]
        )
        summary.lemma_violations = lemma1_violations(counts, params.epochs, lemma_delta)
        if summary.lemma_violations:
            logger.warning("%d counterpart-bound violations", summary.lemma_violations)
    return summary, histogram
