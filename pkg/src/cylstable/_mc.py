"""Monte Carlo plumbing shared by the path-based modules.

Random streams are :class:`numpy.random.SeedSequence` objects.  A run is split
into fixed-size batches, each driven by its own spawned child sequence, so the
numbers produced depend only on the root seed and the batch size, never on how
many worker threads execute the batches.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

#: Environment variable holding the default worker-thread count.
THREADS_ENV = "CYLSTABLE_NUM_THREADS"

DEFAULT_BATCH = 20_000


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo mean with its standard error."""

    mean: float
    stderr: float
    n_paths: int
    step: float

    def joint_sigma(self, other):
        return float(np.hypot(self.stderr, other.stderr))

    def agrees_with(self, value, n_sigma=3.0, other_stderr=0.0):
        sigma = np.hypot(self.stderr, other_stderr)
        return abs(self.mean - value) <= n_sigma * sigma


def as_seed_sequence(rng):
    """Coerce ``rng`` (int, SeedSequence, Generator or None) to a SeedSequence."""
    if isinstance(rng, np.random.SeedSequence):
        return rng
    if isinstance(rng, np.random.Generator):
        return rng.bit_generator.seed_seq.spawn(1)[0]
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.SeedSequence(rng)
    raise TypeError(f"cannot build a random stream from {type(rng).__name__}")


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(as_seed_sequence(rng))


def default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def batch_sizes(n_paths, batch=DEFAULT_BATCH):
    full, rest = divmod(int(n_paths), batch)
    return [batch] * full + ([rest] if rest else [])


def map_batches(func, n_paths, rng, batch=DEFAULT_BATCH, threads=None):
    """Run ``func(size, generator)`` over independent batches.

    Returns the list of per-batch results in batch order.
    """
    sizes = batch_sizes(n_paths, batch)
    children = as_seed_sequence(rng).spawn(len(sizes))
    tasks = [(size, np.random.default_rng(child)) for size, child in zip(sizes, children)]
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(tasks) == 1:
        return [func(size, gen) for size, gen in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda task: func(*task), tasks))


def mean_estimate(samples, step):
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    mean = float(np.mean(samples))
    stderr = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean=mean, stderr=stderr, n_paths=n, step=float(step))


def time_grid(horizon, step):
    """Observation times ``0 = t_0 < ... < t_m = horizon`` with spacing <= step."""
    if step <= 0:
        raise ValueError("step must be positive")
    if step > horizon * (1 + 1e-12):
        raise ValueError("step must not exceed the horizon")
    m = int(np.ceil(horizon / step - 1e-9))
    return np.linspace(0.0, horizon, m + 1)
