"""Monte Carlo estimates of per-CRI slot counts and of gated-access delay.

Random streams are Philox generators keyed by ``(seed, block)``: runs are
grouped into fixed blocks of :data:`BLOCK_SIZE`, each block draws from its own
stream, and results are reduced in block order, so output does not depend on
the number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import UnstableSystem
from .splitmodel import CriOutcome, SplitDistribution

BLOCK_SIZE = 4096
OBSERVABLES = ("L", "C", "S", "I")
BACKLOG_CAP = 5000
BATCHES = 32


def stream(seed: int, block: int) -> np.random.Generator:
    """Independent generator for one block of runs."""
    ss = np.random.SeedSequence(entropy=seed & ((1 << 64) - 1), spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimulationConfig:
    """``n`` drives per-CRI runs; ``lam``/``horizon_cri``/``warmup_cri`` drive the gated system."""

    dist: SplitDistribution
    seed: int = 0
    runs: int = 1
    n: int | None = None
    lam: float | None = None
    horizon_cri: int = 10_000
    warmup_cri: int = 1_000
    threads: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.n is not None and self.n < 0:
            raise ValueError("n must be nonnegative")
        if self.lam is not None and self.lam < 0:
            raise ValueError("arrival rate must be nonnegative")
        if self.horizon_cri <= self.warmup_cri:
            raise ValueError("horizon must exceed warmup")


@dataclass(frozen=True)
class SampleStats:
    """Per-observable sample mean, variance and standard error.

    ``standard_error`` entries are ``None`` when fewer than two samples exist.
    """

    mean: dict
    variance: dict
    standard_error: dict
    runs: int
    seed: int

    def as_dict(self) -> dict:
        return {
            "means": self.mean,
            "variances": self.variance,
            "standard_errors": self.standard_error,
            "runs": self.runs,
            "seed": self.seed,
        }


def _stats(columns: dict, seed: int) -> SampleStats:
    mean, var, se = {}, {}, {}
    runs = 0
    for key, values in columns.items():
        values = np.asarray(values, dtype=float)
        runs = len(values)
        mean[key] = float(values.mean()) if runs else math.nan
        if runs >= 2:
            var[key] = float(values.var(ddof=1))
            se[key] = math.sqrt(var[key] / runs)
        else:
            var[key] = 0.0
            se[key] = None
    return SampleStats(mean, var, se, runs, seed)


# ---------------------------------------------------------------------------
# one CRI


def _last_counted(counts: np.ndarray, n) -> np.ndarray:
    """Vectorized M (1-based) for rows of ``counts`` summing to ``n``."""
    cum = np.cumsum(counts, axis=-1)
    return np.argmax(cum >= (np.asarray(n)[..., None] - 1), axis=-1) + 1


def simulate_cri(dist: SplitDistribution, n: int, rng) -> CriOutcome:
    """One realized ``(l, c, s, i)`` for a collision of ``n`` packets.

    ``rng`` needs only a ``multinomial(n, pvals)`` method, so a scripted
    object can force particular splits.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    p = dist.floats()
    d = dist.d
    l = c = s = i = 0
    pending = [n]
    while pending:
        m = pending.pop()
        if m == 0:
            l += 1
            i += 1
            continue
        if m == 1:
            l += 1
            s += 1
            continue
        counts = np.asarray(rng.multinomial(m, p))
        M = int(_last_counted(counts, m))
        if M < d:
            l += 1
            c += 1
        pending.extend(int(v) for v in counts[:M][::-1])
    return CriOutcome(l, c, s, i)


def _simulate_block(p: np.ndarray, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent CRIs of size ``n``; rows are (l, c, s, i)."""
    out = np.zeros((count, 4), dtype=np.int64)
    if n <= 1:
        out[:] = (1, 0, 0, 1) if n == 0 else (1, 0, 1, 0)
        return out
    d = len(p)
    sizes = np.full(count, n, dtype=np.int64)
    owner = np.arange(count)
    while sizes.size:
        counts = rng.multinomial(sizes, p)
        M = _last_counted(counts, sizes)
        extra = M < d
        np.add.at(out[:, 0], owner[extra], 1)
        np.add.at(out[:, 1], owner[extra], 1)
        counted = np.arange(d)[None, :] < M[:, None]
        idle = counted & (counts == 0)
        succ = counted & (counts == 1)
        np.add.at(out[:, 0], owner, idle.sum(axis=1) + succ.sum(axis=1))
        np.add.at(out[:, 3], owner, idle.sum(axis=1))
        np.add.at(out[:, 2], owner, succ.sum(axis=1))
        grow = counted & (counts >= 2)
        rows, cols = np.nonzero(grow)
        sizes = counts[rows, cols]
        owner = owner[rows]
    return out


def simulate_many(config: SimulationConfig) -> np.ndarray:
    """Per-run ``(l, c, s, i)`` rows for a per-CRI config, in run order."""
    if config.n is None:
        raise ValueError("per-CRI simulation needs n")
    p = np.array(config.dist.floats())
    blocks = [(b, min(BLOCK_SIZE, config.runs - b * BLOCK_SIZE)) for b in range(-(-config.runs // BLOCK_SIZE))]

    def work(item):
        b, count = item
        return _simulate_block(p, config.n, count, stream(config.seed, b))

    if config.threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(item) for item in blocks]
    return np.concatenate(parts)


def monte_carlo_means(config: SimulationConfig) -> SampleStats:
    """Sample means and standard errors of (l, c, s, i) over ``config.runs`` CRIs."""
    return summarize_runs(simulate_many(config), config.seed)


def summarize_runs(rows: np.ndarray, seed: int) -> SampleStats:
    """Statistics of ``(l, c, s, i)`` rows as returned by :func:`simulate_many`."""
    return _stats({k: rows[:, j] for j, k in enumerate(OBSERVABLES)}, seed)


# ---------------------------------------------------------------------------
# tagged-packet resolution and the gated system


def resolve_with_delays(dist: SplitDistribution, n: int, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """CRI length for ``n`` packets and each packet's resolution time.

    A packet that lands in slot ``g`` of a collision waits ``1{g < d}`` plus
    the lengths of the subtrees of slots ``1..g-1`` before its own subtree
    starts, and one slot once it is alone.
    """
    delays = np.zeros(n)
    p = dist.floats()
    d = dist.d

    def node(members: np.ndarray, offset: float) -> int:
        size = len(members)
        if size <= 1:
            delays[members] = offset + 1
            return 1
        slots = rng.choice(d, size=size, p=p)
        groups = [members[slots == g] for g in range(d)]
        counts = np.array([len(g) for g in groups])
        M = int(_last_counted(counts, size))
        running = 0
        total = 1 if M < d else 0
        for g in range(d):
            wait = (1 if g < d - 1 else 0) + running
            length = node(groups[g], offset + wait)
            running += length
            if g < M:
                total += length
        return total

    if n == 0:
        return 1, delays
    length = node(np.arange(n), 0.0)
    return length, delays


def simulate_tagged_resolution(dist: SplitDistribution, others: int, rng: np.random.Generator) -> float:
    """Resolution time of one tagged packet colliding with ``others`` packets."""
    _, delays = resolve_with_delays(dist, others + 1, rng)
    return float(delays[0])


@dataclass(frozen=True)
class DelaySample:
    wait: np.ndarray  # t_0: slots left in the CRI during which the packet arrived
    resolution: np.ndarray  # t_2
    histogram: dict = field(default_factory=dict)  # CRI length -> empirical frequency

    @property
    def total(self) -> np.ndarray:
        return self.wait + self.resolution


@dataclass(frozen=True)
class GatedResult:
    delays: DelaySample
    cri_stats: SampleStats  # batch-means SE
    delay_stats: SampleStats  # batch-means SE over packets in CRI order
    cri_lengths: np.ndarray


def _batch_means(values: np.ndarray, batches: int = BATCHES) -> tuple[float, float | None]:
    values = np.asarray(values, dtype=float)
    if len(values) < 2 * batches:
        if len(values) < 2:
            return (float(values.mean()) if len(values) else math.nan), None
        return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))
    size = len(values) // batches
    means = values[: size * batches].reshape(batches, size).mean(axis=1)
    return float(values.mean()), float(means.std(ddof=1) / math.sqrt(batches))


def _trend_slope(backlog: np.ndarray, batches: int = 20) -> tuple[float, float]:
    """Slope of backlog per CRI and its standard error, fitted to batch means.

    Averaging over batches first tames the autocorrelation of successive
    backlogs, which would otherwise make the least-squares error far too small.
    """
    y = np.asarray(backlog, dtype=float)
    if len(y) < 2 * batches:
        return 0.0, math.inf
    size = len(y) // batches
    means = y[: size * batches].reshape(batches, size).mean(axis=1)
    x = (np.arange(batches) + 0.5) * size
    xc = x - x.mean()
    slope = float(np.dot(xc, means - means.mean()) / np.dot(xc, xc))
    resid = means - means.mean() - slope * xc
    sigma2 = float(np.dot(resid, resid) / (batches - 2))
    return slope, math.sqrt(sigma2 / float(np.dot(xc, xc)))


def _diverging(backlog: np.ndarray) -> tuple[bool, float]:
    """Positive trend beyond 3 sigma that also adds at least half the mean backlog over the window."""
    slope, se = _trend_slope(backlog)
    growth = slope * len(backlog)
    return slope > 3 * se and growth > 0.5 * (float(np.mean(backlog)) + 1), slope


def simulate_gated_system(config: SimulationConfig) -> GatedResult:
    """Successive CRIs under gated access with Poisson arrivals.

    Packets arriving during a CRI of length ``c`` wait ``Unif(0, c)`` slots for
    it to end and are resolved in the next CRI. Statistics cover CRIs after
    ``warmup_cri``. Raises :class:`UnstableSystem` when the backlog passes
    :data:`BACKLOG_CAP` packets or when, over the second half of the horizon,
    its trend is positive beyond three standard errors and adds at least half
    the mean backlog.
    """
    if config.lam is None:
        raise ValueError("gated simulation needs an arrival rate")
    rng = stream(config.seed, 0)
    lam = config.lam
    lengths = np.zeros(config.horizon_cri, dtype=np.int64)
    backlog = np.zeros(config.horizon_cri, dtype=np.int64)
    waits: list[np.ndarray] = []
    resolutions: list[np.ndarray] = []
    batch_ids: list[int] = []
    n_next = 0
    pending_wait = np.zeros(0)
    for k in range(config.horizon_cri):
        n = n_next
        backlog[k] = n
        if n > BACKLOG_CAP:
            raise UnstableSystem(f"backlog reached {n} packets after {k} CRIs at lambda={lam}")
        length, t2 = resolve_with_delays(config.dist, n, rng)
        lengths[k] = length
        if k >= config.warmup_cri and n:
            waits.append(pending_wait)
            resolutions.append(t2)
            batch_ids.append(k)
        n_next = int(rng.poisson(lam * length)) if lam > 0 else 0
        # arrival instants are uniform over the CRI; the wait is what remains of it
        pending_wait = length * (1.0 - rng.random(n_next))
    half = backlog[config.horizon_cri // 2 :]
    diverging, slope = _diverging(half)
    if diverging:
        raise UnstableSystem(f"backlog grows by {slope:.3g} packets per CRI (3 sigma) at lambda={lam}")
    post = lengths[config.warmup_cri :]
    values, freq = np.unique(post, return_counts=True)
    histogram = {int(v): float(f) / len(post) for v, f in zip(values, freq)}
    wait = np.concatenate(waits) if waits else np.zeros(0)
    resolution = np.concatenate(resolutions) if resolutions else np.zeros(0)
    sample = DelaySample(wait, resolution, histogram)
    cri_mean, cri_se = _batch_means(post)
    cri_stats = SampleStats(
        {"L": cri_mean},
        {"L": float(post.var(ddof=1)) if len(post) > 1 else 0.0},
        {"L": cri_se},
        len(post),
        config.seed,
    )
    means, variances, ses = {}, {}, {}
    for key, values_ in (("total", sample.total), ("wait", wait), ("resolution", resolution)):
        means[key], ses[key] = _batch_means(values_)
        variances[key] = float(values_.var(ddof=1)) if len(values_) > 1 else 0.0
    delay_stats = SampleStats(means, variances, ses, len(wait), config.seed)
    return GatedResult(sample, cri_stats, delay_stats, post)
