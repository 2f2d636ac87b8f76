"""Feature subset search: CFS merit over a correlation cache, driven by a
binary bat-algorithm swarm, plus information-gain filter baselines."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .dataset import Dataset
from .errors import InputError


@dataclass(frozen=True)
class CorrelationCache:
    """Symmetric-uncertainty correlations between binned features and the label.

    feature_class[i] = SU(feature i, label); feature_feature[i, j] =
    SU(feature i, feature j). All entries live in [0, 1], the diagonal is 1.
    """

    feature_class: np.ndarray  # (d,)
    feature_feature: np.ndarray  # (d, d) symmetric
    bins: int

    def __post_init__(self):
        fc = np.array(self.feature_class, dtype=np.float64)
        ff = np.array(self.feature_feature, dtype=np.float64)
        object.__setattr__(self, "feature_class", fc)
        object.__setattr__(self, "feature_feature", ff)
        d = fc.shape[0]
        if ff.shape != (d, d):
            raise InputError("feature_feature must be d x d")
        if not np.allclose(ff, ff.T):
            raise InputError("feature_feature must be symmetric")
        if fc.min() < 0 or fc.max() > 1 or ff.min() < 0 or ff.max() > 1:
            raise InputError("correlations must lie in [0, 1]")
        fc.setflags(write=False)
        ff.setflags(write=False)

    @property
    def n_features(self) -> int:
        return self.feature_class.shape[0]


@dataclass(frozen=True)
class FeatureSubset:
    """Bitmask over the feature columns; at least one bit must be set."""

    mask: np.ndarray
    k: int = 0

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "k", int(mask.sum()))
        if self.k < 1:
            raise InputError("feature subset is empty")
        mask.setflags(write=False)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @classmethod
    def from_indices(cls, indices, d: int) -> "FeatureSubset":
        mask = np.zeros(d, dtype=bool)
        mask[np.asarray(indices, dtype=np.int64)] = True
        return cls(mask=mask)


@dataclass(frozen=True)
class Bat:
    """One swarm member: continuous position plus loudness/pulse state."""

    position: np.ndarray
    velocity: np.ndarray
    frequency: float
    loudness: float
    pulse_rate: float
    initial_pulse_rate: float
    best_fitness: float
    best_subset: FeatureSubset


@dataclass(frozen=True)
class BatSwarmConfig:
    n_bats: int = 30
    f_min: float = 0.0
    f_max: float = 2.0
    alpha: float = 0.9
    gamma: float = 0.9
    max_iterations: int = 100
    seed: int = 0
    loudness_range: tuple[float, float] = (1.0, 2.0)
    pulse_rate_range: tuple[float, float] = (0.0, 1.0)
    position_range: tuple[float, float] = (-1.0, 1.0)
    position_clamp: float = 6.0
    anchor_scale: float = 2.0

    def validate(self):
        if self.n_bats < 2:
            raise InputError("need at least 2 bats")
        if self.max_iterations < 1:
            raise InputError("need at least 1 iteration")
        if self.f_min > self.f_max:
            raise InputError("f_min must not exceed f_max")
        if not 0.0 < self.alpha < 1.0:
            raise InputError("alpha must lie in (0, 1)")
        if self.gamma <= 0.0:
            raise InputError("gamma must be positive")
        if self.position_clamp <= 0.0:
            raise InputError("position clamp must be positive")
        if self.anchor_scale <= 0.0:
            raise InputError("anchor scale must be positive")


@dataclass(frozen=True)
class SelectionTrace:
    """Search diagnostics: best merit after init and after each iteration."""

    best_merit_per_iteration: tuple[float, ...]
    evaluations: int
    seconds: float

    @property
    def best_merit(self) -> float:
        return self.best_merit_per_iteration[-1]


def _bin_column(x: np.ndarray, bins: int) -> np.ndarray:
    """Discretize one column: values pass through when there are few of them,
    otherwise equal-frequency quantile bins."""
    distinct = np.unique(x)
    if distinct.size <= bins:
        return np.searchsorted(distinct, x).astype(np.int64)
    edges = np.quantile(x, np.arange(1, bins) / bins)
    return np.searchsorted(edges, x, side="right").astype(np.int64)


def _entropy_of_codes(codes: np.ndarray) -> float:
    counts = np.bincount(codes)
    counts = counts[counts > 0]
    total = counts.sum()
    p = counts / total
    return float(-(p * np.log2(p)).sum())


def _joint_entropy(a: np.ndarray, b: np.ndarray) -> float:
    width = int(b.max()) + 1
    return _entropy_of_codes(a * width + b)


def mutual_information(a: np.ndarray, b: np.ndarray) -> float:
    """I(A; B) in bits over integer codes, clipped at 0 against float noise."""
    mi = _entropy_of_codes(a) + _entropy_of_codes(b) - _joint_entropy(a, b)
    return max(mi, 0.0)


def symmetric_uncertainty(a: np.ndarray, b: np.ndarray) -> float:
    """SU(A, B) = 2 I(A;B) / (H(A) + H(B)), defined as 0 when both are constant."""
    ha = _entropy_of_codes(a)
    hb = _entropy_of_codes(b)
    if ha + hb == 0.0:
        return 0.0
    su = 2.0 * mutual_information(a, b) / (ha + hb)
    return min(max(su, 0.0), 1.0)


def build_correlation_cache(ds: Dataset, bins: int = 10) -> CorrelationCache:
    """Bin every feature and fill the pairwise SU matrices used by the merit."""
    if bins < 2:
        raise InputError("need at least 2 bins")
    if ds.n_rows == 0:
        raise InputError("empty dataset")
    d = ds.n_features
    codes = [_bin_column(ds.features[:, j], bins) for j in range(d)]
    label_codes = ds.labels.astype(np.int64)
    feature_class = np.array([symmetric_uncertainty(codes[j], label_codes) for j in range(d)])
    feature_feature = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            su = symmetric_uncertainty(codes[i], codes[j])
            feature_feature[i, j] = su
            feature_feature[j, i] = su
    return CorrelationCache(feature_class=feature_class, feature_feature=feature_feature, bins=bins)


def cfs_merit(subset: FeatureSubset, cache: CorrelationCache) -> float:
    """Subset quality k * mean(feature-class SU) / sqrt(k + k(k-1) * mean pair SU).

    The pairwise mean runs over off-diagonal selected pairs and is 0 for k = 1.
    """
    idx = subset.indices
    k = idx.size
    if k == 0:
        raise InputError("cannot score an empty subset")
    r_cf = float(cache.feature_class[idx].mean())
    if k == 1:
        r_ff = 0.0
    else:
        block = cache.feature_feature[np.ix_(idx, idx)]
        r_ff = float((block.sum() - np.trace(block)) / (k * (k - 1)))
    return k * r_cf / math.sqrt(k + k * (k - 1) * r_ff)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def binarize(position: np.ndarray, rng_draws: np.ndarray, guard: int | None = None) -> FeatureSubset:
    """Map a continuous position to a subset: bit i set iff draw_i < sigmoid(x_i).

    An empty outcome falls back to the guard feature (callers pass the feature
    with the strongest class correlation; defaults to 0).
    """
    position = np.asarray(position, dtype=np.float64)
    rng_draws = np.asarray(rng_draws, dtype=np.float64)
    if position.shape != rng_draws.shape:
        raise InputError("position and draw vectors differ in length")
    mask = rng_draws < _sigmoid(position)
    if not mask.any():
        mask = mask.copy()
        mask[guard if guard is not None else 0] = True
    return FeatureSubset(mask=mask)


def bat_step(bat: Bat, best_position: np.ndarray, beta: float,
             f_min: float, f_max: float, position_clamp: float = 6.0) -> Bat:
    """Frequency-tuned flight: f = f_min + (f_max - f_min) beta,
    v' = v + (x - x_best) f, x' = clamp(x + v')."""
    best_position = np.asarray(best_position, dtype=np.float64)
    if best_position.shape != bat.position.shape:
        raise InputError("best position has wrong dimension")
    freq = f_min + (f_max - f_min) * beta
    velocity = bat.velocity + (bat.position - best_position) * freq
    position = np.clip(bat.position + velocity, -position_clamp, position_clamp)
    return replace(bat, position=position, velocity=velocity, frequency=freq)


def local_walk(position: np.ndarray, epsilon: np.ndarray, mean_loudness: float,
               position_clamp: float = 6.0) -> np.ndarray:
    """Random walk x + eps * A around a solution, scaled by the mean loudness."""
    position = np.asarray(position, dtype=np.float64)
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if position.shape != epsilon.shape:
        raise InputError("position and epsilon vectors differ in length")
    if mean_loudness < 0:
        raise InputError("mean loudness must be non-negative")
    return np.clip(position + epsilon * mean_loudness, -position_clamp, position_clamp)


def update_loudness_rate(bat: Bat, alpha: float, gamma: float, t: int) -> Bat:
    """Shrink loudness geometrically and grow the pulse rate toward its cap."""
    if not 0.0 < alpha < 1.0:
        raise InputError("alpha must lie in (0, 1)")
    if gamma <= 0.0:
        raise InputError("gamma must be positive")
    return replace(
        bat,
        loudness=alpha * bat.loudness,
        pulse_rate=bat.initial_pulse_rate * (1.0 - math.exp(-gamma * t)),
    )


def _subset_key(subset: FeatureSubset) -> tuple:
    return (subset.k, tuple(int(b) for b in subset.mask))


def _improves(merit, subset, best_merit, best_subset) -> bool:
    if merit != best_merit:
        return merit > best_merit
    return _subset_key(subset) < _subset_key(best_subset)


def subset_anchor(subset: FeatureSubset, scale: float) -> np.ndarray:
    """Canonical position encoding of a subset: +scale for selected features,
    -scale otherwise. Used as the best-solution reference so its bit-flip
    probabilities under the sigmoid stay away from saturation."""
    return scale * (2.0 * subset.mask.astype(np.float64) - 1.0)


def cfs_ba_select(ds: Dataset, config: BatSwarmConfig | None = None,
                  bins: int = 10) -> tuple[FeatureSubset, SelectionTrace]:
    """Search the subset space for the best CFS merit with a bat swarm.

    Each bat flies by frequency-tuned velocity updates relative to the best
    solution found so far; with probability (1 - pulse rate) its candidate is
    instead a random walk around that best solution, scaled by the swarm's
    mean loudness. The best solution enters both updates through its canonical
    anchor encoding (see subset_anchor). Candidates are binarized
    stochastically and scored with cfs_merit; a bat archives a candidate when
    the merit does not drop and a uniform draw stays under its loudness, which
    then decays while the pulse rate grows. The global best updates on strict
    improvement (ties prefer fewer features, then the lexicographically
    smaller mask). Deterministic given the seed.
    """
    config = config or BatSwarmConfig()
    config.validate()
    d = ds.n_features
    if d < 2:
        raise InputError("need at least 2 features to search")

    start = time.perf_counter()
    cache = build_correlation_cache(ds, bins)
    guard = int(np.argmax(cache.feature_class))
    rng = np.random.default_rng(config.seed)
    n = config.n_bats

    positions = rng.uniform(*config.position_range, size=(n, d))
    loudness = rng.uniform(*config.loudness_range, size=n)
    initial_rates = rng.uniform(*config.pulse_rate_range, size=n)

    evaluations = 0
    bats: list[Bat] = []
    best_merit = -math.inf
    best_subset = None
    for i in range(n):
        subset = binarize(positions[i], rng.random(d), guard)
        merit = cfs_merit(subset, cache)
        evaluations += 1
        bats.append(
            Bat(
                position=positions[i],
                velocity=np.zeros(d),
                frequency=0.0,
                loudness=float(loudness[i]),
                pulse_rate=0.0,
                initial_pulse_rate=float(initial_rates[i]),
                best_fitness=merit,
                best_subset=subset,
            )
        )
        if best_subset is None or _improves(merit, subset, best_merit, best_subset):
            best_merit, best_subset = merit, subset

    trace = [best_merit]
    for t in range(1, config.max_iterations + 1):
        mean_loudness = float(np.mean([b.loudness for b in bats]))
        best_position = subset_anchor(best_subset, config.anchor_scale)
        for i, bat in enumerate(bats):
            bat = bat_step(bat, best_position, rng.random(),
                           config.f_min, config.f_max, config.position_clamp)
            candidate = bat.position
            if bat.pulse_rate < rng.random():
                epsilon = rng.uniform(-1.0, 1.0, d)
                candidate = local_walk(best_position, epsilon, mean_loudness,
                                       config.position_clamp)
            subset = binarize(candidate, rng.random(d), guard)
            merit = cfs_merit(subset, cache)
            evaluations += 1
            if merit >= bat.best_fitness and rng.random() < bat.loudness:
                bat = replace(bat, best_fitness=merit, best_subset=subset)
                bat = update_loudness_rate(bat, config.alpha, config.gamma, t)
            bats[i] = bat
            if _improves(merit, subset, best_merit, best_subset):
                best_merit, best_subset = merit, subset
        trace.append(best_merit)

    seconds = time.perf_counter() - start
    return best_subset, SelectionTrace(
        best_merit_per_iteration=tuple(trace),
        evaluations=evaluations,
        seconds=seconds,
    )


def exhaustive_best_subset(cache: CorrelationCache) -> tuple[FeatureSubset, float]:
    """Enumerate every nonempty subset; only feasible for small d."""
    d = cache.n_features
    if d > 20:
        raise InputError("exhaustive enumeration is limited to 20 features")
    best = None
    best_merit = -math.inf
    for bits in range(1, 1 << d):
        mask = np.array([(bits >> j) & 1 for j in range(d)], dtype=bool)
        subset = FeatureSubset(mask=mask)
        merit = cfs_merit(subset, cache)
        if best is None or _improves(merit, subset, best_merit, best):
            best, best_merit = subset, merit
    return best, best_merit


def ig_rank(ds: Dataset, bins: int = 10) -> list[tuple[int, float]]:
    """Features ordered by information gain with the label, ties by index."""
    d = ds.n_features
    codes = [_bin_column(ds.features[:, j], bins) for j in range(d)]
    labels = ds.labels.astype(np.int64)
    scores = [mutual_information(codes[j], labels) for j in range(d)]
    order = sorted(range(d), key=lambda j: (-scores[j], j))
    return [(j, scores[j]) for j in order]


def igr_rank(ds: Dataset, bins: int = 10) -> list[tuple[int, float]]:
    """Features ordered by gain ratio IG / H(feature); zero-entropy features score 0."""
    d = ds.n_features
    codes = [_bin_column(ds.features[:, j], bins) for j in range(d)]
    labels = ds.labels.astype(np.int64)
    scores = []
    for j in range(d):
        h = _entropy_of_codes(codes[j])
        scores.append(mutual_information(codes[j], labels) / h if h > 0 else 0.0)
    order = sorted(range(d), key=lambda j: (-scores[j], j))
    return [(j, scores[j]) for j in order]


def selection_report(subset: FeatureSubset, trace: SelectionTrace, ds: Dataset) -> dict:
    """JSON-ready summary of a selection run."""
    indices = [int(i) for i in subset.indices]
    return {
        "selected": indices,
        "names": [ds.feature_meta[i].name for i in indices],
        "merit": trace.best_merit,
        "iterations": len(trace.best_merit_per_iteration) - 1,
        "evaluations": trace.evaluations,
        "seconds": trace.seconds,
    }
