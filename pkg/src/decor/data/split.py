"""Iterative stratification for multi-label train/test splits."""

import numpy as np

from ..exceptions import ConfigError
from .wafer import mask_to_multihot


def iterative_stratification(Y, test_fraction, seed=0, rebalance=True):
    """Return the test indices for a multi-label indicator matrix ``Y``.

    Greedy scheme: take the label with the fewest unassigned examples,
    hand each of its examples to the subset that still wants that label the
    most (ties: larger remaining capacity, then a seeded coin), update every
    demand the example touches; label-free rows go last, by capacity.
    A final repair pass (``rebalance``) fixes labels that the greedy pass
    left more than one example off target.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    Y = np.asarray(Y, dtype=bool)
    n, n_labels = Y.shape
    rng = np.random.default_rng(seed)
    ratios = np.array([1.0 - test_fraction, test_fraction])
    capacity = ratios * n
    demand = ratios[:, None] * Y.sum(axis=0)[None, :]
    subset = np.full(n, -1)
    remaining = Y.copy()

    def pick(scores):
        best = np.flatnonzero(scores == scores.max())
        return best[0] if len(best) == 1 else rng.choice(best)

    while remaining.any():
        counts = remaining.sum(axis=0)
        counts = np.where(counts > 0, counts, np.iinfo(np.int64).max)
        label = int(np.argmin(counts))
        rows = np.flatnonzero(remaining[:, label])
        rng.shuffle(rows)
        for i in rows:
            d = demand[:, label]
            tied = np.flatnonzero(d == d.max())
            if len(tied) > 1:
                cap = capacity[tied]
                tied = tied[cap == cap.max()]
            j = tied[0] if len(tied) == 1 else rng.choice(tied)
            subset[i] = j
            capacity[j] -= 1
            demand[j] -= Y[i]
            remaining[i] = False

    free = np.flatnonzero(subset < 0)
    rng.shuffle(free)
    for i in free:
        j = pick(capacity)
        subset[i] = j
        capacity[j] -= 1
    is_test = subset == 1
    if rebalance:
        _rebalance(Y, is_test, test_fraction)
    return np.flatnonzero(is_test)


def _rebalance(Y, is_test, test_fraction, max_rounds=10_000):
    """Greedy repair of per-label test counts.

    Each round applies the best of: swapping a test row for a train row
    between label patterns, or moving a single row across when that keeps
    the test size within one of ``test_fraction * n`` (or brings it closer).
    Stops once every label is within one example of its target or nothing
    reduces the squared deviation.
    """
    n = len(Y)
    target = test_fraction * Y.sum(axis=0)
    size_target = test_fraction * n
    patterns, inverse = np.unique(Y, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    P = patterns.astype(np.int64)
    for _ in range(max_rounds):
        dev = Y[is_test].sum(axis=0) - target
        if np.all(np.abs(dev) <= 1.0):
            return
        base = (dev**2).sum()
        a_idx = np.flatnonzero(np.bincount(inverse[is_test], minlength=len(P)))
        b_idx = np.flatnonzero(np.bincount(inverse[~is_test], minlength=len(P)))
        # swap: a test row of pattern a leaves, a train row of pattern b enters
        swap = base - ((dev + P[b_idx][None] - P[a_idx][:, None]) ** 2).sum(-1)
        best = (swap.max(), "swap") + np.unravel_index(np.argmax(swap), swap.shape)
        size = is_test.sum()

        def size_ok(new_size):
            off, now = abs(new_size - size_target), abs(size - size_target)
            return off < 1.0 or off < now

        if size_ok(size + 1):
            add = base - ((dev + P[b_idx]) ** 2).sum(-1)
            if add.max() > best[0]:
                best = (add.max(), "add", None, int(np.argmax(add)))
        if size_ok(size - 1):
            drop = base - ((dev - P[a_idx]) ** 2).sum(-1)
            if drop.max() > best[0]:
                best = (drop.max(), "drop", int(np.argmax(drop)), None)
        gain, kind, a, b = best
        if gain <= 1e-12:
            return
        if kind in ("swap", "drop"):
            is_test[np.flatnonzero(is_test & (inverse == a_idx[a]))[0]] = False
        if kind in ("swap", "add"):
            is_test[np.flatnonzero(~is_test & (inverse == b_idx[b]))[0]] = True


def multilabel_stratified_split(ds, test_fraction, seed=0):
    """Split a ``Dataset`` into ``(train, test)`` preserving label proportions."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if len(ds) == 0:
        raise ConfigError("cannot split an empty dataset")
    test = iterative_stratification(mask_to_multihot(ds.labels), test_fraction, seed)
    is_test = np.zeros(len(ds), bool)
    is_test[test] = True
    return ds.subset(np.flatnonzero(~is_test)), ds.subset(test)
