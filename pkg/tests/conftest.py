"""Shared fixtures and independent oracles.

The oracles below deliberately avoid the package's own helpers: scores are
built as sequential Polya-urn products over raw rows, and structure spaces
are enumerated from plain parent-pointer tuples.
"""

import itertools
import math

import numpy as np
import pytest

from scforest.data import CategoricalDataset


def random_dataset(rng, n_rows, cards, names=None):
    cards = list(cards)
    data = np.column_stack([rng.integers(0, c, n_rows) for c in cards]) if cards else \
        np.zeros((n_rows, 0), int)
    names = names or [f"v{i}" for i in range(len(cards))]
    return CategoricalDataset(names, cards, data)


def polya_log_score(rows, child, parents, cards, ess):
    """BDeu family score as a product of sequential predictive probabilities."""
    q = 1
    for p in parents:
        q *= cards[p]
    r = cards[child]
    a = ess / (q * r)
    seen, totals = {}, {}
    total = 0.0
    for row in rows:
        cfg = tuple(int(row[p]) for p in parents)
        v = int(row[child])
        n_cv = seen.get((cfg, v), 0)
        n_c = totals.get(cfg, 0)
        total += math.log((n_cv + a) / (n_c + r * a))
        seen[(cfg, v)] = n_cv + 1
        totals[cfg] = n_c + 1
    return total


def acyclic(parent):
    for start in range(len(parent)):
        v, steps = start, 0
        while v is not None and v >= 0:
            v = parent[v]
            steps += 1
            if steps > len(parent):
                return False
    return True


def all_forests(n, single_root=False):
    """Every parent tuple over ``n`` vertices (``-1`` = root) that is acyclic."""
    out = []
    for parent in itertools.product(*[[-1] + [j for j in range(n) if j != i]
                                      for i in range(n)]):
        if single_root and parent.count(-1) != 1:
            continue
        if acyclic(parent):
            out.append(parent)
    return out


def subsets_upto(items, k):
    items = sorted(items)
    return [s for size in range(min(k, len(items)) + 1)
            for s in itertools.combinations(items, size)]


def structure_prior(inter, condition, alpha):
    if not condition or alpha == 0 or set(inter) & set(condition):
        return 0.0
    return -alpha


def scf_structure_scores(rows, cards, targets, condition, k, ess, alpha=0.0,
                         structure="forest", extra_rows=None):
    """Score of every SCF as a list of (score, parents); brute force."""
    rows = list(rows) + list(extra_rows if extra_rows is not None else [])
    n = len(targets)
    if structure == "none":
        forests = [(-1,) * n]
    else:
        forests = all_forests(n, single_root=(structure == "tree"))
    subs = subsets_upto(condition, k)
    family_cache = {}

    def fam(i, intra, inter):
        key = (i, intra, inter)
        if key not in family_cache:
            prior = structure_prior(inter, condition, alpha)
            if prior == -math.inf:
                family_cache[key] = -math.inf
            else:
                pa = sorted(list(inter) + ([targets[intra]] if intra >= 0 else []))
                family_cache[key] = polya_log_score(rows, targets[i], pa, cards, ess) + prior
        return family_cache[key]

    out = []
    for parent in forests:
        for combo in itertools.product(subs, repeat=n):
            s = sum(fam(i, parent[i], combo[i]) for i in range(n))
            out.append((s, parent, combo))
    return out


def log_sum(values):
    values = [v for v in values if v != -math.inf]
    if not values:
        return -math.inf
    m = max(values)
    return m + math.log(sum(math.exp(v - m) for v in values))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
