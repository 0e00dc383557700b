"""Maximum directed spanning forests with weighted roots.

Each vertex either picks one parent or becomes a root; the forest score is
the sum of the chosen edge weights plus the root weights of its roots. The
problem reduces to a maximum arborescence by adding a super-root whose
out-edge to vertex ``i`` carries ``i``'s root weight.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

ROOT = -1


class InfeasibleError(ValueError):
    """No spanning forest has finite weight."""


@dataclass(frozen=True)
class RootedDigraph:
    """Complete digraph in log-weight form.

    ``edge[j, i]`` is the weight of choosing ``j`` as the parent of ``i``
    (the diagonal is ignored) and ``root[i]`` the weight of ``i`` being a
    root. ``-inf`` marks a forbidden choice.
    """

    edge: np.ndarray
    root: np.ndarray

    def __post_init__(self):
        edge = np.array(self.edge, dtype=float)
        root = np.array(self.root, dtype=float).ravel()
        n = len(root)
        if edge.shape != (n, n):
            raise ValueError(f"edge matrix must be {n}x{n}, got {edge.shape}")
        if np.isnan(edge).any() or np.isnan(root).any() or np.isposinf(edge).any() \
                or np.isposinf(root).any():
            raise ValueError("weights must be finite or -inf")
        np.fill_diagonal(edge, -np.inf)
        edge.setflags(write=False)
        root.setflags(write=False)
        object.__setattr__(self, "edge", edge)
        object.__setattr__(self, "root", root)

    @property
    def n(self) -> int:
        return len(self.root)


@dataclass(frozen=True)
class Forest:
    """Parent pointers (``-1`` for roots) and the total score."""

    parent: tuple
    score: float

    @property
    def roots(self) -> tuple:
        return tuple(i for i, p in enumerate(self.parent) if p == ROOT)

    @property
    def edges(self) -> tuple:
        return tuple((p, i) for i, p in enumerate(self.parent) if p != ROOT)


def forest_score(g: RootedDigraph, parent) -> float:
    """Score of a parent assignment, summed in vertex order."""
    total = 0.0
    for i, p in enumerate(parent):
        total += g.root[i] if p == ROOT else g.edge[p, i]
    return float(total)


def is_forest(parent) -> bool:
    n = len(parent)
    state = [0] * n
    for start in range(n):
        path = []
        v = start
        while v != ROOT and state[v] == 0:
            state[v] = 1
            path.append(v)
            v = parent[v]
        if v != ROOT and state[v] == 1:
            return False
        for u in path:
            state[u] = 2
    return True


def _find_cycle(parent):
    """A cycle in a parent-pointer array over vertices 1..n-1 (0 is the root)."""
    n = len(parent)
    color = [0] * n
    color[0] = 2
    for start in range(1, n):
        path, v = [], start
        while color[v] == 0:
            color[v] = 1
            path.append(v)
            v = parent[v]
        if color[v] == 1:
            return path[path.index(v):]
        for u in path:
            color[u] = 2
    return None


def _max_arborescence(W: np.ndarray) -> np.ndarray:
    """Chu-Liu-Edmonds maximum arborescence rooted at vertex 0.

    ``W[u, v]`` is the weight of edge ``u -> v``. Ties in the greedy step go
    to the root, then to the lowest source index.
    """
    n = W.shape[0]
    parent = np.zeros(n, dtype=np.int64)
    for v in range(1, n):
        col = W[:, v].copy()
        col[v] = -np.inf
        best = int(np.argmax(col))
        if col[best] == -np.inf:
            raise InfeasibleError(f"vertex {v - 1} has no admissible parent or root weight")
        parent[v] = best
    parent[0] = -1
    cycle = _find_cycle(parent)
    if cycle is None:
        return parent

    in_cycle = np.zeros(n, dtype=bool)
    in_cycle[cycle] = True
    cyc = sorted(cycle)
    keep = [u for u in range(n) if not in_cycle[u]]
    c = len(keep)
    W2 = np.full((c + 1, c + 1), -np.inf)
    W2[:c, :c] = W[np.ix_(keep, keep)]
    cycle_in = W[parent[cyc], cyc]
    enter, leave = {}, {}
    for a, u in enumerate(keep):
        gains = W[u, cyc] - cycle_in
        b = int(np.argmax(gains))
        W2[a, c] = gains[b]
        enter[a] = cyc[b]
        outs = W[cyc, u]
        b = int(np.argmax(outs))
        W2[c, a] = outs[b]
        leave[a] = cyc[b]
    W2[c, 0] = -np.inf

    sub = _max_arborescence(W2)
    result = parent.copy()
    for a, u in enumerate(keep):
        if a == 0:
            continue
        pa = sub[a]
        result[u] = keep[pa] if pa < c else leave[a]
    pa = int(sub[c])
    result[enter[pa]] = keep[pa]
    return result


def max_directed_spanning_forest(g: RootedDigraph) -> Forest:
    """Maximum-score spanning forest of ``g`` with weighted roots."""
    n = g.n
    if n == 0:
        return Forest((), 0.0)
    W = np.full((n + 1, n + 1), -np.inf)
    W[0, 1:] = g.root
    W[1:, 1:] = g.edge
    arb = _max_arborescence(W)
    parent = tuple(ROOT if p == 0 else int(p) - 1 for p in arb[1:])
    assert is_forest(parent)
    score = forest_score(g, parent)
    if score == -np.inf:
        raise InfeasibleError("no spanning forest with finite score")
    return Forest(parent, score)


def max_directed_spanning_tree(g: RootedDigraph) -> Forest:
    """Best forest with exactly one root: the best of one run per forced root.

    Ties go to the lowest root index.
    """
    best = None
    for r in range(g.n):
        if g.root[r] == -np.inf:
            continue
        root = np.full(g.n, -np.inf)
        root[r] = g.root[r]
        try:
            f = max_directed_spanning_forest(RootedDigraph(g.edge, root))
        except InfeasibleError:
            continue
        if best is None or f.score > best.score:
            best = f
    if best is None:
        raise InfeasibleError("no spanning tree with finite score")
    return best


def enumerate_forests(n: int, single_root: bool = False):
    """Yield every acyclic parent assignment over ``n`` vertices.

    Per-vertex options are ordered root first, then ascending parent index,
    and assignments come out in lexicographic order of those options.
    """
    options = [[ROOT] + [j for j in range(n) if j != i] for i in range(n)]
    for parent in itertools.product(*options):
        if single_root and parent.count(ROOT) != 1:
            continue
        if is_forest(parent):
            yield parent


def brute_force_msf(g: RootedDigraph, single_root: bool = False) -> Forest:
    """Exhaustive maximum spanning forest; the first maximum in enumeration order wins."""
    if g.n > 8:
        raise ValueError("brute force limited to n <= 8")
    best, best_score = None, -np.inf
    for parent in enumerate_forests(g.n, single_root=single_root):
        s = forest_score(g, parent)
        if s > best_score:
            best, best_score = parent, s
    if best is None:
        if g.n == 0:
            return Forest((), 0.0)
        raise InfeasibleError("no spanning forest with finite score")
    return Forest(best, best_score)
