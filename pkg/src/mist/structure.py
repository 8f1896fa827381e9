"""Dependence trees, the Chow-Liu spanning tree, and tree ratio decompositions.

Variables are 0-indexed throughout the Python API.  The edge-list text format
(:func:`write_edge_list` / :func:`read_edge_list`) is 1-indexed.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .functionals import Functional

LARGER_IS_MORE_DEPENDENT = "larger_is_more_dependent"
SMALLER_IS_MORE_DEPENDENT = "smaller_is_more_dependent"

Edge = Tuple[int, int]


def _edge(i: int, k: int) -> Edge:
    i, k = int(i), int(k)
    if i == k:
        raise ValidationError(f"self-loop ({i}, {k}) is not an edge")
    return (i, k) if i < k else (k, i)


class UnionFind:
    """Disjoint sets over ``0..n-1``; the smaller root wins ties."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb] or (self.rank[ra] == self.rank[rb] and rb < ra):
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


@dataclass(frozen=True)
class FactorTree:
    """A spanning tree over ``d`` variables; ``edges`` are sorted ``(i, k)`` with ``i < k``."""

    d: int
    edges: Tuple[Edge, ...]
    root: int = 0

    def __post_init__(self):
        d = int(self.d)
        if d < 1:
            raise ValidationError("a tree needs at least one vertex")
        edges = tuple(sorted({_edge(i, k) for i, k in self.edges}))
        if len(edges) != len(tuple(self.edges)):
            raise ValidationError("duplicate edges in tree")
        if len(edges) != d - 1:
            raise ValidationError(f"a spanning tree on {d} vertices has {d - 1} edges, got {len(edges)}")
        uf = UnionFind(d)
        for i, k in edges:
            if not (0 <= i < d and 0 <= k < d):
                raise ValidationError(f"edge ({i}, {k}) out of range for d={d}")
            if not uf.union(i, k):
                raise ValidationError(f"edge ({i}, {k}) closes a cycle")
        if not 0 <= self.root < d:
            raise ValidationError("root out of range")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "edges", edges)

    @property
    def edge_set(self) -> FrozenSet[Edge]:
        return frozenset(self.edges)

    def degree(self) -> List[int]:
        deg = [0] * self.d
        for i, k in self.edges:
            deg[i] += 1
            deg[k] += 1
        return deg

    def parents(self) -> List[int]:
        """Parent of each vertex when the tree hangs from ``root`` (-1 for the root)."""
        adj = {v: [] for v in range(self.d)}
        for i, k in self.edges:
            adj[i].append(k)
            adj[k].append(i)
        parent = [-1] * self.d
        seen = {self.root}
        stack = [self.root]
        while stack:
            v = stack.pop()
            for u in sorted(adj[v]):
                if u not in seen:
                    seen.add(u)
                    parent[u] = v
                    stack.append(u)
        return parent

    def to_text(self) -> str:
        return "".join(f"{i + 1} {k + 1}\n" for i, k in self.edges)


@dataclass(frozen=True)
class RatioDecomposition:
    """Factorisation of a density ratio into low-dimensional KDE factors.

    ``kind="model"`` (from a tree) means
    ``p'/p = prod_{gamma} p_ik / (p_X * prod_{beta} p_v)``.
    ``kind="pairwise"`` on pair ``(i, k)`` means ``p_i p_k / p_ik``: the single
    pair in ``gamma`` is the denominator joint and ``beta = (i, k)`` holds the
    numerator marginals.
    """

    gamma: Tuple[Edge, ...]
    beta: Tuple[int, ...]
    includes_full_joint: bool
    kind: str = "model"

    def factors(self, d: int) -> Tuple[List[Tuple[int, ...]], List[Tuple[int, ...]]]:
        """Numerator and denominator coordinate subsets for a ``d``-variable dataset."""
        used = {v for e in self.gamma for v in e} | set(self.beta)
        if used and (min(used) < 0 or max(used) >= d):
            raise ValidationError(f"decomposition refers to variables outside 0..{d - 1}")
        if self.kind == "pairwise":
            return [(v,) for v in self.beta], [tuple(e) for e in self.gamma]
        num = [tuple(e) for e in self.gamma]
        den = [tuple(range(d))] if self.includes_full_joint else []
        den += [(v,) for v in self.beta]
        return num, den

    @property
    def pair(self) -> Edge:
        if self.kind != "pairwise":
            raise AttributeError("only pairwise decompositions have a pair")
        return self.gamma[0]


def pairwise_decomposition(i: int, k: int) -> RatioDecomposition:
    """Target for the pairwise functional ``int g(p_i p_k / p_ik) p_ik``."""
    e = _edge(i, k)
    return RatioDecomposition(gamma=(e,), beta=e, includes_full_joint=False, kind="pairwise")


def ratio_decomposition(tree: FactorTree) -> RatioDecomposition:
    """Telescope the tree's conditional factorisation into joint/marginal KDE factors.

    Vertex ``v`` appears ``degree(v) - 1`` times in ``beta``.
    """
    beta = []
    for v, deg in enumerate(tree.degree()):
        beta.extend([v] * (deg - 1))
    return RatioDecomposition(gamma=tree.edges, beta=tuple(beta), includes_full_joint=True)


@dataclass(frozen=True)
class MIMatrix:
    """Symmetric matrix of pairwise functional estimates; diagonal holds the null value."""

    values: np.ndarray
    functional: Functional

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValidationError("MI matrix must be square")
        off = ~np.eye(v.shape[0], dtype=bool)
        if not np.all(np.isfinite(v[off])):
            raise ValidationError("MI matrix has non-finite off-diagonal entries")
        np.fill_diagonal(v, self.functional.null_value)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[0]


def dependence_direction(f: Functional) -> str:
    """Direction of dependence for pairwise estimates of ``f``.

    Both built-in functionals fall below their null value as dependence grows
    (``-MI`` for Shannon, the Renyi integral for ``alpha`` in (0, 1)).
    """
    return SMALLER_IS_MORE_DEPENDENT


def chow_liu(mi: MIMatrix, dependence_direction: str = SMALLER_IS_MORE_DEPENDENT) -> FactorTree:
    """Maximum-dependence spanning tree via Kruskal.

    Edge weights are ``values`` for ``larger_is_more_dependent`` and
    ``null_value - values`` for ``smaller_is_more_dependent``.  Ties go to the
    lexicographically smallest edge.  The tree is rooted at vertex 0.
    """
    v = mi.values
    d = mi.d
    if d < 2:
        raise ValidationError("Chow-Liu needs at least two variables")
    if np.max(np.abs(v - v.T)) > 1e-12:
        raise ValidationError("MI matrix is not symmetric")
    if dependence_direction == LARGER_IS_MORE_DEPENDENT:
        weight = v
    elif dependence_direction == SMALLER_IS_MORE_DEPENDENT:
        weight = mi.functional.null_value - v
    else:
        raise ValidationError(f"unknown dependence direction {dependence_direction!r}")
    # Symmetrise so ties are exact regardless of tiny asymmetries.
    weight = 0.5 * (weight + weight.T)
    candidates = sorted(((-weight[i, k], i, k) for i in range(d) for k in range(i + 1, d)))
    uf = UnionFind(d)
    edges = []
    for _, i, k in candidates:
        if uf.union(i, k):
            edges.append((i, k))
            if len(edges) == d - 1:
                break
    return FactorTree(d, tuple(edges), root=0)


def parse_tree(text: str, d: int) -> FactorTree:
    """Parse ``"1 2;2 3"`` or newline-separated ``i k`` lines (1-indexed)."""
    edges = []
    for chunk in text.replace(";", "\n").splitlines():
        chunk = chunk.strip()
        if not chunk or chunk.startswith("#"):
            continue
        parts = chunk.replace(",", " ").split()
        if len(parts) != 2:
            raise ValidationError(f"bad edge {chunk!r}; expected 'i k'")
        try:
            i, k = (int(p) for p in parts)
        except ValueError:
            raise ValidationError(f"bad edge {chunk!r}; expected integers") from None
        if i < 1 or k < 1:
            raise ValidationError(f"edge {chunk!r}: vertices are 1-indexed")
        edges.append((i - 1, k - 1))
    return FactorTree(d, tuple(edges))


def write_edge_list(tree: FactorTree, path) -> None:
    with open(path, "w") as fh:
        fh.write(tree.to_text())


def read_edge_list(path, d: int) -> FactorTree:
    with open(path) as fh:
        return parse_tree(fh.read(), d)


def random_spanning_tree(d: int, rng: np.random.Generator) -> FactorTree:
    """Uniformly random labelled tree on ``d`` vertices (random Pruefer sequence)."""
    if d < 2:
        return FactorTree(d, ())
    if d == 2:
        return FactorTree(2, ((0, 1),))
    seq = rng.integers(0, d, size=d - 2)
    degree = np.ones(d, dtype=int)
    for v in seq:
        degree[v] += 1
    edges = []
    for v in seq:
        leaf = int(np.flatnonzero(degree == 1)[0])
        edges.append((leaf, int(v)))
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = np.flatnonzero(degree == 1)
    edges.append((int(u), int(w)))
    return FactorTree(d, tuple(edges))


def edges_from_pairs(pairs: Iterable[Sequence[int]]) -> FrozenSet[Edge]:
    return frozenset(_edge(i, k) for i, k in pairs)


def beta_multiplicity(decomp: RatioDecomposition) -> Counter:
    return Counter(decomp.beta)
