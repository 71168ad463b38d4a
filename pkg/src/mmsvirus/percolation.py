"""
Connected components of the susceptible (same-OS) subgraph.

A topological virus can never leave the component its first victim sits in,
so the largest component of the susceptible subgraph bounds pure
address-book spreading. Scanning adds links between arbitrary susceptible
handsets, which is modeled here by random edge augmentation.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .callgraph import CallGraph, assign_os, induced_subgraph

__all__ = [
    "ComponentReport",
    "UnionFind",
    "susceptible_subgraph",
    "components",
    "components_bfs",
    "scan_augmented_components",
    "scan_augmentation_curve",
    "giant_fraction_curve",
    "write_component_csv",
]


class UnionFind:
    """Disjoint sets over ``0..n-1`` with union by size and path halving."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.largest = 1 if n else 0
        self.count = n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        if self.size[ra] > self.largest:
            self.largest = self.size[ra]
        self.count -= 1
        return True

    def labels(self) -> np.ndarray:
        return np.fromiter((self.find(i) for i in range(len(self.parent))), dtype=np.int64,
                           count=len(self.parent))


@dataclass(frozen=True)
class ComponentReport:
    component_count: int
    largest_size: int
    largest_fraction: float
    member_of_largest: np.ndarray
    sizes: tuple[int, ...] = ()

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "ComponentReport":
        """Build a report from any per-node component labeling.

        Ties for the largest component go to the one holding the lowest node
        id, so every labeling of the same partition gives the same report.
        """
        n = labels.shape[0]
        if n == 0:
            return cls(0, 0, 0.0, np.zeros(0, dtype=bool), ())
        _, first, inverse, counts = np.unique(labels, return_index=True, return_inverse=True,
                                              return_counts=True)
        order = np.lexsort((first, -counts))
        best = order[0]
        sizes = tuple(int(c) for c in counts[order])
        return cls(
            component_count=int(counts.size),
            largest_size=int(counts[best]),
            largest_fraction=float(counts[best]) / n,
            member_of_largest=inverse.reshape(-1) == best,
            sizes=sizes,
        )

    def same_partition_summary(self, other: "ComponentReport") -> bool:
        return (self.component_count == other.component_count
                and self.largest_size == other.largest_size
                and self.sizes == other.sizes
                and np.array_equal(self.member_of_largest, other.member_of_largest))


def susceptible_subgraph(graph: CallGraph, target_os: int = 0) -> CallGraph:
    """Subgraph induced by handsets running ``target_os``."""
    if not 0 <= target_os < graph.os_classes:
        raise ValueError(f"target_os {target_os} not in [0, {graph.os_classes})")
    sub, _ = induced_subgraph(graph, np.flatnonzero(graph.os_label == target_os))
    return sub


def _union_edges(uf: UnionFind, edges: np.ndarray) -> None:
    for u, v in edges.tolist():
        uf.union(u, v)


def components(graph: CallGraph) -> ComponentReport:
    uf = UnionFind(graph.n)
    _union_edges(uf, graph.edges())
    return ComponentReport.from_labels(uf.labels())


def components_bfs(graph: CallGraph) -> ComponentReport:
    """Breadth-first component labeling; kept as a cross-check for ``components``."""
    labels = np.full(graph.n, -1, dtype=np.int64)
    indptr, indices = graph.indptr, graph.indices
    for s in range(graph.n):
        if labels[s] >= 0:
            continue
        labels[s] = s
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in indices[indptr[u]:indptr[u + 1]]:
                if labels[v] < 0:
                    labels[v] = s
                    queue.append(v)
    return ComponentReport.from_labels(labels)


def _random_links(n: int, existing: set, rng: np.random.Generator, batch: int = 1024):
    """Yield new distinct non-loop pairs forever, in a seed-determined order.

    Pairs are drawn in fixed-size batches, so the first k links are the same
    whatever the caller eventually consumes (prefix-consistent).
    """
    seen = set(existing)
    while True:
        pairs = rng.integers(0, n, size=(batch, 2))
        for u, v in pairs.tolist():
            if u == v:
                continue
            key = (u, v) if u < v else (v, u)
            if key in seen:
                continue
            seen.add(key)
            yield key


def _check_augmentable(sub: CallGraph, extra_links: int) -> None:
    if extra_links < 0:
        raise ValueError("extra_links must be >= 0")
    if extra_links > 0 and sub.n < 2:
        raise ValueError("need at least 2 susceptible nodes to add scan links")
    free = sub.n * (sub.n - 1) // 2 - sub.n_edges
    if extra_links > free:
        raise ValueError(f"only {free} node pairs are not yet linked")


def scan_augmented_components(graph: CallGraph, target_os: int, extra_links: int, seed=None) -> ComponentReport:
    """Components of the susceptible subgraph after adding random scan links."""
    sub = susceptible_subgraph(graph, target_os)
    _check_augmentable(sub, extra_links)
    rng = np.random.default_rng(seed)
    uf = UnionFind(sub.n)
    edges = sub.edges()
    _union_edges(uf, edges)
    if extra_links:
        gen = _random_links(sub.n, set(map(tuple, edges.tolist())), rng)
        for _ in range(extra_links):
            uf.union(*next(gen))
    return ComponentReport.from_labels(uf.labels())


def scan_augmentation_curve(graph: CallGraph, target_os: int, link_grid: Sequence[int], seed=None):
    """``(links, ComponentReport)`` for each grid value, sharing one link stream.

    Equivalent to calling :func:`scan_augmented_components` per grid point with
    the same seed, but builds the union-find incrementally.
    """
    grid = sorted(int(x) for x in link_grid)
    sub = susceptible_subgraph(graph, target_os)
    if grid:
        _check_augmentable(sub, grid[-1])
    rng = np.random.default_rng(seed)
    uf = UnionFind(sub.n)
    edges = sub.edges()
    _union_edges(uf, edges)
    gen = _random_links(sub.n, set(map(tuple, edges.tolist())), rng)
    out, added = [], 0
    for k in grid:
        while added < k:
            uf.union(*next(gen))
            added += 1
        out.append((k, ComponentReport.from_labels(uf.labels())))
    return out


def giant_fraction_curve(graph: CallGraph, shares_sweep: Iterable[float], seed=None, target_os: int = 0):
    """``(m, report)`` pairs: OS share ``m`` assigned to ``target_os``, rest to the other OS.

    All points reuse one seed, so the susceptible sets are nested in m.
    """
    out = []
    for m in shares_sweep:
        if not 0 < m <= 1:
            raise ValueError(f"market share {m} outside (0, 1]")
        shares = [m, 1.0 - m] if target_os == 0 else [1.0 - m, m]
        labeled = assign_os(graph, shares, seed)
        out.append((m, components(susceptible_subgraph(labeled, target_os))))
    return out


def write_component_csv(rows: Iterable[tuple[float, ComponentReport]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "component_count", "largest_size", "largest_fraction"])
        for m, rep in rows:
            w.writerow([repr(float(m)), rep.component_count, rep.largest_size, repr(rep.largest_fraction)])
