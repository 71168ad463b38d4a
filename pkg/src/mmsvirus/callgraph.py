"""
Synthetic OS-colored call graphs.

Nodes are handsets, an undirected edge means each number is in the other's
address book. Adjacency is kept in CSR form (``indptr``/``indices``) so the
epidemic engines can draw address-book targets with plain array indexing.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "CallGraph",
    "DegreeModel",
    "GraphFormatError",
    "generate_graph",
    "assign_os",
    "induced_subgraph",
    "neighborhood_subgraph",
    "write_graph",
    "read_graph",
    "format_graph",
    "parse_graph",
]

MAX_PARITY_RETRIES = 1000


class GraphFormatError(ValueError):
    """Raised when an edge-list file cannot be parsed."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class CallGraph:
    """Immutable undirected call graph with one OS label per handset.

    Build with :meth:`from_edges`; the constructor expects an already
    canonical CSR layout (sorted, symmetric, no loops, no duplicates).
    """

    __slots__ = ("n", "indptr", "indices", "os_label", "os_classes")

    def __init__(self, indptr, indices, os_label, os_classes: int):
        self.indptr = _frozen(np.asarray(indptr, dtype=np.int64))
        self.indices = _frozen(np.asarray(indices, dtype=np.int64))
        self.os_label = _frozen(np.asarray(os_label, dtype=np.int64))
        self.n = int(self.os_label.shape[0])
        self.os_classes = int(os_classes)
        if self.indptr.shape[0] != self.n + 1:
            raise ValueError("indptr length must be n + 1")
        if self.os_classes < 1:
            raise ValueError("os_classes must be >= 1")
        if self.n and (self.os_label.min() < 0 or self.os_label.max() >= self.os_classes):
            raise ValueError("os_label outside [0, os_classes)")

    @classmethod
    def from_edges(cls, n: int, edges, os_label=None, os_classes: int | None = None) -> "CallGraph":
        """Build a graph from an iterable or ``(E, 2)`` array of node pairs.

        Self-loops and repeated pairs are dropped silently.
        """
        n = int(n)
        if n < 0:
            raise ValueError("n must be non-negative")
        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        e = e.reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        e = e[e[:, 0] != e[:, 1]]
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        if lo.size:
            key = np.unique(lo * n + hi)
            lo, hi = key // n, key % n
        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        if os_label is None:
            os_label = np.zeros(n, dtype=np.int64)
        os_label = np.asarray(os_label, dtype=np.int64)
        if os_label.shape != (n,):
            raise ValueError("os_label must have one entry per node")
        if os_classes is None:
            os_classes = int(os_label.max()) + 1 if n else 1
        return cls(indptr, dst, os_label, os_classes)

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def n_edges(self) -> int:
        return int(self.indices.shape[0] // 2)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    @property
    def adjacency(self) -> list[np.ndarray]:
        """Per-node address books, as array views."""
        return [self.neighbors(u) for u in range(self.n)]

    def edges(self) -> np.ndarray:
        """``(E, 2)`` array of undirected edges with ``u < v``, lexicographically sorted."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degree)
        mask = src < self.indices
        return np.column_stack([src[mask], self.indices[mask]])

    def with_labels(self, os_label, os_classes: int | None = None) -> "CallGraph":
        """Same adjacency, new OS labels."""
        return CallGraph(self.indptr, self.indices, os_label,
                         self.os_classes if os_classes is None else os_classes)

    def __eq__(self, other):
        if not isinstance(other, CallGraph):
            return NotImplemented
        return (self.n == other.n and self.os_classes == other.os_classes
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.os_label, other.os_label))

    __hash__ = None

    def __repr__(self):
        return f"CallGraph(n={self.n}, edges={self.n_edges}, os_classes={self.os_classes})"


@dataclass(frozen=True)
class DegreeModel:
    """Degree distribution feeding the configuration model.

    kind is one of ``"fixed"``, ``"powerlaw_cutoff"`` or ``"empirical"``.
    ``powerlaw_cutoff`` draws from P(k) ~ k**-gamma * exp(-k/kappa) for
    ``k_min <= k <= n - 1``. ``empirical`` uses ``degrees`` verbatim when its
    length equals n, otherwise resamples it with replacement.
    """

    kind: str = "powerlaw_cutoff"
    k: int = 2
    gamma: float = 2.5
    kappa: float = 20.0
    k_min: int = 1
    degrees: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind == "fixed":
            if self.k < 0:
                raise ValueError("fixed degree must be >= 0")
        elif self.kind == "powerlaw_cutoff":
            if not self.gamma > 1:
                raise ValueError("gamma must be > 1")
            if not self.kappa >= 1:
                raise ValueError("kappa must be >= 1")
            if self.k_min < 1:
                raise ValueError("k_min must be >= 1")
        elif self.kind == "empirical":
            d = np.asarray(self.degrees, dtype=np.int64)
            if d.size == 0:
                raise ValueError("empirical model needs at least one degree")
            if (d < 0).any():
                raise ValueError("empirical degrees must be non-negative")
            if d.sum() % 2:
                raise ValueError("empirical degrees must have an even sum")
            object.__setattr__(self, "degrees", tuple(int(x) for x in d))
        else:
            raise ValueError(f"unknown degree model kind {self.kind!r}")

    @classmethod
    def fixed(cls, k: int) -> "DegreeModel":
        return cls(kind="fixed", k=k)

    @classmethod
    def powerlaw_cutoff(cls, gamma: float, kappa: float, k_min: int = 1) -> "DegreeModel":
        return cls(kind="powerlaw_cutoff", gamma=gamma, kappa=kappa, k_min=k_min)

    @classmethod
    def empirical(cls, degrees: Sequence[int]) -> "DegreeModel":
        return cls(kind="empirical", degrees=tuple(degrees))

    def pmf(self, k_max: int) -> tuple[np.ndarray, np.ndarray]:
        """Support and normalized probabilities of the power-law-cutoff law."""
        if self.kind != "powerlaw_cutoff":
            raise ValueError("pmf is only defined for powerlaw_cutoff")
        k = np.arange(self.k_min, max(self.k_min, k_max) + 1, dtype=np.float64)
        logw = -self.gamma * np.log(k) - k / self.kappa
        w = np.exp(logw - logw.max())
        return k.astype(np.int64), w / w.sum()

    def mean(self, k_max: int) -> float:
        k, p = self.pmf(k_max)
        return float(np.dot(k, p))

    def sample(self, n: int, rng: np.random.Generator, k_max: int | None = None) -> np.ndarray:
        """Draw ``n`` degrees; the power-law support is capped at ``k_max`` (default ``n - 1``)."""
        if self.kind == "fixed":
            return np.full(n, self.k, dtype=np.int64)
        if self.kind == "empirical":
            d = np.asarray(self.degrees, dtype=np.int64)
            if d.size == n:
                return d.copy()
            return rng.choice(d, size=n, replace=True)
        k, p = self.pmf(n - 1 if k_max is None else k_max)
        return k[np.searchsorted(np.cumsum(p), rng.random(n), side="right").clip(max=k.size - 1)]

    def to_dict(self) -> dict:
        if self.kind == "fixed":
            return {"kind": "fixed", "k": self.k}
        if self.kind == "empirical":
            return {"kind": "empirical", "degrees": list(self.degrees)}
        return {"kind": "powerlaw_cutoff", "gamma": self.gamma, "kappa": self.kappa, "k_min": self.k_min}

    @classmethod
    def from_dict(cls, d: dict) -> "DegreeModel":
        d = dict(d)
        if "degrees" in d:
            d["degrees"] = tuple(d["degrees"])
        return cls(**d)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_graph(n: int, model: DegreeModel, seed=None) -> CallGraph:
    """Configuration-model graph on ``n`` nodes, all labeled OS 0.

    Stubs are paired uniformly at random; self-loops and multi-edges are
    discarded, so realized degrees can fall short of the drawn ones.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = _as_rng(seed)
    if n <= 1:
        # a lone handset has nobody to call
        return CallGraph.from_edges(n, np.empty((0, 2), dtype=np.int64))
    deg = model.sample(n, rng)
    retries = 0
    while deg.sum() % 2:
        if model.kind == "fixed" or (model.kind == "empirical" and len(model.degrees) == n):
            # deterministic sequence: drop one stub from a random positive-degree node
            pos = np.flatnonzero(deg > 0)
            deg[pos[rng.integers(pos.size)]] -= 1
            logger.debug("odd stub count for deterministic sequence, dropped one stub")
            break
        retries += 1
        if retries > MAX_PARITY_RETRIES:
            raise RuntimeError(f"could not draw an even degree sum after {MAX_PARITY_RETRIES} retries")
        i = rng.integers(n)
        deg[i] = model.sample(1, rng, k_max=n - 1)[0]
    stubs = np.repeat(np.arange(n, dtype=np.int64), deg)
    rng.shuffle(stubs)
    return CallGraph.from_edges(n, stubs.reshape(-1, 2))


def assign_os(graph: CallGraph, shares: Sequence[float], seed=None, exact: bool = False) -> CallGraph:
    """Label every handset with an OS drawn independently from ``shares``.

    Labels come from one uniform draw per node, so with the same seed the set
    of OS-0 nodes for share ``m`` is nested inside the set for any larger
    ``m``. ``exact=True`` instead assigns ``round(share * n)`` nodes per OS
    (largest remainder) in random order.
    """
    shares = np.asarray(shares, dtype=np.float64)
    if shares.size == 0:
        raise ValueError("shares must not be empty")
    if (shares < 0).any() or abs(shares.sum() - 1.0) > 1e-9:
        raise ValueError("shares must be non-negative and sum to 1")
    rng = _as_rng(seed)
    n = graph.n
    if exact:
        raw = shares * n
        counts = np.floor(raw).astype(np.int64)
        short = n - counts.sum()
        counts[np.argsort(-(raw - counts), kind="stable")[:short]] += 1
        labels = np.repeat(np.arange(shares.size), counts)
        rng.shuffle(labels)
    else:
        cdf = np.cumsum(shares)
        cdf[-1] = 1.0
        # u in [0, 1) and side="right" never selects a zero-width class
        labels = np.searchsorted(cdf, rng.random(n), side="right")
    return graph.with_labels(labels, os_classes=shares.size)


def induced_subgraph(graph: CallGraph, nodes) -> tuple[CallGraph, np.ndarray]:
    """Subgraph induced by ``nodes``; returns it with the sorted original ids."""
    keep = np.zeros(graph.n, dtype=bool)
    keep[np.asarray(nodes, dtype=np.int64)] = True
    ids = np.flatnonzero(keep)
    remap = np.full(graph.n, -1, dtype=np.int64)
    remap[ids] = np.arange(ids.size)
    e = graph.edges()
    if e.size:
        e = e[keep[e[:, 0]] & keep[e[:, 1]]]
    sub = CallGraph.from_edges(ids.size, remap[e], graph.os_label[ids], graph.os_classes)
    return sub, ids


def neighborhood_subgraph(graph: CallGraph, root: int, radius: int | None) -> CallGraph:
    """Induced subgraph on everything within ``radius`` hops of ``root``.

    ``radius=None`` means unbounded (the whole component of ``root``).
    """
    if not 0 <= root < graph.n:
        raise IndexError(f"root {root} out of range for n={graph.n}")
    if radius is not None and radius < 0:
        raise ValueError("radius must be >= 0")
    dist = np.full(graph.n, -1, dtype=np.int64)
    dist[root] = 0
    queue = deque([root])
    while queue:
        u = queue.popleft()
        if radius is not None and dist[u] >= radius:
            continue
        for v in graph.neighbors(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    sub, _ = induced_subgraph(graph, np.flatnonzero(dist >= 0))
    return sub


# -- edge-list serialization -------------------------------------------------

def format_graph(graph: CallGraph) -> str:
    lines = [f"callgraph v1 n={graph.n} os_classes={graph.os_classes}"]
    lines.extend(f"node {i} os={lab}" for i, lab in enumerate(graph.os_label.tolist()))
    lines.extend(f"edge {u} {v}" for u, v in graph.edges().tolist())
    return "\n".join(lines) + "\n"


def _parse_int(tok: str, lineno: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise GraphFormatError(lineno, f"bad {what} {tok!r}") from None


def parse_graph(lines: Iterable[str]) -> CallGraph:
    it = iter(lines)
    header = next(it, None)
    if header is None:
        raise GraphFormatError(1, "missing header")
    parts = header.split()
    if len(parts) != 4 or parts[:2] != ["callgraph", "v1"] \
            or not parts[2].startswith("n=") or not parts[3].startswith("os_classes="):
        raise GraphFormatError(1, f"bad header {header.rstrip()!r}")
    n = _parse_int(parts[2][2:], 1, "node count")
    c = _parse_int(parts[3][11:], 1, "os_classes")
    labels = np.full(n, -1, dtype=np.int64)
    edges = []
    for lineno, line in enumerate(it, start=2):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "node" and len(tok) == 3 and tok[2].startswith("os="):
            i = _parse_int(tok[1], lineno, "node id")
            lab = _parse_int(tok[2][3:], lineno, "os label")
            if not 0 <= i < n:
                raise GraphFormatError(lineno, f"node id {i} out of range")
            if not 0 <= lab < c:
                raise GraphFormatError(lineno, f"os label {lab} out of range")
            if labels[i] >= 0:
                raise GraphFormatError(lineno, f"duplicate node {i}")
            labels[i] = lab
        elif tok[0] == "edge" and len(tok) == 3:
            u = _parse_int(tok[1], lineno, "endpoint")
            v = _parse_int(tok[2], lineno, "endpoint")
            if not (0 <= u < v < n):
                raise GraphFormatError(lineno, f"edge ({u}, {v}) must satisfy 0 <= u < v < n")
            edges.append((u, v))
        else:
            raise GraphFormatError(lineno, f"unrecognized line {line.rstrip()!r}")
    if (labels < 0).any():
        raise GraphFormatError(1, f"missing node line for node {int(np.flatnonzero(labels < 0)[0])}")
    return CallGraph.from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2), labels, c)


def write_graph(graph: CallGraph, path) -> None:
    Path(path).write_text(format_graph(graph), encoding="utf-8", newline="\n")


def read_graph(path) -> CallGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh)
