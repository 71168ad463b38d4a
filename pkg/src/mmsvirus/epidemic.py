"""
SI spreading of an MMS virus with hybrid address-book / scanning attacks.

Time advances in two-minute ticks (the MMS delivery-and-install delay). An
infected handset sends at most one viral MMS per tick and at most ``s`` in
its lifetime. Each send is a scan with probability ``rho`` (reaching an
active number with probability ``p``, uniformly over all handsets) and
otherwise goes to a uniformly drawn address-book entry. A hit on a
susceptible handset running the target OS infects it, and it starts sending
one tick later. There is no recovery.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .callgraph import CallGraph

__all__ = [
    "SimParams",
    "HandsetState",
    "HandsetStates",
    "EpidemicTrace",
    "NoSusceptibleError",
    "select_target",
    "select_targets",
    "step",
    "run_naive",
    "analytic_si_curve",
    "write_trace_csv",
    "write_summary_csv",
]

TICK_MINUTES = 2.0
MISS = -1


class NoSusceptibleError(ValueError):
    pass


@dataclass(frozen=True)
class SimParams:
    """Epidemic knobs shared by the naive and temporal engines.

    ``m`` is the market share used when labeling a graph; the engines
    themselves read the labels already on the graph and treat handsets with
    ``os_label == target_os`` as susceptible.
    """

    m: float = 0.30
    s: int = 100
    p: float = 0.06
    rho: float = 0.0
    tau: float = TICK_MINUTES
    max_steps: int = 100_000
    seed: int | None = 0
    target_os: int = 0
    mu: float = 1.0
    mean_contacts: float = 1.0
    no_repeat: bool = False

    def __post_init__(self):
        if not 0 <= self.rho <= 1:
            raise ValueError("rho must be in [0, 1]")
        if not 0 <= self.p <= 1:
            raise ValueError("p must be in [0, 1]")
        if not 0 < self.m <= 1:
            raise ValueError("m must be in (0, 1]")
        if self.s < 0:
            raise ValueError("s must be >= 0")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")

    @property
    def beta(self) -> float:
        return self.mu * self.mean_contacts

    def replace(self, **changes) -> "SimParams":
        d = asdict(self)
        d.update(changes)
        return SimParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class HandsetState(NamedTuple):
    compartment: str
    budget_remaining: int
    infected_at: int | None


@dataclass
class HandsetStates:
    """Per-handset state stored column-wise.

    ``infected_at`` is the first tick at which the handset may send (hit
    tick + 1), or -1 while susceptible.
    """

    infected: np.ndarray
    budget: np.ndarray
    infected_at: np.ndarray
    sends: np.ndarray
    topo_order: np.ndarray | None = None
    topo_used: np.ndarray | None = None

    @classmethod
    def fresh(cls, n: int) -> "HandsetStates":
        return cls(
            infected=np.zeros(n, dtype=bool),
            budget=np.zeros(n, dtype=np.int64),
            infected_at=np.full(n, -1, dtype=np.int64),
            sends=np.zeros(n, dtype=np.int64),
        )

    def handset(self, i: int) -> HandsetState:
        if self.infected[i]:
            return HandsetState("I", int(self.budget[i]), int(self.infected_at[i]))
        return HandsetState("S", int(self.budget[i]), None)

    def infect(self, nodes: np.ndarray, effective_tick: int, s: int) -> None:
        self.infected[nodes] = True
        self.infected_at[nodes] = effective_tick
        self.budget[nodes] = s

    def enable_no_repeat(self, graph: CallGraph, rng: np.random.Generator) -> None:
        # shuffle each address book in place of a per-contact memory
        seg = np.repeat(np.arange(graph.n), graph.degree)
        order = np.lexsort((rng.random(graph.indices.size), seg))
        self.topo_order = graph.indices[order]
        self.topo_used = np.zeros(graph.n, dtype=np.int64)

    def active(self, tick: int) -> np.ndarray:
        return np.flatnonzero(self.infected & (self.infected_at <= tick) & (self.budget > 0))


@dataclass
class EpidemicTrace:
    """Time series of one run.

    Naive engine (``bin_ticks=1``): row ``t`` holds the handsets infected as
    of tick ``t`` (``infected[0] == 1``, the seed) and the sends made during
    tick ``t``; the last row is the terminal state with zero sends.
    Temporal engine (``bin_ticks=60``): row ``b`` holds the infected count at
    the end of two-hour bin ``b`` and the viral volume sent within it.
    """

    infected: np.ndarray
    viral_sends: np.ndarray
    susceptible_total: int
    seed_node: int
    state: HandsetStates | None = None
    bin_ticks: int = 1
    bin_offset: int = 0
    detection_bin: int | None = None
    ticks_run: int = 0

    @property
    def final_infected(self) -> int:
        return int(self.infected[-1]) if self.infected.size else 0

    @property
    def final_infected_fraction(self) -> float:
        return self.final_infected / self.susceptible_total if self.susceptible_total else 0.0

    @property
    def total_sends(self) -> int:
        return int(self.viral_sends.sum())

    @property
    def viral_volume(self) -> np.ndarray:
        return self.viral_sends

    @property
    def bin_global_index(self) -> np.ndarray:
        return np.arange(self.viral_sends.size) + self.bin_offset


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def select_targets(attackers: np.ndarray, graph: CallGraph, rho: float, p: float,
                   rng: np.random.Generator, state: HandsetStates | None = None):
    """Vectorized target choice for a batch of attackers.

    Returns ``(targets, scanned)``; ``targets`` holds :data:`MISS` for scans
    that hit an inactive number and for attackers with an empty address
    book. Four uniforms are consumed per attacker whatever the outcome.
    With ``state`` carrying a shuffled book (no-repeat mode) each contact is
    attacked at most once and exhausted books miss.
    """
    attackers = np.asarray(attackers, dtype=np.int64)
    k = attackers.size
    u = rng.random((4, k))
    scanned = u[0] < rho
    targets = np.full(k, MISS, dtype=np.int64)

    hit = scanned & (u[1] < p)
    targets[hit] = (u[2][hit] * graph.n).astype(np.int64)

    topo = ~scanned
    a = attackers[topo]
    start = graph.indptr[a]
    deg = graph.indptr[a + 1] - start
    if state is not None and state.topo_order is not None:
        used = state.topo_used[a]
        ok = used < deg
        pick = np.full(a.size, MISS, dtype=np.int64)
        pick[ok] = state.topo_order[start[ok] + used[ok]]
        state.topo_used[a] = used + 1
    else:
        ok = deg > 0
        pick = np.full(a.size, MISS, dtype=np.int64)
        off = np.minimum((u[3][topo][ok] * deg[ok]).astype(np.int64), deg[ok] - 1)
        pick[ok] = graph.indices[start[ok] + off]
    targets[topo] = pick
    return targets, scanned


def select_target(attacker: int, graph: CallGraph, rho: float, p: float, rng,
                  state: HandsetStates | None = None) -> int | None:
    """Target of a single viral MMS from ``attacker``; ``None`` on a miss."""
    t, _ = select_targets(np.array([attacker]), graph, rho, p, _as_rng(rng), state)
    return None if t[0] == MISS else int(t[0])


def _fire(state: HandsetStates, graph: CallGraph, params: SimParams, senders: np.ndarray,
          tick: int, rng: np.random.Generator) -> np.ndarray:
    """One send from each of ``senders``; returns the newly infected handsets."""
    targets, _ = select_targets(senders, graph, params.rho, params.p, rng, state)
    state.budget[senders] -= 1
    state.sends[senders] += 1
    t = targets[targets != MISS]
    t = t[(graph.os_label[t] == params.target_os) & ~state.infected[t]]
    if t.size:
        t = np.unique(t)
        state.infect(t, tick + 1, params.s)
    return t


def step(state: HandsetStates, graph: CallGraph, params: SimParams, tick: int, rng,
         attack_prob: float = 1.0) -> int:
    """Advance ``state`` in place through ``tick``; returns the number of sends.

    Every handset able to send at ``tick`` (infected with ``infected_at <=
    tick`` and budget left) attacks once, or with probability ``attack_prob``
    when given. Hits take effect at ``tick + 1``.
    """
    rng = _as_rng(rng)
    senders = state.active(tick)
    if attack_prob < 1.0:
        senders = senders[rng.random(senders.size) < attack_prob]
    if senders.size:
        _fire(state, graph, params, senders, tick, rng)
    return int(senders.size)


def _segments(start: np.ndarray, stop: np.ndarray) -> np.ndarray:
    """Concatenation of ``arange(start[i], stop[i])`` over i."""
    lengths = stop - start
    total = int(lengths.sum())
    offsets = np.repeat(start - np.concatenate([[0], np.cumsum(lengths)[:-1]]), lengths)
    return offsets + np.arange(total)


class _Spread:
    """Incremental bookkeeping of who can send, shared by both engines."""

    def __init__(self, graph: CallGraph, params: SimParams, seed_node: int | None, rng):
        self.graph = graph
        self.params = params
        self.rng = rng
        susceptible = np.flatnonzero(graph.os_label == params.target_os)
        if susceptible.size == 0:
            raise NoSusceptibleError(f"no handset runs OS {params.target_os}")
        if seed_node is None:
            seed_node = int(susceptible[rng.integers(susceptible.size)])
        elif not 0 <= seed_node < graph.n or graph.os_label[seed_node] != params.target_os:
            raise ValueError(f"seed node {seed_node} is not susceptible")
        self.seed_node = int(seed_node)
        self.susceptible_total = int(susceptible.size)
        self.state = HandsetStates.fresh(graph.n)
        if params.no_repeat:
            self.state.enable_no_repeat(graph, rng)
        self.state.infect(np.array([seed_node]), 0, params.s)
        self.n_infected = 1
        self.active = np.array([seed_node], dtype=np.int64) if params.s > 0 else np.empty(0, np.int64)
        self.pending = np.empty(0, dtype=np.int64)

    def fire(self, senders: np.ndarray, tick: int) -> None:
        new = _fire(self.state, self.graph, self.params, senders, tick, self.rng)
        self.n_infected += new.size
        if (self.state.budget[senders] == 0).any():
            self.active = self.active[self.state.budget[self.active] > 0]
        if new.size and self.params.s > 0:
            self.pending = new

    def promote(self) -> None:
        """Make handsets hit during the last send step eligible to send."""
        if self.pending.size:
            self.active = np.union1d(self.active, self.pending)
            self.pending = np.empty(0, dtype=np.int64)

    @property
    def exhausted(self) -> bool:
        return self.active.size == 0 and self.pending.size == 0

    def saturated(self) -> bool:
        """True when no further infection is possible whatever the draws."""
        g, params = self.graph, self.params
        if self.n_infected == self.susceptible_total:
            return True
        if params.rho * params.p > 0:
            return False
        if params.rho == 1.0:
            return True
        senders = np.concatenate([self.active, self.pending])
        start, stop = g.indptr[senders], g.indptr[senders + 1]
        if not (stop > start).any():
            return True
        nb = g.indices[_segments(start, stop)]
        return not ((g.os_label[nb] == params.target_os) & ~self.state.infected[nb]).any()


def run_naive(graph: CallGraph, params: SimParams, seed_node: int | None = None,
              stop_when_saturated: bool = True) -> EpidemicTrace:
    """Worst-case spreading: every infected handset sends once per tick.

    Runs until ``max_steps`` ticks have elapsed or no infected handset has
    budget left. With ``stop_when_saturated`` the run also ends as soon as
    no further infection is possible (final outcome unchanged, the trailing
    wasted sends are simply not simulated).
    """
    rng = _as_rng(params.seed)
    sp = _Spread(graph, params, seed_node, rng)
    infected = [1]
    sends = []
    tick = 0
    while tick < params.max_steps and not sp.exhausted:
        before = sp.n_infected
        sends.append(int(sp.active.size))
        sp.fire(sp.active, tick)
        sp.promote()
        infected.append(sp.n_infected)
        tick += 1
        if stop_when_saturated and sp.n_infected == before and sp.saturated():
            break
    sends.append(0)
    return EpidemicTrace(
        infected=np.asarray(infected, dtype=np.int64),
        viral_sends=np.asarray(sends, dtype=np.int64),
        susceptible_total=sp.susceptible_total,
        seed_node=sp.seed_node,
        state=sp.state,
        ticks_run=tick,
    )


def analytic_si_curve(N: float, beta: float, I0: float, ticks: int) -> np.ndarray:
    """Logistic solution of dI/dt = beta * S * I / N at t = 0..ticks."""
    if N <= 0:
        raise ValueError("N must be > 0")
    if not 0 < I0 <= N:
        raise ValueError("I0 must be in (0, N]")
    t = np.arange(ticks + 1, dtype=np.float64)
    return N / (1.0 + (N / I0 - 1.0) * np.exp(-beta * t))


def write_trace_csv(trace: EpidemicTrace, path) -> None:
    """``tick,infected,viral_sends``; binned traces add ``bin_global_index,viral_volume``.

    For binned traces ``tick`` is the first tick of the bin.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if trace.bin_ticks == 1:
            w.writerow(["tick", "infected", "viral_sends"])
            for t, (i, v) in enumerate(zip(trace.infected.tolist(), trace.viral_sends.tolist())):
                w.writerow([t, i, v])
        else:
            w.writerow(["tick", "infected", "viral_sends", "bin_global_index", "viral_volume"])
            for b, (i, v) in enumerate(zip(trace.infected.tolist(), trace.viral_sends.tolist())):
                w.writerow([b * trace.bin_ticks, i, v, b + trace.bin_offset, v])


def write_summary_csv(rows, path) -> None:
    """Rows of ``(run_id, SimParams, final_fraction)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "m", "s", "p", "rho", "final_fraction"])
        for run_id, params, frac in rows:
            w.writerow([run_id, repr(float(params.m)), params.s, repr(float(params.p)),
                        repr(float(params.rho)), repr(float(frac))])
