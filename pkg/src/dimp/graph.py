"""Switching weighted digraphs, Laplacians and connectivity checks.

Weights follow the receiving-row convention: ``adj[i, j] > 0`` means node
``i`` listens to node ``j`` (edge ``j -> i``).  Nodes carry labels so that
the exosystem can be node ``0`` in regulation scenarios while
synchronization scenarios number their agents from ``1``.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import networkx as nx
import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class ConnectivityCheck:
    """Outcome of a windowed connectivity test.

    ``horizon_limited`` is set when the schedule is aperiodic, so the test
    only covers the listed schedule and says nothing about later times.
    """

    ok: bool
    horizon_limited: bool = False
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True, eq=False)
class SwitchingDigraph:
    """Piecewise-constant weighted digraph.

    ``schedule`` is a sequence of ``(snapshot index, dwell seconds)`` pairs.
    Periodic schedules wrap around; aperiodic ones hold the last snapshot
    forever.
    """

    snapshots: tuple
    schedule: tuple
    labels: tuple
    epsilon: float = 1.0
    periodic: bool = True
    exosystem: bool = False
    _bounds: tuple = field(init=False, repr=False)

    def __post_init__(self):
        snaps = tuple(np.array(a, dtype=float) for a in self.snapshots)
        object.__setattr__(self, "snapshots", snaps)
        object.__setattr__(self, "schedule", tuple((int(i), float(d)) for i, d in self.schedule))
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))
        nv = len(self.labels)
        if len(set(self.labels)) != nv:
            raise GraphError("node labels must be distinct")
        if not snaps:
            raise GraphError("at least one snapshot is required")
        if not self.schedule:
            raise GraphError("schedule must be nonempty")
        if self.epsilon <= 0:
            raise GraphError("epsilon must be positive")
        for k, a in enumerate(snaps):
            if a.shape != (nv, nv):
                raise GraphError(f"snapshot {k}: expected shape {(nv, nv)}, got {a.shape}")
            if np.any(a < 0):
                raise GraphError(f"snapshot {k}: negative weight")
            if np.any(np.diag(a) != 0):
                raise GraphError(f"snapshot {k}: self-loop")
            pos = a[a > 0]
            if pos.size and pos.min() < self.epsilon:
                raise GraphError(f"snapshot {k}: positive weight {pos.min():g} below epsilon {self.epsilon:g}")
            if self.exosystem and np.any(a[self.index(0)] != 0):
                raise GraphError(f"snapshot {k}: the exosystem node 0 must not receive edges")
        for idx, dwell in self.schedule:
            if not 0 <= idx < len(snaps):
                raise GraphError(f"schedule refers to missing snapshot {idx}")
            if dwell <= 0:
                raise GraphError("dwell durations must be positive")
        object.__setattr__(self, "_bounds", tuple(np.cumsum([d for _, d in self.schedule])))

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    @property
    def period(self) -> float:
        return self._bounds[-1]

    def index(self, label: int) -> int:
        try:
            return self.labels.index(int(label))
        except ValueError:
            raise GraphError(f"unknown node {label}") from None

    def slot_at(self, t: float) -> int:
        """Position in the schedule active at ``t`` (right-continuous)."""
        if t < 0:
            raise GraphError("t must be nonnegative")
        tau = t
        if self.periodic:
            tau = t - np.floor(t / self.period) * self.period
            # floor can land one ulp short of a boundary
            if self.period - tau <= 1e-12 * max(1.0, t):
                tau = 0.0
        pos = bisect.bisect_right(self._bounds, tau + 1e-12 * max(1.0, t))
        return min(pos, len(self.schedule) - 1)

    def adjacency_at(self, t: float) -> np.ndarray:
        return self.snapshots[self.schedule[self.slot_at(t)][0]]

    def switch_times(self, t0: float, t1: float) -> list[float]:
        """Switch instants in the half-open interval ``(t0, t1]``."""
        if not self.periodic:
            return [b for b in self._bounds[:-1] if t0 < b <= t1]
        out = []
        base = np.floor(t0 / self.period) * self.period
        while base <= t1:
            for b in (0.0,) + self._bounds[:-1]:
                s = base + b
                if t0 < s <= t1:
                    out.append(float(s))
            base += self.period
        return sorted(out)

    def union_adjacency(self, t1: float, t2: float) -> np.ndarray:
        """Union (elementwise max) of snapshots active anywhere in ``[t1, t2]``."""
        times = [t1] + self.switch_times(t1, t2)
        return np.max(np.stack([self.adjacency_at(s) for s in times]), axis=0)

    def window_starts(self, T: float) -> list[float]:
        """Window starts that cover every distinct union over one schedule pass."""
        horizon = self.period
        events = {0.0}
        for b in (0.0,) + self._bounds[:-1]:
            events.add(b)
            if self.periodic:
                events.add((b - T) % horizon)
            elif b - T >= 0:
                events.add(b - T)
        pts = sorted(e for e in events if e < horizon or not self.periodic)
        mids = [(a + b) / 2 for a, b in zip(pts, pts[1:])]
        if self.periodic:
            mids.append((pts[-1] + horizon) / 2)
        return sorted(set(pts) | set(mids))


def laplacian(adjacency) -> np.ndarray:
    a = np.asarray(adjacency, dtype=float)
    lap = -a.copy()
    np.fill_diagonal(lap, 0.0)
    np.fill_diagonal(lap, a.sum(axis=1) - np.diag(a))
    return lap


def reduced_laplacian(lap) -> np.ndarray:
    """Drop the exosystem's row and column (index 0)."""
    return np.asarray(lap)[1:, 1:]


def to_networkx(adjacency, labels) -> nx.DiGraph:
    a = np.asarray(adjacency)
    g = nx.DiGraph()
    g.add_nodes_from(labels)
    rows, cols = np.nonzero(a)
    g.add_edges_from((labels[j], labels[i]) for i, j in zip(rows, cols))
    return g


def has_spanning_tree(adjacency, labels, root=None) -> bool:
    g = to_networkx(adjacency, labels)
    if root is not None:
        return len(nx.descendants(g, root)) == g.number_of_nodes() - 1
    cond = nx.condensation(g)
    return sum(1 for v in cond if cond.in_degree(v) == 0) == 1


def _window(g: SwitchingDigraph, T):
    if T is None:
        T = g.period
    if T <= 0:
        raise GraphError("window T must be positive")
    return T


def uniformly_contains_spanning_tree(g: SwitchingDigraph, root=None, T=None) -> ConnectivityCheck:
    """Every union over ``[t, t+T]`` contains a spanning tree (rooted at ``root`` if given)."""
    T = _window(g, T)
    for t in g.window_starts(T):
        if not has_spanning_tree(g.union_adjacency(t, t + T), g.labels, root):
            return ConnectivityCheck(False, not g.periodic, f"no spanning tree in union over [{t:g}, {t + T:g}]")
    return ConnectivityCheck(True, not g.periodic)


def closed_component_ok(adjacency, labels, roots) -> tuple[bool, str]:
    """``roots`` induce the unique closed strongly connected component."""
    g = to_networkx(adjacency, labels)
    vr = set(roots)
    if not vr <= set(labels):
        return False, "V_r contains unknown nodes"
    if not has_spanning_tree(adjacency, labels):
        return False, "union digraph has no spanning tree"
    inbound = [(u, v) for u, v in g.edges if v in vr and u not in vr]
    if inbound:
        return False, f"edge {inbound[0][0]}->{inbound[0][1]} enters V_r from outside"
    if not nx.is_strongly_connected(g.subgraph(vr)):
        return False, "V_r is not strongly connected"
    cond = nx.condensation(g)
    closed = [cond.nodes[v]["members"] for v in cond if cond.in_degree(v) == 0]
    if len(closed) != 1 or set(closed[0]) != vr:
        return False, "V_r is not the unique closed strongly connected component"
    return True, ""


def rooted_component_check(g: SwitchingDigraph, roots, T=None) -> ConnectivityCheck:
    """Uniform spanning tree with respect to the root set ``roots``."""
    T = _window(g, T)
    if not roots:
        raise GraphError("V_r must be nonempty")
    for t in g.window_starts(T):
        ok, why = closed_component_ok(g.union_adjacency(t, t + T), g.labels, roots)
        if not ok:
            return ConnectivityCheck(False, not g.periodic, f"window [{t:g}, {t + T:g}]: {why}")
    return ConnectivityCheck(True, not g.periodic)


def edges_to_adjacency(edges, labels) -> np.ndarray:
    """Build an adjacency matrix from ``(from, to, weight)`` triples."""
    idx = {lab: i for i, lab in enumerate(labels)}
    a = np.zeros((len(labels), len(labels)))
    for e in edges:
        src, dst = e[0], e[1]
        w = e[2] if len(e) > 2 else 1.0
        if src not in idx or dst not in idx:
            raise GraphError(f"edge {src}->{dst} uses an unknown node")
        a[idx[dst], idx[src]] = w
    return a
