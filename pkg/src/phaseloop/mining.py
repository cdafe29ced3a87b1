"""Directly-follows graphs and block-structured process discovery.

The miner recursively partitions the directly-follows graph, trying an
exclusive cut, then sequence, parallel, and loop; sublogs are mined
recursively and a log that admits no cut falls through to the flower model
(a loop of every activity) so every log trace is always replayed by the
result.  The parallel cut additionally consults minimum-self-distance
witnesses from the log: activities seen between the closest repetitions of
another activity cannot run concurrently with it, which the graph alone
cannot tell apart from loop edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import networkx as nx

from .phases import Instance, parse_instance, serialize_instance
from .trees import TAU, ProcessTree, leaf, loop, par, seq, xor

Trace = tuple[str, ...]


class EmptyTraceError(ValueError):
    """A directly-follows graph cannot be built over an empty trace."""


class EmptyLogError(ValueError):
    """Mining needs at least one trace."""


class InvalidCutError(ValueError):
    """A cut whose parts do not cover the log's activities."""


class _Boundary:
    __slots__ = ("_name",)

    def __init__(self, name: str) -> None:
        self._name = name

    def __repr__(self) -> str:
        return self._name


START = _Boundary("__start__")
END = _Boundary("__end__")


@dataclass(frozen=True)
class EventLog:
    """A multiset of traces; repetition carries frequency."""

    traces: tuple[Trace, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "traces", tuple(tuple(t) for t in self.traces))

    @classmethod
    def from_instances(cls, instances: Iterable[Instance]) -> "EventLog":
        return cls(tuple(inst.phases for inst in instances))

    @property
    def alphabet(self) -> set[str]:
        out: set[str] = set()
        for trace in self.traces:
            out.update(trace)
        return out

    def __len__(self) -> int:
        return len(self.traces)


@dataclass
class DirectlyFollowsGraph:
    """Activities plus virtual start/end, with counted follow edges."""

    nodes: frozenset[str]
    edges: dict[tuple[object, object], int]

    def successors(self, node: object) -> set[object]:
        return {b for (a, b) in self.edges if a == node}

    def predecessors(self, node: object) -> set[object]:
        return {a for (a, b) in self.edges if b == node}

    @property
    def start_activities(self) -> set[str]:
        return {b for (a, b) in self.edges if a is START}  # type: ignore[misc]

    @property
    def end_activities(self) -> set[str]:
        return {a for (a, b) in self.edges if b is END}  # type: ignore[misc]

    def inner_edges(self) -> set[tuple[str, str]]:
        return {
            (a, b)
            for (a, b) in self.edges
            if not isinstance(a, _Boundary) and not isinstance(b, _Boundary)
        }


def build_dfg(log: EventLog) -> DirectlyFollowsGraph:
    """Count adjacent pairs across the log, plus virtual start/end edges."""
    if not log.traces:
        raise EmptyLogError("cannot build a graph from an empty log")
    edges: dict[tuple[object, object], int] = {}
    nodes: set[str] = set()
    for trace in log.traces:
        if not trace:
            raise EmptyTraceError("top-level traces must be non-empty")
        nodes.update(trace)
        pairs = [(START, trace[0]), *zip(trace, trace[1:]), (trace[-1], END)]
        for pair in pairs:
            edges[pair] = edges.get(pair, 0) + 1
    return DirectlyFollowsGraph(frozenset(nodes), edges)


@dataclass(frozen=True)
class Cut:
    kind: str  # "xor", "seq", "par", "loop"
    parts: tuple[frozenset[str], ...]

    def __post_init__(self) -> None:
        if len(self.parts) < 2:
            raise ValueError("a cut needs at least 2 parts")
        seen: set[str] = set()
        for part in self.parts:
            if not part:
                raise ValueError("cut parts must be non-empty")
            if seen & part:
                raise ValueError("cut parts must be disjoint")
            seen |= part


def _sorted_parts(parts: Iterable[set[str]]) -> tuple[frozenset[str], ...]:
    return tuple(frozenset(p) for p in sorted(parts, key=lambda p: min(p)))


def _exclusive_cut(dfg: DirectlyFollowsGraph) -> Cut | None:
    graph = nx.Graph()
    graph.add_nodes_from(dfg.nodes)
    graph.add_edges_from(dfg.inner_edges())
    components = [set(c) for c in nx.connected_components(graph)]
    if len(components) < 2:
        return None
    return Cut("xor", _sorted_parts(components))


def _sequence_cut(dfg: DirectlyFollowsGraph) -> Cut | None:
    digraph = nx.DiGraph()
    digraph.add_nodes_from(dfg.nodes)
    digraph.add_edges_from(dfg.inner_edges())
    comps = [frozenset(c) for c in nx.strongly_connected_components(digraph)]
    cond = nx.condensation(digraph, scc=comps)
    reach = {i: nx.descendants(cond, i) for i in cond.nodes}

    groups: list[set[int]] = [{i} for i in cond.nodes]

    def strictly_before(g1: set[int], g2: set[int]) -> bool:
        return all(j in reach[i] and i not in reach[j] for i in g1 for j in g2)

    # Merge any two groups that are not totally ordered; repeat to fixpoint.
    merged = True
    while merged:
        merged = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                if not strictly_before(groups[i], groups[j]) and not strictly_before(
                    groups[j], groups[i]
                ):
                    groups[i] |= groups[j]
                    del groups[j]
                    merged = True
                    break
            if merged:
                break
    if len(groups) < 2:
        return None
    snapshot = list(groups)
    ranks = {
        idx: sum(1 for other in snapshot if other is not g and strictly_before(other, g))
        for idx, g in enumerate(snapshot)
    }
    ordered = sorted(range(len(snapshot)), key=ranks.__getitem__)
    parts = tuple(
        frozenset().union(*(comps[i] for i in snapshot[idx])) for idx in ordered
    )
    return Cut("seq", parts)


def _min_self_distance_witnesses(log: EventLog) -> dict[str, set[str]]:
    """Activities seen between the closest pair of repeats of each activity."""
    best: dict[str, int] = {}
    between: dict[str, dict[int, set[str]]] = {}
    for trace in log.traces:
        positions: dict[str, int] = {}
        for idx, act in enumerate(trace):
            if act in positions:
                dist = idx - positions[act] - 1
                if dist < best.get(act, dist + 1):
                    best[act] = dist
                between.setdefault(act, {}).setdefault(dist, set()).update(
                    trace[positions[act] + 1 : idx]
                )
            positions[act] = idx
    return {act: between[act].get(dist, set()) for act, dist in best.items()}


class _UnionFind:
    def __init__(self, items: Iterable[str]) -> None:
        self.parent = {x: x for x in items}

    def find(self, x: str) -> str:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra

    def groups(self) -> list[set[str]]:
        buckets: dict[str, set[str]] = {}
        for x in self.parent:
            buckets.setdefault(self.find(x), set()).add(x)
        return list(buckets.values())


def _parallel_cut(dfg: DirectlyFollowsGraph, log: EventLog | None) -> Cut | None:
    acts = sorted(dfg.nodes)
    if len(acts) < 2:
        return None
    edges = dfg.inner_edges()
    uf = _UnionFind(acts)
    for i, a in enumerate(acts):
        for b in acts[i + 1 :]:
            if (a, b) not in edges or (b, a) not in edges:
                uf.union(a, b)
    if log is not None:
        for act, witnesses in _min_self_distance_witnesses(log).items():
            for w in witnesses:
                uf.union(act, w)
    groups = sorted(uf.groups(), key=min)
    starts = dfg.start_activities
    ends = dfg.end_activities
    # Each part must see the process start and finish; fold parts that do
    # not into a neighbour until everything qualifies.
    idx = 0
    while len(groups) > 1 and idx < len(groups):
        if groups[idx] & starts and groups[idx] & ends:
            idx += 1
            continue
        stray = groups.pop(idx)
        target = idx - 1 if idx > 0 else 0
        groups[target] |= stray
    if len(groups) < 2:
        return None
    if any(not (g & starts) or not (g & ends) for g in groups):
        return None
    return Cut("par", _sorted_parts(groups))


def _loop_cut(dfg: DirectlyFollowsGraph) -> Cut | None:
    starts = dfg.start_activities
    ends = dfg.end_activities
    body = set(starts) | set(ends)
    if not body or body == set(dfg.nodes):
        return None
    edges = dfg.inner_edges()

    while True:
        rest = set(dfg.nodes) - body
        if not rest:
            return None
        undirected = nx.Graph()
        undirected.add_nodes_from(rest)
        undirected.add_edges_from((a, b) for (a, b) in edges if a in rest and b in rest)
        comps = [set(c) for c in nx.connected_components(undirected)]
        # A redo part may only be entered from end activities and may only
        # re-enter the body at start activities; additionally, any redo
        # activity that touches the start (end) boundary must connect to
        # every start (end) activity, or the part belongs in the body.
        bad: list[set[str]] = []
        for comp in comps:
            ok = True
            for a, b in edges:
                if a in body and b in comp and a not in ends:
                    ok = False
                    break
                if a in comp and b in body and b not in starts:
                    ok = False
                    break
            if ok:
                for act in comp:
                    starts_hit = {s for s in starts if (act, s) in edges}
                    if starts_hit and starts_hit != starts:
                        ok = False
                        break
                    ends_hit = {e for e in ends if (e, act) in edges}
                    if ends_hit and ends_hit != ends:
                        ok = False
                        break
            if not ok:
                bad.append(comp)
        if not bad:
            break
        for comp in bad:
            body |= comp
    if not comps:
        return None
    parts = (frozenset(body), *_sorted_parts(comps))
    return Cut("loop", parts)


def find_cut(dfg: DirectlyFollowsGraph, log: EventLog | None = None) -> Cut | None:
    """First valid cut in the order exclusive, sequence, parallel, loop.

    The optional log sharpens the parallel cut with minimum-self-distance
    witnesses; without it the cut falls back to graph information only.
    """
    if not dfg.nodes:
        raise ValueError("graph has no activities")
    return (
        _exclusive_cut(dfg)
        or _sequence_cut(dfg)
        or _parallel_cut(dfg, log)
        or _loop_cut(dfg)
    )


def split_log(log: EventLog, cut: Cut) -> list[EventLog]:
    """Divide the log into one sublog per cut part."""
    part_of: dict[str, int] = {}
    for idx, part in enumerate(cut.parts):
        for act in part:
            part_of[act] = idx
    missing = log.alphabet - set(part_of)
    if missing:
        raise InvalidCutError(f"cut does not cover activities {sorted(missing)}")

    n = len(cut.parts)
    if cut.kind == "xor":
        sublogs: list[list[Trace]] = [[] for _ in range(n)]
        for trace in log.traces:
            counts = [0] * n
            for act in trace:
                counts[part_of[act]] += 1
            sublogs[counts.index(max(counts))].append(trace)
        return [EventLog(tuple(t)) for t in sublogs]

    if cut.kind == "seq":
        sublogs = [[] for _ in range(n)]
        for trace in log.traces:
            sections: list[list[str]] = [[] for _ in range(n)]
            current = 0
            for act in trace:
                p = part_of[act]
                if p > current:
                    current = p
                sections[current].append(act)
            for idx in range(n):
                sublogs[idx].append(tuple(sections[idx]))
        return [EventLog(tuple(t)) for t in sublogs]

    if cut.kind == "par":
        sublogs = [[] for _ in range(n)]
        for trace in log.traces:
            for idx, part in enumerate(cut.parts):
                sublogs[idx].append(tuple(act for act in trace if act in part))
        return [EventLog(tuple(t)) for t in sublogs]

    # loop: alternate body/redo sections, flushing on every part change
    sublogs = [[] for _ in range(n)]
    for trace in log.traces:
        current = part_of[trace[0]]
        section: list[str] = []
        for act in trace:
            p = part_of[act]
            if p != current:
                sublogs[current].append(tuple(section))
                section = []
                current = p
            section.append(act)
        sublogs[current].append(tuple(section))
    return [EventLog(tuple(t)) for t in sublogs]


def mine_tree(log: EventLog) -> ProcessTree:
    """Recursive discovery with perfect replay fitness on the input log."""
    if not log.traces:
        raise EmptyLogError("cannot mine an empty log")
    nonempty = [t for t in log.traces if t]
    if not nonempty:
        return TAU
    if len(nonempty) < len(log.traces):
        return xor(TAU, mine_tree(EventLog(tuple(nonempty))))
    alphabet = sorted(log.alphabet)
    if len(alphabet) == 1 and all(len(t) == 1 for t in nonempty):
        return leaf(alphabet[0])
    dfg = build_dfg(log)
    cut = find_cut(dfg, log)
    if cut is None:
        return loop(TAU, *(leaf(a) for a in alphabet))
    children = [mine_tree(sub) for sub in split_log(log, cut)]
    if cut.kind == "xor":
        return xor(*children)
    if cut.kind == "seq":
        return seq(*children)
    if cut.kind == "par":
        return par(*children)
    return loop(children[0], *children[1:])


# --- Log file format and graph export ---------------------------------------


def load_event_log(path: str | Path) -> EventLog:
    """One serialized instance per line; '#' comments and blanks ignored."""
    traces: list[Trace] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        traces.append(parse_instance(stripped).phases)
    return EventLog(tuple(traces))


def save_event_log(log: EventLog, path: str | Path) -> None:
    lines = [serialize_instance(Instance(t)) for t in log.traces]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def dfg_to_dot(dfg: DirectlyFollowsGraph) -> str:
    """Deterministic DOT rendering with __start__ / __end__ virtual nodes."""

    def name(node: object) -> str:
        return repr(node) if isinstance(node, _Boundary) else str(node)

    lines = ["digraph dfg {"]
    lines.append('  "__start__" [shape=circle];')
    for node in sorted(dfg.nodes):
        lines.append(f'  "{node}" [shape=box];')
    lines.append('  "__end__" [shape=doublecircle];')
    for (a, b), count in sorted(dfg.edges.items(), key=lambda kv: (name(kv[0][0]), name(kv[0][1]))):
        lines.append(f'  "{name(a)}" -> "{name(b)}" [label="{count}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
