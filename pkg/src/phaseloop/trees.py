"""Block-structured process trees and their trace semantics.

A tree is built from activity leaves, the silent leaf tau, and the four
operators seq / xor / par / loop (loop's first child is the body, the rest
are redo branches).  `accepts` decides trace membership by compiling the
tree to a finite automaton; `enumerate_language` builds the bounded
language by direct recursive set construction so the two routes stay
independent of each other.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

from .phases import Instance, _check_phase_name

OPERATORS = ("seq", "xor", "par", "loop")


class TreeParseError(ValueError):
    """A tree expression string cannot be parsed."""


class DepthExceededError(RuntimeError):
    """Bounded-language enumeration outgrew its node budget."""


@dataclass(frozen=True)
class ProcessTree:
    kind: str  # "leaf", "tau", or one of OPERATORS
    label: str | None = None
    children: tuple["ProcessTree", ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "leaf":
            if self.label is None:
                raise ValueError("leaf needs a label")
            _check_phase_name(self.label)
            if self.children:
                raise ValueError("leaf takes no children")
        elif self.kind == "tau":
            if self.label is not None or self.children:
                raise ValueError("tau takes no label or children")
        elif self.kind in OPERATORS:
            if len(self.children) < 2:
                raise ValueError(f"{self.kind} needs at least 2 children")
            if self.label is not None:
                raise ValueError("operators take no label")
        else:
            raise ValueError(f"unknown node kind {self.kind!r}")

    @property
    def is_operator(self) -> bool:
        return self.kind in OPERATORS

    def __str__(self) -> str:
        return format_tree(self)


TAU = ProcessTree("tau")


def leaf(label: str) -> ProcessTree:
    return ProcessTree("leaf", label=label)


def _canonical_key(t: ProcessTree) -> tuple[int, str]:
    # tau sorts before any named subtree so xor(tau, X) keeps tau first
    return (0 if t.kind == "tau" else 1, format_tree(t))


def seq(*children: ProcessTree) -> ProcessTree:
    return ProcessTree("seq", children=tuple(children))


def xor(*children: ProcessTree) -> ProcessTree:
    return ProcessTree("xor", children=tuple(sorted(children, key=_canonical_key)))


def par(*children: ProcessTree) -> ProcessTree:
    return ProcessTree("par", children=tuple(sorted(children, key=_canonical_key)))


def loop(body: ProcessTree, *redos: ProcessTree) -> ProcessTree:
    return ProcessTree("loop", children=(body, *redos))


def tree_leaves(t: ProcessTree) -> set[str]:
    """Activity labels of all non-silent leaves."""
    if t.kind == "leaf":
        return {t.label}  # type: ignore[arg-type]
    out: set[str] = set()
    for child in t.children:
        out |= tree_leaves(child)
    return out


def format_tree(t: ProcessTree) -> str:
    """Prefix notation, e.g. ``seq(D, xor(tau, R), C, T)``."""
    if t.kind == "leaf":
        return t.label  # type: ignore[return-value]
    if t.kind == "tau":
        return "tau"
    return f"{t.kind}({', '.join(format_tree(c) for c in t.children)})"


_TOKEN_RE = re.compile(r"\s*([(),]|[^\s(),]+)")


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            break
        tokens.append(m.group(1))
        pos = m.end()
    if text[pos:].strip():
        raise TreeParseError(f"cannot tokenize {text[pos:]!r}")
    return tokens


def parse_tree(text: str) -> ProcessTree:
    """Parse the prefix notation produced by format_tree."""
    tokens = _tokenize(text)
    if not tokens:
        raise TreeParseError("empty tree expression")
    pos = 0

    def expect(tok: str) -> None:
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != tok:
            raise TreeParseError(f"expected {tok!r} at token {pos} in {text!r}")
        pos += 1

    def term() -> ProcessTree:
        nonlocal pos
        if pos >= len(tokens):
            raise TreeParseError(f"unexpected end of input in {text!r}")
        name = tokens[pos]
        if name in ("(", ")", ","):
            raise TreeParseError(f"unexpected {name!r} in {text!r}")
        pos += 1
        if name in OPERATORS:
            expect("(")
            children = [term()]
            while pos < len(tokens) and tokens[pos] == ",":
                pos += 1
                children.append(term())
            expect(")")
            if name == "seq":
                return seq(*children)
            if name == "xor":
                return xor(*children)
            if name == "par":
                return par(*children)
            return loop(children[0], *children[1:])
        if name == "tau":
            return TAU
        try:
            return leaf(name)
        except ValueError as exc:
            raise TreeParseError(str(exc)) from exc

    result = term()
    if pos != len(tokens):
        raise TreeParseError(f"trailing tokens in {text!r}")
    return result


# --- Trace acceptance via automaton compilation ----------------------------


@dataclass
class _Nfa:
    """Epsilon-free automaton; states are opaque ints."""

    n: int
    starts: frozenset[int]
    accepts: frozenset[int]
    trans: dict[tuple[int, str], frozenset[int]]


def _eliminate_eps(
    n: int,
    starts: set[int],
    accepts: set[int],
    sym_edges: list[tuple[int, str, int]],
    eps_edges: list[tuple[int, int]],
) -> _Nfa:
    eps: dict[int, set[int]] = {}
    for a, b in eps_edges:
        eps.setdefault(a, set()).add(b)
    closure: dict[int, frozenset[int]] = {}
    for s in range(n):
        seen = {s}
        stack = [s]
        while stack:
            cur = stack.pop()
            for nxt in eps.get(cur, ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        closure[s] = frozenset(seen)
    moves_by_src: dict[int, dict[str, set[int]]] = {}
    for a, sym, b in sym_edges:
        moves_by_src.setdefault(a, {}).setdefault(sym, set()).add(b)
    trans: dict[tuple[int, str], set[int]] = {}
    for s in range(n):
        for t in closure[s]:
            for sym, dsts in moves_by_src.get(t, {}).items():
                bucket = trans.setdefault((s, sym), set())
                for d in dsts:
                    bucket |= closure[d]
    new_accepts = frozenset(s for s in range(n) if closure[s] & accepts)
    return _Nfa(
        n,
        frozenset(starts),
        new_accepts,
        {k: frozenset(v) for k, v in trans.items()},
    )


_PRODUCT_STATE_LIMIT = 200_000


def _compose(tree: ProcessTree) -> _Nfa:
    if tree.kind == "leaf":
        return _Nfa(2, frozenset({0}), frozenset({1}), {(0, tree.label): frozenset({1})})
    if tree.kind == "tau":
        return _Nfa(1, frozenset({0}), frozenset({0}), {})

    subs = [_compose(c) for c in tree.children]

    if tree.kind == "par":
        # Product automaton: one component consumes each symbol, so runs are
        # exactly the interleavings of child-accepted traces.
        start_tuples = list(product(*[sorted(s.starts) for s in subs]))
        index: dict[tuple[int, ...], int] = {}
        order: list[tuple[int, ...]] = []
        for t in start_tuples:
            if t not in index:
                index[t] = len(order)
                order.append(t)
        sym_trans: dict[tuple[int, str], set[int]] = {}
        frontier = list(order)
        while frontier:
            state = frontier.pop()
            sid = index[state]
            for i, sub in enumerate(subs):
                for (src, sym), dsts in sub.trans.items():
                    if src != state[i]:
                        continue
                    for d in dsts:
                        nxt = state[:i] + (d,) + state[i + 1 :]
                        if nxt not in index:
                            if len(index) >= _PRODUCT_STATE_LIMIT:
                                raise DepthExceededError("parallel state space too large")
                            index[nxt] = len(order)
                            order.append(nxt)
                            frontier.append(nxt)
                        sym_trans.setdefault((sid, sym), set()).add(index[nxt])
        accepts = frozenset(
            index[t] for t in order if all(t[i] in subs[i].accepts for i in range(len(subs)))
        )
        starts = frozenset(index[t] for t in start_tuples)
        return _Nfa(len(order), starts, accepts, {k: frozenset(v) for k, v in sym_trans.items()})

    # seq / xor / loop: disjoint union of the child automata plus eps glue.
    offsets = []
    total = 0
    for sub in subs:
        offsets.append(total)
        total += sub.n
    sym_edges: list[tuple[int, str, int]] = []
    for sub, off in zip(subs, offsets):
        for (src, sym), dsts in sub.trans.items():
            for d in dsts:
                sym_edges.append((src + off, sym, d + off))
    eps_edges: list[tuple[int, int]] = []

    def shifted(states: frozenset[int], off: int) -> set[int]:
        return {s + off for s in states}

    if tree.kind == "seq":
        for i in range(len(subs) - 1):
            for a in shifted(subs[i].accepts, offsets[i]):
                for b in shifted(subs[i + 1].starts, offsets[i + 1]):
                    eps_edges.append((a, b))
        starts = shifted(subs[0].starts, offsets[0])
        accepts = shifted(subs[-1].accepts, offsets[-1])
    elif tree.kind == "xor":
        starts = set()
        accepts = set()
        for sub, off in zip(subs, offsets):
            starts |= shifted(sub.starts, off)
            accepts |= shifted(sub.accepts, off)
    else:  # loop
        body, redos = subs[0], subs[1:]
        body_off = offsets[0]
        starts = shifted(body.starts, body_off)
        accepts = shifted(body.accepts, body_off)
        for redo, off in zip(redos, offsets[1:]):
            for a in shifted(body.accepts, body_off):
                for b in shifted(redo.starts, off):
                    eps_edges.append((a, b))
            for a in shifted(redo.accepts, off):
                for b in shifted(body.starts, body_off):
                    eps_edges.append((a, b))
    return _eliminate_eps(total, starts, accepts, sym_edges, eps_edges)


_NFA_CACHE: dict[ProcessTree, _Nfa] = {}


def _compiled(tree: ProcessTree) -> _Nfa:
    nfa = _NFA_CACHE.get(tree)
    if nfa is None:
        nfa = _compose(tree)
        _NFA_CACHE[tree] = nfa
    return nfa


def _as_trace(trace: Instance | Sequence[str]) -> tuple[str, ...]:
    if isinstance(trace, Instance):
        return trace.phases
    return tuple(trace)


def accepts(tree: ProcessTree, trace: Instance | Sequence[str]) -> bool:
    """Whether the trace (possibly empty) is in the tree's language."""
    nfa = _compiled(tree)
    current = set(nfa.starts)
    for sym in _as_trace(trace):
        nxt: set[int] = set()
        for s in current:
            nxt |= nfa.trans.get((s, sym), frozenset())
        if not nxt:
            return False
        current = nxt
    return bool(current & nfa.accepts)


# --- Bounded language enumeration (independent of the automaton) -----------


def _interleavings(a: tuple[str, ...], b: tuple[str, ...]) -> set[tuple[str, ...]]:
    if not a:
        return {b}
    if not b:
        return {a}
    out: set[tuple[str, ...]] = set()
    for rest in _interleavings(a[1:], b):
        out.add((a[0],) + rest)
    for rest in _interleavings(a, b[1:]):
        out.add((b[0],) + rest)
    return out


def enumerate_language(
    tree: ProcessTree, max_len: int, node_budget: int = 500_000
) -> set[tuple[str, ...]]:
    """All accepted traces of length <= max_len, built from the tree structure.

    Raises DepthExceededError if the intermediate sets outgrow node_budget.
    """
    if max_len > 12:
        raise ValueError("max_len is capped at 12")
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    produced = [0]

    def charge(amount: int) -> None:
        produced[0] += amount
        if produced[0] > node_budget:
            raise DepthExceededError("language enumeration exceeded its node budget")

    def lang(t: ProcessTree) -> set[tuple[str, ...]]:
        if t.kind == "leaf":
            return {(t.label,)} if max_len >= 1 else set()
        if t.kind == "tau":
            return {()}
        child_langs = [lang(c) for c in t.children]
        if t.kind == "xor":
            out = set()
            for cl in child_langs:
                out |= cl
            charge(len(out))
            return out
        if t.kind == "seq":
            acc: set[tuple[str, ...]] = {()}
            for cl in child_langs:
                nxt: set[tuple[str, ...]] = set()
                for u in acc:
                    for v in cl:
                        if len(u) + len(v) <= max_len:
                            nxt.add(u + v)
                charge(len(nxt))
                acc = nxt
            return acc
        if t.kind == "par":
            acc = {()}
            for cl in child_langs:
                nxt = set()
                for u in acc:
                    for v in cl:
                        if len(u) + len(v) <= max_len:
                            nxt |= _interleavings(u, v)
                charge(len(nxt))
                acc = nxt
            return acc
        # loop: body, then any number of (redo, body) extensions
        body_lang = child_langs[0]
        redo_lang: set[tuple[str, ...]] = set()
        for cl in child_langs[1:]:
            redo_lang |= cl
        result = set(body_lang)
        frontier = set(body_lang)
        while frontier:
            fresh: set[tuple[str, ...]] = set()
            for w in frontier:
                for r in redo_lang:
                    if len(w) + len(r) > max_len:
                        continue
                    for b in body_lang:
                        if len(w) + len(r) + len(b) <= max_len:
                            ext = w + r + b
                            if ext not in result:
                                fresh.add(ext)
            charge(len(fresh))
            result |= fresh
            frontier = fresh
        return result

    return lang(tree)
