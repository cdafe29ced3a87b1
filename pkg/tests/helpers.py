"""Shared test oracles: random model generation, an independent BPMN walker,
and a parser that inverts the description templates."""

from __future__ import annotations

import random
import re

from phaseloop.bpmn import (
    END_EVENT,
    PAR_GATEWAY,
    START_EVENT,
    TASK,
    XOR_GATEWAY,
    BpmnModel,
)
from phaseloop.describe import Message
from phaseloop.mining import EventLog, build_dfg
from phaseloop.trees import TAU, DepthExceededError, ProcessTree, leaf, loop, par, seq, xor
from phaseloop.trees import enumerate_language


def random_process_tree(rng: random.Random, labels: list[str], depth: int, inside_loop: bool = False) -> ProcessTree:
    """Random tree over exactly this label budget; unique leaf labels.

    Silent branches appear only under exclusive choices outside loops, the
    one placement a graph-based miner can tell apart from noise.
    """
    if depth == 0 or len(labels) == 1 or rng.random() < 0.2:
        return leaf(rng.choice(labels))
    op = rng.choice(["seq", "xor", "par", "loop"])
    n = min(len(labels), rng.randint(2, 3))
    split_points = sorted(rng.sample(range(1, len(labels)), n - 1))
    chunks, prev = [], 0
    for point in split_points + [len(labels)]:
        chunks.append(labels[prev:point])
        prev = point
    child_loop = inside_loop or op == "loop"
    kids = [random_process_tree(rng, chunk, depth - 1, child_loop) for chunk in chunks]
    if op == "xor":
        if not inside_loop and rng.random() < 0.35:
            return xor(TAU, *kids)
        return xor(*kids)
    if op == "seq":
        return seq(*kids)
    if op == "par":
        return par(*kids)
    return loop(kids[0], *kids[1:])


def has_optional_sequence_in_sequence(t: ProcessTree, parent_kind: str | None = None) -> bool:
    """xor(tau, seq(..)) directly under a seq: skipping a subsequence is not
    recoverable from a directly-follows graph, so reject such samples."""
    if (
        t.kind == "xor"
        and parent_kind == "seq"
        and any(c.kind == "tau" for c in t.children)
        and any(c.kind == "seq" for c in t.children)
    ):
        return True
    return any(has_optional_sequence_in_sequence(c, t.kind) for c in t.children)


def dfg_saturated(tree: ProcessTree, max_len: int, budget: int = 50_000) -> bool:
    """True when the bounded language already shows every follow edge the
    model produces at two extra letters of depth."""
    short = enumerate_language(tree, max_len, node_budget=budget)
    longer = enumerate_language(tree, max_len + 2, node_budget=6 * budget)

    def edges(lang):
        nonempty = tuple(sorted(t for t in lang if t))
        if not nonempty:
            return None
        return set(build_dfg(EventLog(nonempty)).edges)

    e1, e2 = edges(short), edges(longer)
    return e1 is not None and e1 == e2


def rediscoverable_sample(rng: random.Random, max_labels: int = 8, depth: int = 3):
    """Draw (tree, language<=8) pairs suitable for the rediscovery check."""
    while True:
        k = rng.randint(3, max_labels)
        labels = [chr(ord("a") + i) for i in range(k)]
        rng.shuffle(labels)
        tree = random_process_tree(rng, labels, depth)
        if not tree.is_operator or has_optional_sequence_in_sequence(tree):
            continue
        try:
            if not dfg_saturated(tree, 8):
                continue
            lang = enumerate_language(tree, 8, node_budget=50_000)
        except DepthExceededError:
            continue
        return tree, lang


def bpmn_language(model: BpmnModel, max_len: int) -> set[tuple[str, ...]]:
    """All task-label sequences along start-to-end runs, by token simulation.

    Independent of the tree semantics: tokens move along sequence flows, an
    exclusive gateway forwards one token along one outgoing flow, a parallel
    gateway consumes a token from every incoming flow and emits on all
    outgoing ones.
    """
    start = model.start.id
    end = model.end.id
    initial = frozenset({(start, model.outgoing(start)[0], 1)})  # (src, dst, count)

    def marking_add(marking, flow, delta):
        counts = {(s, d): c for (s, d, c) in marking}
        counts[flow] = counts.get(flow, 0) + delta
        if counts[flow] < 0:
            raise ValueError("negative token count")
        return frozenset((s, d, c) for (s, d), c in counts.items() if c > 0)

    results: set[tuple[str, ...]] = set()
    seen: set[tuple[frozenset, tuple[str, ...]]] = set()
    stack = [(initial, ())]
    while stack:
        marking, trace = stack.pop()
        if (marking, trace) in seen:
            continue
        seen.add((marking, trace))
        if not marking:
            results.add(trace)
            continue
        for src, dst, _count in sorted(marking):
            node = model.node(dst)
            taken = marking_add(marking, (src, dst), -1)
            if node.kind == TASK:
                if len(trace) >= max_len:
                    continue
                out = model.outgoing(dst)[0]
                stack.append((marking_add(taken, (dst, out), +1), trace + (node.label,)))
            elif node.kind == END_EVENT:
                stack.append((taken, trace))
            elif node.kind == XOR_GATEWAY:
                for out in model.outgoing(dst):
                    stack.append((marking_add(taken, (dst, out), +1), trace))
            elif node.kind == PAR_GATEWAY:
                incoming = model.incoming(dst)
                counts = {(s, d): c for (s, d, c) in marking}
                if all(counts.get((src2, dst), 0) >= 1 for src2 in incoming):
                    after = marking
                    for src2 in incoming:
                        after = marking_add(after, (src2, dst), -1)
                    for out in model.outgoing(dst):
                        after = marking_add(after, (dst, out), +1)
                    stack.append((after, trace))
    return results


_SENT_RE = re.compile(r"[^.]*\.")


def parse_description_text(text: str) -> list[Message]:
    """Invert the realization templates (flat models only)."""
    messages: list[Message] = []
    for raw in _SENT_RE.findall(text):
        sentence = raw.strip()
        position = len(messages)
        if sentence == "The process starts.":
            messages.append(Message("start", position))
        elif sentence == "The process ends.":
            messages.append(Message("end", position))
        elif m := re.fullmatch(r"(?:First|Then), (\S+) is performed\.", sentence):
            messages.append(Message("task", position, phase=m.group(1)))
        elif m := re.fullmatch(r"Optionally, (\S+) is performed\.", sentence):
            messages.append(Message("optional_task", position, phase=m.group(1)))
        elif m := re.fullmatch(
            r"Next, exactly one of the following is performed: (.+)\.", sentence
        ):
            messages.append(Message("choice", position, branches=tuple(m.group(1).split(", "))))
        elif m := re.fullmatch(
            r"Next, the following are performed in any order: (.+)\.", sentence
        ):
            messages.append(Message("parallel", position, branches=tuple(m.group(1).split(", "))))
        elif m := re.fullmatch(r"Next, (.+); this may repeat after (.+)\.", sentence):
            messages.append(
                Message("loop", position, body=m.group(1), branches=tuple(m.group(2).split(", ")))
            )
        else:
            raise ValueError(f"unparseable sentence {sentence!r}")
    return messages
