"""Deterministic natural-language rendering of a BPMN model.

Three steps: plan which messages to communicate (walking the model in
control-flow order, collapsing each gateway block into one message), pick
the wording, and realize fixed sentence templates.  The output feeds a
generation prompt, so determinism and faithfulness take priority over
fluent prose.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bpmn import (
    END_EVENT,
    PAR_GATEWAY,
    START_EVENT,
    TASK,
    XOR_GATEWAY,
    BpmnModel,
)

_STEP_BUDGET = 10_000


class UnstructuredModelError(ValueError):
    """Gateway pairs cannot be matched into blocks."""


@dataclass(frozen=True)
class Message:
    kind: str  # "start", "end", "task", "optional_task", "choice", "parallel", "loop"
    position: int
    phase: str = ""
    branches: tuple[str, ...] = ()
    body: str = ""


@dataclass(frozen=True)
class ProcessDescription:
    text: str
    sentence_count: int


# Intermediate block structures produced by the region parser.
@dataclass(frozen=True)
class _Block:
    kind: str  # "task", "choice", "parallel", "loop"
    label: str = ""
    branches: tuple[tuple["_Block", ...], ...] = ()
    body: tuple["_Block", ...] = ()


def _back_edges(model: BpmnModel) -> set[tuple[str, str]]:
    """DFS from the start event; edges into a node still on the stack."""
    back: set[tuple[str, str]] = set()
    visited: set[str] = set()
    on_stack: set[str] = set()

    def visit(node: str) -> None:
        visited.add(node)
        on_stack.add(node)
        for nxt in model.outgoing(node):
            if nxt in on_stack:
                back.add((node, nxt))
            elif nxt not in visited:
                visit(nxt)
        on_stack.discard(node)

    visit(model.start.id)
    return back


def _natural_loops(model: BpmnModel) -> dict[str, set[str]]:
    """Loop entry node -> all nodes of its loop (union over shared entries)."""
    loops: dict[str, set[str]] = {}
    for src, entry in _back_edges(model):
        members = {entry, src}
        stack = [src]
        while stack:
            node = stack.pop()
            if node == entry:
                continue
            for pred in model.incoming(node):
                if pred not in members:
                    members.add(pred)
                    stack.append(pred)
        loops.setdefault(entry, set()).update(members)
    return loops


class _Parser:
    def __init__(self, model: BpmnModel) -> None:
        self.model = model
        self.loops = _natural_loops(model)
        self.steps = 0

    def fail(self, why: str) -> UnstructuredModelError:
        return UnstructuredModelError(why)

    def single_out(self, node_id: str) -> str:
        out = self.model.outgoing(node_id)
        if len(out) != 1:
            raise self.fail(f"expected one outgoing flow at {node_id}, found {len(out)}")
        return out[0]

    def loop_exit(self, entry: str) -> str:
        members = self.loops[entry]
        exits = [
            n.id
            for n in self.model.nodes
            if n.id in members
            and n.kind == XOR_GATEWAY
            and any(dst not in members for dst in self.model.outgoing(n.id))
        ]
        if len(exits) != 1:
            raise self.fail(f"loop at {entry} has {len(exits)} exit gateways")
        return exits[0]

    def is_join(self, node_id: str, kind: str) -> bool:
        node = self.model.node(node_id)
        return (
            node.kind == kind
            and len(self.model.outgoing(node_id)) == 1
            and len(self.model.incoming(node_id)) >= 2
            and node_id not in self.loops
        )

    def chain(self, node_id: str, stop) -> tuple[tuple[_Block, ...], str]:
        """Parse blocks until stop(node) holds; returns (blocks, stop node)."""
        blocks: list[_Block] = []
        while not stop(node_id):
            self.steps += 1
            if self.steps > _STEP_BUDGET:
                raise self.fail("model walk did not terminate")
            node = self.model.node(node_id)
            if node.kind == TASK:
                blocks.append(_Block("task", label=node.label))
                node_id = self.single_out(node_id)
            elif node_id in self.loops:
                blocks.append(self.parse_loop(node_id))
                exit_id = self.loop_exit(node_id)
                forward = [
                    dst for dst in self.model.outgoing(exit_id) if dst not in self.loops[node_id]
                ]
                if len(forward) != 1:
                    raise self.fail(f"loop exit {exit_id} has {len(forward)} forward flows")
                node_id = forward[0]
            elif node.kind in (XOR_GATEWAY, PAR_GATEWAY):
                out = self.model.outgoing(node_id)
                if len(out) < 2:
                    raise self.fail(f"unexpected pass-through gateway {node_id}")
                block, node_id = self.parse_split(node_id, node.kind)
                blocks.append(block)
            else:
                raise self.fail(f"unexpected {node.kind} node {node_id} inside a block")
        return tuple(blocks), node_id

    def parse_split(self, split_id: str, kind: str) -> tuple[_Block, str]:
        branches: list[tuple[_Block, ...]] = []
        joins: set[str] = set()
        for target in self.model.outgoing(split_id):
            branch, join = self.chain(target, lambda n: self.is_join(n, kind))
            branches.append(branch)
            joins.add(join)
        if len(joins) != 1:
            raise self.fail(f"branches of {split_id} do not reconverge")
        join = joins.pop()
        block_kind = "choice" if kind == XOR_GATEWAY else "parallel"
        return _Block(block_kind, branches=tuple(branches)), self.single_out(join)

    def parse_loop(self, entry: str) -> _Block:
        members = self.loops[entry]
        exit_id = self.loop_exit(entry)
        body_start = self.single_out(entry)
        body, _ = self.chain(body_start, lambda n: n == exit_id)
        redos: list[tuple[_Block, ...]] = []
        for target in sorted(self.model.outgoing(exit_id)):
            if target not in members and target != entry:
                continue
            if target == entry:
                redos.append(())
            else:
                redo, _ = self.chain(target, lambda n: n == entry)
                redos.append(redo)
        if not redos:
            raise self.fail(f"loop at {entry} has no redo branches")
        return _Block("loop", body=body, branches=tuple(redos))


def _summarize_block(block: _Block) -> str:
    if block.kind == "task":
        return block.label
    if block.kind == "choice":
        return "one of (" + " | ".join(_summarize(b) for b in block.branches) + ")"
    if block.kind == "parallel":
        return "all of (" + " | ".join(_summarize(b) for b in block.branches) + ")"
    redo = " | ".join(_summarize(b) for b in block.branches)
    return f"repeat ({_summarize(block.body)} after {redo})"


def _summarize(blocks: tuple[_Block, ...]) -> str:
    if not blocks:
        return "nothing"
    return " then ".join(_summarize_block(b) for b in blocks)


def plan_text(model: BpmnModel) -> list[Message]:
    """Walk the model from its start event and collapse blocks to messages."""
    try:
        end_id = model.end.id
        model.start
    except StopIteration as exc:
        raise UnstructuredModelError("model needs one start and one end event") from exc
    parser = _Parser(model)
    first = parser.single_out(model.start.id)
    blocks, _ = parser.chain(first, lambda n: n == end_id)

    messages = [Message("start", 0)]
    for block in blocks:
        position = len(messages)
        if block.kind == "task":
            messages.append(Message("task", position, phase=block.label))
        elif block.kind == "choice":
            simple = [b for b in block.branches if b]
            if (
                len(block.branches) == 2
                and len(simple) == 1
                and len(simple[0]) == 1
                and simple[0][0].kind == "task"
            ):
                messages.append(Message("optional_task", position, phase=simple[0][0].label))
            else:
                messages.append(
                    Message("choice", position, branches=tuple(_summarize(b) for b in block.branches))
                )
        elif block.kind == "parallel":
            messages.append(
                Message("parallel", position, branches=tuple(_summarize(b) for b in block.branches))
            )
        else:
            messages.append(
                Message(
                    "loop",
                    position,
                    body=_summarize(block.body),
                    branches=tuple(_summarize(b) for b in block.branches),
                )
            )
    messages.append(Message("end", len(messages)))
    return messages


def realize_text(messages: list[Message]) -> ProcessDescription:
    """Fixed sentence templates; identical messages yield identical bytes."""
    sentences: list[str] = []
    for idx, msg in enumerate(messages):
        if msg.kind == "start":
            sentences.append("The process starts.")
        elif msg.kind == "end":
            sentences.append("The process ends.")
        elif msg.kind == "task":
            opener = "First" if idx == 1 else "Then"
            sentences.append(f"{opener}, {msg.phase} is performed.")
        elif msg.kind == "optional_task":
            sentences.append(f"Optionally, {msg.phase} is performed.")
        elif msg.kind == "choice":
            sentences.append(
                "Next, exactly one of the following is performed: " + ", ".join(msg.branches) + "."
            )
        elif msg.kind == "parallel":
            sentences.append(
                "Next, the following are performed in any order: " + ", ".join(msg.branches) + "."
            )
        elif msg.kind == "loop":
            sentences.append(
                f"Next, {msg.body}; this may repeat after " + ", ".join(msg.branches) + "."
            )
        else:
            raise ValueError(f"unknown message kind {msg.kind!r}")
    return ProcessDescription(" ".join(sentences), len(messages))


def describe_model(model: BpmnModel) -> ProcessDescription:
    return realize_text(plan_text(model))
