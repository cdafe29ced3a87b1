"""Process tree to BPMN conversion, element counting, and DOT / XML export.

The element set is deliberately small: one start and one end event, tasks,
exclusive and parallel gateways, and sequence flows.  Silent branches
become bare gateway-to-gateway flows rather than invisible tasks, so the
task count always equals the number of real phases in the model.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Iterable

from .trees import ProcessTree

START_EVENT = "start"
END_EVENT = "end"
TASK = "task"
XOR_GATEWAY = "exclusive_gateway"
PAR_GATEWAY = "parallel_gateway"

_PASS = object()  # marker for a tau subtree: a flow, not a node


class BpmnFormatError(ValueError):
    """Malformed BPMN XML or a model outside the supported element subset."""


@dataclass(frozen=True)
class BpmnNode:
    id: str
    kind: str
    label: str = ""


@dataclass(frozen=True)
class BpmnModel:
    nodes: tuple[BpmnNode, ...]
    flows: frozenset[tuple[str, str]]

    def node(self, node_id: str) -> BpmnNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def outgoing(self, node_id: str) -> list[str]:
        return sorted(dst for src, dst in self.flows if src == node_id)

    def incoming(self, node_id: str) -> list[str]:
        return sorted(src for src, dst in self.flows if dst == node_id)

    @property
    def start(self) -> BpmnNode:
        return next(n for n in self.nodes if n.kind == START_EVENT)

    @property
    def end(self) -> BpmnNode:
        return next(n for n in self.nodes if n.kind == END_EVENT)


@dataclass(frozen=True)
class ElementCounts:
    tasks: int
    parallel_gateways: int
    exclusive_gateways: int


class _Builder:
    def __init__(self) -> None:
        self.nodes: list[BpmnNode] = []
        self.flows: set[tuple[str, str]] = set()

    def add(self, kind: str, label: str = "") -> str:
        node_id = f"n{len(self.nodes)}"
        self.nodes.append(BpmnNode(node_id, kind, label))
        return node_id

    def flow(self, src: str, dst: str) -> None:
        self.flows.add((src, dst))

    def build(self, tree: ProcessTree):
        """Return (entry, exit) node ids, or _PASS for a silent subtree."""
        if tree.kind == "tau":
            return _PASS
        if tree.kind == "leaf":
            node = self.add(TASK, tree.label or "")
            return node, node
        if tree.kind == "seq":
            segments = [self.build(c) for c in tree.children]
            real = [s for s in segments if s is not _PASS]
            if not real:
                return _PASS
            for (_, left_exit), (right_entry, _) in zip(real, real[1:]):
                self.flow(left_exit, right_entry)
            return real[0][0], real[-1][1]
        if tree.kind in ("xor", "par"):
            kind = XOR_GATEWAY if tree.kind == "xor" else PAR_GATEWAY
            split = self.add(kind)
            join = self.add(kind)
            for child in tree.children:
                segment = self.build(child)
                if segment is _PASS:
                    self.flow(split, join)
                else:
                    entry, exit_ = segment
                    self.flow(split, entry)
                    self.flow(exit_, join)
            return split, join
        # loop: exclusive join on entry, exclusive split on exit, redo
        # branches on back-edge paths from the split to the join.
        entry = self.add(XOR_GATEWAY)
        exit_ = self.add(XOR_GATEWAY)
        body = self.build(tree.children[0])
        if body is _PASS:
            self.flow(entry, exit_)
        else:
            self.flow(entry, body[0])
            self.flow(body[1], exit_)
        for redo in tree.children[1:]:
            segment = self.build(redo)
            if segment is _PASS:
                self.flow(exit_, entry)
            else:
                self.flow(exit_, segment[0])
                self.flow(segment[1], entry)
        return entry, exit_


def tree_to_bpmn(tree: ProcessTree) -> BpmnModel:
    """Structural recursion over the tree; ids are assigned in build order."""
    builder = _Builder()
    start = builder.add(START_EVENT)
    end = builder.add(END_EVENT)
    segment = builder.build(tree)
    if segment is _PASS:
        builder.flow(start, end)
    else:
        builder.flow(start, segment[0])
        builder.flow(segment[1], end)
    return BpmnModel(tuple(builder.nodes), frozenset(builder.flows))


def count_elements(model: BpmnModel) -> ElementCounts:
    tasks = sum(1 for n in model.nodes if n.kind == TASK)
    parallel = sum(1 for n in model.nodes if n.kind == PAR_GATEWAY)
    exclusive = sum(1 for n in model.nodes if n.kind == XOR_GATEWAY)
    return ElementCounts(tasks, parallel, exclusive)


def _node_index(node_id: str) -> int:
    return int(node_id[1:])


def export_dot(model: BpmnModel) -> str:
    """Deterministic DOT text: tasks as boxes, gateways as labeled diamonds."""
    lines = ["digraph bpmn {"]
    for node in sorted(model.nodes, key=lambda n: _node_index(n.id)):
        if node.kind == TASK:
            lines.append(f'  {node.id} [shape=box, label="{node.label}"];')
        elif node.kind == XOR_GATEWAY:
            lines.append(f'  {node.id} [shape=diamond, label="X"];')
        elif node.kind == PAR_GATEWAY:
            lines.append(f'  {node.id} [shape=diamond, label="+"];')
        elif node.kind == START_EVENT:
            lines.append(f'  {node.id} [shape=circle, label="start"];')
        else:
            lines.append(f'  {node.id} [shape=doublecircle, label="end"];')
    for src, dst in sorted(model.flows, key=lambda f: (_node_index(f[0]), _node_index(f[1]))):
        lines.append(f"  {src} -> {dst};")
    lines.append("}")
    return "\n".join(lines) + "\n"


_XML_TAGS = {
    START_EVENT: "startEvent",
    END_EVENT: "endEvent",
    TASK: "task",
    XOR_GATEWAY: "exclusiveGateway",
    PAR_GATEWAY: "parallelGateway",
}
_KIND_BY_TAG = {tag: kind for kind, tag in _XML_TAGS.items()}
_BPMN_NS = "http://www.omg.org/spec/BPMN/20100524/MODEL"


def export_xml(model: BpmnModel) -> str:
    """Minimal BPMN 2.0 XML; ids are stable so exports are byte-identical."""
    definitions = ET.Element(
        "definitions", {"xmlns": _BPMN_NS, "id": "definitions_1", "targetNamespace": _BPMN_NS}
    )
    process = ET.SubElement(definitions, "process", {"id": "process_1"})
    for node in model.nodes:
        attrs = {"id": node.id}
        if node.kind == TASK:
            attrs["name"] = node.label
        ET.SubElement(process, _XML_TAGS[node.kind], attrs)
    for idx, (src, dst) in enumerate(
        sorted(model.flows, key=lambda f: (_node_index(f[0]), _node_index(f[1])))
    ):
        ET.SubElement(
            process, "sequenceFlow", {"id": f"flow_{idx}", "sourceRef": src, "targetRef": dst}
        )
    ET.indent(definitions)
    return ET.tostring(definitions, encoding="unicode", xml_declaration=True) + "\n"


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_xml(text: str) -> BpmnModel:
    """Parse the subset written by export_xml back into a model."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise BpmnFormatError(f"not well-formed XML: {exc}") from exc
    if _local(root.tag) != "definitions":
        raise BpmnFormatError(f"expected <definitions>, got <{_local(root.tag)}>")
    processes = [el for el in root if _local(el.tag) == "process"]
    if len(processes) != 1:
        raise BpmnFormatError("expected exactly one <process>")
    nodes: list[BpmnNode] = []
    flows: set[tuple[str, str]] = set()
    ids: set[str] = set()
    for el in processes[0]:
        tag = _local(el.tag)
        if tag == "sequenceFlow":
            flows.add((el.attrib["sourceRef"], el.attrib["targetRef"]))
            continue
        if tag not in _KIND_BY_TAG:
            raise BpmnFormatError(f"unsupported element <{tag}>")
        node_id = el.attrib.get("id")
        if not node_id or node_id in ids:
            raise BpmnFormatError(f"missing or duplicate id on <{tag}>")
        ids.add(node_id)
        nodes.append(BpmnNode(node_id, _KIND_BY_TAG[tag], el.attrib.get("name", "")))
    for src, dst in flows:
        if src not in ids or dst not in ids:
            raise BpmnFormatError(f"flow {src} -> {dst} references unknown nodes")
    return BpmnModel(tuple(nodes), frozenset(flows))
