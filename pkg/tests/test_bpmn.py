import random

import pytest

from helpers import bpmn_language, random_process_tree
from phaseloop.bpmn import (
    PAR_GATEWAY,
    TASK,
    XOR_GATEWAY,
    BpmnFormatError,
    count_elements,
    export_dot,
    export_xml,
    parse_xml,
    tree_to_bpmn,
)
from phaseloop.trees import (
    TAU,
    enumerate_language,
    format_tree,
    leaf,
    loop,
    par,
    seq,
    tree_leaves,
    xor,
)

WORKED = seq(leaf("D"), xor(TAU, leaf("R")), leaf("C"), leaf("T"))


def non_tau_leaf_count(tree):
    if tree.kind == "leaf":
        return 1
    return sum(non_tau_leaf_count(c) for c in tree.children)


class TestConstruction:
    def test_single_task(self):
        model = tree_to_bpmn(leaf("A"))
        assert count_elements(model) == count_elements(model)
        counts = count_elements(model)
        assert (counts.tasks, counts.parallel_gateways, counts.exclusive_gateways) == (1, 0, 0)
        assert len(model.nodes) == 3
        assert len(model.flows) == 2

    def test_worked_example_counts(self):
        counts = count_elements(tree_to_bpmn(WORKED))
        assert counts.tasks == 4
        assert counts.exclusive_gateways == 2
        assert counts.parallel_gateways == 0

    def test_parallel_pair(self):
        counts = count_elements(tree_to_bpmn(par(leaf("A"), leaf("B"))))
        assert (counts.tasks, counts.parallel_gateways, counts.exclusive_gateways) == (2, 2, 0)

    def test_tau_only_tree_gives_bare_start_end(self):
        model = tree_to_bpmn(TAU)
        assert count_elements(model).tasks == 0
        assert model.flows == frozenset({(model.start.id, model.end.id)})

    def test_start_end_degree_invariants(self):
        rng = random.Random(5)
        for _ in range(30):
            tree = random_process_tree(rng, [f"P{i}" for i in range(6)], 3)
            model = tree_to_bpmn(tree)
            assert not model.incoming(model.start.id)
            assert not model.outgoing(model.end.id)
            for node in model.nodes:
                if node.kind == TASK:
                    assert len(model.incoming(node.id)) == 1
                    assert len(model.outgoing(node.id)) == 1

    def test_gateway_counts_are_even_and_tasks_match_leaves(self):
        rng = random.Random(6)
        for _ in range(40):
            tree = random_process_tree(rng, [f"P{i}" for i in range(7)], 3)
            counts = count_elements(tree_to_bpmn(tree))
            assert counts.exclusive_gateways % 2 == 0
            assert counts.parallel_gateways % 2 == 0
            assert counts.tasks == non_tau_leaf_count(tree)


class TestLanguagePreservation:
    def test_worked_example_paths(self):
        model = tree_to_bpmn(WORKED)
        assert bpmn_language(model, 5) == {("D", "C", "T"), ("D", "R", "C", "T")}

    def test_random_small_trees(self):
        rng = random.Random(13)
        checked = 0
        while checked < 20:
            labels = [chr(ord("a") + i) for i in range(rng.randint(2, 5))]
            tree = random_process_tree(rng, labels, 2)
            if not tree.is_operator:
                continue
            checked += 1
            model = tree_to_bpmn(tree)
            assert bpmn_language(model, 6) == enumerate_language(tree, 6), format_tree(tree)

    def test_loop_language(self):
        model = tree_to_bpmn(loop(leaf("A"), leaf("B")))
        assert bpmn_language(model, 5) == {("A",), ("A", "B", "A"), ("A", "B", "A", "B", "A")}


class TestDotExport:
    def test_deterministic_bytes(self):
        model = tree_to_bpmn(WORKED)
        assert export_dot(model) == export_dot(tree_to_bpmn(WORKED))

    def test_shapes_and_labels(self):
        dot = export_dot(tree_to_bpmn(par(leaf("A"), xor(TAU, leaf("B")))))
        assert 'label="A"' in dot and "shape=box" in dot
        assert 'label="X"' in dot and 'label="+"' in dot

    def test_leaf_model_is_three_nodes_two_edges(self):
        dot = export_dot(tree_to_bpmn(leaf("A")))
        assert dot.count("shape=") == 3
        assert dot.count("->") == 2


class TestXmlRoundTrip:
    def test_single_task(self):
        xml = export_xml(tree_to_bpmn(leaf("A")))
        assert "<task" in xml and 'name="A"' in xml

    def test_round_trip_structural_identity(self):
        rng = random.Random(21)
        for _ in range(25):
            tree = random_process_tree(rng, [f"P{i}" for i in range(6)], 3)
            model = tree_to_bpmn(tree)
            assert parse_xml(export_xml(model)) == model

    def test_loop_model_has_back_edge_flow(self):
        model = tree_to_bpmn(loop(leaf("A"), leaf("B")))
        xml = export_xml(model)
        parsed = parse_xml(xml)
        gateway_ids = [n.id for n in parsed.nodes if n.kind == XOR_GATEWAY]
        entry = next(g for g in gateway_ids if len(parsed.incoming(g)) >= 2)
        assert any(src != model.start.id for src in parsed.incoming(entry))

    def test_rejects_unsupported_elements(self):
        xml = (
            '<definitions xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL">'
            '<process id="p"><subProcess id="x"/></process></definitions>'
        )
        with pytest.raises(BpmnFormatError):
            parse_xml(xml)

    def test_rejects_dangling_flow(self):
        xml = (
            '<definitions xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL">'
            '<process id="p"><startEvent id="n0"/>'
            '<sequenceFlow id="f" sourceRef="n0" targetRef="ghost"/>'
            "</process></definitions>"
        )
        with pytest.raises(BpmnFormatError):
            parse_xml(xml)

    def test_export_is_deterministic(self):
        model = tree_to_bpmn(WORKED)
        assert export_xml(model) == export_xml(model)
