import random

import pytest

from helpers import parse_description_text, random_process_tree
from phaseloop.bpmn import BpmnModel, BpmnNode, tree_to_bpmn
from phaseloop.describe import (
    Message,
    UnstructuredModelError,
    describe_model,
    plan_text,
    realize_text,
)
from phaseloop.trees import TAU, leaf, loop, par, seq, tree_leaves, xor

WORKED = seq(leaf("D"), xor(TAU, leaf("R")), leaf("C"), leaf("T"))


def kinds(messages):
    return [m.kind for m in messages]


class TestPlanText:
    def test_single_task(self):
        messages = plan_text(tree_to_bpmn(leaf("A")))
        assert kinds(messages) == ["start", "task", "end"]
        assert messages[1].phase == "A"

    def test_worked_example_collapses_optional(self):
        messages = plan_text(tree_to_bpmn(WORKED))
        assert kinds(messages) == ["start", "task", "optional_task", "task", "task", "end"]
        assert [m.phase for m in messages[1:-1]] == ["D", "R", "C", "T"]

    def test_parallel_block(self):
        messages = plan_text(tree_to_bpmn(par(leaf("A"), leaf("B"))))
        assert kinds(messages) == ["start", "parallel", "end"]
        assert messages[1].branches == ("A", "B")

    def test_choice_block(self):
        messages = plan_text(tree_to_bpmn(xor(leaf("A"), leaf("B"), leaf("C"))))
        assert kinds(messages) == ["start", "choice", "end"]
        assert messages[1].branches == ("A", "B", "C")

    def test_loop_block(self):
        messages = plan_text(tree_to_bpmn(loop(leaf("A"), leaf("B"))))
        assert kinds(messages) == ["start", "loop", "end"]
        assert messages[1].body == "A"
        assert messages[1].branches == ("B",)

    def test_flower_block(self):
        messages = plan_text(tree_to_bpmn(loop(TAU, leaf("A"), leaf("B"))))
        assert kinds(messages) == ["start", "loop", "end"]
        assert messages[1].body == "nothing"

    def test_positions_are_sequential(self):
        messages = plan_text(tree_to_bpmn(WORKED))
        assert [m.position for m in messages] == list(range(len(messages)))

    def test_unstructured_model_rejected(self):
        # an exclusive split whose branches never reconverge
        nodes = (
            BpmnNode("n0", "start"),
            BpmnNode("n1", "end"),
            BpmnNode("n2", "exclusive_gateway"),
            BpmnNode("n3", "task", "A"),
            BpmnNode("n4", "end"),
        )
        # second end event makes the model invalid for planning
        flows = frozenset({("n0", "n2"), ("n2", "n3"), ("n3", "n1"), ("n2", "n4")})
        with pytest.raises(UnstructuredModelError):
            plan_text(BpmnModel(nodes, flows))


class TestRealizeText:
    def test_single_task_sentence(self):
        desc = realize_text(
            [Message("start", 0), Message("task", 1, phase="Coding"), Message("end", 2)]
        )
        assert desc.text == "The process starts. First, Coding is performed. The process ends."
        assert desc.sentence_count == 3

    def test_worked_example_golden_text(self):
        desc = describe_model(tree_to_bpmn(WORKED))
        assert desc.text == (
            "The process starts. First, D is performed. Optionally, R is performed. "
            "Then, C is performed. Then, T is performed. The process ends."
        )

    def test_empty_process(self):
        desc = describe_model(tree_to_bpmn(TAU))
        assert desc.text == "The process starts. The process ends."
        assert desc.sentence_count == 2

    def test_deterministic(self):
        model = tree_to_bpmn(WORKED)
        assert describe_model(model).text == describe_model(model).text

    def test_choice_and_parallel_sentences(self):
        choice = describe_model(tree_to_bpmn(xor(leaf("A"), leaf("B"))))
        assert "Next, exactly one of the following is performed: A, B." in choice.text
        parallel = describe_model(tree_to_bpmn(par(leaf("A"), leaf("B"))))
        assert "Next, the following are performed in any order: A, B." in parallel.text

    def test_loop_sentence(self):
        desc = describe_model(tree_to_bpmn(loop(leaf("A"), leaf("B"))))
        assert "Next, A; this may repeat after B." in desc.text


class TestCoverageAndFaithfulness:
    def test_every_task_label_appears(self):
        rng = random.Random(17)
        for _ in range(30):
            tree = random_process_tree(rng, [f"P{i}" for i in range(7)], 3)
            desc = describe_model(tree_to_bpmn(tree))
            for label in tree_leaves(tree):
                assert label in desc.text, (label, desc.text)

    def test_templates_invert_on_flat_models(self):
        flat_trees = [
            leaf("A"),
            WORKED,
            seq(leaf("A"), xor(leaf("B"), leaf("C")), leaf("D")),
            seq(par(leaf("A"), leaf("B")), leaf("C")),
            loop(leaf("A"), leaf("B")),
            seq(leaf("A"), loop(leaf("B"), leaf("C")), leaf("D")),
            TAU,
        ]
        for tree in flat_trees:
            messages = plan_text(tree_to_bpmn(tree))
            desc = realize_text(messages)
            assert parse_description_text(desc.text) == messages

    def test_one_connective_sentence_per_gateway_block(self):
        tree = seq(xor(leaf("A"), leaf("B")), par(leaf("C"), leaf("D")), loop(leaf("E"), leaf("F")))
        messages = plan_text(tree_to_bpmn(tree))
        assert kinds(messages) == ["start", "choice", "parallel", "loop", "end"]
