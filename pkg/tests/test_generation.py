import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from phaseloop.describe import ProcessDescription
from phaseloop.generation import (
    DEFAULT_HALLUCINATION_PHASES,
    EmptyGenerationError,
    GeneratorConfig,
    LlmBackend,
    LlmHttpError,
    MissingApiKeyError,
    MockBackend,
    PromptSpec,
    build_prompt,
    llm_generate,
    mock_generate,
    parse_generation,
    with_enhancement,
)
from phaseloop.orchestrator import default_hidden_model
from phaseloop.phases import (
    DEFAULT_INSTANCE,
    DEFAULT_VOCABULARY,
    Instance,
    diversity,
    unknown_phases,
)


def inst(*names):
    return Instance(tuple(names))


class TestPromptSpec:
    def test_requires_distinct_experiential_instances(self):
        with pytest.raises(ValueError):
            PromptSpec("task", DEFAULT_VOCABULARY, (inst("A"), inst("A")))

    def test_enhanced_flag(self):
        plain = PromptSpec("task", DEFAULT_VOCABULARY, (inst("A"),))
        enhanced = PromptSpec(
            "task",
            DEFAULT_VOCABULARY,
            (inst("A"),),
            process_description=ProcessDescription("The process starts. The process ends.", 2),
        )
        assert not plain.enhanced and enhanced.enhanced


class TestBuildPrompt:
    def spec(self, description=None):
        return PromptSpec(
            "Develop a tetris game",
            DEFAULT_VOCABULARY,
            (DEFAULT_INSTANCE, inst("Coding")),
            process_description=description,
        )

    def test_four_sections_without_description(self):
        prompt = build_prompt(self.spec())
        headers = [line for line in prompt.splitlines() if line.endswith(":") and " " not in line.rstrip(":").replace(" ", "")]
        assert "User Task:" in prompt
        assert "Phase Explanations:" in prompt
        assert "Experiential Instances:" in prompt
        assert "Output Format:" in prompt
        assert "Process Description:" not in prompt

    def test_enhanced_adds_fifth_section_between_instances_and_format(self):
        desc = ProcessDescription("The process starts. The process ends.", 2)
        prompt = build_prompt(self.spec(desc))
        i_instances = prompt.index("Experiential Instances:")
        i_desc = prompt.index("Process Description:")
        i_format = prompt.index("Output Format:")
        assert i_instances < i_desc < i_format
        assert desc.text in prompt

    def test_deterministic(self):
        assert build_prompt(self.spec()) == build_prompt(self.spec())

    def test_distinct_inputs_distinct_prompts(self):
        other = PromptSpec(
            "Develop a sudoku game", DEFAULT_VOCABULARY, (DEFAULT_INSTANCE, inst("Coding"))
        )
        assert build_prompt(self.spec()) != build_prompt(other)

    def test_contains_explanations_and_serialized_instances(self):
        prompt = build_prompt(self.spec())
        assert "DemandAnalysis: " in prompt
        assert "DemandAnalysis -> LanguageChoose" in prompt


class TestParseGeneration:
    def test_extracts_arrow_lines_from_prose(self):
        raw = "Sure! Here:\nDesigning → Coding → Testing"
        assert parse_generation(raw) == [inst("Designing", "Coding", "Testing")]

    def test_no_arrows_means_no_instances(self):
        assert parse_generation("no arrows here") == []

    def test_two_lines_in_order(self):
        raw = "A -> B\nsome commentary\nC -> D"
        assert parse_generation(raw) == [inst("A", "B"), inst("C", "D")]

    def test_bad_arrow_lines_are_skipped_and_collected(self):
        skipped = []
        raw = "A -> -> B\nA -> B"
        assert parse_generation(raw, skipped) == [inst("A", "B")]
        assert skipped == ["A -> -> B"]

    def test_never_raises_on_arbitrary_text(self):
        for text in ("", "-> ->", "a b -> c d", "→", "x,y -> z"):
            parse_generation(text)


class TestMockGenerate:
    def test_temperature_zero_copies_seeds(self):
        cfg = MockBackend((DEFAULT_INSTANCE,), rng_seed=3)
        out = mock_generate(cfg, 0.0, 50)
        assert all(o == DEFAULT_INSTANCE for o in out)
        assert all(diversity(o, DEFAULT_INSTANCE) == 0.0 for o in out)

    def test_high_temperature_more_diverse_than_low(self):
        cfg = MockBackend((DEFAULT_INSTANCE,), rng_seed=3)
        low = mock_generate(cfg, 0.2, 100)
        high = mock_generate(cfg, 1.4, 100)
        mean = lambda xs: sum(xs) / len(xs)
        assert mean([diversity(o, DEFAULT_INSTANCE) for o in high]) > mean(
            [diversity(o, DEFAULT_INSTANCE) for o in low]
        )

    def test_inserted_phases_come_from_hallucination_vocab(self):
        cfg = MockBackend((DEFAULT_INSTANCE,), rng_seed=9)
        for out in mock_generate(cfg, 1.4, 200):
            for phase in unknown_phases(out, DEFAULT_VOCABULARY):
                assert phase in DEFAULT_HALLUCINATION_PHASES

    def test_reproducible_under_seed(self):
        cfg = MockBackend((DEFAULT_INSTANCE,), rng_seed=11)
        assert mock_generate(cfg, 0.8, 25) == mock_generate(cfg, 0.8, 25)

    def test_never_below_length_one(self):
        cfg = MockBackend((inst("A"),), rng_seed=2)
        for out in mock_generate(cfg, 1.5, 200):
            assert len(out) >= 1

    def test_conformance_constraint_reverts_breaking_edits(self):
        model = default_hidden_model()
        cfg = MockBackend((DEFAULT_INSTANCE,), rng_seed=5, conform_to=model)
        from phaseloop.trees import accepts

        for out in mock_generate(cfg, 1.4, 150):
            assert accepts(model, out.phases)

    def test_temperature_range_enforced(self):
        cfg = MockBackend((DEFAULT_INSTANCE,))
        with pytest.raises(ValueError):
            mock_generate(cfg, 1.6, 1)
        with pytest.raises(ValueError):
            mock_generate(cfg, 0.5, 0)

    def test_generator_config_validation(self):
        with pytest.raises(ValueError):
            GeneratorConfig(MockBackend((DEFAULT_INSTANCE,)), temperature=2.0)
        with pytest.raises(ValueError):
            MockBackend(())

    def test_with_enhancement_swaps_seeds_and_model(self):
        cfg = GeneratorConfig(MockBackend((DEFAULT_INSTANCE,)))
        model = default_hidden_model()
        enhanced = with_enhancement(cfg, (inst("Coding"),), model)
        assert enhanced.backend.seed_instances == (inst("Coding"),)
        assert enhanced.backend.conform_to is model


class _StubHandler(BaseHTTPRequestHandler):
    payload: dict = {}
    status: int = 200
    requests: list = []

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        _StubHandler.requests.append(json.loads(self.rfile.read(length)))
        body = json.dumps(_StubHandler.payload).encode()
        self.send_response(_StubHandler.status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.requests = []
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()


class TestLlmGenerate:
    def backend(self, url):
        return LlmBackend(endpoint=url, model="stub-model", api_key_env="PHASELOOP_TEST_KEY")

    def test_missing_api_key_before_any_network(self, monkeypatch):
        monkeypatch.delenv("PHASELOOP_TEST_KEY", raising=False)
        cfg = self.backend("http://127.0.0.1:1/unreachable")
        with pytest.raises(MissingApiKeyError):
            llm_generate(cfg, "prompt", 0.6)

    def test_parses_stub_response(self, stub_server, monkeypatch):
        monkeypatch.setenv("PHASELOOP_TEST_KEY", "k")
        _StubHandler.status = 200
        _StubHandler.payload = {
            "choices": [{"message": {"content": "Here you go:\nA → B"}}]
        }
        out = llm_generate(self.backend(stub_server), "prompt text", 0.4)
        assert out == [inst("A", "B")]
        sent = _StubHandler.requests[-1]
        assert sent["model"] == "stub-model"
        assert sent["temperature"] == 0.4
        assert sent["messages"] == [{"role": "user", "content": "prompt text"}]

    def test_http_error_status(self, stub_server, monkeypatch):
        monkeypatch.setenv("PHASELOOP_TEST_KEY", "k")
        _StubHandler.status = 500
        _StubHandler.payload = {}
        with pytest.raises(LlmHttpError) as err:
            llm_generate(self.backend(stub_server), "prompt", 0.6)
        assert err.value.status == 500

    def test_unreachable_endpoint(self, monkeypatch):
        monkeypatch.setenv("PHASELOOP_TEST_KEY", "k")
        cfg = self.backend("http://127.0.0.1:9/unreachable")
        with pytest.raises(LlmHttpError):
            llm_generate(cfg, "prompt", 0.6)

    def test_empty_generation(self, stub_server, monkeypatch):
        monkeypatch.setenv("PHASELOOP_TEST_KEY", "k")
        _StubHandler.status = 200
        _StubHandler.payload = {"choices": [{"message": {"content": "no instances, sorry"}}]}
        with pytest.raises(EmptyGenerationError):
            llm_generate(self.backend(stub_server), "prompt", 0.6)
