"""Prompt assembly and the two instance-generator backends.

The mock backend mutates seed instances (hallucinated-phase insertion,
adjacent swaps, deletions) with probabilities scaled by temperature, so
downstream filtering sees the same three noise classes a real generator
produces.  The HTTP backend posts a chat-completion request and parses
arrow lines out of whatever text comes back.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, replace

import requests

from .describe import ProcessDescription
from .phases import (
    Instance,
    InstanceParseError,
    PhaseVocabulary,
    parse_instance,
    serialize_instance,
)
from .trees import ProcessTree, accepts

DEFAULT_OUTPUT_NOTE = (
    "Reply with one instance per line, joining phase names with the arrow symbol '->'."
)

# Erroneous phases observed in unfiltered models; the mock draws inserted
# phases from this list so hallucination detection has something to find.
DEFAULT_HALLUCINATION_PHASES = (
    "UsernameSet",
    "ExternalReview",
    "Comments",
    "EmailSet",
    "EmploymentDoc",
)

TEMPERATURE_MAX = 1.5

_WEIGHT_INSERT = 1.0
_WEIGHT_SWAP = 1.0
_WEIGHT_DELETE = 0.5


class MissingApiKeyError(RuntimeError):
    """The configured API-key environment variable is unset."""


class LlmHttpError(RuntimeError):
    def __init__(self, status: int | None, message: str) -> None:
        super().__init__(message)
        self.status = status


class LlmTimeoutError(RuntimeError):
    """The endpoint did not answer within the configured timeout."""


class EmptyGenerationError(RuntimeError):
    """The response contained no parseable instance."""


@dataclass(frozen=True)
class PromptSpec:
    user_task: str
    phase_explanations: PhaseVocabulary
    experiential_instances: tuple[Instance, ...]
    output_format_note: str = DEFAULT_OUTPUT_NOTE
    process_description: ProcessDescription | None = None

    def __post_init__(self) -> None:
        serialized = [serialize_instance(i) for i in self.experiential_instances]
        if len(set(serialized)) != len(serialized):
            raise ValueError("experiential instances must be pairwise distinct")

    @property
    def enhanced(self) -> bool:
        return self.process_description is not None


def build_prompt(spec: PromptSpec) -> str:
    """Labeled sections in fixed order; enhanced prompts add a fifth section."""
    sections = [
        "User Task:\n" + spec.user_task,
        "Phase Explanations:\n"
        + "\n".join(f"{name}: {explanation}" for name, explanation in spec.phase_explanations.entries),
        "Experiential Instances:\n"
        + "\n".join(serialize_instance(inst) for inst in spec.experiential_instances),
    ]
    if spec.process_description is not None:
        sections.append("Process Description:\n" + spec.process_description.text)
    sections.append("Output Format:\n" + spec.output_format_note)
    return "\n\n".join(sections) + "\n"


def parse_generation(raw: str, skipped: list[str] | None = None) -> list[Instance]:
    """Extract instances from arrow-bearing lines; prose lines are ignored.

    Lines that carry an arrow but fail to parse are skipped and, when a
    collector list is supplied, appended to it for diagnostics.
    """
    out: list[Instance] = []
    for line in raw.splitlines():
        if "→" not in line and "->" not in line:
            continue
        try:
            out.append(parse_instance(line))
        except InstanceParseError:
            if skipped is not None:
                skipped.append(line)
    return out


@dataclass(frozen=True)
class MockBackend:
    """Seeded mutation generator standing in for a live model."""

    seed_instances: tuple[Instance, ...]
    hallucination_vocab: tuple[str, ...] = DEFAULT_HALLUCINATION_PHASES
    rng_seed: int = 0
    conform_to: ProcessTree | None = None  # enhanced mode: reject edits the model rejects
    insert_weight: float = _WEIGHT_INSERT
    swap_weight: float = _WEIGHT_SWAP
    delete_weight: float = _WEIGHT_DELETE
    # Place each hallucinated phase at a position derived from its name, the
    # way a generator inserts a plausible-sounding phase at a plausible spot,
    # instead of uniformly at random.
    stable_insert_positions: bool = False

    def __post_init__(self) -> None:
        if not self.seed_instances:
            raise ValueError("mock backend needs at least one seed instance")
        if not self.hallucination_vocab:
            raise ValueError("mock backend needs a hallucination vocabulary")
        for weight in (self.insert_weight, self.swap_weight, self.delete_weight):
            if weight < 0:
                raise ValueError("mutation weights must be non-negative")


@dataclass(frozen=True)
class LlmBackend:
    endpoint: str
    model: str
    api_key_env: str
    timeout_s: float = 30.0
    retries: int = 0

    def __post_init__(self) -> None:
        if self.retries not in (0, 1):
            raise ValueError("at most one retry is supported")


@dataclass(frozen=True)
class GeneratorConfig:
    backend: MockBackend | LlmBackend
    temperature: float = 0.6

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= TEMPERATURE_MAX:
            raise ValueError(f"temperature must be in [0, {TEMPERATURE_MAX}]")


def _mutate(phases: list[str], rng: random.Random, p: float, cfg: "MockBackend") -> list[str]:
    def keep(candidate: list[str]) -> bool:
        return cfg.conform_to is None or accepts(cfg.conform_to, tuple(candidate))

    if rng.random() < p * cfg.insert_weight:
        inserted = list(phases)
        phase = rng.choice(cfg.hallucination_vocab)
        if cfg.stable_insert_positions:
            anchor = sum(ord(ch) for ch in phase) % 97 / 97.0
            position = round(anchor * len(inserted))
        else:
            position = rng.randrange(len(inserted) + 1)
        inserted.insert(position, phase)
        if keep(inserted):
            phases = inserted
    if rng.random() < p * cfg.swap_weight and len(phases) >= 2:
        swapped = list(phases)
        i = rng.randrange(len(swapped) - 1)
        swapped[i], swapped[i + 1] = swapped[i + 1], swapped[i]
        if keep(swapped):
            phases = swapped
    if rng.random() < p * cfg.delete_weight and len(phases) >= 2:
        trimmed = list(phases)
        del trimmed[rng.randrange(len(trimmed))]
        if keep(trimmed):
            phases = trimmed
    return phases


def mock_generate(cfg: MockBackend, temperature: float, count: int) -> list[Instance]:
    """Deterministic under (rng_seed, temperature, count).

    At temperature 0 every output is an exact seed copy; the expected
    mutation load grows linearly with temperature.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0.0 <= temperature <= TEMPERATURE_MAX:
        raise ValueError(f"temperature must be in [0, {TEMPERATURE_MAX}]")
    rng = random.Random(f"{cfg.rng_seed}:{temperature}:{count}")
    p = temperature / TEMPERATURE_MAX
    out: list[Instance] = []
    for _ in range(count):
        seed = rng.choice(cfg.seed_instances)
        phases = _mutate(list(seed.phases), rng, p, cfg)
        out.append(Instance(tuple(phases)))
    return out


def llm_generate(cfg: LlmBackend, prompt: str, temperature: float) -> list[Instance]:
    """POST a chat-completion request and parse the reply into instances."""
    key = os.environ.get(cfg.api_key_env)
    if not key:
        raise MissingApiKeyError(f"environment variable {cfg.api_key_env} is not set")
    payload = {
        "model": cfg.model,
        "temperature": temperature,
        "messages": [{"role": "user", "content": prompt}],
    }
    attempts = cfg.retries + 1
    last_error: Exception | None = None
    for _ in range(attempts):
        try:
            response = requests.post(
                cfg.endpoint,
                json=payload,
                timeout=cfg.timeout_s,
                headers={"Authorization": f"Bearer {key}"},
            )
        except requests.Timeout as exc:
            raise LlmTimeoutError(f"no response within {cfg.timeout_s}s") from exc
        except requests.ConnectionError as exc:
            raise LlmHttpError(None, f"cannot reach {cfg.endpoint}: {exc}") from exc
        if not 200 <= response.status_code < 300:
            raise LlmHttpError(response.status_code, f"endpoint returned {response.status_code}")
        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise EmptyGenerationError(f"unrecognized response shape: {exc}") from exc
        instances = parse_generation(text)
        if instances:
            return instances
        last_error = EmptyGenerationError("response contained no parseable instance")
    raise last_error  # type: ignore[misc]


def generate_instances(config: GeneratorConfig, spec: PromptSpec, count: int) -> list[Instance]:
    """Dispatch to the configured backend."""
    if isinstance(config.backend, MockBackend):
        return mock_generate(config.backend, config.temperature, count)
    return llm_generate(config.backend, build_prompt(spec), config.temperature)


def with_enhancement(
    config: GeneratorConfig,
    seeds: tuple[Instance, ...],
    conform_to: ProcessTree | None,
) -> GeneratorConfig:
    """New config whose mock backend draws from the given seeds and model."""
    if isinstance(config.backend, MockBackend) and seeds:
        backend = replace(config.backend, seed_instances=seeds, conform_to=conform_to)
        return replace(config, backend=backend)
    return config
