"""Instance execution: simulated compilation or a minimal chat chain.

Simulated mode draws success from a hidden ground-truth process model with
configurable true/false-positive rates, reproducing the observation that
compilation feedback is noisy in both directions.  Chat-chain mode walks
the instance phase by phase, running instructor/assistant dialogues over a
pluggable backend and compiling whatever code the dialogues deposit.
"""

from __future__ import annotations

import enum
import re
import random
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .phases import DEFAULT_VOCABULARY, Instance
from .trees import TAU, ProcessTree, accepts, leaf, parse_tree, seq, xor


class Role(enum.Enum):
    CEO = "CEO"
    CPO = "CPO"
    CTO = "CTO"
    PROGRAMMER = "Programmer"
    REVIEWER = "Reviewer"
    DESIGNER = "Designer"
    TESTER = "Tester"


TERMINAL_PATTERN = re.compile(r"<SOLUTION>(.*?)</SOLUTION>", re.DOTALL)

# Dialogue backend: (system prompt, prior turns) -> next utterance.
ChatBackend = Callable[[str, list[tuple[str, str]]], str]


class NoConsensusError(RuntimeError):
    """No terminal message after the turn limit and all reflection rounds."""


@dataclass(frozen=True)
class RoleMap:
    """Instructor/assistant pair per phase, with a fallback for unknown ones."""

    assignments: tuple[tuple[str, tuple[Role, Role]], ...]
    fallback: tuple[Role, Role] = (Role.CEO, Role.PROGRAMMER)

    def roles_for(self, phase: str) -> tuple[Role, Role]:
        for name, pair in self.assignments:
            if name == phase:
                return pair
        return self.fallback


def default_role_map() -> RoleMap:
    pairs: list[tuple[str, tuple[Role, Role]]] = []
    for phase in ("DemandAnalysis", "LanguageChoose", "DesignReview"):
        pairs.append((phase, (Role.CEO, Role.CTO)))
    for phase in ("Coding", "CodeComplete", "Annotation", "CodeConclusion"):
        pairs.append((phase, (Role.CTO, Role.PROGRAMMER)))
    for phase in ("CodeReviewComment", "CommentJudgement", "CodeReviewModification"):
        pairs.append((phase, (Role.PROGRAMMER, Role.REVIEWER)))
    for phase in ("TestErrorSummary", "TestModification"):
        pairs.append((phase, (Role.PROGRAMMER, Role.TESTER)))
    for phase in ("EnvironmentDoc", "Manual"):
        pairs.append((phase, (Role.CEO, Role.CPO)))
    return RoleMap(tuple(pairs))


DEFAULT_ROLE_MAP = default_role_map()


@dataclass(frozen=True)
class ChatRecord:
    phase: str
    turns: tuple[tuple[Role, str], ...]
    consensus: bool
    reflected: bool

    @property
    def solution(self) -> str | None:
        for _, utterance in reversed(self.turns):
            match = TERMINAL_PATTERN.search(utterance)
            if match:
                return match.group(1).strip()
        return None


def default_hidden_model() -> ProcessTree:
    """Fourteen phases in lifecycle order, three of them skippable."""
    optional = {"Annotation", "CodeReviewModification", "TestModification"}
    children = [
        xor(TAU, leaf(name)) if name in optional else leaf(name)
        for name in DEFAULT_VOCABULARY.names
    ]
    return seq(*children)


def load_hidden_model(text_or_path: str | Path) -> ProcessTree:
    """Parse a tree expression, reading it from disk when given a path."""
    path = Path(text_or_path)
    if path.exists():
        return parse_tree(path.read_text(encoding="utf-8").strip())
    return parse_tree(str(text_or_path))


@dataclass
class SimulatedEnvironment:
    """Noisy compiler: conforming instances pass with p_true, others p_false."""

    hidden_model: ProcessTree = field(default_factory=default_hidden_model)
    p_true: float = 0.7
    p_false: float = 0.1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_false < self.p_true <= 1.0:
            raise ValueError("need 0 <= p_false < p_true <= 1")
        self.reset()

    def reset(self) -> None:
        self._rng = random.Random(self.rng_seed)
        self._conformance: dict[tuple[str, ...], bool] = {}

    def fork(self, rng_seed: int) -> "SimulatedEnvironment":
        return SimulatedEnvironment(self.hidden_model, self.p_true, self.p_false, rng_seed)

    def conforms(self, inst: Instance) -> bool:
        cached = self._conformance.get(inst.phases)
        if cached is None:
            cached = accepts(self.hidden_model, inst.phases)
            self._conformance[inst.phases] = cached
        return cached


def simulated_compile(env: SimulatedEnvironment, inst: Instance) -> bool:
    """One noisy compile draw; deterministic given the seed and call order."""
    p = env.p_true if env.conforms(inst) else env.p_false
    return env._rng.random() < p


def _render_memory(context: Sequence[ChatRecord]) -> str:
    lines = []
    for record in context:
        for role, utterance in record.turns:
            lines.append(f"[{record.phase}] {role.value}: {utterance}")
    return "\n".join(lines)


def run_chat(
    phase: str,
    roles: tuple[Role, Role],
    context: Sequence[ChatRecord],
    backend: ChatBackend,
    *,
    turn_limit: int = 6,
    max_reflections: int = 2,
    phase_explanation: str = "",
) -> ChatRecord:
    """Alternate instructor/assistant turns until a terminal message appears.

    If the turn limit passes without one, up to max_reflections extra rounds
    re-ask the assistant to restate a conclusion in the terminal format.
    Raises NoConsensusError when everything is exhausted.
    """
    instructor, assistant = roles
    memory = _render_memory(context)
    base_prompt = (
        f"Phase: {phase}. {phase_explanation}\n"
        f"Instructor: {instructor.value}. Assistant: {assistant.value}.\n"
        "Close the discussion with a terminal message of the exact form "
        "<SOLUTION> ... </SOLUTION> once you reach consensus.\n"
        f"Prior dialogue:\n{memory}"
    )
    turns: list[tuple[Role, str]] = []
    history: list[tuple[str, str]] = []
    for turn in range(turn_limit):
        speaker = instructor if turn % 2 == 0 else assistant
        utterance = backend(f"You are the {speaker.value}.\n{base_prompt}", list(history))
        turns.append((speaker, utterance))
        history.append((speaker.value, utterance))
        if TERMINAL_PATTERN.search(utterance):
            return ChatRecord(phase, tuple(turns), consensus=True, reflected=False)
    reflection_prompt = (
        f"You are the {assistant.value}.\n"
        "Revisit the dialogue above and restate your conclusion as a terminal "
        "message of the exact form <SOLUTION> ... </SOLUTION>.\n"
        f"{base_prompt}"
    )
    for _ in range(max_reflections):
        utterance = backend(reflection_prompt, list(history))
        turns.append((assistant, utterance))
        history.append((assistant.value, utterance))
        if TERMINAL_PATTERN.search(utterance):
            return ChatRecord(phase, tuple(turns), consensus=True, reflected=True)
    raise NoConsensusError(f"no terminal message for phase {phase}")


@dataclass
class ChatChain:
    """Settings for phase-by-phase chat execution."""

    backend: ChatBackend
    compile_cmd: tuple[str, ...]
    role_map: RoleMap = DEFAULT_ROLE_MAP
    workspace_root: Path | None = None
    turn_limit: int = 6
    max_reflections: int = 2


_ARTIFACT_PHASES = ("Coding", "CodeComplete")


@dataclass(frozen=True)
class ExecutionResult:
    instance: Instance
    success: bool
    per_phase: tuple[ChatRecord, ...]
    notes: str = ""


def execute_instance(
    inst: Instance,
    mode: SimulatedEnvironment | ChatChain,
    rng: random.Random | None = None,
) -> ExecutionResult:
    """Run one instance to completion and report compile success."""
    if isinstance(mode, SimulatedEnvironment):
        success = simulated_compile(mode, inst)
        return ExecutionResult(inst, success, (), notes="simulated")

    workspace = Path(
        tempfile.mkdtemp(prefix="phaseloop-", dir=mode.workspace_root)
    )
    records: list[ChatRecord] = []
    for phase in inst.phases:
        explanation = (
            DEFAULT_VOCABULARY.explanation(phase) if phase in DEFAULT_VOCABULARY else ""
        )
        try:
            record = run_chat(
                phase,
                mode.role_map.roles_for(phase),
                records,
                mode.backend,
                turn_limit=mode.turn_limit,
                max_reflections=mode.max_reflections,
                phase_explanation=explanation,
            )
        except NoConsensusError as exc:
            return ExecutionResult(inst, False, tuple(records), notes=str(exc))
        records.append(record)
        if phase in _ARTIFACT_PHASES and record.solution is not None:
            (workspace / f"{phase}.py").write_text(record.solution + "\n", encoding="utf-8")
    # A missing compiler is an error, not a failed run; let it propagate.
    proc = subprocess.run(
        list(mode.compile_cmd), cwd=workspace, capture_output=True, text=True
    )
    success = proc.returncode == 0
    note = "compiled" if success else f"compile exited {proc.returncode}"
    return ExecutionResult(inst, success, tuple(records), notes=note)
