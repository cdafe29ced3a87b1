"""Phase vocabulary, process instances, and the instance diversity metric.

An instance is an ordered sequence of development phase names
("DemandAnalysis -> Coding -> Manual").  Instances are parsed from and
serialized to arrow-joined text; diversity scores an instance against the
default 14-phase sequence by how much its phase set and adjacency order
changed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

ARROW = "→"
ASCII_ARROW = "->"


class InstanceParseError(ValueError):
    """A phase-sequence string cannot be parsed into an instance."""


class EmptySegmentError(InstanceParseError):
    """An arrow with nothing on one side (leading, trailing, or doubled)."""


class NoPhasesError(InstanceParseError):
    """The text contains no phases at all."""


def _check_phase_name(name: str) -> str:
    if not isinstance(name, str) or not name:
        raise ValueError("phase name must be a non-empty string")
    if ARROW in name or ASCII_ARROW in name or "," in name:
        raise ValueError(f"phase name {name!r} contains a reserved token")
    if any(ch.isspace() for ch in name):
        raise ValueError(f"phase name {name!r} contains whitespace")
    return name


@dataclass(frozen=True)
class Instance:
    """An ordered, non-empty sequence of phase names. Duplicates allowed."""

    phases: tuple[str, ...]

    def __post_init__(self) -> None:
        phases = tuple(self.phases)
        if not phases:
            raise ValueError("an instance needs at least one phase")
        for name in phases:
            _check_phase_name(name)
        object.__setattr__(self, "phases", phases)

    def __len__(self) -> int:
        return len(self.phases)

    def __iter__(self) -> Iterator[str]:
        return iter(self.phases)

    def __getitem__(self, idx):
        return self.phases[idx]

    def __str__(self) -> str:
        return serialize_instance(self)


@dataclass(frozen=True)
class PhaseVocabulary:
    """Ordered (name, explanation) pairs; order defines the default instance."""

    entries: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        entries = tuple((str(n), str(e)) for n, e in self.entries)
        if not entries:
            raise ValueError("vocabulary needs at least one entry")
        names = [n for n, _ in entries]
        for name in names:
            _check_phase_name(name)
        if len(set(names)) != len(names):
            raise ValueError("vocabulary phase names must be unique")
        object.__setattr__(self, "entries", entries)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.entries)

    def __contains__(self, name: str) -> bool:
        return any(n == name for n, _ in self.entries)

    def explanation(self, name: str) -> str:
        for n, e in self.entries:
            if n == name:
                return e
        raise KeyError(name)

    @property
    def default_instance(self) -> Instance:
        return Instance(self.names)

    def extended(self, extra: Iterable[tuple[str, str]]) -> "PhaseVocabulary":
        return PhaseVocabulary(self.entries + tuple(extra))


# The 14 canonical phases, in lifecycle row order:
# requirements -> design -> construction -> quality -> maintenance.
DEFAULT_PHASE_ENTRIES: tuple[tuple[str, str], ...] = (
    ("DemandAnalysis", "Clarify the user requirement and decide what the software must do."),
    ("LanguageChoose", "Select the programming language and core technology for the project."),
    ("DesignReview", "Review the proposed architecture and interface design before coding starts."),
    ("Coding", "Write the source code that implements the agreed design."),
    ("CodeComplete", "Fill in remaining gaps so the code base builds as a whole."),
    ("Annotation", "Add clarifying comments to the source code."),
    ("CodeConclusion", "Summarize the implemented code and confirm it matches the plan."),
    ("CodeReviewComment", "Inspect the code and raise review comments on defects or style."),
    ("CommentJudgement", "Judge which review comments are valid and need action."),
    ("CodeReviewModification", "Modify the code to resolve the accepted review comments."),
    ("TestErrorSummary", "Run the tests and summarize the observed errors."),
    ("TestModification", "Fix the code so the summarized test errors disappear."),
    ("EnvironmentDoc", "Document the runtime environment and dependency requirements."),
    ("Manual", "Write the user manual describing how to operate the software."),
)

DEFAULT_VOCABULARY = PhaseVocabulary(DEFAULT_PHASE_ENTRIES)
DEFAULT_INSTANCE = DEFAULT_VOCABULARY.default_instance


def load_vocabulary(path: str | Path) -> PhaseVocabulary:
    """Load a vocabulary from a JSON array of {"name", "explanation"} objects."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError("vocabulary file must contain a JSON array")
    entries = []
    for item in data:
        if not isinstance(item, dict) or "name" not in item or "explanation" not in item:
            raise ValueError("each vocabulary entry needs 'name' and 'explanation'")
        entries.append((item["name"], item["explanation"]))
    return PhaseVocabulary(tuple(entries))


def parse_instance(text: str) -> Instance:
    """Parse an arrow-joined phase sequence; both '→' and '->' are accepted."""
    if not text or not text.strip():
        raise NoPhasesError("text contains no phases")
    normalized = text.replace(ARROW, ASCII_ARROW)
    segments = [seg.strip() for seg in normalized.split(ASCII_ARROW)]
    if any(not seg for seg in segments):
        raise EmptySegmentError(f"empty segment in {text!r}")
    try:
        return Instance(tuple(segments))
    except ValueError as exc:
        raise InstanceParseError(str(exc)) from exc


def serialize_instance(inst: Instance) -> str:
    """File-safe ASCII form; parse_instance(serialize_instance(x)) == x."""
    return f" {ASCII_ARROW} ".join(inst.phases)


def unknown_phases(inst: Instance, vocab: PhaseVocabulary) -> list[str]:
    """Phases of inst missing from vocab, order-preserving, deduplicated."""
    known = set(vocab.names)
    out: list[str] = []
    for name in inst.phases:
        if name not in known and name not in out:
            out.append(name)
    return out


def change_phases(candidate: Instance, default: Instance) -> float:
    """Symmetric difference of the two phase sets over their union, in [0, 1]."""
    p = set(default.phases)
    n = set(candidate.phases)
    return len(p.symmetric_difference(n)) / len(p | n)


def _order_pairs(inst: Instance) -> set[tuple[str, str]]:
    return set(zip(inst.phases, inst.phases[1:]))


def change_orders(candidate: Instance, default: Instance) -> float:
    """Symmetric difference of the adjacent-pair sets over their union.

    Length-1 instances have an empty pair set: both empty -> 0 (no change),
    exactly one empty -> 1, keeping the score defined and diversity(x, x) = 0.
    """
    o = _order_pairs(default)
    e = _order_pairs(candidate)
    if not o and not e:
        return 0.0
    if not o or not e:
        return 1.0
    return len(o.symmetric_difference(e)) / len(o | e)


def diversity(candidate: Instance, default: Instance) -> float:
    """Mean of phase-set change and order-set change, in [0, 1]."""
    return (change_phases(candidate, default) + change_orders(candidate, default)) / 2.0
