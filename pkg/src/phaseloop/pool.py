"""Execution statistics per instance, replay selection, and the success-rate filter.

Each distinct instance accumulates a frequency N(i) and a success count
Q(i).  Replay re-executes pool entries chosen by one of three strategies;
the UCT score 1 - Q/N + c*sqrt(ln(total)/N) balances failure rate against
visitation so that rarely-seen entries still get re-checked.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .phases import Instance, parse_instance, serialize_instance


class ZeroFrequencyError(ValueError):
    """Entry has never been executed; its rates are undefined."""


class NonPositiveTotalError(ValueError):
    """Pool total must be at least 1 for UCT scoring."""


class EmptyPoolError(ValueError):
    """Selection from a pool with no entries."""


class NoEligibleEntryError(LookupError):
    """Failure-rate selection with every entry at Q = N."""


class PoolFormatError(ValueError):
    """Malformed pool CSV (bad header, counts, or Q > N)."""


@dataclass
class PoolEntry:
    id: int
    instance: Instance
    frequency: int = 0
    success_count: int = 0


@dataclass(frozen=True)
class SelectionStrategy:
    """One of: "uct" (with exploration constant c), "failure_rate", "frequency"."""

    kind: str
    c: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("uct", "failure_rate", "frequency"):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "uct" and self.c <= 0:
            raise ValueError("uct exploration constant must be positive")


def uct(c: float = 1.0) -> SelectionStrategy:
    return SelectionStrategy("uct", c)


FAILURE_RATE = SelectionStrategy("failure_rate")
FREQUENCY = SelectionStrategy("frequency")


class InstancePool:
    """Keyed by serialized instance; total always equals the frequency sum."""

    def __init__(self) -> None:
        self._entries: dict[str, PoolEntry] = {}
        self._total = 0
        self._next_id = 1

    @property
    def entries(self) -> list[PoolEntry]:
        return list(self._entries.values())

    @property
    def total(self) -> int:
        return self._total

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, inst: Instance) -> PoolEntry | None:
        return self._entries.get(serialize_instance(inst))

    def record(self, inst: Instance, success: bool) -> PoolEntry:
        """Upsert the entry for inst and add one (possibly successful) run."""
        key = serialize_instance(inst)
        entry = self._entries.get(key)
        if entry is None:
            entry = PoolEntry(id=self._next_id, instance=inst)
            self._entries[key] = entry
            self._next_id += 1
        entry.frequency += 1
        if success:
            entry.success_count += 1
        self._total += 1
        return entry

    def _insert_loaded(self, entry: PoolEntry) -> None:
        key = serialize_instance(entry.instance)
        if key in self._entries:
            raise PoolFormatError(f"duplicate instance {key!r}")
        self._entries[key] = entry
        self._total += entry.frequency
        self._next_id = max(self._next_id, entry.id + 1)


def success_rate(entry: PoolEntry) -> float:
    """SR = Q(i) / N(i)."""
    if entry.frequency < 1:
        raise ZeroFrequencyError(f"entry {entry.id} has frequency 0")
    return entry.success_count / entry.frequency


def uct_score(entry: PoolEntry, pool_total: int, c: float = 1.0) -> float:
    """1 - Q(i)/N(i) + c * sqrt(ln(pool_total) / N(i))."""
    if entry.frequency < 1:
        raise ZeroFrequencyError(f"entry {entry.id} has frequency 0")
    if pool_total < 1:
        raise NonPositiveTotalError(f"pool total {pool_total} must be >= 1")
    failure = 1.0 - entry.success_count / entry.frequency
    return failure + c * math.sqrt(math.log(pool_total) / entry.frequency)


def _as_rng(rng: random.Random | int) -> random.Random:
    return rng if isinstance(rng, random.Random) else random.Random(rng)


def select_next(pool: InstancePool, strategy: SelectionStrategy, rng: random.Random | int = 0) -> PoolEntry:
    """Pick the next entry to replay; ties broken uniformly at random."""
    entries = pool.entries
    if not entries:
        raise EmptyPoolError("cannot select from an empty pool")
    rng = _as_rng(rng)
    if strategy.kind == "uct":
        scored = [(uct_score(e, pool.total, strategy.c), e) for e in entries]
        best = max(s for s, _ in scored)
        tied = [e for s, e in scored if s == best]
    elif strategy.kind == "failure_rate":
        # Entries with Q = N are never eligible: their failure rate is 0 and
        # this strategy would otherwise still rotate through them.
        eligible = [e for e in entries if e.success_count < e.frequency]
        if not eligible:
            raise NoEligibleEntryError("every entry has a perfect success record")
        scored = [(1.0 - success_rate(e), e) for e in eligible]
        best = max(s for s, _ in scored)
        tied = [e for s, e in scored if s == best]
    else:  # frequency
        best = min(e.frequency for e in entries)
        tied = [e for e in entries if e.frequency == best]
    if len(tied) == 1:
        return tied[0]
    return rng.choice(tied)


@dataclass(frozen=True)
class ReplayRound:
    attempt: int
    entry_id: int
    success: bool
    note: str = ""


@dataclass(frozen=True)
class ReplayReport:
    rounds: tuple[ReplayRound, ...]
    coverage_attempt: int | None  # attempt at which every entry had been selected; None = incomplete

    @property
    def complete(self) -> bool:
        return self.coverage_attempt is not None


def replay(
    pool: InstancePool,
    strategy: SelectionStrategy,
    executor: Callable[[Instance], bool],
    rounds: int,
    rng_seed: random.Random | int = 0,
) -> ReplayReport:
    """Re-execute `rounds` selected entries, recording each outcome.

    An executor exception counts as a failed run and is noted in the report
    rather than aborting the replay.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    rng = _as_rng(rng_seed)
    initial_ids = {e.id for e in pool.entries}
    seen: set[int] = set()
    coverage: int | None = None
    log: list[ReplayRound] = []
    for attempt in range(1, rounds + 1):
        entry = select_next(pool, strategy, rng)
        note = ""
        try:
            success = bool(executor(entry.instance))
        except Exception as exc:  # noqa: BLE001 - executor failures become failed runs
            success = False
            note = f"executor error: {exc}"
        pool.record(entry.instance, success)
        seen.add(entry.id)
        if coverage is None and initial_ids <= seen:
            coverage = attempt
        log.append(ReplayRound(attempt, entry.id, success, note))
    return ReplayReport(tuple(log), coverage)


def filter_by_sr(pool: InstancePool, threshold: float) -> list[PoolEntry]:
    """Entries with SR >= threshold, sorted by SR then frequency, descending."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    kept = [e for e in pool.entries if success_rate(e) >= threshold]
    kept.sort(key=lambda e: (-success_rate(e), -e.frequency, e.id))
    return kept


POOL_CSV_HEADER = ["id", "instance", "frequency", "success"]


def save_pool(pool: InstancePool, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(POOL_CSV_HEADER)
        for entry in sorted(pool.entries, key=lambda e: e.id):
            writer.writerow(
                [entry.id, serialize_instance(entry.instance), entry.frequency, entry.success_count]
            )


def load_pool(path: str | Path) -> InstancePool:
    """Load a pool CSV, rejecting rows where the success count exceeds frequency."""
    pool = InstancePool()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != POOL_CSV_HEADER:
            raise PoolFormatError(f"expected header {POOL_CSV_HEADER}, got {header}")
        for row in reader:
            if not row:
                continue
            if len(row) != 4:
                raise PoolFormatError(f"expected 4 fields, got {row}")
            try:
                entry_id = int(row[0])
                frequency = int(row[2])
                successes = int(row[3])
            except ValueError as exc:
                raise PoolFormatError(f"non-integer count in {row}") from exc
            if entry_id < 1 or frequency < 0 or successes < 0:
                raise PoolFormatError(f"negative or zero-id row {row}")
            if successes > frequency:
                raise PoolFormatError(
                    f"success count {successes} exceeds frequency {frequency} in row {row}"
                )
            pool._insert_loaded(
                PoolEntry(entry_id, parse_instance(row[1]), frequency, successes)
            )
    return pool
