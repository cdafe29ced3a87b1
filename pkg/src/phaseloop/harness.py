"""The end-to-end loop and the four desk-scale experiments.

Every experiment is a pure function of (config, seed): reports are plain
rows plus a metadata snapshot and serialize to byte-identical CSV across
reruns.  Real-model success percentages are out of reach here; the
experiments reproduce the directional effects against the simulated
compiler instead.
"""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from itertools import product
from pathlib import Path

from .bpmn import ElementCounts, count_elements, tree_to_bpmn
from .describe import ProcessDescription, describe_model
from .generation import (
    GeneratorConfig,
    MockBackend,
    PromptSpec,
    build_prompt,
    generate_instances,
    mock_generate,
    with_enhancement,
)
from .mining import EventLog, mine_tree
from .orchestrator import SimulatedEnvironment, simulated_compile
from .phases import DEFAULT_INSTANCE, DEFAULT_VOCABULARY, Instance, diversity, serialize_instance
from .pool import (
    FAILURE_RATE,
    FREQUENCY,
    InstancePool,
    SelectionStrategy,
    filter_by_sr,
    replay,
    success_rate,
    uct,
)
from .trees import TAU, ProcessTree, format_tree, leaf, loop


@dataclass(frozen=True)
class Task:
    category: str
    text: str


def load_bundled_tasks() -> tuple[Task, ...]:
    raw = resources.files(__package__).joinpath("tasks.json").read_text(encoding="utf-8")
    return tuple(Task(item["category"], item["task"]) for item in json.loads(raw))


TASK_CATEGORIES = ("creation", "game", "education", "work", "life")


def conforming_seed_instances() -> tuple[Instance, ...]:
    """The default instance plus every optional-phase variant (8 in total)."""
    optional = ("Annotation", "CodeReviewModification", "TestModification")
    variants: list[Instance] = []
    for keep in product((True, False), repeat=len(optional)):
        dropped = {name for name, kept in zip(optional, keep) if not kept}
        variants.append(
            Instance(tuple(n for n in DEFAULT_VOCABULARY.names if n not in dropped))
        )
    return tuple(variants)


@dataclass(frozen=True)
class RunConfig:
    task_list: tuple[Task, ...] = field(default_factory=load_bundled_tasks)
    generator: GeneratorConfig = field(
        default_factory=lambda: GeneratorConfig(MockBackend(conforming_seed_instances()))
    )
    environment: SimulatedEnvironment = field(default_factory=SimulatedEnvironment)
    pool_path: Path | None = None
    filter_threshold: float = 0.30
    replay_rounds: int = 60
    uct_c: float = 1.0
    rng_seed: int = 0
    instances_per_iteration: int = 12

    def __post_init__(self) -> None:
        if not 0.0 <= self.filter_threshold <= 1.0:
            raise ValueError("filter threshold must be in [0, 1]")


@dataclass(frozen=True)
class ExperimentReport:
    columns: tuple[str, ...]
    rows: tuple[tuple[object, ...], ...]
    metadata: dict[str, object]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8")
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        meta_path.write_text(
            json.dumps(self.metadata, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _derive_seed(base: int, *parts: object) -> int:
    text = ":".join(str(p) for p in (base, *parts))
    out = 0
    for ch in text:
        out = (out * 1_000_003 + ord(ch)) % (2**31)
    return out


def _weighted_log(entries) -> EventLog:
    traces = []
    for entry in entries:
        traces.extend([entry.instance.phases] * entry.frequency)
    return EventLog(tuple(traces))


@dataclass(frozen=True)
class LoopArtifacts:
    report: ExperimentReport
    pool: InstancePool
    model_tree: ProcessTree | None
    description: ProcessDescription | None
    prompt: str


def run_loop(cfg: RunConfig, iterations: int) -> LoopArtifacts:
    """Generate, execute, replay, filter, mine, describe; then strengthen
    the generator with the survivors and their description and repeat."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    pool = InstancePool()
    env = cfg.environment.fork(_derive_seed(cfg.rng_seed, "env"))
    generator = cfg.generator
    description: ProcessDescription | None = None
    tree: ProcessTree | None = None
    rows: list[tuple[object, ...]] = []
    prompt = ""
    task_cycle = cfg.task_list or (Task("work", "Develop a small utility"),)

    for iteration in range(1, iterations + 1):
        task = task_cycle[(iteration - 1) % len(task_cycle)]
        seeds = (
            generator.backend.seed_instances
            if isinstance(generator.backend, MockBackend)
            else conforming_seed_instances()
        )
        spec = PromptSpec(
            user_task=task.text,
            phase_explanations=DEFAULT_VOCABULARY,
            experiential_instances=seeds[:3],
            process_description=description,
        )
        prompt = build_prompt(spec)
        iteration_generator = replace(
            generator,
            backend=replace(
                generator.backend,
                rng_seed=_derive_seed(cfg.rng_seed, "gen", iteration),
            )
            if isinstance(generator.backend, MockBackend)
            else generator.backend,
        )
        instances = generate_instances(iteration_generator, spec, cfg.instances_per_iteration)
        successes = 0
        for inst in instances:
            ok = simulated_compile(env, inst)
            successes += ok
            pool.record(inst, ok)
        replay(
            pool,
            uct(cfg.uct_c),
            lambda inst: simulated_compile(env, inst),
            cfg.replay_rounds,
            _derive_seed(cfg.rng_seed, "replay", iteration),
        )
        survivors = filter_by_sr(pool, cfg.filter_threshold)
        counts = ElementCounts(0, 0, 0)
        if survivors:
            tree = mine_tree(_weighted_log(survivors))
            model = tree_to_bpmn(tree)
            counts = count_elements(model)
            description = describe_model(model)
            generator = with_enhancement(
                generator, tuple(e.instance for e in survivors), tree
            )
        rows.append(
            (
                iteration,
                len(instances),
                _fmt(successes / len(instances)),
                pool.total,
                len(pool),
                counts.tasks,
                counts.exclusive_gateways,
                counts.parallel_gateways,
            )
        )

    report = ExperimentReport(
        columns=(
            "iteration",
            "generated",
            "success_rate",
            "pool_total",
            "distinct_variants",
            "model_tasks",
            "model_exclusive_gateways",
            "model_parallel_gateways",
        ),
        rows=tuple(rows),
        metadata={
            "seed": cfg.rng_seed,
            "iterations": iterations,
            "filter_threshold": cfg.filter_threshold,
            "replay_rounds": cfg.replay_rounds,
            "uct_c": cfg.uct_c,
            "temperature": cfg.generator.temperature,
            "final_model": format_tree(tree) if tree is not None else None,
        },
    )
    return LoopArtifacts(report, pool, tree, description, prompt)


def experiment_temperature(
    cfg: RunConfig, temps: list[float], samples_per_temp: int = 100
) -> ExperimentReport:
    """Mean success rate and mean diversity of mock output per temperature.

    Samples mutate the default instance itself, so the diversity column is 0
    exactly when the temperature is 0.
    """
    if not isinstance(cfg.generator.backend, MockBackend):
        raise ValueError("the temperature sweep needs the mock backend")
    rows = []
    for temp in temps:
        backend = replace(
            cfg.generator.backend,
            seed_instances=(DEFAULT_INSTANCE,),
            rng_seed=_derive_seed(cfg.rng_seed, "temp", temp),
        )
        env = cfg.environment.fork(_derive_seed(cfg.rng_seed, "temp-env", temp))
        instances = mock_generate(backend, temp, samples_per_temp)
        successes = sum(simulated_compile(env, inst) for inst in instances)
        mean_div = sum(diversity(inst, DEFAULT_INSTANCE) for inst in instances) / len(instances)
        rows.append((_fmt(temp), _fmt(successes / len(instances)), _fmt(mean_div)))
    return ExperimentReport(
        columns=("temperature", "mean_success_rate", "mean_diversity"),
        rows=tuple(rows),
        metadata={"seed": cfg.rng_seed, "samples_per_temp": samples_per_temp, "temps": temps},
    )


@dataclass(frozen=True)
class SyntheticPoolSpec:
    """Stat shape mirrors a young pool: perfect records exist only at low
    frequency (tried once or twice and lucky), while heavily repeated
    entries have low success rates.  High-frequency high-success entries
    would start below the score floor that persistently failing entries
    keep under the balance formula and could never be traversed."""

    n_entries: int = 100
    perfect_fraction: float = 0.1
    stale_fraction: float = 0.15
    stale_max_frequency: int = 25
    rng_seed: int = 7


def build_synthetic_pool(spec: SyntheticPoolSpec) -> InstancePool:
    rng = random.Random(spec.rng_seed)
    base = list(DEFAULT_VOCABULARY.names)
    pool = InstancePool()
    made: set[str] = set()
    attempt = 0
    n_perfect = round(spec.n_entries * spec.perfect_fraction)
    n_stale = round(spec.n_entries * spec.stale_fraction)
    while len(made) < spec.n_entries:
        attempt += 1
        phases = list(base)
        for _ in range(rng.randrange(0, 4)):
            op = rng.choice(("del", "swap", "ins"))
            if op == "del" and len(phases) > 2:
                del phases[rng.randrange(len(phases))]
            elif op == "swap" and len(phases) >= 2:
                i = rng.randrange(len(phases) - 1)
                phases[i], phases[i + 1] = phases[i + 1], phases[i]
            else:
                phases.insert(rng.randrange(len(phases) + 1), f"Variant{attempt}")
        key = " -> ".join(phases)
        if key in made:
            continue
        made.add(key)
        inst = Instance(tuple(phases))
        rank = len(made)
        if rank <= n_perfect:
            n = rng.randint(1, 2)
            q = n
        elif rank <= n_perfect + n_stale:
            n = rng.randint(15, spec.stale_max_frequency)
            q = rng.randint(0, max(1, round(n * 0.1)))
        else:
            n = rng.randint(1, 4)
            q = rng.randint(0, 1) if n == 1 else rng.randrange(0, n)
        for i in range(n):
            pool.record(inst, i < q)
    return pool


def experiment_strategies(
    cfg: RunConfig, pool_spec: SyntheticPoolSpec | None = None, rounds: int = 500
) -> ExperimentReport:
    """Cumulative distinct-entries-visited per replay attempt per strategy.

    Replay here re-evaluates entries against a permissive environment (any
    phase order compiles with probability p_true): re-evaluation is meant to
    recover instances whose recorded failures were noise, and an executor
    that kept failing everything would pin the balance score of repeatedly
    selected entries above the stale entries forever.
    """
    spec = pool_spec or SyntheticPoolSpec(rng_seed=_derive_seed(cfg.rng_seed, "pool"))
    strategies: list[tuple[str, SelectionStrategy]] = [
        ("uct", uct(cfg.uct_c)),
        ("failure_rate", FAILURE_RATE),
        ("frequency", FREQUENCY),
    ]
    coverage_curves: dict[str, list[int]] = {}
    coverage_attempts: dict[str, int | None] = {}
    for name, strategy in strategies:
        pool = build_synthetic_pool(spec)
        alphabet = sorted({p for e in pool.entries for p in e.instance.phases})
        permissive = loop(TAU, *(leaf(a) for a in alphabet))
        env = SimulatedEnvironment(
            hidden_model=permissive,
            p_true=cfg.environment.p_true,
            p_false=cfg.environment.p_false,
            rng_seed=_derive_seed(cfg.rng_seed, "strategy-env", name),
        )
        report = replay(
            pool,
            strategy,
            lambda inst: simulated_compile(env, inst),
            rounds,
            _derive_seed(cfg.rng_seed, "strategy", name),
        )
        seen: set[int] = set()
        curve = []
        for entry in report.rounds:
            seen.add(entry.entry_id)
            curve.append(len(seen))
        coverage_curves[name] = curve
        coverage_attempts[name] = report.coverage_attempt
    rows = tuple(
        (attempt + 1, *(coverage_curves[name][attempt] for name, _ in strategies))
        for attempt in range(rounds)
    )
    return ExperimentReport(
        columns=("attempt", *(name for name, _ in strategies)),
        rows=rows,
        metadata={
            "seed": cfg.rng_seed,
            "rounds": rounds,
            "pool_entries": spec.n_entries,
            "coverage_attempts": coverage_attempts,
        },
    )


def _noisy_campaign_pool(
    cfg: RunConfig, noise_fraction: float, executions_per_instance: int = 6, samples: int = 60
) -> InstancePool:
    """Seeded mix of conforming and mutated instances, each executed a few times."""
    rng = random.Random(_derive_seed(cfg.rng_seed, "campaign"))
    env = cfg.environment.fork(_derive_seed(cfg.rng_seed, "campaign-env"))
    seeds = conforming_seed_instances()
    # Two compounded passes of insert/delete-dominant noise with occasional
    # order errors: heavier swap rates saturate the graph with 2-cycles and
    # the unfiltered model degenerates into a single flower block.
    mutated = list(seeds)
    for generation_round in range(2):
        backend = MockBackend(
            seed_instances=tuple(mutated),
            rng_seed=_derive_seed(cfg.rng_seed, "campaign-gen", generation_round),
            swap_weight=0.15,
            delete_weight=0.8,
            stable_insert_positions=True,
        )
        mutated = mock_generate(backend, 1.2, samples)
    pool = InstancePool()
    for idx in range(samples):
        if rng.random() < noise_fraction:
            inst = mutated[idx]
        else:
            inst = seeds[rng.randrange(len(seeds))]
        for _ in range(executions_per_instance):
            pool.record(inst, simulated_compile(env, inst))
    return pool


def experiment_filtering(cfg: RunConfig, noise_fraction: float = 0.5) -> ExperimentReport:
    """Success-rate histogram plus unfiltered-vs-filtered model element counts."""
    pool = _noisy_campaign_pool(cfg, noise_fraction)
    buckets = [0] * 10
    for entry in pool.entries:
        sr = success_rate(entry)
        buckets[min(9, int(sr * 10))] += 1
    unfiltered_counts = count_elements(tree_to_bpmn(mine_tree(_weighted_log(pool.entries))))
    survivors = filter_by_sr(pool, cfg.filter_threshold)
    filtered_counts = (
        count_elements(tree_to_bpmn(mine_tree(_weighted_log(survivors))))
        if survivors
        else ElementCounts(0, 0, 0)
    )
    rows: list[tuple[object, ...]] = [
        ("sr_histogram", f"{b * 10}-{b * 10 + 10}%", buckets[b]) for b in range(10)
    ]
    for label, counts in (("unfiltered", unfiltered_counts), ("filtered", filtered_counts)):
        rows.append(("model_elements", f"{label}_tasks", counts.tasks))
        rows.append(("model_elements", f"{label}_exclusive_gateways", counts.exclusive_gateways))
        rows.append(("model_elements", f"{label}_parallel_gateways", counts.parallel_gateways))
    return ExperimentReport(
        columns=("metric", "label", "value"),
        rows=tuple(rows),
        metadata={
            "seed": cfg.rng_seed,
            "noise_fraction": noise_fraction,
            "threshold": cfg.filter_threshold,
            "distinct_variants": len(pool),
            "unfiltered": vars(unfiltered_counts),
            "filtered": vars(filtered_counts),
        },
    )


def experiment_enhancement(
    cfg: RunConfig, tasks_per_arm: int = 40, noise_fraction: float = 0.5
) -> ExperimentReport:
    """Baseline (raw-pool seeds, unconstrained mutation) vs enhanced
    (filtered survivors plus mined-model conformance) per task category."""
    pool = _noisy_campaign_pool(cfg, noise_fraction)
    survivors = filter_by_sr(pool, cfg.filter_threshold)
    mined = mine_tree(_weighted_log(survivors)) if survivors else None
    survivor_seeds = tuple(e.instance for e in survivors) or conforming_seed_instances()
    raw_rng = random.Random(_derive_seed(cfg.rng_seed, "baseline-seeds"))
    raw_entries = pool.entries
    baseline_seeds: list[Instance] = []
    seen: set[str] = set()
    for _ in range(max(8, len(survivor_seeds))):
        inst = raw_entries[raw_rng.randrange(len(raw_entries))].instance
        key = serialize_instance(inst)
        if key not in seen:
            seen.add(key)
            baseline_seeds.append(inst)

    arms = {
        "baseline": (tuple(baseline_seeds), None),
        "enhanced": (survivor_seeds, mined),
    }
    temperature = cfg.generator.temperature
    rates: dict[str, dict[str, float]] = {name: {} for name in arms}
    for category in TASK_CATEGORIES:
        for arm_name, (seeds, conform) in arms.items():
            backend = MockBackend(
                seed_instances=seeds,
                rng_seed=_derive_seed(cfg.rng_seed, "arm", category),
                conform_to=conform,
            )
            env = cfg.environment.fork(_derive_seed(cfg.rng_seed, "arm-env", category))
            instances = mock_generate(backend, temperature, tasks_per_arm)
            wins = sum(simulated_compile(env, inst) for inst in instances)
            rates[arm_name][category] = wins / tasks_per_arm
    rows = tuple(
        (
            category,
            _fmt(rates["baseline"][category]),
            _fmt(rates["enhanced"][category]),
        )
        for category in TASK_CATEGORIES
    )
    aggregate = {
        name: sum(per_cat.values()) / len(per_cat) for name, per_cat in rates.items()
    }
    return ExperimentReport(
        columns=("category", "baseline_success_rate", "enhanced_success_rate"),
        rows=rows,
        metadata={
            "seed": cfg.rng_seed,
            "tasks_per_arm": tasks_per_arm,
            "noise_fraction": noise_fraction,
            "temperature": temperature,
            "aggregate": {k: round(v, 6) for k, v in aggregate.items()},
        },
    )
