"""Command-line front end: wire the loop end to end and run the experiments."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from .bpmn import count_elements, export_dot, export_xml, parse_xml, tree_to_bpmn
from .describe import describe_model
from .generation import GeneratorConfig, LlmBackend, MockBackend, mock_generate
from .harness import (
    RunConfig,
    SyntheticPoolSpec,
    Task,
    conforming_seed_instances,
    experiment_enhancement,
    experiment_filtering,
    experiment_strategies,
    experiment_temperature,
    load_bundled_tasks,
    run_loop,
)
from .mining import EventLog, build_dfg, dfg_to_dot, load_event_log, mine_tree
from .orchestrator import SimulatedEnvironment, load_hidden_model, simulated_compile
from .phases import Instance, parse_instance, serialize_instance
from .pool import (
    FAILURE_RATE,
    FREQUENCY,
    InstancePool,
    filter_by_sr,
    load_pool,
    replay,
    save_pool,
    success_rate,
    uct,
)
from .trees import format_tree

_STRATEGIES = {"uct": None, "failure-rate": FAILURE_RATE, "frequency": FREQUENCY}


def load_config(path: str | None, seed: int | None) -> RunConfig:
    """Build a RunConfig from a JSON file, falling back to defaults."""
    data: dict = {}
    if path:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    rng_seed = seed if seed is not None else int(data.get("seed", 0))

    gen_section = data.get("generation", {})
    temperature = float(gen_section.get("temperature", 0.6))
    seeds = tuple(
        parse_instance(text) for text in gen_section.get("seed_instances", [])
    ) or conforming_seed_instances()
    if gen_section.get("backend", "mock") == "llm":
        backend: MockBackend | LlmBackend = LlmBackend(
            endpoint=gen_section["endpoint"],
            model=gen_section["model"],
            api_key_env=gen_section.get("api_key_env", "LLM_API_KEY"),
            timeout_s=float(gen_section.get("timeout_s", 30.0)),
            retries=int(gen_section.get("retries", 0)),
        )
    else:
        backend = MockBackend(
            seed_instances=seeds,
            hallucination_vocab=tuple(
                gen_section.get(
                    "hallucination_vocab",
                    MockBackend(seeds).hallucination_vocab,
                )
            ),
            rng_seed=rng_seed,
        )

    env_section = data.get("environment", {})
    hidden = env_section.get("hidden_model")
    env = SimulatedEnvironment(
        hidden_model=load_hidden_model(hidden) if hidden else SimulatedEnvironment().hidden_model,
        p_true=float(env_section.get("p_true", 0.7)),
        p_false=float(env_section.get("p_false", 0.1)),
        rng_seed=rng_seed,
    )

    pool_section = data.get("pool", {})
    tasks = tuple(
        Task(item["category"], item["task"]) for item in data.get("tasks", [])
    ) or load_bundled_tasks()
    return RunConfig(
        task_list=tasks,
        generator=GeneratorConfig(backend, temperature),
        environment=env,
        pool_path=Path(pool_section["path"]) if "path" in pool_section else None,
        filter_threshold=float(pool_section.get("filter_threshold", 0.30)),
        replay_rounds=int(data.get("replay_rounds", 60)),
        uct_c=float(pool_section.get("uct_c", 1.0)),
        rng_seed=rng_seed,
        instances_per_iteration=int(data.get("instances_per_iteration", 12)),
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pool_file(cfg: RunConfig, args) -> Path:
    return cfg.pool_path or (_out_dir(args) / "pool.csv")


def _load_or_new_pool(path: Path) -> InstancePool:
    return load_pool(path) if path.exists() else InstancePool()


def _cmd_generate(cfg: RunConfig, args) -> int:
    if not isinstance(cfg.generator.backend, MockBackend):
        print("generate requires the mock backend in config", file=sys.stderr)
        return 2
    temp = args.temperature if args.temperature is not None else cfg.generator.temperature
    for inst in mock_generate(cfg.generator.backend, temp, args.count):
        print(serialize_instance(inst))
    return 0


def _cmd_run(cfg: RunConfig, args) -> int:
    if args.instances:
        instances = [
            parse_instance(line)
            for line in Path(args.instances).read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.strip().startswith("#")
        ]
    else:
        instances = mock_generate(cfg.generator.backend, cfg.generator.temperature, args.count)
    env = cfg.environment.fork(cfg.rng_seed)
    pool_path = _pool_file(cfg, args)
    pool = _load_or_new_pool(pool_path)
    log_path = _out_dir(args) / "run_log.jsonl"
    successes = 0
    with open(log_path, "a", encoding="utf-8") as log:
        for inst in instances:
            started = time.perf_counter()
            ok = simulated_compile(env, inst)
            successes += ok
            pool.record(inst, ok)
            log.write(
                json.dumps(
                    {
                        "instance": serialize_instance(inst),
                        "mode": "simulated",
                        "success": ok,
                        "duration": round(time.perf_counter() - started, 6),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    save_pool(pool, pool_path)
    print(f"executed {len(instances)} instances, {successes} succeeded; pool at {pool_path}")
    return 0


def _cmd_replay(cfg: RunConfig, args) -> int:
    pool_path = _pool_file(cfg, args)
    pool = load_pool(pool_path)
    strategy = uct(args.c if args.c is not None else cfg.uct_c) if args.strategy == "uct" else _STRATEGIES[args.strategy]
    env = cfg.environment.fork(cfg.rng_seed + 1)
    report = replay(
        pool, strategy, lambda inst: simulated_compile(env, inst), args.rounds, cfg.rng_seed
    )
    save_pool(pool, pool_path)
    out = _out_dir(args) / "replay.csv"
    lines = ["attempt,entry_id,success,note"]
    lines += [f"{r.attempt},{r.entry_id},{int(r.success)},{r.note}" for r in report.rounds]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    coverage = report.coverage_attempt if report.complete else "incomplete"
    print(f"replayed {args.rounds} rounds ({args.strategy}); coverage: {coverage}; report at {out}")
    return 0


def _cmd_filter(cfg: RunConfig, args) -> int:
    pool = load_pool(_pool_file(cfg, args))
    threshold = args.threshold if args.threshold is not None else cfg.filter_threshold
    for entry in filter_by_sr(pool, threshold):
        print(f"{success_rate(entry):.4f}  {serialize_instance(entry.instance)}")
    return 0


def _weighted_log_from_pool(pool: InstancePool, threshold: float | None) -> EventLog:
    entries = pool.entries if threshold is None else filter_by_sr(pool, threshold)
    traces = []
    for entry in entries:
        traces.extend([entry.instance.phases] * entry.frequency)
    return EventLog(tuple(traces))


def _cmd_mine(cfg: RunConfig, args) -> int:
    if args.log:
        log = load_event_log(args.log)
    else:
        pool = load_pool(_pool_file(cfg, args))
        threshold = args.threshold if args.threshold is not None else cfg.filter_threshold
        log = _weighted_log_from_pool(pool, threshold)
    if not log.traces:
        print("nothing to mine: the log is empty", file=sys.stderr)
        return 2
    out = _out_dir(args)
    tree = mine_tree(log)
    model = tree_to_bpmn(tree)
    (out / "dfg.dot").write_text(dfg_to_dot(build_dfg(log)), encoding="utf-8")
    (out / "model.dot").write_text(export_dot(model), encoding="utf-8")
    (out / "model.bpmn").write_text(export_xml(model), encoding="utf-8")
    counts = count_elements(model)
    print(format_tree(tree))
    print(
        f"tasks={counts.tasks} exclusive_gateways={counts.exclusive_gateways} "
        f"parallel_gateways={counts.parallel_gateways}; wrote model.dot, model.bpmn, dfg.dot to {out}"
    )
    return 0


def _cmd_describe(cfg: RunConfig, args) -> int:
    model = parse_xml(Path(args.model).read_text(encoding="utf-8"))
    print(describe_model(model).text)
    return 0


def _cmd_loop(cfg: RunConfig, args) -> int:
    artifacts = run_loop(cfg, args.iterations)
    out = _out_dir(args)
    artifacts.report.write(out / "loop.csv")
    save_pool(artifacts.pool, _pool_file(cfg, args))
    if artifacts.model_tree is not None:
        model = tree_to_bpmn(artifacts.model_tree)
        (out / "model.dot").write_text(export_dot(model), encoding="utf-8")
        (out / "model.bpmn").write_text(export_xml(model), encoding="utf-8")
    if artifacts.description is not None:
        (out / "description.txt").write_text(artifacts.description.text + "\n", encoding="utf-8")
    (out / "prompt.txt").write_text(artifacts.prompt, encoding="utf-8")
    print(artifacts.report.to_csv(), end="")
    print(f"wrote loop artifacts to {out}")
    return 0


def _cmd_experiment(cfg: RunConfig, args) -> int:
    out = _out_dir(args)
    if args.which == "temperature":
        temps = [float(t) for t in args.temps.split(",")]
        report = experiment_temperature(cfg, temps, args.samples)
        path = out / "experiment_temperature.csv"
    elif args.which == "strategies":
        report = experiment_strategies(cfg, rounds=args.rounds)
        path = out / "experiment_strategies.csv"
    elif args.which == "filtering":
        report = experiment_filtering(cfg, noise_fraction=args.noise)
        path = out / "experiment_filtering.csv"
    else:
        report = experiment_enhancement(
            cfg, tasks_per_arm=args.tasks_per_arm, noise_fraction=args.noise
        )
        path = out / "experiment_enhancement.csv"
    report.write(path)
    print(report.to_csv(), end="")
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phaseloop",
        description="Generate, execute, filter, and mine software development process instances.",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override the RNG seed")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit instances from the mock generator")
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--temperature", type=float)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("run", help="execute instances and record them in the pool")
    p.add_argument("--instances", help="file with one serialized instance per line")
    p.add_argument("--count", type=int, default=10, help="generate this many when no file given")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("replay", help="re-execute pool entries under a selection strategy")
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--strategy", choices=sorted(_STRATEGIES), default="uct")
    p.add_argument("--c", type=float, help="UCT exploration constant")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("filter", help="list pool entries at or above the success-rate threshold")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("mine", help="mine a process model from a log file or the pool")
    p.add_argument("--log", help="event log file (one instance per line)")
    p.add_argument("--threshold", type=float, help="pool filter threshold when mining the pool")
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("describe", help="render a BPMN XML file as text")
    p.add_argument("--model", required=True, help="BPMN XML file")
    p.set_defaults(func=_cmd_describe)

    p = sub.add_parser("loop", help="run the full generate/execute/filter/mine loop")
    p.add_argument("--iterations", type=int, default=3)
    p.set_defaults(func=_cmd_loop)

    p = sub.add_parser("experiment", help="run one of the desk-scale experiments")
    p.add_argument("which", choices=["temperature", "strategies", "filtering", "enhancement"])
    p.add_argument("--temps", default="0.0,0.2,0.6,1.0,1.4")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--rounds", type=int, default=500)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--tasks-per-arm", type=int, default=40)
    p.set_defaults(func=_cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config, args.seed)
    return args.func(cfg, args)


if __name__ == "__main__":
    sys.exit(main())
