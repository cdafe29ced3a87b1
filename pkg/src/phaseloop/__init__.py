"""Closed-loop software-process mining.

Generate development-phase sequences, execute them against a feedback
environment, keep per-instance success statistics with UCT-driven replay,
filter out low-success (hallucinated) instances, mine a block-structured
process model from the survivors, and render it as text that strengthens
the next round of generation.
"""

from .phases import (
    DEFAULT_INSTANCE,
    DEFAULT_VOCABULARY,
    Instance,
    PhaseVocabulary,
    change_orders,
    change_phases,
    diversity,
    load_vocabulary,
    parse_instance,
    serialize_instance,
    unknown_phases,
)
from .pool import (
    FAILURE_RATE,
    FREQUENCY,
    InstancePool,
    PoolEntry,
    ReplayReport,
    SelectionStrategy,
    filter_by_sr,
    load_pool,
    replay,
    save_pool,
    select_next,
    success_rate,
    uct,
    uct_score,
)
from .trees import (
    TAU,
    ProcessTree,
    accepts,
    enumerate_language,
    format_tree,
    leaf,
    loop,
    par,
    parse_tree,
    seq,
    xor,
)
from .mining import (
    Cut,
    DirectlyFollowsGraph,
    EventLog,
    build_dfg,
    dfg_to_dot,
    find_cut,
    load_event_log,
    mine_tree,
    save_event_log,
    split_log,
)
from .bpmn import (
    BpmnModel,
    ElementCounts,
    count_elements,
    export_dot,
    export_xml,
    parse_xml,
    tree_to_bpmn,
)
from .describe import Message, ProcessDescription, describe_model, plan_text, realize_text
from .generation import (
    GeneratorConfig,
    LlmBackend,
    MockBackend,
    PromptSpec,
    build_prompt,
    llm_generate,
    mock_generate,
    parse_generation,
)
from .orchestrator import (
    ChatChain,
    ChatRecord,
    ExecutionResult,
    Role,
    RoleMap,
    SimulatedEnvironment,
    default_hidden_model,
    execute_instance,
    run_chat,
    simulated_compile,
)
from .harness import (
    ExperimentReport,
    RunConfig,
    Task,
    conforming_seed_instances,
    experiment_enhancement,
    experiment_filtering,
    experiment_strategies,
    experiment_temperature,
    load_bundled_tasks,
    run_loop,
)

__version__ = "0.1.0"
