"""Asynchronous differentially-private collaborative training of linear models.

A central learner trains a regularized linear model over several private
datasets through one-on-one noisy gradient queries, and the toolkit measures
the resulting cost of privacy against closed-form performance bounds.
"""

__version__ = "0.1.0"

from .bounds import (
    BoundParams,
    FittedBound,
    bound_parameter_distance,
    cost_of_privacy,
    expected_gossip_matrix,
    fit_constants,
    lambda_for_uniform_gossip,
    limiting_bound_fitness,
)
from .data import (
    IngestError,
    PcaDictionary,
    RankError,
    RawTable,
    TableSchema,
    apply_pca,
    export_csv,
    fit_pca,
    gen_synthetic,
    gen_synthetic_with_truth,
    gen_two_cluster,
    ingest_csv,
    load_codes,
    save_codes,
)
from .dp import (
    BudgetExhaustedError,
    BudgetLedger,
    QueryResponse,
    laplace_scale,
    respond,
    sample_laplace,
    true_query,
)
from .experiments import (
    CellResult,
    ExperimentPlan,
    collaboration_report,
    parse_config_text,
    plan_from_mapping,
    run_ensemble,
    write_collaboration_outputs,
    write_ensemble_outputs,
    write_trajectory_csv,
)
from .model import (
    FitnessSpec,
    ModelParams,
    OwnerDataset,
    Record,
    clip_grad,
    fitness,
    predict,
    project,
    record_grad,
    record_loss,
    reg_grad,
    reg_value,
)
from .oracle import (
    ConvergenceError,
    FitnessEvaluator,
    OracleSolution,
    relative_fitness,
    solo_model,
    solve_exact,
    solve_iterative,
)
from .scheduling import (
    PoissonState,
    ScheduleEvent,
    SchedulerMode,
    build_schedule,
    init_poisson_state,
    next_event,
    uniform_pick,
    write_schedule_csv,
)
from .trainer import (
    ProtocolConfig,
    TrainerState,
    central_update,
    default_step_gain,
    init_state,
    local_update,
    run,
    theta_bar,
)
