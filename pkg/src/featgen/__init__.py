"""Multi-agent reinforcement-learning feature generation for tabular data.

Three cooperating Q-learning agents compose mathematical transformations
over a table's features, score each candidate set against the downstream
task, prune redundancy by mutual information, and keep a traceable record
of every performance breakthrough for post-hoc interpretability review.
"""

from .agents import (
    Agent,
    AgentConfig,
    QNetwork,
    ReplayBuffer,
    Role,
    StateVector,
    Transition,
    Variant,
    encode_state,
    select_action,
    store,
    td_target,
    train_step,
)
from .clustering import ClusterAssignment, cluster_features
from .dataset import (
    DataTable,
    NormalizationParams,
    TaskKind,
    column_stats,
    load_csv,
    normalize,
    read_csv,
)
from .evaluator import EvalReport, RewardSignal, evaluate, kfold_split, rae, reward, roc_auc, weighted_f1
from .explain import (
    EndpointConfig,
    ExplanationRequest,
    ExplanationVerdict,
    build_prompt,
    filter_features,
    parse_verdict,
    query_endpoint,
)
from .orchestrator import (
    BreakthroughEvent,
    RunConfig,
    RunState,
    detect_breakthrough,
    episode_reset,
    run,
    step_once,
)
from .selection import SelectorKind, mutual_information, prune, rank_features, utilization
from .transform import (
    BINARY_OPS,
    OPERATORS,
    PREPROCESS_OPS,
    UNARY_OPS,
    Apply,
    BaseFeature,
    FeatureExpr,
    Operator,
    apply_binary,
    apply_unary,
    eval_expr,
    generate_features,
    parse_name,
    quan_trans,
    render_name,
)

__version__ = "0.1.0"
