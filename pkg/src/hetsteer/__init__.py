"""Episodic traffic-steering simulator for LTE-A/NR heterogeneous networks.

Compares three downlink steering policies on a five-cell urban scenario:
classic load balancing (CLB), satisfaction-based load balancing (SLB) and
a SARSA-trained convolutional scorer (RLLB).
"""

from .channel import (
    CqiTable,
    LinkState,
    default_cqi_table,
    link_state,
    load_cqi_table,
    los_probability,
    pathloss_db,
    rx_power_dbm,
    snr_db,
    snr_to_cqi,
)
from .engine import (
    EpisodeStats,
    RunSummary,
    compute_satisfaction,
    run_episode,
    run_experiment,
    summarize,
)
from .errors import (
    ConfigurationError,
    LedgerError,
    SnapshotError,
    TrainingDivergenceError,
)
from .learning import SarsaParams, Transition, decay_epsilon, epsilon_at, sarsa_step, td_target
from .policies import (
    Decision,
    DecisionContext,
    Observation,
    build_context,
    build_observation,
    clb_select,
    rllb_select,
    slb_select,
)
from .scenario import (
    Cell,
    CellConfig,
    ScenarioConfig,
    User,
    UserProfile,
    build_topology,
    load_scenario,
    reference_scenario,
    sample_users,
)
from .valuenet import (
    QNetwork,
    apply_update,
    forward,
    grad_wrt_params,
    init_weights,
    load_weights,
    save_weights,
)

__version__ = "0.1.0"
