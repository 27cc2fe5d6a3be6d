"""Equilibrium and core lab for finite asymmetric-information exchange economies.

The package solves state-wise competitive equilibria, decides ex-post core
membership through blocking searches, verifies maximin and Bayesian rational
expectations equilibria, and runs the fine-core machinery (communication
systems, atom splitting, atom averaging) at desk scale.
"""

from .errors import (
    EclError,
    EconomyError,
    InstanceTooLargeError,
    SolverError,
    StaleCertificateError,
    UndecidedError,
)
from .model import (
    AgentType,
    Allocation,
    AssumptionReport,
    Economy,
    FuzzyCoalition,
    PriceSystem,
    StateSpace,
    UtilitySpec,
    aggregate_endowment,
    allocation_feasible,
    assumption_flags,
    average_atoms,
    endowment_allocation,
    make_allocation,
    split_atoms,
    validate_economy,
)
from .partitions import (
    Partition,
    combine_info,
    cond_expect,
    is_measurable,
    join,
    meet,
    refines,
    sigma_of_price,
)
from .walras import (
    StateEconomy,
    WalrasResult,
    demand,
    excess_demand,
    is_walras_eq,
    solve_walras,
    walras_selection,
)
from .core import (
    BlockCertificate,
    BlockSearch,
    ExPostCoreReport,
    FindBlockOptions,
    blocking_oracle_grid,
    expost_block_to_assignment,
    expost_core_check,
    find_block,
    verify_certificate,
    walras_support_price,
)
from .ree import (
    ReeReport,
    budget_ok,
    construct_ree,
    maximin_utility,
    verify_bayes_ree,
    verify_maximin_ree,
)
from .fine import (
    FineBlockCertificate,
    FineBlockOptions,
    FineBlockSearch,
    FineCoreReport,
    communication_partition,
    expost_to_fine_block,
    find_fine_block,
    verify_fine_certificate,
    verify_fine_core_candidate,
)
from .gen import generate_economy, two_type_demo_economy

__version__ = "0.1.0"
