"""Robust stability certification for networks of LTI agents with uncertain links.

The package certifies that a network of single-output LTI agents, coupled
through links whose gains deviate from unity inside a sector, is stable for
every admissible link behaviour.  Certificates are assembled per element of
an overlapping edge partition of the network graph and verified as
semidefinite feasibility problems; sweeping the sector parameters maps the
certified region.
"""

from .errors import (
    AlgebraicLoopError,
    Assumption2ViolatedError,
    BadEdgeIdError,
    EmptyElementError,
    ModelError,
    NetcertError,
    NominalUnstableError,
    NotConnectedError,
    NotCoveringError,
    PartitionError,
    ResidualTooLargeError,
    SolverBackendMissingError,
    SolverFailureError,
    TopologyError,
    UnstabilizableError,
)
from .graph import (
    EdgePartition,
    GraphTopology,
    LocalizedMatrices,
    SubsystemMatrices,
    build_partition,
    build_subsystem_matrices,
    build_topology,
    localized_matrices,
)
from .lti import (
    AgentModel,
    CoprimeFactorPair,
    NominalCheck,
    StateSpaceModel,
    check_nominal_stability,
    coprime_factorize,
    is_stable,
    spectral_abscissa,
    stacked_realization,
)
from .multiplier import (
    AssembledBlocks,
    ElementAssembler,
    MultiplierVariables,
    SectorBounds,
    assemble_blocks,
    psi_blocks,
    sector_multiplier,
)

__version__ = "0.1.0"
