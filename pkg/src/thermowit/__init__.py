"""Heat-exchange bounds for memory-assisted thermal interactions and heat-based witnesses."""

__version__ = "0.1.0"

from thermowit.exceptions import (  # noqa: E402
    DimensionError,
    DomainError,
    FixedPointError,
    InfeasibleError,
    NumericalConsistencyError,
    ThermowitError,
    TruncationError,
    ValidationError,
)
from thermowit.heat import (  # noqa: E402
    HeatBounds,
    ScalarProblem,
    beta_c_asymptotic,
    f_function,
    find_beta_roots,
    heat_bounds,
    heat_bounds_oracle,
    ho_constraint_objective,
    ladder_hamiltonian,
)
from thermowit.qstate import (  # noqa: E402
    DensityMatrix,
    Hamiltonian,
    conditional_entropy,
    dephase,
    free_energy,
    gibbs_state,
    mutual_information,
    partial_trace,
    rel_entropy_of_coherence,
    relative_entropy,
    tensor_product,
    trace_distance,
    von_neumann_entropy,
)
from thermowit.tavis_cummings import (  # noqa: E402
    TCModel,
    TCTrajectory,
    build_tc_model,
    coherent_input_state,
    memory_fixed_point,
    run_trajectory,
)
from thermowit.witnesses import (  # noqa: E402
    LocalData,
    Verdict,
    WitnessEnvelope,
    incoh_free_energy_bound,
    isotropic_state,
    lambda_crt,
    sep_free_energy_bound,
    verdict,
    werner_state,
    witness_heat_bounds,
)
