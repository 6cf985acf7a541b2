"""Simulation toolkit for measurement-driven black-box quantum computation.

Programs are held as quantum states (Choi states of the channels they
implement) and consumed by binary measurements; the library covers state
injection, oblivious teleportation and control, derived algorithms (trace
estimation, amplitude amplification, unitary combination), superchannels,
circuit knitting, and distributed protocols with resource accounting.
"""

from .errors import (
    BlockEncodingError,
    BranchError,
    CapacityError,
    DimensionError,
    DuplicateLabelError,
    EstimationError,
    LocalityError,
    ObliqError,
    ResourceError,
    ScenarioParseError,
    ScenarioSchemaError,
    ScenarioSemanticError,
    StateValidationError,
    UnknownLabelError,
)
from .qmath import (
    EPS,
    MAX_STATE_DIM,
    RegisterLayout,
    dagger,
    distance_up_to_phase,
    embed_operator,
    is_hermitian,
    is_psd,
    is_unitary,
    partial_trace,
    permutation_to_layout,
    projector,
    random_statevector,
    random_unitary,
    tensor_product,
)
from .gates import (
    CNOT,
    CZ,
    H,
    I2,
    S,
    SWAP,
    T,
    X,
    Y,
    Z,
    gate_from_literal,
    kraus_from_literal,
    matrix_from_json,
    matrix_to_json,
    named_gate,
    ry,
    rz,
)
from .states import MixedState, PureState, as_mixed, basis_state, bell_state
from .channels import (
    ChoiProgram,
    KrausChannel,
    RebitEmbedding,
    adjoint_program,
    amplitude_damping_channel,
    channel_of_choi,
    choi_of,
    conjugate_program,
    dephasing_channel,
    depolarizing_channel,
    kraus_of_dilation,
    program_layout,
    rebit_embed,
    rebit_input,
    rebit_readout_probability,
    stinespring_dilation,
    transpose_program,
    unitary_of_choi,
)
from .oblivious import (
    BinaryBranch,
    FlagState,
    GeneralizedPauliBasis,
    OqtRecord,
    OqtRecordBatch,
    ParitySamples,
    bell_projector,
    isi_measure,
    local_parity_sampling,
    multiparty_binary_bell,
    multiplexer_build,
    oqc_build,
    oqc_induced_operator,
    oqt_estimate_observable,
    oqt_sample_records,
    oqt_sequence,
    oqt_step,
    parity_mix_alpha,
    sequence_unitary,
    toffoli_boundary_compile,
)
from .algorithms import (
    BlockEncoding,
    LcuResult,
    LCUPlan,
    MeasurementAxis,
    OaaResult,
    OqsResult,
    X_AXIS,
    Y_AXIS,
    block_encoding_check,
    compose_programs,
    dqc1,
    lcu_apply,
    oaa_amplify,
    oaa_factor_programs,
    oaa_via_oqt,
    oaa_walk_operator,
    odqc1,
    oqs,
    random_block_encoding,
    recommended_iterations,
    swap_test,
    swap_test_probability,
)
from .superchannel import (
    Superchannel,
    apply_superchannel,
    controlled_channel_superpose,
    dqc1_channel_trace,
    oqt_compose_choi,
    pre_post_superchannel,
    superchannel_kraus,
)
from .distributed import (
    DbqcResult,
    HybridResult,
    KnitCircuit,
    KnitDecomposition,
    KnitEstimate,
    KnitGate,
    OptimizerConfig,
    PROTOCOL_KNOWLEDGE,
    Party,
    ProtocolEngine,
    ProtocolScript,
    ResourceLedger,
    TripartyResult,
    hybrid_optimize,
    knit_decompose,
    knit_estimate,
    pingpong_run,
    remote_cnot,
    remote_controlled_gate,
    run_dbqc,
    run_triparty,
    teleport_state,
)

__version__ = "0.1.0"
