"""Link-level Monte Carlo simulator and analysis toolkit for multi-access
relay networks with distributed space-time coding and zero-forcing
interference cancellation at the receiver."""

from .airlink import (
    ChannelRealization,
    Constellation,
    NetworkConfig,
    RngStream,
    draw_awgn,
    draw_channels,
    make_psk,
    modulate,
)
from .analysis import (
    DiversityEstimate,
    SnrSample,
    ber_slope,
    lemma1_composite,
    outage_diversity,
    snr_direct,
    snr_dstc_direct,
    snr_tdma_closed_form,
    snr_tdma_direct,
    snr_upper_bound_dstc,
)
from .harness import (
    BerPoint,
    ExperimentSpec,
    canned_spec,
    emit,
    parse_csv,
    run_diversity,
    run_experiment,
)
from .numerics import NumericError, Projector, UsageError, is_alamouti, null_space_projector
from .relay_codec import (
    DstcDesign,
    SoftEstimate,
    dstc_design,
    encode_dstc_icrec,
    encode_tdma_icrec,
    mrc_soft_estimate,
    relay_decode_forward,
)
from .rx_ic import (
    EquivalentSystem,
    IcMatrix,
    equiv_system_dstc_icrec,
    equiv_system_tdma_icrec,
    ic_iterative,
    ic_matrix_pairwise,
    joint_ml_decode,
    ml_decode,
    noise_cov_dstc_icrec,
    noise_cov_tdma_icrec,
)
from .schemes import (
    SchemeId,
    SchemeMeta,
    TrialOutcome,
    int_free_condition,
    run_trial,
    scheme_meta,
    simulate_batch,
)

__version__ = "0.1.0"
