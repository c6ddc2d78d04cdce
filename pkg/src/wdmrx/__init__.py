"""Receiver simulation suite for a two-user nonlinear WDM optical channel."""

__version__ = "0.1.0"

from .physparams import FiberParams, DerivedParams, derive, db_to_linear, dbm_to_watts
from .waveform import (
    PulseShape,
    Constellation,
    InterferenceSet,
    SampledWaveform,
    make_pulse,
    qam16,
    amplitude_rings,
    build_interference_set,
    modulate,
    inner,
    energy,
)
from .channel import (
    MemorylessChannelCfg,
    NoiseStream,
    propagate_symbol,
    propagate_block,
    awgn_variance_of_projection,
    nonlinear_bandwidth_ratio,
)
from .demod import (
    PhaseIntegrals,
    SsBasis,
    SsStatistics,
    SsModel,
    WhitenedSsModel,
    build_ss_basis,
    build_ss_model,
    mfs,
    ss_project,
    ss_means,
    ss_covariance,
    whiten,
    mxm,
)
from .detect import (
    MapMfsModel,
    TsThresholds,
    BpsConfig,
    md,
    build_map_mfs_model,
    map_mfs,
    map_ss,
    ts_thresholds,
    ts,
    bps_recover,
)
from .ssfm import SsfmCfg, WdmFrame, mux, propagate, demux_and_cdc
from .harness import (
    RECEIVERS,
    SweepCfg,
    SerRecord,
    AsymptoticRow,
    run_sweep,
    asymptotic_check,
    scatter_dump,
    format_ser_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
