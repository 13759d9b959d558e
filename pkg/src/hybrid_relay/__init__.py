"""Hybrid RF/baseband precoding for mmWave amplify-and-forward MIMO relays.

The pipeline has four stages:

* :mod:`.channel` draws sparse geometric channels and imperfect-CSI pairs.
* :mod:`.rf_design` builds phase-only RF filters from the channel eigenmodes.
* :mod:`.wmmse` jointly designs the source and relay baseband filters.
* :mod:`.sic_receiver` gives the destination MMSE-SIC combiner.

:mod:`.robust` is the counterpart for estimated channels under a Kronecker
error model. :mod:`.evaluation` measures end-to-end rates and
:mod:`.harness` runs Monte-Carlo sweeps.
"""

from ._linalg import NumericalError
from .channel import (
    ArrayGeometry,
    ChannelRealization,
    CsiPair,
    ErrorModel,
    PathSet,
    array_responses,
    draw_clustered_channel,
    draw_simple_channel,
    exp_correlation,
    make_csi_pair,
    trial_rng,
    ula_response,
)
from .evaluation import (
    HybridDesign,
    HybridFilterSet,
    RateReport,
    design_hybrid,
    design_robust,
    end_to_end_rate,
    full_digital_baseline,
    noise_from_snr,
    solver_config_for,
)
from .harness import ExperimentSpec, SystemConfig, run_experiment, write_csv
from .rf_design import RankDeficiencyError, RfStage, build_rf_stage, effective_channels, phase_only
from .robust import robust_wmmse_design
from .sic_receiver import SicModel, sic_filters
from .wmmse import BasebandSolution, ConvergenceWarning, SolverConfig, wmmse_design

__version__ = "0.1.0"
