"""Link-level simulator for 1-layer rate-splitting multiple access.

A base station splits user messages into a jointly encoded common
stream and per-user private streams, superposes them with linear
precoding, and each single-antenna user decodes the common stream
first.  This package implements the modulation, channel, and precoding
chain, three receivers (joint minimum-distance, successive cancellation
with perfect or imperfect receiver CSI, and a learned row/column
classifier bank), the training-symbol patterns that feed the learned
receiver, and a reproducible Monte Carlo harness.
"""

__version__ = "0.1.0"

from .channel import ChannelRealization, SystemConfig, csi_error_power, draw_channel, \
    synthesize_received
from .errors import (
    ConfigError,
    ContractError,
    CoverageError,
    DegenerateChannelError,
    EqualizerSingularityError,
    FramingError,
    InvalidModulationError,
    NumericError,
    RsmaLinkError,
)
from .harness import (
    BlockOutcome,
    OverheadReport,
    Scenario,
    SerReport,
    compute_throughput,
    emit_report,
    parse_config,
    run_overhead_experiment,
    run_ser_experiment,
)
from .modem import Constellation, SoftBitVector, build_constellation, \
    constellation_from_name, demodulate, lpr, modulate, nearest_symbol, \
    soft_bits_from_class_probs
from .nn import Mlp, TrainSpec, adam_step, batch_budget, build_arch, default_train_spec, \
    epoch_budget, train
from .precoding import PrecoderMatrix, RateReport, build_precoder, rate_report, rates, \
    sinr_common, sinr_private
from .receivers import DetectionResult, DnnBank, MbdlReceiver, map_detect, mbdl_build, \
    mbdl_detect, mbdl_train, sic_detect
from .training import LabeledTrainingSet, TrainingBlock, gen_extensive, gen_interpolating, \
    gen_minimal, generate_training_indices, interpolate_at_receiver, overhead
