"""The three receiver families: joint minimum-distance, two-stage
successive cancellation, and the learned row/column classifier receiver.

Every detector maps a batch of per-user received samples to hard symbol
decisions plus per-bit soft estimates for both the common stream and the
user's private stream.  The learned receiver replaces only the
CSI-dependent steps of the successive-cancellation structure: a bank of
two networks classifies the row and the column of each stream's symbol,
and the detected common bits are appended to the private bank's input in
place of explicit interference cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ContractError, EqualizerSingularityError
from .modem import Constellation, lpr, nearest_symbol, soft_bits_from_class_probs
from .training import LabeledTrainingSet

RECEIVER_NAMES = ("map", "sic_perfect", "sic_imperfect", "mbdl")


@dataclass(eq=False)
class DetectionResult:
    """Batched detection output for one user.

    Hard bit vectors are the soft bits thresholded at 0.5 (ties to 0);
    symbol indices come from (row, col) class recombination.
    """

    common_index: np.ndarray
    common_bits: np.ndarray
    common_soft: np.ndarray
    common_lpr: np.ndarray
    private_index: np.ndarray
    private_bits: np.ndarray
    private_soft: np.ndarray
    private_lpr: np.ndarray


def _hard_result(common_index, private_index,
                 common_const: Constellation, private_const: Constellation) -> DetectionResult:
    """Wrap hard decisions; soft bits are the degenerate 0/1 probabilities."""
    cb = common_const.bits_of(common_index)
    pb = private_const.bits_of(private_index)
    cs = cb.astype(float)
    ps = pb.astype(float)
    return DetectionResult(
        common_index=np.asarray(common_index), common_bits=cb, common_soft=cs,
        common_lpr=lpr(cs),
        private_index=np.asarray(private_index), private_bits=pb, private_soft=ps,
        private_lpr=lpr(ps))


def _stream_gain(h_used: np.ndarray, column: np.ndarray) -> complex:
    return complex(np.asarray(h_used).reshape(-1).conj() @ np.asarray(column).reshape(-1))


def map_detect(y, h_k, precoder, user: int,
               common_const: Constellation, private_const: Constellation) -> DetectionResult:
    """Joint minimum-distance detection over all symbol pairs.

    Scans |y - a s_c - b s_k|^2 for every (common, private) pair, with
    a and b the effective gains of the common and the user's private
    column through ``h_k``; equiprobable symbols make this the optimum
    joint rule on a Gaussian channel.  Ties break toward the lowest
    (common, private) index pair.
    """
    y = np.atleast_1d(np.asarray(y, dtype=complex))
    p = np.asarray(getattr(precoder, "matrix", precoder))
    a = _stream_gain(h_k, p[:, 0])
    b = _stream_gain(h_k, p[:, user + 1])

    grid = (a * common_const.symbols[:, None] + b * private_const.symbols[None, :]).reshape(-1)
    n_private = private_const.order

    flat = np.empty(y.size, dtype=np.int64)
    chunk = max(1, (1 << 22) // grid.size)
    for start in range(0, y.size, chunk):
        block = y[start:start + chunk]
        d = np.abs(block[:, None] - grid[None, :]) ** 2
        flat[start:start + chunk] = np.argmin(d, axis=1)

    return _hard_result(flat // n_private, flat % n_private, common_const, private_const)


def sic_detect(y, h_used, precoder, user: int,
               common_const: Constellation, private_const: Constellation) -> DetectionResult:
    """Two-stage successive cancellation with single-tap equalizers.

    Stage 1 equalizes by the common-column gain through ``h_used`` and
    takes the nearest common symbol; the re-modulated decision is scaled
    by the same gain and subtracted, then stage 2 repeats the procedure
    with the user's private column.  Pass the true channel for perfect
    CSIR or the receiver-side estimate for imperfect CSIR; estimate
    mismatch leaves a cancellation residual and rotates stage gains.

    Raises:
        EqualizerSingularityError: if either stage's gain is exactly zero.
    """
    y = np.atleast_1d(np.asarray(y, dtype=complex))
    p = np.asarray(getattr(precoder, "matrix", precoder))

    z_c = _stream_gain(h_used, p[:, 0])
    if z_c == 0:
        raise EqualizerSingularityError("common-stage equalizer gain is zero")
    common_idx = nearest_symbol(y * (np.conj(z_c) / abs(z_c) ** 2), common_const)

    cancelled = y - z_c * common_const.symbols[common_idx]
    z_k = _stream_gain(h_used, p[:, user + 1])
    if z_k == 0:
        raise EqualizerSingularityError("private-stage equalizer gain is zero")
    private_idx = nearest_symbol(cancelled * (np.conj(z_k) / abs(z_k) ** 2), private_const)

    return _hard_result(common_idx, private_idx, common_const, private_const)


@dataclass(eq=False)
class DnnBank:
    """Row and column classifier pair for one stream's constellation."""

    row_net: nn.Mlp
    col_net: nn.Mlp
    constellation: Constellation

    def __post_init__(self):
        side = self.constellation.side
        if self.row_net.input_size != self.col_net.input_size:
            raise ContractError("bank networks must share the input size")
        if self.row_net.output_size != side or self.col_net.output_size != side:
            raise ContractError(f"bank outputs must have {side} classes")


@dataclass(eq=False)
class MbdlReceiver:
    """Learned receiver of one user: a common bank and a private bank."""

    common_bank: DnnBank
    private_bank: DnnBank
    user: int = 0
    trained: bool = field(default=False, repr=False)

    @property
    def num_params(self) -> int:
        return sum(net.num_params() for net in self.networks())

    def networks(self):
        return (self.common_bank.row_net, self.common_bank.col_net,
                self.private_bank.row_net, self.private_bank.col_net)


def mbdl_build(common_const: Constellation, private_const: Constellation,
               user: int = 0, rng: np.random.Generator | None = None) -> MbdlReceiver:
    """Instantiate the four networks for one user's receiver."""
    if rng is None:
        rng = np.random.default_rng(0)
    mc = common_const.bits_per_symbol
    common_bank = DnnBank(
        row_net=nn.build_arch("common_detect", common_const, rng=rng),
        col_net=nn.build_arch("common_detect", common_const, rng=rng),
        constellation=common_const)
    private_bank = DnnBank(
        row_net=nn.build_arch("ic_private_detect", private_const, common_bits=mc, rng=rng),
        col_net=nn.build_arch("ic_private_detect", private_const, common_bits=mc, rng=rng),
        constellation=private_const)
    return MbdlReceiver(common_bank=common_bank, private_bank=private_bank, user=user)


def _split_features(y: np.ndarray) -> np.ndarray:
    return np.stack([y.real, y.imag], axis=1)


def mbdl_train(receiver: MbdlReceiver, samples: LabeledTrainingSet,
               common_spec: nn.TrainSpec, private_spec: nn.TrainSpec) -> MbdlReceiver:
    """Train all four networks on one user's labeled received samples.

    The common bank sees [Re y, Im y]; the private bank additionally
    receives the true common bit vector (teacher forcing) while at
    detection time the decided bits are substituted.
    """
    if samples.count == 0:
        raise ContractError("training set is empty")
    if samples.common_const.bits_per_symbol != receiver.common_bank.constellation.bits_per_symbol:
        raise ContractError("training set common constellation does not match the bank")
    if samples.private_const.bits_per_symbol != receiver.private_bank.constellation.bits_per_symbol:
        raise ContractError("training set private constellation does not match the bank")

    base = _split_features(samples.y)
    with_bits = np.concatenate([base, samples.common_bits()], axis=1)

    c_const = samples.common_const
    p_const = samples.private_const
    nn.train(receiver.common_bank.row_net, base, c_const.row_of(samples.common_index), common_spec)
    nn.train(receiver.common_bank.col_net, base, c_const.col_of(samples.common_index), common_spec)
    nn.train(receiver.private_bank.row_net, with_bits,
             p_const.row_of(samples.private_index), private_spec)
    nn.train(receiver.private_bank.col_net, with_bits,
             p_const.col_of(samples.private_index), private_spec)
    receiver.trained = True
    return receiver


def mbdl_detect(receiver: MbdlReceiver, y) -> DetectionResult:
    """Run the trained banks on a batch of received samples.

    The common banks produce row/column class probabilities; their
    aggregated soft bits are thresholded into the reported bit vector,
    while the recombined argmax classes fix the hard symbol and feed the
    private bank's bit inputs.

    Raises:
        ContractError: if the receiver has not been trained.
    """
    if not receiver.trained:
        raise ContractError("receiver must be trained before detection")
    y = np.atleast_1d(np.asarray(y, dtype=complex))
    base = _split_features(y)

    c_const = receiver.common_bank.constellation
    row_probs = receiver.common_bank.row_net.forward(base)
    col_probs = receiver.common_bank.col_net.forward(base)
    common_soft = soft_bits_from_class_probs(row_probs, col_probs, c_const)
    common_idx = c_const.index_from_classes(np.argmax(row_probs, axis=1),
                                            np.argmax(col_probs, axis=1))
    decided_bits = c_const.bits_of(common_idx).astype(float)

    p_const = receiver.private_bank.constellation
    with_bits = np.concatenate([base, decided_bits], axis=1)
    prow = receiver.private_bank.row_net.forward(with_bits)
    pcol = receiver.private_bank.col_net.forward(with_bits)
    private_soft = soft_bits_from_class_probs(prow, pcol, p_const)
    private_idx = p_const.index_from_classes(np.argmax(prow, axis=1),
                                             np.argmax(pcol, axis=1))

    return DetectionResult(
        common_index=common_idx, common_bits=common_soft.hard_bits(),
        common_soft=common_soft.probabilities, common_lpr=common_soft.lprs,
        private_index=private_idx, private_bits=private_soft.hard_bits(),
        private_soft=private_soft.probabilities, private_lpr=private_soft.lprs)
