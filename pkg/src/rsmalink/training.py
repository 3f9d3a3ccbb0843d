"""Training-symbol patterns, receiver-side interpolation, and overhead.

Three block layouts trade coverage against overhead:

* extensive  - every joint symbol combination of all K+1 streams.
* minimal    - every (common, top-private) pair once; the remaining
               private streams send uniformly random symbols.
* interpolating - 4 symbols per block; private streams send only their
               constellation corners and the receiver rebuilds the full
               grid by bilinear interpolation of corner-cluster centroids.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError, CoverageError
from .modem import Constellation

PATTERNS = ("extensive", "minimal", "interpolating")

#: Joint-combination cap for the extensive pattern.
MAX_EXTENSIVE_COMBINATIONS = 1 << 24


@dataclass(eq=False)
class TrainingBlock:
    """Per-stream symbol indices of one training block (common row first)."""

    indices: np.ndarray
    pattern: str

    @property
    def size(self) -> int:
        return self.indices.shape[1]

    @property
    def num_streams(self) -> int:
        return self.indices.shape[0]


def _check_streams(constellations: Sequence[Constellation]) -> None:
    if len(constellations) < 2:
        raise ContractError("need the common constellation plus at least one private stream")


def top_private_stream(constellations: Sequence[Constellation]) -> int:
    """Private stream with the highest modulation order; ties pick the
    lowest user index.  Returns the index into ``constellations``."""
    privates = constellations[1:]
    orders = [c.order for c in privates]
    return 1 + int(np.argmax(orders))


def extensive_block_size(constellations: Sequence[Constellation]) -> int:
    size = 1
    for c in constellations:
        size *= c.order
    return size


def minimal_block_size(constellations: Sequence[Constellation]) -> int:
    return constellations[0].order * constellations[top_private_stream(constellations)].order


def interpolating_block_size(constellations: Sequence[Constellation]) -> int:
    return 4


def block_size(pattern: str, constellations: Sequence[Constellation]) -> int:
    if pattern == "extensive":
        return extensive_block_size(constellations)
    if pattern == "minimal":
        return minimal_block_size(constellations)
    if pattern == "interpolating":
        return interpolating_block_size(constellations)
    raise ConfigError(f"pattern: unknown {pattern!r}, expected one of {PATTERNS}")


def gen_extensive(constellations: Sequence[Constellation],
                  rng: np.random.Generator | None = None) -> TrainingBlock:
    """Every joint symbol combination once, common index varying slowest.

    Raises:
        ConfigError: if the joint alphabet exceeds 2**24 combinations.
    """
    _check_streams(constellations)
    size = extensive_block_size(constellations)
    if size > MAX_EXTENSIVE_COMBINATIONS:
        raise ConfigError(
            f"extensive block of {size} combinations exceeds the {MAX_EXTENSIVE_COMBINATIONS} cap")
    grids = np.meshgrid(*[np.arange(c.order) for c in constellations], indexing="ij")
    indices = np.stack([g.reshape(-1) for g in grids])
    return TrainingBlock(indices=indices, pattern="extensive")


def gen_minimal(constellations: Sequence[Constellation],
                rng: np.random.Generator) -> TrainingBlock:
    """Exhaustive (common, top-private) pairs; other privates uniform."""
    _check_streams(constellations)
    top = top_private_stream(constellations)
    n_c = constellations[0].order
    n_top = constellations[top].order
    size = n_c * n_top

    indices = np.empty((len(constellations), size), dtype=np.int64)
    indices[0] = np.repeat(np.arange(n_c), n_top)
    indices[top] = np.tile(np.arange(n_top), n_c)
    for stream, c in enumerate(constellations):
        if stream in (0, top):
            continue
        indices[stream] = rng.integers(0, c.order, size=size)
    return TrainingBlock(indices=indices, pattern="minimal")


def gen_interpolating(constellations: Sequence[Constellation],
                      rng: np.random.Generator, block_index: int = 0) -> TrainingBlock:
    """Four corner symbols per private stream, one common symbol per block.

    The common stream cycles deterministically (block b sends symbol
    b mod |alphabet| in all four slots) so every (common, corner) pair is
    covered within |alphabet| blocks; each private stream sends a random
    permutation of its four corners.
    """
    _check_streams(constellations)
    indices = np.empty((len(constellations), 4), dtype=np.int64)
    indices[0] = block_index % constellations[0].order
    for stream, c in enumerate(constellations[1:], start=1):
        indices[stream] = rng.permutation(c.corner_indices)
    return TrainingBlock(indices=indices, pattern="interpolating")


def generate_training_indices(pattern: str, constellations: Sequence[Constellation],
                              blocks: int, rng: np.random.Generator) -> np.ndarray:
    """Concatenate ``blocks`` training blocks into a (K+1, T) index matrix."""
    if blocks < 0:
        raise ConfigError(f"blocks: must be >= 0, got {blocks}")
    if blocks == 0:
        return np.empty((len(constellations), 0), dtype=np.int64)
    out = []
    for b in range(blocks):
        if pattern == "extensive":
            out.append(gen_extensive(constellations, rng).indices)
        elif pattern == "minimal":
            out.append(gen_minimal(constellations, rng).indices)
        elif pattern == "interpolating":
            out.append(gen_interpolating(constellations, rng, block_index=b).indices)
        else:
            raise ConfigError(f"pattern: unknown {pattern!r}, expected one of {PATTERNS}")
    return np.concatenate(out, axis=1)


@dataclass(eq=False)
class LabeledTrainingSet:
    """Received training samples of one user with their stream labels."""

    y: np.ndarray
    common_index: np.ndarray
    private_index: np.ndarray
    common_const: Constellation
    private_const: Constellation

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=complex)
        self.common_index = np.asarray(self.common_index, dtype=np.int64)
        self.private_index = np.asarray(self.private_index, dtype=np.int64)
        if not (self.y.shape == self.common_index.shape == self.private_index.shape):
            raise ContractError("features and labels must have equal lengths")
        if self.common_index.size:
            if self.common_index.min() < 0 or self.common_index.max() >= self.common_const.order:
                raise ContractError("common label out of range")
            if self.private_index.min() < 0 or self.private_index.max() >= self.private_const.order:
                raise ContractError("private label out of range")

    @property
    def count(self) -> int:
        return self.y.size

    def common_bits(self) -> np.ndarray:
        return self.common_const.bits_of(self.common_index).astype(float)


def _corner_positions(const: Constellation):
    """(row_end, col_end) grid coordinates and labels of the four corners."""
    last = const.side - 1
    for row_end in (0, 1):
        for col_end in (0, 1):
            row_pos = last * row_end
            col_pos = last * col_end
            yield row_end, col_end, int(const.grid_index(row_pos, col_pos))


def interpolate_at_receiver(samples: LabeledTrainingSet,
                            jitter_replicas: int = 3,
                            rng: np.random.Generator | None = None) -> LabeledTrainingSet:
    """Rebuild the full training grid from corner observations.

    For every common symbol the four private-corner cluster centroids are
    computed in the received plane and the remaining grid points are
    synthesized by bilinear interpolation; under a linear channel the
    received grid is an affine image of the transmitted lattice, which
    bilinear interpolation reproduces exactly.  When ``jitter_replicas``
    is positive, every synthetic point is emitted that many times with
    isotropic Gaussian jitter matching the empirical corner-cluster
    standard deviation.

    Raises:
        CoverageError: if some (common symbol, corner) pair was never
            received; the message names the gap.
        ContractError: if a sample's private label is not a corner.
    """
    c_const = samples.common_const
    p_const = samples.private_const
    side = p_const.side
    corners = list(_corner_positions(p_const))
    corner_labels = {label for _, _, label in corners}
    if not set(np.unique(samples.private_index)) <= corner_labels:
        raise ContractError("private labels must be corner symbols")
    if jitter_replicas < 0:
        raise ContractError(f"jitter_replicas must be >= 0, got {jitter_replicas}")
    if jitter_replicas > 0 and rng is None:
        raise ContractError("rng is required when jitter is enabled")

    centroids = np.zeros((c_const.order, 2, 2), dtype=complex)
    deviations = []
    for c_sym in range(c_const.order):
        for row_end, col_end, label in corners:
            mask = (samples.common_index == c_sym) & (samples.private_index == label)
            if not np.any(mask):
                raise CoverageError(
                    f"no training sample for common symbol {c_sym} and private corner "
                    f"(row {row_end * (side - 1)}, col {col_end * (side - 1)})")
            cluster = samples.y[mask]
            mu = cluster.mean()
            centroids[c_sym, row_end, col_end] = mu
            deviations.append(cluster - mu)

    spread = np.concatenate(deviations)
    sigma_sq = float(np.mean(np.abs(spread) ** 2)) if spread.size else 0.0

    row_pos, col_pos = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    row_pos = row_pos.reshape(-1)
    col_pos = col_pos.reshape(-1)
    v = row_pos / (side - 1)
    u = col_pos / (side - 1)
    private_labels = p_const.grid_index(row_pos, col_pos)

    ys, commons, privates = [], [], []
    for c_sym in range(c_const.order):
        mu = centroids[c_sym]
        grid = ((1 - v) * (1 - u) * mu[0, 0] + (1 - v) * u * mu[0, 1]
                + v * (1 - u) * mu[1, 0] + v * u * mu[1, 1])
        reps = max(jitter_replicas, 1)
        pts = np.repeat(grid, reps)
        if jitter_replicas > 0 and sigma_sq > 0:
            noise = np.sqrt(sigma_sq / 2.0) * (rng.standard_normal(pts.size)
                                               + 1j * rng.standard_normal(pts.size))
            pts = pts + noise
        ys.append(pts)
        commons.append(np.full(pts.size, c_sym, dtype=np.int64))
        privates.append(np.repeat(private_labels, reps))

    return LabeledTrainingSet(y=np.concatenate(ys),
                              common_index=np.concatenate(commons),
                              private_index=np.concatenate(privates),
                              common_const=c_const, private_const=p_const)


def overhead(training_symbols: int, total_symbols: int) -> float:
    """Training overhead in percent: 100 * T / L.

    ``total_symbols`` counts training plus data symbols of one fading block.
    """
    if total_symbols <= 0:
        raise ContractError(f"total_symbols must be > 0, got {total_symbols}")
    if not 0 <= training_symbols <= total_symbols:
        raise ContractError(
            f"training_symbols must lie in [0, {total_symbols}], got {training_symbols}")
    return 100.0 * training_symbols / total_symbols
