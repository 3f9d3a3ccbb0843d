"""Gray-mapped square QAM constellations and soft-bit arithmetic.

A constellation is indexed by its M-bit Gray label (most significant bit
first).  The left M/2 label bits select the column of the square grid and
the right M/2 bits select the row; per-axis reflected Gray coding makes
neighbouring points differ in exactly one bit.  All alphabets are scaled
to unit average symbol energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, FramingError, InvalidModulationError, NumericError

SUPPORTED_BITS = (2, 4, 6, 8)

CONSTELLATION_NAMES = {"qpsk": 2, "16qam": 4, "64qam": 6, "256qam": 8}

#: Soft-bit probabilities are clamped to [LPR_EPS, 1 - LPR_EPS] before the
#: log-ratio so the output stays finite.
LPR_EPS = 1e-12

#: Tolerance on the normalization of class-probability vectors.
PROB_TOL = 1e-9


def gray_encode(n):
    """Map a position index to its reflected Gray code."""
    n = np.asarray(n)
    return n ^ (n >> 1)


def gray_decode(g):
    """Invert :func:`gray_encode` (Gray code back to position index)."""
    g = np.asarray(g).copy()
    shift = 1
    # enough iterations for 64-bit inputs; values here are < 2**4
    while shift < g.dtype.itemsize * 8:
        g ^= g >> shift
        shift <<= 1
    return g


@dataclass(frozen=True, eq=False)
class Constellation:
    """Square QAM alphabet with Gray labels and row/column class maps.

    Attributes:
        bits_per_symbol: number of bits M carried by one symbol.
        symbols: complex points, indexed by the M-bit Gray label.
        row_class: label index -> row class in [0, 2**(M/2)).
        col_class: label index -> column class in [0, 2**(M/2)).
    """

    bits_per_symbol: int
    symbols: np.ndarray = field(repr=False)
    row_class: np.ndarray = field(repr=False)
    col_class: np.ndarray = field(repr=False)

    @property
    def order(self) -> int:
        return 1 << self.bits_per_symbol

    @property
    def side(self) -> int:
        """Number of rows (= columns) of the square grid."""
        return 1 << (self.bits_per_symbol // 2)

    @property
    def name(self) -> str:
        for name, m in CONSTELLATION_NAMES.items():
            if m == self.bits_per_symbol:
                return name
        raise InvalidModulationError(f"no name for M={self.bits_per_symbol}")

    def row_of(self, index):
        return self.row_class[index]

    def col_of(self, index):
        return self.col_class[index]

    def index_from_classes(self, row, col):
        """Recombine (row, col) classes into the symbol label index."""
        return (np.asarray(col) << (self.bits_per_symbol // 2)) | np.asarray(row)

    def bits_of(self, index):
        """Gray label bits of ``index``, MSB first, shape (..., M)."""
        index = np.asarray(index)
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        return (index[..., None] >> shifts) & 1

    def index_of_bits(self, bits):
        """Inverse of :meth:`bits_of` for one M-bit group per row."""
        bits = np.asarray(bits)
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        return bits @ weights

    @property
    def corner_indices(self) -> np.ndarray:
        """Labels of the four outermost points, by (row, col) grid position.

        Order: (top-left, top-right, bottom-left, bottom-right) in grid
        positions (0,0), (0,side-1), (side-1,0), (side-1,side-1).
        """
        last = self.side - 1
        rows = np.array([0, 0, last, last])
        cols = np.array([0, last, 0, last])
        return self.index_from_classes(gray_encode(rows), gray_encode(cols))

    def grid_index(self, row_pos, col_pos):
        """Symbol label at geometric grid position (row, col)."""
        return self.index_from_classes(gray_encode(np.asarray(row_pos)),
                                       gray_encode(np.asarray(col_pos)))


def build_constellation(bits_per_symbol: int) -> Constellation:
    """Construct the unit-energy Gray-mapped square QAM alphabet.

    Args:
        bits_per_symbol: even M in {2, 4, 6, 8} (QPSK .. 256QAM).

    Raises:
        InvalidModulationError: for odd or unsupported M.
    """
    if bits_per_symbol not in SUPPORTED_BITS:
        raise InvalidModulationError(
            f"unsupported modulation: M={bits_per_symbol!r}, expected one of {SUPPORTED_BITS}")
    m = bits_per_symbol
    half = m // 2
    side = 1 << half

    labels = np.arange(1 << m)
    col_class = labels >> half
    row_class = labels & (side - 1)

    # Gray class value -> geometric position along the axis, then to the
    # odd-integer lattice {-(side-1), ..., side-1} scaled to unit energy.
    col_pos = gray_decode(col_class)
    row_pos = gray_decode(row_class)
    scale = np.sqrt(3.0 / (2.0 * (side**2 - 1)))
    in_phase = (2 * col_pos - (side - 1)) * scale
    quadrature = (2 * row_pos - (side - 1)) * scale
    symbols = in_phase + 1j * quadrature

    return Constellation(bits_per_symbol=m, symbols=symbols,
                         row_class=row_class, col_class=col_class)


def constellation_from_name(name: str) -> Constellation:
    """Build a constellation from its config string ("qpsk", "16qam", ...)."""
    key = name.lower()
    if key not in CONSTELLATION_NAMES:
        raise InvalidModulationError(
            f"unknown constellation {name!r}; expected one of {sorted(CONSTELLATION_NAMES)}")
    return build_constellation(CONSTELLATION_NAMES[key])


def modulate(bits, constellation: Constellation) -> np.ndarray:
    """Map a bit sequence to symbols, M bits per symbol, MSB first.

    Raises:
        FramingError: if the bit count is not a multiple of M.
    """
    bits = np.asarray(bits, dtype=np.int64)
    m = constellation.bits_per_symbol
    if bits.size % m:
        raise FramingError(f"bit count {bits.size} not divisible by {m}")
    if bits.size == 0:
        return np.empty(0, dtype=complex)
    groups = bits.reshape(-1, m)
    return constellation.symbols[constellation.index_of_bits(groups)]


def demodulate(symbols, constellation: Constellation) -> np.ndarray:
    """Hard-decision demap: nearest symbol, then its Gray label bits."""
    idx = nearest_symbol(symbols, constellation)
    return constellation.bits_of(idx).reshape(-1)


def nearest_symbol(y, constellation: Constellation):
    """Minimum-distance symbol label for ``y`` (scalar or array).

    Ties break toward the lowest label index.

    Raises:
        NumericError: on non-finite input.
    """
    y = np.asarray(y, dtype=complex)
    if not np.all(np.isfinite(y)):
        raise NumericError("non-finite input to nearest_symbol")
    if y.ndim == 0:
        d = np.abs(y - constellation.symbols) ** 2
        return int(np.argmin(d))
    flat = y.reshape(-1)
    idx = np.empty(flat.size, dtype=np.int64)
    # keep the distance matrix below ~64 MB for 256QAM batches
    chunk = max(1, (1 << 22) // constellation.order)
    for start in range(0, flat.size, chunk):
        block = flat[start:start + chunk]
        d = np.abs(block[:, None] - constellation.symbols) ** 2
        idx[start:start + chunk] = np.argmin(d, axis=1)
    return idx.reshape(y.shape)


@dataclass(frozen=True, eq=False)
class SoftBitVector:
    """Per-bit probabilities of being '1' and their log-probability ratios.

    ``probabilities`` has shape (M,) or (batch, M); ``lprs`` matches.
    """

    probabilities: np.ndarray
    lprs: np.ndarray

    def hard_bits(self) -> np.ndarray:
        """Threshold at 0.5; an exact tie decides '0'."""
        return (self.probabilities > 0.5).astype(np.int64)


def lpr(p):
    """Bit log-probability ratio log((1-p)/p), clamped to stay finite."""
    p = np.clip(np.asarray(p, dtype=float), LPR_EPS, 1.0 - LPR_EPS)
    return np.log((1.0 - p) / p)


def _class_bit_masks(half: int) -> np.ndarray:
    """(half, 2**half) matrix; row j flags classes whose j-th bit (MSB first) is 1."""
    classes = np.arange(1 << half)
    shifts = np.arange(half - 1, -1, -1)
    return ((classes[None, :] >> shifts[:, None]) & 1).astype(float)


def soft_bits_from_class_probs(row_probs, col_probs, constellation: Constellation) -> SoftBitVector:
    """Aggregate row/column class probabilities into per-bit probabilities.

    The probability that bit m is '1' is the total probability of the
    classes whose own m-th bit is '1'; column classes produce the left M/2
    bits and row classes the right M/2 bits.

    Args:
        row_probs: shape (2**(M/2),) or (batch, 2**(M/2)), sums to 1.
        col_probs: same contract as ``row_probs``.

    Raises:
        ContractError: negative entries or normalization off by > 1e-9.
    """
    half = constellation.bits_per_symbol // 2
    side = constellation.side
    masks = _class_bit_masks(half)

    out = []
    for tag, probs in (("col_probs", col_probs), ("row_probs", row_probs)):
        probs = np.asarray(probs, dtype=float)
        if probs.shape[-1] != side:
            raise ContractError(f"{tag} must have length {side}, got {probs.shape[-1]}")
        if np.any(probs < 0):
            raise ContractError(f"{tag} contains negative entries")
        if np.any(np.abs(probs.sum(axis=-1) - 1.0) > PROB_TOL):
            raise ContractError(f"{tag} is not normalized within {PROB_TOL}")
        out.append(probs @ masks.T)

    probabilities = np.concatenate(out, axis=-1)
    return SoftBitVector(probabilities=probabilities, lprs=lpr(probabilities))
