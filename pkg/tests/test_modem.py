"""Constellation construction, bit mapping, and soft-bit arithmetic."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsmalink import modem
from rsmalink.errors import (
    ContractError,
    FramingError,
    InvalidModulationError,
    NumericError,
)

ALL_BITS = [2, 4, 6, 8]


def brute_force_nearest(y, constellation):
    """Independent minimum-distance scan with explicit first-min tie rule."""
    best_idx = 0
    best_d = np.inf
    for i, s in enumerate(constellation.symbols):
        d = (y.real - s.real) ** 2 + (y.imag - s.imag) ** 2
        if d < best_d:
            best_d = d
            best_idx = i
    return best_idx


class TestBuildConstellation:
    def test_qpsk_points(self):
        c = modem.build_constellation(2)
        expected = {(re, im) for re in (-1, 1) for im in (-1, 1)}
        got = {(round(np.sqrt(2) * s.real), round(np.sqrt(2) * s.imag)) for s in c.symbols}
        assert got == expected

    def test_16qam_lattice(self):
        c = modem.build_constellation(4)
        scaled = c.symbols * np.sqrt(10)
        levels = {-3, -1, 1, 3}
        assert {round(v) for v in scaled.real} <= levels
        assert {round(v) for v in scaled.imag} <= levels
        assert len(set(np.round(scaled, 6))) == 16

    @pytest.mark.parametrize("m", ALL_BITS)
    def test_unit_average_energy(self, m):
        c = modem.build_constellation(m)
        assert abs(np.mean(np.abs(c.symbols) ** 2) - 1.0) < 1e-12

    def test_256qam_row_col_bijection(self):
        # exhaustive enumeration over all 256 labels
        c = modem.build_constellation(8)
        pairs = {(int(c.row_of(i)), int(c.col_of(i))) for i in range(256)}
        assert len(pairs) == 256
        assert pairs == {(r, col) for r in range(16) for col in range(16)}
        for i in range(256):
            assert c.index_from_classes(c.row_of(i), c.col_of(i)) == i

    @pytest.mark.parametrize("m", ALL_BITS)
    def test_label_bits_split_into_col_and_row(self, m):
        c = modem.build_constellation(m)
        half = m // 2
        for i in range(c.order):
            bits = c.bits_of(i)
            col = int("".join(map(str, bits[:half])), 2)
            row = int("".join(map(str, bits[half:])), 2)
            assert col == c.col_of(i)
            assert row == c.row_of(i)

    @pytest.mark.parametrize("m", ALL_BITS)
    def test_gray_adjacency(self, m):
        # neighbours along a row or column differ in exactly one label bit
        c = modem.build_constellation(m)
        side = c.side
        label = np.zeros((side, side), dtype=int)
        for rp in range(side):
            for cp in range(side):
                label[rp, cp] = c.grid_index(rp, cp)
        for rp in range(side):
            for cp in range(side):
                if cp + 1 < side:
                    diff = label[rp, cp] ^ label[rp, cp + 1]
                    assert bin(diff).count("1") == 1
                if rp + 1 < side:
                    diff = label[rp, cp] ^ label[rp + 1, cp]
                    assert bin(diff).count("1") == 1

    @pytest.mark.parametrize("bad", [1, 3, 5, 7, 10, 0, -2])
    def test_rejects_unsupported_m(self, bad):
        with pytest.raises(InvalidModulationError):
            modem.build_constellation(bad)

    def test_from_name(self):
        for name, m in modem.CONSTELLATION_NAMES.items():
            assert modem.constellation_from_name(name).bits_per_symbol == m
        with pytest.raises(InvalidModulationError):
            modem.constellation_from_name("8psk")


class TestModulate:
    def test_qpsk_label_zero(self):
        c = modem.build_constellation(2)
        assert modem.modulate([0, 0], c)[0] == c.symbols[0]

    def test_empty_bits(self):
        c = modem.build_constellation(2)
        assert modem.modulate([], c).size == 0

    def test_bad_framing(self):
        c = modem.build_constellation(4)
        with pytest.raises(FramingError):
            modem.modulate([0, 1, 0], c)

    @pytest.mark.parametrize("m", ALL_BITS)
    def test_exhaustive_round_trip(self, m):
        # demap(modulate(b)) == b for every label of every constellation
        c = modem.build_constellation(m)
        for i in range(c.order):
            bits = c.bits_of(i)
            sym = modem.modulate(bits, c)
            assert np.array_equal(modem.demodulate(sym, c), bits)

    @given(data=st.data(), m=st.sampled_from(ALL_BITS))
    @settings(max_examples=50, deadline=None)
    def test_round_trip_random_streams(self, data, m):
        c = modem.build_constellation(m)
        n_sym = data.draw(st.integers(min_value=0, max_value=16))
        bits = data.draw(st.lists(st.integers(0, 1), min_size=n_sym * m, max_size=n_sym * m))
        sym = modem.modulate(bits, c)
        assert np.array_equal(modem.demodulate(sym, c), np.asarray(bits, dtype=int))


class TestNearestSymbol:
    @pytest.mark.parametrize("m", ALL_BITS)
    def test_exact_points(self, m):
        c = modem.build_constellation(m)
        idx = modem.nearest_symbol(c.symbols, c)
        assert np.array_equal(idx, np.arange(c.order))

    def test_qpsk_origin_tie_breaks_low(self):
        c = modem.build_constellation(2)
        assert modem.nearest_symbol(0j, c) == 0

    def test_rejects_non_finite(self):
        c = modem.build_constellation(2)
        with pytest.raises(NumericError):
            modem.nearest_symbol(np.nan + 0j, c)

    @pytest.mark.parametrize("m", ALL_BITS)
    def test_against_brute_force(self, m):
        c = modem.build_constellation(m)
        rng = np.random.default_rng(1234 + m)
        ys = rng.normal(size=200) + 1j * rng.normal(size=200)
        fast = modem.nearest_symbol(ys, c)
        for y, got in zip(ys, fast):
            assert got == brute_force_nearest(y, c)

    @pytest.mark.parametrize("m", ALL_BITS)
    def test_exhaustive_scan_ten_thousand_points(self, m):
        # alphabet-major scan with explicit first-min bookkeeping
        c = modem.build_constellation(m)
        rng = np.random.default_rng(4321 + m)
        ys = rng.normal(size=10_000) + 1j * rng.normal(size=10_000)
        best_d = np.full(ys.size, np.inf)
        best_i = np.zeros(ys.size, dtype=np.int64)
        for i, s in enumerate(c.symbols):
            d = (ys.real - s.real) ** 2 + (ys.imag - s.imag) ** 2
            better = d < best_d
            best_d[better] = d[better]
            best_i[better] = i
        assert np.array_equal(modem.nearest_symbol(ys, c), best_i)


class TestSoftBits:
    def test_qpsk_degenerate_rows(self):
        c = modem.build_constellation(2)
        sb = modem.soft_bits_from_class_probs([1.0, 0.0], [0.5, 0.5], c)
        # one row bit (right bit), one col bit (left bit)
        assert sb.probabilities[1] == 0.0
        sb = modem.soft_bits_from_class_probs([0.0, 1.0], [0.5, 0.5], c)
        assert sb.probabilities[1] == 1.0

    def test_16qam_hand_summed(self):
        # row probs [0.7, 0.1, 0.1, 0.1]: bit '1' sets are {2,3} and {1,3}
        c = modem.build_constellation(4)
        row = [0.7, 0.1, 0.1, 0.1]
        col = [0.25, 0.25, 0.25, 0.25]
        sb = modem.soft_bits_from_class_probs(row, col, c)
        assert sb.probabilities[2] == pytest.approx(0.1 + 0.1, abs=1e-15)
        assert sb.probabilities[3] == pytest.approx(0.1 + 0.1, abs=1e-15)
        assert np.allclose(sb.probabilities[:2], 0.5)

    @pytest.mark.parametrize("m", ALL_BITS)
    def test_uniform_probs_give_half(self, m):
        c = modem.build_constellation(m)
        side = c.side
        u = np.full(side, 1.0 / side)
        sb = modem.soft_bits_from_class_probs(u, u, c)
        assert np.allclose(sb.probabilities, 0.5)

    @pytest.mark.parametrize("m", ALL_BITS)
    def test_one_hot_thresholding_recovers_gray_label(self, m):
        c = modem.build_constellation(m)
        side = c.side
        for i in range(c.order):
            row = np.zeros(side)
            col = np.zeros(side)
            row[c.row_of(i)] = 1.0
            col[c.col_of(i)] = 1.0
            sb = modem.soft_bits_from_class_probs(row, col, c)
            assert np.array_equal(sb.hard_bits(), c.bits_of(i))

    def test_batch_shape(self):
        c = modem.build_constellation(4)
        rng = np.random.default_rng(0)
        row = rng.dirichlet(np.ones(4), size=5)
        col = rng.dirichlet(np.ones(4), size=5)
        sb = modem.soft_bits_from_class_probs(row, col, c)
        assert sb.probabilities.shape == (5, 4)
        assert sb.lprs.shape == (5, 4)

    def test_rejects_unnormalized(self):
        c = modem.build_constellation(2)
        with pytest.raises(ContractError):
            modem.soft_bits_from_class_probs([0.6, 0.6], [0.5, 0.5], c)
        with pytest.raises(ContractError):
            modem.soft_bits_from_class_probs([1.5, -0.5], [0.5, 0.5], c)


class TestLpr:
    def test_half_is_zero(self):
        assert modem.lpr(0.5) == 0.0

    def test_hand_value(self):
        assert modem.lpr(0.9) == pytest.approx(np.log(1.0 / 9.0), rel=1e-12)
        assert modem.lpr(0.9) == pytest.approx(-2.1972245773362196, rel=1e-12)

    def test_clamped_extremes_finite(self):
        assert np.isfinite(modem.lpr(1.0))
        assert np.isfinite(modem.lpr(0.0))
        assert modem.lpr(1.0) < -20
        assert modem.lpr(0.0) > 20

    @given(st.floats(min_value=1e-9, max_value=1 - 1e-9))
    @settings(max_examples=100, deadline=None)
    def test_strictly_decreasing(self, p):
        eps = 1e-10
        assert modem.lpr(p + eps) < modem.lpr(p - eps)
