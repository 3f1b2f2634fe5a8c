import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cellular_ia.channel import (
    ArrayGeometry,
    ChannelRealization,
    apply_channel,
    cn,
    draw_channel,
    dump_channels,
    load_channels,
    noise_variance,
    steering_matrix,
)
from cellular_ia.core import SymbolBlock, SystemConfig, owner_map
from cellular_ia.precoding import beamforming_matrix

CFG = SystemConfig(3, 4, 2, 3)


def test_draw_shapes_and_determinism():
    a = draw_channel(CFG, 0, np.random.default_rng(7))
    b = draw_channel(CFG, 0, np.random.default_rng(7))
    assert a.gains.shape == (3, 3, 2, 3, 4)
    assert a[1, 2, 0].shape == (3, 4)
    assert np.array_equal(a.gains, b.gains)


def test_cn_moments():
    h = cn(np.random.default_rng(0), 1_000_000)
    p = np.abs(h) ** 2
    # running-mean accumulator as the oracle for the second moment
    acc = 0.0
    for chunk in np.array_split(p, 100):
        acc += chunk.sum()
    assert abs(acc / p.size - 1.0) < 0.01
    # fourth moment of |h| is 2 for CN(0, 1)
    assert abs(np.mean(p ** 2) - 2.0) / 2.0 < 0.05


def test_slots_uncorrelated():
    rng = np.random.default_rng(3)
    cfg = SystemConfig(2, 100, 100, 50)  # 2*2*100*50*100 = 2e6 entries per slot
    a = draw_channel(cfg, 0, rng).gains.ravel()[:1_000_000]
    b = draw_channel(cfg, 1, rng).gains.ravel()[:1_000_000]
    r = np.vdot(a, b) / np.sqrt(np.vdot(a, a).real * np.vdot(b, b).real)
    assert abs(r) < 0.01


def test_noise_variance():
    assert noise_variance(math.inf) == 0.0
    assert noise_variance(30.0) == pytest.approx(1e-3)


class TestSteering:
    def test_broadside_all_ones(self):
        A = steering_matrix(ArrayGeometry(3), 0.0, 4).columns
        assert A.shape == (3, 4)
        assert np.array_equal(A, np.ones((3, 4)))

    def test_endfire_half_wave(self):
        A = steering_matrix(ArrayGeometry(3), math.pi / 2, 4).columns
        assert np.allclose(A[:, 0], [1, -1, 1], atol=1e-12)

    def test_default_spacing(self):
        g = ArrayGeometry(4, wavelength=0.1)
        assert g.spacing == pytest.approx(0.05)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            steering_matrix(ArrayGeometry(3), 2.0, 4)

    @given(st.floats(-1.5, 1.5), st.integers(1, 16), st.integers(1, 8))
    def test_unit_modulus_and_reproducible(self, angle, N, M):
        geom = ArrayGeometry(N)
        A = steering_matrix(geom, angle, M).columns
        assert np.all(np.abs(np.abs(A) - 1) < 1e-12)
        assert np.array_equal(A, steering_matrix(geom, angle, M).columns)
        mu = 2 * math.pi * geom.spacing / geom.wavelength * math.sin(angle)
        for n in range(N):
            assert abs(A[n, 0] - complex(math.cos(-n * mu), math.sin(-n * mu))) < 1e-12


def _block(symbols, cell=0):
    return SymbolBlock(cell, 0, np.asarray(symbols, dtype=complex), owner_map(len(symbols), 2))


class TestApplyChannel:
    def test_identity_channel(self):
        g = np.zeros((3, 3, 2, 3, 4), dtype=complex)
        g[0, 0, 0] = np.eye(3, 4)
        real = ChannelRealization(0, g)
        s = np.array([1 + 1j, 2, 3j, 4])
        y = apply_channel(real, _block(s))
        assert np.array_equal(y[0, 0], s[:3])

    def test_zero_symbols(self):
        real = draw_channel(CFG, 0, np.random.default_rng(0))
        assert not np.any(apply_channel(real, _block(np.zeros(4))))

    def test_naive_oracle(self):
        rng = np.random.default_rng(5)
        real = draw_channel(CFG, 0, rng)
        s = cn(rng, 4)
        y = apply_channel(real, _block(s, cell=1))
        for j in range(3):
            for k in range(2):
                H = real[1, j, k]
                for n in range(3):
                    acc = 0j
                    for m in range(4):
                        acc += H[n, m] * s[m]
                    assert abs(y[j, k, n] - acc) < 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.complex_numbers(max_magnitude=10, allow_nan=False),
           st.complex_numbers(max_magnitude=10, allow_nan=False))
    def test_linearity(self, seed, a, b):
        rng = np.random.default_rng(seed)
        real = draw_channel(CFG, 0, rng)
        s1, s2 = cn(rng, 4), cn(rng, 4)
        lhs = apply_channel(real, _block(a * s1 + b * s2))
        rhs = a * apply_channel(real, _block(s1)) + b * apply_channel(real, _block(s2))
        assert np.allclose(lhs, rhs, atol=1e-9)

    def test_noise_level(self):
        real = draw_channel(SystemConfig(2, 4, 1, 2), 0, np.random.default_rng(0))
        rng = np.random.default_rng(1)
        ys = np.array([apply_channel(real, {}, 20.0, rng) for _ in range(20000)])
        assert abs(np.mean(np.abs(ys) ** 2) - 0.01) < 0.0005

    def test_noise_needs_generator(self):
        real = draw_channel(CFG, 0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            apply_channel(real, {0: np.ones(4)}, 10.0)

    def test_null_beamformer_blocks_cross_cell(self):
        real = draw_channel(CFG, 0, np.random.default_rng(2))
        w = lambda i, j: beamforming_matrix(i, j, 4).matrix
        y = apply_channel(real, {0: np.ones(4)}, weights=w)
        assert np.all(y[1:] == 0)
        assert np.allclose(y[0, 0], real[0, 0, 0] @ np.ones(4))


def test_dump_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    reals = [draw_channel(CFG, t, rng) for t in range(2)]
    path = tmp_path / "ch.csv"
    dump_channels(reals, path)
    header = path.read_text().splitlines()[0]
    assert header == "slot,i,j,k,row,col,re,im"
    back = load_channels(path)
    assert [r.slot for r in back] == [0, 1]
    for a, b in zip(reals, back):
        assert np.array_equal(a.gains, b.gains)
