#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.exceptions import ShapeError
from src.core.q2n import hc_mult, hc_conj, hc_modulus, effective_block, q2n_index, q2n_map, uiqi_band


def reference_uiqi(x, y, block):
    """逐块的经典 UIQI 公式 (总体方差)，块取平均。"""
    values = []
    for i in range(0, x.shape[0] - block + 1, block):
        for j in range(0, x.shape[1] - block + 1, block):
            a = x[i:i + block, j:j + block].ravel()
            b = y[i:i + block, j:j + block].ravel()
            ma, mb = a.mean(), b.mean()
            va, vb = a.var(), b.var()
            cov = np.mean((a - ma) * (b - mb))
            values.append(4 * cov * ma * mb / ((va + vb) * (ma ** 2 + mb ** 2)))
    return float(np.mean(values))


class TestHypercomplex:

    @pytest.mark.parametrize("dim", [2, 4, 8])
    def test_norm_is_multiplicative(self, rng, dim):
        x, y = rng.standard_normal((5, dim)), rng.standard_normal((5, dim))
        assert_allclose(hc_modulus(hc_mult(x, y)), hc_modulus(x) * hc_modulus(y), rtol=1e-12)

    @pytest.mark.parametrize("dim", [2, 4, 8, 16, 32])
    def test_product_with_conjugate_is_real(self, rng, dim):
        z = rng.standard_normal((3, dim))
        prod = hc_mult(z, hc_conj(z))
        assert_allclose(prod[:, 0], np.sum(z * z, axis=1), rtol=1e-12)
        assert_allclose(prod[:, 1:], 0.0, atol=1e-12)

    @pytest.mark.parametrize("dim", [4, 8])
    def test_conjugate_reverses_product(self, rng, dim):
        x, y = rng.standard_normal(dim), rng.standard_normal(dim)
        assert_allclose(hc_conj(hc_mult(x, y)), hc_mult(hc_conj(y), hc_conj(x)), atol=1e-12)

    def test_unit_element(self, rng):
        x = rng.standard_normal(8)
        one = np.zeros(8)
        one[0] = 1.0
        assert_allclose(hc_mult(x, one), x)
        assert_allclose(hc_mult(one, x), x)

    def test_quaternion_units(self):
        i, j, k = np.eye(4)[1], np.eye(4)[2], np.eye(4)[3]
        assert_allclose(hc_mult(i, j), k)
        assert_allclose(hc_mult(j, i), -k)


class TestQualityIndex:

    @pytest.mark.parametrize("bands", [1, 3, 4, 8, 31])
    def test_identical_images_score_one(self, rng, bands):
        x = rng.uniform(0.1, 1.0, size=(2, bands, 32, 32))
        assert q2n_index(x, x.copy(), 16) == pytest.approx(1.0, abs=1e-12)

    def test_single_band_matches_classic_formula(self, rng):
        ref = rng.uniform(0.2, 0.8, size=(64, 64))
        x = ref + rng.normal(0, 0.02, size=ref.shape)
        expected = reference_uiqi(ref, x, 32)
        assert uiqi_band(x, ref, 32) == pytest.approx(expected, abs=1e-10)
        assert q2n_index(x[None, None], ref[None, None], 32) == pytest.approx(abs(expected), abs=1e-10)

    def test_signed_uiqi_for_inverted_image(self, rng):
        ref = rng.uniform(0.2, 0.8, size=(16, 16))
        assert uiqi_band(1.0 - ref, ref, 16) < 0

    def test_quality_drops_with_noise(self, rng):
        ref = rng.uniform(0.2, 0.8, size=(1, 4, 32, 32))
        small = q2n_index(ref + rng.normal(0, 0.01, ref.shape), ref, 16)
        large = q2n_index(ref + rng.normal(0, 0.2, ref.shape), ref, 16)
        assert 1.0 > small > large

    def test_block_clamped_to_image(self):
        assert effective_block(32, 16, 20) == 16
        assert effective_block(8, 16, 20) == 8

    def test_map_shape(self, rng):
        x = rng.uniform(size=(1, 4, 32, 48))
        assert q2n_map(x, x, 16).shape == (2, 3)

    def test_constant_blocks_skipped(self):
        x = np.full((1, 1, 16, 16), 0.0)
        assert q2n_index(x, x, 8) == 1.0

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            q2n_index(rng.uniform(size=(1, 4, 8, 8)), rng.uniform(size=(1, 3, 8, 8)))
