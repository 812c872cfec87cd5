#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
合成数据：场景、Wald 降质、SRF 投影与数据集目录。
"""
import os
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.core.constants import DatasetSplit, MANIFEST_FILENAME
from src.core.data_manager import DatasetManager
from src.core.data_sim import (
    SceneSpec, DegradeSpec, gaussian_kernel, gen_scene, wald_degrade, check_srf, default_srf, load_srf,
    srf_project, split_counts, make_sample, make_dataset,
)
from src.core.exceptions import ConfigError, ShapeError
from src.core.tensor_io import read_tensor


class TestScene:

    def test_shape_and_range(self):
        scene = gen_scene(SceneSpec(seed=1, bands=8, size=32))
        assert scene.shape == (1, 8, 32, 32)
        assert scene.min() >= 0.0 and scene.max() <= 1.0

    def test_seeded(self):
        spec = SceneSpec(seed=3, bands=4, size=16)
        assert_array_equal(gen_scene(spec), gen_scene(spec))
        assert not np.array_equal(gen_scene(spec), gen_scene(replace(spec, seed=4)))

    def test_shapes_give_edges(self):
        flat = gen_scene(SceneSpec(seed=2, bands=3, size=32, n_shapes=0, smoothness=8.0))
        edgy = gen_scene(SceneSpec(seed=2, bands=3, size=32, n_shapes=10, smoothness=8.0))
        assert np.abs(np.diff(edgy, axis=3)).max() > np.abs(np.diff(flat, axis=3)).max()

    def test_heavily_smoothed_background_is_flat(self):
        scene = gen_scene(SceneSpec(seed=5, bands=4, size=16, n_shapes=0, smoothness=50.0))
        assert all(scene[0, b].std() < 0.05 for b in range(4))

    def test_shape_edges_shared_across_bands_without_jitter(self):
        scene = gen_scene(SceneSpec(seed=6, bands=5, size=16, n_shapes=4, smoothness=50.0,
                                    shape_contrast=0.2, spectral_jitter=0.0))
        assert np.ptp(scene[0, 2]) > 0.01
        for b in range(1, 5):
            assert np.ptp(scene[0, b] - scene[0, 0]) < 1e-9

    @pytest.mark.parametrize("spec", [SceneSpec(smoothness=0.0), SceneSpec(size=30), SceneSpec(bands=0),
                                      SceneSpec(shape_contrast=-0.1), SceneSpec(spectral_jitter=-1.0)])
    def test_invalid_scene(self, spec):
        with pytest.raises(ConfigError):
            spec.validate(4)


class TestDegrade:

    def test_kernel_normalized(self):
        kernel = gaussian_kernel(5, 1.0)
        assert kernel.shape == (5, 5)
        assert kernel.sum() == pytest.approx(1.0)
        assert kernel[2, 2] == kernel.max()

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            gaussian_kernel(4, 1.0)

    def test_output_size(self, rng):
        assert wald_degrade(rng.uniform(size=(1, 3, 64, 64)), DegradeSpec(ratio=4)).shape == (1, 3, 16, 16)

    def test_constant_image_preserved(self):
        assert_allclose(wald_degrade(np.full((1, 2, 8, 8), 0.3), DegradeSpec(ratio=2, blur_size=5, blur_sigma=1.0)), 0.3)

    def test_decimation_starts_at_origin(self):
        gt = np.zeros((1, 1, 8, 8))
        gt[0, 0, 4, 4] = 1.0
        lr = wald_degrade(gt, DegradeSpec(ratio=4, blur_size=3, blur_sigma=0.5))
        assert lr[0, 0, 1, 1] == pytest.approx(gaussian_kernel(3, 0.5)[1, 1])
        assert lr[0, 0, 0, 0] == 0.0

    def test_indivisible_size(self, rng):
        with pytest.raises(ShapeError):
            wald_degrade(rng.uniform(size=(1, 1, 10, 10)), DegradeSpec(ratio=4))

    def test_matches_explicit_blur_and_decimation(self, rng):
        gt = rng.uniform(size=(1, 2, 8, 8))
        kernel = gaussian_kernel(3, 0.7)
        expected = np.zeros((1, 2, 4, 4))
        for b in range(2):
            for i in range(4):
                for j in range(4):
                    for u in range(3):
                        for v in range(3):
                            y = min(max(2 * i + u - 1, 0), 7)
                            x = min(max(2 * j + v - 1, 0), 7)
                            expected[0, b, i, j] += kernel[u, v] * gt[0, b, y, x]
        assert_allclose(wald_degrade(gt, DegradeSpec(ratio=2, blur_size=3, blur_sigma=0.7)), expected, rtol=1e-12)

    def test_blur_conserves_mean(self, rng):
        gt = np.full((1, 1, 10, 10), 0.4)
        gt[0, 0, 2:8, 2:8] = rng.uniform(size=(6, 6))
        blurred = wald_degrade(gt, DegradeSpec(ratio=1, blur_size=3, blur_sigma=0.8))
        assert blurred.mean() == pytest.approx(gt.mean(), rel=1e-12)


class TestSpectralResponse:

    def test_identity_projection(self, rng):
        gt = rng.uniform(size=(1, 3, 4, 4))
        assert_allclose(srf_project(gt, np.eye(3)), gt)

    def test_two_band_projection(self):
        gt = np.array([[[[1.0, 2.0], [3.0, 4.0]], [[5.0, 6.0], [7.0, 8.0]]]])
        hr = srf_project(gt, np.array([[0.25, 0.75], [1.0, 0.0]]))
        assert_allclose(hr[0, 0], [[4.0, 5.0], [6.0, 7.0]])
        assert_allclose(hr[0, 1], gt[0, 0])

    def test_default_single_row_is_mean(self, rng):
        gt = rng.uniform(size=(1, 4, 4, 4))
        assert_allclose(srf_project(gt, default_srf(1, 4)), gt.mean(axis=1, keepdims=True))

    def test_default_rows_normalized(self):
        srf = default_srf(3, 31)
        assert srf.shape == (3, 31)
        assert_allclose(srf.sum(axis=1), 1.0)

    @pytest.mark.parametrize("srf", [np.ones((1, 3)), -np.eye(2), np.ones(3) / 3])
    def test_invalid_matrix(self, srf):
        with pytest.raises(ConfigError):
            check_srf(srf)

    def test_load_from_text(self, tmp_path):
        path = tmp_path / "srf.txt"
        path.write_text("0.25 0.25 0.5\n1 0 0\n", encoding="utf-8")
        assert load_srf(str(path)).shape == (2, 3)

    def test_shape_checked_against_bands(self):
        with pytest.raises(ConfigError):
            DegradeSpec(hr_bands=2, srf=np.eye(3)[:2]).srf_for(4)


class TestDataset:

    def test_split_counts(self):
        counts = split_counts(10, (0.8, 0.0, 0.2))
        assert counts == {DatasetSplit.TRAIN: 8, DatasetSplit.VAL: 0, DatasetSplit.TEST: 2}
        assert sum(split_counts(7, (0.7, 0.2, 0.1)).values()) == 7

    def test_split_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            split_counts(10, (0.5, 0.2, 0.2))

    def test_sample_tensors_consistent(self):
        degrade = DegradeSpec(ratio=4, hr_bands=1)
        sample = make_sample(SceneSpec(seed=5, bands=4, size=32), degrade)
        assert sample["lr"].shape == (1, 4, 8, 8)
        assert sample["lrup"].shape == sample["gt"].shape == (1, 4, 32, 32)
        assert sample["hr"].shape == (1, 1, 32, 32)

    def test_manifest_and_files(self, toy_dataset):
        dataset = DatasetManager().setup_dataset_directory(toy_dataset)
        assert len(dataset.get_split_ids(DatasetSplit.TRAIN)) == 8
        assert len(dataset.get_split_ids(DatasetSplit.TEST)) == 2
        assert not dataset.has_split(DatasetSplit.VAL)
        info = dataset.get_dataset_info()
        assert (info["c_lr"], info["c_hr"]) == (4, 1)
        assert info["lr_size"] == (4, 4)

    def test_stored_lr_is_degraded_gt(self, toy_dataset):
        dataset = DatasetManager().setup_dataset_directory(toy_dataset)
        for sample_id in dataset.get_split_ids(DatasetSplit.TEST):
            gt = dataset.load_sample(sample_id).gt
            assert_allclose(dataset.load_lr(sample_id), wald_degrade(gt, DegradeSpec(ratio=4)), rtol=0, atol=0)

    def test_generation_is_byte_identical(self, tmp_path):
        args = (SceneSpec(seed=11, bands=3, size=16, n_shapes=2), DegradeSpec(ratio=2), 4, (0.5, 0.25, 0.25))
        first, second = str(tmp_path / "a"), str(tmp_path / "b")
        make_dataset(*args, out_dir=first, max_workers=3)
        make_dataset(*args, out_dir=second, max_workers=1)
        names = sorted(os.listdir(os.path.join(first, "samples")))
        assert names == sorted(os.listdir(os.path.join(second, "samples")))
        assert len(names) == 16
        for name in names + [MANIFEST_FILENAME]:
            sub = "" if name == MANIFEST_FILENAME else "samples"
            with open(os.path.join(first, sub, name), "rb") as fa, open(os.path.join(second, sub, name), "rb") as fb:
                assert fa.read() == fb.read(), name

    def test_samples_differ(self, toy_dataset):
        a = read_tensor(os.path.join(toy_dataset, "samples", "s00000_gt.ten"))
        b = read_tensor(os.path.join(toy_dataset, "samples", "s00001_gt.ten"))
        assert not np.array_equal(a, b)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            DatasetManager().setup_dataset_directory(str(tmp_path))

    def test_unknown_sample(self, toy_dataset):
        with pytest.raises(KeyError):
            DatasetManager().setup_dataset_directory(toy_dataset).load_sample("s99999")
