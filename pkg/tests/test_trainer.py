#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
训练循环、日志与梯度审计。
"""
import os
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from src.core.constants import DatasetSplit
from src.core.data_manager import DatasetManager
from src.core.data_sim import make_dataset
from src.core.exceptions import DivergenceError
from src.core.laresnet import ModelConfig, LAResNetParams, init_params, loss_and_grad, load_checkpoint
from src.core.trainer import (
    TRAIN_LOG_NAME, train, evaluate_loss, numerical_gradient, relative_error, toy_batch, gradcheck,
)
from src.handlers.config_handler import ConfigHandler


def read_log(path):
    return pd.read_csv(path, sep="\t", header=None, names=["epoch", "lr", "loss", "wall"])


@pytest.fixture
def dataset(toy_dataset):
    return DatasetManager().setup_dataset_directory(toy_dataset)


class TestTrain:

    def test_writes_log_and_checkpoints(self, tmp_path, toy_config, short_train_config, dataset):
        result = train(toy_config, short_train_config, dataset, str(tmp_path / "run"))
        log = read_log(result.log_path)
        assert list(log["epoch"]) == [0, 1, 2]
        assert list(log["lr"]) == [1e-3, 1e-3, 1e-4]
        assert np.all(np.isfinite(log["loss"])) and np.all(np.diff(log["wall"]) >= 0)
        assert result.final_loss == pytest.approx(log["loss"].iloc[-1], rel=1e-15)
        for directory in (result.final_checkpoint, result.best_checkpoint):
            params, config, meta = load_checkpoint(directory)
            assert config == toy_config
            assert meta["seed"] == "0"

    def test_first_epoch_loss_is_initial_loss(self, tmp_path, toy_config, short_train_config, dataset):
        config = replace(short_train_config, epochs=1, phase_split=1, batch_size=8)
        train(toy_config, config, dataset, str(tmp_path / "run"))
        initial, _ = evaluate_loss(init_params(toy_config, config.seed), dataset.load_split(DatasetSplit.TRAIN), toy_config)
        logged = read_log(os.path.join(str(tmp_path / "run"), TRAIN_LOG_NAME))["loss"].iloc[0]
        assert logged == pytest.approx(initial, rel=1e-10)

    def test_same_seed_same_log(self, tmp_path, toy_config, short_train_config, dataset):
        a = train(toy_config, short_train_config, dataset, str(tmp_path / "a"))
        b = train(toy_config, short_train_config, dataset, str(tmp_path / "b"))
        with open(a.log_path) as fa, open(b.log_path) as fb:
            cols_a = [line.split("\t")[:3] for line in fa]
            cols_b = [line.split("\t")[:3] for line in fb]
        assert cols_a == cols_b

    def test_band_mismatch_rejected(self, tmp_path, short_train_config, dataset):
        config = ModelConfig(blocks=1, channels=4, c_lr=3, c_hr=1)
        with pytest.raises(ValueError):
            train(config, short_train_config, dataset, str(tmp_path / "run"))

    def test_best_checkpoint_scored_after_update(self, tmp_path, toy_config, short_train_config, dataset):
        result = train(toy_config, short_train_config, dataset, str(tmp_path / "run"))
        best, _, _ = load_checkpoint(result.best_checkpoint)
        rescored, _ = evaluate_loss(best, dataset.load_split(DatasetSplit.TRAIN), toy_config)
        assert rescored == pytest.approx(result.best_score, rel=1e-12)
        final, _ = evaluate_loss(result.params, dataset.load_split(DatasetSplit.TRAIN), toy_config)
        assert result.best_score <= final * (1 + 1e-12)

    def test_divergence_keeps_parameters_before_last_update(self, tmp_path, toy_config, short_train_config,
                                                            dataset, monkeypatch):
        seen = []

        def nan_on_second_step(params, batch, config):
            seen.append(params.copy())
            outputs = loss_and_grad(params, batch, config)
            if len(seen) == 2:
                return (outputs[0]._replace(loss=float("nan")),) + tuple(outputs[1:])
            return outputs

        monkeypatch.setattr("src.core.trainer.loss_and_grad", nan_on_second_step)
        config = replace(short_train_config, batch_size=8)
        with pytest.raises(DivergenceError) as info:
            train(toy_config, config, dataset, str(tmp_path / "run"))
        assert os.path.isdir(info.value.checkpoint_path)
        saved, _, _ = load_checkpoint(info.value.checkpoint_path)
        for name, value in saved.groups().items():
            np.testing.assert_array_equal(value, seen[0].groups()[name])
        assert not all(np.array_equal(v, seen[1].groups()[k]) for k, v in saved.groups().items())

    @pytest.mark.slow
    def test_toy_preset_overfits_below_mse_threshold(self, tmp_path):
        run = ConfigHandler().load("toy")
        assert run.train.epochs == 2000 and run.train.lr_phase1 == 1e-3
        assert run.train.phase_split >= run.train.epochs
        make_dataset(run.scene_spec(), run.degrade_spec(), run.data.n_samples, run.data.fractions,
                     str(tmp_path / "data"))
        dataset = DatasetManager().setup_dataset_directory(str(tmp_path / "data"))
        assert len(dataset.load_split(DatasetSplit.TRAIN)) == 4

        result = train(run.model, run.train, dataset, str(tmp_path / "run"), run.metric)
        log = read_log(result.log_path)
        assert len(log) == 2000
        assert np.all(log["lr"] == 1e-3)
        assert result.final_mse < 1e-4, f"最终 MSE {result.final_mse:.3e}"


class TestNumericalGradient:

    def test_quadratic(self):
        x = np.array([1.0, -2.0, 0.5])
        grad = numerical_gradient(lambda v: float(np.sum(v ** 2)), x)
        np.testing.assert_allclose(grad, 2 * x, rtol=1e-8)
        np.testing.assert_array_equal(x, [1.0, -2.0, 0.5])

    def test_selected_indices_only(self):
        grad = numerical_gradient(lambda v: float(np.sum(v ** 2)), np.ones(4), indices=[2])
        assert grad[2] == pytest.approx(2.0) and grad[[0, 1, 3]].tolist() == [0.0, 0.0, 0.0]

    def test_relative_error_floor(self):
        assert relative_error(0.0, 0.0, 1e-4) == 0.0
        assert relative_error(1e-12, 0.0, 1e-4) < 1e-4
        assert relative_error(1.0, 1.1, 1e-4) == pytest.approx(0.1 / 1.1)


class TestGradcheck:

    def test_toy_network_passes(self, toy_config):
        report = gradcheck(toy_config, seed=0, n_coords=4)
        assert report.passed, report.to_text()
        assert report.table["group"].iloc[-1] == "input"
        assert len(report.table) == len(init_params(toy_config, 0).groups()) + 1

    @pytest.mark.parametrize("mode", ["SC+NB", "SC+CB", "LAC+NB"])
    def test_other_modes_pass(self, toy_config, mode):
        config = ModelConfig.from_mapping({**toy_config.to_mapping(), "mode": mode, "blocks": "1"})
        assert gradcheck(config, seed=1, n_coords=4).passed

    def test_sign_flipped_gradient_fails(self, toy_config):
        def flipped(params, sample, config):
            result, grads, d_lr_up, d_hr = loss_and_grad(params, sample, config)
            groups = grads.groups()
            groups["head.main_kernel"] = -groups["head.main_kernel"]
            return result, LAResNetParams.from_groups(groups, config), d_lr_up, d_hr

        report = gradcheck(toy_config, seed=0, n_coords=4, loss_and_grad_fn=flipped)
        assert not report.passed
        failed = report.table.loc[~report.table["passed"], "group"].tolist()
        assert failed == ["head.main_kernel"]

    def test_toy_batch_is_seeded(self, toy_config):
        a, b = toy_batch(toy_config, 3), toy_batch(toy_config, 3)
        np.testing.assert_array_equal(a.lr_up, b.lr_up)
        assert a.gt.shape == (2, toy_config.c_lr, 16, 16)

    def test_uses_shared_central_difference(self, toy_config, monkeypatch):
        import src.core.trainer as trainer
        calls = []

        def counting(f, x, h=1e-5, indices=None):
            calls.append(list(indices))
            return numerical_gradient(f, x, h, indices)

        monkeypatch.setattr(trainer, "numerical_gradient", counting)
        report = gradcheck(toy_config, seed=0, n_coords=2)
        assert report.passed
        assert len(calls) == int(report.table["checked"].sum() + report.table["skipped"].sum())
        assert all(len(c) == 1 for c in calls)
