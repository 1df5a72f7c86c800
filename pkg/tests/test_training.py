import dataclasses

import numpy as np
import pytest

from helpers import graph
from sidefx.config import PRESETS, dump_config, load_config, parse_config
from sidefx.dataset import SePredDataset, VocabEntry, make_folds
from sidefx.gnn import predict_scores
from sidefx.training import (
    ModelConfig,
    TrainConfig,
    cross_validate,
    evaluate,
    fit,
    mean_loss,
    split_validation,
    train_fold,
)

TINY = ModelConfig(state_dim=4, iterations=2, state_hidden=(8,), output_hidden=(8,))
SMILES = ["CCO", "c1ccccc1", "CC(=O)O", "N#CC", "OCCO", "CN", "C=CC=C", "ClCCl"]


def tiny_dataset(n=8, classes=4, k=2, seed=0):
    rng = np.random.default_rng(seed)
    drugs = [graph(SMILES[i % len(SMILES)], classes, rng.integers(0, 2, classes)) for i in range(n)]
    vocab = [VocabEntry(f"C{i}", f"se{i}", 1) for i in range(classes)]
    return SePredDataset(drugs, vocab, make_folds(n, k, seed))


def config(**kw):
    base = dict(max_epochs=30, patience=None, loss_threshold=None, batch_size=4, log_every=0, model=TINY)
    base.update(kw)
    return TrainConfig(**base)


def test_defaults_match_experiment_a():
    c = TrainConfig()
    assert (c.batch_size, c.loss_threshold, c.max_epochs, c.patience) == (32, 0.15, 8000, 2000)
    assert (c.learning_rate, c.beta1, c.beta2, c.adam_eps) == (1e-3, 0.9, 0.999, 1e-7)
    m = c.model
    assert (m.state_dim, m.iterations, m.aggregation, m.state_hidden, m.output_hidden) == (32, 6, 1.0, (150, 150), (100, 100))


@pytest.mark.parametrize("bad", [dict(batch_size=0), dict(validation_fraction=1.0), dict(loss_threshold=0.0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        TrainConfig(**bad)


class TestFit:
    def test_loss_decreases(self):
        ds = tiny_dataset()
        params = TINY.build(ds.num_classes, 0)
        _, hist = fit(params, ds.drugs, config(max_epochs=200, learning_rate=0.01))
        assert hist.train_loss[-1] < 0.5 * hist.train_loss[0]
        assert hist.stop_reason == "max_epochs" and len(hist.epochs) == 200

    def test_returns_best_validation_params(self):
        ds = tiny_dataset(n=8)
        params = TINY.build(ds.num_classes, 1)
        val = ds.drugs[6:]
        best, hist = fit(params, ds.drugs[:6], config(max_epochs=60, learning_rate=0.03), val=val)
        assert hist.best_val_loss == min(hist.val_loss)
        assert hist.val_loss[hist.best_epoch - 1] == hist.best_val_loss
        assert mean_loss(best, val) == hist.best_val_loss

    def test_loss_threshold_stop(self):
        ds = tiny_dataset()
        params = TINY.build(ds.num_classes, 0)
        _, hist = fit(params, ds.drugs, config(max_epochs=500, loss_threshold=0.6, learning_rate=0.01))
        assert hist.stop_reason == "loss_threshold"
        assert hist.train_loss[-1] <= 0.6 < min(hist.train_loss[:-1])

    def test_patience_stop(self):
        ds = tiny_dataset()
        params = TINY.build(ds.num_classes, 0)
        _, hist = fit(params, ds.drugs[:6], config(max_epochs=500, patience=3, learning_rate=0.2), val=ds.drugs[6:])
        assert hist.stop_reason == "patience"
        assert len(hist.epochs) - hist.best_epoch == 3

    def test_deterministic(self):
        ds = tiny_dataset()
        runs = []
        for _ in range(2):
            p, h = train_fold(ds, 0, config(max_epochs=10))
            runs.append((predict_scores(p, ds.drugs), h.train_loss))
        np.testing.assert_array_equal(runs[0][0], runs[1][0])
        assert runs[0][1] == runs[1][1]

    def test_empty_training_set(self):
        with pytest.raises(ValueError):
            fit(TINY.build(2, 0), [], config())


def test_split_validation():
    rng = np.random.default_rng(0)
    fit_idx, val_idx = split_validation(np.arange(20), 0.1, rng)
    assert len(val_idx) == 2 and len(fit_idx) == 18
    assert set(fit_idx) | set(val_idx) == set(range(20))
    fit_idx, val_idx = split_validation(np.arange(2), 0.1, rng)
    assert len(val_idx) == len(fit_idx) == 1


def test_cross_validation_aggregate():
    ds = tiny_dataset(n=4, classes=3, k=2, seed=5)
    ds.drugs[0].target[:] = [1, 0, 1]
    ds.drugs[1].target[:] = [0, 1, 0]
    ds.drugs[2].target[:] = [1, 1, 0]
    ds.drugs[3].target[:] = [0, 0, 1]
    cv = cross_validate(ds, config(max_epochs=5))
    assert len(cv.reports) == 2
    accs = [r.binary_accuracy for r in cv.reports]
    assert cv.aggregate["binary_accuracy"]["mean"] == np.mean(accs)
    assert cv.aggregate["binary_accuracy"]["std"] == np.std(accs, ddof=1)
    for fold, report in enumerate(cv.reports):
        assert report.num_drugs == len(ds.fold_indices(fold))


def test_evaluate_uses_dataset_frequencies():
    ds = tiny_dataset()
    params = TINY.build(ds.num_classes, 0)
    report = evaluate(params, ds, ds.fold_indices(0))
    assert report.num_drugs == 4 and report.num_classes == 4


class TestConfigFiles:
    TABLE = {
        "exp_a": (32, 0.15, 8000, 2000),
        "exp_b": (32, 0.15, 10000, 2000),
        "exp_b1": (32, 0.14, 10000, 2000),
        "exp_c": (16, 0.14, 7500, 1000),
    }

    @pytest.mark.parametrize("name", PRESETS)
    def test_presets(self, name):
        c = load_config(name)
        assert (c.batch_size, c.loss_threshold, c.max_epochs, c.patience) == self.TABLE[name]
        assert c.learning_rate == 1e-3

    def test_round_trip(self):
        c = dataclasses.replace(load_config("exp_c"), patience=None, model=TINY)
        assert parse_config(dump_config(c)) == c

    def test_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("[train]\nmax_epochs = 12\nloss_threshold = none\n[model]\nstate_hidden = 10, 20\n")
        c = load_config(path)
        assert c.max_epochs == 12 and c.loss_threshold is None and c.model.state_hidden == (10, 20)

    @pytest.mark.parametrize("text", ["[train]\nbogus = 1\n", "[other]\nx = 1\n", "[train]\nmax_epochs = x\n"])
    def test_bad_files(self, text):
        with pytest.raises(ValueError):
            parse_config(text)
