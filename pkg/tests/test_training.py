"""Trainer tests: Adam behaviour, search protocols, tuning estimator."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixkit.errors import ParameterError
from mixkit.mixing import TokenMixingSpec
from mixkit.model import ModelConfig
from mixkit.textdata import Example, build_vocab
from mixkit.training import (
    LR_GRID,
    TextTask,
    TrainConfig,
    expected_validation_performance,
    grid_search,
    random_search,
    read_trials,
    relative_improvement,
    sample_search_space,
    train,
    write_trials,
)


def toy_task(n=50, seed=0):
    """Linearly separable two-class sentences keyed on sentiment words."""
    rng = np.random.default_rng(seed)
    pos = ["great", "lovely", "fine"]
    neg = ["awful", "poor", "bad"]
    examples = []
    for i in range(n):
        label = i % 2
        words = list(rng.choice(pos if label else neg, size=rng.integers(2, 5)))
        words.insert(rng.integers(0, len(words)), "film")
        examples.append(Example((" ".join(words),), label))
    vocab = build_vocab(examples)
    return TextTask(train=examples, val=examples[:20], vocab=vocab, num_classes=2)


def tiny_model_config(vocab_size, kind="hypermixer_tied"):
    spec = TokenMixingSpec(kind=kind, d=8, d_prime=12)
    return ModelConfig(num_layers=1, d=8, d_prime=12, token_mixing=spec,
                       vocab_size=vocab_size, dropout_p=0.0, head="classifier", num_classes=2)


class TestTrain:
    def test_zero_learning_rate_leaves_parameters(self):
        task = toy_task(16)
        cfg = TrainConfig(learning_rate=0.0, epochs=1, batch_size=8, dropout_p=0.0)
        model_cfg = tiny_model_config(task.vocab.size)
        from mixkit.model import Model

        reference = Model.build(model_cfg, seed=0)
        result = train(model_cfg, cfg, task)
        for a, b in zip(reference.parameters(), result.model.parameters()):
            np.testing.assert_array_equal(a.data, b.data)

    def test_overfits_separable_toy_set(self):
        task = toy_task(50)
        cfg = TrainConfig(learning_rate=5e-3, epochs=50, batch_size=10, dropout_p=0.0, seed=1)
        result = train(tiny_model_config(task.vocab.size), cfg, task)
        final_acc = result.history[-1]["val_accuracy"]
        assert result.best_score == 1.0 or final_acc == 1.0

    def test_loss_trajectory_deterministic(self):
        task = toy_task(24)
        cfg = TrainConfig(learning_rate=1e-3, epochs=3, batch_size=8, dropout_p=0.1, seed=7)
        h1 = train(tiny_model_config(task.vocab.size), cfg, task).history
        h2 = train(tiny_model_config(task.vocab.size), cfg, task).history
        assert [e["train_loss"] for e in h1] == [e["train_loss"] for e in h2]

    def test_best_epoch_checkpoint_retained(self):
        task = toy_task(30)
        cfg = TrainConfig(learning_rate=5e-3, epochs=8, batch_size=10, dropout_p=0.0, seed=2)
        result = train(tiny_model_config(task.vocab.size), cfg, task)
        assert 0 <= result.best_epoch < 8
        assert result.best_score == max(e["val_accuracy"] for e in result.history)


class TestGridSearch:
    def test_grid_of_seven(self):
        task = toy_task(16)
        base = TrainConfig(learning_rate=1e-3, epochs=1, batch_size=8, dropout_p=0.0)
        best, records = grid_search(tiny_model_config(task.vocab.size), LR_GRID, task, base)
        assert len(records) == 7
        assert best.score >= max(r.score for r in records) - 1e-12

    def test_singleton_grid(self):
        task = toy_task(12)
        base = TrainConfig(learning_rate=1e-3, epochs=1, batch_size=6, dropout_p=0.0)
        best, records = grid_search(tiny_model_config(task.vocab.size), [3e-4], task, base)
        assert len(records) == 1 and best is records[0]

    def test_fresh_initialization_per_trial(self):
        # equal seeds and equal lr must give identical scores across repeats
        task = toy_task(12)
        base = TrainConfig(learning_rate=1e-3, epochs=1, batch_size=6, dropout_p=0.0, seed=5)
        _, r1 = grid_search(tiny_model_config(task.vocab.size), [1e-3, 1e-3], task, base)
        assert r1[0].score == r1[1].score


class TestRandomSearch:
    def test_sampled_distributions(self):
        rng = np.random.default_rng(0)
        lrs, drops = [], []
        for _ in range(2000):
            lr, p = sample_search_space(rng)
            lrs.append(lr)
            drops.append(p)
        lrs = np.array(lrs)
        drops = np.array(drops)
        assert lrs.min() >= np.exp(-8) and lrs.max() <= np.exp(-1)
        assert drops.min() >= 0.0 and drops.max() <= 0.5
        # natural-log convention: log-lr roughly uniform on [-8, -1]
        logs = np.log(lrs)
        assert abs(logs.mean() - (-4.5)) < 0.2

    def test_seed_determinism_and_trial_count(self):
        task = toy_task(12)
        base = TrainConfig(learning_rate=1e-3, epochs=1, batch_size=6, dropout_p=0.0)
        r1 = random_search(tiny_model_config(task.vocab.size), 3, 11, task, base)
        r2 = random_search(tiny_model_config(task.vocab.size), 3, 11, task, base)
        assert len(r1) == 3
        assert [r.config for r in r1] == [r.config for r in r2]
        assert [r.score for r in r1] == [r.score for r in r2]

    def test_num_trials_validated(self):
        with pytest.raises(ParameterError):
            random_search(None, 0, 0, None)


class TestExpectedValidationPerformance:
    def test_k1_is_mean(self):
        scores = [0.3, 0.5, 0.9, 0.1]
        assert expected_validation_performance(scores, 1) == pytest.approx(np.mean(scores))

    def test_large_k_approaches_max(self):
        scores = [0.2, 0.4, 0.9]
        assert expected_validation_performance(scores, 10_000) == pytest.approx(0.9, abs=1e-6)

    def test_two_point_hand_value(self):
        # k=2, scores {0.2, 0.8}: 0.2*0.25 + 0.8*0.75 = 0.65
        assert expected_validation_performance([0.2, 0.8], 2) == pytest.approx(0.65)

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(3)
        for trial in range(3):
            scores = rng.uniform(0, 1, size=rng.integers(3, 9))
            k = int(rng.integers(1, 6))
            draws = rng.choice(scores, size=(1_000_000, k), replace=True)
            mc = draws.max(axis=1).mean()
            assert expected_validation_performance(scores, k) == pytest.approx(mc, abs=1e-3)

    @given(st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=20),
           st.integers(min_value=1, max_value=30))
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_k(self, scores, k):
        assert expected_validation_performance(scores, k + 1) >= \
            expected_validation_performance(scores, k) - 1e-12

    def test_empty_scores_rejected(self):
        with pytest.raises(ParameterError):
            expected_validation_performance([], 1)


class TestRelativeImprovement:
    def test_equal_scores(self):
        assert relative_improvement(0.8, 0.8) == 0.0

    def test_hand_value(self):
        assert relative_improvement(0.88, 0.80) == pytest.approx(0.10)

    def test_not_antisymmetric(self):
        a, b = 0.9, 0.6
        assert relative_improvement(a, b) != -relative_improvement(b, a)

    def test_requires_positive_baseline(self):
        with pytest.raises(ParameterError):
            relative_improvement(0.5, 0.0)


class TestTrialLogs:
    def test_round_trip(self, tmp_path):
        from mixkit.training import TrialRecord

        records = [
            TrialRecord(config={"learning_rate": 1e-3, "dropout_p": 0.1}, score=0.75,
                        seed=3, wall_seconds=1.25),
            TrialRecord(config={"learning_rate": 2e-4, "dropout_p": 0.0}, score=0.8,
                        seed=4, wall_seconds=0.5),
        ]
        path = tmp_path / "trials.jsonl"
        write_trials(path, records)
        loaded = read_trials(path)
        assert [r.config for r in loaded] == [r.config for r in records]
        assert [r.score for r in loaded] == [r.score for r in records]
        assert len(path.read_text().strip().splitlines()) == 2
