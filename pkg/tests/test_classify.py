import numpy as np
import pytest

from sparseseq import autodiff as ad
from sparseseq.autodiff import Tensor
from sparseseq.classify import (Hyperparams, TrainPlan, _select, class_weights,
                                evaluate_model, predict_probs, train_classifier,
                                validation_score, weighted_cross_entropy)
from sparseseq.data import compute_stats, normalize, split
from sparseseq.encoders import ConfigError, EncoderConfig
from sparseseq.pretrain import PretrainConfig, pretrain
from sparseseq.encoders import impute_view
from sparseseq.synthetic import SyntheticParams, build_benchmark


def prepared_splits(**kwargs):
    defaults = dict(n_samples=120, seq_len=12, missing_rate=0.3, seed=5, imbalance=(1, 3))
    defaults.update(kwargs)
    ds = build_benchmark(SyntheticParams(**defaults))
    train, val, test = split(ds, seed=1)
    stats = compute_stats(train)
    return (normalize(train, stats), normalize(val, stats), normalize(test, stats), stats)


# -- class weights ------------------------------------------------------------------

def test_class_weights_balanced_are_uniform():
    np.testing.assert_array_equal(class_weights([0, 1, 0, 1], 2), [1.0, 1.0])


def test_class_weights_hand_example():
    labels = np.array([0] * 86 + [1] * 14)
    w = class_weights(labels, 2)
    np.testing.assert_allclose(w, [0.5814, 3.5714], atol=1e-4)


def test_class_weights_identity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        k = int(rng.integers(2, 5))
        labels = rng.integers(0, k, size=int(rng.integers(k * 2, 60)))
        labels[:k] = np.arange(k)  # every class present
        w = class_weights(labels, k)
        counts = np.bincount(labels, minlength=k)
        assert w @ counts == pytest.approx(labels.size, rel=1e-12)
        assert np.argmin(w) == np.argmax(counts)


def test_class_weights_empty_class_errors():
    with pytest.raises(ConfigError):
        class_weights([0, 0, 0], 2)


# -- weighted cross-entropy ------------------------------------------------------------

def test_weighted_ce_uniform_logits():
    logits = Tensor(np.zeros((1, 2)))
    loss = weighted_cross_entropy(logits, np.array([1]), np.ones(2))
    assert loss.item() == pytest.approx(np.log(2.0), abs=1e-12)


def test_weighted_ce_scales_with_class_weight():
    logits = Tensor(np.zeros((1, 2)))
    loss = weighted_cross_entropy(logits, np.array([1]), np.array([1.0, 3.5714]))
    assert loss.item() == pytest.approx(3.5714 * np.log(2.0), abs=1e-9)
    assert loss.item() == pytest.approx(2.4755, abs=1e-4)


def test_weighted_ce_confident_correct_approaches_zero():
    logits = Tensor(np.array([[40.0, -40.0]]))
    loss = weighted_cross_entropy(logits, np.array([0]), np.ones(2))
    assert 0.0 <= loss.item() < 1e-12


def test_weighted_ce_gradient_check():
    rng = np.random.default_rng(1)
    params = {"logits": Tensor(rng.normal(size=(5, 3)), requires_grad=True)}
    labels = np.array([0, 2, 1, 1, 0])
    weights = np.array([0.5, 2.0, 1.5])

    def fn():
        return weighted_cross_entropy(params["logits"], labels, weights)

    assert ad.grad_check(fn, params) < 1e-4


# -- selection -----------------------------------------------------------------------

def test_selection_earliest_epoch_on_tie():
    assert _select([0.1, 0.5, 0.5, 0.3]) == (2, 0.5)
    assert _select([0.7]) == (1, 0.7)


def test_selection_returns_best_epoch_checkpoint():
    train, val, test, stats = prepared_splits()
    cfg = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=6)
    hp = Hyperparams(learning_rate=1e-3, batch_size=16, hidden_units=6, epochs=8)
    model = train_classifier(None, TrainPlan(mode="scratch"), train, val, stats, cfg, hp, 3)
    history = model.selection["history"]
    assert len(history) == 8
    assert model.selection["best_value"] == max(history)
    assert history[model.selection["best_epoch"] - 1] == max(history)


# -- training protocol ------------------------------------------------------------------

def pretrained_params(train, stats, cfg, epochs=4):
    view = impute_view(train, stats, cfg.scheme)
    return pretrain(view, cfg, PretrainConfig(shift=1, epochs=epochs, batch_size=16), seed=7)[0]


def test_frozen_mode_keeps_encoder_bytes_identical():
    train, val, test, stats = prepared_splits()
    cfg = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=5)
    pre = pretrained_params(train, stats, cfg)
    before = {k: v.data.tobytes() for k, v in pre.items() if k.startswith("enc.")}
    hp = Hyperparams(batch_size=16, hidden_units=5, epochs=4, epochs_step23=4)
    model = train_classifier(pre, TrainPlan(mode="frozen"), train, val, stats, cfg, hp, 9)
    after = {k: model.params[k].data.tobytes() for k in before}
    assert before == after


def test_fine_tuned_mode_changes_encoder():
    train, val, test, stats = prepared_splits()
    cfg = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=5)
    pre = pretrained_params(train, stats, cfg)
    before = {k: v.data.tobytes() for k, v in pre.items() if k.startswith("enc.")}
    hp = Hyperparams(batch_size=16, hidden_units=5, epochs=4, epochs_step23=4)
    model = train_classifier(pre, TrainPlan(mode="fine_tuned"), train, val, stats, cfg, hp, 9)
    after = {k: model.params[k].data.tobytes() for k in before}
    assert before != after
    assert "stage2" in model.selection and "stage3" in model.selection


def test_pretrained_weights_required_outside_scratch():
    train, val, test, stats = prepared_splits()
    cfg = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=5)
    hp = Hyperparams(batch_size=16, hidden_units=5, epochs=2)
    with pytest.raises(ConfigError):
        train_classifier(None, TrainPlan(mode="frozen"), train, val, stats, cfg, hp, 1)


def test_training_deterministic_given_seed():
    train, val, test, stats = prepared_splits()
    cfg = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=5)
    hp = Hyperparams(batch_size=16, hidden_units=5, epochs=3)
    a = train_classifier(None, TrainPlan(mode="scratch"), train, val, stats, cfg, hp, 13)
    b = train_classifier(None, TrainPlan(mode="scratch"), train, val, stats, cfg, hp, 13)
    for name in a.params:
        assert np.array_equal(a.params[name].data, b.params[name].data)
    assert a.selection == b.selection


def test_resampling_only_touches_training_split():
    train, val, test, stats = prepared_splits()
    val_before = (val.values.tobytes(), val.labels.tobytes())
    test_before = (test.values.tobytes(), test.labels.tobytes())
    cfg = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=4)
    hp = Hyperparams(batch_size=16, hidden_units=4, epochs=2)
    for method, fraction in (("oversample", None), ("undersample", None), ("oversample_cw", 0.45)):
        train_classifier(None, TrainPlan(mode="scratch", imbalance=method,
                                         oversample_fraction=fraction),
                         train, val, stats, cfg, hp, 17)
    assert (val.values.tobytes(), val.labels.tobytes()) == val_before
    assert (test.values.tobytes(), test.labels.tobytes()) == test_before


# -- prediction ---------------------------------------------------------------------------

def trained_tiny_model():
    train, val, test, stats = prepared_splits()
    cfg = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=4)
    hp = Hyperparams(batch_size=16, hidden_units=4, epochs=3)
    model = train_classifier(None, TrainPlan(mode="scratch"), train, val, stats, cfg, hp, 23)
    return model, test


def test_probabilities_sum_to_one():
    model, test = trained_tiny_model()
    probs = predict_probs(model, test)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_duplicated_sample_identical_rows():
    model, test = trained_tiny_model()
    doubled = test.take(np.array([0, 0, 1]))
    probs = predict_probs(model, doubled)
    np.testing.assert_array_equal(probs[0], probs[1])


def test_permuting_head_columns_permutes_outputs():
    model, test = trained_tiny_model()
    probs = predict_probs(model, test)
    perm = np.array([1, 0])
    model.params["head.W"].data = model.params["head.W"].data[:, perm]
    model.params["head.b"].data = model.params["head.b"].data[perm]
    swapped = predict_probs(model, test)
    np.testing.assert_allclose(swapped, probs[:, perm], atol=1e-15)


def test_validation_score_switches_metric_with_class_count():
    probs = np.array([[0.2, 0.8], [0.9, 0.1]])
    assert validation_score(probs, np.array([1, 0]), 2) == 1.0
    probs3 = np.array([[0.2, 0.7, 0.1], [0.8, 0.1, 0.1], [0.1, 0.2, 0.7]])
    score = validation_score(probs3, np.array([1, 0, 2]), 3)
    assert score == pytest.approx(1.0)  # perfect weighted F1, reported on [0, 1]


def test_multiclass_training_and_f1_path():
    from sparseseq.synthetic import build_quartile_fixture

    ds = build_quartile_fixture(SyntheticParams(n_samples=160, seq_len=10, seed=2,
                                                missing_rate=0.2))
    train, val, test = split(ds, seed=3)
    stats = compute_stats(train)
    train, val, test = (normalize(part, stats) for part in (train, val, test))
    cfg = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=6)
    hp = Hyperparams(batch_size=16, hidden_units=6, epochs=3)
    model = train_classifier(None, TrainPlan(mode="scratch", imbalance="class_weights"),
                             train, val, stats, cfg, hp, 31)
    assert model.selection["metric"] == "f1_weighted"
    scores = evaluate_model(model, test)
    assert "auprc" not in scores
    assert 0.0 <= scores["f1_weighted"] <= 100.0
    assert len(scores["f1_per_class"]) == 4


@pytest.mark.slow
def test_scratch_gru_published_synthetic_settings_reach_97():
    # balanced, fully observed benchmark under the published full-scale GRU
    # settings (lr 1e-3, batch 32, hidden 64, 150 epochs)
    ds = build_benchmark(SyntheticParams(n_samples=2000, seq_len=100, noise_std=0.1,
                                         missing_rate=0.0, imbalance=(1, 1), seed=77))
    train, val, test = split(ds, seed=78)
    stats = compute_stats(train)
    train, val, test = (normalize(part, stats) for part in (train, val, test))
    cfg = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=64)
    hp = Hyperparams(learning_rate=1e-3, batch_size=32, hidden_units=64, epochs=150)
    model = train_classifier(None, TrainPlan(mode="scratch", imbalance="class_weights"),
                             train, val, stats, cfg, hp, 79)
    scores = evaluate_model(model, test)
    assert scores["auprc"] >= 97.0
