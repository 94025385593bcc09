import numpy as np
import pytest

from sparseseq import autodiff as ad
from sparseseq.autodiff import Tensor
from sparseseq.data import compute_stats, normalize
from sparseseq.encoders import (ConfigError, EncoderConfig, encode, gru_d_step,
                                gru_step, impute_view, init_encoder_params)
from sparseseq.synthetic import SyntheticParams, build_benchmark


def normalized_benchmark(**kwargs):
    defaults = dict(n_samples=24, seq_len=8, missing_rate=0.4, seed=12, imbalance=(1, 2))
    defaults.update(kwargs)
    ds = build_benchmark(SyntheticParams(**defaults))
    stats = compute_stats(ds)
    return normalize(ds, stats), stats


def scalar_gru_params():
    params = {}
    for gate in ("z", "r", "c"):
        params[f"enc.W_{gate}"] = Tensor(np.ones((1, 1)), requires_grad=True)
        params[f"enc.U_{gate}"] = Tensor(np.ones((1, 1)), requires_grad=True)
        params[f"enc.b_{gate}"] = Tensor(np.zeros(1), requires_grad=True)
    return params


# -- views -----------------------------------------------------------------------

def test_flags_view_width_and_flag_convention():
    ds, stats = normalized_benchmark()
    view = impute_view(ds, stats, "flags")
    assert view.inputs.shape == (24, 8, 4)
    flags = view.inputs[:, :, 2:]
    np.testing.assert_array_equal(flags, 1.0 - ds.mask)
    filled = view.inputs[:, :, :2]
    assert np.all(filled[ds.mask == 0.0] == 0.0)  # mean fill is 0 after z-scoring


def test_fully_observed_views_match_raw():
    ds, stats = normalized_benchmark(missing_rate=0.0)
    for scheme in ("mean", "forward", "simple"):
        view = impute_view(ds, stats, scheme)
        np.testing.assert_array_equal(view.filled, ds.values)
    flags = impute_view(ds, stats, "flags")
    assert np.all(flags.inputs[:, :, 2:] == 0.0)


def test_forward_and_mean_fill_hand_case():
    from sparseseq.data import NormStats, TimeSeriesDataset

    values = np.array([[[1.2], [np.nan], [np.nan]]])
    mask = np.array([[[1.0], [0.0], [0.0]]])
    ds = TimeSeriesDataset(values=values, mask=mask, times=np.arange(3.0)[None, :],
                           lengths=np.array([3]), static=np.zeros((1, 0)),
                           labels=np.array([0]), variable_names=["v"], n_classes=2,
                           ids=["a"])
    stats = NormStats(mean=np.zeros(1), std=np.ones(1), constant=np.array([False]))
    forward = impute_view(ds, stats, "forward")
    np.testing.assert_array_equal(forward.inputs[0, :, 0], [1.2, 1.2, 1.2])
    mean = impute_view(ds, stats, "mean")
    np.testing.assert_array_equal(mean.inputs[0, :, 0], [1.2, 0.0, 0.0])


def test_simple_view_layout():
    ds, stats = normalized_benchmark(n_samples=6, seq_len=5)
    view = impute_view(ds, stats, "simple")
    assert view.inputs.shape[2] == 6  # [values; mask; deltas] at D=2
    np.testing.assert_array_equal(view.inputs[:, :, 2:4], ds.mask)
    assert np.all(view.inputs[:, 0, 4:] == 0.0)  # deltas start at zero


def test_forward_view_piecewise_constant_and_defined():
    ds, stats = normalized_benchmark(missing_rate=0.6)
    view = impute_view(ds, stats, "forward")
    assert np.all(np.isfinite(view.inputs))
    # between observations the filled value cannot change
    change = np.abs(np.diff(view.inputs, axis=1)) > 0
    observed_now = ds.mask[:, 1:, :] == 1.0
    assert not np.any(change & ~observed_now)


def test_unknown_scheme_rejected():
    ds, stats = normalized_benchmark()
    with pytest.raises(ConfigError):
        impute_view(ds, stats, "zeropad")


# -- gru cell ---------------------------------------------------------------------

def test_gru_zero_weights_fixed_point():
    params = scalar_gru_params()
    for key in params:
        params[key].data = np.zeros_like(params[key].data)
    h = gru_step(params, Tensor(np.zeros((1, 1))), Tensor(np.zeros((1, 1))))
    assert h.data.item() == 0.0


def test_gru_hand_computed_unit_cell():
    params = scalar_gru_params()
    h0 = Tensor(np.zeros((1, 1)))
    assert gru_step(params, h0, Tensor(np.zeros((1, 1)))).data.item() == 0.0
    h1 = gru_step(params, h0, Tensor(np.ones((1, 1)))).data.item()
    z = 1 / (1 + np.exp(-1.0))
    expected = z * np.tanh(1.0)
    assert h1 == pytest.approx(expected, abs=1e-12)
    assert h1 == pytest.approx(0.5568, abs=1e-4)


def test_gru_step_grad_check():
    rng = np.random.default_rng(0)
    config = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=5)
    params = init_encoder_params(config, rng)
    x = rng.normal(size=(3, config.input_width))
    h_prev = rng.normal(size=(3, 5))

    def fn():
        return ad.tensor_sum(ad.square(gru_step(params, Tensor(h_prev), Tensor(x))))

    assert ad.grad_check(fn, params) < 1e-4


# -- decay cell ---------------------------------------------------------------------

def grud_params(rng, d, h, decay_scale=0.3):
    config = EncoderConfig(arch="grud", scheme="grud", n_variables=d, hidden=h)
    params = init_encoder_params(config, rng)
    params["enc.w_dx"].data = rng.uniform(0.05, decay_scale, size=d)
    params["enc.W_dh"].data = rng.uniform(0.05, decay_scale, size=(d, h))
    return config, params


def test_grud_zero_delta_keeps_last_value():
    rng = np.random.default_rng(1)
    _, params = grud_params(rng, 2, 3)
    params["enc.w_dx"].data = np.zeros(2)
    params["enc.b_dx"].data = np.zeros(2)
    x = np.zeros((1, 2))
    m = np.zeros((1, 2))
    x_last = np.array([[0.7, -0.4]])
    # gamma_x = exp(0) = 1: the mean cannot leak into the imputed input
    h_a, _ = gru_d_step(params, Tensor(np.zeros((1, 3))), x, m, np.zeros((1, 2)),
                        x_last, np.array([5.0, 5.0]))
    h_b, _ = gru_d_step(params, Tensor(np.zeros((1, 3))), x, m, np.zeros((1, 2)),
                        x_last, np.array([-7.0, 3.0]))
    np.testing.assert_array_equal(h_a.data, h_b.data)


def test_grud_large_delta_decays_to_mean_and_zero_state():
    rng = np.random.default_rng(2)
    _, params = grud_params(rng, 2, 3)
    x = np.zeros((1, 2))
    m = np.zeros((1, 2))
    delta = np.full((1, 2), 1e6)
    x_mean = np.array([0.25, -0.5])
    # gamma_x ~ 0: the last observation cannot leak into the imputed input,
    # and gamma_h ~ 0 erases the previous hidden state
    h_a, _ = gru_d_step(params, Tensor(rng.normal(size=(1, 3))), x, m, delta,
                        np.array([[9.0, -9.0]]), x_mean)
    h_b, _ = gru_d_step(params, Tensor(np.zeros((1, 3))), x, m, delta,
                        np.tile(x_mean, (1, 1)), x_mean)
    np.testing.assert_allclose(h_a.data, h_b.data, atol=1e-9)


def test_grud_fully_observed_ignores_decay_parameters():
    rng = np.random.default_rng(3)
    _, params = grud_params(rng, 2, 4)
    x = rng.normal(size=(2, 2))
    m = np.ones((2, 2))
    delta = rng.uniform(0, 5, size=(2, 2))
    h_prev = Tensor(np.zeros((2, 4)))
    h1, last1 = gru_d_step(params, h_prev, x, m, delta * 0, x, np.zeros(2))
    params["enc.w_dx"].data = rng.uniform(3, 9, size=2)  # wildly different input decay
    h2, last2 = gru_d_step(params, h_prev, x, m, delta * 0, x, np.zeros(2))
    np.testing.assert_array_equal(h1.data, h2.data)
    np.testing.assert_array_equal(last1, x)
    np.testing.assert_array_equal(last2, x)


def test_grud_rejects_negative_delta():
    rng = np.random.default_rng(4)
    _, params = grud_params(rng, 1, 2)
    with pytest.raises(ad.ContractError):
        gru_d_step(params, Tensor(np.zeros((1, 2))), np.zeros((1, 1)), np.ones((1, 1)),
                   np.array([[-0.5]]), np.zeros((1, 1)), np.zeros(1))


def test_gamma_stays_in_unit_interval():
    rng = np.random.default_rng(5)
    for _ in range(50):
        w = rng.normal(scale=2.0, size=4)
        b = rng.normal(scale=2.0, size=4)
        delta = rng.uniform(0, 100, size=4)
        gamma = np.exp(-np.maximum(0.0, w * delta + b))
        assert np.all(gamma > 0.0) and np.all(gamma <= 1.0)


def test_grud_with_zero_decays_matches_plain_gru_on_value_mask_input():
    rng = np.random.default_rng(6)
    d, hidden = 2, 4
    config = EncoderConfig(arch="grud", scheme="grud", n_variables=d, hidden=hidden)
    params = init_encoder_params(config, rng)
    for name in ("enc.w_dx", "enc.b_dx", "enc.W_dh", "enc.b_dh"):
        params[name].data = np.zeros_like(params[name].data)
    gru_names = [k for k in params if k.split(".")[1][0] in "WUb" and "d" not in k.split(".")[1]]
    shared = {k: params[k] for k in gru_names}
    h = Tensor(np.zeros((3, hidden)))
    h_plain = Tensor(np.zeros((3, hidden)))
    x_last = rng.normal(size=(3, d))
    for t in range(6):
        x = rng.normal(size=(3, d))
        m = np.ones((3, d))
        delta = rng.uniform(0, 2, size=(3, d))
        h, x_last = gru_d_step(params, h, x, m, delta, x_last, np.zeros(d))
        h_plain = gru_step(shared, h_plain, Tensor(np.concatenate([x, m], axis=1)))
        np.testing.assert_allclose(h.data, h_plain.data, atol=1e-12)


def test_gru_d_step_grad_check_through_decay_path():
    rng = np.random.default_rng(7)
    _, params = grud_params(rng, 2, 3)
    x = rng.normal(size=(2, 2))
    m = (rng.random((2, 2)) < 0.5).astype(float)
    delta = rng.uniform(0.1, 4, size=(2, 2))
    x_last = rng.normal(size=(2, 2))
    h_prev = rng.normal(size=(2, 3))

    def fn():
        h, _ = gru_d_step(params, Tensor(h_prev), x, m, delta, x_last, np.zeros(2))
        return ad.tensor_sum(ad.square(h))

    assert ad.grad_check(fn, params) < 1e-4


# -- sequence encoding ------------------------------------------------------------

def test_encode_batch_independence_and_permutation():
    ds, stats = normalized_benchmark(n_samples=10, seq_len=6)
    view = impute_view(ds, stats, "flags")
    config = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=4)
    params = init_encoder_params(config, np.random.default_rng(8))
    _, final = encode(view, params, config)
    perm = np.array([3, 1, 4, 0, 2])
    _, final_perm = encode(view, params, config, idx=perm)
    np.testing.assert_array_equal(final_perm.data, final.data[perm])


def test_encode_identical_samples_identical_trajectories():
    ds, stats = normalized_benchmark(n_samples=4, seq_len=5)
    view = impute_view(ds, stats, "flags")
    config = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=3)
    params = init_encoder_params(config, np.random.default_rng(9))
    states, _ = encode(view, params, config, idx=np.array([2, 2]))
    for h in states:
        np.testing.assert_array_equal(h.data[0], h.data[1])


def test_encode_empty_sequence_gives_zero_state():
    from sparseseq.data import TimeSeriesDataset, NormStats

    ds = TimeSeriesDataset(
        values=np.full((2, 3, 1), np.nan), mask=np.zeros((2, 3, 1)),
        times=np.tile(np.arange(3.0), (2, 1)), lengths=np.array([0, 3]),
        static=np.zeros((2, 0)), labels=np.array([0, 1]), variable_names=["v"],
        n_classes=2, ids=["a", "b"])
    ds.values[1] = 1.0
    ds.mask[1] = 1.0
    stats = NormStats(mean=np.zeros(1), std=np.ones(1), constant=np.array([False]))
    view = impute_view(ds, stats, "flags")
    config = EncoderConfig(arch="gru", scheme="flags", n_variables=1, hidden=4)
    params = init_encoder_params(config, np.random.default_rng(10))
    _, final = encode(view, params, config)
    np.testing.assert_array_equal(final.data[0], np.zeros(4))
    assert np.any(final.data[1] != 0.0)


def test_encode_final_state_uses_sample_length():
    ds, stats = normalized_benchmark(n_samples=5, seq_len=7, missing_rate=0.0)
    view = impute_view(ds, stats, "flags")
    view.lengths = np.array([7, 4, 7, 2, 7])
    config = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=3)
    params = init_encoder_params(config, np.random.default_rng(11))
    states, final = encode(view, params, config)
    np.testing.assert_array_equal(final.data[1], states[3].data[1])
    np.testing.assert_array_equal(final.data[3], states[1].data[3])
    np.testing.assert_array_equal(final.data[0], states[6].data[0])


def test_seeded_init_and_dropout_masks_bit_identical():
    config = EncoderConfig(arch="grud", scheme="grud", n_variables=3, hidden=6)
    a = init_encoder_params(config, np.random.default_rng(55))
    b = init_encoder_params(config, np.random.default_rng(55))
    assert set(a) == set(b)
    for name in a:
        assert np.array_equal(a[name].data, b[name].data)
    from sparseseq.encoders import dropout_mask

    m1 = dropout_mask(np.random.default_rng(9), (4, 6), 0.3)
    m2 = dropout_mask(np.random.default_rng(9), (4, 6), 0.3)
    np.testing.assert_array_equal(m1, m2)
    assert set(np.unique(m1)) <= {0.0, 1.0 / 0.7}


def test_recurrent_dropout_only_in_training_mode():
    ds, stats = normalized_benchmark(n_samples=6, seq_len=5)
    view = impute_view(ds, stats, "flags")
    config = EncoderConfig(arch="gru", scheme="flags", n_variables=2, hidden=4,
                           recurrent_dropout=0.5)
    params = init_encoder_params(config, np.random.default_rng(12))
    _, eval_a = encode(view, params, config, train=False)
    _, eval_b = encode(view, params, config, train=False)
    np.testing.assert_array_equal(eval_a.data, eval_b.data)
    rng = np.random.default_rng(13)
    _, train_out = encode(view, params, config, train=True, rng=rng)
    assert not np.array_equal(train_out.data, eval_a.data)
    with pytest.raises(ConfigError):
        encode(view, params, config, train=True)  # rng required
