import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptivenet.autodiff import ContractError, GradientTape, mean_squared_error
from adaptivenet.encoding import W_MED, W_PATIENT, W_VISIT
from adaptivenet.gradcheck import check_model_gradients, random_samples
from adaptivenet.models import (
    FCN,
    AdaptiveNet,
    event_order,
    fcn_predict,
    naive_predict,
    predict,
    predict_absolute,
    psi_pool,
)
from adaptivenet.sampling import StructuredSample

from oracles import dense_chain, lstm_final_hidden


def _layers(stack):
    return [(l.weight.value.tolist(), l.bias.value.tolist(), l.activation == "relu") for l in stack]


def _randomize_biases(net, seed=0):
    rng = np.random.default_rng(seed)
    for p in net.params():
        if not p.regularize:
            p.value[...] = rng.normal(scale=0.2, size=p.value.shape)


def _sample(visits, meds, patient=None):
    """``visits``/``meds`` are lists of ``(day, vector)``."""
    return StructuredSample(
        patient_id="x",
        anchor_day=0,
        target_day=0,
        patient_vec=np.zeros(W_PATIENT) if patient is None else np.asarray(patient),
        visit_times=np.array([t for t, _ in visits], dtype=np.int64),
        visit_features=np.array([v for _, v in visits]).reshape(-1, W_VISIT),
        med_times=np.array([t for t, _ in meds], dtype=np.int64),
        med_features=np.array([m for _, m in meds]).reshape(-1, W_MED),
        delta_t=0.5,
        label=0.0,
        current_score=3.0,
    )


def test_latent_widths():
    net = AdaptiveNet()
    zv, zm = net.encode(np.zeros((2, W_VISIT)), np.zeros((3, W_MED)))
    assert zv.value.shape == (2, 100) and zm.value.shape == (3, 100)
    assert net.phi_med[0].in_dim == 18


def test_shared_layer_is_one_block():
    net = AdaptiveNet(share_encoder=True)
    names = [p.name for p in net.params()]
    assert names.count("phi_shared.weight") == 1


def test_empty_pool_is_zero():
    net = AdaptiveNet()
    np.testing.assert_array_equal(psi_pool(net, [], []), np.zeros(net.hidden_dim))


def test_event_order_ties_visit_first():
    # med 1 on day 0, visit 1 and med 0 share day 1, visit 0 on day 5
    assert event_order([5, 1], [1, 0]) == [(1, 1), (0, 1), (1, 0), (0, 0)]


def test_event_order_same_day_same_kind_by_content():
    feats = np.array([[0.9], [0.1]])
    assert event_order([3, 3], [], feats, None) == [(0, 1), (0, 0)]


@pytest.mark.parametrize("share", [False, True])
def test_two_event_chain_matches_scalar_oracle(share):
    net = AdaptiveNet(encoder_dim=5, lstm_hidden=4, rho_dim=6, share_encoder=share, seed=3)
    _randomize_biases(net)
    rng = np.random.default_rng(1)
    v, m = rng.random(W_VISIT), rng.random(W_MED)
    patient = rng.random(W_PATIENT)
    extra = [(net.shared.weight.value.tolist(), net.shared.bias.value.tolist(), True)] if share else []
    zv = dense_chain(_layers(net.phi_visit) + extra, v.tolist())
    zm = dense_chain(_layers(net.phi_med) + extra, m.tolist())
    # medication first in time, then visit
    h = lstm_final_hidden(net.lstm.weight.value.tolist(), net.lstm.bias.value.tolist(), [zm, zv], 4)
    np.testing.assert_allclose(psi_pool(net, [(20, v)], [(10, m)]), h, rtol=1e-12, atol=1e-14)
    y = dense_chain(_layers(net.rho) + _layers([net.out]), h + patient.tolist())
    got = predict(net, _sample([(20, v)], [(10, m)], patient))
    assert got == pytest.approx(y[0], rel=1e-12, abs=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    net = AdaptiveNet(encoder_dim=8, lstm_hidden=8, rho_dim=8, seed=seed % 1000)
    nv, nm = int(rng.integers(0, 7)), int(rng.integers(0, 7))
    # few distinct days, so same-day events of both kinds are common
    visits = [(int(rng.integers(0, 3)), rng.random(W_VISIT)) for _ in range(nv)]
    meds = [(int(rng.integers(0, 3)), rng.random(W_MED)) for _ in range(nm)]
    base = predict(net, _sample(visits, meds))
    pv, pm = rng.permutation(nv), rng.permutation(nm)
    assert predict(net, _sample([visits[i] for i in pv], [meds[i] for i in pm])) == base


def test_permutation_of_distinct_times_bit_identical():
    rng = np.random.default_rng(0)
    net = AdaptiveNet(seed=1)
    visits = [(int(d), rng.random(W_VISIT)) for d in rng.choice(1000, 12, replace=False)]
    meds = [(int(d), rng.random(W_MED)) for d in rng.choice(1000, 7, replace=False)]
    base = predict(net, _sample(visits, meds))
    for k in range(5):
        pv, pm = rng.permutation(len(visits)), rng.permutation(len(meds))
        assert predict(net, _sample([visits[i] for i in pv], [meds[i] for i in pm])) == base


def test_batch_equals_single():
    rng = np.random.default_rng(2)
    net = AdaptiveNet(seed=2)
    samples = random_samples(rng, 6)
    batched = net.forward(net.make_batch(samples)).value[:, 0]
    single = np.array([predict(net, s) for s in samples])
    np.testing.assert_allclose(batched, single, rtol=1e-12, atol=1e-14)


def test_zero_and_long_inputs():
    rng = np.random.default_rng(3)
    net = AdaptiveNet()
    assert np.isfinite(predict(net, _sample([], [])))
    many = [(k, rng.random(W_VISIT)) for k in range(80)]
    meds = [(k, rng.random(W_MED)) for k in range(40)]
    assert np.isfinite(predict(net, _sample(many, meds)))


def test_zero_weights_predict_zero():
    net = AdaptiveNet()
    for p in net.params():
        p.value[...] = 0.0
    assert predict(net, random_samples(np.random.default_rng(0), 1)[0]) == 0.0


def test_patient_vector_only_reaches_rho():
    net = AdaptiveNet(seed=4)
    s1 = random_samples(np.random.default_rng(5), 1)[0]
    s2 = _sample(list(zip(s1.visit_times, s1.visit_features)), list(zip(s1.med_times, s1.med_features)), np.ones(8))
    b1, b2 = net.make_batch([s1]), net.make_batch([s2])
    np.testing.assert_array_equal(net.pool(b1).value, net.pool(b2).value)
    assert predict(net, s1) != predict(net, s2)


def test_predict_absolute():
    net = AdaptiveNet(seed=6)
    s = random_samples(np.random.default_rng(6), 1)[0]
    assert predict_absolute(net, s, 3.0) == 3.0 + predict(net, s)
    for p in net.params():
        p.value[...] = 0.0
    assert predict_absolute(net, s, 3.0) == 3.0


def test_naive_predict():
    assert naive_predict(random_samples(np.random.default_rng(0), 1)[0]) == 0.0


def test_width_mismatch_raises():
    net = AdaptiveNet()
    with pytest.raises(ContractError):
        psi_pool(net, [(0, np.zeros(W_VISIT + 1))], [])
    with pytest.raises(ContractError):
        psi_pool(net, [], [(0, np.zeros(17))])


def test_shared_gradient_is_sum_of_paths():
    net = AdaptiveNet(encoder_dim=4, lstm_hidden=3, rho_dim=5, share_encoder=True, seed=9)
    _randomize_biases(net, 9)
    rng = np.random.default_rng(8)
    s = _sample([(5, rng.random(W_VISIT))], [(1, rng.random(W_MED))])
    batch = net.make_batch([s])
    W = net.shared.weight
    # full gradient
    for p in net.params():
        p.zero_grad()
    tape = GradientTape()
    tape.backward(mean_squared_error(net.forward(batch, tape), [[1.0]], tape))
    total = W.grad.copy()

    # per-path gradients: run each encoder path with its own copy of the shared layer
    import copy

    contributions = []
    for path in ("visit", "med"):
        twin = copy.deepcopy(net)
        clone = copy.deepcopy(twin.shared)
        clone.weight.name = "clone"
        for p in twin.params() + clone.params():
            p.zero_grad()
        original_encode = twin._encode

        def encode(x, stack, tape_, training, rng_, _path=path, _twin=twin, _clone=clone):
            use_clone = (stack is _twin.phi_visit) == (_path == "visit")
            saved = _twin.shared
            if use_clone:
                _twin.shared = _clone
            try:
                return original_encode(x, stack, tape_, training, rng_)
            finally:
                _twin.shared = saved

        twin._encode = encode
        t2 = GradientTape()
        t2.backward(mean_squared_error(twin.forward(batch, t2), [[1.0]], t2))
        contributions.append(clone.weight.grad.copy())
    np.testing.assert_allclose(total, contributions[0] + contributions[1], rtol=1e-12, atol=1e-15)
    assert np.abs(contributions[0]).sum() > 0 and np.abs(contributions[1]).sum() > 0


@pytest.mark.parametrize("share", [False, True])
def test_full_model_gradient_check(share):
    report = check_model_gradients(seed=11, share_encoder=share)
    assert report.passed, report


class TestFcn:
    def test_zero_weights(self):
        fcn = FCN(12)
        for p in fcn.params():
            p.value[...] = 0.0
        assert fcn_predict(fcn, np.ones(12)) == 0.0

    def test_inference_is_deterministic(self):
        fcn = FCN(12, seed=1)
        x = np.linspace(-1, 1, 12)
        assert fcn_predict(fcn, x) == fcn_predict(fcn, x)

    def test_matches_scalar_oracle(self):
        fcn = FCN(7, seed=2)
        _randomize_biases(fcn, 2)
        x = np.random.default_rng(2).normal(size=7)
        expected = dense_chain(_layers(fcn.hidden) + _layers([fcn.out]), x.tolist())
        assert fcn_predict(fcn, x) == pytest.approx(expected[0], rel=1e-12, abs=1e-14)

    def test_width_mismatch(self):
        with pytest.raises(ContractError):
            fcn_predict(FCN(7), np.zeros(8))

    def test_architecture(self):
        fcn = FCN(20)
        assert [l.out_dim for l in fcn.layers()] == [32, 32, 32, 1] and fcn.dropout == 0.1
