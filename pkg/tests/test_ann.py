import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcsa.ann import (
    MODEL_HEADER,
    MlpModel,
    TrainConfig,
    accuracy,
    classify,
    format_model,
    forward,
    gradient_check,
    init_model,
    loss,
    parse_model,
    split_dataset,
    train,
)
from mcsa.errors import ConfigurationError, DivergenceError, DomainError, ParseError, TrainingError
from mcsa.features import FeatureVector
from mcsa.motor import FaultLabel
from mcsa.sidebands import Branch

TWO = (FaultLabel.HEALTHY, FaultLabel.INTER_TURN_MINOR)


def vec(values, label=None):
    layout = tuple((1 + 2 * (i // 2), Branch.NEGATIVE if i % 2 == 0 else Branch.POSITIVE) for i in range(len(values)))
    return FeatureVector(values, layout, label)


def toy_set(n=40, seed=0):
    """Uniform points on either side of x0 + x1 = 1, with a 0.2 margin."""
    rng = np.random.default_rng(seed)
    data = []
    while len(data) < n:
        p = rng.uniform(0, 1, 2)
        margin = p.sum() - 1.0
        if abs(margin) < 0.2:
            continue
        data.append(vec(p, TWO[int(margin > 0)]))
    return data


def zero_model(sizes=(4, 5, 3), activation="sigmoid"):
    m = init_model(sizes, activation)
    for p in m.parameters():
        p[...] = 0.0
    return m


class TestInit:
    def test_shapes(self):
        m = init_model([10, 16, 3], "sigmoid", seed=1)
        assert m.weights[0].shape == (16, 10)
        assert m.weights[1].shape == (3, 16)
        assert not np.any(m.biases[0]) and not np.any(m.biases[1])
        assert m.labels == (FaultLabel.HEALTHY, FaultLabel.INTER_TURN_MINOR, FaultLabel.INTER_TURN_SEVERE)

    def test_deterministic(self):
        a = init_model([10, 16, 3], "sigmoid", seed=1)
        b = init_model([10, 16, 3], "sigmoid", seed=1)
        assert all(np.array_equal(x, y) for x, y in zip(a.parameters(), b.parameters()))

    def test_fan_in_scaling(self):
        m = init_model([400, 300, 3], seed=2)
        assert np.std(m.weights[0]) == pytest.approx(1 / 20, rel=0.02)
        assert np.std(m.weights[1]) == pytest.approx(1 / np.sqrt(300), rel=0.1)
        assert abs(np.mean(m.weights[0])) < 0.002

    def test_zero_layer(self):
        with pytest.raises(ConfigurationError):
            init_model([10, 0, 3])

    def test_wrong_depth(self):
        with pytest.raises(ConfigurationError):
            init_model([10, 3])

    def test_bad_shapes_rejected(self):
        with pytest.raises(ConfigurationError):
            MlpModel((2, 3, 2), [np.zeros((2, 3)), np.zeros((2, 3))], [np.zeros(3), np.zeros(2)], labels=TWO)


class TestForward:
    @settings(max_examples=50, deadline=None)
    @given(
        st.integers(0, 2**32 - 1),
        st.sampled_from(["sigmoid", "tanh"]),
        st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4),
    )
    def test_probabilities_normalized(self, seed, activation, x):
        m = init_model([4, 6, 3], activation, seed)
        p = forward(m, vec(x))
        assert abs(p.sum() - 1.0) <= 1e-12
        assert np.all(np.isfinite(p)) and np.all(p >= 0) and np.all(p <= 1)

    def test_extreme_logits_stay_finite(self):
        m = init_model([4, 6, 3], seed=0)
        m.weights[1][...] = 1e6
        m.weights[1][0] = -1e6
        p = forward(m, vec([1, 1, 1, 1]))
        assert np.all(np.isfinite(p))
        assert abs(p.sum() - 1.0) <= 1e-12

    def test_zero_model_uniform(self):
        p = forward(zero_model(), vec([0.3, 0.1, 0.9, 2.0]))
        np.testing.assert_array_equal(p, np.full(3, 1 / 3))

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            forward(init_model([4, 6, 3]), vec([1.0, 2.0]))

    def test_batch_matches_single(self):
        m = init_model([4, 6, 3], seed=3)
        xs = [vec(np.arange(4) * i) for i in range(5)]
        batch = forward(m, xs)
        for i, x in enumerate(xs):
            np.testing.assert_allclose(batch[i], forward(m, x), rtol=1e-14)


class TestTrain:
    def test_toy_set_separable(self):
        data = toy_set()
        m = init_model([2, 8, 2], seed=0, labels=TWO)
        trained, history = train(m, data, TrainConfig(learning_rate=0.5, epochs=200, batch_size=8, seed=0))
        assert accuracy(trained, data) == 1.0
        assert len(history) == 200
        assert history[-1] < history[0]
        assert trained.all_finite()

    def test_zero_learning_rate(self):
        data = toy_set()
        m = init_model([2, 8, 2], seed=0, labels=TWO)
        trained, history = train(m, data, TrainConfig(learning_rate=0.0, epochs=20, batch_size=8))
        assert len(set(history)) == 1
        assert all(np.array_equal(a, b) for a, b in zip(m.parameters(), trained.parameters()))

    def test_full_batch_small_lr_monotone(self):
        data = toy_set()
        m = init_model([2, 8, 2], seed=0, labels=TWO)
        _, history = train(m, data, TrainConfig(learning_rate=0.01, epochs=300, batch_size=len(data)))
        assert all(b <= a for a, b in zip(history, history[1:]))

    def test_input_model_untouched(self):
        data = toy_set()
        m = init_model([2, 8, 2], seed=0, labels=TWO)
        before = [p.copy() for p in m.parameters()]
        train(m, data, TrainConfig(epochs=5, batch_size=8))
        assert all(np.array_equal(a, b) for a, b in zip(before, m.parameters()))

    def test_seeded_reproducible(self):
        data = toy_set()
        m = init_model([2, 8, 2], seed=0, labels=TWO)
        cfg = TrainConfig(epochs=10, batch_size=8, seed=4)
        a, ha = train(m, data, cfg)
        b, hb = train(m, data, cfg)
        assert ha == hb
        assert format_model(a) == format_model(b)

    def test_single_class(self):
        data = [vec([0.1, 0.2], FaultLabel.HEALTHY) for _ in range(4)]
        with pytest.raises(TrainingError, match="two distinct"):
            train(init_model([2, 3, 2], labels=TWO), data, TrainConfig(batch_size=2))

    def test_batch_larger_than_data(self):
        with pytest.raises(TrainingError):
            train(init_model([2, 3, 2], labels=TWO), toy_set(4), TrainConfig(batch_size=5))

    def test_divergence_reports_epoch(self):
        data = toy_set()
        m = init_model([2, 8, 2], seed=0, labels=TWO)
        m.weights[0][0, 0] = np.nan
        with pytest.raises(DivergenceError) as info:
            train(m, data, TrainConfig(epochs=3, batch_size=8))
        assert info.value.epoch == 1
        assert "epoch 1" in str(info.value)

    def test_l2_shrinks_weights(self):
        data = toy_set()
        m = init_model([2, 8, 2], seed=0, labels=TWO)
        plain, _ = train(m, data, TrainConfig(epochs=50, batch_size=8))
        decayed, _ = train(m, data, TrainConfig(epochs=50, batch_size=8, l2=0.1))
        assert np.linalg.norm(decayed.weights[0]) < np.linalg.norm(plain.weights[0])


class TestGradientCheck:
    @pytest.mark.parametrize("draw", range(20))
    def test_random_models(self, draw):
        rng = np.random.default_rng(100 + draw)
        activation = ("sigmoid", "tanh")[draw % 2]
        m = init_model([5, 7, 3], activation, seed=draw)
        for b in m.biases:
            b[...] = rng.normal(size=b.shape)
        x = vec(rng.normal(size=5))
        y = m.labels[int(rng.integers(3))]
        assert gradient_check(m, x, y, 1e-5) < 1e-4

    @pytest.mark.parametrize("activation", ["sigmoid", "tanh"])
    def test_zero_model(self, activation):
        m = zero_model(activation=activation)
        assert gradient_check(m, vec([0.5, -1.0, 2.0, 0.1]), FaultLabel.INTER_TURN_SEVERE, 1e-5) < 1e-6

    def test_batch_input(self):
        m = init_model([2, 4, 2], seed=5, labels=TWO)
        data = toy_set(6)
        assert gradient_check(m, data, [v.label for v in data]) < 1e-4

    @pytest.mark.parametrize("eps", [0.0, -1e-5, 0.02])
    def test_epsilon_precondition(self, eps):
        with pytest.raises(DomainError):
            gradient_check(zero_model(), vec([0, 0, 0, 0]), FaultLabel.HEALTHY, eps)

    def test_detects_wrong_gradient(self, monkeypatch):
        import mcsa.ann as ann

        real = ann._loss_and_grads

        def broken(m, X, Y, l2=0.0):
            value, grads = real(m, X, Y, l2)
            return value, [g * 1.01 for g in grads]

        monkeypatch.setattr(ann, "_loss_and_grads", broken)
        m = init_model([4, 4, 3], seed=0)
        assert gradient_check(m, vec([0.3, 0.2, 0.1, 0.0]), FaultLabel.HEALTHY) > 5e-3


class TestClassify:
    def test_uniform_model_uncertain(self):
        c = classify(zero_model(), vec([1, 2, 3, 4]))
        assert c.confidence == pytest.approx(1 / 3)
        assert c.uncertain

    def test_confident(self):
        m = zero_model()
        m.biases[1][2] = 10.0
        c = classify(m, vec([0, 0, 0, 0]))
        assert c.label is FaultLabel.INTER_TURN_SEVERE
        assert c.confidence > 0.99 and not c.uncertain

    def test_threshold(self):
        m = zero_model()
        m.biases[1][0] = 1.0
        c = classify(m, vec([0, 0, 0, 0]))
        assert classify(m, vec([0, 0, 0, 0]), reject_threshold=c.confidence - 1e-9).uncertain is False
        assert classify(m, vec([0, 0, 0, 0]), reject_threshold=c.confidence + 1e-9).uncertain is True

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 1000), st.floats(-50, 50), st.lists(st.floats(-5, 5), min_size=4, max_size=4))
    def test_bias_shift_invariance(self, seed, shift, x):
        m = init_model([4, 6, 3], seed=seed)
        shifted = m.copy()
        shifted.biases[1] += shift
        assert classify(m, vec(x)).label is classify(shifted, vec(x)).label

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            classify(init_model([4, 6, 3]), vec([1.0]))


class TestModelFile:
    @pytest.mark.parametrize("activation", ["sigmoid", "tanh"])
    def test_round_trip_bitwise(self, activation, rng):
        m = init_model([10, 16, 3], activation, seed=9)
        m.biases[0][...] = rng.normal(size=16)
        back = parse_model(format_model(m))
        xs = [vec(rng.normal(size=10)) for _ in range(10)]
        assert np.array_equal(forward(m, xs), forward(back, xs))
        assert format_model(back) == format_model(m)

    def test_header(self):
        text = format_model(init_model([2, 3, 2], labels=TWO))
        assert text.splitlines()[:4] == [MODEL_HEADER, "layers 2 3 2", "activation sigmoid", "labels healthy inter_turn_minor"]

    def test_bad_header(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_model("MLP v0\n")

    def test_truncated(self):
        text = format_model(init_model([2, 3, 2], labels=TWO))
        with pytest.raises(ParseError):
            parse_model("\n".join(text.splitlines()[:-2]))


class TestSplit:
    def test_stratified(self):
        data = [vec([i, 0], TWO[i % 2]) for i in range(100)]
        tr, te = split_dataset(data, 0.2, seed=1)
        assert len(tr) == 80 and len(te) == 20
        assert sum(v.label is TWO[0] for v in te) == 10
        assert {id(v) for v in tr}.isdisjoint({id(v) for v in te})

    def test_bad_fraction(self):
        with pytest.raises(DomainError):
            split_dataset([], 1.0)


def test_loss_of_uniform_model():
    m = zero_model()
    assert loss(m, [vec([0, 0, 0, 0])], [FaultLabel.HEALTHY]) == pytest.approx(np.log(3))
