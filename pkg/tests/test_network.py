import itertools
import math
from dataclasses import replace

import numpy as np
import pytest

from unimodal_ordinal import network as N
from unimodal_ordinal.data import SyntheticSpec, generate_synthetic, split
from unimodal_ordinal.errors import TrainingDivergedError
from unimodal_ordinal.heads import HeadConfig, head_forward, softplus
from unimodal_ordinal.metrics import unimodal_flags

from .gradcheck import jitter_biases, network_gradient_errors

ARMS = [
    ("softmax", "cross_entropy", 1.0, False),
    ("regression", "squashed_regression", 1.0, False),
] + [
    (head, loss, tau, learn)
    for head in ("poisson", "binomial")
    for loss in ("cross_entropy", "squared_emd")
    for tau, learn in ((1.0, False), (0.3, False), (1.0, True))
]


@pytest.fixture(scope="module")
def small_data():
    ds = generate_synthetic(SyntheticSpec(n_samples=400, n_features=2, num_classes=5, seed=1))
    return split(ds, 0.25, 1)


class TestInit:
    def test_deterministic(self):
        a = N.init_model([3, 8, 4], "poisson", 5, seed=4)
        b = N.init_model([3, 8, 4], "poisson", 5, seed=4)
        assert N.dumps_checkpoint(a) == N.dumps_checkpoint(b)

    def test_he_std(self):
        m = N.init_model([200, 100], "binomial", 4, seed=0)
        assert m.weights[0].size >= 10_000
        assert abs(m.weights[0].std() / math.sqrt(2 / 200) - 1) < 0.15

    def test_zero_biases_and_shapes(self):
        m = N.init_model([3, 8, 4], "softmax", 6, seed=0)
        assert all(np.all(b == 0) for b in m.biases)
        assert [W.shape for W in m.weights] == [(3, 8), (8, 4), (4, 6)]

    @pytest.mark.parametrize("dims", [[3], [3, 0], []])
    def test_bad_dims(self, dims):
        with pytest.raises(ValueError):
            N.init_model(dims, "poisson", 4)

    def test_learnable_tau_starts_at_half(self):
        assert N.init_model([2, 3], "poisson", 4, learn_tau=True).tau_effective == 0.5


class TestForward:
    def test_zero_weights_poisson(self):
        m = N.init_model([3, 4], "poisson", 5)
        m = replace(m, weights=[np.zeros_like(W) for W in m.weights])
        P = N.forward(m, np.random.default_rng(0).normal(size=(6, 3)))
        expected = head_forward(math.log(2), HeadConfig("poisson", 5))
        np.testing.assert_allclose(P, np.tile(expected, (6, 1)), atol=1e-15)

    def test_rows_are_distributions(self, rng):
        X = rng.normal(size=(20, 2))
        for head in ("poisson", "binomial", "softmax"):
            P = N.forward(N.init_model([2, 5, 3], head, 4, seed=2), X)
            assert P.shape == (20, 4)
            assert np.all(P >= 0) and np.allclose(P.sum(axis=1), 1, atol=1e-9)

    def test_hand_computed(self):
        # one hidden unit: x -> relu(2x - 1) -> 0.5 * h + 0.25 -> softplus -> Poisson head
        m = N.init_model([1, 1], "poisson", 4)
        m = replace(m, weights=[np.array([[2.0]]), np.array([[0.5]])], biases=[np.array([-1.0]), np.array([0.25])])
        x = 1.5
        z = 0.5 * max(2 * x - 1, 0) + 0.25
        lam = math.log1p(math.exp(z))
        w = np.array([lam**j * math.exp(-lam) / math.factorial(j) for j in range(4)])
        np.testing.assert_allclose(N.forward(m, np.array([[x]]))[0], w / w.sum(), atol=1e-14)

    def test_regression_scale(self):
        m = N.init_model([2, 3], "regression", 5)
        out = N.forward(m, np.zeros((2, 2)))
        np.testing.assert_allclose(out, 2.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            N.forward(N.init_model([3, 4], "poisson", 4), np.zeros((2, 2)))


class TestBackward:
    @pytest.mark.parametrize("head, loss, tau, learn", ARMS)
    def test_matches_finite_differences(self, head, loss, tau, learn, rng):
        m = N.init_model([3, 2, 2], head, 5, seed=int(rng.integers(1000)), tau=tau, learn_tau=learn)
        m = jitter_biases(m, rng)
        if learn:
            m = replace(m, tau_raw=0.4)
        X = rng.normal(size=(6, 3))
        y = rng.integers(5, size=6)
        errs = network_gradient_errors(m, X, y, loss, l2=1e-2)
        assert max(errs.values()) < 1e-4, errs

    def test_duplicated_batch(self, rng):
        m = N.init_model([3, 4], "binomial", 4, seed=1, learn_tau=True)
        X = rng.normal(size=(5, 3))
        y = rng.integers(4, size=5)
        _, g1 = N.backward(m, X, y, "squared_emd")
        _, g2 = N.backward(m, np.vstack([X, X]), np.concatenate([y, y]), "squared_emd")
        for a, b in zip(g1.flat(), g2.flat()):
            np.testing.assert_allclose(a, b, atol=1e-15)
        assert g1.tau_raw == pytest.approx(g2.tau_raw, abs=1e-15)

    def test_perfect_prediction_zero_gradient(self):
        m = N.init_model([1, 2], "softmax", 3)
        m = replace(m, biases=[m.biases[0], np.array([0.0, 80.0, 0.0])], weights=[m.weights[0], np.zeros((2, 3))])
        _, g = N.backward(m, np.ones((4, 1)), np.ones(4, dtype=int), "cross_entropy")
        assert max(np.abs(a).max() for a in g.flat()) < 1e-30

    def test_incompatible_loss(self):
        with pytest.raises(ValueError):
            N.backward(N.init_model([2, 2], "regression", 3), np.zeros((1, 2)), [0], "cross_entropy")


class TestAdam:
    def _setup(self, rng, learn=False):
        m = N.init_model([3, 4], "poisson", 4, seed=3, learn_tau=learn)
        _, g = N.backward(m, rng.normal(size=(8, 3)), rng.integers(4, size=8), "cross_entropy")
        return m, g

    def test_zero_gradient(self, rng):
        m, g = self._setup(rng)
        zero = N.Gradients([np.zeros_like(W) for W in g.weights], [np.zeros_like(b) for b in g.biases])
        m2, opt = N.adam_step(m, zero, N.init_optimizer(m))
        for a, b in zip(m.parameters(), m2.parameters()):
            np.testing.assert_array_equal(a, b)
        assert opt.step == 1

    def test_first_step_is_lr_sign(self, rng):
        m, g = self._setup(rng, learn=True)
        m2, _ = N.adam_step(m, g, N.init_optimizer(m, lr=1e-3))
        for p0, p1, gi in zip(m.parameters(), m2.parameters(), g.flat()):
            big = np.abs(gi) > 1e-3
            np.testing.assert_allclose((p1 - p0)[big], -1e-3 * np.sign(gi[big]), rtol=1e-4)
        assert m2.tau_raw - m.tau_raw == pytest.approx(-1e-3 * np.sign(g.tau_raw), rel=1e-4)

    def test_deterministic(self, rng):
        m, g = self._setup(rng)
        opt = N.init_optimizer(m)
        a, _ = N.adam_step(m, g, opt)
        b, _ = N.adam_step(m, g, opt)
        assert N.dumps_checkpoint(a) == N.dumps_checkpoint(b)

    def test_l2_shrinks_weights_only(self):
        m = N.init_model([3, 4], "poisson", 4, seed=3, learn_tau=True)
        m = replace(m, biases=[b + 0.5 for b in m.biases])
        X = np.zeros((1, 3))
        # with all-zero inputs the first layer sees no data gradient
        _, g = N.backward(m, X, [0], "cross_entropy", l2=1e-2)
        g = N.Gradients([2e-2 * W for W in m.weights], [np.zeros_like(b) for b in m.biases], 0.0)
        m2, _ = N.adam_step(m, g, N.init_optimizer(m))
        for W0, W1 in zip(m.weights, m2.weights):
            assert np.all(np.abs(W1) <= np.abs(W0))
        for b0, b1 in zip(m.biases, m2.biases):
            np.testing.assert_array_equal(b0, b1)
        assert m2.tau_raw == m.tau_raw


class TestSchedule:
    def test_two_plateaus(self):
        s = N.PlateauSchedule(1e-3, patience=2, floor=1e-6)
        for v in [0.5, 0.5, 0.5, 0.5, 0.5]:
            lr = s.update(v)
        assert lr == pytest.approx(1e-5)

    def test_floor(self):
        s = N.PlateauSchedule(1e-3, patience=1, floor=5e-5)
        for _ in range(10):
            s.update(0.0)
        assert s.lr == 5e-5

    def test_improvement_resets(self):
        s = N.PlateauSchedule(1e-3, patience=2)
        for v in [0.1, 0.1, 0.2, 0.2, 0.3]:
            s.update(v)
        assert s.lr == 1e-3


class TestTrain:
    def test_deterministic_history(self, small_data):
        cfg = N.TrainConfig(head="binomial", loss="squared_emd", learn_tau=True, epochs=4, hidden=(8,))
        m1, h1 = N.train(*small_data, cfg)
        m2, h2 = N.train(*small_data, cfg)
        assert h1 == h2
        assert N.dumps_checkpoint(m1) == N.dumps_checkpoint(m2)

    def test_history_schema_and_unimodality(self, small_data):
        _, h = N.train(*small_data, N.TrainConfig(head="poisson", epochs=3, hidden=(8,)))
        assert list(h[0]) == list(N.HISTORY_COLUMNS)
        assert all(r["frac_unimodal"] == 1.0 for r in h)

    def test_lr_drops(self, small_data):
        _, h = N.train(*small_data, N.TrainConfig(head="softmax", epochs=12, patience=1, lr_floor=1e-6, hidden=(4,)))
        lrs = [r["lr"] for r in h]
        assert lrs[0] == 1e-3 and min(lrs) < 1e-3
        assert all(a >= b for a, b in itertools.pairwise(lrs))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reported(self, small_data):
        # the first update blows the weights up; the next batch's loss is nan
        with pytest.raises(TrainingDivergedError, match="epoch 1, batch 1"):
            N.train(*small_data, N.TrainConfig(head="softmax", lr=float("inf"), lr_floor=1.0, epochs=2, hidden=(4,)))

    def test_validation_outputs_unimodal(self, small_data):
        m, _ = N.train(*small_data, N.TrainConfig(head="binomial", epochs=2, hidden=(8,)))
        assert np.all(unimodal_flags(N.forward(m, small_data[1].features)))


class TestCheckpoint:
    @pytest.mark.parametrize("head", N.MODEL_HEADS)
    def test_round_trip_bytes(self, head, tmp_path, rng):
        m = N.init_model([3, 5, 2], head, 4, seed=8, learn_tau=head in ("poisson", "binomial"))
        m = replace(m, tau_raw=float(rng.normal()), biases=[b + rng.normal(size=b.shape) for b in m.biases])
        N.save_checkpoint(m, tmp_path / "a.json")
        back = N.load_checkpoint(tmp_path / "a.json")
        N.save_checkpoint(back, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        X = rng.normal(size=(4, 3))
        np.testing.assert_array_equal(N.forward(m, X), N.forward(back, X))

    def test_version_check(self):
        text = N.dumps_checkpoint(N.init_model([2, 2], "poisson", 3)).replace('"schema_version": 1', '"schema_version": 99')
        with pytest.raises(ValueError, match="schema_version"):
            N.loads_checkpoint(text)


def test_softplus_stable():
    assert softplus(-800.0) == 0.0 and softplus(800.0) == 800.0
