"""Network engine: architectures, gradients, Adam, training, accounting."""

import numpy as np
import pytest

from rsmalink import nn
from rsmalink.errors import ContractError, InvalidModulationError

ALL_BITS = [2, 4, 6, 8]
ARCHS = [("common_detect", bits, None) for bits in ALL_BITS] + \
        [("ic_private_detect", bits, 2) for bits in ALL_BITS]


def arch_id(spec):
    purpose, bits, mc = spec
    return f"{purpose}-M{bits}" + (f"-Mc{mc}" if mc else "")


def build(spec, seed=0):
    purpose, bits, mc = spec
    return nn.build_arch(purpose, bits, common_bits=mc, rng=np.random.default_rng(seed))


def layer_count_oracle(layer_sizes):
    """Independent summation of in*out + out and in*out."""
    params = 0
    mults = 0
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        params += fan_in * fan_out + fan_out
        mults += fan_in * fan_out
    return params, mults


def loss_only(mlp, x, y_onehot):
    """Cross-entropy evaluated independently of loss_and_grad."""
    probs = mlp.forward(x)
    return float(-np.sum(y_onehot * np.log(probs)) / x.shape[0])


class TestBuildArch:
    def test_common_qpsk_layout(self):
        m = build(("common_detect", 2, None))
        assert m.layer_sizes == [2, 10, 10, 2]
        assert m.activations == ["sigmoid", "relu", "softmax"]
        assert m.num_params() == 162

    def test_common_256qam_layout(self):
        m = build(("common_detect", 8, None))
        assert m.layer_sizes == [2, 25, 25, 25, 16]
        assert m.activations == ["sigmoid", "relu", "relu", "softmax"]
        assert m.num_params() == 1791

    def test_ic_qpsk_param_formula(self):
        for mc in ALL_BITS:
            m = nn.build_arch("ic_private_detect", 2, common_bits=mc)
            assert m.layer_sizes == [2 + mc, 20, 20, 2]
            assert m.num_params() == 522 + 20 * mc

    def test_third_hidden_only_for_256qam(self):
        for bits in ALL_BITS:
            m = nn.build_arch("ic_private_detect", bits, common_bits=4)
            hidden = len(m.layer_sizes) - 2
            assert hidden == (3 if bits == 8 else 2)

    def test_rejects_unsupported(self):
        with pytest.raises(InvalidModulationError):
            nn.build_arch("common_detect", 3)
        with pytest.raises(InvalidModulationError):
            nn.build_arch("ic_private_detect", 4, common_bits=5)
        with pytest.raises(ContractError):
            nn.build_arch("ic_private_detect", 4)
        with pytest.raises(ContractError):
            nn.build_arch("joint_detect", 4)


class TestComplexityCounts:
    @pytest.mark.parametrize("spec", ARCHS, ids=arch_id)
    def test_counts_match_summation_oracle(self, spec):
        m = build(spec)
        params, mults = layer_count_oracle(m.layer_sizes)
        assert m.num_params() == params
        assert m.num_multiplies() == mults

    @pytest.mark.parametrize("bits,params,mults", [
        (2, 162, 140), (4, 349, 315), (6, 648, 600), (8, 1791, 1700)])
    def test_common_detector_table(self, bits, params, mults):
        m = nn.build_arch("common_detect", bits)
        assert (m.num_params(), m.num_multiplies()) == (params, mults)

    @pytest.mark.parametrize("bits,base_p,base_m,slope", [
        (2, 522, 480, 20), (4, 829, 775, 25), (6, 1268, 1200, 30)])
    def test_ic_detector_table(self, bits, base_p, base_m, slope):
        for mc in ALL_BITS:
            m = nn.build_arch("ic_private_detect", bits, common_bits=mc)
            assert m.num_params() == base_p + slope * mc
            assert m.num_multiplies() == base_m + slope * mc

    def test_ic_256qam_counts(self):
        # the architecture fixes these: params - multiplies must equal the
        # bias total 35 + 35 + 35 + 16 = 121
        for mc in ALL_BITS:
            m = nn.build_arch("ic_private_detect", 8, common_bits=mc)
            assert m.num_multiplies() == 3080 + 35 * mc
            assert m.num_params() - m.num_multiplies() == 121
            assert m.num_params() == 3201 + 35 * mc


class TestForward:
    def test_zero_net_is_uniform(self):
        sizes = [3, 5, 4]
        m = nn.Mlp(sizes, ["sigmoid", "softmax"],
                   [np.zeros((5, 3)), np.zeros((4, 5))], [np.zeros(5), np.zeros(4)])
        out = m.forward(np.array([1.0, -2.0, 0.5]))
        assert np.allclose(out, 0.25)

    @pytest.mark.parametrize("spec", ARCHS, ids=arch_id)
    def test_outputs_normalized(self, spec):
        m = build(spec)
        rng = np.random.default_rng(3)
        x = rng.normal(size=(40, m.input_size))
        probs = m.forward(x)
        assert probs.shape == (40, m.output_size)
        assert np.all(probs >= 0)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_matches_straight_line_evaluation(self):
        # independent layer-by-layer reimplementation on a small random net
        rng = np.random.default_rng(4)
        m = nn.Mlp.initialize([3, 4, 5, 2], ["sigmoid", "relu", "softmax"], rng)
        x = rng.normal(size=3)
        z1 = m.weights[0] @ x + m.biases[0]
        a1 = 1.0 / (1.0 + np.exp(-z1))
        z2 = m.weights[1] @ a1 + m.biases[1]
        a2 = np.where(z2 > 0, z2, 0.0)
        z3 = m.weights[2] @ a2 + m.biases[2]
        expected = np.exp(z3) / np.exp(z3).sum()
        assert np.allclose(m.forward(x), expected, atol=1e-12)

    def test_input_size_check(self):
        m = build(("common_detect", 2, None))
        with pytest.raises(ContractError):
            m.forward(np.zeros(3))


class TestLossAndGrad:
    def test_confident_correct_prediction_loss_near_zero(self):
        m = nn.Mlp([2, 2], ["softmax"], [np.zeros((2, 2))], [np.array([200.0, -200.0])])
        x = np.zeros((4, 2))
        y = np.zeros((4, 2))
        y[:, 0] = 1.0
        loss, _ = m.loss_and_grad(x, y)
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_uniform_prediction_loss_log_d(self):
        for d in (2, 4, 16):
            m = nn.Mlp([3, d], ["softmax"], [np.zeros((d, 3))], [np.zeros(d)])
            x = np.ones((5, 3))
            y = np.zeros((5, d))
            y[:, 0] = 1.0
            loss, _ = m.loss_and_grad(x, y)
            assert loss == pytest.approx(np.log(d), rel=1e-12)

    def test_empty_batch_rejected(self):
        m = build(("common_detect", 2, None))
        with pytest.raises(ContractError):
            m.loss_and_grad(np.zeros((0, 2)), np.zeros((0, 2)))

    @pytest.mark.parametrize("spec", ARCHS, ids=arch_id)
    def test_gradients_match_central_differences(self, spec):
        # finite-difference oracle, batch of 32, step 1e-6
        m = build(spec, seed=11)
        rng = np.random.default_rng(spec[1] * 100 + 7)
        x = rng.normal(size=(32, m.input_size))
        labels = rng.integers(0, m.output_size, size=32)
        y = np.zeros((32, m.output_size))
        y[np.arange(32), labels] = 1.0

        _, grads = m.loss_and_grad(x, y)
        step = 1e-6
        for layer in range(len(m.weights)):
            for arr, analytic in ((m.weights[layer], grads[layer][0]),
                                  (m.biases[layer], grads[layer][1])):
                numeric = np.zeros_like(arr)
                it = np.nditer(arr, flags=["multi_index"])
                for _ in it:
                    ix = it.multi_index
                    orig = arr[ix]
                    arr[ix] = orig + step
                    up = loss_only(m, x, y)
                    arr[ix] = orig - step
                    down = loss_only(m, x, y)
                    arr[ix] = orig
                    numeric[ix] = (up - down) / (2 * step)
                assert np.allclose(analytic, numeric, rtol=1e-5, atol=1e-8)


class TestAdam:
    def spec(self, lr=0.1):
        return nn.TrainSpec(learning_rate=lr, epochs=1, mini_batch_size=1)

    def one_param_net(self, w0):
        return nn.Mlp([1, 2], ["softmax"],
                      [np.array([[w0], [0.0]])], [np.zeros(2)])

    def test_zero_gradient_is_fixed_point(self):
        m = build(("common_detect", 2, None))
        before = [w.copy() for w in m.weights]
        grads = [(np.zeros_like(w), np.zeros_like(b))
                 for w, b in zip(m.weights, m.biases)]
        nn.adam_step(m, grads, nn.AdamState.for_mlp(m), self.spec())
        for w0, w1 in zip(before, m.weights):
            assert np.array_equal(w0, w1)

    def test_moves_toward_quadratic_minimum(self):
        m = self.one_param_net(2.0)
        state = nn.AdamState.for_mlp(m)
        # gradient of f(w) = (w - 1)^2 / 2 at w = 2 is 1
        grads = [(np.array([[1.0], [0.0]]), np.zeros(2))]
        nn.adam_step(m, grads, state, self.spec(lr=0.1))
        assert m.weights[0][0, 0] < 2.0
        assert m.weights[0][0, 0] > 1.0

    def test_three_step_scalar_recurrence(self):
        # hand-stepped Adam recurrence oracle on a single scalar weight
        lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
        gradient_values = [0.3, -0.2, 0.7]
        w = 1.0
        m = v = 0.0
        expected = []
        for t, g in enumerate(gradient_values, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            w = w - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
            expected.append(w)

        net = self.one_param_net(1.0)
        state = nn.AdamState.for_mlp(net)
        spec = nn.TrainSpec(learning_rate=lr, epochs=1, mini_batch_size=1,
                            beta1=b1, beta2=b2, eps=eps)
        for g, want in zip(gradient_values, expected):
            grads = [(np.array([[g], [0.0]]), np.zeros(2))]
            nn.adam_step(net, grads, state, spec)
            assert net.weights[0][0, 0] == pytest.approx(want, rel=1e-12)


class TestTrain:
    def toy_set(self, rng, n=120):
        # two linearly separable blobs
        labels = rng.integers(0, 2, size=n)
        centers = np.array([[-2.0, 0.0], [2.0, 0.0]])
        x = centers[labels] + 0.3 * rng.normal(size=(n, 2))
        return x, labels

    def test_epoch_budget_values(self):
        assert nn.epoch_budget(2) == 25
        assert nn.epoch_budget(4) == 50
        assert nn.epoch_budget(3) == 38  # 37.5 rounds up

    def test_batch_budget_caps_and_clamps(self):
        assert nn.batch_budget(320, 4) == 100
        assert nn.batch_budget(64, 16) == 64

    def test_separable_toy_reaches_full_accuracy(self):
        rng = np.random.default_rng(5)
        x, labels = self.toy_set(rng)
        m = nn.build_arch("common_detect", 2, rng=np.random.default_rng(1))
        spec = nn.TrainSpec(learning_rate=0.01, epochs=25, mini_batch_size=32)
        nn.train(m, x, labels, spec)
        assert nn.accuracy(m, x, labels) == 1.0

    def test_seeded_determinism(self):
        rng = np.random.default_rng(6)
        x, labels = self.toy_set(rng)
        spec = nn.TrainSpec(learning_rate=0.01, epochs=5, mini_batch_size=32, rng_seed=9)
        nets = []
        for _ in range(2):
            m = nn.build_arch("common_detect", 2, rng=np.random.default_rng(2))
            nets.append(nn.train(m, x, labels, spec))
        for w0, w1 in zip(nets[0].weights, nets[1].weights):
            assert np.array_equal(w0, w1)

    def test_loss_non_increasing_on_logistic_toy(self):
        # single softmax layer = convex multinomial logistic regression
        rng = np.random.default_rng(7)
        x, labels = self.toy_set(rng)
        y = np.zeros((len(x), 2))
        y[np.arange(len(x)), labels] = 1.0
        m = nn.Mlp([2, 2], ["softmax"], [0.01 * rng.normal(size=(2, 2))], [np.zeros(2)])
        spec = nn.TrainSpec(learning_rate=0.005, epochs=40, mini_batch_size=len(x))
        state = nn.AdamState.for_mlp(m)
        losses = []
        for _ in range(spec.epochs):
            loss, grads = m.loss_and_grad(x, y)
            losses.append(loss)
            nn.adam_step(m, grads, state, spec)
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_label_range_validation(self):
        m = build(("common_detect", 2, None))
        with pytest.raises(ContractError):
            nn.train(m, np.zeros((4, 2)), np.array([0, 1, 2, 0]),
                     nn.TrainSpec(0.01, 1, 4))


class TestSerialization:
    def test_round_trip_exact(self, tmp_path):
        m = build(("ic_private_detect", 4, 2), seed=3)
        path = tmp_path / "net.json"
        m.save(path)
        loaded = nn.Mlp.load(path)
        assert loaded.layer_sizes == m.layer_sizes
        assert loaded.activations == m.activations
        for a, b in zip(m.weights, loaded.weights):
            assert np.array_equal(a, b)
        for a, b in zip(m.biases, loaded.biases):
            assert np.array_equal(a, b)

    def test_version_gate(self):
        m = build(("common_detect", 2, None))
        payload = m.to_dict()
        payload["format_version"] = 99
        with pytest.raises(ContractError):
            nn.Mlp.from_dict(payload)
