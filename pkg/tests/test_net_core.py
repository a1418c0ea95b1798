import numpy as np
import pytest

from spex import net_core as nc
from spex.errors import NonFiniteLossError, ShapeMismatchError
from spex.net_core import ConvSpec, Tensor, conv1d, deconv1d, grad_check


def _param(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _nudged(rng, *shape, floor=0.15):
    """Values bounded away from 0 so kinked activations stay locally linear."""
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < floor, floor * np.sign(x) + (x == 0) * floor, x)


def _check(f, params, tol=1e-4, coords=20, seed=0):
    err = grad_check(f, params, coords_per_param=coords, rng=np.random.default_rng(seed))
    assert err < tol, f"max relative gradient error {err}"


class TestConv1d:
    def test_one_by_one_identity(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(size=(2, 3, 7)))
        spec = ConvSpec(3, 3, kernel=1)
        w = Tensor(np.eye(3)[:, :, None])
        out = conv1d(x, spec, w)
        np.testing.assert_array_equal(out.data, x.data)

    def test_frame_count_kernel20_stride10(self):
        x = Tensor(np.zeros((1, 1, 32000)))
        out = conv1d(x, ConvSpec(1, 4, kernel=20, stride=10), Tensor(np.ones((4, 1, 20))))
        assert out.shape == (1, 4, 3199)

    def test_dilation_dependency_footprint(self):
        # depthwise kernel 3, dilation 4: output frame t sees inputs {t, t+4, t+8}
        spec = ConvSpec(2, 2, kernel=3, dilation=4, groups=2)
        w = Tensor(np.ones((2, 1, 3)))
        base = np.zeros((1, 2, 16))
        ref = conv1d(Tensor(base), spec, w).data
        for touched in range(16):
            bumped = base.copy()
            bumped[0, 0, touched] = 1.0
            out = conv1d(Tensor(bumped), spec, w).data
            changed = np.nonzero(np.any(out != ref, axis=(0, 1)))[0]
            expected = [t for t in range(8) if touched in (t, t + 4, t + 8)]
            assert list(changed) == expected

    def test_depthwise_channel_isolation(self):
        rng = np.random.default_rng(1)
        spec = ConvSpec(4, 4, kernel=3, groups=4)
        w = _param(rng, 4, 1, 3)
        x = rng.normal(size=(2, 4, 10))
        ref = conv1d(Tensor(x), spec, w).data
        bumped = x.copy()
        bumped[:, 2, :] += 1.0
        out = conv1d(Tensor(bumped), spec, w).data
        diff = np.any(out != ref, axis=(0, 2))
        assert list(diff) == [False, False, True, False]

    def test_channel_mismatch_raises(self):
        with pytest.raises(ShapeMismatchError):
            conv1d(Tensor(np.zeros((1, 2, 8))), ConvSpec(3, 1, 1), Tensor(np.zeros((1, 3, 1))))

    def test_too_few_frames_raises(self):
        with pytest.raises(ShapeMismatchError):
            conv1d(Tensor(np.zeros((1, 1, 4))), ConvSpec(1, 1, 5), Tensor(np.zeros((1, 1, 5))))

    def test_matches_direct_convolution(self):
        rng = np.random.default_rng(2)
        spec = ConvSpec(3, 5, kernel=4, stride=2, dilation=2, padding=3)
        x = rng.normal(size=(2, 3, 17))
        w = rng.normal(size=(5, 3, 4))
        b = rng.normal(size=5)
        out = conv1d(Tensor(x), spec, Tensor(w), Tensor(b)).data
        xp = np.pad(x, ((0, 0), (0, 0), (3, 3)))
        n_out = (17 + 6 - (2 * 3 + 1)) // 2 + 1
        want = np.zeros((2, 5, n_out))
        for t in range(n_out):
            for k in range(4):
                want[:, :, t] += xp[:, :, t * 2 + k * 2] @ w[:, :, k].T
        want += b[None, :, None]
        np.testing.assert_allclose(out, want, atol=1e-12)


class TestDeconv1d:
    def test_shape_round_trip(self):
        spec = ConvSpec(4, 1, kernel=20, stride=10)
        out = deconv1d(Tensor(np.zeros((1, 4, 3199))), spec, Tensor(np.zeros((4, 1, 20))))
        assert out.shape == (1, 1, 32000)

    def test_single_frame_emits_weighted_kernel(self):
        rng = np.random.default_rng(3)
        w = rng.normal(size=(3, 1, 6))
        coeff = rng.normal(size=(1, 3, 1))
        out = deconv1d(Tensor(coeff), ConvSpec(3, 1, kernel=6, stride=4), Tensor(w)).data
        want = np.einsum("bct,col->bol", coeff, w)
        np.testing.assert_allclose(out, want, atol=1e-12)

    def test_adjoint_of_conv1d(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            cin, cout, kernel, stride = rng.integers(1, 5), rng.integers(1, 5), 5, 2
            frames = int(rng.integers(kernel, 16))
            n_out = (frames - kernel) // stride + 1
            frames = (n_out - 1) * stride + kernel  # exact cover, no tail
            a = rng.normal(size=(2, cin, frames))
            b = rng.normal(size=(2, cout, n_out))
            w = rng.normal(size=(cout, cin, kernel))
            fwd = conv1d(Tensor(a), ConvSpec(cin, cout, kernel, stride), Tensor(w)).data
            bwd = deconv1d(Tensor(b), ConvSpec(cout, cin, kernel, stride), Tensor(w)).data
            np.testing.assert_allclose(np.vdot(fwd, b), np.vdot(a, bwd), atol=1e-10)


class TestNorms:
    def test_global_norm_constant_input_zeros(self):
        x = Tensor(np.full((2, 3, 5), 7.0))
        out = nc.global_layer_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-4)

    def test_global_norm_standardizes(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.normal(2.0, 3.0, size=(2, 4, 50)))
        out = nc.global_layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4))).data
        for b in range(2):
            assert abs(out[b].mean()) < 1e-6
            assert abs(out[b].var() - 1.0) < 1e-6

    def test_global_norm_scale_invariance(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(1, 4, 30))
        gain, bias = Tensor(np.ones(4)), Tensor(np.zeros(4))
        a = nc.global_layer_norm(Tensor(x), gain, bias).data
        b = nc.global_layer_norm(Tensor(10.0 * x), gain, bias).data
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_channel_norm_per_frame(self):
        rng = np.random.default_rng(7)
        x = Tensor(rng.normal(size=(2, 6, 9)))
        out = nc.channel_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6))).data
        np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-6)
        np.testing.assert_allclose(out.var(axis=1), 1.0, atol=1e-6)

    def test_channel_norm_frame_locality(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(1, 6, 9))
        gain = Tensor(rng.normal(size=6))
        bias = Tensor(rng.normal(size=6))
        ref = nc.channel_norm(Tensor(x), gain, bias).data
        bumped = x.copy()
        bumped[0, :, 4] += 1.0
        out = nc.channel_norm(Tensor(bumped), gain, bias).data
        changed = np.nonzero(np.any(out != ref, axis=(0, 1)))[0]
        assert list(changed) == [4]

    def test_channel_norm_constant_frame_zeros(self):
        x = np.ones((1, 5, 3))
        x[0, :, 1] = 4.2
        out = nc.channel_norm(Tensor(x), Tensor(np.ones(5)), Tensor(np.zeros(5))).data
        np.testing.assert_allclose(out[0, :, 1], 0.0, atol=1e-3)


class TestLstm:
    def _params(self, rng, feat, hidden):
        scale = 1.0 / np.sqrt(hidden)
        return (
            Tensor(rng.uniform(-scale, scale, (4 * hidden, feat)), requires_grad=True),
            Tensor(rng.uniform(-scale, scale, (4 * hidden, hidden)), requires_grad=True),
            Tensor(rng.uniform(-scale, scale, 4 * hidden), requires_grad=True),
        )

    def test_zero_weights_zero_states(self):
        x = Tensor(np.random.default_rng(9).normal(size=(2, 5, 3)))
        zeros = (Tensor(np.zeros((8, 3))), Tensor(np.zeros((8, 2))), Tensor(np.zeros(8)))
        out = nc.lstm_seq(x, *zeros)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_single_frame_blstm(self):
        rng = np.random.default_rng(10)
        x = Tensor(rng.normal(size=(1, 1, 3)))
        p_f = self._params(rng, 3, 4)
        p_b = self._params(rng, 3, 4)
        out = nc.blstm(x, p_f, p_b).data
        fwd = nc.lstm_seq(x, *p_f).data
        bwd = nc.lstm_seq(x, *p_b).data
        np.testing.assert_allclose(out, np.concatenate([fwd, bwd], axis=2), atol=1e-12)

    def test_time_reversal_symmetry(self):
        # with shared direction parameters, reversing the input sequence
        # swaps and time-reverses the two halves of the output
        rng = np.random.default_rng(11)
        params = self._params(rng, 3, 4)
        x = rng.normal(size=(2, 7, 3))
        out = nc.blstm(Tensor(x), params, params).data
        rev = nc.blstm(Tensor(x[:, ::-1, :].copy()), params, params).data
        np.testing.assert_allclose(rev[:, :, :4], out[:, ::-1, 4:], atol=1e-12)
        np.testing.assert_allclose(rev[:, :, 4:], out[:, ::-1, :4], atol=1e-12)

    def test_matches_step_by_step_reference(self):
        rng = np.random.default_rng(12)
        feat, hidden = 3, 2
        w_in, w_rec, b = self._params(rng, feat, hidden)
        x = rng.normal(size=(1, 4, feat))
        out = nc.lstm_seq(Tensor(x), w_in, w_rec, b).data

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        h = np.zeros(hidden)
        c = np.zeros(hidden)
        for t in range(4):
            z = w_in.data @ x[0, t] + w_rec.data @ h + b.data
            i, f = sig(z[:hidden]), sig(z[hidden : 2 * hidden])
            cb, o = np.tanh(z[2 * hidden : 3 * hidden]), sig(z[3 * hidden :])
            c = f * c + i * cb
            h = o * np.tanh(c)
            np.testing.assert_allclose(out[0, t], h, atol=1e-12)


class TestActivations:
    def test_relu_values(self):
        out = nc.relu(Tensor(np.array([-1.0, 2.0])))
        np.testing.assert_array_equal(out.data, [0.0, 2.0])

    def test_sigmoid_at_zero(self):
        assert nc.sigmoid(Tensor(np.array([0.0]))).data[0] == pytest.approx(0.5)

    def test_softmax_uniform_101(self):
        out = nc.softmax(Tensor(np.zeros((1, 101))), axis=1).data
        np.testing.assert_allclose(out, 1.0 / 101, atol=1e-15)
        assert out.sum() == pytest.approx(1.0)

    def test_prelu_slope(self):
        slope = Tensor(np.array(0.25))
        out = nc.prelu(Tensor(np.array([-4.0, 4.0])), slope)
        np.testing.assert_allclose(out.data, [-1.0, 4.0])


class TestGradCheck:
    def test_square_at_three(self):
        w = Tensor(np.array([3.0]), requires_grad=True)
        err = grad_check(lambda: nc.sum_(nc.square(w)), [w])
        assert err < 1e-8

    def test_conv_relu_sum(self):
        rng = np.random.default_rng(13)
        spec = ConvSpec(4, 3, kernel=5, stride=2)
        x = Tensor(_nudged(rng, 2, 4, 16), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 4, 5)), requires_grad=True)
        b = Tensor(rng.normal(size=3), requires_grad=True)
        err = grad_check(
            lambda: nc.sum_(nc.relu(conv1d(x, spec, w, b))),
            [x, w, b],
            rng=np.random.default_rng(14),
        )
        assert err < 1e-4

    @pytest.mark.filterwarnings("ignore:divide by zero")
    def test_nonfinite_loss_raises(self):
        w = Tensor(np.array([0.0]), requires_grad=True)
        with pytest.raises(NonFiniteLossError):
            grad_check(lambda: nc.log(w), [w])


class TestPrimitiveGradients:
    """Every primitive vs central differences on randomized small shapes."""

    def test_arithmetic_chain(self):
        rng = np.random.default_rng(20)
        a = _param(rng, 3, 4)
        b = Tensor(rng.normal(size=(3, 4)) + 3.0, requires_grad=True)
        proj = Tensor(rng.normal(size=(3, 4)))
        _check(lambda: nc.sum_(nc.mul(proj, nc.div(nc.add(a, b), nc.sub(b, Tensor(1.0))))), [a, b])

    def test_matmul(self):
        rng = np.random.default_rng(21)
        a, b = _param(rng, 3, 5), _param(rng, 5, 2)
        _check(lambda: nc.sum_(nc.square(nc.matmul(a, b))), [a, b])

    def test_elementwise_smooth(self):
        rng = np.random.default_rng(22)
        x = Tensor(rng.uniform(0.5, 2.0, (4, 6)), requires_grad=True)
        _check(lambda: nc.sum_(nc.exp(nc.mul(0.3, x))), [x])
        _check(lambda: nc.sum_(nc.log(x)), [x])
        _check(lambda: nc.sum_(nc.sqrt(x)), [x])
        _check(lambda: nc.sum_(nc.tanh(x)), [x])
        _check(lambda: nc.sum_(nc.sigmoid(x)), [x])

    def test_kinked_activations(self):
        rng = np.random.default_rng(23)
        x = Tensor(_nudged(rng, 5, 7), requires_grad=True)
        slope = Tensor(np.full(7, 0.25), requires_grad=True)
        _check(lambda: nc.sum_(nc.relu(x)), [x])
        _check(lambda: nc.sum_(nc.prelu(x, slope)), [x, slope])

    def test_softmax_and_take_class(self):
        rng = np.random.default_rng(24)
        logits = _param(rng, 6, 9)
        labels = rng.integers(0, 9, size=6)
        _check(
            lambda: nc.mean(nc.mul(-1.0, nc.take_class(nc.log_softmax(logits, axis=1), labels))),
            [logits],
        )
        proj = Tensor(rng.normal(size=(6, 9)))
        _check(lambda: nc.sum_(nc.mul(proj, nc.softmax(logits, axis=1))), [logits])

    def test_reductions_and_reshapes(self):
        rng = np.random.default_rng(25)
        x = _param(rng, 2, 3, 4)
        _check(lambda: nc.mean(nc.square(x)), [x])
        _check(lambda: nc.sum_(nc.square(nc.mean(x, axis=2))), [x])
        _check(lambda: nc.sum_(nc.square(nc.reshape(x, (6, 4)))), [x])
        _check(lambda: nc.sum_(nc.square(nc.narrow(x, 2, 1, 2))), [x])
        _check(lambda: nc.sum_(nc.square(nc.pad_end(x, 2, 3))), [x])
        _check(lambda: nc.sum_(nc.square(nc.flip(x, 1))), [x])

    def test_concat_and_tile(self):
        rng = np.random.default_rng(26)
        a, b = _param(rng, 2, 3, 4), _param(rng, 2, 5, 4)
        proj = Tensor(rng.normal(size=(2, 8, 4)))
        _check(lambda: nc.sum_(nc.mul(proj, nc.concat([a, b], axis=1))), [a, b])
        g = _param(rng, 2, 6)
        proj2 = Tensor(rng.normal(size=(2, 6, 5)))
        _check(lambda: nc.sum_(nc.mul(proj2, nc.tile_frames(g, 5))), [g])

    @pytest.mark.parametrize(
        "spec",
        [
            ConvSpec(3, 4, kernel=5, stride=1),
            ConvSpec(3, 4, kernel=5, stride=3),
            ConvSpec(4, 4, kernel=3, dilation=4, groups=4),
            ConvSpec(6, 4, kernel=3, stride=2, groups=2),
            ConvSpec(2, 3, kernel=4, stride=2, padding=3),
        ],
    )
    def test_conv1d_gradients(self, spec):
        rng = np.random.default_rng(27)
        x = Tensor(rng.normal(size=(2, spec.in_channels, 17)), requires_grad=True)
        w = Tensor(rng.normal(size=spec.weight_shape()), requires_grad=True)
        b = Tensor(rng.normal(size=spec.out_channels), requires_grad=True)
        n_out = spec.out_frames(17)
        proj = Tensor(rng.normal(size=(2, spec.out_channels, n_out)))
        _check(lambda: nc.sum_(nc.mul(proj, conv1d(x, spec, w, b))), [x, w, b])

    def test_deconv1d_gradients(self):
        rng = np.random.default_rng(28)
        spec = ConvSpec(3, 2, kernel=6, stride=4)
        x = Tensor(rng.normal(size=(2, 3, 5)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2, 6)), requires_grad=True)
        b = Tensor(rng.normal(size=2), requires_grad=True)
        proj = Tensor(rng.normal(size=(2, 2, 22)))
        _check(lambda: nc.sum_(nc.mul(proj, deconv1d(x, spec, w, b))), [x, w, b])

    @pytest.mark.parametrize("norm", [nc.global_layer_norm, nc.channel_norm])
    def test_norm_gradients(self, norm):
        rng = np.random.default_rng(29)
        x = _param(rng, 2, 5, 7)
        gain = Tensor(rng.uniform(0.5, 1.5, 5), requires_grad=True)
        bias = Tensor(rng.normal(size=5), requires_grad=True)
        proj = Tensor(rng.normal(size=(2, 5, 7)))
        _check(lambda: nc.sum_(nc.mul(proj, norm(x, gain, bias))), [x, gain, bias])

    def test_lstm_gradients(self):
        rng = np.random.default_rng(30)
        feat, hidden = 3, 4
        scale = 1.0 / np.sqrt(hidden)
        w_in = Tensor(rng.uniform(-scale, scale, (4 * hidden, feat)), requires_grad=True)
        w_rec = Tensor(rng.uniform(-scale, scale, (4 * hidden, hidden)), requires_grad=True)
        b = Tensor(rng.uniform(-scale, scale, 4 * hidden), requires_grad=True)
        x = Tensor(rng.normal(size=(2, 6, feat)), requires_grad=True)
        proj = Tensor(rng.normal(size=(2, 6, hidden)))
        _check(
            lambda: nc.sum_(nc.mul(proj, nc.lstm_seq(x, w_in, w_rec, b))),
            [x, w_in, w_rec, b],
            coords=25,
        )

    def test_blstm_gradients(self):
        rng = np.random.default_rng(31)
        feat, hidden = 3, 2
        scale = 1.0 / np.sqrt(hidden)

        def triple():
            return tuple(
                Tensor(rng.uniform(-scale, scale, s), requires_grad=True)
                for s in ((4 * hidden, feat), (4 * hidden, hidden), (4 * hidden,))
            )

        p_f, p_b = triple(), triple()
        x = Tensor(rng.normal(size=(1, 5, feat)), requires_grad=True)
        proj = Tensor(rng.normal(size=(1, 5, 2 * hidden)))
        _check(
            lambda: nc.sum_(nc.mul(proj, nc.blstm(x, p_f, p_b))),
            [x, *p_f, *p_b],
        )


class TestNoGrad:
    def test_suspends_tape(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with nc.no_grad():
            out = nc.sum_(nc.square(x))
        assert not out.requires_grad
        y = nc.sum_(nc.square(x))
        assert y.requires_grad
