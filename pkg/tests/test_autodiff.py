import numpy as np
import pytest

from dpgan import autodiff as ad
from dpgan.errors import ContractError
from dpgan.gradcheck import gradcheck, relative_error

from conftest import rand


def const(value, shape=(1, 1, 2, 2), requires_grad=False):
    return ad.Tensor(np.full(shape, value), requires_grad=requires_grad)


def central_difference(f, x, i, h=1e-5):
    x.data.flat[i] += h
    up = f()
    x.data.flat[i] -= 2 * h
    down = f()
    x.data.flat[i] += h
    return (up - down) / (2 * h)


class TestElementwise:
    def test_constant_add(self):
        assert np.all(ad.add(const(2.0), const(4.0)).data == 6.0)

    def test_add_zero_and_sum_grad(self, rng):
        x = rand(rng, 1, 2, 3, 3, requires_grad=True)
        y = ad.add(x, ad.Tensor(np.zeros(x.shape)))
        assert np.array_equal(y.data, x.data)
        ad.backward(ad.sum_(y))
        assert np.array_equal(x.grad, np.ones(x.shape))

    def test_mul_gradient_matches_finite_difference(self):
        x = const(1.5, (1, 1, 1, 1), requires_grad=True)
        y = const(-2.0, (1, 1, 1, 1), requires_grad=True)
        ad.backward(ad.mul(x, y))
        assert x.grad.item() == -2.0
        numeric = central_difference(lambda: (x.data * y.data).item(), x, 0)
        assert abs(numeric - x.grad.item()) <= 1e-6 * abs(numeric)

    def test_sub_and_scale(self):
        z = ad.scale(ad.sub(const(5.0), const(3.0)), -0.5)
        assert np.all(z.data == -1.0)

    def test_operators(self):
        a, b = const(2.0), const(3.0)
        assert np.all((a + b).data == 5.0) and np.all((a - b).data == -1.0) and np.all((a * b).data == 6.0)

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            ad.add(const(1.0), const(1.0, (1, 1, 3, 3)))

    def test_rank_enforced(self):
        with pytest.raises(ContractError):
            ad.Tensor(np.zeros((3, 3)))


class TestConcat:
    def test_spm_channel_law(self, rng):
        parts = [rand(rng, 1, c, 4, 4) for c in (2, 2, 2, 2, 8)]
        assert ad.concat_channels(parts).shape[1] == 16

    def test_single_part_identity(self, rng):
        x = rand(rng, 1, 3, 4, 4)
        assert np.array_equal(ad.concat_channels([x]).data, x.data)

    def test_channel0_loss_only_touches_first_part(self, rng):
        parts = [rand(rng, 1, 2, 3, 3, requires_grad=True) for _ in range(3)]
        out = ad.concat_channels(parts)
        ad.backward(ad.sum_(ad.slice_channels(out, 0, 1)))
        assert np.all(parts[0].grad[:, 0] == 1) and np.all(parts[0].grad[:, 1] == 0)
        assert all(np.all(p.grad == 0) for p in parts[1:])

    def test_slice_bounds(self, rng):
        with pytest.raises(ContractError):
            ad.slice_channels(rand(rng, 1, 2, 2, 2), 1, 3)


class TestConv:
    def test_delta_1x3_is_identity(self, rng):
        x = rand(rng, 2, 1, 5, 7)
        w = ad.Tensor(np.array([0.0, 1.0, 0.0]).reshape(1, 1, 1, 3))
        y = ad.conv2d(x, w, ad.Tensor(np.zeros((1, 1, 1, 1))), pad=(0, 1))
        assert np.array_equal(y.data, x.data)

    def test_pointwise_constant(self, rng):
        x = ad.Tensor(np.broadcast_to(rng.standard_normal((1, 3, 1, 1)), (1, 3, 6, 6)).copy())
        y = ad.conv2d(x, rand(rng, 4, 3, 1, 1), rand(rng, 1, 4, 1, 1))
        assert np.allclose(y.data, y.data[:, :, :1, :1], rtol=0, atol=1e-14)

    def test_3x3_gradients(self, rng):
        x, w, b = rand(rng, 1, 2, 5, 5, requires_grad=True), rand(rng, 3, 2, 3, 3, requires_grad=True), \
            rand(rng, 1, 3, 1, 1, requires_grad=True)
        rep = gradcheck(lambda: ad.conv2d(x, w, b, pad=1), [x, w, b], name="conv")
        assert rep.passed, rep.row()

    def test_channel_mismatch(self, rng):
        with pytest.raises(ContractError):
            ad.conv2d(rand(rng, 1, 2, 4, 4), rand(rng, 1, 3, 3, 3))

    def test_non_integral_output(self, rng):
        with pytest.raises(ContractError):
            ad.conv2d(rand(rng, 1, 1, 4, 4), rand(rng, 1, 1, 3, 3), stride=2, pad=1)


class TestPooling:
    def test_constant_preserved(self):
        assert np.array_equal(ad.adaptive_avg_pool2d(const(1.0, (1, 1, 4, 4)), 2, 2).data, np.ones((1, 1, 2, 2)))

    def test_overlapping_windows(self):
        x = ad.Tensor(np.arange(1.0, 6.0).reshape(1, 1, 1, 5))
        assert ad.adaptive_avg_pool2d(x, 1, 2).data.ravel().tolist() == [2.0, 4.0]

    def test_global_mean_exact(self, rng):
        x = rand(rng, 2, 3, 7, 5)
        assert np.array_equal(ad.adaptive_avg_pool2d(x, 1, 1).data[..., 0, 0], x.data.mean(axis=(2, 3)))


def bilinear_oracle(img, th, tw):
    """Half-pixel-centre bilinear sampling, one output pixel at a time."""
    h, w = img.shape
    out = np.empty((th, tw))
    for i in range(th):
        for j in range(tw):
            sy = 0.0 if h == 1 else min(max((i + 0.5) * h / th - 0.5, 0.0), h - 1.0)
            sx = 0.0 if w == 1 else min(max((j + 0.5) * w / tw - 0.5, 0.0), w - 1.0)
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = sy - y0, sx - x0
            out[i, j] = ((1 - fy) * (1 - fx) * img[y0, x0] + (1 - fy) * fx * img[y0, x1]
                         + fy * (1 - fx) * img[y1, x0] + fy * fx * img[y1, x1])
    return out


class TestUpsample:
    def test_replicates_single_pixel(self):
        y = ad.upsample(const(3.7, (1, 1, 1, 1)), 5, 3)
        assert y.shape == (1, 1, 5, 3) and np.all(y.data == 3.7)

    def test_constant_stays_constant(self):
        assert np.allclose(ad.upsample(const(-0.4, (1, 2, 3, 2)), 11, 7).data, -0.4, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("src,dst", [((2, 2), (4, 4)), ((3, 5), (7, 12)), ((1, 4), (3, 9))])
    def test_bilinear_oracle_and_gradient(self, rng, src, dst):
        x = rand(rng, 1, 1, *src, requires_grad=True)
        y = ad.upsample(x, *dst)
        assert np.abs(y.data[0, 0] - bilinear_oracle(x.data[0, 0], *dst)).max() <= 1e-12
        assert gradcheck(lambda: ad.upsample(x, *dst), [x]).passed

    def test_shrink_rejected(self, rng):
        with pytest.raises(ContractError):
            ad.upsample(rand(rng, 1, 1, 4, 4), 2, 4)

    def test_resize_handles_shrink(self, rng):
        x = rand(rng, 1, 1, 8, 2)
        assert ad.resize(x, 4, 6).shape == (1, 1, 4, 6)


class TestActivations:
    def test_softmax_of_equal_channels(self):
        y = ad.softmax_channels(const(0.3, (1, 2, 3, 3)))
        assert np.allclose(y.data, 0.5, rtol=0, atol=1e-15)

    def test_instance_norm_standardises(self, rng):
        x = ad.Tensor(rng.standard_normal((2, 3, 6, 5)) * 4 + 2)
        y = ad.instance_norm(x).data
        assert np.abs(y.mean(axis=(2, 3))).max() < 1e-6
        # eps shifts the variance by about eps / var(x)
        assert np.abs(y.var(axis=(2, 3)) - 1).max() < 1e-6

    def test_tanh_slope_at_zero(self):
        x = const(0.0, (1, 1, 1, 1), requires_grad=True)
        ad.backward(ad.tanh(x))
        assert x.grad.item() == 1.0
        assert abs(central_difference(lambda: np.tanh(x.data).item(), x, 0) - 1.0) < 1e-9

    def test_leaky_relu_slope(self):
        y = ad.leaky_relu(ad.Tensor(np.array([-2.0, 3.0]).reshape(1, 1, 1, 2)))
        assert y.data.ravel().tolist() == [-0.4, 3.0]


class TestReductions:
    def test_mean(self):
        assert ad.mean(ad.Tensor(np.arange(1.0, 5.0).reshape(1, 1, 2, 2))).item() == 2.5

    def test_l1_self_is_zero(self, rng):
        x = rand(rng, 1, 2, 3, 3)
        assert ad.l1_distance(x, x).item() == 0.0

    def test_mean_gradient(self, rng):
        x = rand(rng, 1, 2, 3, 4, requires_grad=True)
        ad.backward(ad.mean(x))
        assert np.allclose(x.grad, 1 / 24, rtol=0, atol=1e-18)
        assert gradcheck(lambda: ad.mean(x), [x]).passed


class TestBackward:
    def test_unused_input_has_zero_effect(self, rng):
        x = rand(rng, 1, 1, 2, 2, requires_grad=True)
        y = rand(rng, 1, 1, 2, 2, requires_grad=True)
        ad.backward(ad.sum_(x))
        assert y.grad is None or np.all(y.grad == 0)

    def test_fan_out_accumulates(self, rng):
        x = rand(rng, 1, 1, 2, 2, requires_grad=True)
        ad.backward(ad.sum_(ad.add(ad.mul(x, x), x)))
        assert np.allclose(x.grad, 2 * x.data + 1, rtol=0, atol=1e-15)

    def test_tape_is_topological(self, rng):
        x = rand(rng, 1, 1, 2, 2, requires_grad=True)
        a = ad.tanh(x)
        loss = ad.sum_(ad.add(a, ad.relu(a)))
        tape = ad.backward(loss)
        position = {r.output_id: i for i, r in enumerate(tape.records)}
        for rec in tape.records:
            for inp in rec.inputs:
                if inp.record is not None:
                    assert position[inp.node_id] < position[rec.output_id]

    def test_retain_grad(self, rng):
        x = rand(rng, 1, 1, 2, 2, requires_grad=True)
        mid = ad.scale(x, 3.0).retain_grad()
        ad.backward(ad.sum_(mid))
        assert np.all(mid.grad == 1.0) and np.all(x.grad == 3.0)

    def test_non_scalar_loss(self, rng):
        with pytest.raises(ContractError):
            ad.backward(rand(rng, 1, 1, 2, 2, requires_grad=True))

    def test_no_grad_records_nothing(self, rng):
        x = rand(rng, 1, 1, 2, 2, requires_grad=True)
        with ad.no_grad():
            y = ad.tanh(x)
        assert y.record is None and not y.requires_grad

    def test_spm_parameters_match_finite_difference(self, rng):
        from dpgan.blocks import SquarePooling
        spm = SquarePooling(4, rng)
        x = rand(rng, 1, 4, 6, 6)
        params = spm.parameters()
        ad.backward(ad.mean(spm(x)))
        for p in params:
            for i in range(p.size):
                numeric = central_difference(lambda: ad.mean(spm(x)).item(), p, i)
                assert relative_error(p.grad.ravel()[i:i + 1], np.array([numeric])) <= 1e-4


class TestAdam:
    def test_zero_gradient_leaves_parameter(self):
        p = ad.Parameter(np.full((1, 1, 1, 2), 0.7))
        p.grad = np.zeros(p.shape)
        ad.adam_step([p], lr=0.1)
        assert np.all(p.data == 0.7) and p.t == 1

    def test_first_step_magnitude(self):
        p = ad.Parameter(np.zeros((1, 1, 1, 1)))
        p.grad = np.full(p.shape, 3.0)
        ad.adam_step([p], lr=0.01, beta1=0.0, beta2=0.999, eps=1e-8)
        assert abs(p.data.item() + 0.01 * 3 / (3 + 1e-8)) < 1e-15

    def test_two_steps_match_scalar_oracle(self):
        lr, b1, b2, eps, g = 0.05, 0.0, 0.999, 1e-8, -1.3
        p = ad.Parameter(np.full((1, 1, 1, 1), 0.25))
        theta, m, v = 0.25, 0.0, 0.0
        for t in (1, 2):
            p.grad = np.full(p.shape, g)
            ad.adam_step([p], lr, b1, b2, eps)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        assert abs(p.data.item() - theta) <= 1e-12

    def test_missing_gradient(self):
        with pytest.raises(ContractError):
            ad.adam_step([ad.Parameter(np.zeros((1, 1, 1, 1)))], lr=0.1)


class TestGradcheckHarness:
    def test_identity_is_exact(self, rng):
        x = rand(rng, 1, 2, 3, 3, requires_grad=True)
        assert gradcheck(lambda: ad.scale(x, 1.0), [x]).max_error < 1e-10

    def test_detects_wrong_gradient(self, rng):
        x = rand(rng, 1, 1, 3, 3, requires_grad=True)

        def broken():
            return ad._result("broken", x.data ** 2, (x,), lambda g: (g,))
        assert not gradcheck(broken, [x]).passed
