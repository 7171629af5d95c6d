import numpy as np
import pytest

from dpgan import autodiff as ad
from dpgan.blocks import (FUSION_STRATEGIES, Fusion, HorizontalStrip, RectanglePooling, SpmConfig, SquarePooling,
                          Stack, VerticalStrip)
from dpgan.errors import ContractError
from dpgan.gradcheck import gradcheck
from dpgan.nn import zero_all_convs

from conftest import rand

GRID = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).reshape(1, 1, 2, 3)


class TestSquarePooling:
    def test_channel_law(self, rng):
        out = SquarePooling(8, rng)(rand(rng, 1, 8, 12, 12))
        assert out.shape == (1, 16, 12, 12)

    @pytest.mark.parametrize("c", [4, 8, 16])
    def test_out_channels(self, rng, c):
        assert SquarePooling(c, rng).out_channels == 2 * c

    def test_input_is_last_block(self, rng):
        spm = SquarePooling(8, rng)
        zero_all_convs(spm)
        x = rand(rng, 2, 8, 6, 6)
        out = spm(x).data
        assert np.all(out[:, :8] == 0) and np.array_equal(out[:, 8:], x.data)

    def test_rejects_odd_level_count(self):
        with pytest.raises(ContractError):
            SpmConfig(8, ((1, 1), (2, 2), (3, 3)))

    def test_rejects_channels_not_divisible_by_four(self):
        with pytest.raises(ContractError):
            SpmConfig(6)

    def test_rejects_non_square_level(self):
        with pytest.raises(ContractError):
            SpmConfig(8, ((1, 2), (2, 2)))

    def test_levels_larger_than_map(self, rng):
        spm = SquarePooling(SpmConfig(4, ((12, 12), (20, 20))), rng)
        assert spm(rand(rng, 1, 4, 5, 7)).shape == (1, 6, 5, 7)

    def test_gradcheck(self, rng):
        spm = SquarePooling(4, rng)
        x = rand(rng, 1, 4, 6, 6, requires_grad=True)
        assert gradcheck(lambda: spm(x), [x] + spm.parameters()).passed


class TestStrips:
    def test_horizontal_pool_is_column_mean(self, rng):
        assert HorizontalStrip(1, rng).pool(ad.Tensor(GRID)).data.ravel().tolist() == [2.5, 3.5, 4.5]

    def test_vertical_pool_is_row_mean(self, rng):
        assert VerticalStrip(1, rng).pool(ad.Tensor(GRID)).data.ravel().tolist() == [2.0, 5.0]

    def test_vertical_delta_kernel_replicates_row_means(self, rng):
        strip = VerticalStrip(1, rng)
        strip.conv.weight.data = np.array([0.0, 1.0, 0.0]).reshape(1, 1, 3, 1)
        strip.conv.bias.data[:] = 0.0
        out = strip(ad.Tensor(GRID)).data[0, 0]
        assert np.array_equal(out, np.array([[2.0] * 3, [5.0] * 3]))

    def test_horizontal_shape(self, rng):
        assert HorizontalStrip(3, rng)(rand(rng, 2, 3, 5, 7)).shape == (2, 3, 5, 7)


class TestRectanglePooling:
    @pytest.mark.parametrize("c", [4, 8, 16])
    def test_channel_laws(self, rng, c):
        x = rand(rng, 1, c, 8, 8)
        assert RectanglePooling(c, "I", rng)(x).shape[1] == c
        assert RectanglePooling(c, "II", rng)(x).shape[1] == 2 * c

    def test_zero_weights_residual_identity(self, rng):
        rpm = RectanglePooling(8, "I", rng)
        zero_all_convs(rpm)
        x = rand(rng, 2, 8, 6, 6)
        assert np.array_equal(rpm(x).data, x.data)

    def test_zero_weights_concat_is_bias_then_input(self, rng):
        rpm = RectanglePooling(8, "II", rng)
        zero_all_convs(rpm)
        rpm.fuse.bias.data = rng.standard_normal(rpm.fuse.bias.shape)
        x = rand(rng, 1, 8, 6, 6)
        out = rpm(x).data
        assert np.array_equal(out[:, :8], np.broadcast_to(rpm.fuse.bias.data, (1, 8, 6, 6)))
        assert np.array_equal(out[:, 8:], x.data)

    def test_bad_variant(self, rng):
        with pytest.raises(ContractError):
            RectanglePooling(8, "III", rng)

    def test_wrong_input_width(self, rng):
        with pytest.raises(ContractError):
            RectanglePooling(8, "I", rng)(rand(rng, 1, 4, 6, 6))

    @pytest.mark.parametrize("variant", ["I", "II"])
    def test_gradcheck(self, rng, variant):
        rpm = RectanglePooling(8, variant, rng)
        x = rand(rng, 1, 8, 6, 6, requires_grad=True)
        assert gradcheck(lambda: rpm(x), [x] + rpm.parameters(), max_probes=24).passed


class TestFusion:
    @pytest.mark.parametrize("strategy", FUSION_STRATEGIES)
    def test_output_width(self, rng, strategy):
        fusion = Fusion(strategy, 8, rng)
        out = fusion(rand(rng, 1, 8, 8, 8))
        assert out.shape == (1, fusion.out_channels, 8, 8)

    def test_mean_of_branch_images(self, rng):
        fusion = Fusion("F-II", 4, rng)
        for conv, value in ((fusion.to_image_square, 0.2), (fusion.to_image_rect, 0.6)):
            conv.weight.data[:] = 0.0
            conv.bias.data[:] = value
        assert np.allclose(fusion(rand(rng, 1, 4, 6, 6)).data, 0.4, rtol=0, atol=1e-15)

    def test_attention_masks_partition_unity(self, rng):
        fusion = Fusion("F-I", 8, rng)
        square, rect = fusion.branches(rand(rng, 2, 8, 7, 7))
        a1, a2 = fusion.masks(square, rect)
        assert np.abs(a1.data + a2.data - 1).max() <= 1e-12

    def test_attention_output_in_envelope(self, rng):
        fusion = Fusion("F-I", 8, rng)
        x = rand(rng, 2, 8, 7, 7)
        square, rect = fusion.branches(x)
        square_img, rect_img = fusion.to_image_square(square).data, fusion.to_image_rect(rect).data
        out = fusion(x).data
        lo, hi = np.minimum(square_img, rect_img), np.maximum(square_img, rect_img)
        assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)

    def test_cascade_zero_weights_passes_input_through(self, rng):
        fusion = Fusion("F-VII", 8, rng)
        zero_all_convs(fusion)
        x = rand(rng, 1, 8, 6, 6)
        out = fusion(x).data
        assert out.shape[1] == 4 * 16
        assert np.array_equal(out[:, -8:], x.data) and np.all(out[:, :-8] == 0)

    def test_unknown_strategy(self, rng):
        with pytest.raises(ContractError):
            Fusion("F-VIII", 8, rng)

    def test_masks_only_for_attention(self, rng):
        assert not hasattr(Fusion("F-V", 8, rng), "attention")


def test_stack_widths(rng):
    stack = Stack(8, ("SPM", "RPM-II", "RPM-I"), rng)
    assert stack.out_channels == 32
    assert stack(rand(rng, 1, 8, 6, 6)).shape == (1, 32, 6, 6)


def test_stack_unknown_kind(rng):
    with pytest.raises(ContractError):
        Stack(8, ("ASPP",), rng)
