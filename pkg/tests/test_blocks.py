"""Block semantics, parameter bookkeeping, and block-level gradients."""

import numpy as np
import pytest

from lmfn import Tensor, gradcheck
from lmfn.blocks import (
    ConvLayer, DownBlock, Module, ModuleList, ResBlock, Rfdb, Srb, UpsampleBlock,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def rt(shape, seed, scale=1.0):
    return Tensor((np.random.default_rng(seed).standard_normal(shape) * scale)
                  .astype(np.float32))


def zero_params(module):
    for _, t in module.named_params():
        t.data[...] = 0.0


class TestModuleContainer:
    def test_named_params_are_ordered_and_dotted(self):
        block = ResBlock(rng(), 4)
        names = [n for n, _ in block.named_params()]
        assert names == ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"]

    def test_module_list_registers_by_index(self):
        blocks = ModuleList([Srb(rng(), 4), Srb(rng(1), 4)])
        names = [n for n, _ in blocks.named_params()]
        assert names == ["0.conv.weight", "0.conv.bias", "1.conv.weight", "1.conv.bias"]

    def test_param_count_sums_tensor_sizes(self):
        layer = ConvLayer(rng(), 3, 8, k=3)
        assert layer.param_count() == 8 * 3 * 9 + 8

    def test_zero_grad_clears_all(self):
        block = Srb(rng(), 4)
        for t in block.params():
            t.grad = np.zeros_like(t.data)
        block.zero_grad()
        assert all(t.grad is None for t in block.params())

    def test_two_same_seed_builds_are_identical(self):
        a = Rfdb(rng(7), 8)
        b = Rfdb(rng(7), 8)
        for (na, ta), (nb, tb) in zip(a.named_params(), b.named_params()):
            assert na == nb
            np.testing.assert_array_equal(ta.data, tb.data)


class TestConvLayer:
    def test_default_padding_preserves_spatial_dims(self):
        layer = ConvLayer(rng(), 3, 5, k=3)
        assert layer(rt((2, 3, 7, 7), 1)).shape == (2, 5, 7, 7)

    def test_1x1_conv(self):
        layer = ConvLayer(rng(), 6, 3, k=1)
        assert layer(rt((1, 6, 4, 4), 2)).shape == (1, 3, 4, 4)

    def test_kaiming_scale(self):
        # std of weights ~ gain / sqrt(fan_in); loose band, many samples
        layer = ConvLayer(rng(3), 64, 64, k=3)
        want = np.sqrt(2.0 / (64 * 9))
        assert abs(layer.weight.data.std() / want - 1.0) < 0.05
        assert np.all(layer.bias.data == 0.0)
        for gain in (1.0, 0.1):
            layer = ConvLayer(rng(3), 64, 64, k=3, gain=gain)
            want = gain / np.sqrt(64 * 9)
            assert abs(layer.weight.data.std() / want - 1.0) < 0.05

    def test_residual_blocks_start_near_identity(self):
        # role-dependent gains keep a deep stack's init output at input
        # scale; positive input keeps Srb's trailing rectifier out of play
        x = Tensor(np.random.default_rng(7)
                   .uniform(0.5, 1.5, (1, 16, 12, 12)).astype(np.float32))
        for block in (ResBlock(rng(1), 16), Srb(rng(2), 16), Rfdb(rng(3), 16)):
            y = block(x)
            drift = np.abs(y.data - x.data).max()
            assert drift < 0.5, f"{type(block).__name__} drifts {drift:.2f} at init"

    def test_analytic_count(self):
        assert ConvLayer.analytic_param_count(3, 64, 3) == 1792  # head conv
        layer = ConvLayer(rng(), 3, 64, k=3)
        assert layer.param_count() == 1792


class TestResBlock:
    def test_zero_weights_make_identity(self):
        block = ResBlock(rng(), 6)
        zero_params(block)
        x = rt((1, 6, 5, 5), 4)
        np.testing.assert_array_equal(block(x).data, x.data)

    def test_shape_preserved(self):
        assert ResBlock(rng(), 8)(rt((2, 8, 6, 6), 5)).shape == (2, 8, 6, 6)

    def test_analytic_count_matches_actual(self):
        for c in (4, 16, 64):
            assert ResBlock(rng(), c).param_count() == ResBlock.analytic_param_count(c)
        assert ResBlock.analytic_param_count(64) == 73856


class TestDownBlock:
    def test_halves_spatial_dims(self):
        block = DownBlock(rng(), 4, 8)
        assert block(rt((1, 4, 8, 6), 6)).shape == (1, 8, 4, 3)

    def test_rejects_odd_dims(self):
        block = DownBlock(rng(), 4, 4)
        with pytest.raises(ValueError, match="even"):
            block(rt((1, 4, 7, 8), 7))
        with pytest.raises(ValueError, match="even"):
            block(rt((1, 4, 8, 5), 7))

    def test_leaky_slope_is_0p1(self):
        block = DownBlock(rng(), 2, 2)
        zero_params(block)
        block.conv.bias.data[...] = -3.0
        y = block(rt((1, 2, 4, 4), 8))
        np.testing.assert_allclose(y.data, -0.3, rtol=1e-6)

    def test_analytic_count_matches_actual(self):
        assert DownBlock(rng(), 64, 64).param_count() == 36928
        assert DownBlock.analytic_param_count(64, 64) == 36928
        assert DownBlock(rng(), 3, 16).param_count() == DownBlock.analytic_param_count(3, 16)


class TestUpsampleBlock:
    def test_doubles_spatial_keeps_channels(self):
        block = UpsampleBlock(rng(), 6)
        assert block(rt((2, 6, 3, 5), 9)).shape == (2, 6, 6, 10)

    def test_analytic_count_matches_actual(self):
        for c in (4, 48):
            assert UpsampleBlock(rng(), c).param_count() == UpsampleBlock.analytic_param_count(c)


class TestSrb:
    def test_zero_weights_reduce_to_leaky_relu(self):
        block = Srb(rng(), 3)
        zero_params(block)
        x = Tensor(np.array([-2.0, 4.0, -0.4], dtype=np.float32).reshape(1, 3, 1, 1))
        np.testing.assert_allclose(block(x).data.ravel(), [-0.1, 4.0, -0.02], rtol=1e-6)

    def test_analytic_count_matches_actual(self):
        assert Srb(rng(), 48).param_count() == 20784
        assert Srb.analytic_param_count(48) == 20784


class TestRfdb:
    def test_shape_preserved(self):
        assert Rfdb(rng(), 8)(rt((2, 8, 5, 5), 10)).shape == (2, 8, 5, 5)

    def test_zero_weights_make_identity(self):
        block = Rfdb(rng(), 8)
        zero_params(block)
        x = rt((1, 8, 4, 4), 11)
        np.testing.assert_array_equal(block(x).data, x.data)

    def test_rejects_odd_channels(self):
        with pytest.raises(ValueError, match="odd"):
            Rfdb(rng(), 7)

    def test_analytic_count_matches_actual(self):
        for c in (8, 48):
            assert Rfdb(rng(), c).param_count() == Rfdb.analytic_param_count(c)
        assert Rfdb.analytic_param_count(48) == 71712

    def test_branch_widths(self):
        # distilled branches are half width; the fuse conv sees 2C channels
        block = Rfdb(rng(), 8)
        assert block.distill1.weight.shape == (4, 8, 1, 1)
        assert block.fuse.weight.shape == (8, 16, 1, 1)


class TestBlockGradients:
    def check(self, make, x_shape, name, seed=0, max_coords=12, scale=0.5):
        block = make()
        x = Tensor(np.zeros(x_shape, dtype=np.float32), requires_grad=True)
        wrt = [x] + block.params()
        labels = ["x"] + [n for n, _ in block.named_params()]
        report = gradcheck(lambda: block(x), wrt, seed=seed, name=name,
                           labels=labels, max_coords=max_coords, scale=scale)
        assert report.passed, f"\n{report}"

    def test_resblock(self):
        self.check(lambda: ResBlock(rng(20), 4), (1, 4, 5, 5), "resblock")

    def test_downblock(self):
        self.check(lambda: DownBlock(rng(21), 3, 5), (1, 3, 6, 6), "downblock")

    def test_upsample_block(self):
        self.check(lambda: UpsampleBlock(rng(22), 3), (1, 3, 4, 4), "upsample_block")

    def test_srb(self):
        self.check(lambda: Srb(rng(23), 4), (1, 4, 5, 5), "srb")

    def test_rfdb(self):
        # deep conv chain: keep random draws small so activations stay O(1)
        self.check(lambda: Rfdb(rng(24), 4), (1, 4, 3, 3), "rfdb",
                   max_coords=8, scale=0.25)
