"""Composite block tests: shapes, closed-form parameter counts, attention
algebra, composition oracles, and gradient checks."""

import numpy as np
import pytest

from octavenet import autograd as ag
from octavenet import tensor as T
from octavenet.blocks import (AttentionBlock, Bottleneck, C2f, Concat,
                              DetectHead, DSDown, DWBottleneck, FSB, FSSA,
                              MultiHeadSelfAttention, SPPF, Upsample)
from octavenet.costmodel import CostAccumulator, CountTensor
from octavenet.tensor import ShapeError


def run(module, shape, seed=0):
    module.materialize(np.random.default_rng(seed), np.float64)
    x = np.random.default_rng(seed + 1).standard_normal(shape)
    return module(ag.leaf(x)).value


def count(module, shape):
    acc = CostAccumulator()
    module(CountTensor(shape, acc))
    return module.param_count(), acc.flops


class TestShapes:
    @pytest.mark.parametrize("module,in_shape,out_shape", [
        (Bottleneck(8, 8), (1, 8, 6, 6), (1, 8, 6, 6)),
        (DWBottleneck(8), (1, 8, 6, 6), (1, 8, 6, 6)),
        (C2f(8, 12, n=2), (1, 8, 6, 6), (1, 12, 6, 6)),
        (FSB(8, 12, n=2, alpha=0.5), (1, 8, 8, 8), (1, 12, 8, 8)),
        (FSSA(16, alpha=0.5), (1, 16, 8, 8), (1, 16, 8, 8)),
        (DSDown(8, 16), (1, 8, 8, 8), (1, 16, 4, 4)),
        (SPPF(8, 16), (1, 8, 8, 8), (1, 16, 8, 8)),
    ])
    def test_forward_shape(self, module, in_shape, out_shape):
        assert run(module, in_shape).shape == out_shape

    def test_count_shape_agrees_with_execution(self):
        # the analyzer must walk the same code path as execution
        for module, shape in [(C2f(8, 8, 2), (1, 8, 8, 8)),
                              (FSB(8, 8, 2), (1, 8, 8, 8)),
                              (FSSA(16), (1, 16, 8, 8))]:
            acc = CostAccumulator()
            counted = module(CountTensor(shape, acc)).shape
            assert counted == run(module, shape).shape

    def test_dw_bottleneck_shortcut_needs_same_channels(self):
        with pytest.raises(ShapeError):
            DWBottleneck(8, 16, shortcut=True)

    def test_ds_down_odd_input_error(self):
        m = DSDown(4, 8).materialize(np.random.default_rng(0))
        with pytest.raises(ShapeError):
            m(ag.leaf(np.zeros((1, 4, 7, 8))))

    def test_detect_head_output_channels(self):
        head = DetectHead((8, 16, 32), nc=80, reg_max=16)
        head.materialize(np.random.default_rng(0))
        rng = np.random.default_rng(1)
        outs = head(ag.leaf(rng.standard_normal((1, 8, 8, 8))),
                    ag.leaf(rng.standard_normal((1, 16, 4, 4))),
                    ag.leaf(rng.standard_normal((1, 32, 2, 2))))
        assert [o.value.shape[1] for o in outs] == [144, 144, 144]  # 4*16+80


class TestClosedFormParams:
    def test_dw_bottleneck_param_count(self):
        # c=64: depthwise 64*9 + BN 128, pointwise 64*64 + BN 128
        assert DWBottleneck(64).param_count() == 64 * 9 + 128 + 64 * 64 + 128

    def test_dw_vs_standard_conv_weights(self):
        # the separable pair replaces one 9*c^2 conv; weights-only ratio
        dw_weights = 64 * 9 + 64 * 64
        assert dw_weights < 36864 / 4  # 36864 = 9 * 64 * 64

    def test_ds_down_cheaper_than_strided_conv(self):
        ds = DSDown(64, 128).param_count()
        plain = 9 * 64 * 128 + 2 * 128  # ConvUnit(64,128,3,s=2)
        assert ds / plain < 0.15

    def test_fsb_standard_bottleneck_matches_c2f_params(self):
        # with alpha = 0.5 and standard bottlenecks, FSB's split/bottlenecks/
        # merge carry exactly C2f's cv1/bottlenecks/cv2 parameter counts:
        # split = c1*(2*ch) conv + two BNs, merge = (2+n)*ch*c2 conv + BN
        for c1, c2, n in [(32, 32, 2), (48, 64, 1), (64, 32, 3)]:
            fsb = FSB(c1, c2, n=n, alpha=0.5, bottleneck="standard")
            c2f = C2f(c1, c2, n=n)
            assert fsb.param_count() == c2f.param_count()

    def test_fsb_low_branch_flops_discount(self):
        # same parameters, but the FSB bottlenecks run at quarter pixels
        fsb = FSB(32, 32, n=2, alpha=0.5, bottleneck="standard")
        c2f = C2f(32, 32, n=2)
        _, f_fsb = count(fsb, (1, 32, 16, 16))
        _, f_c2f = count(c2f, (1, 32, 16, 16))
        assert f_fsb < f_c2f


class TestAttention:
    def test_rows_sum_to_one(self):
        m = MultiHeadSelfAttention(16, heads=2)
        m.materialize(np.random.default_rng(0), np.float64)
        x = np.random.default_rng(1).standard_normal((1, 16, 4, 4))
        m(ag.leaf(x))
        np.testing.assert_allclose(m.last_attention.sum(axis=-1), 1.0,
                                   atol=1e-12)
        assert m.last_attention.shape == (2, 16, 16)  # n*heads, tokens, tokens

    def test_token_permutation_equivariance(self):
        # no positional terms: permuting tokens permutes the output
        m = MultiHeadSelfAttention(8, heads=2)
        m.materialize(np.random.default_rng(2), np.float64)
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 8, 4, 4))
        perm = rng.permutation(16)
        xp = x.reshape(1, 8, 16)[:, :, perm].reshape(1, 8, 4, 4)
        y = m(ag.leaf(x)).value.reshape(1, 8, 16)
        yp = m(ag.leaf(xp)).value.reshape(1, 8, 16)
        np.testing.assert_allclose(y[:, :, perm], yp, atol=1e-10)

    def test_heads_must_divide(self):
        with pytest.raises(ShapeError):
            MultiHeadSelfAttention(10, heads=3)

    def test_fssa_default_heads_rule(self):
        # target ~64-dim heads, reduced until the head count divides c_low
        assert FSSA(256, alpha=0.5).heads == 2      # c_low 128 -> 2 heads
        assert FSSA(64, alpha=0.5).heads == 1       # c_low 32 -> 1 head
        assert FSSA(960, alpha=0.5).heads == 6      # c_low 480: 7 -> 6


class TestComposition:
    def test_sppf_composition_oracle(self):
        m = SPPF(8, 16)
        m.materialize(np.random.default_rng(4), np.float64)
        m.eval()
        rng = np.random.default_rng(5)
        x = rng.standard_normal((1, 8, 8, 8))
        got = m(ag.leaf(x)).value
        with ag.no_grad():
            y0 = m.cv1(ag.leaf(x)).value
        y1 = T.max_pool2d(y0, 5, 1, 2)
        y2 = T.max_pool2d(y1, 5, 1, 2)
        y3 = T.max_pool2d(y2, 5, 1, 2)
        with ag.no_grad():
            want = m.cv2(ag.leaf(T.concat_channels([y0, y1, y2, y3]))).value
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_c2f_dense_aggregation_width(self):
        # cv2 must see (2+n) * hidden channels
        m = C2f(8, 8, n=3)
        assert m.cv2.conv.c1 == (2 + 3) * 4

    def test_fsb_merge_sees_all_retained_lows(self):
        m = FSB(8, 8, n=3, alpha=0.5)
        assert m.merge.c_in_l == (1 + 3) * m.c_low

    def test_fsb_degenerate_alpha_zero(self):
        # no low branch: FSB reduces to two 1x1 conv units
        y = run(FSB(8, 8, n=2, alpha=0.0), (1, 8, 6, 6))
        assert y.shape == (1, 8, 6, 6)

    def test_upsample_concat_modules(self):
        x = np.random.default_rng(6).standard_normal((1, 2, 3, 3))
        up = Upsample()(ag.leaf(x)).value
        assert up.shape == (1, 2, 6, 6)
        cat = Concat()(ag.leaf(x), ag.leaf(x)).value
        assert cat.shape == (1, 4, 3, 3)


class TestFssaOverhead:
    def test_fssa_flops_small_versus_stage(self):
        # FSSA on the stride-32 map costs a small fraction of a stage block
        fssa = FSSA(256, alpha=0.5)
        c2f = C2f(256, 256, n=1)
        _, f_a = count(fssa, (1, 256, 20, 20))
        _, f_b = count(c2f, (1, 256, 20, 20))
        assert f_a < f_b


class TestGradients:
    @pytest.mark.parametrize("name,module,shape", [
        ("dw_bottleneck", DWBottleneck(4), (1, 4, 6, 6)),
        ("bottleneck", Bottleneck(4, 4), (1, 4, 6, 6)),
        ("c2f", C2f(4, 4, n=1, shortcut=True), (1, 4, 6, 6)),
        ("fsb", FSB(4, 4, n=1, alpha=0.5), (1, 4, 8, 8)),
        ("fssa", FSSA(8, alpha=0.5), (1, 8, 8, 8)),
        ("ds_down", DSDown(4, 8), (1, 4, 8, 8)),
        ("attention_block", AttentionBlock(4, heads=1), (1, 4, 4, 4)),
    ])
    def test_finite_difference(self, name, module, shape):
        module.materialize(np.random.default_rng(0), np.float64)
        x = np.random.default_rng(1).standard_normal(shape)
        rep = ag.finite_diff_check(lambda n: ag.sum_all(module(n)), x,
                                   h=1e-5, tol=1e-4)
        assert rep.passed, f"{name}: {rep.max_rel_err:.2e}"

    def test_sppf_finite_difference(self):
        # max-pool kinks: accept the first clean draw out of three
        module = SPPF(4, 4)
        module.materialize(np.random.default_rng(2), np.float64)
        rng = np.random.default_rng(3)
        for _ in range(3):
            rep = ag.finite_diff_check(
                lambda n: ag.sum_all(module(n)),
                rng.standard_normal((2, 4, 8, 8)), h=1e-5, tol=1e-4)
            if rep.passed:
                break
        assert rep.passed, f"sppf: {rep.max_rel_err:.2e}"
