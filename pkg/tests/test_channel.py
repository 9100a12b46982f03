import numpy as np
import pytest

from vqstego import channel as chan
from vqstego.channel import (ChannelSpec, GaussianStage, QuantizeStage,
                             RescaleStage, parse_channel)
from vqstego.errors import MalformedInput


def rand_image(seed=0, scale=0.5, shape=(96, 96, 3)):
    rng = np.random.Generator(np.random.PCG64(seed))
    return scale * rng.uniform(-1, 1, shape)


class TestParse:
    def test_round_trip(self):
        spec = parse_channel("gaussian:0.01,quantize:32,rescale:0.5", 7)
        assert spec.stages == (GaussianStage(0.01), QuantizeStage(32),
                               RescaleStage(0.5))
        assert str(spec) == "gaussian:0.01,quantize:32,rescale:0.5"
        assert parse_channel(str(spec), 7) == spec

    def test_lossless(self):
        assert parse_channel("").stages == ()
        assert parse_channel("lossless").stages == ()
        assert str(ChannelSpec()) == "lossless"

    @pytest.mark.parametrize("text", ["gaussian:-1", "quantize:1",
                                      "rescale:0.3", "bogus:1", "gaussian:x"])
    def test_rejects_bad_stages(self, text):
        with pytest.raises(MalformedInput):
            parse_channel(text)


class TestApply:
    def test_empty_identity(self):
        img = rand_image()
        assert np.array_equal(chan.apply(ChannelSpec(), img), img)

    def test_quantize_two_levels(self):
        spec = ChannelSpec((QuantizeStage(2),))
        img = np.full((2, 2, 3), 0.3)
        assert np.all(chan.apply(spec, img) == 1.0)

    def test_quantize_grid_values(self):
        spec = ChannelSpec((QuantizeStage(3),))
        out = chan.apply(spec, np.array([[[-0.9, -0.1, 0.6]]]))
        assert out.tolist() == [[[-1.0, 0.0, 1.0]]]

    def test_gaussian_sample_std(self):
        # [DERIVED] sample std over ~10^5 pixels within 5% of sigma.
        spec = ChannelSpec((GaussianStage(0.01),), noise_seed=3)
        img = np.zeros((200, 200, 3))
        noise = chan.apply(spec, img)
        assert abs(noise.std() - 0.01) < 0.0005

    def test_gaussian_deterministic_in_seed(self):
        img = rand_image(1)
        a = chan.apply(ChannelSpec((GaussianStage(0.02),), 5), img)
        b = chan.apply(ChannelSpec((GaussianStage(0.02),), 5), img)
        c = chan.apply(ChannelSpec((GaussianStage(0.02),), 6), img)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_rescale_one_identity(self):
        img = rand_image(2)
        out = chan.apply(ChannelSpec((RescaleStage(1.0),)), img)
        assert np.array_equal(out, img)

    def test_rescale_shrinks_detail(self):
        img = rand_image(3, scale=0.9)
        out = chan.apply(ChannelSpec((RescaleStage(0.5),)), img)
        assert out.shape == img.shape
        assert not np.allclose(out, img)

    def test_output_clamped(self):
        spec = ChannelSpec((GaussianStage(1.0),), noise_seed=1)
        out = chan.apply(spec, rand_image(4, scale=1.0))
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_energy_bounds_per_stage(self):
        # Distortion bounds from the stage parameters alone, checked at a
        # comfortable Monte-Carlo margin.
        img = rand_image(5, scale=0.8)
        n = img.size
        g = chan.apply(ChannelSpec((GaussianStage(0.02),), 9), img)
        assert np.linalg.norm(g - img) <= 0.02 * np.sqrt(n) * 1.1
        q = chan.apply(ChannelSpec((QuantizeStage(16),)), img)
        assert np.linalg.norm(q - img) <= np.sqrt(n) / (16 - 1)
        r = chan.apply(ChannelSpec((RescaleStage(0.5),)), img)
        ah, _ = chan._rescale_matrices(img.shape[0], 0.5)
        aw, _ = chan._rescale_matrices(img.shape[1], 0.5)
        bound = (np.linalg.norm(ah, 2) * np.linalg.norm(aw, 2) + 1.0)
        assert np.linalg.norm(r - img) <= bound * np.linalg.norm(img)


class TestSmoothSurrogate:
    def test_gaussian_only_equals_hard(self):
        # interior values, no clipping active: surrogate == hard channel
        spec = ChannelSpec((GaussianStage(0.01),), noise_seed=2)
        img = rand_image(6, scale=0.5)
        assert np.array_equal(chan.apply_smooth(spec, img),
                              chan.apply(spec, img))

    def test_quantize_tape_is_straight_through(self):
        spec = ChannelSpec((QuantizeStage(8),))
        _, tape = chan.apply_smooth_with_tape(spec, rand_image(7))
        kinds = [k for k, _ in tape]
        assert kinds == ["identity", "diag"]  # quantize then soft clip

    def test_soft_clip_identity_inside_margin(self):
        y, dy = chan._soft_clip(np.array([0.0, 0.5, -0.98]))
        assert np.array_equal(y, [0.0, 0.5, -0.98])
        assert np.array_equal(dy, [1.0, 1.0, 1.0])

    def test_soft_clip_bounded_and_c1(self):
        x = np.linspace(-3, 3, 10001)
        y, dy = chan._soft_clip(x)
        assert np.all(np.abs(y) <= 1.0)
        assert np.all(np.abs(y[np.abs(x) < 1.05]) < 1.0)
        fd = np.gradient(y, x)
        # no jump discontinuity in the derivative (a hard clip would show
        # an O(1) mismatch at the boundary; curvature error here is O(h))
        assert np.max(np.abs(fd - dy)) < 0.05

    @pytest.mark.parametrize("spec_text", [
        "gaussian:0.01", "rescale:0.5", "rescale:2",
        "gaussian:0.005,rescale:0.5",
    ])
    def test_backward_matches_finite_differences(self, spec_text):
        # [DERIVED] central differences h=1e-4 through the smooth channel,
        # scalar probe loss L = sum(w * out).
        spec = parse_channel(spec_text, 11)
        img = rand_image(8, scale=0.6, shape=(12, 12, 3))
        rng = np.random.Generator(np.random.PCG64(9))
        w = rng.standard_normal(img.shape)
        out, tape = chan.apply_smooth_with_tape(spec, img)
        grad = chan.backward(tape, w)
        h = 1e-4
        for _ in range(25):
            i, j, c = (int(rng.integers(0, s)) for s in img.shape)
            up, down = img.copy(), img.copy()
            up[i, j, c] += h
            down[i, j, c] -= h
            fd = (np.sum(w * chan.apply_smooth(spec, up))
                  - np.sum(w * chan.apply_smooth(spec, down))) / (2 * h)
            denom = max(abs(fd), abs(grad[i, j, c]), 1e-8)
            assert abs(fd - grad[i, j, c]) / denom < 1e-5

    def test_with_seed(self):
        spec = parse_channel("gaussian:0.1", 1)
        assert spec.with_seed(9).noise_seed == 9
        assert spec.with_seed(9).stages == spec.stages
