import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from effsr import ops, resample
from effsr.ops import Conv2dParams, ShapeError
from oracles import antialias_weights_1d, naive_conv2d


def random_conv(rng, c_in, c_out, kh, kw, groups=1, bias=True, **geom):
    w = rng.standard_normal((c_out, c_in // groups, kh, kw))
    b = rng.standard_normal(c_out) if bias else None
    return Conv2dParams(w, b, groups=groups, **geom)


# ------------------------------------------------------------------ conv2d

def test_conv_same_padding_shape(rng):
    p = random_conv(rng, 3, 64, 3, 3, padding=1)
    assert ops.conv2d(rng.standard_normal((1, 3, 64, 64)), p).shape == (1, 64, 64, 64)


def test_conv_identity_kernel(rng):
    x = rng.standard_normal((2, 1, 7, 5))
    p = Conv2dParams(np.ones((1, 1, 1, 1)), np.zeros(1))
    np.testing.assert_array_equal(ops.conv2d(x, p), x)


def test_conv_matches_loop_oracle_small(rng):
    x = rng.standard_normal((1, 2, 5, 5))
    p = random_conv(rng, 2, 2, 3, 3)
    got = ops.conv2d(x, p)
    want = naive_conv2d(x, p.weight, p.bias)
    assert np.max(np.abs(got - want)) <= 1e-12


def _random_config(rng):
    groups = int(rng.choice([1, 2, 4]))
    c_in = groups * int(rng.integers(1, 3))
    c_out = groups * int(rng.integers(1, 3))
    kh, kw = [(1, 3), (3, 1), (3, 3), (1, 1), (2, 3)][rng.integers(5)]
    dilation = int(rng.choice([1, 2]))
    stride = int(rng.choice([1, 2]))
    padding = tuple(int(v) for v in rng.integers(0, 3, size=4))
    h, w = (int(v) for v in rng.integers(5, 9, size=2))
    return c_in, c_out, kh, kw, groups, dilation, stride, padding, h, w


def test_conv_matches_loop_oracle_200_configs():
    rng = np.random.default_rng(7)
    seen = set()
    checked = 0
    while checked < 200:
        c_in, c_out, kh, kw, groups, dilation, stride, padding, h, w = _random_config(rng)
        eff_h = h + padding[0] + padding[1] - dilation * (kh - 1)
        eff_w = w + padding[2] + padding[3] - dilation * (kw - 1)
        if eff_h < 1 or eff_w < 1:
            continue
        p = random_conv(rng, c_in, c_out, kh, kw, groups, bias=bool(rng.integers(2)),
                        stride=stride, padding=padding, dilation=dilation)
        x = rng.standard_normal((int(rng.integers(1, 3)), c_in, h, w))
        got = ops.conv2d(x, p)
        want = naive_conv2d(x, p.weight, p.bias, stride, p.padding, dilation, groups)
        assert got.shape == want.shape
        assert np.max(np.abs(got - want)) <= 1e-12
        seen.add((groups, dilation, (kh, kw)))
        checked += 1
    assert {g for g, _, _ in seen} == {1, 2, 4}
    assert {d for _, d, _ in seen} == {1, 2}
    assert {(1, 3), (3, 1)} <= {k for _, _, k in seen}


def test_conv_linear_in_input(rng):
    p = random_conv(rng, 4, 6, 3, 3, bias=False, padding=1)
    x, y = rng.standard_normal((2, 1, 4, 9, 9))
    a, b = 0.7, -1.3
    lhs = ops.conv2d(a * x + b * y, p)
    rhs = a * ops.conv2d(x, p) + b * ops.conv2d(y, p)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_conv_deterministic(rng):
    p = random_conv(rng, 8, 8, 3, 3, padding=1)
    x = rng.standard_normal((1, 8, 16, 16))
    assert ops.conv2d(x, p).tobytes() == ops.conv2d(x, p).tobytes()


def test_conv_channel_mismatch_names_dimension(rng):
    p = random_conv(rng, 3, 4, 3, 3)
    with pytest.raises(ShapeError, match="channels"):
        ops.conv2d(rng.standard_normal((1, 5, 8, 8)), p)


def test_conv_too_small_input(rng):
    p = random_conv(rng, 1, 1, 3, 3)
    with pytest.raises(ShapeError, match="height"):
        ops.conv2d(rng.standard_normal((1, 1, 2, 8)), p)


def test_conv_params_validation(rng):
    with pytest.raises(ShapeError):
        Conv2dParams(rng.standard_normal((3, 1, 3, 3)), groups=2)
    with pytest.raises(ShapeError):
        Conv2dParams(rng.standard_normal((4, 1, 3, 3)), np.zeros(3))
    with pytest.raises(ValueError):
        Conv2dParams(rng.standard_normal((4, 1, 3, 3)), stride=0)


def test_conv_float32_path_close_to_double(rng):
    p = random_conv(rng, 4, 4, 3, 3, padding=1)
    x = rng.standard_normal((1, 4, 12, 12))
    lo = ops.conv2d(x.astype(np.float32), p)
    assert lo.dtype == np.float32
    np.testing.assert_allclose(lo, ops.conv2d(x, p), rtol=1e-5, atol=1e-5)


# ------------------------------------------------------------- activations

def test_leaky_relu_definition():
    np.testing.assert_array_equal(ops.leaky_relu(np.array([-1.0, 2.0]), 0.1), [-0.1, 2.0])


def test_leaky_relu_unit_slope_identity(rng):
    x = rng.standard_normal((1, 3, 4, 4))
    np.testing.assert_array_equal(ops.leaky_relu(x, 1.0), x)


def test_leaky_relu_matches_scalar_loop(rng):
    x = rng.standard_normal((1, 2, 5, 5))
    got = ops.leaky_relu(x, 0.2)
    want = np.array([max(v, 0.2 * v) for v in x.ravel()]).reshape(x.shape)
    np.testing.assert_array_equal(got, want)


def test_prelu_per_channel(rng):
    x = -np.abs(rng.standard_normal((1, 3, 2, 2)))
    slopes = np.array([0.1, 0.2, 0.3])
    np.testing.assert_allclose(ops.prelu(x, slopes), x * slopes[None, :, None, None])


def test_sigmoid_range_and_extremes():
    x = np.array([-1000.0, -5.0, 0.0, 5.0, 1000.0])
    y = ops.sigmoid(x)
    assert np.all(np.isfinite(y))
    assert y[2] == 0.5
    np.testing.assert_allclose(y[1] + y[3], 1.0)


# ------------------------------------------------------------ pixel shuffle

def test_pixel_shuffle_stated_mapping():
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    x = np.array([a, b, c, d]).reshape(1, 4, 1, 1)
    np.testing.assert_array_equal(ops.pixel_shuffle(x, 2), [[[[a, b], [c, d]]]])


def test_pixel_shuffle_element_mapping(rng):
    r = 3
    x = rng.standard_normal((2, 2 * r * r, 4, 5))
    y = ops.pixel_shuffle(x, r)
    for c in range(2):
        for yy in range(4):
            for xx in range(5):
                for dy in range(r):
                    for dx in range(r):
                        assert y[1, c, yy * r + dy, xx * r + dx] == x[1, c * r * r + dy * r + dx, yy, xx]


def test_pixel_shuffle_r1_identity(rng):
    x = rng.standard_normal((1, 5, 3, 3))
    np.testing.assert_array_equal(ops.pixel_shuffle(x, 1), x)
    np.testing.assert_array_equal(ops.pixel_unshuffle(x, 1), x)


def test_pixel_shuffle_round_trip(rng):
    x = rng.standard_normal((1, 48, 7, 5))
    y = ops.pixel_shuffle(x, 4)
    assert y.shape == (1, 3, 28, 20)
    np.testing.assert_array_equal(ops.pixel_unshuffle(y, 4), x)
    np.testing.assert_array_equal(np.sort(y.ravel()), np.sort(x.ravel()))


def test_pixel_shuffle_errors(rng):
    with pytest.raises(ShapeError):
        ops.pixel_shuffle(rng.standard_normal((1, 6, 2, 2)), 2)
    with pytest.raises(ShapeError):
        ops.pixel_unshuffle(rng.standard_normal((1, 1, 5, 4)), 2)


@settings(max_examples=50, deadline=None)
@given(r=st.integers(1, 4), c=st.integers(1, 3), h=st.integers(1, 5), w=st.integers(1, 5))
def test_pixel_shuffle_inverse_property(r, c, h, w):
    x = np.arange(c * r * r * h * w, dtype=np.float64).reshape(1, c * r * r, h, w)
    np.testing.assert_array_equal(ops.pixel_unshuffle(ops.pixel_shuffle(x, r), r), x)
    y = np.arange(c * h * r * w * r, dtype=np.float64).reshape(1, c, h * r, w * r)
    np.testing.assert_array_equal(ops.pixel_shuffle(ops.pixel_unshuffle(y, r), r), y)


# -------------------------------------------------------------- resampling

def test_nearest_block_replication():
    x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
    want = np.array([[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]], dtype=float)
    np.testing.assert_array_equal(resample.interpolate(x, 2, "nearest")[0, 0], want)


@pytest.mark.parametrize("mode", ["nearest", "bilinear", "bicubic"])
def test_interpolate_constant_preserved(mode):
    x = np.full((1, 2, 5, 7), 3.25)
    np.testing.assert_allclose(resample.interpolate(x, 3, mode), 3.25, rtol=0, atol=1e-12)


@pytest.mark.parametrize("mode", ["nearest", "bilinear", "bicubic"])
def test_interpolate_scale_one_identity(mode, rng):
    x = rng.standard_normal((1, 2, 5, 6))
    np.testing.assert_array_equal(resample.interpolate(x, 1, mode), x)


def test_bilinear_ramp_closed_form():
    n, s = 8, 2
    a, b = 0.75, -2.0
    ramp = a * np.arange(n) + b
    x = np.tile(ramp, (n, 1))[None, None]
    y = resample.interpolate(x, s, "bilinear")[0, 0]
    # sample positions on the source grid, clamped at the borders
    src = np.clip((np.arange(n * s) + 0.5) / s - 0.5, 0, n - 1)
    want = a * src + b
    assert np.max(np.abs(y - want[None, :])) <= 1e-12
    inner = y[:, 1:-1]
    assert np.max(np.abs(np.diff(inner, 2, axis=1))) <= 1e-12


def test_bicubic_kernel_keys_values():
    np.testing.assert_allclose(resample.cubic(np.array([0.0, 1.0, 2.0, 0.5])), [1.0, 0.0, 0.0, 0.5625])


def test_downsample_constant():
    x = np.full((1, 3, 16, 12), 128.0)
    np.testing.assert_allclose(resample.bicubic_downsample(x, 4), 128.0, rtol=0, atol=1e-10)


def test_downsample_impulse_matches_direct_taps():
    n, f = 24, 4
    x = np.zeros((1, 1, n, n))
    y0, x0 = 11, 14
    x[0, 0, y0, x0] = 1.0
    got = resample.bicubic_downsample(x, f)[0, 0]
    rows = antialias_weights_1d(n, f)
    want = np.array([[rows[i].get(y0, 0.0) * rows[j].get(x0, 0.0) for j in range(n // f)] for i in range(n // f)])
    assert np.max(np.abs(got - want)) <= 1e-14
    assert got.max() > 0


def test_downsample_ramp_stays_ramp():
    n, f = 32, 4
    a, b = 1.5, 7.0
    x = (a * np.arange(n) + b)[None, :].repeat(n, 0)[None, None]
    y = resample.bicubic_downsample(x, f)[0, 0]
    centres = (np.arange(n // f) + 0.5) * f - 0.5
    # rows whose kernel support lies inside the image
    inner = slice(2, n // f - 2)
    assert np.max(np.abs(y[:, inner] - (a * centres[inner] + b)[None, :])) <= 1e-10


def test_downsample_shape_errors():
    with pytest.raises(ShapeError):
        resample.bicubic_downsample(np.zeros((1, 1, 10, 8)), 4)


def test_resize_to_arbitrary_size(rng):
    x = rng.standard_normal((1, 2, 5, 5))
    assert resample.resize(x, (17, 13), "bilinear").shape == (1, 2, 17, 13)


# -------------------------------------------------------------------- misc

def test_concat_split_round_trip(rng):
    x = rng.standard_normal((1, 7, 3, 3))
    parts = ops.split(x, (2, 5))
    assert [p.shape[1] for p in parts] == [2, 5]
    np.testing.assert_array_equal(ops.concat(parts), x)
    with pytest.raises(ShapeError):
        ops.split(x, (2, 2))


def test_pools():
    x = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
    np.testing.assert_array_equal(ops.max_pool(x, 2)[0, 0], [[5, 7], [13, 15]])
    np.testing.assert_array_equal(ops.avg_pool(x, 2)[0, 0], [[2.5, 4.5], [10.5, 12.5]])
    assert ops.max_pool(np.zeros((1, 1, 127, 127)), 7, 3).shape == (1, 1, 41, 41)


def test_global_pool_contrast(rng):
    x = rng.standard_normal((2, 3, 5, 4))
    want = x.mean(axis=(2, 3)) + x.std(axis=(2, 3))
    np.testing.assert_allclose(ops.global_pool(x, "contrast")[:, :, 0, 0], want)


def test_kernels_keep_finite(rng):
    x = rng.standard_normal((1, 4, 6, 6)) * 1e3
    for y in (ops.sigmoid(x), ops.leaky_relu(x, 0.2), ops.pixel_shuffle(x, 2),
              resample.interpolate(x, 2, "bicubic"), ops.global_pool(x, "contrast")):
        assert np.all(np.isfinite(y))
