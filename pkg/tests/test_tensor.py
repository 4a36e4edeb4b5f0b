"""Tests for src/tensor: kernels and the TNSR format."""

import io

import numpy as np
import pytest

from src.errors import DataError, NonFiniteError, ShapeError
from src.tensor.io import dump_tensor, load_tensor
from src.tensor.ops import as_tensor, box_filter, conv2d, matmul, reduce


def _direct_conv(x, k, stride, pad):
    x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    c_out, _, kh, kw = k.shape
    oh = (x.shape[1] - kh) // stride + 1
    ow = (x.shape[2] - kw) // stride + 1
    out = np.zeros((c_out, oh, ow))
    for o in range(c_out):
        for i in range(oh):
            for j in range(ow):
                window = x[:, i * stride:i * stride + kh, j * stride:j * stride + kw]
                out[o, i, j] = (window * k[o]).sum()
    return out


class TestAsTensor:

    def test_default_precision(self):
        assert as_tensor([1, 2, 3]).dtype == np.float64

    def test_f32_switch(self, override_settings):
        override_settings(MASKCONS_PRECISION="f32")
        assert as_tensor([1, 2, 3]).dtype == np.float32

    def test_explicit_dtype(self):
        assert as_tensor([1.0], dtype=np.float32).dtype == np.float32


class TestMatmul:

    def test_matches_numpy(self, rng):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 5))
        np.testing.assert_allclose(matmul(a, b), a @ b)

    def test_identity(self, rng):
        a = rng.standard_normal((4, 4))
        np.testing.assert_array_equal(matmul(a, np.eye(4)), a)

    def test_inner_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_rejects_nan(self):
        a = np.ones((2, 2))
        a[0, 0] = np.nan
        with pytest.raises(NonFiniteError):
            matmul(a, np.ones((2, 2)))


class TestConv2d:

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 0), (2, 1)])
    def test_matches_direct_loop(self, rng, stride, pad):
        x = rng.standard_normal((2, 7, 6))
        k = rng.standard_normal((3, 2, 3, 3))
        np.testing.assert_allclose(conv2d(x, k, stride, pad), _direct_conv(x, k, stride, pad), atol=1e-12)

    def test_output_extent(self, rng):
        out = conv2d(rng.standard_normal((1, 9, 9)), rng.standard_normal((2, 1, 3, 3)), stride=2, pad=1)
        assert out.shape == (2, 5, 5)

    def test_batched(self, rng):
        x = rng.standard_normal((3, 2, 5, 5))
        k = rng.standard_normal((4, 2, 3, 3))
        out = conv2d(x, k, pad=1)
        assert out.shape == (3, 4, 5, 5)
        np.testing.assert_allclose(out[1], conv2d(x[1], k, pad=1))

    def test_single_tap_is_copy(self, rng):
        x = rng.standard_normal((1, 4, 4))
        np.testing.assert_array_equal(conv2d(x, np.ones((1, 1, 1, 1))), x)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            conv2d(np.ones((2, 5, 5)), np.ones((1, 3, 3, 3)))

    def test_kernel_too_large(self):
        with pytest.raises(ShapeError):
            conv2d(np.ones((1, 2, 2)), np.ones((1, 1, 3, 3)))


class TestBoxFilter:

    def test_matches_direct_sums(self, rng):
        img = rng.standard_normal((10, 12))
        out = box_filter(img, 3, 4)
        assert out.shape == (8, 9)
        for i in range(8):
            for j in range(9):
                assert out[i, j] == pytest.approx(img[i:i + 3, j:j + 4].sum(), abs=1e-12)

    def test_one_by_one_is_identity(self, rng):
        img = rng.standard_normal((5, 5))
        np.testing.assert_allclose(box_filter(img, 1, 1), img, atol=1e-12)

    def test_full_window_is_total(self, rng):
        img = rng.standard_normal((6, 7))
        assert box_filter(img, 6, 7)[0, 0] == pytest.approx(img.sum())

    def test_leading_axes(self, rng):
        img = rng.standard_normal((2, 6, 6))
        np.testing.assert_allclose(box_filter(img, 2, 2)[1], box_filter(img[1], 2, 2))

    def test_window_too_large(self):
        with pytest.raises(ShapeError):
            box_filter(np.ones((4, 4)), 5, 1)


class TestReduce:

    def test_modes(self):
        t = np.array([[1.0, 5.0, 2.0], [4.0, 0.0, 6.0]])
        np.testing.assert_array_equal(reduce(t, 1, "sum"), [8.0, 10.0])
        np.testing.assert_array_equal(reduce(t, 0, "max"), [4.0, 5.0, 6.0])
        np.testing.assert_array_equal(reduce(t, 1, "argmax"), [1, 2])
        assert reduce(t, None, "mean") == pytest.approx(3.0)

    def test_argmax_ties_lowest_index(self):
        assert reduce(np.array([2.0, 7.0, 7.0]), 0, "argmax") == 1

    def test_axis_out_of_range(self):
        with pytest.raises(ShapeError):
            reduce(np.ones((2, 2)), 2, "sum")

    def test_empty_axis(self):
        with pytest.raises(ShapeError):
            reduce(np.ones((2, 0)), 1, "max")


class TestTnsr:

    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_round_trip(self, rng, dtype):
        t = rng.standard_normal((2, 3, 4)).astype(dtype)
        buf = io.BytesIO()
        dump_tensor(t, buf)
        buf.seek(0)
        back = load_tensor(buf)
        assert back.dtype == dtype
        np.testing.assert_array_equal(back, t)

    def test_header_format(self):
        buf = io.BytesIO()
        dump_tensor(np.zeros((2, 5)), buf)
        assert buf.getvalue().startswith(b"TNSR v1 2 2 5 f64\n")
        assert len(buf.getvalue()) == len(b"TNSR v1 2 2 5 f64\n") + 10 * 8

    def test_scalar(self):
        buf = io.BytesIO()
        dump_tensor(np.array(3.5), buf)
        buf.seek(0)
        assert load_tensor(buf) == 3.5

    def test_sequential_tensors(self, rng):
        a, b = rng.standard_normal(3), rng.standard_normal((2, 2))
        buf = io.BytesIO()
        dump_tensor(a, buf)
        dump_tensor(b, buf)
        buf.seek(0)
        np.testing.assert_array_equal(load_tensor(buf), a)
        np.testing.assert_array_equal(load_tensor(buf), b)

    def test_bad_magic(self):
        with pytest.raises(DataError):
            load_tensor(io.BytesIO(b"NOPE v1 1 3 f64\n"))

    def test_truncated(self):
        with pytest.raises(DataError):
            load_tensor(io.BytesIO(b"TNSR v1 1 3 f64\n" + b"\x00" * 8))

    @pytest.mark.parametrize("header", [b"TNSR v1 2 3 x f64\n", b"TNSR v1 1 -3 f64\n", b"TNSR v1 1 2.5 f64\n"])
    def test_bad_extent(self, header):
        with pytest.raises(DataError):
            load_tensor(io.BytesIO(header + b"\x00" * 48))
