"""Layer kinds for the small networks: forward, backward and parameter layout.

Each layer owns a contiguous slice of the network's flat parameter vector.
Weights come first (row-major), then biases. Spatial layers work on
B×C×H×W batches, dense layers on B×D batches.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.errors import ShapeError
from src.tensor.ops import conv2d

LAYER_KINDS = (
    "dense",
    "conv3x3",
    "relu",
    "maxpool2",
    "upsample2",
    "concat-skip",
    "softmax-head",
)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    dims: tuple[int, ...] = ()  # dense: (in, out); conv3x3: (c_in, c_out)
    source: int | None = None  # concat-skip: index of the layer whose output is appended

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ShapeError(f"Unknown layer kind: {self.kind}")
        if self.kind in ("dense", "conv3x3") and len(self.dims) != 2:
            raise ShapeError(f"{self.kind} needs (in, out) dims, got {self.dims}")
        if self.kind == "concat-skip" and self.source is None:
            raise ShapeError("concat-skip needs a source layer index")

    def describe(self) -> str:
        parts = [self.kind, *(str(d) for d in self.dims)]
        if self.source is not None:
            parts.append(f"source={self.source}")
        return " ".join(parts)

    @classmethod
    def parse(cls, line: str) -> "LayerSpec":
        kind, *rest = line.split()
        dims, source = [], None
        for token in rest:
            if token.startswith("source="):
                source = int(token.split("=", 1)[1])
            else:
                dims.append(int(token))
        return cls(kind=kind, dims=tuple(dims), source=source)


@dataclass
class LayerOutput:
    y: np.ndarray
    aux: np.ndarray | None = field(default=None)


class Layer(ABC):
    """Base class for layer implementations."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec

    def param_count(self) -> int:
        return 0

    def init_params(self, rng: np.random.Generator, dtype: np.dtype) -> np.ndarray:
        return np.zeros(0, dtype=dtype)

    @abstractmethod
    def output_shape(self, shape: tuple[int, ...], skip_shape: tuple[int, ...] | None = None) -> tuple[int, ...]:
        """Per-sample output shape; raises ShapeError on incompatible input."""
        ...

    @abstractmethod
    def forward(self, x: np.ndarray, params: np.ndarray, skip: np.ndarray | None = None) -> LayerOutput:
        ...

    @abstractmethod
    def backward(
        self, x: np.ndarray, out: LayerOutput, params: np.ndarray, dy: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
        """Return (dx, dparams, dskip)."""
        ...


class Dense(Layer):
    def __init__(self, spec: LayerSpec):
        super().__init__(spec)
        self.n_in, self.n_out = spec.dims

    def param_count(self) -> int:
        return self.n_in * self.n_out + self.n_out

    def init_params(self, rng, dtype):
        # He-style scaled normal, zero bias
        w = rng.standard_normal((self.n_in, self.n_out)) * np.sqrt(2.0 / self.n_in)
        return np.concatenate([w.ravel(), np.zeros(self.n_out)]).astype(dtype)

    def _split(self, params):
        w = params[: self.n_in * self.n_out].reshape(self.n_in, self.n_out)
        return w, params[self.n_in * self.n_out:]

    def output_shape(self, shape, skip_shape=None):
        if shape != (self.n_in,):
            raise ShapeError(f"dense expects ({self.n_in},) input, got {shape}")
        return (self.n_out,)

    def forward(self, x, params, skip=None):
        w, b = self._split(params)
        return LayerOutput(x @ w + b)

    def backward(self, x, out, params, dy):
        w, _ = self._split(params)
        dw = x.T @ dy
        db = dy.sum(axis=0)
        return dy @ w.T, np.concatenate([dw.ravel(), db]), None


class Conv3x3(Layer):
    """3×3 convolution, stride 1, zero padding 1 (spatial size preserved)."""

    def __init__(self, spec: LayerSpec):
        super().__init__(spec)
        self.c_in, self.c_out = spec.dims

    def param_count(self) -> int:
        return self.c_out * self.c_in * 9 + self.c_out

    def init_params(self, rng, dtype):
        w = rng.standard_normal((self.c_out, self.c_in, 3, 3)) * np.sqrt(2.0 / (self.c_in * 9))
        return np.concatenate([w.ravel(), np.zeros(self.c_out)]).astype(dtype)

    def _split(self, params):
        n = self.c_out * self.c_in * 9
        return params[:n].reshape(self.c_out, self.c_in, 3, 3), params[n:]

    def output_shape(self, shape, skip_shape=None):
        if len(shape) != 3 or shape[0] != self.c_in:
            raise ShapeError(f"conv3x3 expects ({self.c_in}, H, W) input, got {shape}")
        return (self.c_out, shape[1], shape[2])

    def forward(self, x, params, skip=None):
        w, b = self._split(params)
        return LayerOutput(conv2d(x, w, stride=1, pad=1) + b[None, :, None, None])

    def backward(self, x, out, params, dy):
        w, _ = self._split(params)
        # Input gradient: correlate dy with the spatially flipped, channel-transposed kernel
        w_t = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        dx = conv2d(dy, w_t, stride=1, pad=1)
        windows = sliding_window_view(np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1))), (3, 3), axis=(2, 3))
        dw = np.tensordot(dy, windows, axes=([0, 2, 3], [0, 2, 3]))
        db = dy.sum(axis=(0, 2, 3))
        return dx, np.concatenate([dw.ravel(), db]), None


class ReLU(Layer):
    def output_shape(self, shape, skip_shape=None):
        return shape

    def forward(self, x, params, skip=None):
        return LayerOutput(np.maximum(x, 0))

    def backward(self, x, out, params, dy):
        # subgradient at 0 is 0
        return dy * (x > 0), params[:0], None


class MaxPool2(Layer):
    """2×2 max pooling, stride 2; argmax indices kept for exact backprop."""

    def output_shape(self, shape, skip_shape=None):
        if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
            raise ShapeError(f"maxpool2 needs (C, H, W) with even H, W, got {shape}")
        return (shape[0], shape[1] // 2, shape[2] // 2)

    @staticmethod
    def _blocks(x):
        b, c, h, w = x.shape
        return x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)

    def forward(self, x, params, skip=None):
        blocks = self._blocks(x)
        idx = np.argmax(blocks, axis=-1)
        y = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
        return LayerOutput(y, aux=idx)

    def backward(self, x, out, params, dy):
        b, c, h, w = x.shape
        grad = np.zeros((b, c, h // 2, w // 2, 4), dtype=dy.dtype)
        np.put_along_axis(grad, out.aux[..., None], dy[..., None], axis=-1)
        dx = grad.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
        return dx, params[:0], None


class Upsample2(Layer):
    """Nearest-neighbour 2× upsampling."""

    def output_shape(self, shape, skip_shape=None):
        if len(shape) != 3:
            raise ShapeError(f"upsample2 needs (C, H, W), got {shape}")
        return (shape[0], shape[1] * 2, shape[2] * 2)

    def forward(self, x, params, skip=None):
        return LayerOutput(x.repeat(2, axis=2).repeat(2, axis=3))

    def backward(self, x, out, params, dy):
        b, c, h, w = x.shape
        return dy.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)), params[:0], None


class ConcatSkip(Layer):
    """Channel concatenation of the running activation with an earlier layer's output."""

    def output_shape(self, shape, skip_shape=None):
        if skip_shape is None or len(shape) != len(skip_shape) or shape[1:] != skip_shape[1:]:
            raise ShapeError(f"concat-skip cannot join {shape} with {skip_shape}")
        return (shape[0] + skip_shape[0], *shape[1:])

    def forward(self, x, params, skip=None):
        return LayerOutput(np.concatenate([x, skip], axis=1))

    def backward(self, x, out, params, dy):
        c = x.shape[1]
        return dy[:, :c], params[:0], dy[:, c:]


class SoftmaxHead(Layer):
    """Softmax over the class axis (axis 1) at every output position."""

    def output_shape(self, shape, skip_shape=None):
        return shape

    def forward(self, x, params, skip=None):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        return LayerOutput(e / e.sum(axis=1, keepdims=True))

    def backward(self, x, out, params, dy):
        p = out.y
        return p * (dy - (dy * p).sum(axis=1, keepdims=True)), params[:0], None


_LAYER_CLASSES: dict[str, type[Layer]] = {
    "dense": Dense,
    "conv3x3": Conv3x3,
    "relu": ReLU,
    "maxpool2": MaxPool2,
    "upsample2": Upsample2,
    "concat-skip": ConcatSkip,
    "softmax-head": SoftmaxHead,
}


def make_layer(spec: LayerSpec) -> Layer:
    return _LAYER_CLASSES[spec.kind](spec)
