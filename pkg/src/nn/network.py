"""Layer-stack networks with a flat parameter store and manual backprop.

A Network is instantiated twice in mean-teacher training: once as the
student f_θ and once as the teacher g_φ. The teacher is a copy of the
student whose parameters only ever change through ema_update.

A Network together with its optimizer state is a single-owner mutable
unit. Forward passes on a frozen parameter snapshot are pure.
"""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.errors import DataError, NonFiniteError, ShapeError, StaleTapeError
from src.nn.layers import Layer, LayerOutput, LayerSpec, make_layer
from src.rng import stream
from src.tensor.io import dump_tensor, load_tensor
from src.tensor.ops import default_dtype

_CHECKPOINT_MAGIC = "MASKCONS-NET v1"


@dataclass
class ActivationTape:
    """Per-layer inputs and outputs recorded by forward(cache=True)."""

    inputs: list[np.ndarray]
    outputs: list[LayerOutput]
    owner: int  # id() of the recording network
    version: int  # parameter version at recording time


@dataclass
class Network:
    specs: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...]  # per-sample, batch axis excluded
    params: np.ndarray
    rng_seed: int
    version: int = 0
    layers: list[Layer] = field(init=False, repr=False)
    offsets: list[int] = field(init=False, repr=False)
    output_shape: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        self.layers = [make_layer(s) for s in self.specs]
        self.offsets = [0]
        for layer in self.layers:
            self.offsets.append(self.offsets[-1] + layer.param_count())
        self.output_shape = _check_compatible(self.specs, self.layers, self.input_shape)
        if self.params.shape != (self.offsets[-1],):
            raise ShapeError(f"expected {self.offsets[-1]} parameters, got {self.params.shape}")

    @property
    def n_params(self) -> int:
        return self.offsets[-1]

    @property
    def has_softmax_head(self) -> bool:
        return self.specs[-1].kind == "softmax-head"

    def layer_params(self, i: int) -> np.ndarray:
        return self.params[self.offsets[i]:self.offsets[i + 1]]

    def set_params(self, params: np.ndarray) -> None:
        """Replace the parameter vector; tapes recorded before this call go stale."""
        if params.shape != self.params.shape:
            raise ShapeError(f"parameter shape {params.shape} != {self.params.shape}")
        self.params = params
        self.version += 1

    def copy(self) -> "Network":
        return Network(self.specs, self.input_shape, self.params.copy(), self.rng_seed)

    def params_digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.params).tobytes()).hexdigest()


def _check_compatible(specs, layers, input_shape) -> tuple[int, ...]:
    shapes: list[tuple[int, ...]] = []
    shape = tuple(input_shape)
    for i, (spec, layer) in enumerate(zip(specs, layers)):
        skip_shape = None
        if spec.source is not None:
            if not 0 <= spec.source < i:
                raise ShapeError(f"layer {i} skip source {spec.source} is not an earlier layer")
            skip_shape = shapes[spec.source]
        shape = layer.output_shape(shape, skip_shape)
        shapes.append(shape)
    return shape


def build_network(
    specs: list[LayerSpec] | tuple[LayerSpec, ...],
    input_shape: tuple[int, ...],
    seed: int,
    dtype: np.dtype | None = None,
    init: str = "he",
) -> Network:
    """Build and initialize a network; params are a pure function of (specs, seed).

    init="zeros" gives all-zero parameters (a symmetric network).
    """
    specs = tuple(specs)
    dtype = default_dtype() if dtype is None else np.dtype(dtype)
    chunks = []
    for i, spec in enumerate(specs):
        layer = make_layer(spec)
        if init == "zeros":
            chunks.append(np.zeros(layer.param_count(), dtype=dtype))
        else:
            chunks.append(layer.init_params(stream(seed, "init", i), dtype))
    params = np.concatenate(chunks) if chunks else np.zeros(0, dtype=dtype)
    return Network(specs, tuple(input_shape), params.astype(dtype), seed)


def build_mlp(sizes: list[int], seed: int, softmax: bool = True, dtype: np.dtype | None = None) -> Network:
    """Dense/ReLU stack, e.g. sizes=[2, 512, 512, 512, 2] for the toy classifier."""
    specs: list[LayerSpec] = []
    for i in range(len(sizes) - 1):
        specs.append(LayerSpec("dense", (sizes[i], sizes[i + 1])))
        if i < len(sizes) - 2:
            specs.append(LayerSpec("relu"))
    if softmax:
        specs.append(LayerSpec("softmax-head"))
    return build_network(specs, (sizes[0],), seed, dtype)


def encoder_decoder_specs(in_channels: int, n_classes: int, widths: tuple[int, int, int] = (16, 32, 64)) -> list[LayerSpec]:
    """3-level encoder–decoder with skip concatenation and a softmax head."""
    w1, w2, w3 = widths
    return [
        LayerSpec("conv3x3", (in_channels, w1)), LayerSpec("relu"),
        LayerSpec("conv3x3", (w1, w1)), LayerSpec("relu"),  # 3: level-1 skip
        LayerSpec("maxpool2"),
        LayerSpec("conv3x3", (w1, w2)), LayerSpec("relu"),
        LayerSpec("conv3x3", (w2, w2)), LayerSpec("relu"),  # 8: level-2 skip
        LayerSpec("maxpool2"),
        LayerSpec("conv3x3", (w2, w3)), LayerSpec("relu"),
        LayerSpec("conv3x3", (w3, w3)), LayerSpec("relu"),
        LayerSpec("upsample2"),
        LayerSpec("concat-skip", source=8),
        LayerSpec("conv3x3", (w3 + w2, w2)), LayerSpec("relu"),
        LayerSpec("upsample2"),
        LayerSpec("concat-skip", source=3),
        LayerSpec("conv3x3", (w2 + w1, w1)), LayerSpec("relu"),
        LayerSpec("conv3x3", (w1, n_classes)),
        LayerSpec("softmax-head"),
    ]


def build_encoder_decoder(
    in_channels: int,
    n_classes: int,
    size: tuple[int, int],
    seed: int,
    widths: tuple[int, int, int] = (16, 32, 64),
    dtype: np.dtype | None = None,
) -> Network:
    return build_network(encoder_decoder_specs(in_channels, n_classes, widths), (in_channels, *size), seed, dtype)


def forward(net: Network, x: np.ndarray, cache: bool = False) -> tuple[np.ndarray, ActivationTape | None]:
    """Run the network on a batch x of shape (B, *input_shape)."""
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"input {x.shape} does not match network input (B, {net.input_shape})")

    inputs: list[np.ndarray] = []
    outputs: list[LayerOutput] = []
    activation = x
    for i, (spec, layer) in enumerate(zip(net.specs, net.layers)):
        skip = outputs[spec.source].y if spec.source is not None else None
        out = layer.forward(activation, net.layer_params(i), skip)
        inputs.append(activation)
        outputs.append(out)
        activation = out.y

    if not np.all(np.isfinite(activation)):
        raise NonFiniteError("non-finite activation in forward pass")

    tape = ActivationTape(inputs, outputs, id(net), net.version) if cache else None
    return activation, tape


def backward(net: Network, tape: ActivationTape, dloss_dy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter and the input batch."""
    if tape.owner != id(net) or tape.version != net.version:
        raise StaleTapeError("activation tape was recorded against different parameters")
    if dloss_dy.shape != tape.outputs[-1].y.shape:
        raise ShapeError(f"dLoss/dy shape {dloss_dy.shape} != output shape {tape.outputs[-1].y.shape}")

    dparams = np.zeros_like(net.params)
    pending: dict[int, np.ndarray] = {}
    grad = dloss_dy
    for i in range(len(net.layers) - 1, -1, -1):
        if i in pending:
            grad = grad + pending.pop(i)
        layer = net.layers[i]
        dx, dp, dskip = layer.backward(tape.inputs[i], tape.outputs[i], net.layer_params(i), grad)
        dparams[net.offsets[i]:net.offsets[i + 1]] = dp
        if dskip is not None:
            src = net.specs[i].source
            pending[src] = pending[src] + dskip if src in pending else dskip
        grad = dx
    return dparams, grad


def save_checkpoint(net: Network, path: str | Path) -> None:
    """Layer-spec text header followed by the parameters as a TNSR v1 dump."""
    header = [
        _CHECKPOINT_MAGIC,
        "input " + " ".join(str(d) for d in net.input_shape),
        f"seed {net.rng_seed}",
        f"layers {len(net.specs)}",
        *(spec.describe() for spec in net.specs),
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        dump_tensor(net.params, fh)


def load_checkpoint(path: str | Path) -> Network:
    with open(path, "rb") as fh:
        if fh.readline().decode("ascii", errors="replace").strip() != _CHECKPOINT_MAGIC:
            raise DataError(f"{path} is not a maskcons checkpoint")
        input_shape = tuple(int(d) for d in fh.readline().decode("ascii").split()[1:])
        seed = int(fh.readline().decode("ascii").split()[1])
        n_layers = int(fh.readline().decode("ascii").split()[1])
        specs = tuple(LayerSpec.parse(fh.readline().decode("ascii")) for _ in range(n_layers))
        params = load_tensor(fh)
    return Network(specs, input_shape, params, seed)
