"""Finite-difference verification of backward() and input Jacobians."""

from collections.abc import Callable

import numpy as np

from src.errors import ConfigError, NonFiniteError
from src.nn.layers import LayerSpec
from src.nn.network import Network, backward, build_encoder_decoder, build_mlp, build_network, forward
from src.rng import stream

# A scalar loss of the network output: y -> (value, dValue/dy)
LossSpec = Callable[[np.ndarray], tuple[float, np.ndarray]]


def sum_loss() -> LossSpec:
    return lambda y: (float(y.sum()), np.ones_like(y))


def squared_loss(target: np.ndarray) -> LossSpec:
    def loss(y):
        diff = y - target
        return float((diff * diff).sum()), 2.0 * diff
    return loss


def cross_entropy_loss(labels: np.ndarray) -> LossSpec:
    """Mean −log p[label] over positions; labels index the class axis 1."""
    def loss(y):
        picked = np.take_along_axis(y, labels[:, None], axis=1)[:, 0]
        n = picked.size
        grad = np.zeros_like(y)
        np.put_along_axis(grad, labels[:, None], (-1.0 / (picked * n))[:, None], axis=1)
        return float(-np.log(picked).sum() / n), grad
    return loss


# Relative-error denominator floor: max(|analytic|, |numeric|, GRAD_FLOOR)
GRAD_FLOOR = 1e-8
GRADCHECK_TOLERANCE = 1e-4


def _relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), GRAD_FLOOR)


def finite_diff_check(
    net: Network,
    x: np.ndarray,
    loss: LossSpec,
    h: float = 1e-5,
    n_params: int = 64,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between backward() and central differences.

    Checks a random subset of at least n_params parameters (all of them when
    the network has fewer) and every input element. The network's parameters
    are restored afterwards.
    """
    if net.params.dtype != np.float64 or x.dtype != np.float64:
        raise ConfigError("finite_diff_check requires 64-bit parameters and inputs", key="precision")
    rng = rng or np.random.default_rng(0)

    def evaluate(inp: np.ndarray) -> float:
        y, _ = forward(net, inp)
        value, _ = loss(y)
        if not np.isfinite(value):
            raise NonFiniteError("non-finite loss during finite-difference check")
        return value

    y, tape = forward(net, x, cache=True)
    value, dy = loss(y)
    if not np.isfinite(value):
        raise NonFiniteError("non-finite loss during finite-difference check")
    dparams, dinput = backward(net, tape, dy)

    original = net.params.copy()
    worst = 0.0
    count = min(max(n_params, 64), net.n_params)
    picks = np.sort(rng.choice(net.n_params, size=count, replace=False)) if net.n_params else []
    try:
        for idx in picks:
            plus = original.copy()
            plus[idx] += h
            net.set_params(plus)
            f_plus = evaluate(x)
            minus = original.copy()
            minus[idx] -= h
            net.set_params(minus)
            f_minus = evaluate(x)
            worst = max(worst, _relative_error(dparams[idx], (f_plus - f_minus) / (2 * h)))
    finally:
        net.set_params(original)

    flat = x.reshape(-1)
    for idx in range(flat.size):
        bumped = flat.copy()
        bumped[idx] += h
        f_plus = evaluate(bumped.reshape(x.shape))
        bumped[idx] -= 2 * h
        f_minus = evaluate(bumped.reshape(x.shape))
        worst = max(worst, _relative_error(dinput.reshape(-1)[idx], (f_plus - f_minus) / (2 * h)))
    return worst


def input_jacobian(net: Network, x: np.ndarray) -> np.ndarray:
    """Jacobian of the flattened output w.r.t. the flattened input for one sample.

    Built from backward()'s dInput on unit output covectors; x has a batch
    axis of length 1. Returns an (out_dim, in_dim) matrix.
    """
    y, tape = forward(net, x, cache=True)
    rows = []
    for k in range(y.size):
        covector = np.zeros(y.size, dtype=y.dtype)
        covector[k] = 1.0
        _, dinput = backward(net, tape, covector.reshape(y.shape))
        rows.append(dinput.reshape(-1))
    return np.stack(rows)


def _case(specs: list[LayerSpec], input_shape: tuple[int, ...], seed: int) -> Network:
    return build_network(specs, input_shape, seed, dtype=np.dtype(np.float64))


def check_suite(seed: int = 0) -> list[tuple[str, Network, np.ndarray, LossSpec]]:
    """One small network per layer kind, plus the toy MLP and the encoder-decoder."""
    rng = stream(seed, "gradcheck")
    dense = LayerSpec("dense", (5, 4))
    cases: list[tuple[str, Network, tuple[int, ...], str]] = [
        ("dense", _case([dense], (5,), seed), (3, 5), "squared"),
        ("conv3x3", _case([LayerSpec("conv3x3", (2, 3))], (2, 6, 6), seed), (2, 2, 6, 6), "squared"),
        ("relu", _case([LayerSpec("dense", (4, 6)), LayerSpec("relu"), LayerSpec("dense", (6, 3))], (4,), seed),
         (3, 4), "squared"),
        ("maxpool2", _case([LayerSpec("conv3x3", (2, 3)), LayerSpec("maxpool2")], (2, 6, 6), seed),
         (2, 2, 6, 6), "squared"),
        ("upsample2", _case([LayerSpec("conv3x3", (2, 2)), LayerSpec("upsample2")], (2, 4, 4), seed),
         (2, 2, 4, 4), "squared"),
        ("concat-skip", _case([
            LayerSpec("conv3x3", (2, 3)), LayerSpec("relu"), LayerSpec("conv3x3", (3, 2)),
            LayerSpec("concat-skip", source=0), LayerSpec("conv3x3", (5, 2)),
        ], (2, 5, 5), seed), (2, 2, 5, 5), "squared"),
        ("softmax-head", _case([LayerSpec("dense", (4, 3)), LayerSpec("softmax-head")], (4,), seed),
         (5, 4), "ce"),
        ("toy-mlp", build_mlp([2, 512, 512, 512, 2], seed, dtype=np.dtype(np.float64)), (4, 2), "ce"),
        ("encoder-decoder", build_encoder_decoder(3, 4, (8, 8), seed, (4, 6, 8), dtype=np.dtype(np.float64)),
         (1, 3, 8, 8), "ce"),
    ]
    suite = []
    for name, net, shape, kind in cases:
        x = rng.standard_normal(shape)
        y, _ = forward(net, x)
        if kind == "ce":
            labels = rng.integers(0, y.shape[1], size=(y.shape[0], *y.shape[2:]))
            loss = cross_entropy_loss(labels)
        else:
            loss = squared_loss(rng.standard_normal(y.shape))
        suite.append((name, net, x, loss))
    return suite


def run_check_suite(seed: int = 0, h: float = 1e-5, n_params: int = 64) -> dict[str, float]:
    """Worst relative error per suite case."""
    return {
        name: finite_diff_check(net, x, loss, h=h, n_params=n_params, rng=stream(seed, "gradcheck", name))
        for name, net, x, loss in check_suite(seed)
    }
