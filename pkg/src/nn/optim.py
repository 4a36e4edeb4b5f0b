"""Optimizers and the mean-teacher EMA update.

All updates are functional: they return new parameter vectors and new
state objects and leave their inputs untouched.
"""

from dataclasses import dataclass, replace

import numpy as np

from src.errors import ConfigError, NonFiniteError, ShapeError


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3  # full-scale runs with pretrained backbones use 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: np.ndarray, **hyper) -> "AdamState":
        return cls(m=np.zeros_like(params), v=np.zeros_like(params), **hyper)


@dataclass(frozen=True)
class SgdState:
    """SGD with (Nesterov) momentum and L2 weight decay."""

    buf: np.ndarray
    t: int = 0
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    nesterov: bool = True

    @classmethod
    def zeros_like(cls, params: np.ndarray, **hyper) -> "SgdState":
        return cls(buf=np.zeros_like(params), **hyper)


@dataclass(frozen=True)
class EmaConfig:
    alpha: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"ema alpha must be in [0, 1), got {self.alpha}", key="ema_alpha")


def _check(params: np.ndarray, grads: np.ndarray, state_shape: tuple[int, ...]) -> None:
    if params.shape != grads.shape or params.shape != state_shape:
        raise ShapeError(f"optimizer shapes differ: params {params.shape}, grads {grads.shape}, state {state_shape}")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteError("non-finite gradient")


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update."""
    _check(params, grads, state.m.shape)
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params.astype(params.dtype, copy=False), replace(state, m=m, v=v, t=t)


def sgd_step(state: SgdState, params: np.ndarray, grads: np.ndarray) -> tuple[np.ndarray, SgdState]:
    _check(params, grads, state.buf.shape)
    g = grads + state.weight_decay * params
    buf = state.momentum * state.buf + g
    update = g + state.momentum * buf if state.nesterov else buf
    new_params = params - state.lr * update
    return new_params.astype(params.dtype, copy=False), replace(state, buf=buf, t=state.t + 1)


def ema_update(teacher: np.ndarray, student: np.ndarray, cfg: EmaConfig) -> np.ndarray:
    """w_t <- alpha * w_t + (1 - alpha) * w_s, elementwise."""
    if teacher.shape != student.shape:
        raise ShapeError(f"teacher {teacher.shape} and student {student.shape} parameters differ")
    return cfg.alpha * teacher + (1.0 - cfg.alpha) * student
