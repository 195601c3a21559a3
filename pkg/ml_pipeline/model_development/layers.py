"""
Sequence layers with exact backpropagation through time.

Tensors are B x T x D. Sequences shorter than T are padded at the end and
described by `lengths`; padded frames never influence valid frames (the
backward-time LSTM reverses each sequence inside its own length) and receive
zero output gradient from the loss.

LSTM cell, gates ordered [i, f, o, g] in one weight matrix W = [W_x | W_h]:
    z_t = W_x x_t + W_h h_{t-1} + b
    i, f, o = logistic(z), g = tanh(z)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t),   h_0 = c_0 = 0
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from ..exceptions import DimensionMismatchError, NonFiniteError, TapeMismatchError
from .param_store import ParamStore

FORGET_BIAS = 1.0


class LayerKind(str, Enum):
    LINEAR = "linear"
    RELU = "relu"
    LSTM_FORWARD = "lstm_forward"
    LSTM_BACKWARD = "lstm_backward"
    BLSTM = "blstm"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    in_dim: int
    out_dim: int
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LayerKind(self.kind))
        if self.in_dim < 1 or self.out_dim < 1:
            raise DimensionMismatchError(f"layer {self.name}: dims must be positive")
        if self.kind is LayerKind.RELU and self.in_dim != self.out_dim:
            raise DimensionMismatchError(f"relu layer {self.name} must keep its width")
        if self.kind is LayerKind.BLSTM and self.out_dim % 2 != 0:
            raise DimensionMismatchError(f"blstm layer {self.name} needs an even out_dim")

    def param_names(self) -> List[str]:
        if self.kind is LayerKind.LINEAR:
            return [f"{self.name}.W", f"{self.name}.b"]
        if self.kind in (LayerKind.LSTM_FORWARD, LayerKind.LSTM_BACKWARD):
            return [f"{self.name}.W", f"{self.name}.b"]
        if self.kind is LayerKind.BLSTM:
            return [f"{self.name}.fwd.W", f"{self.name}.fwd.b", f"{self.name}.bwd.W", f"{self.name}.bwd.b"]
        return []

    def param_count(self) -> int:
        if self.kind is LayerKind.LINEAR:
            return self.out_dim * (self.in_dim + 1)
        if self.kind in (LayerKind.LSTM_FORWARD, LayerKind.LSTM_BACKWARD):
            return _lstm_param_count(self.in_dim, self.out_dim)
        if self.kind is LayerKind.BLSTM:
            return 2 * _lstm_param_count(self.in_dim, self.out_dim // 2)
        return 0


def _lstm_param_count(in_dim: int, hidden: int) -> int:
    return 4 * hidden * (in_dim + hidden + 1)


@dataclass
class Tape:
    """Activations recorded by forward, consumed by backward."""

    layers: Tuple[LayerSpec, ...]
    params: ParamStore
    lengths: np.ndarray
    caches: List[Any] = field(default_factory=list)
    squeeze: bool = False
    out_shape: Tuple[int, ...] = ()


def init_params(layers: Sequence[LayerSpec], params: ParamStore, rng: np.random.Generator) -> None:
    """
    Declare and initialize the parameters of `layers` in `params`.

    Weights are uniform in +-sqrt(6 / (fan_in + fan_out)); biases are zero
    except LSTM forget-gate biases, which start at +1.
    """
    for spec in layers:
        if spec.kind is LayerKind.LINEAR:
            params.add(f"{spec.name}.W", _glorot(rng, spec.out_dim, spec.in_dim))
            params.add(f"{spec.name}.b", np.zeros(spec.out_dim))
        elif spec.kind in (LayerKind.LSTM_FORWARD, LayerKind.LSTM_BACKWARD):
            _init_lstm(params, spec.name, spec.in_dim, spec.out_dim, rng)
        elif spec.kind is LayerKind.BLSTM:
            _init_lstm(params, f"{spec.name}.fwd", spec.in_dim, spec.out_dim // 2, rng)
            _init_lstm(params, f"{spec.name}.bwd", spec.in_dim, spec.out_dim // 2, rng)


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def _init_lstm(params: ParamStore, prefix: str, in_dim: int, hidden: int, rng: np.random.Generator) -> None:
    params.add(f"{prefix}.W", _glorot(rng, 4 * hidden, in_dim + hidden))
    bias = np.zeros(4 * hidden)
    bias[hidden:2 * hidden] = FORGET_BIAS
    params.add(f"{prefix}.b", bias)


def check_chain(layers: Sequence[LayerSpec], in_dim: int) -> None:
    width = in_dim
    for spec in layers:
        if spec.in_dim != width:
            raise DimensionMismatchError(
                f"layer {spec.name or spec.kind.value} expects width {spec.in_dim}, receives {width}"
            )
        width = spec.out_dim


def reverse_within(x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Reverse every sequence along time inside its own length; padding stays put."""
    batch, steps = x.shape[0], x.shape[1]
    t = np.arange(steps)[np.newaxis, :]
    lens = np.asarray(lengths)[:, np.newaxis]
    index = np.where(t < lens, lens - 1 - t, t)
    index = np.broadcast_to(index, (batch, steps))
    return np.take_along_axis(x, index[:, :, np.newaxis], axis=1)


# -- linear / relu --------------------------------------------------------

def _linear_forward(params: ParamStore, spec: LayerSpec, x: np.ndarray) -> Tuple[np.ndarray, Any]:
    weight, bias = params.value(f"{spec.name}.W"), params.value(f"{spec.name}.b")
    return x @ weight.T + bias, x


def _linear_backward(params: ParamStore, grads: ParamStore, spec: LayerSpec, x: np.ndarray,
                     dy: np.ndarray) -> np.ndarray:
    weight = params.value(f"{spec.name}.W")
    flat_x = x.reshape(-1, x.shape[-1])
    flat_dy = dy.reshape(-1, dy.shape[-1])
    grads.grad(f"{spec.name}.W")[...] += flat_dy.T @ flat_x
    grads.grad(f"{spec.name}.b")[...] += flat_dy.sum(axis=0)
    return dy @ weight


# -- LSTM -----------------------------------------------------------------

def _lstm_forward(weight: np.ndarray, bias: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    batch, steps, in_dim = x.shape
    hidden = bias.shape[0] // 4
    w_x, w_h = weight[:, :in_dim], weight[:, in_dim:]

    z_x = x @ w_x.T + bias
    gates = np.empty((batch, steps, 4 * hidden))
    cells = np.empty((batch, steps, hidden))
    tanh_cells = np.empty((batch, steps, hidden))
    hiddens = np.empty((batch, steps, hidden))

    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    for t in range(steps):
        z = z_x[:, t] + h @ w_h.T
        act = np.empty_like(z)
        act[:, :3 * hidden] = expit(z[:, :3 * hidden])
        act[:, 3 * hidden:] = np.tanh(z[:, 3 * hidden:])
        i, f, o, g = np.split(act, 4, axis=1)
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        gates[:, t], cells[:, t], tanh_cells[:, t], hiddens[:, t] = act, c, tanh_c, h

    cache = {"x": x, "gates": gates, "cells": cells, "tanh_cells": tanh_cells, "hiddens": hiddens}
    return hiddens, cache


def _lstm_backward(weight: np.ndarray, cache: Dict[str, np.ndarray], dy: np.ndarray,
                   grad_weight: np.ndarray, grad_bias: np.ndarray) -> np.ndarray:
    x, gates, cells = cache["x"], cache["gates"], cache["cells"]
    tanh_cells, hiddens = cache["tanh_cells"], cache["hiddens"]
    batch, steps, in_dim = x.shape
    hidden = hiddens.shape[2]
    w_x, w_h = weight[:, :in_dim], weight[:, in_dim:]

    dz_all = np.empty((batch, steps, 4 * hidden))
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    grad_w_h = np.zeros_like(w_h)

    for t in reversed(range(steps)):
        i, f, o, g = np.split(gates[:, t], 4, axis=1)
        c_prev = cells[:, t - 1] if t > 0 else np.zeros((batch, hidden))
        h_prev = hiddens[:, t - 1] if t > 0 else np.zeros((batch, hidden))
        tanh_c = tanh_cells[:, t]

        dh = dy[:, t] + dh_next
        dc = dh * o * (1.0 - tanh_c ** 2) + dc_next
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dh * tanh_c * o * (1.0 - o),
            dc * i * (1.0 - g ** 2),
        ], axis=1)
        dz_all[:, t] = dz
        grad_w_h += dz.T @ h_prev
        dh_next = dz @ w_h
        dc_next = dc * f

    flat_dz = dz_all.reshape(-1, 4 * hidden)
    grad_weight[:, :in_dim] += flat_dz.T @ x.reshape(-1, in_dim)
    grad_weight[:, in_dim:] += grad_w_h
    grad_bias += flat_dz.sum(axis=0)
    return dz_all @ w_x


def _directional_forward(params: ParamStore, prefix: str, x: np.ndarray, lengths: np.ndarray,
                         backward_time: bool) -> Tuple[np.ndarray, Any]:
    weight, bias = params.value(f"{prefix}.W"), params.value(f"{prefix}.b")
    if weight.shape[1] != x.shape[2] + bias.shape[0] // 4:
        raise DimensionMismatchError(f"{prefix}: weight shape {weight.shape} does not fit input width {x.shape[2]}")
    if backward_time:
        y, cache = _lstm_forward(weight, bias, reverse_within(x, lengths))
        return reverse_within(y, lengths), cache
    return _lstm_forward(weight, bias, x)


def _directional_backward(params: ParamStore, grads: ParamStore, prefix: str, cache: Any, dy: np.ndarray,
                          lengths: np.ndarray, backward_time: bool) -> np.ndarray:
    weight = params.value(f"{prefix}.W")
    grad_weight, grad_bias = grads.grad(f"{prefix}.W"), grads.grad(f"{prefix}.b")
    if backward_time:
        dx = _lstm_backward(weight, cache, reverse_within(dy, lengths), grad_weight, grad_bias)
        return reverse_within(dx, lengths)
    return _lstm_backward(weight, cache, dy, grad_weight, grad_bias)


# -- public API -----------------------------------------------------------

def forward(
    layers: Sequence[LayerSpec],
    params: ParamStore,
    inputs: np.ndarray,
    lengths: Optional[Sequence[int]] = None,
) -> Tuple[np.ndarray, Tape]:
    """
    Evaluate a layer stack.

    Args:
        layers (Sequence[LayerSpec]): Layers applied in order
        params (ParamStore): Parameters of the layers
        inputs (np.ndarray): T x in_dim, or B x T x in_dim for a padded batch
        lengths (Sequence[int], optional): Valid frames per batch entry;
            defaults to full length

    Returns:
        Tuple of output (same rank as inputs) and the tape for backward
    """
    x = np.asarray(inputs, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[np.newaxis]
    if x.ndim != 3 or x.shape[1] < 1:
        raise DimensionMismatchError(f"input must be T x D or B x T x D with T >= 1, got {np.shape(inputs)}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("network input contains non-finite values")
    layers = tuple(layers)
    check_chain(layers, x.shape[2])

    lens = np.full(x.shape[0], x.shape[1], dtype=np.int64) if lengths is None else np.asarray(lengths, dtype=np.int64)
    if lens.shape != (x.shape[0],) or np.any(lens < 1) or np.any(lens > x.shape[1]):
        raise DimensionMismatchError(f"lengths {lens} do not fit batch of shape {x.shape}")

    tape = Tape(layers=layers, params=params, lengths=lens, squeeze=squeeze)
    for spec in layers:
        if spec.kind is LayerKind.LINEAR:
            x, cache = _linear_forward(params, spec, x)
        elif spec.kind is LayerKind.RELU:
            cache = x > 0.0
            x = np.where(cache, x, 0.0)
        elif spec.kind is LayerKind.LSTM_FORWARD:
            x, cache = _directional_forward(params, spec.name, x, lens, backward_time=False)
        elif spec.kind is LayerKind.LSTM_BACKWARD:
            x, cache = _directional_forward(params, spec.name, x, lens, backward_time=True)
        else:
            y_fwd, cache_fwd = _directional_forward(params, f"{spec.name}.fwd", x, lens, backward_time=False)
            y_bwd, cache_bwd = _directional_forward(params, f"{spec.name}.bwd", x, lens, backward_time=True)
            x, cache = np.concatenate([y_fwd, y_bwd], axis=2), (cache_fwd, cache_bwd)
        tape.caches.append(cache)

    tape.out_shape = x.shape
    return (x[0] if squeeze else x), tape


def backward(tape: Tape, output_gradient: np.ndarray, grads: Optional[ParamStore] = None) -> np.ndarray:
    """
    Backpropagate through a recorded forward pass.

    Gradients are accumulated (+=) into `grads`, which defaults to the tape's
    own ParamStore.

    Args:
        tape (Tape): Tape from the matching forward call
        output_gradient (np.ndarray): dL/d(output), same shape as the output
        grads (ParamStore, optional): Store receiving the gradients (shares
            values with the tape's store)

    Returns:
        dL/d(input), same shape as the forward input
    """
    params = tape.params
    grads = params if grads is None else grads
    dy = np.asarray(output_gradient, dtype=np.float64)
    if tape.squeeze:
        dy = dy[np.newaxis]
    if dy.shape != tape.out_shape or len(tape.caches) != len(tape.layers):
        raise TapeMismatchError(f"output gradient of shape {dy.shape} does not match tape output {tape.out_shape}")
    for spec in tape.layers:
        for name in spec.param_names():
            if name not in params or name not in grads:
                raise TapeMismatchError(f"parameter {name} missing from the store")

    for spec, cache in zip(reversed(tape.layers), reversed(tape.caches)):
        if spec.kind is LayerKind.LINEAR:
            dy = _linear_backward(params, grads, spec, cache, dy)
        elif spec.kind is LayerKind.RELU:
            dy = np.where(cache, dy, 0.0)
        elif spec.kind is LayerKind.LSTM_FORWARD:
            dy = _directional_backward(params, grads, spec.name, cache, dy, tape.lengths, backward_time=False)
        elif spec.kind is LayerKind.LSTM_BACKWARD:
            dy = _directional_backward(params, grads, spec.name, cache, dy, tape.lengths, backward_time=True)
        else:
            half = spec.out_dim // 2
            cache_fwd, cache_bwd = cache
            dx_fwd = _directional_backward(params, grads, f"{spec.name}.fwd", cache_fwd, dy[:, :, :half],
                                           tape.lengths, backward_time=False)
            dx_bwd = _directional_backward(params, grads, f"{spec.name}.bwd", cache_bwd, dy[:, :, half:],
                                           tape.lengths, backward_time=True)
            dy = dx_fwd + dx_bwd

    return dy[0] if tape.squeeze else dy


def param_count(layers: Sequence[LayerSpec]) -> int:
    return sum(spec.param_count() for spec in layers)
