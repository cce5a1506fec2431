#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Reverse-mode automatic differentiation over numpy arrays.

Every op builds its output through :func:`_result`, which rejects
non-finite values and records a backward closure when any input takes part
in the gradient tape. Grad mode and the default dtype are thread-local, so
independent tapes can be driven from different threads.
"""
import logging
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import GradientError, LabelError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12
GUMBEL_EPS = 1e-20

_local = threading.local()


def is_grad_enabled():
    return getattr(_local, 'grad_enabled', True)


def get_default_dtype():
    return getattr(_local, 'dtype', np.float32)


class no_grad(object):

    def __enter__(self):
        self.previous = is_grad_enabled()
        _local.grad_enabled = False
        return self

    def __exit__(self, *args):
        _local.grad_enabled = self.previous


class default_dtype(object):
    """Switch the engine precision, e.g. to float64 for gradient checks."""

    def __init__(self, dtype):
        self.dtype = np.dtype(dtype).type

    def __enter__(self):
        self.previous = get_default_dtype()
        _local.dtype = self.dtype
        return self

    def __exit__(self, *args):
        _local.dtype = self.previous


class Tensor(object):
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=''):
        self.data = np.asarray(data, dtype=get_default_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None
        self._op = ''

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def numpy(self):
        return self.data.copy()

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return 'Tensor({}, requires_grad={})'.format(self.data.__repr__(), self.requires_grad)

    def backward(self, grad=None):
        if not self.requires_grad:
            raise GradientError('backward() called on a tensor outside the gradient tape')
        if grad is None:
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.shape:
            raise ShapeError('seed gradient shape {} does not match tensor shape {}'.format(grad.shape, self.shape))

        grads = {id(self): grad}
        for node in reversed(_topological_order(self)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node.grad = g
            if node._backward is None:
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + parent_grad if key in grads else parent_grad

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def gelu(self):
        return gelu(self)

    def softmax(self, axis=-1):
        return softmax(self, axis)

    def log_softmax(self, axis=-1):
        return log_softmax(self, axis)


def _topological_order(root):
    # parents before children, root last
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _lift(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(data, parents, backward, op):
    data = np.asarray(data, dtype=get_default_dtype())
    if not np.all(np.isfinite(data)):
        raise NonFiniteError('{} produced non-finite values'.format(op))
    out = Tensor(data)
    out._op = op
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def add(a, b):
    a, b = _lift(a), _lift(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, 'add')


def sub(a, b):
    a, b = _lift(a), _lift(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward, 'sub')


def mul(a, b):
    a, b = _lift(a), _lift(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward, 'mul')


def div(a, b):
    a, b = _lift(a), _lift(b)

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result(a.data / b.data, (a, b), backward, 'div')


def neg(a):
    a = _lift(a)
    return _result(-a.data, (a,), lambda g: (-g,), 'neg')


def power(a, exponent):
    a = _lift(a)
    exponent = float(exponent)

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return _result(a.data ** exponent, (a,), backward, 'pow')


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError('matmul dimension mismatch: {} x {}'.format(a.shape, b.shape))

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(np.matmul(a.data, b.data), (a, b), backward, 'matmul')


def exp(a):
    a = _lift(a)
    out_data = np.exp(a.data)
    return _result(out_data, (a,), lambda g: (g * out_data,), 'exp')


def log(a):
    """Natural log with the argument clamped at ``LOG_FLOOR``."""
    a = _lift(a)
    safe = np.maximum(a.data, LOG_FLOOR)

    def backward(g):
        return (g * (a.data > LOG_FLOOR) / safe,)

    return _result(np.log(safe), (a,), backward, 'log')


def tanh(a):
    a = _lift(a)
    out_data = np.tanh(a.data)
    return _result(out_data, (a,), lambda g: (g * (1.0 - out_data * out_data),), 'tanh')


def relu(a):
    a = _lift(a)
    return _result(np.maximum(a.data, 0), (a,), lambda g: (g * (a.data > 0),), 'relu')


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a):
    """GELU, tanh approximation."""
    a = _lift(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return _result(0.5 * x * (1.0 + t), (a,), backward, 'gelu')


def tensor_sum(a, axis=None, keepdims=False):
    a = _lift(a)
    axes = _axes(axis, a.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(a.data.sum(axis=axes, keepdims=keepdims), (a,), backward, 'sum')


def mean(a, axis=None, keepdims=False):
    a = _lift(a)
    count = 1
    for ax in _axes(axis, a.ndim):
        count *= a.shape[ax]
    return tensor_sum(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape):
    a = _lift(a)
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), 'reshape')


def transpose(a, axes=None):
    a = _lift(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), 'transpose')


def getitem(a, index):
    """Basic (slice / integer) indexing."""
    a = _lift(a)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _result(a.data[index], (a,), backward, 'getitem')


def softmax(a, axis=-1):
    a = _lift(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out_data * (g - (g * out_data).sum(axis=axis, keepdims=True)),)

    return _result(out_data, (a,), backward, 'softmax')


def log_softmax(a, axis=-1):
    a = _lift(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out_data = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out_data) * g.sum(axis=axis, keepdims=True),)

    return _result(out_data, (a,), backward, 'log_softmax')


def one_hot(ids, depth):
    ids = np.asarray(ids, dtype=np.int64)
    out = np.zeros(ids.shape + (depth,), dtype=get_default_dtype())
    np.put_along_axis(out, ids[..., None], 1.0, axis=-1)
    return out


def mse_loss(a, b):
    a, b = _lift(a), _lift(b)
    if a.shape != b.shape:
        raise ShapeError('mse_loss shape mismatch: {} vs {}'.format(a.shape, b.shape))
    diff = a - b
    return (diff * diff).mean()


def cross_entropy_loss(logits, gold):
    """Mean of ``-log softmax(logits)[gold]`` over the batch."""
    logits = _lift(logits)
    gold = np.asarray(gold, dtype=np.int64)
    if logits.ndim == 1:
        logits = logits.reshape((1, -1))
        gold = gold.reshape(-1)
    if logits.ndim != 2 or gold.shape != (logits.shape[0],):
        raise ShapeError('cross_entropy_loss expects (batch, classes) logits and (batch,) labels, '
                         'got {} and {}'.format(logits.shape, gold.shape))
    classes = logits.shape[1]
    if gold.size and (gold.min() < 0 or gold.max() >= classes):
        raise LabelError('gold label out of range for {} classes: {}'.format(classes, gold.tolist()))
    picked = (log_softmax(logits, axis=-1) * one_hot(gold, classes)).sum(axis=-1)
    return -picked.mean()


def kl_divergence(p_logits, q_logits, temperature=1.0):
    """KL(softmax(p/temperature) || softmax(q/temperature)), averaged over rows."""
    if temperature <= 0:
        raise ValueError('temperature must be positive, got {}'.format(temperature))
    p_logits, q_logits = _lift(p_logits), _lift(q_logits)
    if p_logits.shape != q_logits.shape:
        raise ShapeError('kl_divergence shape mismatch: {} vs {}'.format(p_logits.shape, q_logits.shape))
    log_p = log_softmax(p_logits * (1.0 / temperature), axis=-1)
    log_q = log_softmax(q_logits * (1.0 / temperature), axis=-1)
    return (log_p.exp() * (log_p - log_q)).sum(axis=-1).mean()


def gumbel_softmax(logits, tau, rng):
    if tau <= 0:
        raise ValueError('gumbel-softmax temperature must be positive, got {}'.format(tau))
    logits = _lift(logits)
    u = rng.random(logits.shape)
    noise = -np.log(-np.log(u + GUMBEL_EPS) + GUMBEL_EPS)
    return softmax((logits + noise) * (1.0 / tau), axis=-1)


@dataclass
class OptimizerState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_steps: int = 0
    decay_offset: int = 0
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def current_lr(self):
        # linear decay to zero over decay_steps; 0 disables the schedule
        if not self.decay_steps:
            return self.lr
        progress = (self.decay_offset + self.step) / float(self.decay_steps)
        return self.lr * max(0.0, 1.0 - progress)


def adam_step(params, grads, state):
    """Apply one bias-corrected Adam update; a ``None`` gradient counts as zero."""
    if len(params) != len(grads):
        raise ShapeError('adam_step got {} parameters and {} gradients'.format(len(params), len(grads)))
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    for p, g, m in zip(params, grads, state.m):
        if m.shape != p.shape or (g is not None and np.shape(g) != p.shape):
            raise ShapeError('adam_step shape mismatch for {!r}: param {}, grad {}, moment {}'.format(
                p.name, p.shape, None if g is None else np.shape(g), m.shape))

    lr = state.current_lr()
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=p.data.dtype)
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        update = lr * (state.m[i] / correction1) / (np.sqrt(state.v[i] / correction2) + state.eps)
        p.data = (p.data - update).astype(p.data.dtype)
    return params, state


class Adam(object):

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, decay_steps=0, decay_offset=0):
        self.params = list(params)
        self.state = OptimizerState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps,
                                    decay_steps=decay_steps, decay_offset=decay_offset)

    @property
    def lr(self):
        return self.state.current_lr()

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
