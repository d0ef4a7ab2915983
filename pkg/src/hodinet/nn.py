"""Layers and the optimiser used by the network.

Modules keep parameters as leaf :class:`Tensor` objects with
``requires_grad=True`` and discover them by walking attributes in definition
order, so parameter names are stable and reproducible.
"""
from collections import OrderedDict

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .tensor import Tensor


class Module:
    training = True

    def named_parameters(self, prefix=""):
        for name, value in self.__dict__.items():
            yield from _walk(value, prefix + name, "params")

    def named_buffers(self, prefix=""):
        for name, value in self.__dict__.items():
            yield from _walk(value, prefix + name, "buffers")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for value in self.__dict__.values():
            yield from _submodules(value)

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        """Parameters and buffers as ``name -> ndarray`` in definition order."""
        out = OrderedDict()
        for name, p in self.named_parameters():
            out[name] = p.data
        for name, b in self.named_buffers():
            out[name] = b
        return out

    def load_state_dict(self, state):
        own = self.state_dict()
        missing = [k for k in own if k not in state]
        extra = [k for k in state if k not in own]
        bad = [k for k in own if k in state and np.shape(state[k]) != own[k].shape]
        if missing or extra or bad:
            parts = []
            if missing:
                parts.append("missing: " + ", ".join(missing))
            if extra:
                parts.append("unexpected: " + ", ".join(extra))
            if bad:
                parts.append("shape mismatch: " + ", ".join(
                    f"{k} {np.shape(state[k])} != {own[k].shape}" for k in bad))
            raise ConfigError("state does not match model; " + "; ".join(parts))
        for k, arr in own.items():
            arr[...] = np.asarray(state[k], dtype=np.float64)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _walk(value, name, kind):
    if isinstance(value, Module):
        src = value.named_parameters if kind == "params" else value.named_buffers
        yield from src(name + ".")
    elif isinstance(value, Tensor):
        if kind == "params" and value.requires_grad:
            yield name, value
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            yield from _walk(v, f"{name}.{i}", kind)
    elif kind == "buffers" and isinstance(value, Buffer):
        yield name, value.data


def _submodules(value):
    if isinstance(value, Module):
        yield from value.modules()
    elif isinstance(value, (list, tuple)):
        for v in value:
            yield from _submodules(v)


class Buffer:
    """Non-trainable persistent array (batch-norm running statistics)."""

    def __init__(self, data):
        self.data = np.array(data, dtype=np.float64)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class Conv2d(Module):
    def __init__(self, in_ch, out_ch, k, stride=1, padding=None, bias=True):
        if padding is None:
            padding = (k - 1) // 2
        self.in_ch, self.out_ch, self.k = in_ch, out_ch, k
        self.stride, self.padding = stride, padding
        self.weight = Tensor(np.zeros((out_ch, in_ch, k, k)), requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True) if bias else None

    def forward(self, x):
        if x.shape[1] != self.in_ch:
            raise DimensionError(f"Conv2d expects {self.in_ch} channels, got {x.shape[1]}")
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm2d(Module):
    def __init__(self, ch, eps=1e-5, momentum=0.1):
        self.ch, self.eps, self.momentum = ch, eps, momentum
        self.gamma = Tensor(np.ones(ch), requires_grad=True)
        self.beta = Tensor(np.zeros(ch), requires_grad=True)
        self.running_mean = Buffer(np.zeros(ch))
        self.running_var = Buffer(np.ones(ch))

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.ch:
            raise DimensionError(f"BatchNorm2d expects {self.ch} channels, got shape {x.shape}")
        if self.training:
            out, mean, var = T.batch_norm_train(x, self.gamma, self.beta, self.eps)
            m = x.size // self.ch
            unbiased = var * m / max(m - 1, 1)
            mom = self.momentum
            self.running_mean.data[...] = (1 - mom) * self.running_mean.data + mom * mean
            self.running_var.data[...] = (1 - mom) * self.running_var.data + mom * unbiased
            return out
        inv = 1.0 / np.sqrt(self.running_var.data + self.eps)
        xhat = (x - self.running_mean.data.reshape(1, -1, 1, 1)) * inv.reshape(1, -1, 1, 1)
        return xhat * T.reshape(self.gamma, (1, -1, 1, 1)) + T.reshape(self.beta, (1, -1, 1, 1))


class Linear(Module):
    def __init__(self, in_dim, out_dim):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = Tensor(np.zeros((out_dim, in_dim)), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def forward(self, x):
        """``x`` is (..., in_dim); returns (..., out_dim)."""
        x = T.as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise DimensionError(f"Linear expects length {self.in_dim}, got {x.shape[-1]}")
        if x.ndim == 1:
            return T.reshape(T.matmul(T.reshape(x, (1, -1)), T.transpose(self.weight)),
                             (self.out_dim,)) + self.bias
        return T.matmul(x, T.transpose(self.weight)) + self.bias


class ConvBNReLU(Module):
    def __init__(self, in_ch, out_ch, k=1, stride=1, padding=None):
        self.conv = Conv2d(in_ch, out_ch, k, stride, padding)
        self.bn = BatchNorm2d(out_ch)

    def forward(self, x):
        return T.relu(self.bn(self.conv(x)))


def relu(x):
    return T.relu(x)


def sigmoid(x):
    return T.sigmoid(x)


def global_avg_pool(x):
    return T.reduce_mean(x, axis=(2, 3), keepdims=True)


def global_max_pool(x):
    return T.reduce_max(x, axis=(2, 3), keepdims=True)


def strided_max_pool(m, axis):
    """Row-wise (``axis="row"``, C x 1) or column-wise (``"col"``, 1 x C) max of square matrices.

    ``m`` may carry leading batch axes; the result drops the reduced axis.
    """
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise DimensionError(f"strided_max_pool needs square matrices, got {m.shape}")
    if axis == "row":
        return T.reduce_max(m, axis=-1)
    if axis == "col":
        return T.reduce_max(m, axis=-2)
    raise ValueError(f"axis must be 'row' or 'col', got {axis!r}")


def upsample(x, scale=None, size=None):
    if size is None:
        if scale is None or scale < 1:
            raise DimensionError("upsample needs scale >= 1 or an explicit size")
        size = (x.shape[2] * scale, x.shape[3] * scale)
    return T.resize_bilinear(x, size)


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------

def kaiming_bound(fan_in):
    """Uniform bound giving Var = 2 / fan_in (He init for ReLU networks)."""
    return np.sqrt(6.0 / fan_in)


def init_params(module, seed):
    """Kaiming-uniform weights, zero biases, identity batch norm. Deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    for m in module.modules():
        if isinstance(m, Conv2d):
            fan_in = m.in_ch * m.k * m.k
            b = kaiming_bound(fan_in)
            m.weight.data[...] = rng.uniform(-b, b, m.weight.shape)
            if m.bias is not None:
                m.bias.data[...] = 0.0
        elif isinstance(m, Linear):
            b = kaiming_bound(m.in_dim)
            m.weight.data[...] = rng.uniform(-b, b, m.weight.shape)
            m.bias.data[...] = 0.0
        elif isinstance(m, BatchNorm2d):
            m.gamma.data[...] = 1.0
            m.beta.data[...] = 0.0
            m.running_mean.data[...] = 0.0
            m.running_var.data[...] = 1.0
    return module


# ---------------------------------------------------------------------------
# optimiser
# ---------------------------------------------------------------------------

class Adam:
    """Adam with bias correction. ``lr`` may be changed between steps."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def step(self, grads=None):
        if grads is None:
            grads = [p.grad for p in self.params]
        if len(grads) != len(self.params):
            raise DimensionError("number of gradients does not match number of parameters")
        for p, g in zip(self.params, grads):
            if g is not None and np.shape(g) != p.shape:
                raise DimensionError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g is None:
                g = np.zeros_like(p.data)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def lr_at_epoch(base_lr, decay, epoch):
    """Step decay: the rate is multiplied by ``decay`` after every completed epoch."""
    return base_lr * decay ** epoch
