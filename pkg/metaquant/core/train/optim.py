"""
Optimization strategies (pi)

pi refines a (quantized) gradient into an update direction.  The graph form
keeps the current gradient differentiable while the optimizer history is
held constant; the array form is used where no gradient has to flow (plain
and full-precision modes, biases, the hypernetwork's own parameters).
"""

import logging

import numpy as np

from metaquant.core.exceptions import ConfigError
from metaquant.lib.autodiff import functional as F
from metaquant.lib.autodiff.tape import constant

LOG = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "momentum", "adam")


class OptimizerConfig(object):
    """Optimizer family plus its schedule

    :param kind: sgd, momentum or adam
    :param lr: learning rate mu
    :param lr_decay: mu_e = mu / (1 + lr_decay * epoch)
    :param psi_lr: learning rate of the hypernetwork parameters
    """

    def __init__(
        self,
        kind="momentum",
        lr=0.01,
        momentum=0.9,
        beta1=0.9,
        beta2=0.999,
        eps=1e-8,
        lr_decay=0.0,
        weight_decay=0.0,
        psi_lr=0.001,
    ):
        if kind not in OPTIMIZERS:
            raise ConfigError(
                "Unknown optimizer %r (expected one of %s)" % (kind, ", ".join(OPTIMIZERS))
            )
        if lr < 0:
            raise ConfigError("learning rate must be >= 0, got %r" % lr)
        if not 0 <= momentum < 1:
            raise ConfigError("momentum must be in [0, 1), got %r" % momentum)
        if not (0 < beta1 < 1 and 0 < beta2 < 1):
            raise ConfigError("adam betas must be in (0, 1)")
        if psi_lr < 0 or lr_decay < 0 or weight_decay < 0:
            raise ConfigError("psi_lr, lr_decay and weight_decay must be >= 0")
        self.kind = kind
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.lr_decay = float(lr_decay)
        self.weight_decay = float(weight_decay)
        self.psi_lr = float(psi_lr)

    def decayed(self, rate, epoch):
        return rate / (1.0 + self.lr_decay * epoch)

    def lr_at(self, epoch):
        return self.decayed(self.lr, epoch)

    def psi_lr_at(self, epoch):
        return self.decayed(self.psi_lr, epoch)

    def __repr__(self):
        return "OptimizerConfig(%s, lr=%g)" % (self.kind, self.lr)


class SlotState(object):
    """Optimizer history for one tensor"""

    def __init__(self):
        self.step = 0
        self.velocity = None
        self.first = None
        self.second = None

    def zeros(self, like):
        return np.zeros_like(like)


def optimizer_step_pi(grad, state, cfg):
    """Differentiable update direction for the graph node ``grad``"""
    if cfg.kind == "sgd":
        state.step += 1
        return grad
    dtype = grad.value.dtype
    if cfg.kind == "momentum":
        previous = state.velocity if state.velocity is not None else state.zeros(grad.value)
        velocity = F.add(F.scale(constant(previous), cfg.momentum), grad)
        state.velocity = np.array(velocity.value, copy=True)
        state.step += 1
        return velocity
    state.step += 1
    first = state.first if state.first is not None else state.zeros(grad.value)
    second = state.second if state.second is not None else state.zeros(grad.value)
    first = F.add(F.scale(constant(first), cfg.beta1), F.scale(grad, 1 - cfg.beta1))
    second = F.add(
        F.scale(constant(second), cfg.beta2), F.scale(F.mul(grad, grad), 1 - cfg.beta2)
    )
    state.first = np.array(first.value, copy=True)
    state.second = np.array(second.value, copy=True)
    first_hat = F.scale(first, 1.0 / (1 - cfg.beta1 ** state.step))
    second_hat = F.scale(second, 1.0 / (1 - cfg.beta2 ** state.step))
    denom = F.add(F.sqrt(second_hat), constant(np.asarray(cfg.eps, dtype=dtype)))
    return F.div(first_hat, denom)


def pi_array(grad, state, cfg):
    """Array form of ``optimizer_step_pi``"""
    state.step += 1
    if cfg.kind == "sgd":
        return grad
    dtype = grad.dtype.type
    if cfg.kind == "momentum":
        previous = state.velocity if state.velocity is not None else state.zeros(grad)
        state.velocity = previous * dtype(cfg.momentum) + grad
        return state.velocity
    first = state.first if state.first is not None else state.zeros(grad)
    second = state.second if state.second is not None else state.zeros(grad)
    state.first = first * dtype(cfg.beta1) + grad * dtype(1 - cfg.beta1)
    state.second = second * dtype(cfg.beta2) + (grad * grad) * dtype(1 - cfg.beta2)
    first_hat = state.first * dtype(1.0 / (1 - cfg.beta1 ** state.step))
    second_hat = state.second * dtype(1.0 / (1 - cfg.beta2 ** state.step))
    return first_hat / (np.sqrt(second_hat) + dtype(cfg.eps))


def apply_update(value, direction, lr):
    """value - lr * direction in the value's precision"""
    return value - value.dtype.type(lr) * direction


class ArrayOptimizer(object):
    """Named tensors updated in place of the graph, one SlotState each"""

    def __init__(self, cfg, weight_decay=0.0):
        self.cfg = cfg
        self.weight_decay = float(weight_decay)
        self.slots = {}

    def slot(self, name):
        if name not in self.slots:
            self.slots[name] = SlotState()
        return self.slots[name]

    def direction(self, name, value, grad):
        if self.weight_decay:
            grad = grad + value * value.dtype.type(self.weight_decay)
        return pi_array(grad, self.slot(name), self.cfg)

    def step(self, name, value, grad, lr):
        """New value of tensor ``name`` after one update"""
        return apply_update(value, self.direction(name, value, grad), lr)
