"""
Delayed-update training engine

Per step t:

1. forward with the quantized weights; the weight held by each layer is
   W^t, which (from t = 1 on) is still the graph fragment built at t-1
2. backward L^t: full-precision gradients for every W^t and, through the
   fragments, the hypernetwork parameters' gradient
3. the hypernetwork parameters are updated, W^t is rebased to a leaf
4. the detached gradient is meta-quantized, refined by pi and folded into
   W^{t+1} = W^t - mu * pi(f_phi(grad, W^t)), which stays in the graph
   until the loss of step t+1 is backpropagated

``plain`` mode replaces the hypernetwork by the fixed quantizer and ``fp``
mode leaves gradients in full precision; both update with arrays only.
"""

import collections
import logging

import numpy as np

from metaquant.core.exceptions import TrainingAbort
from metaquant.hypernet.base import (
    RecurrentState,
    flatten_for_hypernet,
    hypernet_apply,
    unflatten,
)
from metaquant.lib.autodiff import functional as F
from metaquant.lib.autodiff.tape import Tape, constant, detach, leaf, rebase_leaf
from metaquant.lib.quant import fake_quantize_array

from .optim import ArrayOptimizer, SlotState, apply_update, optimizer_step_pi, pi_array

LOG = logging.getLogger(__name__)

MODES = ("meta", "plain", "fp")
RETAIN_MARK = "delayed-update:%d"


def compute_layer_grad(layer, inputs, upstream):
    """Gradient w.r.t. the latent weight of ``layer`` given dL/dy

    The forward uses the quantized weight; the weight quantizer passes
    gradient straight through.
    """
    saved = layer.weight
    layer.weight = rebase_leaf(saved)
    try:
        with Tape("layer-grad") as tape:
            out = layer.forward(constant(inputs))
            loss = F.sum(F.mul(out, constant(upstream)))
            results = tape.backward(loss, wrt=[layer.weight])
        return results.get(layer.weight, np.zeros_like(layer.weight.value))
    finally:
        layer.weight = saved


def meta_quantize_grad(grad, weight, params, cfg, state=None):
    """f_phi(grad, W) reshaped back to the layer's shape"""
    pair = flatten_for_hypernet(grad, weight)
    return unflatten(hypernet_apply(pair, params, cfg, state), pair.shape)


def delayed_weight_update(weight, direction, lr):
    """W^{t+1} = W^t - lr * direction, kept in the graph"""
    return F.sub(weight, F.scale(direction, lr))


def hypernet_grad_accumulate(results, params):
    """Hypernetwork gradients from a backward result, in parameter order

    Every layer's fragment leads to the same leaves, so the per-layer
    contributions are already summed by the backward pass.  Empty when no
    fragment was reached (step 0).
    """
    grads = collections.OrderedDict()
    if params is None:
        return grads
    for name, node in params.leaves.items():
        if node in results:
            grads[name] = results[node]
    return grads


def grad_quant_metrics(grad, quantized):
    """(mse, cosine) between a gradient and its quantized version"""
    grad = np.asarray(grad, dtype=np.float64)
    quantized = np.asarray(quantized, dtype=np.float64)
    mse = float(np.mean((grad - quantized) ** 2)) if grad.size else 0.0
    norms = np.linalg.norm(grad) * np.linalg.norm(quantized)
    if norms == 0:
        cosine = 1.0 if not np.any(grad) and not np.any(quantized) else 0.0
    else:
        cosine = float(np.clip(np.dot(grad.ravel(), quantized.ravel()) / norms, -1.0, 1.0))
    return mse, cosine


class LayerState(object):
    """Per-layer training state

    :attribute slot: pi history for the weight
    :attribute recurrent: hypernetwork cell state for this layer
    :attribute hyper_input: weight node fed to the hypernetwork when the
                            pending fragment was built (history mode only)
    """

    def __init__(self, name):
        self.name = name
        self.slot = SlotState()
        self.recurrent = RecurrentState()
        self.hyper_input = None


class StepResult(object):
    """Metrics of one training step"""

    def __init__(self, iteration, loss, layer_metrics, psi_updated):
        self.iteration = iteration
        self.loss = loss
        self.layer_metrics = layer_metrics
        self.psi_updated = psi_updated

    @property
    def grad_mse(self):
        values = [mse for mse, _ in self.layer_metrics.values()]
        return float(np.mean(values)) if values else 0.0

    @property
    def grad_cosine(self):
        values = [cos for _, cos in self.layer_metrics.values()]
        return float(np.mean(values)) if values else 1.0

    def as_dict(self):
        data = collections.OrderedDict(
            [
                ("iteration", self.iteration),
                ("train_loss", self.loss),
                ("grad_mse", self.grad_mse),
                ("grad_cosine", self.grad_cosine),
            ]
        )
        for name, (mse, cos) in self.layer_metrics.items():
            data["mse:%s" % name] = mse
            data["cos:%s" % name] = cos
        return data


class TrainState(object):
    """Everything that evolves during training

    :param mode: meta, plain or fp
    :param grad_cfg: QuantConfig for gradients (unused in fp mode)
    :param hypernet: HyperNetParams, required in meta mode
    :param detach: feed the hypernetwork the rebased weight (normal) or the
                   weight still attached to its history (debugging)
    """

    def __init__(
        self,
        model,
        mode,
        opt_cfg,
        grad_cfg=None,
        hypernet=None,
        detach=True,
        persistent_state=False,
        seed=0,
    ):
        if mode not in MODES:
            raise ValueError("Unknown training mode %r" % mode)
        if mode == "meta" and hypernet is None:
            raise ValueError("meta mode needs hypernetwork parameters")
        if mode != "fp" and grad_cfg is None:
            raise ValueError("%s mode needs a gradient quantizer config" % mode)
        self.model = model
        self.mode = mode
        self.opt_cfg = opt_cfg
        self.grad_cfg = grad_cfg
        self.hypernet = hypernet if mode == "meta" else None
        self.detach = bool(detach)
        self.persistent_state = bool(persistent_state)
        self.seed = seed
        self.layers = collections.OrderedDict(
            (layer.name, LayerState(layer.name)) for layer in model.quantizable
        )
        self.param_optimizer = ArrayOptimizer(opt_cfg)
        self.psi_optimizer = ArrayOptimizer(opt_cfg)
        self.tape = Tape("train")
        self.iteration = 0
        self.epoch = 0
        self.last_metrics = {}

    def retain_marks(self):
        """Marks whose fragments must outlive the coming backward"""
        if self.mode != "meta" or self.detach or self.iteration == 0:
            return ()
        return (RETAIN_MARK % (self.iteration - 1),)


def _update_psi(state, psi_grads):
    lr = state.opt_cfg.psi_lr_at(state.epoch)
    for name, grad in psi_grads.items():
        value = state.hypernet[name].value
        state.hypernet.assign(name, state.psi_optimizer.step(name, value, grad, lr))


def _meta_update(state, layer, layer_state, weight, grad, lr):
    base = rebase_leaf(weight)
    hyper_weight = detach(weight) if state.detach else weight
    if not state.persistent_state:
        layer_state.recurrent.reset()
    quantized = meta_quantize_grad(
        grad, hyper_weight, state.hypernet, state.grad_cfg, layer_state.recurrent
    )
    metrics = grad_quant_metrics(grad, quantized.value)
    if state.opt_cfg.weight_decay:
        decay = base.value * base.value.dtype.type(state.opt_cfg.weight_decay)
        quantized = F.add(quantized, constant(decay))
    direction = optimizer_step_pi(quantized, layer_state.slot, state.opt_cfg)
    updated = delayed_weight_update(base, direction, lr)
    state.tape.mark(updated, RETAIN_MARK % state.iteration)
    layer.weight = updated
    if not state.detach:
        layer_state.hyper_input = weight
    return metrics


def _array_update(state, layer, layer_state, weight, grad, lr):
    value = weight.value
    if state.mode == "plain":
        quantized, _ = fake_quantize_array(grad, state.grad_cfg)
    else:
        quantized = grad
    metrics = grad_quant_metrics(grad, quantized)
    if state.opt_cfg.weight_decay:
        quantized = quantized + value * value.dtype.type(state.opt_cfg.weight_decay)
    direction = pi_array(quantized, layer_state.slot, state.opt_cfg)
    layer.weight = leaf(apply_update(value, direction, lr), name=layer.name)
    return metrics


def training_step(state, images, labels):
    """One iteration over a batch

    :returns: StepResult
    :raises: TrainingAbort on a non-finite loss
    """
    model = state.model
    lr = state.opt_cfg.lr_at(state.epoch)
    with state.tape:
        logits = model.forward(images, training=True)
        loss = F.softmax_cross_entropy(logits, labels)
        loss_value = float(loss.value)
        if not np.isfinite(loss_value):
            diagnostics = dict(state.last_metrics)
            diagnostics.update(iteration=state.iteration, epoch=state.epoch, loss=loss_value)
            LOG.error("Non-finite loss at iteration %d", state.iteration)
            raise TrainingAbort("Non-finite loss at iteration %d" % state.iteration, diagnostics)
        weights = [layer.weight for layer in model.quantizable]
        results = state.tape.backward(loss, retain=state.retain_marks(), wrt=weights)

        psi_grads = hypernet_grad_accumulate(results, state.hypernet)
        if psi_grads:
            _update_psi(state, psi_grads)
        elif state.mode == "meta":
            LOG.info("No hypernetwork update at iteration %d", state.iteration)

        for layer_state in state.layers.values():
            if layer_state.hyper_input is not None:
                Tape.truncate(layer_state.hyper_input)
                layer_state.hyper_input = None

        for name, node in model.parameters():
            grad = results.get(node)
            if grad is not None:
                node.value = state.param_optimizer.step(name, node.value, grad, lr)

        layer_metrics = collections.OrderedDict()
        for layer, weight in zip(model.quantizable, weights):
            layer_state = state.layers[layer.name]
            grad = results.get(weight)
            if grad is None:
                grad = np.zeros_like(weight.value)
            if state.mode == "meta":
                metrics = _meta_update(state, layer, layer_state, weight, grad, lr)
            else:
                metrics = _array_update(state, layer, layer_state, weight, grad, lr)
            layer_metrics[layer.name] = metrics

    result = StepResult(state.iteration, loss_value, layer_metrics, bool(psi_grads))
    state.last_metrics = result.as_dict()
    state.iteration += 1
    return result
