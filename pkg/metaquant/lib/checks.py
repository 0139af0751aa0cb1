"""
Validation suites behind the grad-check and quantizer-check commands

Gradient checks compare autodiff against central finite differences in FP64:
per op, and for the hypernetwork gradient of a toy delayed-update system.
Quantizer checks compare the symmetric uniform quantizer against a
brute-force nearest-level search and sweep its symmetry and monotonicity.
"""

import collections
import logging

import numpy as np

from metaquant.core.train.meta import (
    TrainState,
    hypernet_grad_accumulate,
    meta_quantize_grad,
    training_step,
)
from metaquant.core.train.optim import OptimizerConfig, SlotState, apply_update, pi_array
from metaquant.hypernet.base import RecurrentState, init_hypernet

from .autodiff import functional as F
from .autodiff.tape import Tape, constant, leaf
from .autodiff.tensor import precision
from .data import synthetic_dataset
from .models import ModelSpec, build_model
from .quant import QuantConfig, dequantize, max_code, quantize

LOG = logging.getLogger(__name__)

GRAD_TOLERANCE = 1e-4
FD_STEP = 1e-6
TOY_WIDTHS = (2, 2, 2)
TOY_POINTS = 8
TOY_LR = 1.0
TOY_HIDDEN = 4

ORACLE_BITS = (2, 3, 4, 5, 6, 7, 8)
ORACLE_CASES = 100000
CASES_PER_CLIP = 100


class CheckResult(object):
    """Outcome of one check

    :attribute error: max relative error (gradient checks) or the number of
                      mismatches/violations (quantizer checks)
    :attribute details: name -> value breakdown
    """

    def __init__(self, name, error, tolerance, details=None, cases=None):
        self.name = name
        self.error = error
        self.tolerance = tolerance
        self.details = details or collections.OrderedDict()
        self.cases = cases

    @property
    def passed(self):
        return self.error <= self.tolerance

    def __repr__(self):
        return "CheckResult(%s, error=%g, %s)" % (
            self.name,
            self.error,
            "ok" if self.passed else "FAILED",
        )


def relative_error(analytic, numeric):
    """Norm-wise ||a - n|| / max(||a||, ||n||), 0 when both vanish"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def numeric_gradient(func, arrays, index, step=FD_STEP):
    """Central differences of the scalar ``func(*arrays)`` w.r.t. arrays[index]"""
    target = arrays[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    out = grad.reshape(-1)
    for pos in range(flat.size):
        saved = flat[pos]
        flat[pos] = saved + step
        upper = func(*arrays)
        flat[pos] = saved - step
        lower = func(*arrays)
        flat[pos] = saved
        out[pos] = (upper - lower) / (2 * step)
    return grad


def check_function(name, fn, arrays, seed=0, tolerance=GRAD_TOLERANCE):
    """Compare autodiff and finite differences for ``fn`` over ``arrays``

    The output is contracted with a fixed random tensor so every output
    element contributes.
    """
    rng = np.random.RandomState(seed)
    with precision("fp64"):
        arrays = [np.asarray(a, dtype=np.float64).copy() for a in arrays]
        with Tape("op-check"):
            sample = fn(*[constant(a) for a in arrays])
        weights = rng.normal(size=sample.shape)

        def objective(*values):
            with Tape("op-check"):
                out = fn(*[constant(v) for v in values])
            return float(np.sum(out.value * weights))

        with Tape("op-check") as tape:
            leaves = [leaf(a) for a in arrays]
            loss = F.sum(F.mul(fn(*leaves), constant(weights)))
            results = tape.backward(loss)
        details = collections.OrderedDict()
        for idx, node in enumerate(leaves):
            analytic = results.get(node, np.zeros_like(node.value))
            numeric = numeric_gradient(objective, arrays, idx)
            details["input%d" % idx] = relative_error(analytic, numeric)
    error = max(details.values()) if details else 0.0
    return CheckResult(name, error, tolerance, details)


def _op_cases(rng):
    labels = np.array([0, 2, 1])
    return [
        ("add", F.add, [rng.normal(size=(3, 4)), rng.normal(size=(4,))]),
        ("sub", F.sub, [rng.normal(size=(3, 4)), rng.normal(size=(3, 1))]),
        ("mul", F.mul, [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))]),
        ("div", F.div, [rng.normal(size=(3, 4)), rng.uniform(1, 2, size=(3, 4))]),
        ("matmul", F.matmul, [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))]),
        (
            "conv2d",
            lambda x, w: F.conv2d(x, w, stride=1, padding=1),
            [rng.normal(size=(2, 2, 5, 5)), rng.normal(size=(3, 2, 3, 3))],
        ),
        ("tanh", F.tanh, [rng.normal(size=(3, 4))]),
        ("sigmoid", F.sigmoid, [rng.normal(size=(3, 4))]),
        ("relu", F.relu, [rng.uniform(0.1, 1, size=(3, 4)) * rng.choice([-1, 1], size=(3, 4))]),
        ("sqrt", F.sqrt, [rng.uniform(0.5, 2, size=(3, 4))]),
        ("mean", lambda a: F.mean(a, axis=(2, 3)), [rng.normal(size=(2, 3, 2, 2))]),
        ("avgpool2d", lambda a: F.avgpool2d(a, 2), [rng.normal(size=(2, 2, 4, 4))]),
        ("downsample-pad", lambda a: F.downsample_pad(a, 4), [rng.normal(size=(2, 2, 4, 4))]),
        (
            "concat",
            lambda a, b: F.concat([a, b]),
            [rng.normal(size=(3, 2)), rng.normal(size=(3, 1))],
        ),
        ("slice", lambda a: F.slice_last(a, 1, 3), [rng.normal(size=(3, 4))]),
        (
            "softmax-cross-entropy",
            lambda a: F.softmax_cross_entropy(a, labels),
            [rng.normal(size=(3, 3))],
        ),
    ]


def check_ops(seed=0, tolerance=GRAD_TOLERANCE):
    """Finite-difference check of every differentiable op"""
    rng = np.random.RandomState(seed)
    return [
        check_function(name, fn, arrays, seed, tolerance) for name, fn, arrays in _op_cases(rng)
    ]


def _weight_grads(model, images, labels):
    """dL/dW for every quantizable layer at the current values"""
    saved = [layer.weight for layer in model.quantizable]
    try:
        with Tape("grad-check") as tape:
            for layer in model.quantizable:
                layer.weight = leaf(layer.weight.value.copy(), name=layer.name)
            weights = [layer.weight for layer in model.quantizable]
            loss = F.softmax_cross_entropy(model.forward(images, training=True), labels)
            results = tape.backward(loss)
        return [results.get(node, np.zeros_like(node.value)) for node in weights]
    finally:
        for layer, weight in zip(model.quantizable, saved):
            layer.weight = weight


def _replay_loss(state, snapshot, lr, images, labels):
    """L^{t+1} rebuilt from fixed W^t and grad^t with the current psi"""
    model = state.model
    saved = [layer.weight for layer in model.quantizable]
    try:
        with Tape("replay"):
            for layer, (weight, grad) in zip(model.quantizable, snapshot):
                quantized = meta_quantize_grad(
                    grad, constant(weight), state.hypernet, state.grad_cfg, RecurrentState()
                )
                direction = pi_array(quantized.value, SlotState(), state.opt_cfg)
                layer.weight = constant(apply_update(weight, direction, lr))
            loss = F.softmax_cross_entropy(model.forward(images, training=True), labels)
        return float(loss.value)
    finally:
        for layer, weight in zip(model.quantizable, saved):
            layer.weight = weight


def hypernet_grad_check(design, seed=0, detach=True, warmup=None, tolerance=GRAD_TOLERANCE):
    """Autodiff dL^{t+1}/dpsi against finite differences on a toy system

    The toy system is a 2-2-2 MLP (8 weights) on eight two-gaussian points,
    trained with SGD in FP64 with Q bypassed and the hypernetwork learning
    rate at zero so psi stays where the finite differences evaluate it.  The
    oracle holds W^t and grad^t fixed and perturbs psi only in the update
    that produces W^{t+1}.

    ``detach=False`` keeps the weight fed to the hypernetwork attached to its
    history; the extra path it opens is not part of the oracle, which makes
    this the negative control.  It is checked one step later (``warmup``
    defaults to 1) so that history exists.
    """
    if warmup is None:
        warmup = 0 if detach else 1
    with precision("fp64"):
        data = synthetic_dataset("two-gaussians", TOY_POINTS, seed)
        images, labels = data.images, data.labels
        spec = ModelSpec("mlp", 2, data.input_shape, widths=TOY_WIDTHS, skip_first_last=True)
        model = build_model(spec, seed)
        params = init_hypernet(design, TOY_HIDDEN, seed)
        cfg = QuantConfig(8, bypass=True)
        opt_cfg = OptimizerConfig("sgd", lr=TOY_LR, psi_lr=0.0)
        state = TrainState(model, "meta", opt_cfg, cfg, params, detach=detach, seed=seed)

        for _ in range(warmup):
            training_step(state, images, labels)

        snapshot = [
            (layer.weight.value.copy(), grad)
            for layer, grad in zip(model.quantizable, _weight_grads(model, images, labels))
        ]
        training_step(state, images, labels)

        with state.tape:
            weights = [layer.weight for layer in model.quantizable]
            loss = F.softmax_cross_entropy(model.forward(images, training=True), labels)
            results = state.tape.backward(loss, retain=state.retain_marks(), wrt=weights)
        analytic = hypernet_grad_accumulate(results, params)

        lr = opt_cfg.lr_at(0)
        objective_arrays = params.values()
        details = collections.OrderedDict()
        for name, value in objective_arrays.items():

            def objective(trial, name=name):
                params.assign(name, trial)
                return _replay_loss(state, snapshot, lr, images, labels)

            numeric = numeric_gradient(objective, [value.copy()], 0)
            params.assign(name, value)
            details[name] = relative_error(analytic.get(name, np.zeros_like(value)), numeric)

    error = max(details.values()) if details else 0.0
    label = "%s%s" % (design, "" if detach else " (history kept)")
    result = CheckResult(label, error, tolerance, details)
    LOG.debug("%r", result)
    return result


def oracle_codes(x, clip, bits):
    """Brute-force nearest level of clip(x, c) on {c*k/L}, ties away from zero

    Candidates are scanned by descending |k| so that the first minimum found
    on a tie is the level farther from zero.
    """
    levels = max_code(bits)
    order = sorted(range(-levels, levels + 1), key=lambda k: (-abs(k), -k))
    candidates = np.array(order, dtype=np.int64)
    x = np.clip(np.asarray(x, dtype=np.float64), -clip, clip)
    grid = candidates * (clip / float(levels))
    distance = np.abs(x[:, np.newaxis] - grid[np.newaxis, :])
    return candidates[np.argmin(distance, axis=1)]


def _sweep_cases(rng, count):
    """Yield (x, c, B) groups; about a tenth of the values are exact ties"""
    groups = max(count // CASES_PER_CLIP, 1)
    for _ in range(groups):
        bits = int(rng.choice(ORACLE_BITS))
        levels = max_code(bits)
        if rng.uniform() < 0.1:
            # c = L * 2**j makes every midpoint (k + 1/2) * c / L exact
            clip = float(levels * 2.0 ** rng.randint(-4, 4))
            codes = rng.randint(-levels, levels, size=CASES_PER_CLIP)
            x = (codes + 0.5) * (clip / levels)
        else:
            clip = float(np.exp(rng.uniform(np.log(1e-3), np.log(1e3))))
            x = rng.uniform(-1.5 * clip, 1.5 * clip, size=CASES_PER_CLIP)
        yield x, clip, bits


def check_quantizer_oracle(count=ORACLE_CASES, seed=0):
    """Codes from ``quantize`` against ``oracle_codes``; error = mismatches"""
    rng = np.random.RandomState(seed)
    mismatches = 0
    cases = 0
    per_bits = collections.OrderedDict((bits, 0) for bits in ORACLE_BITS)
    for x, clip, bits in _sweep_cases(rng, count):
        got = quantize(x, clip, bits).codes
        wrong = int(np.count_nonzero(got != oracle_codes(x, clip, bits)))
        mismatches += wrong
        per_bits[bits] += wrong
        cases += len(x)
    details = collections.OrderedDict(("B=%d" % bits, n) for bits, n in per_bits.items())
    return CheckResult("oracle", mismatches, 0, details, cases)


def check_quantizer_symmetry(count=ORACLE_CASES, seed=1):
    """Q(-x) == -Q(x); error = violations"""
    rng = np.random.RandomState(seed)
    violations = 0
    cases = 0
    for x, clip, bits in _sweep_cases(rng, count):
        violations += int(
            np.count_nonzero(quantize(-x, clip, bits).codes != -quantize(x, clip, bits).codes)
        )
        cases += len(x)
    return CheckResult("symmetry", violations, 0, cases=cases)


def check_quantizer_monotonic(count=ORACLE_CASES, seed=2):
    """x1 <= x2 implies Q(x1) <= Q(x2) over sorted inputs; error = violations"""
    rng = np.random.RandomState(seed)
    violations = 0
    cases = 0
    for x, clip, bits in _sweep_cases(rng, count):
        codes = quantize(np.sort(x), clip, bits).codes
        violations += int(np.count_nonzero(np.diff(codes) < 0))
        cases += len(x)
    return CheckResult("monotonicity", violations, 0, cases=cases)


def check_quantizer_idempotent(count=ORACLE_CASES, seed=3):
    """Quantizing a de-quantized tensor again with the same c is a no-op"""
    rng = np.random.RandomState(seed)
    violations = 0
    cases = 0
    for x, clip, bits in _sweep_cases(rng, count):
        first = quantize(x, clip, bits)
        again = quantize(dequantize(first), clip, bits)
        violations += int(np.count_nonzero(again.codes != first.codes))
        cases += len(x)
    return CheckResult("idempotence", violations, 0, cases=cases)


QUANTIZER_CHECKS = collections.OrderedDict(
    [
        ("oracle", check_quantizer_oracle),
        ("symmetry", check_quantizer_symmetry),
        ("monotonicity", check_quantizer_monotonic),
        ("idempotence", check_quantizer_idempotent),
    ]
)
