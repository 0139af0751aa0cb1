"""
Reverse-mode tape.

Nodes are appended in creation order, so the tape is always topologically
sorted.  A backward pass frees every non-retained intermediate recorded up to
the loss; sub-graphs tagged with a retention mark listed in ``retain`` keep
their parents and contexts so a later backward can flow through them again.
This is what lets the weight update built at iteration t stay differentiable
until the loss of iteration t+1 is backpropagated.
"""

import itertools
import logging

import numpy as np

from metaquant.core.exceptions import GraphError

from .ops import REGISTRY, OpKind
from .tensor import as_tensor, check_finite

LOG = logging.getLogger(__name__)

_COUNTER = itertools.count()
_ACTIVE = []


class GraphNode(object):
    """A value in the recorded graph

    :attribute value: the forward value (numpy array)
    :attribute op: OpKind that produced it (OpKind.LEAF for leaves)
    :attribute parents: input nodes, empty for leaves
    :attribute grad: gradient slot filled by ``Tape.backward`` for leaves
    """

    __slots__ = (
        "value",
        "op",
        "parents",
        "grad",
        "leaf",
        "detached",
        "requires_grad",
        "fn",
        "index",
        "marks",
        "freed",
        "name",
        "__weakref__",
    )

    def __init__(self, value, op=OpKind.LEAF, parents=(), fn=None, requires_grad=True, name=None):
        self.value = value
        self.op = op
        self.parents = tuple(parents)
        self.grad = None
        self.leaf = not self.parents
        self.detached = False
        self.requires_grad = requires_grad
        self.fn = fn
        self.index = next(_COUNTER)
        self.marks = set()
        self.freed = False
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def free(self):
        """Release the context and parent links, keeping the value"""
        if self.leaf or self.freed:
            return
        if self.fn is not None:
            self.fn.release()
        self.fn = None
        self.parents = ()
        self.freed = True

    def __repr__(self):
        return "<GraphNode %s%s shape=%s%s>" % (
            self.op.value,
            " %s" % self.name if self.name else "",
            self.value.shape,
            " freed" if self.freed else "",
        )


def leaf(value, name=None, requires_grad=True):
    """Create a trainable leaf holding ``value`` in working precision"""
    return GraphNode(as_tensor(value), name=name, requires_grad=requires_grad)


def constant(value, name=None):
    """A leaf that never receives gradient"""
    node = GraphNode(as_tensor(value), name=name, requires_grad=False)
    node.detached = True
    return node


def detach(node):
    """New leaf sharing ``node``'s value; gradient never flows past it"""
    out = GraphNode(node.value, name=node.name, requires_grad=False)
    out.detached = True
    return out


def rebase_leaf(node, name=None):
    """Fresh trainable leaf with a copy of ``node``'s value

    The old sub-graph is no longer referenced through the returned node and
    becomes eligible for release.
    """
    return GraphNode(node.value.copy(), name=name or node.name, requires_grad=True)


def current_tape():
    """The innermost active tape"""
    if not _ACTIVE:
        raise GraphError("No active tape; record operations inside 'with Tape():'")
    return _ACTIVE[-1]


def record(op, inputs, **attrs):
    """Record ``op`` on the active tape"""
    return current_tape().record(op, inputs, **attrs)


class Tape(object):
    """Ordered list of recorded nodes with explicit retention marks"""

    def __init__(self, name=None):
        self.name = name
        self.nodes = []
        self.peak_nodes = 0

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, op, inputs, **attrs):
        """Compute ``op`` over ``inputs`` and append the result

        :raises: ShapeError if the operand shapes don't fit ``op``
        """
        try:
            fn = REGISTRY[op](**attrs)
        except KeyError:
            raise GraphError("Unknown op-kind %r" % (op,))
        values = [node.value for node in inputs]
        fn.check(*values)
        value = check_finite(fn.forward(*values), op.value)
        requires_grad = any(node.requires_grad for node in inputs)
        node = GraphNode(value, op=op, parents=inputs, fn=fn, requires_grad=requires_grad)
        if not requires_grad:
            # nothing upstream can receive gradient, keep it as a constant
            fn.release()
            node.fn = None
            node.parents = ()
            node.leaf = True
            return node
        self.nodes.append(node)
        self.peak_nodes = max(self.peak_nodes, len(self.nodes))
        return node

    @staticmethod
    def mark(node, mark):
        """Tag ``node`` and all its non-leaf ancestors with ``mark``"""
        stack = [node]
        while stack:
            current = stack.pop()
            if current.leaf or mark in current.marks:
                continue
            current.marks.add(mark)
            stack.extend(current.parents)
        return node

    @staticmethod
    def truncate(node):
        """Turn ``node`` into a constant leaf in place, cutting its history"""
        if node.fn is not None:
            node.fn.release()
        node.fn = None
        node.parents = ()
        node.leaf = True
        node.freed = False
        node.detached = True
        node.requires_grad = False
        node.marks.clear()
        return node

    @staticmethod
    def _reachable(loss):
        seen = set()
        order = []
        stack = [loss]
        while stack:
            node = stack.pop()
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            order.append(node)
            stack.extend(node.parents)
        order.sort(key=lambda n: n.index, reverse=True)
        return order

    def backward(self, loss, retain=(), wrt=()):
        """Backpropagate the scalar ``loss``

        :param retain: retention marks whose sub-graphs survive this pass
        :param wrt: extra non-leaf nodes whose gradient should be returned
        :returns: dict mapping every reachable trainable leaf (and each node in
                  ``wrt``) to its gradient
        :raises: GraphError for a non-scalar loss or a freed sub-graph
        """
        if loss.value.size != 1:
            raise GraphError("backward needs a scalar loss, got shape %s" % (loss.value.shape,))
        retain = frozenset(retain)
        wanted = set(id(node) for node in wrt)
        grads = {id(loss): np.ones_like(loss.value)}
        results = {}
        for node in self._reachable(loss):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.leaf:
                node.grad = grad
                results[node] = grad
                continue
            if node.freed:
                raise GraphError(
                    "backward reached freed node %r; retain its sub-graph with a mark" % node
                )
            if id(node) in wanted:
                results[node] = grad
            for parent, parent_grad in zip(node.parents, node.fn.backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad
        self._release(loss.index, retain)
        return results

    def _release(self, upto, retain):
        kept = []
        freed = 0
        for node in self.nodes:
            if node.index > upto or node.marks & retain:
                kept.append(node)
            else:
                node.free()
                freed += 1
        self.nodes = kept
        LOG.debug("Released %d nodes, %d retained on tape", freed, len(kept))
