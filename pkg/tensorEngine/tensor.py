"""
Tensor and Tape

This module provides the substrate of all math in the repository:
1. Tensor - a dense rank-1/2/3 array of 64-bit floats with an optional gradient buffer
2. Tape - the ordered record of operations executed while the tape is active
3. backward - reverse-mode differentiation over a recorded tape

Operations are recorded implicitly. Open a tape with ``with Tape() as tape:``
and every op in tensorEngine.ops whose inputs require gradients appends a node
to it. With no active tape nothing is recorded, which is how evaluation runs.

EXAMPLE:
```
w = Tensor([[1.0, 2.0]], requires_grad=True)
with Tape() as tape:
    loss = ops.sum_all(ops.mul(w, w))
backward(tape, loss)
print(w.grad)  # [[2. 4.]]
```
"""

import threading
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from tensorEngine.errors import ContractError, DimensionError

MAX_RANK = 3

# A backward rule maps the output gradient to one gradient per input
# (None for inputs that receive no gradient).
BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_local = threading.local()


class Tensor:
    """
    Dense tensor of 64-bit floats.

    Values are read-only after creation; only the grad buffer is written to,
    and only by ``backward``.

    Args:
        values: Nested sequence or array of numbers (rank 1 to 3)
        requires_grad (bool): Whether backward should populate ``grad``
        name (str, optional): Label used in error messages and checkpoints
        copy (bool): Copy the input array (ops pass False for fresh results)
    """

    __slots__ = ("values", "grad", "requires_grad", "name")

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None, copy: bool = True):
        array = np.array(values, dtype=np.float64, copy=True) if copy else np.asarray(values, dtype=np.float64)
        if array.ndim < 1 or array.ndim > MAX_RANK:
            raise DimensionError(f"Tensor rank must be 1, 2 or 3, got shape {array.shape}")
        if 0 in array.shape:
            raise DimensionError(f"Tensor dimensions must be positive, got shape {array.shape}")
        array.flags.writeable = False
        self.values = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def rank(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        """Return the value of a single-element tensor as a Python float."""
        if self.values.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.values)

    def detach(self) -> "Tensor":
        """Return a tensor sharing these values that is not tracked by any tape."""
        return Tensor(self.values, requires_grad=False, name=self.name, copy=False)

    def __repr__(self) -> str:
        label = f"{self.name}: " if self.name else ""
        return f"Tensor({label}shape={self.shape}, requires_grad={self.requires_grad})"


class TapeNode:
    """One recorded operation: its inputs, its output, and its backward rule."""

    __slots__ = ("op", "inputs", "output", "backward_rule")

    def __init__(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward_rule: BackwardRule):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_rule = backward_rule

    @property
    def input_ids(self) -> Tuple[int, ...]:
        return tuple(id(tensor) for tensor in self.inputs)

    @property
    def output_id(self) -> int:
        return id(self.output)


class Tape:
    """
    Ordered list of recorded operations.

    Nodes are appended in execution order, so every input is produced before
    its consumer and the list is already a topological order of the graph.
    A tape may be differentiated once; ``reset`` clears it for reuse.
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self.consumed = False
        self._previous: Optional["Tape"] = None

    def __enter__(self) -> "Tape":
        self._previous = getattr(_local, "tape", None)
        _local.tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _local.tape = self._previous
        self._previous = None

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward_rule: BackwardRule) -> None:
        if self.consumed:
            raise ContractError("Cannot record onto a tape that has already been differentiated; call reset()")
        self.nodes.append(TapeNode(op, inputs, output, backward_rule))

    def reset(self) -> None:
        """Drop all recorded nodes so the tape can be used again."""
        self.nodes = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.nodes)


def active_tape() -> Optional[Tape]:
    """Return the tape currently recording on this thread, if any."""
    return getattr(_local, "tape", None)


class no_grad:
    """Context manager that suspends recording on the active tape."""

    def __enter__(self) -> None:
        self._saved = getattr(_local, "tape", None)
        _local.tape = None

    def __exit__(self, exc_type, exc, tb) -> None:
        _local.tape = self._saved


def make_result(op: str, inputs: Tuple[Tensor, ...], values: np.ndarray, backward_rule: BackwardRule) -> Tensor:
    """
    Wrap an op's output array and record it on the active tape when needed.

    Args:
        op (str): Op name stored on the node (shows up in gradient check reports)
        inputs (tuple): Input tensors, in the order the backward rule returns grads
        values (np.ndarray): The freshly computed output array
        backward_rule (callable): Maps the output grad to per-input grads

    Returns:
        Tensor: The output tensor, requiring grad if any input does
    """
    tape = active_tape()
    needs_grad = tape is not None and any(tensor.requires_grad for tensor in inputs)
    output = Tensor(values, requires_grad=needs_grad, copy=False)
    if needs_grad:
        tape.record(op, inputs, output, backward_rule)
    return output


def backward(tape: Tape, loss: Tensor, params: Optional[Iterable[Tensor]] = None) -> None:
    """
    Populate gradients of ``loss`` with respect to every tensor on the tape.

    Every tensor on the tape, and every tensor in ``params``, has its grad reset
    to zeros first, so parameters the loss does not reach end with a zero grad.
    Nodes are then visited in exact reverse recording order.

    Args:
        tape (Tape): The tape the loss was recorded on
        loss (Tensor): Single-element loss tensor
        params (iterable, optional): Tensors whose grads must be populated even if unreachable

    Raises:
        ContractError: If the loss is not a scalar or the tape was already differentiated
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise ContractError("backward was already called on this tape; call tape.reset() before reusing it")

    for tensor in params or ():
        tensor.zero_grad()
    for node in tape.nodes:
        for tensor in node.inputs:
            if tensor.requires_grad:
                tensor.zero_grad()
        node.output.zero_grad()
    loss.grad = np.ones_like(loss.values)

    for node in reversed(tape.nodes):
        input_grads = node.backward_rule(node.output.grad)
        for tensor, grad in zip(node.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            tensor.grad += grad
    tape.consumed = True
