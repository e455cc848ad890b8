"""Dense tensors with a define-by-run tape for reverse-mode autodiff.

Tensors wrap row-major contiguous float32 or float64 numpy arrays. While a
tape is active (``with new_tape():``), every differentiable operation whose
inputs require gradients appends one entry holding its output tensors and a
backward rule; ``backward(loss)`` replays the entries once, in reverse.
Tapes are rebuilt on every forward pass, so there is no graph caching and
no cross-step state.

Every operation checks its result for NaN/Inf and raises ``NumericError``
instead of letting non-finite values propagate.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

from ibert.errors import NumericError, ShapeError

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """A dense array plus an optional gradient of the same shape."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, dtype=None, requires_grad=False):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    # Thin operator sugar; the real implementations live in ibert.numerics.ops.
    def __add__(self, other):
        from ibert.numerics import ops

        return ops.add(self, other)

    def __radd__(self, other):
        from ibert.numerics import ops

        return ops.add(self, other)

    def __sub__(self, other):
        from ibert.numerics import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from ibert.numerics import ops

        return ops.mul(self, other)

    def __rmul__(self, other):
        from ibert.numerics import ops

        return ops.mul(self, other)

    def __neg__(self):
        from ibert.numerics import ops

        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from ibert.numerics import ops

        return ops.matmul(self, other)


def _wrap(arr):
    """Fast construction for op outputs (arr is already a float ndarray)."""
    t = Tensor.__new__(Tensor)
    t.data = arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)
    t.requires_grad = False
    t.grad = None
    return t


class Tape:
    """Topologically ordered record of operations for one forward pass."""

    __slots__ = ("entries",)

    def __init__(self):
        # each entry: (outputs: tuple[Tensor, ...], backward_fn(*output_grads))
        self.entries = []


_TAPES: list[Tape] = []


@contextlib.contextmanager
def new_tape():
    """Activate a fresh tape for the duration of the block."""
    tape = Tape()
    _TAPES.append(tape)
    try:
        yield tape
    finally:
        _TAPES.pop()


def active_tape():
    return _TAPES[-1] if _TAPES else None


def record(inputs, outputs, backward_fn):
    """Append a tape entry if recording is on and any input carries grad."""
    tape = active_tape()
    if tape is None:
        return
    if not any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        return
    for out in outputs:
        out.requires_grad = True
    tape.entries.append((outputs, backward_fn))


def accumulate(t, g):
    """Add ``g`` into ``t.grad`` (no-op for constants)."""
    if not (isinstance(t, Tensor) and t.requires_grad):
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def backward(loss, leaves=None):
    """Populate ``.grad`` on everything ``loss`` depends on.

    Walks the innermost active tape exactly once in reverse. ``leaves``,
    when given, are parameter tensors that must end up with a gradient;
    any leaf the loss does not reach gets an all-zero gradient.
    """
    tape = active_tape()
    if tape is None:
        raise NumericError("backward() requires an active tape")
    if not isinstance(loss, Tensor) or loss.size != 1:
        shape = getattr(loss, "shape", None)
        raise ShapeError(f"backward() needs a scalar loss tensor, got shape {shape}")
    loss.grad = np.ones_like(loss.data)
    for outputs, fn in reversed(tape.entries):
        grads = [o.grad for o in outputs]
        if all(g is None for g in grads):
            continue
        grads = [
            g if g is not None else np.zeros_like(o.data)
            for g, o in zip(grads, outputs)
        ]
        fn(*grads)
    if leaves is not None:
        for leaf in leaves:
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)


def check_finite(arr, op):
    """Raise NumericError if ``arr`` holds NaN or Inf."""
    if arr.size == 0:
        return
    s = arr.sum()
    if not math.isfinite(s):
        # A finite array can overflow its sum; only fail on real bad values.
        if not np.isfinite(arr).all():
            raise NumericError(f"{op} produced non-finite values")
