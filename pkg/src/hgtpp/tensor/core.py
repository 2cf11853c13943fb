"""Tensors, parameters and the computation record used for reverse-mode autodiff.

Every differentiable primitive appends one :class:`Record` to the ambient
:class:`Tape` while recording is enabled.  :func:`backward` replays the tape in
exact reverse order of recording, and a tape can be replayed only once.
"""
import contextlib
import itertools
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform to a primitive's rule."""


class DomainError(ValueError):
    """A primitive was applied outside its mathematical domain."""


class TapeError(RuntimeError):
    """Misuse of the computation record (non-scalar root, replayed tape, ...)."""


_ids = itertools.count()


class Tensor:
    """Dense float64 array with an optional link into the computation record."""

    __array_priority__ = 100

    def __init__(self, value, requires_grad=False):
        self.value = np.array(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.id = next(_ids)
        self.tape = None

    @classmethod
    def wrap(cls, value):
        """Adopt a freshly computed array without copying it."""
        t = cls.__new__(cls)
        t.value = value if isinstance(value, np.ndarray) and value.dtype == np.float64 \
            else np.asarray(value, dtype=np.float64)
        t.requires_grad = False
        t.id = next(_ids)
        t.tape = None
        return t

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def item(self):
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float(self.value)

    def numpy(self):
        return self.value

    def detach(self):
        return Tensor(self.value.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; the primitive catalog lives in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __getitem__(self, idx):
        from . import ops
        return ops.gather(self, idx)


class Parameter(Tensor):
    """A named leaf tensor whose gradient accumulates in ``grad``."""

    def __init__(self, name, value):
        super().__init__(value, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


@dataclass
class Record:
    kind: str
    inputs: tuple
    output: Tensor
    vjp: object
    saved: dict = field(default_factory=dict)


class Tape:
    """Ordered list of recorded primitive applications."""

    def __init__(self):
        self.records = []
        self.consumed = False

    def __len__(self):
        return len(self.records)

    def append(self, record):
        if self.consumed:
            raise TapeError("cannot record onto a consumed tape")
        record.output.tape = self
        self.records.append(record)


_current = [None]


def current_tape():
    return _current[0]


@contextlib.contextmanager
def recording(tape=None):
    """Record primitives onto ``tape`` (a fresh one by default) inside the block."""
    tape = Tape() if tape is None else tape
    previous = _current[0]
    _current[0] = tape
    try:
        yield tape
    finally:
        _current[0] = previous


@contextlib.contextmanager
def no_recording():
    previous = _current[0]
    _current[0] = None
    try:
        yield
    finally:
        _current[0] = previous


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def emit(kind, inputs, value, vjp, **saved):
    """Wrap a forward result and record it if any input needs a gradient."""
    out = Tensor.wrap(value)
    tape = _current[0]
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.append(Record(kind, tuple(inputs), out, vjp, saved))
    return out


def backward(root):
    """Accumulate d(root)/d(param) into every reachable Parameter's ``grad``."""
    if root.value.size != 1:
        raise TapeError(f"backward needs a scalar root, got shape {root.shape}")
    tape = root.tape
    if tape is None:
        if isinstance(root, Parameter):
            root.grad = root.grad + np.ones_like(root.value)
            return
        raise TapeError("root was not produced under recording")
    if tape.consumed:
        raise TapeError("computation record already consumed by a previous backward")
    grads = {root.id: np.ones_like(root.value)}
    for rec in reversed(tape.records):
        g = grads.pop(rec.output.id, None)
        if g is None:
            continue
        input_grads = rec.vjp(g)
        for inp, ig in zip(rec.inputs, input_grads):
            if ig is None or not inp.requires_grad:
                continue
            if isinstance(inp, Parameter):
                inp.grad = inp.grad + ig
            elif inp.id in grads:
                grads[inp.id] = grads[inp.id] + ig
            else:
                grads[inp.id] = ig
    tape.records = []
    tape.consumed = True
