"""Dense double-precision tensors with tape-based reverse-mode differentiation.

Just enough machinery to express recurrent encoders with gates, attention
softmaxes and a vocabulary cross-entropy: matrix products, concatenation,
elementwise arithmetic, sigmoid/tanh, softmax, embedding lookup, and a fused
affine combination used by the LSTM cells. Every op validates that its output
is finite; NaN or Inf anywhere is treated as a hard error rather than a value.

A ``Tape`` records operations in creation order (which is automatically a
topological order) and replays them backwards exactly once. A tape and the
tensors recorded on it belong to a single thread; independent tapes may run
concurrently.
"""

from __future__ import annotations

import threading

import numpy as np

# Sigmoid/tanh saturate to machine precision well inside +/-40; clamping the
# pre-activation there prevents exp overflow without changing results.
CLAMP = 40.0

_EPS_GUARD = 1e-8


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


class TapeError(RuntimeError):
    """Backward was requested for a tensor not recorded on the tape."""


_tls = threading.local()


def _stack() -> list:
    try:
        return _tls.stack
    except AttributeError:
        _tls.stack = []
        return _tls.stack


def active_tape():
    """The innermost tape open on this thread, or None."""
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of operations for one backward pass.

    Usage::

        with Tape() as tape:
            loss = build_loss(...)
            tape.backward(loss)
    """

    __slots__ = ("_nodes",)

    def __init__(self):
        self._nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _stack().pop()
        assert popped is self
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: "Tensor") -> None:
        """Populate ``grad`` on every tracked tensor that ``loss`` depends on.

        ``loss`` must be a scalar recorded on this tape. Each recorded node is
        visited exactly once, in reverse creation order, so repeated calls on
        identical inputs produce bit-identical gradients.
        """
        if loss.data.shape != ():
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        nid = loss._nid
        if nid < 0 or nid >= len(self._nodes) or self._nodes[nid] is not loss:
            raise TapeError("loss tensor is not recorded on this tape")
        loss.grad = np.ones((), dtype=np.float64)
        for i in range(nid, -1, -1):
            node = self._nodes[i]
            if node.grad is not None:
                node._backward(node.grad)


class Tensor:
    """A dense float64 array, optionally participating in differentiation.

    ``tracked`` tensors accumulate into ``grad`` during a backward pass.
    Parameters are long-lived tracked leaves; op outputs become tracked
    nodes automatically while a tape is open.
    """

    __slots__ = ("data", "grad", "tracked", "_parents", "_backward", "_nid")

    def __init__(self, data, tracked: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor initialised with non-finite values")
        self.data = arr
        self.grad = None
        self.tracked = tracked
        self._parents = ()
        self._backward = None
        self._nid = -1

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def value(self) -> np.ndarray:
        """Detached copy of the current values."""
        return self.data.copy()

    def accum(self, g: np.ndarray) -> None:
        """Add ``g`` into this tensor's gradient buffer."""
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, tracked={self.tracked})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data) -> Tensor:
    """A tracked leaf tensor (model weight)."""
    return Tensor(data, tracked=True)


def constant(data) -> Tensor:
    """An untracked tensor; gradients never flow into it."""
    return Tensor(data)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def _out(data: np.ndarray, parents: tuple, backward) -> Tensor:
    """Wrap an op result, recording it when a tape is open and an input is tracked."""
    if not np.isfinite(data).all():
        raise NonFiniteError("operation produced non-finite values")
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    t._parents = ()
    t._backward = None
    t._nid = -1
    tape = active_tape()
    if tape is not None and any(p.tracked for p in parents):
        t.tracked = True
        t._parents = parents
        t._backward = backward
        t._nid = len(tape._nodes)
        tape._nodes.append(t)
    else:
        t.tracked = False
    return t


# ---------------------------------------------------------------------------
# core operations
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; both gradients pass through unchanged."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: {a.data.shape} vs {b.data.shape}")

    def backward(g):
        if a.tracked:
            a.accum(g)
        if b.tracked:
            b.accum(g)

    return _out(a.data + b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: {a.data.shape} vs {b.data.shape}")

    def backward(g):
        if a.tracked:
            a.accum(g * b.data)
        if b.tracked:
            b.accum(g * a.data)

    return _out(a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a Python scalar constant."""
    c = float(c)

    def backward(g):
        if a.tracked:
            a.accum(g * c)

    return _out(a.data * c, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product.

    Supports 2D@2D, 2D@1D, 1D@2D and 1D@1D (dot product, scalar output).
    Backward follows a.grad += g b^T, b.grad += a^T g, specialised per case.
    """
    ad, bd = a.data, b.data
    an, bn = ad.ndim, bd.ndim
    if an == 0 or bn == 0 or an > 2 or bn > 2:
        raise ShapeError(f"matmul supports 1D/2D operands, got {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != bd.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {ad.shape} @ {bd.shape}")

    out = ad @ bd

    if an == 2 and bn == 2:
        def backward(g):
            if a.tracked:
                a.accum(g @ bd.T)
            if b.tracked:
                b.accum(ad.T @ g)
    elif an == 2 and bn == 1:
        def backward(g):
            if a.tracked:
                a.accum(np.outer(g, bd))
            if b.tracked:
                b.accum(ad.T @ g)
    elif an == 1 and bn == 2:
        def backward(g):
            if a.tracked:
                a.accum(bd @ g)
            if b.tracked:
                b.accum(np.outer(ad, g))
    else:
        def backward(g):
            if a.tracked:
                a.accum(g * bd)
            if b.tracked:
                b.accum(g * ad)

    return _out(out, (a, b), backward)


def concat(a: Tensor, b: Tensor, axis: int = 0) -> Tensor:
    """Concatenate along ``axis``; backward splits the gradient at the seam."""
    ad, bd = a.data, b.data
    if ad.ndim != bd.ndim:
        raise ShapeError(f"concat: rank mismatch {ad.shape} vs {bd.shape}")
    for dim in range(ad.ndim):
        if dim != axis % ad.ndim and ad.shape[dim] != bd.shape[dim]:
            raise ShapeError(f"concat: non-axis dims differ, {ad.shape} vs {bd.shape}")
    split = ad.shape[axis]

    def backward(g):
        ga, gb = np.split(g, [split], axis=axis)
        if a.tracked:
            a.accum(ga)
        if b.tracked:
            b.accum(gb)

    return _out(np.concatenate([ad, bd], axis=axis), (a, b), backward)


def stack_cols(vectors) -> Tensor:
    """Stack equal-length 1D tensors as the columns of a matrix."""
    vectors = tuple(vectors)
    if not vectors:
        raise ShapeError("stack_cols of zero vectors")
    n = vectors[0].data.shape[0]
    for v in vectors:
        if v.data.shape != (n,):
            raise ShapeError("stack_cols needs equal-length 1D tensors")

    def backward(g):
        for j, v in enumerate(vectors):
            if v.tracked:
                v.accum(g[:, j])

    return _out(np.stack([v.data for v in vectors], axis=1), vectors, backward)


def add_col(m: Tensor, v: Tensor) -> Tensor:
    """Add a column vector to every column of a matrix."""
    md, vd = m.data, v.data
    if md.ndim != 2 or vd.ndim != 1 or md.shape[0] != vd.shape[0]:
        raise ShapeError(f"add_col: {md.shape} + {vd.shape}")

    def backward(g):
        if m.tracked:
            m.accum(g)
        if v.tracked:
            v.accum(g.sum(axis=1))

    return _out(md + vd[:, None], (m, v), backward)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function with the pre-activation clamped to +/-CLAMP."""
    y = 1.0 / (1.0 + np.exp(-np.clip(x.data, -CLAMP, CLAMP)))

    def backward(g):
        if x.tracked:
            x.accum(g * y * (1.0 - y))

    return _out(y, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    """Hyperbolic tangent with the pre-activation clamped to +/-CLAMP."""
    y = np.tanh(np.clip(x.data, -CLAMP, CLAMP))

    def backward(g):
        if x.tracked:
            x.accum(g * (1.0 - y * y))

    return _out(y, (x,), backward)


def softmax(x: Tensor) -> Tensor:
    """Normalised exponentials of a 1D tensor, computed with max-subtraction."""
    xd = x.data
    if xd.ndim != 1 or xd.shape[0] == 0:
        raise ShapeError(f"softmax needs a non-empty 1D tensor, got shape {xd.shape}")
    e = np.exp(xd - xd.max())
    s = e / e.sum()

    def backward(g):
        if x.tracked:
            x.accum(s * (g - np.dot(g, s)))

    return _out(s, (x,), backward)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Negative log of the softmax probability assigned to ``target``.

    When the target holds the maximum logit the loss is log1p of the summed
    competitor terms, so a near-zero loss keeps full relative precision
    instead of cancelling two large logs.
    """
    xd = logits.data
    if xd.ndim != 1:
        raise ShapeError(f"cross_entropy needs 1D logits, got shape {xd.shape}")
    n = xd.shape[0]
    target = int(target)
    if not 0 <= target < n:
        raise IndexError(f"target {target} out of range for {n} classes")
    m = xd.max()
    e = np.exp(xd - m)
    if xd[target] == m:
        et = e[target]
        e[target] = 0.0
        rest = e.sum()
        e[target] = et
        z = rest + et
        loss = np.log1p(rest)
    else:
        z = e.sum()
        loss = m + np.log(z) - xd[target]

    def backward(g):
        if logits.tracked:
            gl = e / z * g
            gl[target] -= g
            logits.accum(gl)

    return _out(np.asarray(np.float64(loss)), (logits,), backward)


def embedding_lookup(table: Tensor, index: int) -> Tensor:
    """Copy of row ``index``; backward scatters the gradient into that row."""
    td = table.data
    index = int(index)
    if not 0 <= index < td.shape[0]:
        raise IndexError(f"embedding index {index} out of range for table {td.shape}")

    def backward(g):
        if table.tracked:
            if table.grad is None:
                table.grad = np.zeros_like(td)
            table.grad[index] += g

    return _out(td[index].copy(), (table,), backward)


def affine(bias: Tensor, mat_terms=(), elem_terms=()) -> Tensor:
    """Fused sum ``bias + sum_i W_i @ x_i + sum_j a_j * b_j`` over 1D outputs.

    One tape node per gate pre-activation instead of half a dozen keeps the
    per-timestep graph small, which dominates training throughput.
    """
    out = bias.data.copy()
    n = out.shape[0]
    mat_terms = tuple(mat_terms)
    elem_terms = tuple(elem_terms)
    for W, x in mat_terms:
        out += W.data @ x.data
    for u, v in elem_terms:
        out += u.data * v.data
    if out.shape != (n,):
        raise ShapeError("affine terms disagree on output length")

    parents = (bias,)
    for W, x in mat_terms:
        parents += (W, x)
    for u, v in elem_terms:
        parents += (u, v)

    def backward(g):
        if bias.tracked:
            bias.accum(g)
        for W, x in mat_terms:
            if W.tracked:
                W.accum(np.outer(g, x.data))
            if x.tracked:
                x.accum(W.data.T @ g)
        for u, v in elem_terms:
            if u.tracked:
                u.accum(g * v.data)
            if v.tracked:
                v.accum(g * u.data)

    return _out(out, parents, backward)


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------

def numeric_gradient(f, params, eps: float = 1e-5):
    """Central-difference gradient of ``f(params)`` for each parameter.

    ``f`` must return a scalar Tensor and must be deterministic. The forward
    passes run without a tape, so nothing is recorded.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grads = []
    for p in params:
        flat = p.data.reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f(params).item()
            flat[i] = orig - eps
            fm = f(params).item()
            flat[i] = orig
            g[i] = (fp - fm) / (2.0 * eps)
        grads.append(g.reshape(p.data.shape))
    return grads


def grad_check(f, params, eps: float = 1e-5) -> float:
    """Worst relative disagreement between tape and central-difference gradients.

    Returns max over every coordinate of |analytic - numeric| divided by
    max(|analytic|, |numeric|, 1e-8).
    """
    params = list(params)
    zero_grads(params)
    with Tape() as tape:
        loss = f(params)
        tape.backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    zero_grads(params)

    numeric = numeric_gradient(f, params, eps)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), _EPS_GUARD)
        err = np.abs(a - n) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
