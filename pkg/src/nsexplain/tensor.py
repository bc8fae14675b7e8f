"""Dense float64 matrices with reverse-mode differentiation on an explicit tape.

All numerical work in the package goes through the operations in this module.
Each operation computes eagerly with numpy; when a :class:`Tape` is open in
the current thread, the operation is also recorded so that gradients of a
scalar result can be pulled back to any matrices registered as parameters.

The same functions therefore serve both plain evaluation (no tape open) and
differentiable evaluation (inside ``with Tape() as tape:``), which keeps model
code free of duplicate eager/gradient paths.
"""

from __future__ import annotations

import threading
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import ShapeError, UsageError

Edge = tuple[int, int]

_local = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def active_tape() -> "Tape | None":
    """The tape currently open in this thread, if any."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Matrix:
    """Immutable 2-D float64 matrix stored row-major.

    Instances compare by identity (like numpy arrays); use :meth:`equals` or
    :meth:`allclose` for value comparison. The wrapped array is read-only.
    """

    __slots__ = ("_a",)

    def __init__(self, values):
        a = np.array(values, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeError(f"matrix must be 2-D, got shape {a.shape}")
        if a.size and not np.isfinite(a).all():
            raise ValueError("matrix entries must be finite")
        a.flags.writeable = False
        self._a = a

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_numpy(cls, a: np.ndarray) -> "Matrix":
        return cls(np.asarray(a, dtype=np.float64))

    @classmethod
    def from_flat(cls, rows: int, cols: int, data: Iterable[float]) -> "Matrix":
        a = np.fromiter((float(x) for x in data), dtype=np.float64)
        if a.size != rows * cols:
            raise ShapeError(f"expected {rows * cols} entries for {rows}x{cols}, got {a.size}")
        return cls(a.reshape(rows, cols))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return _wrap(np.zeros((rows, cols)))

    @classmethod
    def ones(cls, rows: int, cols: int) -> "Matrix":
        return _wrap(np.ones((rows, cols)))

    @classmethod
    def full(cls, rows: int, cols: int, value: float) -> "Matrix":
        return cls(np.full((rows, cols), float(value)))

    @classmethod
    def eye(cls, n: int) -> "Matrix":
        return _wrap(np.eye(n))

    # -- accessors ---------------------------------------------------------

    @property
    def rows(self) -> int:
        return self._a.shape[0]

    @property
    def cols(self) -> int:
        return self._a.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._a.shape  # type: ignore[return-value]

    def to_numpy(self) -> np.ndarray:
        """The wrapped array (read-only, no copy)."""
        return self._a

    def tolist(self) -> list[list[float]]:
        return self._a.tolist()

    def ravel(self) -> list[float]:
        """Entries in row-major order."""
        return self._a.ravel().tolist()

    def item(self) -> float:
        if self._a.size != 1:
            raise ShapeError(f"item() requires a 1x1 matrix, got {self.shape}")
        return float(self._a[0, 0])

    def __getitem__(self, idx: tuple[int, int]) -> float:
        i, j = idx
        return float(self._a[i, j])

    def equals(self, other: "Matrix") -> bool:
        return self.shape == other.shape and bool(np.array_equal(self._a, other._a))

    def allclose(self, other: "Matrix", rtol: float = 1e-9, atol: float = 1e-12) -> bool:
        return self.shape == other.shape and bool(
            np.allclose(self._a, other._a, rtol=rtol, atol=atol)
        )

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


def _wrap(a: np.ndarray) -> Matrix:
    """Wrap a trusted kernel output without re-validating entries."""
    m = Matrix.__new__(Matrix)
    a.flags.writeable = False
    m._a = a
    return m


class _Record:
    __slots__ = ("op", "inputs", "output", "aux")

    def __init__(self, op: str, inputs: tuple[Matrix, ...], output: Matrix, aux: Any):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.aux = aux


class Tape:
    """Ordered record of primitive operations.

    A tape is opened as a context manager and owns everything recorded while
    it is active. Tapes are single-owner: they must not be shared across
    threads, and they do not nest within a thread. Gradients flow to matrices
    registered via :meth:`parameter`.
    """

    def __init__(self):
        self._records: list[_Record] = []
        self._by_output: dict[int, _Record] = {}
        self._params: list[Matrix] = []
        self._param_ids: set[int] = set()

    def __enter__(self) -> "Tape":
        stack = _tape_stack()
        if stack:
            raise UsageError("a tape is already open in this thread; tapes do not nest")
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def parameter(self, m: Matrix) -> Matrix:
        """Mark ``m`` so that :meth:`gradients` reports its gradient."""
        if id(m) not in self._param_ids:
            self._param_ids.add(id(m))
            self._params.append(m)
        return m

    @property
    def operations(self) -> tuple[str, ...]:
        """Names of the recorded operations, in recording order."""
        return tuple(r.op for r in self._records)

    def _push(self, record: _Record) -> None:
        self._records.append(record)
        self._by_output[id(record.output)] = record

    def replay(self) -> list[Matrix]:
        """Recompute every recorded operation in order from the original leaves.

        Returns the recomputed outputs; for identical inputs these are
        bit-identical to the outputs recorded during the original run.
        """
        values: dict[int, np.ndarray] = {}
        outputs: list[Matrix] = []
        for rec in self._records:
            args = tuple(values.get(id(m), m._a) for m in rec.inputs)
            result = _FORWARD[rec.op](args, rec.aux)
            values[id(rec.output)] = result
            outputs.append(_wrap(result))
        return outputs

    def gradients(self, loss: Matrix) -> dict[Matrix, Matrix]:
        """Gradient of ``loss`` with respect to every registered parameter.

        ``loss`` must be a 1x1 output recorded on this tape. The backward
        sweep visits operations in exact reverse order of recording.
        """
        if id(loss) not in self._by_output:
            raise UsageError("loss is not an output recorded on this tape")
        if loss.shape != (1, 1):
            raise UsageError(f"loss must be a 1x1 scalar, got {loss.shape[0]}x{loss.shape[1]}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        for rec in reversed(self._records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            args = tuple(m._a for m in rec.inputs)
            for inp, ig in zip(rec.inputs, _BACKWARD[rec.op](g, args, rec.output._a, rec.aux)):
                if ig is None:
                    continue
                acc = grads.get(id(inp))
                grads[id(inp)] = ig if acc is None else acc + ig
        return {
            p: _wrap(grads[id(p)]) if id(p) in grads else Matrix.zeros(p.rows, p.cols)
            for p in self._params
        }


def _record(op: str, inputs: tuple[Matrix, ...], result: np.ndarray, aux: Any = None) -> Matrix:
    out = _wrap(result)
    tape = active_tape()
    if tape is not None:
        tape._push(_Record(op, inputs, out, aux))
    return out


def _require_same_shape(op: str, a: Matrix, b: Matrix) -> None:
    if a.shape != b.shape:
        raise ShapeError(
            f"{op}: shapes {a.rows}x{a.cols} and {b.rows}x{b.cols} do not match"
        )


# -- primitive operations ---------------------------------------------------
# Forward kernels take (input arrays, aux) so that Tape.replay can rerun them.


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product a @ b."""
    if a.cols != b.rows:
        raise ShapeError(
            f"matmul: cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}"
        )
    return _record("matmul", (a, b), a._a @ b._a)


def add(a: Matrix, b: Matrix) -> Matrix:
    _require_same_shape("add", a, b)
    return _record("add", (a, b), a._a + b._a)


def sub(a: Matrix, b: Matrix) -> Matrix:
    _require_same_shape("sub", a, b)
    return _record("sub", (a, b), a._a - b._a)


def mul(a: Matrix, b: Matrix) -> Matrix:
    """Elementwise (Hadamard) product."""
    _require_same_shape("mul", a, b)
    return _record("mul", (a, b), a._a * b._a)


def scale(a: Matrix, k: float) -> Matrix:
    """Multiply every entry by the constant ``k``."""
    k = float(k)
    if not np.isfinite(k):
        raise UsageError("scale factor must be finite")
    return _record("scale", (a,), a._a * k, aux=k)


def relu(a: Matrix) -> Matrix:
    """Elementwise max(x, 0). The subgradient at exactly 0 is 0."""
    return _record("relu", (a,), np.maximum(a._a, 0.0))


def sigmoid(a: Matrix) -> Matrix:
    with np.errstate(over="ignore"):
        result = 1.0 / (1.0 + np.exp(-a._a))
    return _record("sigmoid", (a,), result)


def rsqrt(a: Matrix) -> Matrix:
    """Elementwise x^(-1/2); entries must be strictly positive."""
    if a._a.size and a._a.min() <= 0.0:
        raise UsageError("rsqrt requires strictly positive entries")
    return _record("rsqrt", (a,), 1.0 / np.sqrt(a._a))


def transpose(a: Matrix) -> Matrix:
    return _record("transpose", (a,), a._a.T.copy())


def row_softmax(a: Matrix) -> Matrix:
    """Row-wise softmax, stabilized by subtracting each row's max."""
    if a._a.size == 0:
        raise UsageError("row_softmax requires a non-empty matrix")
    return _record("row_softmax", (a,), _softmax_kernel(a._a))


def mean_rows(a: Matrix) -> Matrix:
    """Column means as a 1 x cols row (mean pooling over rows)."""
    if a.rows == 0:
        raise UsageError("mean_rows requires at least one row")
    return _record("mean_rows", (a,), a._a.mean(axis=0, keepdims=True))


def sum_all(a: Matrix) -> Matrix:
    """Sum of all entries as a 1x1 matrix."""
    return _record("sum_all", (a,), np.array([[a._a.sum()]]))


def cross_entropy(
    logits: Matrix, labels: Sequence[int], rows: Sequence[int] | None = None
) -> Matrix:
    """Mean cross-entropy of softmax(logits) against integer labels.

    Computed via log-sum-exp so large logits cannot overflow. When ``rows``
    is given, only those rows enter the mean and ``labels[i]`` is the label
    of ``rows[i]``; otherwise labels align with all rows.
    """
    row_idx = tuple(range(logits.rows)) if rows is None else tuple(int(r) for r in rows)
    labs = tuple(int(y) for y in labels)
    if len(labs) != len(row_idx):
        raise UsageError(f"got {len(labs)} labels for {len(row_idx)} rows")
    if not row_idx:
        raise UsageError("cross_entropy requires at least one row")
    for r in row_idx:
        if not 0 <= r < logits.rows:
            raise UsageError(f"row index {r} out of range for {logits.rows} rows")
    for y in labs:
        if not 0 <= y < logits.cols:
            raise UsageError(f"label {y} out of range for {logits.cols} classes")
    aux = (row_idx, labs)
    return _record("cross_entropy", (logits,), _ce_kernel((logits._a,), aux), aux)


def scatter_edges(values: Matrix, edges: Sequence[Edge], n: int) -> Matrix:
    """Spread a 1 x E row of per-edge values onto a symmetric n x n matrix.

    ``edges`` lists undirected pairs with u < v; entry e lands at both
    (u, v) and (v, u). Equivalent to multiplying by a fixed binary selector,
    kept as its own primitive so edge masks stay a flat parameter vector.
    """
    edge_list = tuple((int(u), int(v)) for u, v in edges)
    if values.shape != (1, len(edge_list)):
        raise ShapeError(
            f"scatter_edges: values must be 1x{len(edge_list)}, got {values.rows}x{values.cols}"
        )
    seen = set()
    for u, v in edge_list:
        if not (0 <= u < v < n):
            raise UsageError(f"edge ({u}, {v}) invalid for {n} nodes (need 0 <= u < v < n)")
        if (u, v) in seen:
            raise UsageError(f"duplicate edge ({u}, {v})")
        seen.add((u, v))
    aux = (edge_list, n)
    return _record("scatter_edges", (values,), _scatter_kernel((values._a,), aux), aux)


# -- kernels (shared by eager path and Tape.replay) --------------------------


def _softmax_kernel(a: np.ndarray) -> np.ndarray:
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _ce_kernel(args: tuple[np.ndarray, ...], aux) -> np.ndarray:
    (logits,) = args
    row_idx, labs = aux
    sel = logits[list(row_idx)]
    m = sel.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(sel - m).sum(axis=1))
    picked = sel[np.arange(len(labs)), list(labs)]
    return np.array([[float(np.mean(lse - picked))]])


def _scatter_kernel(args: tuple[np.ndarray, ...], aux) -> np.ndarray:
    (values,) = args
    edge_list, n = aux
    out = np.zeros((n, n))
    if edge_list:
        us = [u for u, _ in edge_list]
        vs = [v for _, v in edge_list]
        out[us, vs] = values[0]
        out[vs, us] = values[0]
    return out


_FORWARD: dict[str, Callable[[tuple[np.ndarray, ...], Any], np.ndarray]] = {
    "matmul": lambda args, aux: args[0] @ args[1],
    "add": lambda args, aux: args[0] + args[1],
    "sub": lambda args, aux: args[0] - args[1],
    "mul": lambda args, aux: args[0] * args[1],
    "scale": lambda args, aux: args[0] * aux,
    "relu": lambda args, aux: np.maximum(args[0], 0.0),
    "sigmoid": lambda args, aux: 1.0 / (1.0 + np.exp(-args[0])),
    "rsqrt": lambda args, aux: 1.0 / np.sqrt(args[0]),
    "transpose": lambda args, aux: args[0].T.copy(),
    "row_softmax": lambda args, aux: _softmax_kernel(args[0]),
    "mean_rows": lambda args, aux: args[0].mean(axis=0, keepdims=True),
    "sum_all": lambda args, aux: np.array([[args[0].sum()]]),
    "cross_entropy": _ce_kernel,
    "scatter_edges": _scatter_kernel,
}


def _bw_matmul(g, args, out, aux):
    a, b = args
    return g @ b.T, a.T @ g


def _bw_add(g, args, out, aux):
    return g, g


def _bw_sub(g, args, out, aux):
    return g, -g


def _bw_mul(g, args, out, aux):
    a, b = args
    return g * b, g * a


def _bw_scale(g, args, out, aux):
    return (g * aux,)


def _bw_relu(g, args, out, aux):
    return (g * (args[0] > 0.0),)


def _bw_sigmoid(g, args, out, aux):
    return (g * out * (1.0 - out),)


def _bw_rsqrt(g, args, out, aux):
    return (g * (-0.5) * out / args[0],)


def _bw_transpose(g, args, out, aux):
    return (g.T.copy(),)


def _bw_row_softmax(g, args, out, aux):
    inner = (g * out).sum(axis=1, keepdims=True)
    return (out * (g - inner),)


def _bw_mean_rows(g, args, out, aux):
    rows = args[0].shape[0]
    return (np.repeat(g / rows, rows, axis=0),)


def _bw_sum_all(g, args, out, aux):
    return (np.full(args[0].shape, g[0, 0]),)


def _bw_cross_entropy(g, args, out, aux):
    (logits,) = args
    row_idx, labs = aux
    sel = logits[list(row_idx)]
    soft = _softmax_kernel(sel)
    soft[np.arange(len(labs)), list(labs)] -= 1.0
    grad = np.zeros_like(logits)
    # np.add.at handles a node listed twice in rows (accumulates both terms)
    np.add.at(grad, list(row_idx), soft * (g[0, 0] / len(row_idx)))
    return (grad,)


def _bw_scatter_edges(g, args, out, aux):
    edge_list, n = aux
    gv = np.zeros((1, len(edge_list)))
    if edge_list:
        us = [u for u, _ in edge_list]
        vs = [v for _, v in edge_list]
        gv[0] = g[us, vs] + g[vs, us]
    return (gv,)


_BACKWARD: dict[str, Callable] = {
    "matmul": _bw_matmul,
    "add": _bw_add,
    "sub": _bw_sub,
    "mul": _bw_mul,
    "scale": _bw_scale,
    "relu": _bw_relu,
    "sigmoid": _bw_sigmoid,
    "rsqrt": _bw_rsqrt,
    "transpose": _bw_transpose,
    "row_softmax": _bw_row_softmax,
    "mean_rows": _bw_mean_rows,
    "sum_all": _bw_sum_all,
    "cross_entropy": _bw_cross_entropy,
    "scatter_edges": _bw_scatter_edges,
}
