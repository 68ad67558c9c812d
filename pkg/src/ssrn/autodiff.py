"""Reverse-mode automatic differentiation over dense float64 matrices.

Every value in the compute graph is a 2-D numpy array of float64. Vectors are
carried as single-row or single-column matrices; scalars as 1x1. There is no
broadcasting beyond the few ops that define it explicitly (row_scale,
add_rowvec), which keeps every gradient rule exact and auditable.

Each op accepts either Node operands or plain ndarrays. If no operand is a
Node the op returns the raw numpy result and builds no graph. That cheap
forward-only path is what the finite-difference checker drives, so the checked
code is byte-for-byte the same code that training differentiates.

backward() walks the graph in a fixed reverse-topological order derived from
construction order, so repeated calls on the same graph accumulate gradients
in the same sequence and produce bit-identical results.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

from .errors import ShapeError, ValidationError

_node_ids = itertools.count()

# Rows whose norm underflows to zero in cosine_rows get similarity 0 and a
# zero gradient; this counter makes those silent fallbacks observable.
_degenerate_rows = {"cosine": 0}


def degenerate_cosine_count() -> int:
    return _degenerate_rows["cosine"]


def reset_degenerate_cosine_count() -> None:
    _degenerate_rows["cosine"] = 0


def as_matrix(data: Any) -> np.ndarray:
    """Coerce to a C-contiguous 2-D float64 array; scalars become 1x1."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    if arr.size == 0:
        raise ShapeError(f"empty matrix of shape {arr.shape}")
    return arr


class Node:
    """One vertex of the compute graph: a value plus how to push gradients back."""

    __slots__ = ("value", "parents", "name", "nid", "grad", "_bwd")

    def __init__(
        self,
        value: np.ndarray,
        parents: tuple["Node", ...] = (),
        bwd: Callable[[np.ndarray], None] | None = None,
        name: str | None = None,
    ):
        self.value = value
        self.parents = parents
        self.name = name
        self.nid = next(_node_ids)
        self.grad: np.ndarray | None = None
        self._bwd = bwd

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"<Node #{self.nid} {self.value.shape[0]}x{self.value.shape[1]}{tag}>"


def leaf(value: Any, name: str | None = None) -> Node:
    """Wrap an array as a graph input. Named leaves show up in backward()'s dict."""
    return Node(as_matrix(value), name=name)


def _is_node(x: Any) -> bool:
    return isinstance(x, Node)


def _val(x: Any) -> np.ndarray:
    if isinstance(x, Node):
        return x.value
    if isinstance(x, np.ndarray) and x.ndim == 2:
        return x
    # scalars (e.g. a loss term from the forward-only path) become 1x1 here
    # so loss arithmetic composes the same way on both paths
    return as_matrix(x)


def _lift(x: Any) -> Node:
    return x if isinstance(x, Node) else Node(as_matrix(x))


def _acc(node: Node, g: np.ndarray) -> None:
    node.grad = g.copy() if node.grad is None else node.grad + g


def _require_same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b):
    av, bv = _val(a), _val(b)
    _require_same_shape(av, bv, "add")
    out = av + bv
    if not (_is_node(a) or _is_node(b)):
        return out
    a, b = _lift(a), _lift(b)

    def bwd(g):
        _acc(a, g)
        _acc(b, g)

    return Node(out, (a, b), bwd)


def mul(a, b):
    """Hadamard product."""
    av, bv = _val(a), _val(b)
    _require_same_shape(av, bv, "mul")
    out = av * bv
    if not (_is_node(a) or _is_node(b)):
        return out
    a, b = _lift(a), _lift(b)

    def bwd(g):
        _acc(a, g * b.value)
        _acc(b, g * a.value)

    return Node(out, (a, b), bwd)


def scale(a, c: float):
    """Multiply every entry by the python float c."""
    c = float(c)
    av = _val(a)
    out = av * c
    if not _is_node(a):
        return out

    def bwd(g):
        _acc(a, g * c)

    return Node(out, (a,), bwd)


def shift(a, c: float):
    """Add the python float c to every entry."""
    c = float(c)
    av = _val(a)
    out = av + c
    if not _is_node(a):
        return out

    def bwd(g):
        _acc(a, g)

    return Node(out, (a,), bwd)


def concat_cols(a, b):
    av, bv = _val(a), _val(b)
    if av.shape[0] != bv.shape[0]:
        raise ShapeError(
            f"concat_cols: row counts differ, {av.shape} vs {bv.shape}"
        )
    out = np.concatenate([av, bv], axis=1)
    if not (_is_node(a) or _is_node(b)):
        return out
    a, b = _lift(a), _lift(b)
    split = av.shape[1]

    def bwd(g):
        _acc(a, g[:, :split])
        _acc(b, g[:, split:])

    return Node(out, (a, b), bwd)


def slice_cols(a, j0: int, j1: int):
    av = _val(a)
    if not (0 <= j0 < j1 <= av.shape[1]):
        raise IndexError(
            f"slice_cols: columns [{j0}:{j1}] out of range for shape {av.shape}"
        )
    out = av[:, j0:j1].copy()
    if not _is_node(a):
        return out

    def bwd(g):
        full = np.zeros_like(a.value)
        full[:, j0:j1] = g
        _acc(a, full)

    return Node(out, (a,), bwd)


def row(a, i: int):
    """Extract row i as a 1xC matrix."""
    av = _val(a)
    if not (0 <= i < av.shape[0]):
        raise IndexError(f"row: index {i} out of range for shape {av.shape}")
    out = av[i : i + 1, :].copy()
    if not _is_node(a):
        return out

    def bwd(g):
        full = np.zeros_like(a.value)
        full[i, :] = g[0]
        _acc(a, full)

    return Node(out, (a,), bwd)


def element(a, i: int, j: int):
    """Extract entry (i, j) as a 1x1 matrix."""
    av = _val(a)
    if not (0 <= i < av.shape[0] and 0 <= j < av.shape[1]):
        raise IndexError(
            f"element: position ({i}, {j}) out of range for shape {av.shape}"
        )
    out = av[i : i + 1, j : j + 1].copy()
    if not _is_node(a):
        return out

    def bwd(g):
        full = np.zeros_like(a.value)
        full[i, j] = g[0, 0]
        _acc(a, full)

    return Node(out, (a,), bwd)


def stack_rows(rows):
    """Stack L single-row matrices into an LxC matrix."""
    rows = list(rows)
    if not rows:
        raise ValidationError("stack_rows: need at least one row")
    vals = [_val(r) for r in rows]
    cols = vals[0].shape[1]
    for v in vals:
        if v.shape != (1, cols):
            raise ShapeError(
                f"stack_rows: expected rows of shape (1, {cols}), got {v.shape}"
            )
    out = np.concatenate(vals, axis=0)
    if not any(_is_node(r) for r in rows):
        return out
    nodes = tuple(_lift(r) for r in rows)

    def bwd(g):
        for idx, r in enumerate(nodes):
            _acc(r, g[idx : idx + 1, :])

    return Node(out, nodes, bwd)


def row_scale(v, m):
    """Scale row i of m by the scalar v[i, 0]; v is Mx1, m is MxD."""
    vv, mv = _val(v), _val(m)
    if vv.ndim != 2 or vv.shape[1] != 1 or vv.shape[0] != mv.shape[0]:
        raise ShapeError(
            f"row_scale: need column vector matching rows, got {vv.shape} and {mv.shape}"
        )
    out = vv * mv
    if not (_is_node(v) or _is_node(m)):
        return out
    v, m = _lift(v), _lift(m)

    def bwd(g):
        _acc(v, (g * m.value).sum(axis=1, keepdims=True))
        _acc(m, g * v.value)

    return Node(out, (v, m), bwd)


def add_rowvec(m, b):
    """Add the 1xD row vector b to every row of the MxD matrix m."""
    mv, bv = _val(m), _val(b)
    if bv.shape != (1, mv.shape[1]):
        raise ShapeError(
            f"add_rowvec: bias shape {bv.shape} does not match matrix {mv.shape}"
        )
    out = mv + bv
    if not (_is_node(m) or _is_node(b)):
        return out
    m, b = _lift(m), _lift(b)

    def bwd(g):
        _acc(m, g)
        _acc(b, g.sum(axis=0, keepdims=True))

    return Node(out, (m, b), bwd)


def sum_all(a):
    """Sum of all entries. Node in, 1x1 Node out; array in, float out."""
    av = _val(a)
    if not _is_node(a):
        return float(av.sum())
    out = np.array([[av.sum()]])

    def bwd(g):
        _acc(a, np.full_like(a.value, g[0, 0]))

    return Node(out, (a,), bwd)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    av, bv = _val(a), _val(b)
    if av.shape[1] != bv.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {av.shape} @ {bv.shape}"
        )
    out = av @ bv
    if not (_is_node(a) or _is_node(b)):
        return out
    a, b = _lift(a), _lift(b)

    def bwd(g):
        _acc(a, g @ b.value.T)
        _acc(b, a.value.T @ g)

    return Node(out, (a, b), bwd)


def transpose(a):
    av = _val(a)
    out = av.T.copy()
    if not _is_node(a):
        return out

    def bwd(g):
        _acc(a, g.T)

    return Node(out, (a,), bwd)


# ---------------------------------------------------------------------------
# nonlinearities


def _k_sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    av = _val(a)
    out = _k_sigmoid(av)
    if not _is_node(a):
        return out

    def bwd(g):
        _acc(a, g * out * (1.0 - out))

    return Node(out, (a,), bwd)


def tanh(a):
    av = _val(a)
    out = np.tanh(av)
    if not _is_node(a):
        return out

    def bwd(g):
        _acc(a, g * (1.0 - out * out))

    return Node(out, (a,), bwd)


def _k_softmax_rows(m: np.ndarray) -> np.ndarray:
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows(a):
    """Softmax independently over each row. Shift-invariant by construction."""
    av = _val(a)
    out = _k_softmax_rows(av)
    if not _is_node(a):
        return out

    def bwd(g):
        # ds_j = s_j * (g_j - sum_k g_k s_k), per row
        inner = (g * out).sum(axis=1, keepdims=True)
        _acc(a, out * (g - inner))

    return Node(out, (a,), bwd)


def softmax_cols(a):
    """Softmax independently over each column."""
    if not _is_node(a):
        return _k_softmax_rows(_val(a).T).T.copy()
    return transpose(softmax_rows(transpose(a)))


def cosine_rows(a, b):
    """Row-wise cosine similarity of two MxD matrices, returned as Mx1.

    A row where either operand has zero norm gets similarity 0 and a zero
    gradient; such rows are tallied in degenerate_cosine_count().
    """
    av, bv = _val(a), _val(b)
    _require_same_shape(av, bv, "cosine_rows")
    na2 = (av * av).sum(axis=1, keepdims=True)
    nb2 = (bv * bv).sum(axis=1, keepdims=True)
    denom = np.sqrt(na2 * nb2)
    ok = denom > 0.0
    n_bad = int((~ok).sum())
    if n_bad:
        _degenerate_rows["cosine"] += n_bad
    safe = np.where(ok, denom, 1.0)
    dots = (av * bv).sum(axis=1, keepdims=True)
    out = np.where(ok, dots / safe, 0.0)
    if not (_is_node(a) or _is_node(b)):
        return out
    a, b = _lift(a), _lift(b)
    na2s = np.where(na2 > 0.0, na2, 1.0)
    nb2s = np.where(nb2 > 0.0, nb2, 1.0)

    def bwd(g):
        gm = np.where(ok, g, 0.0)
        _acc(a, gm * (b.value / safe - out * a.value / na2s))
        _acc(b, gm * (a.value / safe - out * b.value / nb2s))

    return Node(out, (a, b), bwd)


# ---------------------------------------------------------------------------
# losses


def _as_flat_vector(v: np.ndarray, op: str) -> np.ndarray:
    if v.ndim != 2 or (v.shape[0] != 1 and v.shape[1] != 1):
        raise ShapeError(f"{op}: expected a row or column vector, got {v.shape}")
    return v.ravel()


def cross_entropy(logits, target: int):
    """Negative log-likelihood of class `target` under softmax(logits).

    Computed directly from the logits through a shifted log-sum-exp, so the
    value stays finite and accurate even when the logits span hundreds of
    units. logits is a row or column vector; target indexes into it.
    """
    lv = _val(logits)
    flat = _as_flat_vector(lv, "cross_entropy")
    target = int(target)
    if not (0 <= target < flat.size):
        raise IndexError(
            f"cross_entropy: target {target} out of range for {flat.size} classes"
        )
    mx = flat.max()
    shifted = flat - mx
    lse = mx + math.log(np.exp(shifted).sum())
    loss = lse - flat[target]
    if not _is_node(logits):
        return float(loss)
    probs = np.exp(shifted)
    probs /= probs.sum()

    def bwd(g):
        d = probs.copy()
        d[target] -= 1.0
        _acc(logits, g[0, 0] * d.reshape(lv.shape))

    return Node(np.array([[loss]]), (logits,), bwd)


def smooth_l1(pred, target):
    """Summed huber penalty: 0.5*d^2 where |d| < 1, |d| - 0.5 elsewhere."""
    pv, tv = _val(pred), _val(target)
    _require_same_shape(pv, tv, "smooth_l1")
    d = pv - tv
    ad = np.abs(d)
    small = ad < 1.0
    per = np.where(small, 0.5 * d * d, ad - 0.5)
    total = per.sum()
    if not (_is_node(pred) or _is_node(target)):
        return float(total)
    pred, target = _lift(pred), _lift(target)

    def bwd(g):
        dd = g[0, 0] * np.where(small, d, np.sign(d))
        _acc(pred, dd)
        _acc(target, -dd)

    return Node(np.array([[total]]), (pred, target), bwd)


# ---------------------------------------------------------------------------
# graph traversal


def _topo_order(root: Node) -> list[Node]:
    """Ancestors of root, parents before children, in construction order."""
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node.parents):
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node) -> dict[str, np.ndarray]:
    """Accumulate gradients of a scalar loss into every ancestor node.

    Clears any gradients from previous calls first, so each call stands on
    its own. Returns {name: gradient} for every named leaf that the loss
    depends on; gradients also remain on node.grad for inspection.
    """
    if not isinstance(loss, Node):
        raise ValidationError("backward: loss must be a Node")
    if loss.value.size != 1:
        raise ValidationError(
            f"backward: loss must be scalar, got shape {loss.value.shape}"
        )
    order = _topo_order(loss)
    for n in order:
        n.grad = None
    loss.grad = np.ones((1, 1))
    for n in reversed(order):
        if n.grad is not None and n._bwd is not None:
            n._bwd(n.grad)
    named: dict[str, np.ndarray] = {}
    for n in order:
        if n.name is not None and not n.parents:
            if n.name in named:
                raise ValidationError(
                    f"backward: two leaves share the name {n.name!r}"
                )
            named[n.name] = n.grad if n.grad is not None else np.zeros_like(n.value)
    return named


# ---------------------------------------------------------------------------
# gradient verification


@dataclass(frozen=True)
class GradReport:
    """Outcome of comparing analytic gradients against central differences."""

    eps: float
    tolerance: float
    per_param: dict[str, float]
    worst_param: str
    max_rel_error: float
    failures: tuple[str, ...]
    passed: bool

    def summary_lines(self) -> list[str]:
        lines = [
            f"{name}: max relative error {err:.3e}"
            for name, err in sorted(self.per_param.items())
        ]
        lines += list(self.failures)
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(
            f"{verdict}: worst {self.worst_param} at {self.max_rel_error:.3e}"
            f" (tolerance {self.tolerance:.1e}, eps {self.eps:.1e})"
        )
        return lines


def grad_check(
    builder: Callable[[Mapping[str, Any]], Any],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    tolerance: float = 1e-3,
) -> GradReport:
    """Check analytic gradients of builder's scalar output against central
    finite differences over every element of every parameter.

    builder is called once with named Node leaves to get the analytic
    gradients, then repeatedly with plain arrays (the forward-only path) for
    the two-sided difference quotients. Disagreement is measured per element
    as |ad - fd| / max(1, |ad|, |fd|) and the per-parameter maximum is kept.

    Parameters the output does not depend on are fine: both sides agree on
    zero. A non-finite loss at any probe point is recorded as a failure.
    """
    if eps <= 0:
        raise ValidationError(f"grad_check: eps must be positive, got {eps}")
    if tolerance <= 0:
        raise ValidationError(
            f"grad_check: tolerance must be positive, got {tolerance}"
        )
    base = {k: as_matrix(v) for k, v in params.items()}

    out = builder({k: leaf(v, name=k) for k, v in base.items()})
    if not isinstance(out, Node):
        raise ValidationError("grad_check: builder must return a Node")
    grads = backward(out)
    failures: list[str] = []
    if not math.isfinite(float(out.value[0, 0])):
        failures.append(f"loss is non-finite at the base point: {out.value[0, 0]}")

    work = {k: v.copy() for k, v in base.items()}

    def probe() -> float:
        val = builder(work)
        if isinstance(val, Node):
            val = val.value
        return float(np.asarray(val).item())

    per_param: dict[str, float] = {}
    for name, arr in base.items():
        g_ad = grads.get(name)
        if g_ad is None:
            g_ad = np.zeros_like(arr)
        worst = 0.0
        w = work[name]
        for idx in np.ndindex(arr.shape):
            orig = w[idx]
            w[idx] = orig + eps
            f_plus = probe()
            w[idx] = orig - eps
            f_minus = probe()
            w[idx] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                failures.append(f"non-finite loss while probing {name}[{idx}]")
                continue
            g_fd = (f_plus - f_minus) / (2.0 * eps)
            ga = float(g_ad[idx])
            rel = abs(ga - g_fd) / max(1.0, abs(ga), abs(g_fd))
            if rel > worst:
                worst = rel
        per_param[name] = worst
        if worst > tolerance:
            failures.append(
                f"{name}: max relative error {worst:.3e} exceeds tolerance {tolerance:.1e}"
            )
    worst_param = max(per_param, key=per_param.get) if per_param else ""
    max_rel = per_param.get(worst_param, 0.0)
    passed = not failures
    return GradReport(
        eps=eps,
        tolerance=tolerance,
        per_param=per_param,
        worst_param=worst_param,
        max_rel_error=max_rel,
        failures=tuple(failures),
        passed=passed,
    )
