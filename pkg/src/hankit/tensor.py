"""Dense float64 vector/matrix primitives with reverse-mode gradients.

Everything the encoder and classifier compute is built from the operations
in this module. Each op validates shapes, checks its output for non-finite
values, and, when an input is attached to a tape, records a vector-Jacobian
closure so ``Tape.backward`` can accumulate gradients into every leaf.
``finite_diff_check`` is the numeric oracle used to validate the analytic
gradients in tests.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import HankitError

__all__ = [
    "DimensionError",
    "DegenerateMaskError",
    "NonFiniteError",
    "TapeError",
    "Tensor",
    "Param",
    "Tape",
    "Binding",
    "mat",
    "vec",
    "linear",
    "relu",
    "softmax_masked",
    "layer_norm",
    "matvec",
    "vecmat",
    "concat",
    "add",
    "mul",
    "scale",
    "reduce_sum",
    "as_row",
    "dropout",
    "cross_entropy",
    "finite_diff_check",
]


class DimensionError(HankitError):
    """Operand shapes do not line up."""


class DegenerateMaskError(HankitError):
    """A masked softmax received a mask with no unmasked positions."""


class NonFiniteError(HankitError):
    """A primitive produced NaN or Inf."""


class TapeError(HankitError):
    """Tape misuse: reused tape, detached or non-scalar root, mixed tapes."""


class Tensor:
    """A float64 array (scalar, vector, or matrix) on an optional tape."""

    __slots__ = ("data", "grad", "tape")

    def __init__(self, data, tape: "Tape | None" = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise DimensionError(f"tensors are at most 2-d, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, taped={self.tape is not None})"


def mat(data, tape: "Tape | None" = None) -> Tensor:
    t = Tensor(data, tape)
    if t.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {t.shape}")
    return t


def vec(data, tape: "Tape | None" = None) -> Tensor:
    t = Tensor(data, tape)
    if t.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {t.shape}")
    return t


class Param:
    """A named trainable buffer. The optimizer mutates ``data`` in place."""

    __slots__ = ("name", "data")

    def __init__(self, name: str, data):
        self.name = name
        self.data = np.asarray(data, dtype=np.float64)

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.data.shape})"


class Tape:
    """Ordered record of primitive applications for one backward pass."""

    def __init__(self) -> None:
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._spent = False

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, parents: Sequence[Tensor], vjp: Callable) -> None:
        if self._spent:
            raise TapeError("tape already consumed by backward; use a fresh tape")
        self._records.append((out, tuple(parents), vjp))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(node) into ``grad`` of every node on the tape.

        The root must be a scalar recorded on this tape, and a tape can be
        walked only once: replaying would double-count accumulations.
        """
        if self._spent:
            raise TapeError("backward was already called on this tape")
        if loss.tape is not self:
            raise TapeError("backward root is not recorded on this tape")
        if loss.data.size != 1:
            raise TapeError(f"backward needs a scalar root, got shape {loss.data.shape}")
        self._spent = True
        loss.grad = np.ones_like(loss.data)
        for out, parents, vjp in reversed(self._records):
            if out.grad is None:
                continue
            for parent, g in zip(parents, vjp(out.grad)):
                if g is None:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=np.float64)
                else:
                    parent.grad = parent.grad + g


class Binding:
    """Leaf nodes for a parameter set on one tape (or none, for inference).

    Binding the parameters once per step makes gradient accumulation across
    every use within the step automatic; after ``Tape.backward`` the result
    is read back per parameter, with exactly one buffer per parameter.
    """

    def __init__(self, params: Iterable[Param], tape: Tape | None = None):
        self.tape = tape
        self._nodes: dict[int, Tensor] = {}
        self._params: list[Param] = []
        for p in params:
            if id(p) in self._nodes:
                continue
            self._nodes[id(p)] = Tensor(p.data, tape)
            self._params.append(p)

    def __getitem__(self, param: Param) -> Tensor:
        try:
            return self._nodes[id(param)]
        except KeyError:
            raise TapeError(f"parameter {param.name!r} is not bound") from None

    def grad(self, param: Param) -> np.ndarray:
        node = self[param]
        if node.grad is None:
            return np.zeros_like(param.data)
        return node.grad

    def grads(self) -> dict[str, np.ndarray]:
        return {p.name: self.grad(p) for p in self._params}


def _common_tape(parents: Sequence[Tensor]) -> Tape | None:
    tape = None
    for p in parents:
        if p.tape is None:
            continue
        if tape is None:
            tape = p.tape
        elif tape is not p.tape:
            raise TapeError("operands were recorded on different tapes")
    return tape


def _apply(name: str, out_data, parents: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    out_data = np.asarray(out_data, dtype=np.float64)
    if not np.all(np.isfinite(out_data)):
        raise NonFiniteError(f"{name} produced non-finite values")
    tape = _common_tape(parents)
    out = Tensor(out_data, tape)
    if tape is not None:
        tape.record(out, parents, vjp)
    return out


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w + b`` for a vector, or row-wise for a matrix."""
    if x.ndim not in (1, 2) or w.ndim != 2 or b.ndim != 1:
        raise DimensionError(
            f"linear expects x 1-d or 2-d, w 2-d, b 1-d; got {x.shape}, {w.shape}, {b.shape}"
        )
    if x.shape[-1] != w.shape[0] or b.shape[0] != w.shape[1]:
        raise DimensionError(f"linear shape mismatch: x {x.shape} @ w {w.shape} + b {b.shape}")
    xd, wd = x.data, w.data

    def vjp(g):
        if xd.ndim == 2:
            return g @ wd.T, xd.T @ g, g.sum(axis=0)
        return g @ wd.T, np.outer(xd, g), g

    return _apply("linear", xd @ wd + b.data, (x, w, b), vjp)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x). The subgradient at exactly 0 is taken as 0."""
    on = x.data > 0

    def vjp(g):
        return (g * on,)

    return _apply("relu", np.where(on, x.data, 0.0), (x,), vjp)


def softmax_masked(logits: Tensor, mask) -> Tensor:
    """Max-subtracted softmax over unmasked positions; masked outputs are exactly 0."""
    if logits.ndim != 1:
        raise DimensionError(f"softmax_masked expects a vector, got shape {logits.shape}")
    m = np.asarray(mask, dtype=bool)
    if m.shape != logits.shape:
        raise DimensionError(f"mask shape {m.shape} does not match logits {logits.shape}")
    if not m.any():
        raise DegenerateMaskError("softmax mask has no unmasked positions")
    z = logits.data[m]
    e = np.exp(z - z.max())
    out = np.zeros_like(logits.data)
    out[m] = e / e.sum()
    w = out[m]

    def vjp(g):
        gm = g[m]
        s = float(gm @ w)
        gl = np.zeros_like(logits.data)
        gl[m] = w * (gm - s)
        return (gl,)

    return _apply("softmax_masked", out, (logits,), vjp)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit population variance, then scale and shift.

    2-d inputs are normalized row by row. ``eps`` sits under the square root;
    0 is allowed (exact normalization) but a constant row then divides by zero.
    """
    if x.ndim not in (1, 2) or gain.ndim != 1 or bias.ndim != 1:
        raise DimensionError(
            f"layer_norm expects x 1-d or 2-d, gain and bias 1-d; got {x.shape}, {gain.shape}, {bias.shape}"
        )
    d = x.shape[-1]
    if gain.shape[0] != d or bias.shape[0] != d:
        raise DimensionError(f"gain {gain.shape} / bias {bias.shape} do not match width {d}")
    if eps < 0:
        raise ValueError(f"layer_norm eps must be >= 0, got {eps}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    gd = gain.data

    def vjp(g):
        gxh = g * gd
        mean1 = gxh.mean(axis=-1, keepdims=True)
        mean2 = (gxh * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (gxh - mean1 - xhat * mean2)
        if xd.ndim == 2:
            return gx, (g * xhat).sum(axis=0), g.sum(axis=0)
        return gx, g * xhat, g

    return _apply("layer_norm", out, (x, gain, bias), vjp)


def matvec(m: Tensor, v: Tensor) -> Tensor:
    """``m @ v``: one dot product per matrix row."""
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise DimensionError(f"matvec shape mismatch: {m.shape} @ {v.shape}")
    md, vd = m.data, v.data

    def vjp(g):
        return np.outer(g, vd), md.T @ g

    return _apply("matvec", md @ vd, (m, v), vjp)


def vecmat(v: Tensor, m: Tensor) -> Tensor:
    """``v @ m``: a weighted sum of matrix rows."""
    if v.ndim != 1 or m.ndim != 2 or v.shape[0] != m.shape[0]:
        raise DimensionError(f"vecmat shape mismatch: {v.shape} @ {m.shape}")
    md, vd = m.data, v.data

    def vjp(g):
        return md @ g, np.outer(vd, g)

    return _apply("vecmat", vd @ md, (v, m), vjp)


def concat(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 1 or b.ndim != 1:
        raise DimensionError(f"concat expects two vectors, got {a.shape} and {b.shape}")
    na = a.shape[0]

    def vjp(g):
        return g[:na], g[na:]

    return _apply("concat", np.concatenate([a.data, b.data]), (a, b), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def vjp(g):
        return g, g

    return _apply("add", a.data + b.data, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        return g * bd, g * ad

    return _apply("mul", ad * bd, (a, b), vjp)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def vjp(g):
        return (g * c,)

    return _apply("scale", x.data * c, (x,), vjp)


def reduce_sum(x: Tensor) -> Tensor:
    """Sum of all entries, as a scalar."""
    shape = x.shape

    def vjp(g):
        return (np.full(shape, float(g)),)

    return _apply("reduce_sum", np.asarray(x.data.sum()), (x,), vjp)


def as_row(v: Tensor) -> Tensor:
    """View a length-d vector as a 1-by-d matrix."""
    if v.ndim != 1:
        raise DimensionError(f"as_row expects a vector, got shape {v.shape}")

    def vjp(g):
        return (g[0],)

    return _apply("as_row", v.data.reshape(1, -1), (v,), vjp)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None = None, training: bool = False) -> Tensor:
    """Inverted dropout; the identity when not training or rate is 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)

    def vjp(g):
        return (g * keep,)

    return _apply("dropout", x.data * keep, (x,), vjp)


def cross_entropy(probs: Tensor, y: int) -> Tensor:
    """Negative log of ``probs[y]``, with the probability clamped at 1e-12."""
    if probs.ndim != 1:
        raise DimensionError(f"cross_entropy expects a probability vector, got {probs.shape}")
    if not 0 <= y < probs.shape[0]:
        raise ValueError(f"label {y} out of range for {probs.shape[0]} classes")
    p = float(probs.data[y])
    clamped = max(p, 1e-12)

    def vjp(g):
        gp = np.zeros_like(probs.data)
        if p >= 1e-12:
            gp[y] = -float(g) / p
        return (gp,)

    return _apply("cross_entropy", np.asarray(-np.log(clamped)), (probs,), vjp)


def finite_diff_check(
    f: Callable[[Binding], Tensor],
    params: Sequence[Param],
    eps: float = 1e-5,
    exclude: Mapping[str, np.ndarray] | None = None,
) -> float:
    """Max relative error between tape gradients of ``f`` and central differences.

    ``f`` maps a Binding of ``params`` to a scalar Tensor. The relative error
    denominator is max(|analytic|, |numeric|, 1e-8) per coordinate. ``exclude``
    optionally maps a parameter name to a boolean array marking coordinates to
    skip (e.g. ReLU kinks, where the two sides genuinely disagree).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps {eps} outside [1e-7, 1e-3]")
    params = list(params)
    tape = Tape()
    binding = Binding(params, tape)
    tape.backward(f(binding))
    analytic = {id(p): binding.grad(p).reshape(-1).copy() for p in params}

    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        ana = analytic[id(p)]
        skip = None
        if exclude is not None and p.name in exclude:
            skip = np.asarray(exclude[p.name], dtype=bool).reshape(-1)
        for i in range(flat.size):
            if skip is not None and skip[i]:
                continue
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(Binding(params)).data)
            flat[i] = orig - eps
            fm = float(f(Binding(params)).data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NonFiniteError(f"f evaluated non-finite near {p.name}[{i}]")
            num = (fp - fm) / (2.0 * eps)
            err = abs(ana[i] - num) / max(abs(ana[i]), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
