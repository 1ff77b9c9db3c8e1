"""Dense tensor 연산과 reverse-mode 자동 미분.

각 연산은 순전파 시점에 ``Node`` 를 만들어 부모 텐서와 국소 미분 함수를 기록합니다.
``backward`` 는 loss 에서 시작해 위상 정렬 역순으로 gradient 를 누적한 뒤,
사용한 그래프를 해제합니다 (영구 tape 없음).
"""

from __future__ import annotations

import contextvars
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from fair_meta_dg.domain.exceptions import (
    GraphConsumedError,
    NonFiniteError,
    ShapeError,
)

LOG_FLOOR = 1e-12
PROB_EPS = 1e-7

ArrayLike = np.ndarray | float | int | Sequence[Any]
BackwardFn = Callable[[np.ndarray], tuple[np.ndarray | None, ...]]

_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "grad_enabled", default=True
)


@contextmanager
def no_grad() -> Iterator[None]:
    """블록 안에서 생성되는 텐서는 그래프에 기록되지 않습니다."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


@dataclass(eq=False)
class Node:
    """계산 그래프의 한 노드. backward 가 끝나면 release 됩니다."""

    op: str
    parents: tuple[Tensor, ...]
    backward: BackwardFn | None
    consumed: bool = False

    def release(self) -> None:
        self.parents = ()
        self.backward = None
        self.consumed = True


class Tensor:
    """float64 dense tensor. ``node`` 가 없으면 상수(또는 leaf)입니다."""

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, *, requires_grad: bool = False) -> None:
        self.data: np.ndarray = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.node: Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() requires a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        kind = self.node.op if self.node else ("param" if self.requires_grad else "const")
        return f"Tensor(shape={self.shape}, op={kind})"

    # --- operators ---

    def __add__(self, other: Tensor | ArrayLike) -> Tensor:
        return add(self, _as_tensor(other))

    def __radd__(self, other: ArrayLike) -> Tensor:
        return add(_as_tensor(other), self)

    def __sub__(self, other: Tensor | ArrayLike) -> Tensor:
        return sub(self, _as_tensor(other))

    def __rsub__(self, other: ArrayLike) -> Tensor:
        return sub(_as_tensor(other), self)

    def __mul__(self, other: Tensor | ArrayLike) -> Tensor:
        if isinstance(other, (int, float)):
            return scalar_mul(self, float(other))
        return mul(self, _as_tensor(other))

    def __rmul__(self, other: ArrayLike) -> Tensor:
        if isinstance(other, (int, float)):
            return scalar_mul(self, float(other))
        return mul(_as_tensor(other), self)

    def __truediv__(self, other: Tensor | ArrayLike) -> Tensor:
        if isinstance(other, (int, float)):
            return scalar_mul(self, 1.0 / float(other))
        return div(self, _as_tensor(other))

    def __matmul__(self, other: Tensor | ArrayLike) -> Tensor:
        return matmul(self, _as_tensor(other))

    def __neg__(self) -> Tensor:
        return scalar_mul(self, -1.0)

    def __getitem__(self, key: Any) -> Tensor:
        return slice_(self, key)

    # --- method aliases ---

    def relu(self) -> Tensor:
        return relu(self)

    def sigmoid(self) -> Tensor:
        return sigmoid(self)

    def softmax(self) -> Tensor:
        return softmax(self)

    def log(self) -> Tensor:
        return log(self)

    def exp(self) -> Tensor:
        return exp(self)

    def abs(self) -> Tensor:
        return abs_(self)

    def sum(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return mean(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """학습 가능한 leaf 텐서. optimizer 가 ``data`` 를 직접 갱신합니다."""

    def __init__(self, data: ArrayLike) -> None:
        super().__init__(data, requires_grad=True)

    def __repr__(self) -> str:
        return f"Parameter(shape={self.shape})"


def _as_tensor(value: Tensor | ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(
    data: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn, op: str
) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.node = None
    if not _grad_enabled.get():
        return out
    for parent in parents:
        if parent.node is not None and parent.node.consumed:
            raise GraphConsumedError(f"{op} received a tensor from a consumed graph")
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = Node(op=op, parents=parents, backward=backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from e


def _expand_reduced(
    grad: np.ndarray, shape: tuple[int, ...], axis: int | None, keepdims: bool
) -> np.ndarray:
    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


# --- elementwise binary ---


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)
    return _record(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("sub", a, b)
    return _record(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("mul", a, b)
    return _record(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        ),
        "mul",
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    """a / b. 분모는 ``LOG_FLOOR`` 이상으로 clamp 됩니다 (양수 분모 전용)."""
    _broadcast_shape("div", a, b)
    denom = np.maximum(b.data, LOG_FLOOR)
    active = b.data > LOG_FLOOR

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ga = g / denom
        gb = np.where(active, -g * a.data / (denom * denom), 0.0)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(a.data / denom, (a, b), backward, "div")


def scalar_mul(a: Tensor, k: float) -> Tensor:
    return _record(a.data * k, (a,), lambda g: (g * k,), "scalar_mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _record(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


# --- elementwise unary ---


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _record(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _record(out, (a,), backward, "softmax")


def log(a: Tensor) -> Tensor:
    clamped = np.maximum(a.data, LOG_FLOOR)
    active = a.data > LOG_FLOOR
    return _record(
        np.log(clamped),
        (a,),
        lambda g: (np.where(active, g / clamped, 0.0),),
        "log",
    )


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,), "exp")


def abs_(a: Tensor) -> Tensor:
    # sign(0) == 0: 0 에서의 subgradient 는 0
    return _record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def clamp(a: Tensor, low: float, high: float) -> Tensor:
    inside = (a.data >= low) & (a.data <= high)
    return _record(np.clip(a.data, low, high), (a,), lambda g: (g * inside,), "clamp")


def clamp_probability(a: Tensor) -> Tensor:
    """log 직전에 확률을 [1e-7, 1-1e-7] 로 자릅니다."""
    return clamp(a, PROB_EPS, 1.0 - PROB_EPS)


# --- reductions ---


def sum_(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    return _record(
        np.asarray(a.data.sum(axis=axis, keepdims=keepdims)),
        (a,),
        lambda g: (_expand_reduced(g, a.shape, axis, keepdims).copy(),),
        "sum",
    )


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError("mean over an empty axis")
    return _record(
        np.asarray(a.data.mean(axis=axis, keepdims=keepdims)),
        (a,),
        lambda g: (_expand_reduced(g, a.shape, axis, keepdims) / count,),
        "mean",
    )


def l1_norm(a: Tensor, axis: int = -1) -> Tensor:
    """마지막 축 기준 ‖a‖₁ (행 단위)."""
    return _record(
        np.abs(a.data).sum(axis=axis),
        (a,),
        lambda g: (_expand_reduced(g, a.shape, axis, False) * np.sign(a.data),),
        "l1_norm",
    )


# --- structural ---


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat requires at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {e}") from e
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(np.split(g, bounds, axis=axis))

    return _record(out, tuple(tensors), backward, "concat")


def slice_(a: Tensor, key: Any) -> Tensor:
    try:
        out = np.array(a.data[key])
    except IndexError as e:
        raise ShapeError(f"slice: {e}") from e

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return _record(out, (a,), backward, "slice")


class OpKind(Enum):
    MATMUL = "matmul"
    ADD = "add"
    SUB = "sub"
    MUL = "elementwise-mul"
    SCALAR_MUL = "scalar-mul"
    DIV = "div"
    RELU = "relu"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax-last-axis"
    LOG = "log"
    EXP = "exp"
    ABS = "abs"
    CLAMP = "clamp"
    MEAN = "mean"
    SUM = "sum"
    L1_NORM = "l1-norm"
    CONCAT = "concat-last-axis"
    SLICE = "slice"


_UNARY: dict[OpKind, Callable[..., Tensor]] = {
    OpKind.RELU: relu,
    OpKind.SIGMOID: sigmoid,
    OpKind.SOFTMAX: softmax,
    OpKind.LOG: log,
    OpKind.EXP: exp,
    OpKind.ABS: abs_,
    OpKind.MEAN: mean,
    OpKind.SUM: sum_,
    OpKind.L1_NORM: l1_norm,
    OpKind.SCALAR_MUL: scalar_mul,
    OpKind.CLAMP: clamp,
    OpKind.SLICE: slice_,
}
_BINARY: dict[OpKind, Callable[[Tensor, Tensor], Tensor]] = {
    OpKind.MATMUL: matmul,
    OpKind.ADD: add,
    OpKind.SUB: sub,
    OpKind.MUL: mul,
    OpKind.DIV: div,
}


def forward(kind: OpKind | str, inputs: Sequence[Tensor], **attrs: Any) -> Tensor:
    """연산 종류 이름으로 디스패치합니다. attrs 는 axis, k, key 등 연산별 인자입니다."""
    kind = OpKind(kind) if isinstance(kind, str) else kind
    if kind is OpKind.CONCAT:
        return concat(inputs, axis=attrs.get("axis", -1))
    if kind in _BINARY:
        if len(inputs) != 2:
            raise ShapeError(f"{kind.value} expects 2 inputs, got {len(inputs)}")
        return _BINARY[kind](inputs[0], inputs[1])
    if len(inputs) != 1:
        raise ShapeError(f"{kind.value} expects 1 input, got {len(inputs)}")
    return _UNARY[kind](inputs[0], **attrs)


# --- parameters & backward ---


class GradientMap(dict[str, np.ndarray]):
    """파라미터 이름 -> 같은 shape 의 gradient."""

    def accumulate(self, other: Mapping[str, np.ndarray]) -> GradientMap:
        merged = GradientMap(self)
        for name, grad in other.items():
            merged[name] = merged[name] + grad if name in merged else grad.copy()
        return merged

    def scaled(self, factor: float) -> GradientMap:
        return GradientMap({name: grad * factor for name, grad in self.items()})


class ParameterStore(Mapping[str, Parameter]):
    """이름 붙은 Parameter 들의 순서 있는 집합."""

    def __init__(self, params: Mapping[str, ArrayLike | Parameter] | None = None) -> None:
        self._params: dict[str, Parameter] = {}
        for name, value in (params or {}).items():
            self.register(name, value)

    def register(self, name: str, value: ArrayLike | Parameter) -> Parameter:
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"invalid parameter name: {name!r}")
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        param = value if isinstance(value, Parameter) else Parameter(value)
        self._params[name] = param
        return param

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def __repr__(self) -> str:
        return f"ParameterStore({len(self)} tensors)"

    def clone(self) -> ParameterStore:
        return ParameterStore({name: p.data.copy() for name, p in self._params.items()})

    def subset(self, prefixes: Iterable[str]) -> ParameterStore:
        """prefix 로 시작하는 파라미터만 모은 view (Parameter 객체 공유)."""
        prefixes = tuple(prefixes)
        view = ParameterStore()
        for name, param in self._params.items():
            if name.startswith(prefixes):
                view.register(name, param)
        return view

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        for name, param in self._params.items():
            if name not in state:
                raise KeyError(f"missing parameter {name!r} in state")
            if state[name].shape != param.shape:
                raise ShapeError(
                    f"{name}: expected shape {param.shape}, got {state[name].shape}"
                )
            param.data = np.array(state[name], dtype=np.float64)

    def equals(self, other: ParameterStore) -> bool:
        return list(self) == list(other) and all(
            np.array_equal(self[name].data, other[name].data) for name in self
        )


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
    order.reverse()
    return order


def backward(loss: Tensor, params: Mapping[str, Parameter]) -> GradientMap:
    """loss 의 각 파라미터에 대한 gradient. 경로 밖 파라미터는 0 입니다."""
    if loss.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss.node is not None and loss.node.consumed:
        raise GraphConsumedError("backward called twice on the same graph")

    order = _topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for tensor in order:
        node = tensor.node
        upstream = grads.get(id(tensor))
        if node is None or node.backward is None or upstream is None:
            continue
        for parent, grad in zip(node.parents, node.backward(upstream)):
            if grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + grad if key in grads else grad

    result = GradientMap(
        {
            name: np.array(grads[id(p)], dtype=np.float64).reshape(p.shape)
            if id(p) in grads
            else np.zeros_like(p.data)
            for name, p in params.items()
        }
    )
    for tensor in order:
        if tensor.node is not None:
            tensor.node.release()
    return result
