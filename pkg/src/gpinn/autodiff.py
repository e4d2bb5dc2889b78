"""
스칼라 역전파 자동미분

계산 그래프는 append-only 노드 목록입니다. ``grad`` 는 수치 누적기가 아니라
새 그래프 노드(adjoint 식)를 만들어 돌려주므로, 결과를 다시 미분해
u_x, u_xx, u_xxx 와 그 파라미터 미분까지 얻을 수 있습니다.

모든 연산은 lane 단위 원소별 연산입니다. lane 은 collocation 점 하나에
해당하며, lane 입력(좌표)의 값은 numpy 배열일 수 있습니다. 파라미터는
lane 에 무관한 스칼라 입력이고, ``sum_lanes`` 만이 lane 을 스칼라로 줄입니다.
"""

import math
import operator
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import GraphError

Value = Union[float, np.ndarray]

PRIMITIVES = (
    "add", "sub", "mul", "div", "neg", "pow_int",
    "sin", "cos", "exp", "tanh", "cosh",
    "constant", "input", "sum_lanes",
)

ARITY = {
    "add": 2, "sub": 2, "mul": 2, "div": 2,
    "neg": 1, "pow_int": 1,
    "sin": 1, "cos": 1, "exp": 1, "tanh": 1, "cosh": 1,
    "sum_lanes": 1,
    "constant": 0, "input": 0,
}

_EVAL = {
    "add": operator.add,
    "sub": operator.sub,
    "mul": operator.mul,
    "div": operator.truediv,
    "neg": operator.neg,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
    "cosh": np.cosh,
    "sum_lanes": np.sum,
}

# 유한차분 검증 스텝 (1차, 2차, 3차)
FD_STEPS = {1: 1e-5, 2: 1e-4, 3: 1e-3}


def _as_value(v) -> Value:
    if isinstance(v, np.ndarray):
        return v.astype(np.float64, copy=False)
    return np.float64(v)


def _check_finite(v: Value, what: str):
    if not np.all(np.isfinite(v)):
        raise GraphError(f"{what} 값은 유한해야 합니다: {v!r}")


class _Record:
    __slots__ = ("op", "args", "value", "lanes", "k")

    def __init__(self, op, args, value, lanes, k=None):
        self.op = op
        self.args = args
        self.value = value
        self.lanes = lanes
        self.k = k


class Graph:
    """append-only 계산 그래프 (한 스레드 전용)"""

    def __init__(self):
        self._records: List[_Record] = []
        # 네트워크 파라미터 바인딩 캐시 (network.bind_params 가 사용)
        self.bindings: Dict[int, object] = {}

    def __len__(self):
        return len(self._records)

    def __repr__(self):
        return f"Graph(nodes={len(self._records)})"

    def record(self, index: int) -> _Record:
        return self._records[index]

    def _push(self, op, args, value, lanes, k=None) -> "Node":
        self._records.append(_Record(op, tuple(args), value, lanes, k))
        return Node(self, len(self._records) - 1)

    def constant(self, v) -> "Node":
        value = _as_value(v)
        _check_finite(value, "constant")
        lanes = isinstance(value, np.ndarray) and value.ndim > 0
        return self._push("constant", (), value, lanes)

    def input(self, v, lanes: bool = False) -> "Node":
        value = _as_value(v)
        _check_finite(value, "input")
        lanes = lanes or (isinstance(value, np.ndarray) and value.ndim > 0)
        return self._push("input", (), value, lanes)


class Node:
    """그래프 안의 값 하나 (graph handle + index)"""

    __slots__ = ("graph", "index")

    def __init__(self, graph: Graph, index: int):
        self.graph = graph
        self.index = index

    @property
    def value(self) -> Value:
        return self.graph._records[self.index].value

    primal = value

    @property
    def op(self) -> str:
        return self.graph._records[self.index].op

    @property
    def lanes(self) -> bool:
        return self.graph._records[self.index].lanes

    def __repr__(self):
        return f"Node(#{self.index} {self.op}, value={self.value!r})"

    def _lift(self, other) -> "Node":
        if isinstance(other, Node):
            return other
        return self.graph.constant(other)

    def __add__(self, other):
        return apply("add", self, self._lift(other))

    def __radd__(self, other):
        return apply("add", self._lift(other), self)

    def __sub__(self, other):
        return apply("sub", self, self._lift(other))

    def __rsub__(self, other):
        return apply("sub", self._lift(other), self)

    def __mul__(self, other):
        return apply("mul", self, self._lift(other))

    def __rmul__(self, other):
        return apply("mul", self._lift(other), self)

    def __truediv__(self, other):
        return apply("div", self, self._lift(other))

    def __rtruediv__(self, other):
        return apply("div", self._lift(other), self)

    def __neg__(self):
        return apply("neg", self)

    def __pow__(self, k):
        return apply("pow_int", self, k=k)


def constant(g: Graph, v) -> Node:
    """상수 노드 (모든 것에 대한 미분이 0)"""
    return g.constant(v)


def input(g: Graph, v, lanes: bool = False) -> Node:  # noqa: A001
    """미분 가능한 leaf 노드"""
    return g.input(v, lanes=lanes)


def apply(p: str, *operands: Node, k: Optional[int] = None) -> Node:
    """primitive 를 적용해 새 노드를 만든다"""
    if p not in ARITY or p in ("constant", "input"):
        raise GraphError(f"알 수 없는 primitive: {p}")
    if len(operands) != ARITY[p]:
        raise GraphError(f"{p} 는 인자 {ARITY[p]}개가 필요합니다 (받은 개수 {len(operands)})")
    for node in operands:
        if not isinstance(node, Node):
            raise GraphError(f"{p} 의 인자는 Node 여야 합니다: {node!r}")
    g = operands[0].graph
    for node in operands:
        if node.graph is not g:
            raise GraphError("서로 다른 그래프의 노드를 섞을 수 없습니다")

    values = [node.value for node in operands]
    if p == "pow_int":
        if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or k < 0:
            raise GraphError(f"pow_int 지수는 0 이상의 정수여야 합니다: {k!r}")
        k = int(k)
        value = values[0] ** k
        lanes = operands[0].lanes
    elif p == "sum_lanes":
        value = np.sum(values[0])
        lanes = False
    else:
        value = _EVAL[p](*values)
        lanes = any(node.lanes for node in operands)
    return g._push(p, [node.index for node in operands], value, lanes, k)


def sin(x: Node) -> Node:
    return apply("sin", x)


def cos(x: Node) -> Node:
    return apply("cos", x)


def exp(x: Node) -> Node:
    return apply("exp", x)


def tanh(x: Node) -> Node:
    return apply("tanh", x)


def cosh(x: Node) -> Node:
    return apply("cosh", x)


def sum_lanes(x: Node) -> Node:
    return apply("sum_lanes", x)


class _AdjointBuilder:
    """grad 한 번 동안 쓰는 식 생성 헬퍼 (상수 캐시 + 1 곱셈 생략)"""

    def __init__(self, g: Graph):
        self.g = g
        self._constants: Dict[float, Node] = {}

    def const(self, c: float) -> Node:
        node = self._constants.get(c)
        if node is None:
            node = self.g.constant(c)
            self._constants[c] = node
        return node

    def is_one(self, node: Node) -> bool:
        rec = self.g._records[node.index]
        return rec.op == "constant" and not rec.lanes and rec.value == 1.0

    def mul(self, a: Node, b: Node) -> Node:
        if self.is_one(a):
            return b
        if self.is_one(b):
            return a
        return apply("mul", a, b)


def _depends_on(g: Graph, upto: int, wrt_indices: Iterable[int]) -> List[bool]:
    dep = [False] * (upto + 1)
    wrt_set = set(wrt_indices)
    records = g._records
    for i in range(upto + 1):
        if i in wrt_set:
            dep[i] = True
            continue
        args = records[i].args
        if args and any(dep[a] for a in args):
            dep[i] = True
    return dep


def grad(output: Node, wrt: Sequence[Node]) -> List[Node]:
    """∂output/∂wrt_i 를 나타내는 노드 목록

    lane 출력의 경우 lane 마다 독립인 미분(seed 1)을 돌려준다. 스칼라 leaf 에
    대해서는 모든 lane 기여의 합이 된다.
    """
    g = output.graph
    for node in wrt:
        if node.graph is not g:
            raise GraphError("grad: 서로 다른 그래프의 노드입니다")
    out = output.index
    wrt_indices = [node.index for node in wrt]
    if not wrt_indices:
        return []

    records = g._records
    dep = _depends_on(g, out, wrt_indices)
    b = _AdjointBuilder(g)
    adjoint: Dict[int, Node] = {}
    if dep[out]:
        adjoint[out] = b.const(1.0)

    def accumulate(i: int, contribution: Node, negate: bool = False):
        current = adjoint.get(i)
        if current is None:
            adjoint[i] = apply("neg", contribution) if negate else contribution
        elif negate:
            adjoint[i] = apply("sub", current, contribution)
        else:
            adjoint[i] = apply("add", current, contribution)

    lowest = min(wrt_indices)
    for i in range(out, lowest - 1, -1):
        ybar = adjoint.get(i)
        if ybar is None:
            continue
        rec = records[i]
        if not rec.lanes and ybar.lanes:
            # 스칼라 노드가 lane 연산에 브로드캐스트된 경우
            ybar = apply("sum_lanes", ybar)
            adjoint[i] = ybar
        op = rec.op
        if op in ("input", "constant"):
            continue
        args = rec.args
        y = Node(g, i)
        a = Node(g, args[0])
        da = dep[args[0]]

        if op == "add":
            if da:
                accumulate(args[0], ybar)
            if dep[args[1]]:
                accumulate(args[1], ybar)
        elif op == "sub":
            if da:
                accumulate(args[0], ybar)
            if dep[args[1]]:
                accumulate(args[1], ybar, negate=True)
        elif op == "mul":
            c = Node(g, args[1])
            if da:
                accumulate(args[0], b.mul(ybar, c))
            if dep[args[1]]:
                accumulate(args[1], b.mul(ybar, a))
        elif op == "div":
            c = Node(g, args[1])
            if da:
                accumulate(args[0], apply("div", ybar, c))
            if dep[args[1]]:
                accumulate(args[1], apply("div", b.mul(ybar, y), c), negate=True)
        elif op == "neg":
            if da:
                accumulate(args[0], ybar, negate=True)
        elif op == "pow_int":
            k = rec.k
            if da and k > 0:
                if k == 1:
                    local = None
                elif k == 2:
                    local = b.mul(b.const(2.0), a)
                else:
                    local = b.mul(b.const(float(k)), apply("pow_int", a, k=k - 1))
                accumulate(args[0], ybar if local is None else b.mul(ybar, local))
        elif op == "sin":
            if da:
                accumulate(args[0], b.mul(ybar, apply("cos", a)))
        elif op == "cos":
            if da:
                accumulate(args[0], b.mul(ybar, apply("sin", a)), negate=True)
        elif op == "exp":
            if da:
                accumulate(args[0], b.mul(ybar, y))
        elif op == "tanh":
            if da:
                local = apply("sub", b.const(1.0), apply("mul", y, y))
                accumulate(args[0], b.mul(ybar, local))
        elif op == "cosh":
            # sinh(a) = cosh(a)·tanh(a)
            if da:
                local = apply("mul", y, apply("tanh", a))
                accumulate(args[0], b.mul(ybar, local))
        elif op == "sum_lanes":
            if da:
                accumulate(args[0], ybar)
        else:  # pragma: no cover
            raise GraphError(f"미분 규칙이 없는 primitive: {op}")

    result = []
    for node in wrt:
        adj = adjoint.get(node.index)
        if adj is None:
            adj = b.const(0.0)
        elif not node.lanes and adj.lanes:
            adj = apply("sum_lanes", adj)
        result.append(adj)
    return result


def derivative(output: Node, wrt: Node, order: int = 1) -> Node:
    """grad 를 order 번 반복 적용"""
    d = output
    for _ in range(order):
        (d,) = grad(d, [wrt])
    return d


class Program:
    """기록된 그래프를 새 leaf 값으로 다시 계산하는 실행 계획

    출력의 조상 노드만 위상 순서대로 평가하고, 마지막 사용이 끝난
    중간값은 즉시 버린다.
    """

    def __init__(self, graph: Graph, outputs: Sequence[Node]):
        for node in outputs:
            if node.graph is not graph:
                raise GraphError("Program: 서로 다른 그래프의 노드입니다")
        self.graph = graph
        self.outputs = [node.index for node in outputs]
        records = graph._records
        top = max(self.outputs) if self.outputs else -1
        needed = [False] * (top + 1)
        for i in self.outputs:
            needed[i] = True
        for i in range(top, -1, -1):
            if needed[i]:
                for a in records[i].args:
                    needed[a] = True
        self.order = [i for i in range(top + 1) if needed[i]]
        self.inputs = [i for i in self.order if records[i].op == "input"]

        last_use: Dict[int, int] = {}
        for pos, i in enumerate(self.order):
            for a in records[i].args:
                last_use[a] = pos
        pinned = set(self.outputs)
        self._free_after: List[List[int]] = [[] for _ in self.order]
        for i, pos in last_use.items():
            if i not in pinned:
                self._free_after[pos].append(i)

    def __len__(self):
        return len(self.order)

    def run(self, feeds: Mapping[Union[Node, int], Value] = None) -> List[Value]:
        """feeds 로 input leaf 값을 바꿔 출력 값을 계산"""
        resolved: Dict[int, Value] = {}
        for key, value in (feeds or {}).items():
            index = key.index if isinstance(key, Node) else int(key)
            resolved[index] = _as_value(value)

        records = self.graph._records
        values: Dict[int, Value] = {}
        for pos, i in enumerate(self.order):
            rec = records[i]
            op = rec.op
            if op == "input":
                v = resolved.get(i, rec.value)
            elif op == "constant":
                v = rec.value
            elif op == "pow_int":
                v = values[rec.args[0]] ** rec.k
            elif len(rec.args) == 1:
                v = _EVAL[op](values[rec.args[0]])
            else:
                v = _EVAL[op](values[rec.args[0]], values[rec.args[1]])
            values[i] = v
            for dead in self._free_after[pos]:
                del values[dead]
        return [values[i] for i in self.outputs]


def compile(outputs: Sequence[Node]) -> Program:  # noqa: A001
    if not outputs:
        raise GraphError("compile: 출력 노드가 없습니다")
    return Program(outputs[0].graph, outputs)


def _evaluate(fn: Callable[[Node], Node], x: float) -> float:
    g = Graph()
    return float(fn(g.input(x)).value)


def _central_difference(fn: Callable[[Node], Node], x: float, order: int) -> float:
    h = FD_STEPS[order]
    f = lambda v: _evaluate(fn, v)  # noqa: E731
    if order == 1:
        return (f(x + h) - f(x - h)) / (2.0 * h)
    if order == 2:
        return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
    return (f(x + 2 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2 * h)) / (2.0 * h ** 3)


def check_grad(fn: Callable[[Node], Node], at: Union[float, Sequence[float]], order: int = 1) -> float:
    """AD 미분과 중심 유한차분의 최대 상대 오차

    분모는 max(|AD|, |FD|, 1) 이라 0 근처 미분에서는 절대 오차가 된다.
    """
    if order not in FD_STEPS:
        raise GraphError(f"order 는 1..3 이어야 합니다: {order}")
    points = [at] if np.isscalar(at) else list(at)
    worst = 0.0
    for x in points:
        g = Graph()
        xn = g.input(float(x))
        ad = float(derivative(fn(xn), xn, order).value)
        fd = _central_difference(fn, float(x), order)
        scale = max(abs(ad), abs(fd), 1.0)
        err = abs(ad - fd) / scale
        if math.isnan(err):
            return math.inf
        worst = max(worst, err)
    return worst
