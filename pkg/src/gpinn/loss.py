"""
PINN / gPINN / gNN 합성 손실

L = w_f L_f + w_b L_b + w_i L_i + Σ_i w_{g_i} L_{g_i}

평균은 lane 합(numpy pairwise 합)을 점 개수로 나눈 값입니다. 가중치가 0 인
항은 그래프에 넣지 않으므로 w_g = 0 이면 PINN 손실과 비트 단위로 같습니다.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Node
from .errors import LossError
from .problems import (
    BoundNetworks,
    Fields,
    Networks,
    NetworksLike,
    Observations,
    ProblemSpec,
    bind,
    residual_node,
)


@dataclass(frozen=True)
class LossWeights:
    w_f: float = 1.0
    w_b: float = 1.0
    w_i: float = 1.0
    w_g: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "w_g", tuple(float(w) for w in self.w_g))
        for name in ("w_f", "w_b", "w_i"):
            if getattr(self, name) < 0:
                raise LossError(f"{name} 는 0 이상이어야 합니다: {getattr(self, name)}")
        if any(w < 0 for w in self.w_g):
            raise LossError(f"w_g 는 0 이상이어야 합니다: {self.w_g}")

    @staticmethod
    def uniform(dim: int, w: float = 0.0, **others) -> "LossWeights":
        """모든 축에 같은 w (단일 w 실험 설정)"""
        return LossWeights(w_g=(w,) * dim, **others)

    def check(self, spec: ProblemSpec):
        if self.w_g and len(self.w_g) != spec.dim:
            raise LossError(f"w_g 길이 {len(self.w_g)} 가 문제 차원 {spec.dim} 과 다릅니다")

    def gradient_weight(self, axis: int) -> float:
        return self.w_g[axis] if self.w_g else 0.0


@dataclass
class PointSets:
    """T_f (잔차), T_b (경계/초기), T_i (관측); T_g 는 T_f 와 같다"""

    T_f: np.ndarray
    T_b: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    T_i: Optional[Observations] = None
    provenance: Optional[np.ndarray] = None

    def __post_init__(self):
        self.T_f = np.atleast_2d(np.asarray(self.T_f, dtype=np.float64))
        if self.provenance is None:
            self.provenance = np.zeros(len(self.T_f), dtype=np.int64)

    @property
    def T_g(self) -> np.ndarray:
        return self.T_f

    @property
    def boundary_points(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.T_b:
            return np.zeros((0, self.T_f.shape[1])), np.zeros(0)
        pts = np.concatenate([p for p, _ in self.T_b], axis=0)
        vals = np.concatenate([v for _, v in self.T_b])
        return pts, vals

    def with_added(self, points: np.ndarray, round_index: int) -> "PointSets":
        """RAR: 점을 추가한 새 PointSets (기존 점은 유지)"""
        points = np.atleast_2d(points)
        return PointSets(
            T_f=np.concatenate([self.T_f, points], axis=0),
            T_b=self.T_b,
            T_i=self.T_i,
            provenance=np.concatenate([self.provenance, np.full(len(points), round_index, dtype=np.int64)]),
        )


def _lane_coords(g: Graph, points: np.ndarray, placeholder: bool = False) -> List[Node]:
    points = np.atleast_2d(points)
    if placeholder:
        points = points[:1]
    return [g.input(points[:, j].copy(), lanes=True) for j in range(points.shape[1])]


def _mean_square(values: Node, n: int) -> Node:
    return ad.sum_lanes(values * values) / float(n)


def _require_points(points: np.ndarray, what: str):
    if points is None or len(points) == 0:
        raise LossError(f"{what} 점 집합이 비어 있습니다")


@dataclass
class LossGraph:
    total: Node
    terms: Dict[str, Node]
    coords: Dict[str, List[Node]]
    fields: Fields


class _Builder:
    """한 그래프에서 손실 항들을 조립"""

    def __init__(self, spec: ProblemSpec, fields: Fields, placeholder: bool = False):
        self.spec = spec
        self.fields = fields
        self.g = fields.graph
        self.placeholder = placeholder
        self.coords: Dict[str, List[Node]] = {}
        self._residual: Optional[Node] = None
        self._n_f = 0

    def residual(self, T_f: np.ndarray) -> Node:
        if self._residual is None:
            _require_points(T_f, "T_f")
            coords = _lane_coords(self.g, T_f, self.placeholder)
            self.coords["T_f"] = coords
            self._residual = residual_node(self.spec, self.fields, coords)
            self._n_f = len(T_f)
        return self._residual

    def loss_f(self, T_f: np.ndarray) -> Node:
        f = self.residual(T_f)
        return _mean_square(f, self._n_f)

    def loss_g(self, T_f: np.ndarray, axis) -> Node:
        axis = _axis(self.spec, axis)
        f = self.residual(T_f)
        (df,) = ad.grad(f, [self.coords["T_f"][axis]])
        return _mean_square(df, self._n_f)

    def loss_b(self, T_b) -> Node:
        if not self.spec.soft_bc:
            raise LossError(f"{self.spec.name}: ansatz 가 경계조건을 강제하므로 L_b 가 없습니다")
        if isinstance(T_b, PointSets):
            pts, vals = T_b.boundary_points
        elif isinstance(T_b, tuple) and len(T_b) == 2 and isinstance(T_b[0], np.ndarray):
            pts, vals = T_b
        else:
            pts = np.concatenate([p for p, _ in T_b], axis=0) if T_b else np.zeros((0, self.spec.dim))
            vals = np.concatenate([v for _, v in T_b]) if T_b else np.zeros(0)
        _require_points(pts, "T_b")
        coords = _lane_coords(self.g, pts, self.placeholder)
        self.coords["T_b"] = coords
        u = self.fields.u(coords)
        return _mean_square(u - self.g.constant(np.asarray(vals, dtype=np.float64)), len(pts))

    def loss_data(self, T_i: Observations) -> Node:
        if T_i is None or len(T_i) == 0:
            raise LossError("T_i 관측 집합이 비어 있습니다")
        coords = _lane_coords(self.g, T_i.points, self.placeholder)
        self.coords["T_i"] = coords
        u = self.fields.u(coords)
        return _mean_square(u - self.g.constant(np.asarray(T_i.values, dtype=np.float64)), len(T_i))

    def total(self, sets: PointSets, w: LossWeights) -> LossGraph:
        w.check(self.spec)
        terms: Dict[str, Node] = {}
        weighted: List[Tuple[float, Node]] = []
        if w.w_f > 0:
            terms["L_f"] = self.loss_f(sets.T_f)
            weighted.append((w.w_f, terms["L_f"]))
        if self.spec.soft_bc and w.w_b > 0:
            terms["L_b"] = self.loss_b(sets.T_b)
            weighted.append((w.w_b, terms["L_b"]))
        if sets.T_i is not None and w.w_i > 0:
            terms["L_i"] = self.loss_data(sets.T_i)
            weighted.append((w.w_i, terms["L_i"]))
        for axis, name in enumerate(self.spec.axis_names):
            wg = w.gradient_weight(axis)
            if wg > 0:
                key = f"L_g_{name}"
                terms[key] = self.loss_g(sets.T_f, axis)
                weighted.append((wg, terms[key]))

        total = None
        for weight, term in weighted:
            contribution = term if weight == 1.0 else weight * term
            total = contribution if total is None else total + contribution
        if total is None:
            total = self.g.constant(0.0)
        return LossGraph(total, terms, self.coords, self.fields)


def _axis(spec: ProblemSpec, axis) -> int:
    try:
        return spec.axis_index(axis)
    except ValueError as e:
        raise LossError(str(e)) from e


def _builder(spec, networks, graph) -> _Builder:
    g = graph or Graph()
    return _Builder(spec, bind(spec, networks, g))


def loss_f(spec: ProblemSpec, networks: NetworksLike, T_f: np.ndarray, graph: Graph = None) -> Node:
    """T_f 위 잔차 제곱 평균"""
    return _builder(spec, networks, graph).loss_f(np.atleast_2d(T_f))


def loss_g(spec: ProblemSpec, networks: NetworksLike, T_f: np.ndarray, axis, graph: Graph = None) -> Node:
    """T_f 위 (∂f/∂x_axis)² 평균"""
    return _builder(spec, networks, graph).loss_g(np.atleast_2d(T_f), axis)


def loss_b(spec: ProblemSpec, networks: NetworksLike, T_b, graph: Graph = None) -> Node:
    """경계/초기 조건 위반 제곱 평균"""
    return _builder(spec, networks, graph).loss_b(T_b)


def loss_data(spec: ProblemSpec, networks: NetworksLike, T_i: Observations, graph: Graph = None) -> Node:
    """관측값과 û 의 차이 제곱 평균"""
    return _builder(spec, networks, graph).loss_data(T_i)


def total_loss(spec: ProblemSpec, networks: NetworksLike, sets: PointSets, w: LossWeights,
               graph: Graph = None) -> Node:
    return _builder(spec, networks, graph).total(sets, w).total


def loss_terms(spec: ProblemSpec, networks: NetworksLike, sets: PointSets, w: LossWeights,
               graph: Graph = None) -> LossGraph:
    return _builder(spec, networks, graph).total(sets, w)


@dataclass
class LossEvaluation:
    value: float
    grad: np.ndarray
    terms: Dict[str, float]


class CompiledLoss:
    """점 집합이 고정된 동안 재사용하는 손실 + 파라미터 gradient 프로그램

    그래프는 lane 좌표 한 점짜리 placeholder 로 만들고, 실행할 때
    전체 좌표 배열과 새 파라미터 값을 넣는다.
    """

    def __init__(self, spec: ProblemSpec, networks: Networks, sets: PointSets, weights: LossWeights):
        self.spec = spec
        self.template = networks
        self.sets = sets
        self.weights = weights
        g = Graph()
        fields = BoundNetworks(spec, networks, g)
        builder = _Builder(spec, fields, placeholder=True)
        graph = builder.total(sets, weights)
        self.term_names = list(graph.terms)
        self.leaves = fields.leaves
        grads = ad.grad(graph.total, self.leaves)
        self.program = ad.compile([graph.total] + [graph.terms[k] for k in self.term_names] + grads)

        self._coord_feeds: Dict[int, np.ndarray] = {}
        sources = {"T_f": sets.T_f, "T_b": sets.boundary_points[0]}
        if sets.T_i is not None:
            sources["T_i"] = sets.T_i.points
        for key, coords in graph.coords.items():
            pts = np.atleast_2d(sources[key])
            for j, node in enumerate(coords):
                self._coord_feeds[node.index] = pts[:, j].copy()
        self.graph_size = len(g)

    @property
    def n_params(self) -> int:
        return len(self.leaves)

    def __call__(self, flat: np.ndarray) -> LossEvaluation:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (len(self.leaves),):
            raise LossError(f"파라미터 길이 불일치: {flat.shape} != ({len(self.leaves)},)")
        feeds = dict(self._coord_feeds)
        for node, value in zip(self.leaves, flat):
            feeds[node.index] = value
        values = self.program.run(feeds)
        n_terms = len(self.term_names)
        total = float(values[0])
        terms = {name: float(v) for name, v in zip(self.term_names, values[1:1 + n_terms])}
        grad = np.array([float(v) for v in values[1 + n_terms:]], dtype=np.float64)
        return LossEvaluation(total, grad, terms)

    def value_and_grad(self, flat: np.ndarray) -> Tuple[float, np.ndarray]:
        ev = self(flat)
        return ev.value, ev.grad
