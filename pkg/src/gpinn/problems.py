"""
벤치마크 문제 정의

각 ProblemSpec 은 영역, 잔차 연산자 f, ansatz, soft 경계조건, 기준해,
역문제 미지수와 관측 모델을 가집니다. 잔차는 autodiff 그래프 위에서
û 와 그 AD 미분으로 조립되므로 ∂f/∂x_i 는 같은 그래프를 한 번 더
미분해 얻습니다.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from . import reference
from .autodiff import Graph, Node
from .errors import ProblemError
from .network import Ansatz, MlpParams, apply_ansatz, bind_params, diff_react_initial, forward, init_mlp

PROBLEM_NAMES = (
    "func-approx",
    "poisson-1d",
    "diff-react-fwd",
    "brinkman",
    "react-rate-inv",
    "burgers",
    "allen-cahn",
)

# Brinkman–Forchheimer 상수
BRINKMAN = {"H": 1.0, "nu": 1e-3, "eps": 0.4, "g": 1.0, "nu_e": 1e-3, "K": 1e-3}


@dataclass(frozen=True)
class InverseParamSpec:
    name: str
    true_value: float
    initial_value: float
    positive: bool = True


@dataclass
class InverseParam:
    """미지 스칼라 파라미터; positive 면 log 값으로 저장"""

    name: str
    raw: float
    true_value: float
    positive: bool = True

    @property
    def value(self) -> float:
        return math.exp(self.raw) if self.positive else self.raw

    @property
    def relative_error(self) -> float:
        return abs(self.value - self.true_value) / abs(self.true_value)

    @staticmethod
    def from_spec(spec: InverseParamSpec) -> "InverseParam":
        raw = math.log(spec.initial_value) if spec.positive else spec.initial_value
        return InverseParam(spec.name, raw, spec.true_value, spec.positive)


@dataclass(frozen=True)
class BoundarySegment:
    """axis 좌표가 value 로 고정된 경계 (초기조건은 t = 0 경계)"""

    axis: int
    value: float
    target: Callable[[np.ndarray], np.ndarray]
    label: str = ""


@dataclass(frozen=True)
class ObservationModel:
    n_obs: int
    noise_std: float = 0.0


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    bounds: Tuple[Tuple[float, float], ...]
    axis_names: Tuple[str, ...]
    ansatz: Ansatz
    pde: Callable[["PdeContext"], Node]
    boundary: Tuple[BoundarySegment, ...] = ()
    exact_u: Optional[Callable[[np.ndarray], np.ndarray]] = None
    exact_expr: Optional[Callable[[Sequence[Node]], Node]] = None
    exact_du: Optional[Callable[[np.ndarray, int], np.ndarray]] = None
    inverse: Tuple[InverseParamSpec, ...] = ()
    constants: Mapping[str, float] = field(default_factory=dict)
    k_network: bool = False
    observation: Optional[ObservationModel] = None
    n_boundary: int = 1
    description: str = ""

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def soft_bc(self) -> bool:
        return bool(self.boundary)

    @property
    def is_inverse(self) -> bool:
        return self.observation is not None

    @property
    def has_closed_form(self) -> bool:
        return self.exact_expr is not None

    def axis_index(self, axis: Union[int, str]) -> int:
        if isinstance(axis, str):
            if axis not in self.axis_names:
                raise ProblemError(f"{self.name}: 알 수 없는 축 {axis!r}")
            return self.axis_names.index(axis)
        if not 0 <= axis < self.dim:
            raise ProblemError(f"{self.name}: 축 번호 {axis} 가 범위 [0, {self.dim}) 밖입니다")
        return int(axis)

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> bool:
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.dim)
        for j, (lo, hi) in enumerate(self.bounds):
            slack = tol * max(1.0, abs(lo), abs(hi))
            if np.any(points[:, j] < lo - slack) or np.any(points[:, j] > hi + slack):
                return False
        return True


@dataclass
class Networks:
    """학습 대상: u 네트워크, (선택) k 네트워크, 역문제 스칼라"""

    u: MlpParams
    k: Optional[MlpParams] = None
    inverse: Dict[str, InverseParam] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.u.size + (self.k.size if self.k is not None else 0) + len(self.inverse)

    def flatten(self) -> np.ndarray:
        parts = [self.u.flatten()]
        if self.k is not None:
            parts.append(self.k.flatten())
        parts.append(np.array([p.raw for p in self.inverse.values()], dtype=np.float64))
        return np.concatenate(parts)

    def unflatten(self, flat: np.ndarray) -> "Networks":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.size,):
            raise ProblemError(f"파라미터 길이 불일치: {flat.shape} != ({self.size},)")
        pos = self.u.size
        u = self.u.unflatten(flat[:pos])
        k = None
        if self.k is not None:
            k = self.k.unflatten(flat[pos:pos + self.k.size])
            pos += self.k.size
        inverse = {}
        for (name, p), raw in zip(self.inverse.items(), flat[pos:]):
            inverse[name] = replace(p, raw=float(raw))
        return Networks(u, k, inverse)

    def copy(self) -> "Networks":
        return self.unflatten(self.flatten().copy())


class Fields:
    """그래프 하나에 묶인 û, k, λ 제공자"""

    graph: Graph

    def u(self, coords: Sequence[Node]) -> Node:
        raise NotImplementedError

    def k(self, coords: Sequence[Node]) -> Node:
        raise NotImplementedError

    def param(self, name: str) -> Node:
        raise NotImplementedError

    @property
    def leaves(self) -> List[Node]:
        return []


class BoundNetworks(Fields):
    def __init__(self, spec: ProblemSpec, networks: Networks, g: Graph):
        self.spec = spec
        self.networks = networks
        self.graph = g
        self._u = bind_params(g, networks.u)
        self._k = bind_params(g, networks.k) if networks.k is not None else None
        self._raw: Dict[str, Node] = {}
        self._params: Dict[str, Node] = {}
        for name, p in networks.inverse.items():
            leaf = g.input(p.raw)
            self._raw[name] = leaf
            self._params[name] = ad.exp(leaf) if p.positive else leaf

    @property
    def leaves(self) -> List[Node]:
        nodes = list(self._u.leaves)
        if self._k is not None:
            nodes.extend(self._k.leaves)
        nodes.extend(self._raw.values())
        return nodes

    def u(self, coords):
        raw = forward(self._u, self.graph, coords)
        initial = diff_react_initial if self.spec.ansatz is Ansatz.DIFF_REACT else None
        return apply_ansatz(self.spec.ansatz, raw, coords, initial=initial)

    def k(self, coords):
        if self._k is None:
            raise ProblemError(f"{self.spec.name}: k 네트워크가 없습니다")
        return forward(self._k, self.graph, coords)

    def param(self, name):
        node = self._params.get(name)
        if node is not None:
            return node
        if name in self.spec.constants:
            return self.graph.constant(self.spec.constants[name])
        raise ProblemError(f"{self.spec.name}: 알 수 없는 파라미터 {name!r}")


class ExactFields(Fields):
    """닫힌 형태 해와 참값 파라미터로 û 를 대체"""

    def __init__(self, spec: ProblemSpec, g: Graph):
        self.spec = spec
        self.graph = g

    def u(self, coords):
        if self.spec.exact_expr is None:
            raise ProblemError(f"{self.spec.name}: 닫힌 형태 해가 없습니다")
        return self.spec.exact_expr(coords)

    def k(self, coords):
        if self.spec.name != "react-rate-inv":
            raise ProblemError(f"{self.spec.name}: k 필드가 없습니다")
        return _exact_k_expr(coords[0])

    def param(self, name):
        for p in self.spec.inverse:
            if p.name == name:
                return self.graph.constant(p.true_value)
        if name in self.spec.constants:
            return self.graph.constant(self.spec.constants[name])
        raise ProblemError(f"{self.spec.name}: 알 수 없는 파라미터 {name!r}")


class FunctionFields(Fields):
    """임의의 식 빌더를 û 로 쓰는 Fields (검증용)"""

    def __init__(self, spec: ProblemSpec, g: Graph, u_fn: Callable[[Sequence[Node]], Node]):
        self.spec = spec
        self.graph = g
        self._u_fn = u_fn

    def u(self, coords):
        return self._u_fn(coords)

    def k(self, coords):
        return _exact_k_expr(coords[0])

    def param(self, name):
        return ExactFields(self.spec, self.graph).param(name)


FieldsFactory = Callable[[Graph], Fields]
NetworksLike = Union[Networks, FieldsFactory]


def exact_fields(spec: ProblemSpec) -> FieldsFactory:
    return lambda g: ExactFields(spec, g)


def function_fields(spec: ProblemSpec, u_fn: Callable[[Sequence[Node]], Node]) -> FieldsFactory:
    return lambda g: FunctionFields(spec, g, u_fn)


def bind(spec: ProblemSpec, networks: NetworksLike, g: Graph) -> Fields:
    if isinstance(networks, Networks):
        if spec.k_network and networks.k is None:
            raise ProblemError(f"{spec.name}: k 네트워크가 필요합니다")
        return BoundNetworks(spec, networks, g)
    if callable(networks):
        return networks(g)
    raise ProblemError(f"networks 형식을 알 수 없습니다: {type(networks).__name__}")


class PdeContext:
    """잔차 빌더에 넘기는 좌표/û/미분 캐시"""

    def __init__(self, spec: ProblemSpec, fields: Fields, coords: Sequence[Node]):
        self.spec = spec
        self.fields = fields
        self.coords = list(coords)
        self.u = fields.u(self.coords)
        self._derivs: Dict[str, Node] = {"": self.u}

    def coord(self, name: str) -> Node:
        return self.coords[self.spec.axis_index(name)]

    @property
    def x(self) -> Node:
        return self.coord("x")

    @property
    def t(self) -> Node:
        return self.coord("t")

    def du(self, axes: str) -> Node:
        """du("xx") = ∂²û/∂x², du("xt") = ∂²û/∂x∂t"""
        node = self._derivs.get(axes)
        if node is None:
            prev = self.du(axes[:-1])
            (node,) = ad.grad(prev, [self.coord(axes[-1])])
            self._derivs[axes] = node
        return node

    def param(self, name: str) -> Node:
        return self.fields.param(name)

    def k(self) -> Node:
        return self.fields.k(self.coords)


def _coords_for(spec: ProblemSpec, g: Graph, point) -> List[Node]:
    """point: (d,) 한 점 또는 (n, d) lane 배열"""
    arr = np.asarray(point, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != spec.dim:
        raise ProblemError(f"{spec.name}: 점 차원 {arr.shape[-1]} != {spec.dim}")
    if not spec.contains(arr):
        raise ProblemError(f"{spec.name}: 영역 밖의 점입니다: {point!r}")
    if arr.ndim == 1:
        return [g.input(float(v)) for v in arr]
    return [g.input(arr[:, j], lanes=True) for j in range(spec.dim)]


def residual_node(spec: ProblemSpec, fields: Fields, coords: Sequence[Node]) -> Node:
    return spec.pde(PdeContext(spec, fields, coords))


def residual(spec: ProblemSpec, networks: NetworksLike, point, graph: Graph = None) -> Node:
    """점에서의 PDE 잔차 f"""
    g = graph or Graph()
    coords = _coords_for(spec, g, point)
    return residual_node(spec, bind(spec, networks, g), coords)


def residual_gradient(spec: ProblemSpec, networks: NetworksLike, point, axis, graph: Graph = None) -> Node:
    """∂f/∂x_axis (잔차를 좌표 입력에 대해 AD 로 미분)"""
    axis = spec.axis_index(axis)
    g = graph or Graph()
    coords = _coords_for(spec, g, point)
    f = residual_node(spec, bind(spec, networks, g), coords)
    (df,) = ad.grad(f, [coords[axis]])
    return df


def exact_solution(spec: ProblemSpec, point, field: str = "u"):
    """닫힌 형태 기준값 (react-rate-inv 는 FD 기준해 u, 또는 field="k")"""
    arr = np.asarray(point, dtype=np.float64)
    scalar = arr.ndim <= 1
    pts = arr.reshape(-1, spec.dim)
    if field == "k":
        if spec.name != "react-rate-inv":
            raise ProblemError(f"{spec.name}: k 필드가 없습니다")
        values = reference.react_rate_exact_k(pts[:, 0])
    elif field == "u":
        if spec.exact_u is None:
            raise ProblemError(f"{spec.name}: 닫힌 형태 해가 없습니다 (reference_solution 사용)")
        values = spec.exact_u(pts)
    else:
        raise ProblemError(f"알 수 없는 필드: {field!r}")
    return float(values[0]) if scalar else values


def exact_derivative(spec: ProblemSpec, points, axis) -> np.ndarray:
    axis = spec.axis_index(axis)
    if spec.exact_du is None:
        raise ProblemError(f"{spec.name}: 기준 미분이 없습니다")
    return spec.exact_du(np.asarray(points, dtype=np.float64).reshape(-1, spec.dim), axis)


def reference_solution(name: str, grid, cache_dir=None) -> np.ndarray:
    """burgers / allen-cahn 수치 기준해"""
    if name not in ("burgers", "allen-cahn"):
        raise ProblemError(f"{name}: reference_solution 은 burgers / allen-cahn 전용입니다")
    points = np.asarray(grid, dtype=np.float64).reshape(-1, 2)
    if np.any(points[:, 0] < -1.0) or np.any(points[:, 0] > 1.0) \
            or np.any(points[:, 1] < 0.0) or np.any(points[:, 1] > 1.0):
        raise ProblemError(f"{name}: 격자는 [-1,1]×[0,1] 안에 있어야 합니다")
    return reference.reference_solution(name, points, cache_dir=cache_dir)


@dataclass
class Observations:
    points: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.values)

    def __iter__(self) -> Iterator[Tuple[np.ndarray, float]]:
        for p, v in zip(self.points, self.values):
            yield p, float(v)


def sensor_locations(spec: ProblemSpec, n_obs: int) -> np.ndarray:
    """양 끝을 제외한 등간격 센서 x_j = lo + (hi − lo)·j/(n + 1)"""
    lo, hi = spec.bounds[0]
    j = np.arange(1, n_obs + 1)
    return (lo + (hi - lo) * j / (n_obs + 1)).reshape(-1, 1)


def observations(spec: ProblemSpec, seed: int = 0) -> Observations:
    if spec.observation is None:
        raise ProblemError(f"{spec.name}: 순문제에는 관측값이 없습니다")
    model = spec.observation
    points = sensor_locations(spec, model.n_obs)
    values = np.asarray(exact_solution(spec, points), dtype=np.float64)
    if model.noise_std > 0:
        rng = np.random.default_rng(seed)
        values = values + rng.normal(0.0, model.noise_std, size=values.shape)
    return Observations(points, values)


# ---------------------------------------------------------------------------
# 개별 문제

def _func_u_expr(coords):
    (x,) = coords
    return -(1.4 - 3.0 * x) * ad.sin(18.0 * x)


def _func_u(points):
    x = points[:, 0]
    return -(1.4 - 3.0 * x) * np.sin(18.0 * x)


def _func_du(points, axis):
    x = points[:, 0]
    return 3.0 * np.sin(18.0 * x) - 18.0 * (1.4 - 3.0 * x) * np.cos(18.0 * x)


def _func_pde(ctx: PdeContext) -> Node:
    # 데이터 잔차 û − u; ∂/∂x 는 gNN 의 기울기 데이터 항
    return ctx.u - _func_u_expr(ctx.coords)


def _func_approx(**_) -> ProblemSpec:
    return ProblemSpec(
        name="func-approx",
        bounds=((0.0, 1.0),),
        axis_names=("x",),
        ansatz=Ansatz.IDENTITY,
        pde=_func_pde,
        exact_u=_func_u,
        exact_expr=_func_u_expr,
        exact_du=_func_du,
        description="u(x) = −(1.4 − 3x)sin(18x) 함수 근사 (NN / gNN)",
    )


POISSON_MODES = (1, 2, 3, 4, 8)


def _poisson_source(x: Node) -> Node:
    total = ad.sin(x)
    for i in (2, 3, 4, 8):
        total = total + float(i) * ad.sin(float(i) * x)
    return total


def _poisson_u_expr(coords):
    (x,) = coords
    total = x + ad.sin(x)
    for i in (2, 3, 4, 8):
        total = total + ad.sin(float(i) * x) / float(i)
    return total


def _poisson_u(points):
    x = points[:, 0]
    return x + sum(np.sin(i * x) / i for i in POISSON_MODES)


def _poisson_du(points, axis):
    x = points[:, 0]
    return 1.0 + sum(np.cos(i * x) for i in POISSON_MODES)


def _poisson_pde(ctx: PdeContext) -> Node:
    return -ctx.du("xx") - _poisson_source(ctx.x)


def _poisson_1d(**_) -> ProblemSpec:
    return ProblemSpec(
        name="poisson-1d",
        bounds=((0.0, math.pi),),
        axis_names=("x",),
        ansatz=Ansatz.DIRICHLET_1D_POISSON,
        pde=_poisson_pde,
        exact_u=_poisson_u,
        exact_expr=_poisson_u_expr,
        exact_du=_poisson_du,
        description="−u'' = Σ i sin(ix) + 8 sin(8x), x ∈ [0, π]",
    )


# R(x,t) = e^{−t}[3/2 sin 2x + 8/3 sin 3x + 15/4 sin 4x + 63/8 sin 8x]
DIFF_REACT_R = ((2, 1.5), (3, 8.0 / 3.0), (4, 15.0 / 4.0), (8, 63.0 / 8.0))


def _diff_react_u_expr(coords):
    x, t = coords
    return ad.exp(-t) * diff_react_initial(x)


def _diff_react_u(points):
    x, t = points[:, 0], points[:, 1]
    return np.exp(-t) * sum(np.sin(i * x) / i for i in POISSON_MODES)


def _diff_react_du(points, axis):
    x, t = points[:, 0], points[:, 1]
    if axis == 0:
        return np.exp(-t) * sum(np.cos(i * x) for i in POISSON_MODES)
    return -_diff_react_u(points)


def _diff_react_pde(ctx: PdeContext) -> Node:
    x, t = ctx.x, ctx.t
    source = None
    for i, c in DIFF_REACT_R:
        term = c * ad.sin(float(i) * x)
        source = term if source is None else source + term
    reaction = ad.exp(-t) * source
    return ctx.du("t") - ctx.param("D") * ctx.du("xx") - reaction


def _diff_react_fwd(**_) -> ProblemSpec:
    return ProblemSpec(
        name="diff-react-fwd",
        bounds=((-math.pi, math.pi), (0.0, 1.0)),
        axis_names=("x", "t"),
        ansatz=Ansatz.DIFF_REACT,
        pde=_diff_react_pde,
        exact_u=_diff_react_u,
        exact_expr=_diff_react_u_expr,
        exact_du=_diff_react_du,
        constants={"D": 1.0},
        description="u_t = D u_xx + R(x,t), x ∈ [−π, π], t ∈ [0, 1]",
    )


def _brinkman_r(nu_e, K):
    c = BRINKMAN
    return math.sqrt(c["nu"] * c["eps"] / (nu_e * K))


def _brinkman_u_expr(coords):
    (x,) = coords
    c = BRINKMAN
    r = _brinkman_r(c["nu_e"], c["K"])
    scale = c["g"] * c["K"] / c["nu"]
    return scale * (1.0 - ad.cosh(r * (x - c["H"] / 2.0)) / math.cosh(r * c["H"] / 2.0))


def _brinkman_u(points):
    x = points[:, 0]
    c = BRINKMAN
    r = _brinkman_r(c["nu_e"], c["K"])
    return c["g"] * c["K"] / c["nu"] * (1.0 - np.cosh(r * (x - c["H"] / 2.0)) / np.cosh(r * c["H"] / 2.0))


def _brinkman_du(points, axis):
    x = points[:, 0]
    c = BRINKMAN
    r = _brinkman_r(c["nu_e"], c["K"])
    return -c["g"] * c["K"] / c["nu"] * r * np.sinh(r * (x - c["H"] / 2.0)) / np.cosh(r * c["H"] / 2.0)


def _brinkman_pde(ctx: PdeContext) -> Node:
    c = BRINKMAN
    nu_e, K = ctx.param("nu_e"), ctx.param("K")
    return -(nu_e / c["eps"]) * ctx.du("xx") + c["nu"] * ctx.u / K - c["g"]


def _zero(points):
    return np.zeros(len(points))


def _brinkman(unknowns: Sequence[str] = ("nu_e",), n_obs: int = 5, noise_std: float = 0.0,
              initial_guess: float = 1e-2, **_) -> ProblemSpec:
    unknowns = tuple(unknowns)
    for name in unknowns:
        if name not in ("nu_e", "K"):
            raise ProblemError(f"brinkman: 알 수 없는 미지수 {name!r} (nu_e, K 중 선택)")
    if not unknowns:
        raise ProblemError("brinkman: 미지수가 하나 이상 필요합니다")
    c = BRINKMAN
    inverse = tuple(InverseParamSpec(name, c[name], initial_guess) for name in unknowns)
    constants = {name: c[name] for name in ("nu_e", "K") if name not in unknowns}
    return ProblemSpec(
        name="brinkman",
        bounds=((0.0, c["H"]),),
        axis_names=("x",),
        ansatz=Ansatz.NONE_SOFT_BC,
        pde=_brinkman_pde,
        boundary=(
            BoundarySegment(0, 0.0, _zero, "x=0"),
            BoundarySegment(0, c["H"], _zero, "x=H"),
        ),
        exact_u=_brinkman_u,
        exact_expr=_brinkman_u_expr,
        exact_du=_brinkman_du,
        inverse=inverse,
        constants=constants,
        observation=ObservationModel(n_obs, noise_std),
        description="−(ν_e/ε)u'' + νu/K = g, ν_e / K 추정",
    )


def _exact_k_expr(x: Node) -> Node:
    return 0.1 + ad.exp(-0.5 / 0.15 ** 2 * (x - 0.5) ** 2)


def _react_u(points):
    return reference.react_rate_solution()(points[:, 0])


def _react_du(points, axis):
    return reference.react_rate_solution()(points[:, 0], 1)


def _react_pde(ctx: PdeContext) -> Node:
    lam = reference.REACT_LAMBDA
    return lam * ctx.du("xx") - ctx.k() * ctx.u - ad.sin(2.0 * math.pi * ctx.x)


def _react_rate_inv(n_obs: int = 8, noise_std: float = 0.0, **_) -> ProblemSpec:
    return ProblemSpec(
        name="react-rate-inv",
        bounds=((0.0, 1.0),),
        axis_names=("x",),
        ansatz=Ansatz.NONE_SOFT_BC,
        pde=_react_pde,
        boundary=(
            BoundarySegment(0, 0.0, _zero, "x=0"),
            BoundarySegment(0, 1.0, _zero, "x=1"),
        ),
        exact_u=_react_u,
        exact_du=_react_du,
        k_network=True,
        observation=ObservationModel(n_obs, noise_std),
        description="λu'' − k(x)u = sin(2πx), k(x) 추정",
    )


def _burgers_pde(ctx: PdeContext) -> Node:
    return ctx.du("t") + ctx.u * ctx.du("x") - reference.BURGERS_NU * ctx.du("xx")


def _burgers_initial(points):
    return -np.sin(math.pi * points[:, 0])


def _burgers(n_boundary: int = 100, **_) -> ProblemSpec:
    return ProblemSpec(
        name="burgers",
        bounds=((-1.0, 1.0), (0.0, 1.0)),
        axis_names=("x", "t"),
        ansatz=Ansatz.NONE_SOFT_BC,
        pde=_burgers_pde,
        boundary=(
            BoundarySegment(0, -1.0, _zero, "x=-1"),
            BoundarySegment(0, 1.0, _zero, "x=1"),
            BoundarySegment(1, 0.0, _burgers_initial, "t=0"),
        ),
        n_boundary=n_boundary,
        description="u_t + u u_x = (0.01/π) u_xx",
    )


def _allen_cahn_pde(ctx: PdeContext) -> Node:
    u = ctx.u
    return ctx.du("t") - reference.ALLEN_CAHN_D * ctx.du("xx") - 5.0 * (u - u ** 3)


def _allen_cahn_boundary(points):
    return np.full(len(points), -1.0)


def _allen_cahn_initial(points):
    return reference.allen_cahn_initial(points[:, 0])


def _allen_cahn(n_boundary: int = 100, **_) -> ProblemSpec:
    return ProblemSpec(
        name="allen-cahn",
        bounds=((-1.0, 1.0), (0.0, 1.0)),
        axis_names=("x", "t"),
        ansatz=Ansatz.NONE_SOFT_BC,
        pde=_allen_cahn_pde,
        boundary=(
            BoundarySegment(0, -1.0, _allen_cahn_boundary, "x=-1"),
            BoundarySegment(0, 1.0, _allen_cahn_boundary, "x=1"),
            BoundarySegment(1, 0.0, _allen_cahn_initial, "t=0"),
        ),
        n_boundary=n_boundary,
        description="u_t = 0.001 u_xx + 5(u − u³)",
    )


_BUILDERS = {
    "func-approx": _func_approx,
    "poisson-1d": _poisson_1d,
    "diff-react-fwd": _diff_react_fwd,
    "brinkman": _brinkman,
    "react-rate-inv": _react_rate_inv,
    "burgers": _burgers,
    "allen-cahn": _allen_cahn,
}


def build_problem(name: str, **options) -> ProblemSpec:
    builder = _BUILDERS.get(name)
    if builder is None:
        raise ProblemError(f"알 수 없는 문제: {name!r} (가능: {', '.join(PROBLEM_NAMES)})")
    return builder(**options)


def boundary_points(spec: ProblemSpec, n_per_segment: Optional[int] = None) -> List[Tuple[np.ndarray, np.ndarray]]:
    """경계 구간마다 등간격 점과 목표값"""
    n = n_per_segment or spec.n_boundary
    out = []
    for seg in spec.boundary:
        if spec.dim == 1:
            pts = np.array([[seg.value]])
        else:
            other = 1 - seg.axis
            lo, hi = spec.bounds[other]
            pts = np.empty((n, 2))
            pts[:, seg.axis] = seg.value
            pts[:, other] = np.linspace(lo, hi, n)
        out.append((pts, np.asarray(seg.target(pts), dtype=np.float64)))
    return out


def init_networks(spec: ProblemSpec, layer_sizes: Sequence[int], seed: int,
                  k_layer_sizes: Optional[Sequence[int]] = None) -> Networks:
    """u (와 k) 네트워크 초기화; 같은 seed 면 w 와 무관하게 동일"""
    u = init_mlp(layer_sizes, seed)
    k = None
    if spec.k_network:
        k = init_mlp(k_layer_sizes or layer_sizes, seed + 7919)
    inverse = {p.name: InverseParam.from_spec(p) for p in spec.inverse}
    return Networks(u, k, inverse)
