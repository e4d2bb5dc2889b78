"""
점 샘플링과 평가 지표

L² 상대오차는 가중치 없는 이산 노름 ‖pred − ref‖₂ / ‖ref‖₂ 입니다.
테스트 격자는 1차원 10,001 점, (x, t) 문제는 201×201 입니다.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from . import reference
from .autodiff import Graph
from .errors import LossError, ProblemError
from .problems import Networks, NetworksLike, PdeContext, ProblemSpec, bind, exact_derivative, reference_solution

logger = logging.getLogger(__name__)

GRID_POINTS_1D = 10_001
GRID_POINTS_2D = 201
CHUNK = 4096


def sample_uniform(domain: Sequence[Tuple[float, float]], n: int, seed: int) -> np.ndarray:
    """영역 안의 i.i.d. 균등 점 (n, d)"""
    if n < 1:
        raise ValueError(f"n 은 1 이상이어야 합니다: {n}")
    bounds = np.asarray(domain, dtype=np.float64).reshape(-1, 2)
    rng = np.random.default_rng(seed)
    return rng.uniform(bounds[:, 0], bounds[:, 1], size=(n, len(bounds)))


def sample_equispaced(lo: float, hi: float, n: int) -> np.ndarray:
    """양 끝을 포함한 등간격 점 (n,)"""
    if n < 2:
        raise ValueError(f"등간격 샘플은 2점 이상이어야 합니다: {n}")
    return np.linspace(lo, hi, n)


def l2_relative_error(pred, ref) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if pred.shape != ref.shape:
        raise ValueError(f"길이가 다릅니다: {pred.shape} != {ref.shape}")
    norm = np.linalg.norm(ref)
    if norm == 0.0:
        raise ValueError("기준값의 노름이 0 입니다")
    return float(np.linalg.norm(pred - ref) / norm)


@dataclass
class TestGrid:
    """조밀한 등간격 평가 격자와 기준값"""

    problem: str
    axes: Tuple[np.ndarray, ...]
    points: np.ndarray
    u: np.ndarray
    du: Tuple[Optional[np.ndarray], ...]
    k: Optional[np.ndarray] = None

    __test__ = False

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    def __len__(self):
        return len(self.points)

    @staticmethod
    def build(spec: ProblemSpec, cache_dir: Optional[Path] = None,
              n_1d: int = GRID_POINTS_1D, n_2d: int = GRID_POINTS_2D) -> "TestGrid":
        n = n_1d if spec.dim == 1 else n_2d
        axes = tuple(np.linspace(lo, hi, n) for lo, hi in spec.bounds)
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)

        if spec.exact_u is not None:
            u = np.asarray(spec.exact_u(points), dtype=np.float64)
        else:
            u = reference_solution(spec.name, points, cache_dir=cache_dir)

        du: List[Optional[np.ndarray]] = []
        for axis in range(spec.dim):
            if spec.exact_du is not None:
                du.append(exact_derivative(spec, points, axis))
            else:
                # 닫힌 형태가 없으면 기준 필드의 2차 정확도 차분
                field_values = u.reshape(tuple(len(a) for a in axes))
                du.append(np.gradient(field_values, axes[axis], axis=axis, edge_order=2).ravel())

        k = reference.react_rate_exact_k(points[:, 0]) if spec.k_network else None
        return TestGrid(spec.name, axes, points, u, tuple(du), k)


_GRIDS: Dict[Tuple, TestGrid] = {}


def grid_for(spec: ProblemSpec, cache_dir: Optional[Path] = None) -> TestGrid:
    """문제별 TestGrid (프로세스 안에서 재사용)"""
    key = (spec.name, str(cache_dir) if cache_dir else "")
    grid = _GRIDS.get(key)
    if grid is None:
        logger.debug("%s 테스트 격자 생성", spec.name)
        grid = TestGrid.build(spec, cache_dir)
        _GRIDS[key] = grid
    return grid


OUTPUTS = ("u", "du", "f", "k")


class PointwiseEvaluator:
    """점별 û, ∂û/∂x_i, f, k 를 청크 단위로 계산

    그래프는 한 번 만들고 Program 으로 새 파라미터와 좌표를 넣어 재실행한다.
    """

    def __init__(self, spec: ProblemSpec, networks: NetworksLike, chunk: int = CHUNK):
        self.spec = spec
        self.chunk = chunk
        g = Graph()
        fields = bind(spec, networks, g)
        self.coords = [g.input(np.zeros(1), lanes=True) for _ in range(spec.dim)]
        ctx = PdeContext(spec, fields, self.coords)
        self.nodes = {
            "u": [ctx.u],
            "du": [ctx.du(name) for name in spec.axis_names],
            "f": [spec.pde(ctx)],
        }
        if spec.k_network:
            self.nodes["k"] = [fields.k(self.coords)]
        self.leaves = fields.leaves
        self._programs: Dict[Tuple[str, ...], ad.Program] = {}

    def _program(self, outputs: Tuple[str, ...]) -> ad.Program:
        program = self._programs.get(outputs)
        if program is None:
            nodes = [n for name in outputs for n in self.nodes[name]]
            program = ad.compile(nodes)
            self._programs[outputs] = program
        return program

    def evaluate(self, networks: Optional[Networks], points: np.ndarray,
                 outputs: Iterable[str] = ("u",)) -> Dict[str, np.ndarray]:
        """outputs 별 배열; "du" 는 (n, d)"""
        outputs = tuple(name for name in OUTPUTS if name in set(outputs))
        for name in outputs:
            if name not in self.nodes:
                raise ProblemError(f"{self.spec.name}: {name} 출력을 계산할 수 없습니다")
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.spec.dim)
        if len(points) == 0:
            raise LossError("평가할 점이 없습니다")

        feeds = {}
        if self.leaves:
            if not isinstance(networks, Networks):
                raise ProblemError("학습 파라미터가 있는 evaluator 에는 Networks 가 필요합니다")
            flat = networks.flatten()
            if len(flat) != len(self.leaves):
                raise ProblemError(f"파라미터 길이 불일치: {len(flat)} != {len(self.leaves)}")
            for node, value in zip(self.leaves, flat):
                feeds[node.index] = value

        program = self._program(outputs)
        parts: Dict[str, List[np.ndarray]] = {name: [] for name in outputs}
        for start in range(0, len(points), self.chunk):
            block = points[start:start + self.chunk]
            for j, node in enumerate(self.coords):
                feeds[node.index] = block[:, j].copy()
            values = iter(program.run(feeds))
            for name in outputs:
                cols = [np.broadcast_to(next(values), (len(block),)) for _ in self.nodes[name]]
                parts[name].append(np.stack(cols, axis=1) if name == "du" else cols[0].copy())
        return {name: np.concatenate(chunks, axis=0) for name, chunks in parts.items()}


def mean_abs_residual(spec: ProblemSpec, networks: NetworksLike, points: np.ndarray,
                      evaluator: PointwiseEvaluator = None) -> float:
    points = np.asarray(points, dtype=np.float64).reshape(-1, spec.dim)
    if len(points) == 0:
        raise LossError("잔차를 계산할 점이 없습니다")
    evaluator = evaluator or PointwiseEvaluator(spec, networks)
    f = evaluator.evaluate(networks if isinstance(networks, Networks) else None, points, ("f",))["f"]
    return float(np.mean(np.abs(f)))


def derivative_error(spec: ProblemSpec, networks: NetworksLike, grid: TestGrid, axis,
                     evaluator: PointwiseEvaluator = None) -> float:
    """∂û/∂x_axis 의 L² 상대오차"""
    axis = spec.axis_index(axis)
    ref = grid.du[axis] if axis < len(grid.du) else None
    if ref is None:
        raise ProblemError(f"{spec.name}: 기준 미분이 없습니다")
    evaluator = evaluator or PointwiseEvaluator(spec, networks)
    du = evaluator.evaluate(networks if isinstance(networks, Networks) else None, grid.points, ("du",))["du"]
    return l2_relative_error(du[:, axis], ref)


def k_error(spec: ProblemSpec, networks: Networks, grid: TestGrid,
            evaluator: PointwiseEvaluator = None) -> float:
    """추정한 k(x) 의 L² 상대오차"""
    if grid.k is None:
        raise ProblemError(f"{spec.name}: k 필드가 없습니다")
    evaluator = evaluator or PointwiseEvaluator(spec, networks)
    k = evaluator.evaluate(networks, grid.points, ("k",))["k"]
    return l2_relative_error(k, grid.k)


@dataclass
class Snapshot:
    """학습 중 한 시점의 지표"""

    iteration: int
    loss: float
    terms: Dict[str, float] = field(default_factory=dict)
    u_error: float = float("nan")
    du_errors: Dict[str, float] = field(default_factory=dict)
    mean_abs_residual: float = float("nan")
    params: Dict[str, float] = field(default_factory=dict)
    param_errors: Dict[str, float] = field(default_factory=dict)
    k_error: Optional[float] = None
    n_points: int = 0

    def as_row(self) -> Dict[str, float]:
        row = {"iteration": self.iteration, "n_points": self.n_points, "loss": self.loss}
        row.update(self.terms)
        row["u_error"] = self.u_error
        for name, value in self.du_errors.items():
            row[f"du_error_{name}"] = value
        row["mean_abs_residual"] = self.mean_abs_residual
        for name, value in self.params.items():
            row[f"param_{name}"] = value
            row[f"param_error_{name}"] = self.param_errors[name]
        if self.k_error is not None:
            row["k_error"] = self.k_error
        return row

    @staticmethod
    def from_row(row: Dict) -> "Snapshot":
        snap = Snapshot(int(row["iteration"]), float(row["loss"]), n_points=int(row.get("n_points", 0)))
        for key, value in row.items():
            if key.startswith("L_"):
                snap.terms[key] = float(value)
            elif key.startswith("du_error_"):
                snap.du_errors[key[len("du_error_"):]] = float(value)
            elif key.startswith("param_error_"):
                snap.param_errors[key[len("param_error_"):]] = float(value)
            elif key.startswith("param_"):
                snap.params[key[len("param_"):]] = float(value)
        snap.u_error = float(row.get("u_error", "nan"))
        snap.mean_abs_residual = float(row.get("mean_abs_residual", "nan"))
        if row.get("k_error") not in (None, ""):
            snap.k_error = float(row["k_error"])
        return snap


def evaluate_snapshot(spec: ProblemSpec, networks: Networks, grid: TestGrid, evaluator: PointwiseEvaluator,
                      iteration: int, loss: float, terms: Dict[str, float], n_points: int = 0) -> Snapshot:
    wanted = ["u", "du", "f"] + (["k"] if spec.k_network else [])
    values = evaluator.evaluate(networks, grid.points, wanted)
    snap = Snapshot(iteration, float(loss), dict(terms), n_points=n_points)
    snap.u_error = l2_relative_error(values["u"], grid.u)
    for axis, name in enumerate(spec.axis_names):
        snap.du_errors[name] = l2_relative_error(values["du"][:, axis], grid.du[axis])
    snap.mean_abs_residual = float(np.mean(np.abs(values["f"])))
    for name, p in networks.inverse.items():
        snap.params[name] = p.value
        snap.param_errors[name] = p.relative_error
    if spec.k_network:
        snap.k_error = l2_relative_error(values["k"], grid.k)
    return snap
