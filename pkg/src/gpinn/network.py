"""
tanh 완전연결 네트워크와 hard-constraint ansatz
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Node
from .errors import NetworkError


@dataclass
class MlpParams:
    """레이어별 가중치/편향

    평탄화 순서: 레이어 순서대로, 각 레이어에서 가중치 (fan_out, fan_in)
    row-major 다음 편향 (fan_out).
    """

    layer_sizes: Tuple[int, ...]
    weights: List[np.ndarray] = field(repr=False)
    biases: List[np.ndarray] = field(repr=False)

    @property
    def size(self) -> int:
        return sum(a * b + b for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def unflatten(self, flat: np.ndarray) -> "MlpParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.size,):
            raise NetworkError(f"파라미터 길이 불일치: {flat.shape} != ({self.size},)")
        return MlpParams.from_flat(self.layer_sizes, flat)

    def copy(self) -> "MlpParams":
        return MlpParams.from_flat(self.layer_sizes, self.flatten().copy())

    @staticmethod
    def from_flat(layer_sizes: Sequence[int], flat: np.ndarray) -> "MlpParams":
        sizes = _validate_sizes(layer_sizes)
        weights, biases = [], []
        pos = 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            n = fan_in * fan_out
            weights.append(np.array(flat[pos:pos + n], dtype=np.float64).reshape(fan_out, fan_in))
            pos += n
            biases.append(np.array(flat[pos:pos + fan_out], dtype=np.float64))
            pos += fan_out
        if pos != len(flat):
            raise NetworkError(f"파라미터 길이 불일치: {len(flat)} != {pos}")
        return MlpParams(sizes, weights, biases)

    @staticmethod
    def zeros(layer_sizes: Sequence[int]) -> "MlpParams":
        sizes = _validate_sizes(layer_sizes)
        n = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        return MlpParams.from_flat(sizes, np.zeros(n))


def _validate_sizes(layer_sizes: Sequence[int]) -> Tuple[int, ...]:
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise NetworkError(f"레이어는 2개 이상이어야 합니다: {list(layer_sizes)}")
    if any(s <= 0 for s in sizes):
        raise NetworkError(f"레이어 크기는 양수여야 합니다: {list(layer_sizes)}")
    return sizes


def layer_sizes_for(input_dim: int, depth: int, width: int, output_dim: int = 1) -> Tuple[int, ...]:
    """depth/width 표기 → 레이어 크기 (depth = 은닉층 수 + 1)"""
    if depth < 1 or width < 1:
        raise NetworkError(f"depth/width 는 양수여야 합니다: {depth}, {width}")
    return (input_dim,) + (width,) * (depth - 1) + (output_dim,)


def init_mlp(layer_sizes: Sequence[int], seed: int) -> MlpParams:
    """Glorot-uniform 가중치, 0 편향"""
    sizes = _validate_sizes(layer_sizes)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(sizes, weights, biases)


class BoundMlp:
    """그래프에 leaf 로 등록된 파라미터"""

    def __init__(self, g: Graph, params: MlpParams):
        self.graph = g
        self.params = params
        self.weights: List[List[List[Node]]] = []
        self.biases: List[List[Node]] = []
        self.leaves: List[Node] = []
        for w, b in zip(params.weights, params.biases):
            rows = []
            for j in range(w.shape[0]):
                row = [g.input(w[j, i]) for i in range(w.shape[1])]
                rows.append(row)
                self.leaves.extend(row)
            self.weights.append(rows)
            # flatten() 순서와 맞추기 위해 편향은 가중치 뒤에 등록
            bias_nodes = [g.input(v) for v in b]
            self.biases.append(bias_nodes)
            self.leaves.extend(bias_nodes)


def bind_params(g: Graph, params: MlpParams) -> BoundMlp:
    """그래프당 한 번만 파라미터 leaf 를 만든다"""
    bound = g.bindings.get(id(params))
    if bound is None or bound.params is not params:
        bound = BoundMlp(g, params)
        g.bindings[id(params)] = bound
    return bound


def forward(p, g: Graph, inputs: Sequence[Node]) -> Node:
    """N(x): 은닉층 tanh, 출력층 선형"""
    bound = p if isinstance(p, BoundMlp) else bind_params(g, p)
    sizes = bound.params.layer_sizes
    if len(inputs) != sizes[0]:
        raise NetworkError(f"입력 차원 불일치: {len(inputs)} != {sizes[0]}")
    if sizes[-1] != 1:
        raise NetworkError(f"스칼라 출력 네트워크만 지원합니다: 출력 차원 {sizes[-1]}")
    for node in inputs:
        if node.graph is not g:
            raise NetworkError("입력 노드가 다른 그래프에 속해 있습니다")

    h = list(inputs)
    last = len(bound.weights) - 1
    for layer, (rows, bias) in enumerate(zip(bound.weights, bound.biases)):
        out = []
        for row, b in zip(rows, bias):
            z = b
            for w, x in zip(row, h):
                z = z + w * x
            out.append(z if layer == last else ad.tanh(z))
        h = out
    return h[0]


class Ansatz(str, Enum):
    IDENTITY = "identity"
    DIRICHLET_1D_POISSON = "dirichlet-1d-poisson"
    DIFF_REACT = "diff-react"
    NONE_SOFT_BC = "none-soft-bc"


def diff_react_initial(x: Node) -> Node:
    """u(x, 0) = Σ_{i=1..4} sin(ix)/i + sin(8x)/8"""
    total = ad.sin(x)
    for i in (2, 3, 4, 8):
        total = total + ad.sin(x * float(i)) / float(i)
    return total


def apply_ansatz(a, raw: Node, coords: Sequence[Node],
                 initial: Optional[Callable[[Node], Node]] = None) -> Node:
    """네트워크 출력 raw 를 경계/초기 조건을 만족하는 û 로 변환"""
    a = Ansatz(a)
    if a in (Ansatz.IDENTITY, Ansatz.NONE_SOFT_BC):
        return raw
    if a is Ansatz.DIRICHLET_1D_POISSON:
        if len(coords) != 1:
            raise NetworkError(f"{a.value} ansatz 는 1차원 좌표가 필요합니다")
        (x,) = coords
        # û = x(π − x)N(x) + x
        return x * (math.pi - x) * raw + x
    if len(coords) != 2:
        raise NetworkError(f"{a.value} ansatz 는 (x, t) 좌표가 필요합니다")
    x, t = coords
    u0 = (initial or diff_react_initial)(x)
    # û = (x − π)(x + π)(1 − e^{−t})N(x, t) + u(x, 0)
    return (x - math.pi) * (x + math.pi) * (1.0 - ad.exp(-t)) * raw + u0
