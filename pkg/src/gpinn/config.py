"""
설정 관리

실험 설정은 JSON 파일(problem / train / rar / sweep 섹션)이며 pydantic 모델로
검증합니다. "preset" 은 실험별 기본 설정(depth, width, optimizer, lr, iterations)으로 펼쳐지고, 파일에 적은
값이 preset 값을 덮어씁니다.
"""

import copy
import json
import os
import re
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .loss import LossWeights
from .network import layer_sizes_for
from .problems import ProblemSpec, build_problem

ProblemName = Literal["func-approx", "poisson-1d", "diff-react-fwd", "brinkman",
                      "react-rate-inv", "burgers", "allen-cahn"]
Method = Literal["pinn", "gpinn", "nn", "gnn"]

GRADIENT_METHODS = ("gpinn", "gnn")
DEFAULT_SEEDS = 10


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProblemOptions(_Section):
    name: ProblemName
    unknowns: Optional[List[Literal["nu_e", "K"]]] = None
    n_obs: Optional[int] = Field(default=None, ge=1)
    noise_std: float = Field(default=0.0, ge=0.0)
    n_boundary: Optional[int] = Field(default=None, ge=2)

    def build(self) -> ProblemSpec:
        options = self.model_dump(exclude={"name"}, exclude_none=True)
        if self.name not in ("brinkman", "react-rate-inv"):
            options.pop("noise_std", None)
        return build_problem(self.name, **options)


class LossWeightsConfig(_Section):
    """w 는 모든 축에 같은 값, w_g 는 축별 값 (둘 다 없으면 PINN)"""

    w_f: float = Field(default=1.0, ge=0.0)
    w_b: float = Field(default=1.0, ge=0.0)
    w_i: float = Field(default=1.0, ge=0.0)
    w: Optional[float] = Field(default=None, ge=0.0)
    w_g: Optional[List[float]] = None

    @model_validator(mode="after")
    def _non_negative_axes(self):
        if self.w_g is not None and any(v < 0 for v in self.w_g):
            raise ValueError("w_g 는 0 이상이어야 합니다")
        return self

    def resolve(self, dim: int) -> LossWeights:
        if self.w_g is not None:
            if len(self.w_g) != dim:
                raise ConfigError(f"w_g 길이 {len(self.w_g)} 가 문제 차원 {dim} 과 다릅니다",
                                  field="train.weights.w_g")
            w_g = tuple(self.w_g)
        else:
            w_g = (self.w or 0.0,) * dim
        return LossWeights(self.w_f, self.w_b, self.w_i, w_g)


class LbfgsConfig(_Section):
    history: int = Field(default=50, ge=1)
    max_iter: int = Field(default=5000, ge=0)
    round_max_iter: int = Field(default=500, ge=0)
    gtol: float = Field(default=1e-8, gt=0.0)
    ftol: float = Field(default=1e-12, ge=0.0)


class TrainConfig(_Section):
    optimizer: Literal["adam", "adam-then-lbfgs"] = "adam"
    learning_rate: float = Field(default=1e-3, gt=0.0)
    iterations: int = Field(default=10000, ge=0)
    depth: int = Field(default=4, ge=1)
    width: int = Field(default=20, ge=1)
    k_depth: Optional[int] = Field(default=None, ge=1)
    k_width: Optional[int] = Field(default=None, ge=1)
    seed: int = 0
    weights: LossWeightsConfig = Field(default_factory=LossWeightsConfig)
    n_points: int = Field(default=20, ge=1)
    sampling: Literal["uniform", "equispaced"] = "uniform"
    snapshot_every: int = Field(default=1000, ge=1)
    checkpoint_every: int = Field(default=0, ge=0)
    lbfgs: LbfgsConfig = Field(default_factory=LbfgsConfig)

    def layer_sizes(self, spec: ProblemSpec) -> Tuple[int, ...]:
        return layer_sizes_for(spec.dim, self.depth, self.width)

    def k_layer_sizes(self, spec: ProblemSpec) -> Tuple[int, ...]:
        return layer_sizes_for(spec.dim, self.k_depth or self.depth, self.k_width or self.width)


class RarConfig(_Section):
    m: int = Field(default=10, ge=1)
    rounds: int = Field(default=0, ge=0)
    threshold: float = Field(default=0.0, ge=0.0)
    candidates: int = Field(default=100_000, ge=1)
    iterations_per_round: int = Field(default=2000, ge=0)

    @model_validator(mode="after")
    def _pool_large_enough(self):
        if self.candidates < 10 * self.m:
            raise ValueError(f"candidates({self.candidates}) 는 10·m({10 * self.m}) 이상이어야 합니다")
        return self


class SweepConfig(_Section):
    n_points: List[int] = Field(default_factory=list)
    w: List[float] = Field(default_factory=list)
    methods: List[Method] = Field(default_factory=list)
    seeds: List[int] = Field(default_factory=list)

    @property
    def has_axis(self) -> bool:
        return bool(self.n_points or self.w or self.methods)


class SweepCell(BaseModel):
    """w 가 None 이면 설정의 가중치 (w_g 포함) 를 그대로 쓴다"""

    method: Method
    n_points: int
    w: Optional[float] = None

    @property
    def name(self) -> str:
        suffix = f"_w{self.w:g}" if self.w is not None else ""
        return f"{self.method}_n{self.n_points}{suffix}"


class ExperimentConfig(_Section):
    name: str = "experiment"
    preset: Optional[str] = None
    problem: ProblemOptions
    method: Method = "gpinn"
    train: TrainConfig = Field(default_factory=TrainConfig)
    rar: Optional[RarConfig] = None
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    output_dir: str = "out"

    def run_config(self, method: Optional[str] = None, w: Optional[float] = None,
                   n_points: Optional[int] = None, seed: Optional[int] = None) -> TrainConfig:
        """방법/가중치/점 개수/seed 를 반영한 TrainConfig (PINN/NN 은 w_g = 0)"""
        method = method or self.method
        train = self.train.model_copy(deep=True)
        if method in GRADIENT_METHODS:
            if w is not None:
                train.weights.w = w
                train.weights.w_g = None
        else:
            train.weights.w = None
            train.weights.w_g = None
        if n_points is not None:
            train.n_points = n_points
        if seed is not None:
            train.seed = seed
        return train

    def seeds(self, override: Optional[List[int]] = None) -> List[int]:
        if override:
            return list(override)
        if self.sweep.seeds:
            return list(self.sweep.seeds)
        return [self.train.seed + i for i in range(DEFAULT_SEEDS)]

    def cells(self) -> List[SweepCell]:
        """n_points × w × method 조합; w 축은 gradient 방법에만 적용"""
        methods = self.sweep.methods or [self.method]
        points = self.sweep.n_points or [self.train.n_points]
        weights = self.sweep.w or [self.train.weights.w]
        out = []
        for method in methods:
            for n in points:
                for w in (weights if method in GRADIENT_METHODS else [0.0]):
                    out.append(SweepCell(method=method, n_points=n, w=w))
        return out


def _preset(name, problem, method, train, rar=None, sweep=None) -> Dict[str, Any]:
    data = {"name": name, "preset": name, "problem": problem, "method": method, "train": train}
    if rar is not None:
        data["rar"] = rar
    if sweep is not None:
        data["sweep"] = sweep
    return data


_POISSON_W_SWEEP = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0, 3.0, 10.0]

PRESETS: Dict[str, Dict[str, Any]] = {
    "3.1": _preset(
        "3.1", {"name": "func-approx"}, "gnn",
        {"depth": 4, "width": 20, "optimizer": "adam", "learning_rate": 1e-3, "iterations": 10000,
         "n_points": 15, "sampling": "equispaced", "weights": {"w": 1.0}},
        sweep={"n_points": list(range(10, 21)), "methods": ["nn", "gnn"]},
    ),
    "3.2.1": _preset(
        "3.2.1", {"name": "poisson-1d"}, "gpinn",
        {"depth": 4, "width": 20, "optimizer": "adam", "learning_rate": 1e-3, "iterations": 20000,
         "n_points": 20, "weights": {"w": 0.01}},
        sweep={"n_points": [20], "w": _POISSON_W_SWEEP, "methods": ["pinn", "gpinn"]},
    ),
    "3.2.2": _preset(
        "3.2.2", {"name": "diff-react-fwd"}, "gpinn",
        {"depth": 4, "width": 20, "optimizer": "adam", "learning_rate": 1e-4, "iterations": 100000,
         "n_points": 40, "weights": {"w": 0.1}},
        sweep={"n_points": [20, 40, 60, 80, 100, 120, 140], "w": [0.01, 0.1, 1.0], "methods": ["pinn", "gpinn"]},
    ),
    "3.2.2-long": _preset(
        "3.2.2-long", {"name": "diff-react-fwd"}, "gpinn",
        {"depth": 4, "width": 20, "optimizer": "adam", "learning_rate": 1e-6, "iterations": 5_000_000,
         "n_points": 140, "weights": {"w": 0.1}, "snapshot_every": 10000, "checkpoint_every": 100000},
    ),
    "3.3.1": _preset(
        "3.3.1", {"name": "brinkman", "unknowns": ["nu_e"], "n_obs": 5}, "gpinn",
        {"depth": 4, "width": 20, "optimizer": "adam", "learning_rate": 1e-3, "iterations": 50000,
         "n_points": 10, "weights": {"w": 0.1}},
        sweep={"n_points": [5, 10, 15, 20, 25, 30], "methods": ["pinn", "gpinn"]},
    ),
    "3.3.1-two": _preset(
        "3.3.1-two", {"name": "brinkman", "unknowns": ["nu_e", "K"], "n_obs": 5}, "gpinn",
        {"depth": 4, "width": 20, "optimizer": "adam", "learning_rate": 1e-3, "iterations": 50000,
         "n_points": 10, "weights": {"w": 0.1}},
        sweep={"methods": ["pinn", "gpinn"]},
    ),
    "3.3.1-noisy": _preset(
        "3.3.1-noisy", {"name": "brinkman", "unknowns": ["nu_e", "K"], "n_obs": 12, "noise_std": 0.05},
        "gpinn",
        {"depth": 4, "width": 20, "optimizer": "adam", "learning_rate": 1e-3, "iterations": 50000,
         "n_points": 15, "weights": {"w": 0.1}},
        # PINN 2x = 두 배의 잔차 점 (30)
        sweep={"n_points": [15, 30], "methods": ["pinn", "gpinn"]},
    ),
    "3.3.2": _preset(
        "3.3.2", {"name": "react-rate-inv", "n_obs": 8}, "gpinn",
        {"depth": 4, "width": 20, "optimizer": "adam", "learning_rate": 1e-4, "iterations": 200000,
         "n_points": 10, "weights": {"w": 0.01}},
        sweep={"methods": ["pinn", "gpinn"]},
    ),
    "3.4.1": _preset(
        "3.4.1", {"name": "burgers", "n_boundary": 100}, "gpinn",
        {"depth": 4, "width": 32, "optimizer": "adam-then-lbfgs", "learning_rate": 1e-3, "iterations": 20000,
         "n_points": 1500, "weights": {"w": 1e-4}},
        rar={"m": 10, "rounds": 40, "candidates": 100_000, "iterations_per_round": 2000},
        sweep={"n_points": [1500, 1900, 3000], "methods": ["pinn", "gpinn"]},
    ),
    "3.4.2": _preset(
        "3.4.2", {"name": "allen-cahn", "n_boundary": 100}, "gpinn",
        {"depth": 5, "width": 64, "optimizer": "adam-then-lbfgs", "learning_rate": 1e-3, "iterations": 20000,
         "n_points": 500, "weights": {"w": 1e-4}},
        rar={"m": 30, "rounds": 100, "candidates": 100_000, "iterations_per_round": 2000},
        sweep={"n_points": [1000, 2000], "methods": ["pinn", "gpinn"]},
    ),
}


def _deep_merge(base: Dict, override: Dict) -> Dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def expand_preset(data: Dict) -> Dict:
    """preset 값 위에 명시된 필드를 덮어쓴 dict"""
    name = data.get("preset")
    if name is None:
        return data
    if name not in PRESETS:
        raise ConfigError(f"알 수 없는 preset: {name!r} (가능: {', '.join(PRESETS)})", field="preset")
    return _deep_merge(PRESETS[name], data)


def _line_of(text: str, key: Union[str, int, None]) -> Optional[int]:
    if not isinstance(key, str) or not text:
        return None
    pattern = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for number, line in enumerate(text.splitlines(), start=1):
        if pattern.search(line):
            return number
    return None


def parse_experiment(data: Dict, text: str = "") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("설정 최상위는 JSON 객체여야 합니다")
    data = expand_preset(data)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = [str(part) for part in first["loc"]]
        field = ".".join(loc) or None
        named = [part for part in first["loc"] if isinstance(part, str)]
        line = _line_of(text, named[-1]) if named else None
        where = f" (line {line})" if line else ""
        raise ConfigError(f"{field}: {first['msg']}{where}", field=field, line=line) from e


def load_experiment(source: Union[str, Path]) -> ExperimentConfig:
    """JSON 설정 파일 또는 preset 이름"""
    path = Path(source)
    if not path.exists():
        if str(source) in PRESETS:
            return parse_experiment({"preset": str(source)})
        raise ConfigError(f"설정 파일을 찾을 수 없습니다: {source}")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: JSON 문법 오류 (line {e.lineno}, column {e.colno}): {e.msg}",
                          line=e.lineno) from e
    return parse_experiment(data, text)


def dump_experiment(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2, ensure_ascii=False) + "\n"


def save_experiment(cfg: ExperimentConfig, path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_experiment(cfg), encoding="utf-8")


def gpinn_home() -> Path:
    return Path(os.environ.get("GPINN_HOME", Path.home() / ".gpinn"))


class Settings:
    """사용자별 기본값 (~/.gpinn/settings.json)"""

    DEFAULTS = {
        "cache_dir": None,
        "jobs": None,
        "output_dir": None,
    }

    def __init__(self, home: Optional[Path] = None):
        self.config_dir = Path(home) if home else gpinn_home()
        self.config_file = self.config_dir / "settings.json"

    def ensure_config_dir(self):
        """설정 디렉토리 생성"""
        self.config_dir.mkdir(parents=True, exist_ok=True)

    def load(self) -> Dict:
        if not self.config_file.exists():
            return dict(self.DEFAULTS)
        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                stored = json.load(f)
        except (json.JSONDecodeError, IOError):
            return dict(self.DEFAULTS)
        return {**self.DEFAULTS, **stored}

    def save(self, settings: Dict):
        self.ensure_config_dir()
        with open(self.config_file, "w", encoding="utf-8") as f:
            json.dump(settings, f, indent=2, ensure_ascii=False, default=str)

    def get(self, key: str, default=None):
        value = self.load().get(key)
        return default if value is None else value

    def set(self, key: str, value):
        if key not in self.DEFAULTS:
            raise ConfigError(f"알 수 없는 설정 키: {key!r} (가능: {', '.join(self.DEFAULTS)})", field=key)
        settings = self.load()
        settings[key] = value
        self.save(settings)

    def cache_dir(self) -> Path:
        return Path(self.get("cache_dir") or self.config_dir / "cache")
