"""
최적화와 학습 루프

- Adam (β₁=0.9, β₂=0.999, ε=1e−8, bias correction)
- L-BFGS (two-loop recursion, scipy strong-Wolfe line search)
- train: 합성 손실 최소화, 주기적 지표 스냅샷, 체크포인트, NaN 롤백
- rar_refine: 잔차 기반 적응 점 추가 (학습 → 후보 평가 → 상위 m 점 추가)
"""

import logging
import math
import time
import warnings
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import line_search

try:
    from scipy.optimize import LineSearchWarning
except ImportError:  # scipy does not re-export it publicly in some versions
    from scipy.optimize._linesearch import LineSearchWarning

from . import formats
from .config import RarConfig, TrainConfig
from .errors import ConfigError, FormatError, TrainingDivergedError
from .formats import TrainingCheckpoint
from .loss import CompiledLoss, PointSets
from .metrics import PointwiseEvaluator, Snapshot, evaluate_snapshot, grid_for, sample_equispaced, sample_uniform
from .problems import Networks, ProblemSpec, boundary_points, init_networks, observations

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

POINT_SEED_OFFSET = 104_729
NOISE_SEED_OFFSET = 2 * POINT_SEED_OFFSET
CANDIDATE_SEED_STRIDE = 1_000_003

CHECKPOINT_NAME = "checkpoint.gpck"

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]
Progress = Callable[[int, float], None]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    learning_rate: float = 1e-3
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @staticmethod
    def zeros(n: int, learning_rate: float = 1e-3) -> "AdamState":
        return AdamState(np.zeros(n), np.zeros(n), 0, learning_rate)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t, self.learning_rate, self.beta1, self.beta2, self.eps)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """한 번의 Adam 갱신; state 는 제자리에서 바뀐다"""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != state.m.shape or grad.shape != state.m.shape:
        raise ValueError(f"Adam 상태 차원 {state.m.shape} 이 params {params.shape} / grad {grad.shape} 와 다릅니다")
    bad = np.flatnonzero(~np.isfinite(grad))
    if len(bad):
        raise TrainingDivergedError(
            f"gradient 에 비유한 값 {len(bad)}개 (첫 index {bad[0]}, 값 {grad[bad[0]]})", iteration=state.t)

    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class LbfgsResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    evaluations: int
    converged: bool
    line_search_failed: bool = False
    message: str = ""

    def as_dict(self) -> Dict:
        return {
            "value": self.value,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "line_search_failed": self.line_search_failed,
            "message": self.message,
        }


def _two_loop(g: np.ndarray, history: deque) -> np.ndarray:
    """H·g 근사 (history: (s, y, ρ) 오래된 것부터)"""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    if history:
        s, y, _ = history[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * (y @ q)
        q += s * (a - b)
    return q


def lbfgs_minimize(objective: Objective, x0: np.ndarray, history: int = 50, max_iter: int = 1000,
                   gtol: float = 1e-8, ftol: float = 1e-12, c1: float = 1e-4, c2: float = 0.9,
                   callback: Optional[Callable[[int, np.ndarray, float], None]] = None) -> LbfgsResult:
    """objective(x) -> (값, gradient)

    gradient 노름 < gtol, 상대 손실 변화 < ftol, 또는 max_iter 에서 멈춘다.
    line search 가 실패하면 지금까지의 최선값을 line_search_failed=True 로 돌려준다.
    """
    x = np.array(x0, dtype=np.float64)
    evaluations = 0
    last: Dict[str, object] = {}

    def evaluate(z: np.ndarray) -> Tuple[float, np.ndarray]:
        nonlocal evaluations
        key = z.tobytes()
        if last.get("key") != key:
            value, grad = objective(z)
            evaluations += 1
            value = float(value)
            grad = np.asarray(grad, dtype=np.float64)
            if not math.isfinite(value) or not np.all(np.isfinite(grad)):
                value, grad = math.inf, np.zeros_like(z)
            last.update(key=key, value=value, grad=grad)
        return last["value"], last["grad"]

    f, g = evaluate(x)
    if not math.isfinite(f):
        raise TrainingDivergedError("L-BFGS 시작점의 손실이 비유한 값입니다")
    gnorm = float(np.linalg.norm(g))
    if gnorm < gtol:
        return LbfgsResult(x, f, gnorm, 0, evaluations, True, message="시작점이 정류점입니다")

    pairs: deque = deque(maxlen=history)
    old_old_f = f + gnorm / 2.0
    retried = False
    k = 0
    while k < max_iter:
        d = -_two_loop(g, pairs)
        if g @ d >= 0.0:
            pairs.clear()
            d = -g
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LineSearchWarning)
            alpha, _, _, f_new, _, _ = line_search(
                lambda z: evaluate(z)[0], lambda z: evaluate(z)[1], x, d,
                gfk=g, old_fval=f, old_old_fval=old_old_f, c1=c1, c2=c2)
        if alpha is None or not math.isfinite(f_new):
            if pairs and not retried:
                # 곡률 기록을 버리고 최급강하 방향으로 한 번 더
                pairs.clear()
                old_old_f = f + float(np.linalg.norm(g)) / 2.0
                retried = True
                continue
            return LbfgsResult(x, f, float(np.linalg.norm(g)), k, evaluations, False, True,
                               "line search 실패: 지금까지의 최선값을 반환합니다")
        retried = False
        k += 1
        x_new = x + alpha * d
        f_new, g_new = evaluate(x_new)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(y @ y):
            pairs.append((s, y, 1.0 / sy))
        old_f = f
        old_old_f = f
        x, f, g = x_new, f_new, g_new
        if callback is not None:
            callback(k, x, f)

        gnorm = float(np.linalg.norm(g))
        if gnorm < gtol:
            return LbfgsResult(x, f, gnorm, k, evaluations, True, message="gradient 노름 수렴")
        if abs(old_f - f) <= ftol * max(abs(old_f), abs(f)):
            return LbfgsResult(x, f, gnorm, k, evaluations, True, message="상대 손실 변화 수렴")
    return LbfgsResult(x, f, float(np.linalg.norm(g)), k, evaluations, False, message="최대 반복 도달")


@dataclass
class RunResult:
    problem: str
    seed: int
    config: Dict
    loss_history: List[float] = field(default_factory=list)
    snapshots: List[Snapshot] = field(default_factory=list)
    rounds: List[Dict] = field(default_factory=list)
    lbfgs: List[Dict] = field(default_factory=list)
    points: Optional[PointSets] = None
    networks: Optional[Networks] = None
    wall_clock: float = 0.0
    lr_halved: bool = False

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    @property
    def param_trajectories(self) -> Dict[str, List[Tuple[int, float]]]:
        out: Dict[str, List[Tuple[int, float]]] = {}
        for snap in self.snapshots:
            for name, value in snap.params.items():
                out.setdefault(name, []).append((snap.iteration, value))
        return out

    def summary(self) -> Dict:
        final = self.final.as_row()
        return {
            "problem": self.problem,
            "seed": self.seed,
            "iterations": self.final.iteration,
            "n_points": len(self.points.T_f) if self.points is not None else 0,
            "u_error": final["u_error"],
            "final": final,
            "lr_halved": self.lr_halved,
            "lbfgs": self.lbfgs,
            "rounds": self.rounds,
            "wall_clock_seconds": self.wall_clock,
            "config": self.config,
        }


def build_point_sets(spec: ProblemSpec, config: TrainConfig) -> PointSets:
    """T_f (균등 또는 등간격), 경계 점, 관측값"""
    n = config.n_points
    if config.sampling == "equispaced":
        if spec.dim != 1:
            raise ConfigError(f"{spec.name}: equispaced 샘플링은 1차원 문제만 지원합니다", field="train.sampling")
        lo, hi = spec.bounds[0]
        T_f = sample_equispaced(lo, hi, n).reshape(-1, 1)
    else:
        T_f = sample_uniform(spec.bounds, n, config.seed + POINT_SEED_OFFSET)
    T_b = boundary_points(spec) if spec.soft_bc else []
    T_i = observations(spec, config.seed + NOISE_SEED_OFFSET) if spec.is_inverse else None
    return PointSets(T_f, T_b, T_i)


def select_top(points: np.ndarray, residuals: np.ndarray, m: int) -> np.ndarray:
    """|f| 가 가장 큰 m 개 점 (동률은 앞쪽 후보 우선)"""
    order = np.argsort(-np.abs(np.asarray(residuals)), kind="stable")
    return np.asarray(points)[order[:m]]


class Trainer:
    """한 번의 학습 실행 상태 (파라미터, Adam 상태, 점 집합, 기록)"""

    def __init__(self, spec: ProblemSpec, config: TrainConfig, sets: Optional[PointSets] = None,
                 networks: Optional[Networks] = None, cache_dir: Optional[Path] = None,
                 progress: Optional[Progress] = None, checkpoint_dir: Optional[Path] = None):
        self.spec = spec
        self.config = config
        self.weights = config.weights.resolve(spec.dim)
        self.sets = sets if sets is not None else build_point_sets(spec, config)
        if networks is None:
            k_sizes = config.k_layer_sizes(spec) if spec.k_network else None
            networks = init_networks(spec, config.layer_sizes(spec), config.seed, k_sizes)
        self.template = networks
        self.x = networks.flatten()
        self.state = AdamState.zeros(len(self.x), config.learning_rate)
        self.iteration = 0
        self.completed_rounds = 0
        self.progress = progress
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.grid = grid_for(spec, cache_dir)
        self.evaluator = PointwiseEvaluator(spec, networks)
        self.result = RunResult(spec.name, config.seed, config.model_dump(mode="json"))
        self._started = time.perf_counter()
        self._compile()
        self._last_good = self._capture()

    def _compile(self):
        self.loss = CompiledLoss(self.spec, self.template, self.sets, self.weights)
        logger.debug("%s 손실 그래프 %d 노드, 파라미터 %d 개", self.spec.name, self.loss.graph_size, self.loss.n_params)

    @property
    def networks(self) -> Networks:
        return self.template.unflatten(self.x)

    def _capture(self) -> Dict:
        return {"iteration": self.iteration, "x": self.x.copy(), "state": self.state.copy()}

    def _rollback(self, error: TrainingDivergedError):
        if self.result.lr_halved:
            path = self._write_checkpoint(self._last_good) if self.checkpoint_dir else None
            raise TrainingDivergedError(
                f"{self.spec.name}: 학습률을 줄인 뒤에도 발산했습니다 (iteration {self.iteration}): {error}",
                iteration=self.iteration, checkpoint=path) from error
        good = self._last_good
        logger.warning("iteration %d 에서 발산: iteration %d 로 되돌리고 학습률을 %.3g 로 줄입니다",
                       self.iteration, good["iteration"], self.state.learning_rate / 2.0)
        self.iteration = good["iteration"]
        self.x = good["x"].copy()
        self.state = good["state"].copy()
        self.state.learning_rate /= 2.0
        del self.result.loss_history[self.iteration:]
        self.result.snapshots = [s for s in self.result.snapshots if s.iteration <= self.iteration]
        self.result.lr_halved = True

    def snapshot(self) -> Snapshot:
        snaps = self.result.snapshots
        if snaps and snaps[-1].iteration == self.iteration:
            return snaps[-1]
        ev = self.loss(self.x)
        snap = evaluate_snapshot(self.spec, self.networks, self.grid, self.evaluator,
                                 self.iteration, ev.value, ev.terms, n_points=len(self.sets.T_f))
        snaps.append(snap)
        if math.isfinite(ev.value):
            self._last_good = self._capture()
        logger.debug("[%s] iteration %d loss %.4e u_error %.4e", self.spec.name, self.iteration,
                     snap.loss, snap.u_error)
        return snap

    def _after_step(self, value: float):
        self.result.loss_history.append(value)
        self.iteration += 1
        if self.iteration % self.config.snapshot_every == 0:
            self.snapshot()
        if self.config.checkpoint_every and self.iteration % self.config.checkpoint_every == 0:
            self.checkpoint()
        if self.progress is not None:
            self.progress(self.iteration, value)

    def adam(self, n: int):
        target = self.iteration + n
        while self.iteration < target:
            ev = self.loss(self.x)
            try:
                if not math.isfinite(ev.value):
                    raise TrainingDivergedError(f"손실이 비유한 값입니다 ({ev.value})", iteration=self.iteration)
                x_new = adam_step(self.state, self.x, ev.grad)
            except TrainingDivergedError as e:
                self._rollback(e)
                continue
            self.x = x_new
            self._after_step(ev.value)

    def lbfgs(self, max_iter: int) -> Optional[LbfgsResult]:
        if max_iter <= 0:
            return None
        cfg = self.config.lbfgs
        start = self.iteration

        def on_iteration(_k, x, value):
            self.x = x.copy()
            self._after_step(value)

        res = lbfgs_minimize(self.loss.value_and_grad, self.x, history=cfg.history, max_iter=max_iter,
                             gtol=cfg.gtol, ftol=cfg.ftol, callback=on_iteration)
        self.x = res.x.copy()
        diag = res.as_dict()
        diag["start_iteration"] = start
        self.result.lbfgs.append(diag)
        if res.line_search_failed:
            logger.warning("[%s] L-BFGS line search 실패 (iteration %d), Adam 결과에서 계속합니다",
                           self.spec.name, self.iteration)
        else:
            logger.info("[%s] L-BFGS %d 회: %s", self.spec.name, res.iterations, res.message)
        return res

    def stage(self, adam_iterations: int, lbfgs_iterations: int):
        self.adam(adam_iterations)
        if self.config.optimizer == "adam-then-lbfgs":
            self.lbfgs(lbfgs_iterations)

    def residuals(self, points: np.ndarray) -> np.ndarray:
        return self.evaluator.evaluate(self.networks, points, ("f",))["f"]

    def add_points(self, points: np.ndarray, round_index: int):
        self.sets = self.sets.with_added(points, round_index)
        self._compile()

    def _checkpoint_record(self) -> TrainingCheckpoint:
        meta = {
            "problem": self.spec.name,
            "seed": self.config.seed,
            "completed_rounds": self.completed_rounds,
            "lr_halved": self.result.lr_halved,
            "loss_history": self.result.loss_history,
            "snapshots": [s.as_row() for s in self.result.snapshots],
            "rounds": self.result.rounds,
            "lbfgs": self.result.lbfgs,
            "points": self.sets.T_f,
            "provenance": self.sets.provenance,
        }
        return TrainingCheckpoint(self.iteration, self.x.copy(), self.state.m.copy(), self.state.v.copy(),
                                  self.state.t, self.state.learning_rate, meta)

    def _write_checkpoint(self, good: Optional[Dict] = None) -> Path:
        record = self._checkpoint_record()
        if good is not None:
            record.iteration = good["iteration"]
            record.params = good["x"]
            record.adam_m, record.adam_v = good["state"].m, good["state"].v
            record.adam_t, record.learning_rate = good["state"].t, good["state"].learning_rate
            record.meta["loss_history"] = self.result.loss_history[:good["iteration"]]
            record.meta["snapshots"] = [s.as_row() for s in self.result.snapshots
                                        if s.iteration <= good["iteration"]]
        path = self.checkpoint_dir / CHECKPOINT_NAME
        formats.save_checkpoint(path, record)
        return path

    def checkpoint(self) -> Optional[Path]:
        if self.checkpoint_dir is None:
            return None
        path = self._write_checkpoint()
        self._last_good = self._capture()
        logger.debug("체크포인트 저장: %s (iteration %d)", path, self.iteration)
        return path

    def resume(self, path: Path):
        ckpt = formats.load_checkpoint(path)
        meta = ckpt.meta
        if meta.get("problem") not in (None, self.spec.name):
            raise FormatError(f"{path}: {meta.get('problem')} 문제의 체크포인트입니다 (현재 {self.spec.name})")
        if "points" in meta:
            points = np.asarray(meta["points"], dtype=np.float64).reshape(-1, self.spec.dim)
            provenance = np.asarray(meta.get("provenance", np.zeros(len(points))), dtype=np.int64)
            self.sets = PointSets(points, self.sets.T_b, self.sets.T_i, provenance)
            self._compile()
        if len(ckpt.params) != len(self.x):
            raise FormatError(f"{path}: 파라미터 길이 {len(ckpt.params)} != {len(self.x)}")
        self.x = ckpt.params.copy()
        self.state = AdamState(ckpt.adam_m.copy(), ckpt.adam_v.copy(), ckpt.adam_t, ckpt.learning_rate)
        self.iteration = ckpt.iteration
        self.completed_rounds = int(meta.get("completed_rounds", 0))
        self.result.lr_halved = bool(meta.get("lr_halved", False))
        self.result.loss_history = [float(v) for v in meta.get("loss_history", [])]
        self.result.snapshots = [Snapshot.from_row(row) for row in meta.get("snapshots", [])]
        self.result.rounds = list(meta.get("rounds", []))
        self.result.lbfgs = list(meta.get("lbfgs", []))
        self._last_good = self._capture()
        logger.info("[%s] iteration %d 에서 재개 (%s)", self.spec.name, self.iteration, path)

    def finish(self) -> RunResult:
        self.snapshot()
        if self.checkpoint_dir is not None:
            self.checkpoint()
        self.result.points = self.sets
        self.result.networks = self.networks
        self.result.wall_clock = time.perf_counter() - self._started
        return self.result


def train(spec: ProblemSpec, config: TrainConfig, *, sets: Optional[PointSets] = None,
          networks: Optional[Networks] = None, cache_dir: Optional[Path] = None,
          progress: Optional[Progress] = None, checkpoint_dir: Optional[Path] = None,
          resume_from: Optional[Path] = None) -> RunResult:
    """설정된 최적화기로 total_loss 를 최소화

    역문제 미지수는 네트워크 파라미터와 같은 벡터로 함께 학습된다.
    """
    trainer = Trainer(spec, config, sets, networks, cache_dir, progress, checkpoint_dir)
    if resume_from is not None:
        trainer.resume(Path(resume_from))
    else:
        trainer.snapshot()
    logger.info("[%s] 학습 시작: %d 점, 파라미터 %d 개, seed %d", spec.name, len(trainer.sets.T_f),
                len(trainer.x), config.seed)
    lbfgs_budget = 0 if trainer.result.lbfgs else config.lbfgs.max_iter
    trainer.stage(max(0, config.iterations - trainer.iteration), lbfgs_budget)
    return trainer.finish()


def rar_refine(spec: ProblemSpec, config: TrainConfig, rar: RarConfig, *, cache_dir: Optional[Path] = None,
               progress: Optional[Progress] = None, checkpoint_dir: Optional[Path] = None,
               resume_from: Optional[Path] = None) -> RunResult:
    """학습 → 후보 |f| 평가 → 상위 m 점 추가를 rounds 번 (또는 평균 |f| < threshold 까지)

    최적화기 상태는 라운드 사이에 이어진다.
    """
    trainer = Trainer(spec, config, None, None, cache_dir, progress, checkpoint_dir)
    if resume_from is not None:
        trainer.resume(Path(resume_from))
    else:
        trainer.snapshot()
        trainer.stage(config.iterations, config.lbfgs.max_iter)

    for r in range(trainer.completed_rounds + 1, rar.rounds + 1):
        candidates = sample_uniform(spec.bounds, rar.candidates, config.seed * CANDIDATE_SEED_STRIDE + r)
        residuals = trainer.residuals(candidates)
        mean_abs = float(np.mean(np.abs(residuals)))
        if rar.threshold > 0 and mean_abs < rar.threshold:
            logger.info("[%s] 후보 평균 |f| %.3e < %.3e: RAR 종료 (round %d)", spec.name, mean_abs, rar.threshold, r)
            trainer.result.rounds.append({"round": r, "stopped": True, "mean_abs_residual_candidates": mean_abs,
                                          "n_points": len(trainer.sets.T_f)})
            break
        added = select_top(candidates, residuals, rar.m)
        trainer.add_points(added, r)
        trainer.stage(rar.iterations_per_round, config.lbfgs.round_max_iter)
        trainer.completed_rounds = r
        snap = trainer.snapshot()
        trainer.result.rounds.append({
            "round": r,
            "stopped": False,
            "mean_abs_residual_candidates": mean_abs,
            "n_points": len(trainer.sets.T_f),
            "iteration": snap.iteration,
            "u_error": snap.u_error,
        })
        logger.info("[%s] RAR round %d: %d 점, 후보 평균 |f| %.3e, u_error %.3e",
                    spec.name, r, len(trainer.sets.T_f), mean_abs, snap.u_error)
        trainer.checkpoint()
    return trainer.finish()
