"""
기준해 계산

- Burgers: Cole–Hopf 적분해를 Gauss–Hermite 구적으로 평가
- Allen–Cahn: method of lines (2차 중심차분 + 적응형 explicit RK45), 디스크 캐시
- react-rate-inv: 정확한 k(x) 로 푼 2차 유한차분 ODE 해
"""

import contextlib
import functools
import logging
import math
import os
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.linalg import solve_banded

from . import formats
from .errors import ReferenceSolutionError

try:
    import fcntl
except ImportError:  # Windows
    fcntl = None

logger = logging.getLogger(__name__)

BURGERS_NU = 0.01 / math.pi
ALLEN_CAHN_D = 0.001
REACT_LAMBDA = 0.01

DEFAULT_CACHE_DIR = Path(os.environ.get("GPINN_CACHE", Path.home() / ".gpinn" / "cache"))


@functools.lru_cache(maxsize=8)
def _hermite_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    z, w = np.polynomial.hermite.hermgauss(n)
    with np.errstate(divide="ignore"):
        return z, np.log(w)


def burgers_cole_hopf(x, t, nu: float = BURGERS_NU, n_nodes: int = 200, chunk: int = 4096) -> np.ndarray:
    """u(x,t) = −∫sin(π(x−η)) F(x−η) e^{−η²/4νt} dη / ∫F(x−η) e^{−η²/4νt} dη

    F(y) = exp(−cos(πy)/(2πν)). η = 2√(νt)·z 로 치환하면 Hermite 가중치가 된다.
    지수는 점마다 최대값을 빼서 계산한다.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    t = np.broadcast_to(np.atleast_1d(np.asarray(t, dtype=np.float64)), x.shape)
    z, logw = _hermite_rule(n_nodes)
    out = np.empty_like(x)
    initial = t <= 0.0
    out[initial] = -np.sin(math.pi * x[initial])

    idx = np.flatnonzero(~initial)
    for start in range(0, len(idx), chunk):
        sel = idx[start:start + chunk]
        c = 2.0 * np.sqrt(nu * t[sel])
        y = x[sel, None] - c[:, None] * z[None, :]
        expo = logw[None, :] - np.cos(math.pi * y) / (2.0 * math.pi * nu)
        expo -= expo.max(axis=1, keepdims=True)
        weight = np.exp(expo)
        num = np.sum(weight * np.sin(math.pi * y), axis=1)
        den = np.sum(weight, axis=1)
        out[sel] = -num / den
    return out


def burgers_reference(points: np.ndarray, nu: float = BURGERS_NU, n_nodes: int = 200,
                      verify: bool = True, tol: float = 1e-8) -> np.ndarray:
    """(n, 2) 점 배열의 Burgers 기준해; verify 면 절반 노드 수와 비교"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    values = burgers_cole_hopf(points[:, 0], points[:, 1], nu, n_nodes)
    if not np.all(np.isfinite(values)):
        raise ReferenceSolutionError("Burgers 구적 결과에 비유한 값이 있습니다",
                                     {"n_nodes": n_nodes, "n_bad": int(np.sum(~np.isfinite(values)))})
    if verify and len(points):
        coarse = burgers_cole_hopf(points[:, 0], points[:, 1], nu, n_nodes // 2)
        drift = float(np.max(np.abs(coarse - values)))
        if drift > tol:
            raise ReferenceSolutionError("Burgers Gauss–Hermite 구적이 수렴하지 않았습니다",
                                         {"n_nodes": n_nodes, "max_change": drift, "tol": tol})
    return values


def allen_cahn_initial(x):
    return x ** 2 * np.cos(math.pi * x)


def _allen_cahn_mol(n_intervals: int, times: np.ndarray, diffusion: float):
    x = np.linspace(-1.0, 1.0, n_intervals + 1)
    h = x[1] - x[0]
    coef = diffusion / (h * h)
    u0 = allen_cahn_initial(x[1:-1])

    def rhs(_t, u):
        padded = np.concatenate(([-1.0], u, [-1.0]))
        lap = padded[:-2] - 2.0 * u + padded[2:]
        return coef * lap + 5.0 * (u - u ** 3)

    sol = solve_ivp(rhs, (0.0, float(times[-1])), u0, method="RK45", t_eval=times,
                    rtol=1e-10, atol=1e-12)
    if sol.status != 0:
        raise ReferenceSolutionError("Allen–Cahn MOL 적분 실패",
                                     {"message": sol.message, "n_intervals": n_intervals})
    field = np.full((len(x), len(times)), -1.0)
    field[1:-1, :] = sol.y
    return x, field


@contextlib.contextmanager
def _file_lock(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a+") as handle:
        if fcntl is not None:
            fcntl.flock(handle.fileno(), fcntl.LOCK_EX)
        try:
            yield
        finally:
            if fcntl is not None:
                fcntl.flock(handle.fileno(), fcntl.LOCK_UN)


def _richardson(coarse: np.ndarray, fine: np.ndarray) -> np.ndarray:
    """2차 정확도 해 두 개 (h, h/2) → coarse 격자 위 외삽값"""
    return (4.0 * fine[::2, :] - coarse) / 3.0


class AllenCahnReference:
    """(x, t) 격자 위 MOL 기준해

    N, 2N, 4N 구간으로 푼다. (2N, 4N) 외삽값을 N 격자에 저장하고, h 를 절반으로
    줄였을 때 외삽값의 최대 변화 |R(2N,4N) − R(N,2N)| 가 tol 을 넘으면 실패로 본다.
    """

    def __init__(self, n_intervals: int = 1200, n_times: int = 1001, diffusion: float = ALLEN_CAHN_D,
                 cache_dir: Optional[Path] = None, tol: float = 1e-6):
        if n_intervals < 1024:
            raise ValueError(f"n_intervals 는 1024 이상이어야 합니다: {n_intervals}")
        self.n_intervals = n_intervals
        self.n_times = n_times
        self.diffusion = diffusion
        self.cache_dir = Path(cache_dir) if cache_dir else DEFAULT_CACHE_DIR
        self.tol = tol
        self.diagnostics = {}
        self._spline = None

    @property
    def cache_path(self) -> Path:
        return self.cache_dir / f"allen-cahn_N{self.n_intervals}_T{self.n_times}_D{self.diffusion:g}_R3.gprf"

    def _solve(self):
        times = np.linspace(0.0, 1.0, self.n_times)
        n = self.n_intervals
        x, u_n = _allen_cahn_mol(n, times, self.diffusion)
        _, u_2n = _allen_cahn_mol(2 * n, times, self.diffusion)
        _, u_4n = _allen_cahn_mol(4 * n, times, self.diffusion)
        previous = _richardson(u_n, u_2n)
        field = _richardson(u_2n, u_4n)[::2, :]
        change = float(np.max(np.abs(field - previous)))
        field[0, :] = -1.0
        field[-1, :] = -1.0
        self.diagnostics = {"max_change_halving_h": change, "n_intervals": n, "tol": self.tol}
        if not change <= self.tol:
            raise ReferenceSolutionError("Allen–Cahn MOL 기준해가 격자 수렴 검사를 통과하지 못했습니다",
                                         self.diagnostics)
        logger.debug("Allen–Cahn 기준해 격자 절반 변화 %.3e", change)
        return x, times, field

    def load(self):
        if self._spline is not None:
            return self
        path = self.cache_path
        with _file_lock(path.with_suffix(".lock")):
            if path.exists():
                (x, times), field = formats.load_field(path)
                logger.debug("Allen–Cahn 기준해 캐시 사용: %s", path)
            else:
                logger.info("Allen–Cahn 기준해 계산 중 (N=%d)", self.n_intervals)
                x, times, field = self._solve()
                formats.save_field(path, [x, times], field)
        self._spline = RectBivariateSpline(x, times, field, kx=3, ky=3, s=0)
        return self

    def __call__(self, points: np.ndarray) -> np.ndarray:
        self.load()
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return self._spline.ev(points[:, 0], points[:, 1])


def react_rate_exact_k(x):
    """k(x) = 0.1 + exp(−0.5 (x − 0.5)² / 0.15²)"""
    x = np.asarray(x, dtype=np.float64)
    return 0.1 + np.exp(-0.5 * (x - 0.5) ** 2 / 0.15 ** 2)


@functools.lru_cache(maxsize=4)
def react_rate_solution(n_intervals: int = 4096) -> CubicSpline:
    """λu'' − k(x)u = sin(2πx), u(0) = u(1) = 0 의 2차 유한차분 해"""
    x = np.linspace(0.0, 1.0, n_intervals + 1)
    h = x[1] - x[0]
    xi = x[1:-1]
    n = len(xi)
    main = -2.0 * REACT_LAMBDA / h ** 2 - react_rate_exact_k(xi)
    off = np.full(n, REACT_LAMBDA / h ** 2)
    ab = np.zeros((3, n))
    ab[0, 1:] = off[1:]
    ab[1, :] = main
    ab[2, :-1] = off[:-1]
    u = np.zeros_like(x)
    u[1:-1] = solve_banded((1, 1), ab, np.sin(2.0 * math.pi * xi))
    if not np.all(np.isfinite(u)):
        raise ReferenceSolutionError("react-rate 유한차분 해가 비유한 값입니다", {"n_intervals": n_intervals})
    return CubicSpline(x, u)


_ALLEN_CAHN_CACHE = {}


def reference_solution(name: str, points: np.ndarray, cache_dir: Optional[Path] = None) -> np.ndarray:
    """burgers / allen-cahn 의 기준 필드 값"""
    if name == "burgers":
        return burgers_reference(points)
    if name == "allen-cahn":
        key = str(Path(cache_dir) if cache_dir else DEFAULT_CACHE_DIR)
        ref = _ALLEN_CAHN_CACHE.get(key)
        if ref is None:
            ref = AllenCahnReference(cache_dir=cache_dir)
            _ALLEN_CAHN_CACHE[key] = ref
        return ref(points)
    raise ReferenceSolutionError(f"{name} 문제에는 수치 기준해가 없습니다 (exact_solution 사용)")
