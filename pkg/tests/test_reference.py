import math

import numpy as np
import pytest

from gpinn import formats, reference
from gpinn.errors import ReferenceSolutionError
from gpinn.reference import (AllenCahnReference, allen_cahn_initial, burgers_cole_hopf, burgers_reference,
                             react_rate_exact_k, react_rate_solution, REACT_LAMBDA)


def test_burgers_initial_condition():
    x = np.linspace(-1.0, 1.0, 11)
    np.testing.assert_allclose(burgers_cole_hopf(x, 0.0), -np.sin(math.pi * x))


def test_burgers_is_odd_in_x():
    x = np.array([0.1, 0.4, 0.8])
    for t in (0.2, 0.6, 1.0):
        assert burgers_cole_hopf(0.0, t)[0] == pytest.approx(0.0, abs=1e-10)
        np.testing.assert_allclose(burgers_cole_hopf(-x, t), -burgers_cole_hopf(x, t), atol=1e-10)


def test_burgers_reference_is_bounded():
    pts = np.array([[-0.5, 0.25], [0.3, 0.5], [0.05, 1.0], [0.9, 0.75]])
    u = burgers_reference(pts)
    assert np.all(np.isfinite(u))
    assert np.all(np.abs(u) <= 1.0)
    # 초기 파형 −sin(πx) 의 부호가 유지된다
    assert u[0] > 0 and u[1] < 0


def test_react_rate_k():
    assert react_rate_exact_k(0.5) == pytest.approx(1.1)
    assert react_rate_exact_k(0.0) == pytest.approx(0.1 + math.exp(-0.5 / 0.0225 * 0.25))


def test_react_rate_solution_satisfies_equation():
    s = react_rate_solution()
    assert s(0.0) == pytest.approx(0.0, abs=1e-14)
    assert s(1.0) == pytest.approx(0.0, abs=1e-14)
    x = np.linspace(0.05, 0.95, 19)
    res = REACT_LAMBDA * s(x, 2) - react_rate_exact_k(x) * s(x) - np.sin(2 * math.pi * x)
    assert np.max(np.abs(res)) < 1e-3


def test_allen_cahn_needs_fine_grid():
    with pytest.raises(ValueError):
        AllenCahnReference(n_intervals=512)


@pytest.mark.slow
def test_allen_cahn_reference_is_cached(cache_dir):
    ref = AllenCahnReference(cache_dir=cache_dir)
    pts = np.array([[-1.0, 0.5], [1.0, 0.5], [0.3, 0.0], [0.0, 1.0]])
    u = ref(pts)
    assert u[0] == pytest.approx(-1.0)
    assert u[1] == pytest.approx(-1.0)
    assert u[2] == pytest.approx(allen_cahn_initial(0.3), abs=1e-6)
    assert ref.cache_path.exists()

    (x, t), field = formats.load_field(ref.cache_path)
    assert field.shape == (len(x), len(t))

    again = AllenCahnReference(cache_dir=cache_dir)
    np.testing.assert_array_equal(again(pts), u)


def _fake_mol(order: int):
    """오차가 h^order 로 줄어드는 가짜 MOL 해"""

    def solve(n_intervals, times, diffusion):
        x = np.linspace(-1.0, 1.0, n_intervals + 1)
        return x, np.full((len(x), len(times)), -1.0 + (1.0 / n_intervals) ** order)
    return solve


def test_allen_cahn_converged_field_is_cached(cache_dir, monkeypatch):
    monkeypatch.setattr(reference, "_allen_cahn_mol", _fake_mol(2))
    ref = AllenCahnReference(n_intervals=1024, n_times=5, cache_dir=cache_dir)
    u = ref(np.array([[0.0, 0.5], [0.5, 1.0]]))
    np.testing.assert_allclose(u, [-1.0, -1.0], atol=1e-12)
    assert ref.diagnostics["max_change_halving_h"] <= 1e-6
    assert ref.cache_path.exists()


def test_allen_cahn_grid_divergence_is_an_error(cache_dir, monkeypatch):
    monkeypatch.setattr(reference, "_allen_cahn_mol", _fake_mol(1))
    ref = AllenCahnReference(n_intervals=1024, n_times=5, cache_dir=cache_dir)
    with pytest.raises(ReferenceSolutionError) as info:
        ref(np.array([[0.0, 0.5]]))
    assert info.value.diagnostics["max_change_halving_h"] == pytest.approx(1.0 / (6 * 1024))
    assert info.value.diagnostics["tol"] == 1e-6
    assert not ref.cache_path.exists()


def test_allen_cahn_tolerance_is_not_loosened(cache_dir, monkeypatch):
    # 외삽값 변화가 tol 의 2배면 실패해야 한다
    monkeypatch.setattr(reference, "_allen_cahn_mol", _fake_mol(1))
    change = 1.0 / (6 * 1024)
    with pytest.raises(ReferenceSolutionError):
        AllenCahnReference(n_intervals=1024, n_times=5, cache_dir=cache_dir, tol=change / 2)(np.array([[0.0, 0.5]]))
    ok = AllenCahnReference(n_intervals=1024, n_times=5, cache_dir=cache_dir, tol=change * 1.01)
    assert ok(np.array([[0.0, 0.5]]))[0] == pytest.approx(-1.0 + change, abs=1e-12)
