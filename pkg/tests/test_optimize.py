import numpy as np
import pytest

from gpinn import formats
from gpinn.config import RarConfig, TrainConfig, load_experiment
from gpinn.errors import ConfigError, TrainingDivergedError
from gpinn.loss import LossEvaluation
from gpinn.optimize import (CHECKPOINT_NAME, AdamState, Trainer, adam_step, build_point_sets, lbfgs_minimize,
                            rar_refine, select_top, train)
from gpinn.problems import build_problem


def tiny_config(**overrides) -> TrainConfig:
    data = {
        "depth": 2,
        "width": 6,
        "iterations": 20,
        "n_points": 8,
        "snapshot_every": 10,
        "learning_rate": 1e-3,
        "weights": {"w": 0.01},
    }
    data.update(overrides)
    return TrainConfig(**data)


def test_first_adam_step_moves_by_learning_rate():
    state = AdamState.zeros(3, learning_rate=1e-3)
    x = adam_step(state, np.zeros(3), np.array([1.0, -2.0, 0.5]))
    np.testing.assert_allclose(x, [-1e-3, 1e-3, -1e-3], rtol=1e-6)
    assert state.t == 1


def test_adam_rejects_bad_input():
    state = AdamState.zeros(2)
    with pytest.raises(ValueError):
        adam_step(state, np.zeros(3), np.zeros(3))
    with pytest.raises(TrainingDivergedError):
        adam_step(state, np.zeros(2), np.array([1.0, np.nan]))
    assert state.t == 0


def test_lbfgs_quadratic():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(5, 5))
    a = q @ q.T + 5 * np.eye(5)
    b = rng.normal(size=5)

    def objective(x):
        return 0.5 * x @ a @ x - b @ x, a @ x - b

    res = lbfgs_minimize(objective, np.zeros(5), gtol=1e-12, ftol=0.0, max_iter=200)
    np.testing.assert_allclose(res.x, np.linalg.solve(a, b), atol=1e-8)
    assert res.grad_norm < 1e-8


def test_lbfgs_rosenbrock():
    def objective(x):
        a, b = x
        value = (1 - a) ** 2 + 100 * (b - a * a) ** 2
        grad = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
        return value, grad

    seen = []
    res = lbfgs_minimize(objective, np.array([-1.2, 1.0]), gtol=1e-10, ftol=0.0, max_iter=500,
                         callback=lambda k, x, f: seen.append(k))
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-5)
    assert res.value < 1e-8
    assert seen == list(range(1, res.iterations + 1))


def test_lbfgs_stationary_start():
    res = lbfgs_minimize(lambda x: (float(x @ x), 2 * x), np.zeros(3))
    assert res.converged
    assert res.iterations == 0


def test_lbfgs_non_finite_start():
    with pytest.raises(TrainingDivergedError):
        lbfgs_minimize(lambda x: (np.inf, x), np.ones(2))


def test_select_top_largest_residuals():
    points = np.array([[0.0], [1.0], [2.0], [3.0]])
    picked = select_top(points, np.array([0.1, -5.0, 3.0, 7.0]), 3)
    assert picked.ravel().tolist() == [3.0, 1.0, 2.0]
    # 동률이면 앞의 후보
    assert select_top(points, np.ones(4), 2).ravel().tolist() == [0.0, 1.0]


def test_point_sets():
    spec = build_problem("brinkman")
    sets = build_point_sets(spec, tiny_config(n_points=12))
    assert sets.T_f.shape == (12, 1)
    assert len(sets.T_b) == 2
    assert len(sets.T_i) == 5

    again = build_point_sets(spec, tiny_config(n_points=12))
    np.testing.assert_array_equal(sets.T_f, again.T_f)

    grid = build_point_sets(build_problem("poisson-1d"), tiny_config(n_points=5, sampling="equispaced"))
    np.testing.assert_allclose(grid.T_f.ravel(), np.linspace(0, np.pi, 5))
    with pytest.raises(ConfigError):
        build_point_sets(build_problem("burgers"), tiny_config(sampling="equispaced"))


def test_training_reduces_loss_and_is_deterministic(cache_dir):
    spec = build_problem("poisson-1d")
    steps = []
    result = train(spec, tiny_config(learning_rate=1e-2), cache_dir=cache_dir,
                   progress=lambda i, loss: steps.append(i))
    assert len(result.loss_history) == 20
    assert steps == list(range(1, 21))
    assert [s.iteration for s in result.snapshots] == [0, 10, 20]
    assert result.final.loss < result.snapshots[0].loss

    again = train(spec, tiny_config(learning_rate=1e-2), cache_dir=cache_dir)
    assert [s.as_row() for s in again.snapshots] == [s.as_row() for s in result.snapshots]

    summary = result.summary()
    assert summary["iterations"] == 20
    assert summary["n_points"] == 8
    assert summary["final"]["u_error"] == result.final.u_error


def test_inverse_parameter_is_trained(cache_dir):
    spec = build_problem("brinkman")
    result = train(spec, tiny_config(learning_rate=1e-2), cache_dir=cache_dir)
    trajectory = result.param_trajectories["nu_e"]
    assert [i for i, _ in trajectory] == [0, 10, 20]
    assert trajectory[0][1] == pytest.approx(1e-2)
    assert trajectory[-1][1] != trajectory[0][1]


class FlakyLoss:
    """지정한 호출에서 NaN 손실을 돌려주는 래퍼"""

    def __init__(self, real, fail_at):
        self.real = real
        self.fail_at = set(fail_at)
        self.calls = 0

    def __call__(self, flat):
        self.calls += 1
        ev = self.real(flat)
        if self.calls in self.fail_at:
            return LossEvaluation(float("nan"), ev.grad, ev.terms)
        return ev


def test_divergence_rolls_back_once_with_half_learning_rate(cache_dir):
    spec = build_problem("poisson-1d")
    trainer = Trainer(spec, tiny_config(snapshot_every=1000), cache_dir=cache_dir)
    trainer.loss = FlakyLoss(trainer.loss, {3})
    trainer.adam(10)
    assert trainer.iteration == 10
    assert len(trainer.result.loss_history) == 10
    assert trainer.result.lr_halved
    assert trainer.state.learning_rate == pytest.approx(5e-4)


def test_second_divergence_is_fatal(cache_dir, tmp_path):
    spec = build_problem("poisson-1d")
    trainer = Trainer(spec, tiny_config(snapshot_every=1000), cache_dir=cache_dir, checkpoint_dir=tmp_path)
    trainer.loss = FlakyLoss(trainer.loss, {3, 6})
    with pytest.raises(TrainingDivergedError) as info:
        trainer.adam(10)
    assert info.value.checkpoint == tmp_path / CHECKPOINT_NAME
    assert formats.load_checkpoint(info.value.checkpoint).iteration == 0


def test_resume_continues_bit_for_bit(cache_dir, tmp_path):
    spec = build_problem("poisson-1d")
    straight = train(spec, tiny_config(iterations=40, snapshot_every=20), cache_dir=cache_dir)

    first_dir = tmp_path / "first"
    first_dir.mkdir()
    first = train(spec, tiny_config(iterations=20, snapshot_every=20), cache_dir=cache_dir,
                  checkpoint_dir=first_dir)
    assert first.final.iteration == 20
    resumed = train(spec, tiny_config(iterations=40, snapshot_every=20), cache_dir=cache_dir,
                    resume_from=first_dir / CHECKPOINT_NAME)

    np.testing.assert_array_equal(resumed.networks.flatten(), straight.networks.flatten())
    assert resumed.loss_history == straight.loss_history
    assert [s.iteration for s in resumed.snapshots] == [0, 20, 40]


def test_rar_adds_top_points(cache_dir):
    spec = build_problem("poisson-1d")
    rar = RarConfig(m=2, rounds=3, candidates=40, iterations_per_round=5)
    result = rar_refine(spec, tiny_config(iterations=10), rar, cache_dir=cache_dir)
    assert len(result.points.T_f) == 8 + 6
    assert np.bincount(result.points.provenance).tolist() == [8, 2, 2, 2]
    assert [r["round"] for r in result.rounds] == [1, 2, 3]
    assert [r["n_points"] for r in result.rounds] == [10, 12, 14]
    assert result.final.iteration == 10 + 3 * 5


def test_rar_threshold_stops_early(cache_dir):
    spec = build_problem("poisson-1d")
    rar = RarConfig(m=2, rounds=3, candidates=40, iterations_per_round=5, threshold=1e9)
    result = rar_refine(spec, tiny_config(iterations=10), rar, cache_dir=cache_dir)
    assert len(result.points.T_f) == 8
    assert len(result.rounds) == 1
    assert result.rounds[0]["stopped"]


@pytest.mark.slow
def test_rar_concentrates_points_at_burgers_shock(cache_dir):
    spec = build_problem("burgers")
    config = TrainConfig(depth=3, width=20, optimizer="adam-then-lbfgs", iterations=3000, n_points=1000,
                         snapshot_every=1000, lbfgs={"max_iter": 1000, "round_max_iter": 100})
    rar = RarConfig(m=10, rounds=3, candidates=5000, iterations_per_round=200)
    result = rar_refine(spec, config, rar, cache_dir=cache_dir)

    added = result.points.T_f[result.points.provenance > 0]
    assert len(added) == 30
    # 균등 추출이면 |x| < 0.2 비율은 0.2
    near_shock = np.mean(np.abs(added[:, 0]) < 0.2)
    assert near_shock >= 0.5, added


@pytest.mark.slow
def test_gradient_enhanced_poisson_beats_plain_pinn(cache_dir):
    # 3.2.1 설정을 반복 수 절반으로, seed 두 개 평균
    cfg = load_experiment("3.2.1")
    spec = cfg.problem.build()
    errors = {}
    for method in ("pinn", "gpinn"):
        runs = []
        for seed in (0, 1):
            config = cfg.run_config(method=method, seed=seed)
            config.iterations = config.iterations // 2
            runs.append(train(spec, config, cache_dir=cache_dir).final.u_error)
        errors[method] = float(np.mean(runs))
    assert errors["gpinn"] < errors["pinn"], errors
