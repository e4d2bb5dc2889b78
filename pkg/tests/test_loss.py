import numpy as np
import pytest

from gpinn import autodiff as ad
from gpinn.errors import LossError
from gpinn.loss import (CompiledLoss, LossWeights, PointSets, loss_b, loss_f, loss_g, loss_terms,
                        total_loss)
from gpinn.metrics import sample_uniform
from gpinn.network import MlpParams
from gpinn.problems import Networks, boundary_points, build_problem, exact_fields, init_networks, observations

from .conftest import TINY_SIZES


def test_gradient_loss_at_origin_with_zero_network(poisson, zero_networks):
    # ∂f/∂x(0) = −94
    assert loss_g(poisson, zero_networks, [[0.0]], "x").value == pytest.approx(8836.0)


def test_brinkman_residual_loss_with_zero_network(brinkman):
    nets = Networks(MlpParams.zeros(TINY_SIZES))
    T_f = sample_uniform(brinkman.bounds, 32, seed=0)
    assert loss_f(brinkman, nets, T_f).value == pytest.approx(1.0)


def test_exact_solution_has_no_residual_loss(poisson):
    T_f = sample_uniform(poisson.bounds, 64, seed=2)
    assert loss_f(poisson, exact_fields(poisson), T_f).value < 1e-16
    assert loss_g(poisson, exact_fields(poisson), T_f, 0).value < 1e-14


def test_zero_gradient_weight_is_plain_pinn(poisson, tiny_networks):
    T_f = sample_uniform(poisson.bounds, 20, seed=1)
    sets = PointSets(T_f)
    pinn = total_loss(poisson, tiny_networks, sets, LossWeights(w_g=(0.0,))).value
    assert pinn == loss_f(poisson, tiny_networks, T_f).value


def test_gradient_enhanced_total(poisson, tiny_networks):
    T_f = sample_uniform(poisson.bounds, 20, seed=1)
    lg = loss_terms(poisson, tiny_networks, PointSets(T_f), LossWeights(w_g=(0.01,)))
    assert set(lg.terms) == {"L_f", "L_g_x"}
    expected = lg.terms["L_f"].value + 0.01 * lg.terms["L_g_x"].value
    assert lg.total.value == pytest.approx(expected, rel=1e-14)


def test_inverse_problem_terms(brinkman):
    nets = init_networks(brinkman, TINY_SIZES, seed=0)
    sets = PointSets(sample_uniform(brinkman.bounds, 16, seed=0), boundary_points(brinkman), observations(brinkman))
    assert set(loss_terms(brinkman, nets, sets, LossWeights(w_g=(0.0,))).terms) == {"L_f", "L_b", "L_i"}
    assert set(loss_terms(brinkman, nets, sets, LossWeights(w_g=(0.1,))).terms) == {"L_f", "L_b", "L_i", "L_g_x"}


def test_hard_constraint_problem_has_no_boundary_loss(poisson, tiny_networks):
    with pytest.raises(LossError):
        loss_b(poisson, tiny_networks, [])


def test_empty_residual_set(poisson, tiny_networks):
    with pytest.raises(LossError):
        loss_f(poisson, tiny_networks, np.zeros((0, 1)))


def test_weight_validation(poisson, tiny_networks):
    with pytest.raises(LossError):
        LossWeights(w_f=-1.0)
    with pytest.raises(LossError):
        LossWeights(w_g=(0.1, -0.1))
    with pytest.raises(LossError):
        total_loss(poisson, tiny_networks, PointSets([[0.5]]), LossWeights(w_g=(0.1, 0.1)))
    assert LossWeights.uniform(2, 0.5).w_g == (0.5, 0.5)


def test_unknown_axis(poisson, tiny_networks):
    with pytest.raises(LossError):
        loss_g(poisson, tiny_networks, [[0.5]], "t")


def test_added_points_keep_provenance():
    sets = PointSets(np.linspace(0.1, 1.0, 5).reshape(-1, 1))
    sets = sets.with_added(np.array([[0.15], [0.25]]), 1)
    sets = sets.with_added(np.array([[0.35], [0.45]]), 2)
    assert len(sets.T_f) == 9
    assert sets.T_g is sets.T_f
    np.testing.assert_array_equal(sets.provenance, [0, 0, 0, 0, 0, 1, 1, 2, 2])


@pytest.mark.parametrize("name", ["poisson-1d", "brinkman"])
def test_compiled_loss_matches_direct_graph(name):
    spec = build_problem(name)
    nets = init_networks(spec, (1, 5, 5, 1), seed=3)
    T_f = sample_uniform(spec.bounds, 12, seed=3)
    sets = PointSets(T_f, boundary_points(spec), observations(spec) if spec.is_inverse else None)
    weights = LossWeights(w_g=(0.01,))

    lg = loss_terms(spec, nets, sets, weights)
    direct_grad = [float(v.value) for v in ad.grad(lg.total, lg.fields.leaves)]

    compiled = CompiledLoss(spec, nets, sets, weights)
    ev = compiled(nets.flatten())
    assert compiled.n_params == nets.size
    assert ev.value == pytest.approx(lg.total.value, rel=1e-12)
    for key, node in lg.terms.items():
        assert ev.terms[key] == pytest.approx(node.value, rel=1e-12)
    np.testing.assert_allclose(ev.grad, direct_grad, rtol=1e-9, atol=1e-12)


def test_compiled_loss_replays_new_parameters(poisson):
    nets = init_networks(poisson, (1, 5, 1), seed=0)
    sets = PointSets(sample_uniform(poisson.bounds, 10, seed=0))
    weights = LossWeights(w_g=(0.01,))
    compiled = CompiledLoss(poisson, nets, sets, weights)

    moved = nets.flatten() + 0.1
    expected = total_loss(poisson, nets.unflatten(moved), sets, weights).value
    assert compiled(moved).value == pytest.approx(expected, rel=1e-12)

    # 중심 차분과 gradient 비교
    ev = compiled(moved)
    h = 1e-6
    for i in (0, 3, 7):
        e = np.zeros_like(moved)
        e[i] = h
        fd = (compiled(moved + e).value - compiled(moved - e).value) / (2 * h)
        assert ev.grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-6)

    with pytest.raises(LossError):
        compiled(moved[:-1])


def test_boundary_loss_for_zero_network():
    burgers = build_problem("burgers")
    zero = Networks(MlpParams.zeros((2, 4, 1)))
    T_b = [(np.array([[0.5, 0.0]]), np.array([-1.0]))]
    assert loss_b(burgers, zero, T_b).value == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["poisson-1d", "burgers"])
def test_loss_ignores_point_order(name, rng):
    spec = build_problem(name)
    nets = init_networks(spec, (spec.dim, 6, 6, 1), seed=4)
    T_f = sample_uniform(spec.bounds, 24, seed=4)
    weights = LossWeights.uniform(spec.dim, 0.1)
    shuffled = T_f[rng.permutation(len(T_f))]
    T_b = boundary_points(spec)
    a = total_loss(spec, nets, PointSets(T_f, T_b), weights).value
    b = total_loss(spec, nets, PointSets(shuffled, T_b), weights).value
    assert b == pytest.approx(a, rel=1e-12)


def test_total_loss_is_affine_in_each_weight(brinkman):
    nets = init_networks(brinkman, TINY_SIZES, seed=2)
    sets = PointSets(sample_uniform(brinkman.bounds, 16, seed=2), boundary_points(brinkman), observations(brinkman))
    terms = loss_terms(brinkman, nets, sets, LossWeights(w_g=(1.0,))).terms
    base = {"L_f": terms["L_f"].value, "L_b": terms["L_b"].value, "L_i": terms["L_i"].value,
            "L_g_x": terms["L_g_x"].value}
    for a in (0.0, 1e-3, 0.5, 7.0):
        cases = [
            (LossWeights(w_g=(a,)), base["L_f"] + base["L_b"] + base["L_i"] + a * base["L_g_x"]),
            (LossWeights(w_f=a), a * base["L_f"] + base["L_b"] + base["L_i"]),
            (LossWeights(w_b=a), base["L_f"] + a * base["L_b"] + base["L_i"]),
            (LossWeights(w_i=a), base["L_f"] + base["L_b"] + a * base["L_i"]),
        ]
        for weights, expected in cases:
            assert total_loss(brinkman, nets, sets, weights).value == pytest.approx(expected, rel=1e-12), weights


@pytest.mark.parametrize("name", ["brinkman", "react-rate-inv"])
def test_inverse_unknown_gradients_match_finite_differences(name):
    spec = build_problem(name)
    nets = init_networks(spec, (1, 5, 5, 1), seed=1)
    sets = PointSets(sample_uniform(spec.bounds, 12, seed=1), boundary_points(spec),
                     observations(spec))
    compiled = CompiledLoss(spec, nets, sets, LossWeights(w_g=(0.1,)))
    flat = nets.flatten()
    ev = compiled(flat)

    if spec.inverse:
        # 역문제 스칼라 (log 값) 는 벡터 끝에 있다
        indices = list(range(nets.u.size, nets.size))
    else:
        k_start = nets.u.size
        indices = list(range(k_start, k_start + nets.k.size))
    assert indices

    h = 1e-6
    for i in indices:
        e = np.zeros_like(flat)
        e[i] = h
        fd = (compiled(flat + e).value - compiled(flat - e).value) / (2 * h)
        assert ev.grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-8), f"{name} index {i}"
