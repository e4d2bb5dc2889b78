import math

import numpy as np
import pytest

from gpinn import autodiff as ad
from gpinn.autodiff import Graph
from gpinn.errors import GraphError

THRESHOLDS = {1: 1e-7, 2: 1e-5, 3: 1e-4}
POINTS = np.linspace(-1.3, 1.3, 7)

PRIMITIVE_FUNCTIONS = {
    "add": lambda x: x + x * 0.5,
    "sub": lambda x: 2.0 - x,
    "mul": lambda x: x * ad.sin(x),
    "div": lambda x: 1.0 / (1.0 + x * x),
    "neg": lambda x: -ad.cos(x),
    "pow_int": lambda x: x ** 3,
    "sin": ad.sin,
    "cos": ad.cos,
    "exp": ad.exp,
    "tanh": ad.tanh,
    "cosh": ad.cosh,
}

UNARY = (
    ad.sin,
    ad.cos,
    ad.tanh,
    lambda y: y * y,
    lambda y: ad.exp(y * 0.5),
)


def _random_composition(rng, depth: int = 3):
    choices = rng.integers(len(UNARY), size=depth)
    coeffs = rng.uniform(-1.0, 1.0, size=(depth, 2))

    def fn(x):
        y = x
        for c, (a, b) in zip(choices, coeffs):
            y = UNARY[c](y * float(a) + float(b))
        return y * ad.cos(x) + x
    return fn


@pytest.mark.parametrize("name", sorted(PRIMITIVE_FUNCTIONS))
@pytest.mark.parametrize("order", [1, 2, 3])
def test_primitive_derivatives_match_finite_differences(name, order):
    err = ad.check_grad(PRIMITIVE_FUNCTIONS[name], POINTS, order)
    assert err < THRESHOLDS[order], f"{name} order {order}: {err}"


@pytest.mark.parametrize("order", [1, 2, 3])
def test_random_compositions(order):
    rng = np.random.default_rng(2021)
    for case in range(50):
        fn = _random_composition(rng)
        at = rng.uniform(-1.0, 1.0, size=3)
        err = ad.check_grad(fn, at, order)
        assert err < THRESHOLDS[order], f"case {case} order {order}: {err}"


def test_tanh_derivatives_at_zero():
    g = Graph()
    x = g.input(0.0)
    y = ad.tanh(x)
    assert ad.derivative(y, x, 1).value == pytest.approx(1.0)
    assert ad.derivative(y, x, 2).value == pytest.approx(0.0, abs=1e-15)
    assert ad.derivative(y, x, 3).value == pytest.approx(-2.0)


def test_lane_gradient_is_elementwise():
    g = Graph()
    x = g.input(np.array([0.0, 1.0, 2.0]), lanes=True)
    (dy,) = ad.grad(x * x, [x])
    np.testing.assert_allclose(dy.value, [0.0, 2.0, 4.0])


def test_scalar_leaf_collects_all_lanes():
    g = Graph()
    xs = np.array([0.5, -1.0, 2.0])
    x = g.input(xs, lanes=True)
    p = g.input(1.5)
    loss = ad.sum_lanes((p * x) * (p * x))
    (dp,) = ad.grad(loss, [p])
    assert not dp.lanes
    assert dp.value == pytest.approx(2.0 * 1.5 * np.sum(xs ** 2))


def test_gradient_of_independent_node_is_zero():
    g = Graph()
    x = g.input(1.0)
    y = g.input(2.0)
    (d,) = ad.grad(ad.sin(x), [y])
    assert d.value == 0.0


def test_mixing_graphs_is_rejected():
    a = Graph().input(1.0)
    b = Graph().input(2.0)
    with pytest.raises(GraphError):
        a + b
    with pytest.raises(GraphError):
        ad.grad(ad.sin(a), [b])


def test_apply_validates_arity_and_primitive():
    g = Graph()
    x = g.input(1.0)
    with pytest.raises(GraphError):
        ad.apply("add", x)
    with pytest.raises(GraphError):
        ad.apply("log", x)
    with pytest.raises(GraphError):
        x ** -1


def test_non_finite_leaf_is_rejected():
    g = Graph()
    with pytest.raises(GraphError):
        g.input(float("nan"))
    with pytest.raises(GraphError):
        g.constant(np.array([1.0, math.inf]))


def test_program_replays_with_new_leaf_values():
    g = Graph()
    x = g.input(np.zeros(1), lanes=True)
    p = g.input(1.0)
    y = ad.sin(x) * p
    (dp,) = ad.grad(ad.sum_lanes(y), [p])
    program = ad.compile([y, dp])
    assert len(program) <= len(g)

    xs = np.linspace(0.0, 1.0, 11)
    values = program.run({x: xs, p: 2.0})
    np.testing.assert_allclose(values[0], 2.0 * np.sin(xs))
    assert values[1] == pytest.approx(np.sum(np.sin(xs)))

    # 기록된 값은 그대로
    assert p.value == 1.0


def test_compile_needs_outputs():
    with pytest.raises(GraphError):
        ad.compile([])


def test_check_grad_order_range():
    with pytest.raises(GraphError):
        ad.check_grad(ad.sin, 0.0, order=4)


def test_constant_has_zero_derivative():
    g = Graph()
    x = g.input(2.0)
    c = ad.constant(g, 5.0)
    assert (x + c).value == 7.0
    (dc,) = ad.grad(c * x, [c])
    assert dc.value == 2.0
    (dx,) = ad.grad(c + 0.0, [x])
    assert dx.value == 0.0


def test_sin_third_derivative():
    g = Graph()
    x = g.input(0.0)
    assert ad.derivative(ad.sin(x), x, 3).value == pytest.approx(-1.0)


def test_check_grad_on_compositions():
    assert ad.check_grad(lambda x: ad.tanh(3.0 * x + 1.0), 0.2, order=1) < 1e-7
    assert ad.check_grad(lambda x: ad.exp(ad.sin(x)), 0.5, order=2) < 1e-5


def test_apply_rejects_non_node_operands():
    g = Graph()
    x = g.input(1.0)
    with pytest.raises(GraphError):
        ad.apply("sin", 1.0)
    with pytest.raises(GraphError):
        ad.apply("add", 2.0, x)


@pytest.mark.parametrize("order", [1, 2])
def test_derivative_is_linear(order):
    rng = np.random.default_rng(7)
    for case in range(30):
        f, h = _random_composition(rng), _random_composition(rng)
        a, b = rng.uniform(-2.0, 2.0, size=2)
        g = Graph()
        x = g.input(rng.uniform(-1.0, 1.0, size=4), lanes=True)
        fx, hx = f(x), h(x)
        combined = ad.derivative(fx * float(a) + hx * float(b), x, order).value
        separate = a * ad.derivative(fx, x, order).value + b * ad.derivative(hx, x, order).value
        np.testing.assert_allclose(combined, separate, rtol=1e-10, atol=1e-12, err_msg=f"case {case}")


def test_mixed_partials_commute():
    rng = np.random.default_rng(11)
    for case in range(50):
        f1, f2, f3 = (_random_composition(rng, depth=2) for _ in range(3))
        a, b = rng.uniform(-1.0, 1.0, size=2)
        g = Graph()
        x = g.input(rng.uniform(-1.0, 1.0, size=4), lanes=True)
        t = g.input(rng.uniform(0.0, 1.0, size=4), lanes=True)
        u = f1(x * float(a) + t * float(b)) * f2(t) + f3(x * t)
        (ux,) = ad.grad(u, [x])
        (ut,) = ad.grad(u, [t])
        (uxt,) = ad.grad(ux, [t])
        (utx,) = ad.grad(ut, [x])
        np.testing.assert_allclose(uxt.value, utx.value, rtol=1e-10, atol=1e-12, err_msg=f"case {case}")


def test_mixed_partial_of_known_function():
    g = Graph()
    x = g.input(0.3)
    t = g.input(0.7)
    u = ad.sin(x * t) * ad.exp(x)
    (ux,) = ad.grad(u, [x])
    (uxt,) = ad.grad(ux, [t])
    (ut,) = ad.grad(u, [t])
    (utx,) = ad.grad(ut, [x])
    # ∂²/∂x∂t [sin(xt) eˣ] = eˣ (cos(xt) − xt sin(xt) + x cos(xt))
    xv, tv = 0.3, 0.7
    expected = math.exp(xv) * (math.cos(xv * tv) - xv * tv * math.sin(xv * tv) + xv * math.cos(xv * tv))
    assert uxt.value == pytest.approx(expected, rel=1e-13)
    assert utx.value == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_graph_growth_per_differentiation_is_linear(order):
    rng = np.random.default_rng(5)
    for case in range(20):
        g = Graph()
        x = g.input(rng.uniform(-1.0, 1.0, size=3), lanes=True)
        d = _random_composition(rng, depth=4)(x)
        for _ in range(order):
            before = len(g)
            (d,) = ad.grad(d, [x])
            assert len(g) - before <= 8 * before + 8, f"case {case}: {before} → {len(g)}"
