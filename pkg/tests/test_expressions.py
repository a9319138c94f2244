import math

import numpy as np
import pytest

from chaplygin_lab import expressions as ex
from chaplygin_lab.autodiff import Dual
from chaplygin_lab.errors import (DomainError, ExprSyntaxError, UnboundVariable,
                                  UnknownIdentifier)


def test_parse_power_times():
    e = ex.parse("x^2*y", ("x", "y"))
    assert e == ex.Mul(ex.Pow(ex.Var("x"), ex.Num(2.0)), ex.Var("y"))


def test_parse_counterexample_density_form():
    e = ex.parse("-x^2*y/(1+x^2*y^2)", ("x", "y"))
    assert ex.eval_real(e, {"x": 1.0, "y": 1.0}) == pytest.approx(-0.5, abs=1e-15)


def test_syntax_error_position():
    with pytest.raises(ExprSyntaxError) as err:
        ex.parse("x +* y", ("x", "y"))
    assert err.value.position == 3


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier):
        ex.parse("x + z", ("x", "y"))
    with pytest.raises(UnknownIdentifier):
        ex.parse("foo(x)", ("x",))


def test_function_arity_checked():
    with pytest.raises(ExprSyntaxError):
        ex.parse("atan2(x)", ("x",))
    with pytest.raises(ExprSyntaxError):
        ex.parse("sin(x, x)", ("x",))


def test_no_implicit_multiplication():
    with pytest.raises(ExprSyntaxError):
        ex.parse("2 x", ("x",))


def test_eval_real_basic():
    e = ex.parse("x^2*y", ("x", "y"))
    assert ex.eval_real(e, {"x": 1.0, "y": 1.0}) == 1.0
    assert ex.eval_real(e, {"x": 2.0, "y": 3.0}) == 12.0


def test_eval_real_domain_errors():
    assert_raises = pytest.raises
    with assert_raises(DomainError):
        ex.eval_real(ex.parse("1/x", ("x",)), {"x": 0.0})
    with assert_raises(DomainError):
        ex.eval_real(ex.parse("ln(x)", ("x",)), {"x": -1.0})
    with assert_raises(DomainError):
        ex.eval_real(ex.parse("sqrt(x)", ("x",)), {"x": -2.0})
    with assert_raises(DomainError):
        ex.eval_real(ex.parse("exp(x)", ("x",)), {"x": 1e4})
    with assert_raises(UnboundVariable):
        ex.eval_real(ex.parse("x + y", ("x", "y")), {"x": 1.0})


def test_eval_dual_partial():
    e = ex.parse("x^2*y", ("x", "y"))
    x, y = Dual.seed([2.0, 3.0])
    out = ex.eval_dual(e, {"x": x, "y": y})
    assert out.val == 12.0
    assert np.allclose(out.tangent, [12.0, 4.0])


def test_eval_dual_constant_has_zero_tangent():
    e = ex.parse("3.5 + sin(1.0)", ("x",))
    (x,) = Dual.seed([0.7])
    out = ex.eval_dual(e, {"x": x})
    assert out.val == pytest.approx(3.5 + math.sin(1.0))
    assert np.all(out.tangent == 0.0)


def test_eval_dual_matches_finite_difference():
    e = ex.parse("-x^2*y/(1+x^2*y^2)", ("x", "y"))
    x, y = Dual.seed([1.0, 1.0])
    out = ex.eval_dual(e, {"x": x, "y": y})
    h = 1e-6
    fd = (ex.eval_real(e, {"x": 1.0, "y": 1.0 + h})
          - ex.eval_real(e, {"x": 1.0, "y": 1.0 - h})) / (2 * h)
    assert abs(out.tangent[1] - fd) < 1e-8


# random AST machinery ----------------------------------------------------------

def _random_ast(rng, depth, variables):
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.4:
            return ex.Num(round(float(rng.uniform(0.1, 2.0)), 6))
        return ex.Var(str(rng.choice(variables)))
    kind = rng.integers(0, 9)
    sub = lambda: _random_ast(rng, depth - 1, variables)
    if kind == 0:
        return ex.Add(sub(), sub())
    if kind == 1:
        return ex.Sub(sub(), sub())
    if kind == 2:
        return ex.Mul(sub(), sub())
    if kind == 3:
        return ex.Neg(sub())
    if kind == 4:
        return ex.Call("sin", (sub(),))
    if kind == 5:
        return ex.Call("cos", (sub(),))
    if kind == 6:
        # guarded division: denominator 1 + w^2 stays away from zero
        w = sub()
        return ex.Div(sub(), ex.Add(ex.Num(1.0), ex.Mul(w, w)))
    if kind == 7:
        return ex.Pow(sub(), ex.Num(float(rng.integers(0, 4))))
    w = sub()
    return ex.Call("sqrt", (ex.Add(ex.Num(1.0), ex.Mul(w, w)),))


def test_random_roundtrip_and_derivative(rng):
    variables = ("x", "y")
    checked = 0
    for _ in range(1000):
        ast = _random_ast(rng, int(rng.integers(1, 7)), variables)
        # pretty-print then re-parse is the identity on trees
        assert ex.parse(ex.to_text(ast), variables) == ast

        point = {v: float(rng.uniform(0.3, 1.2)) for v in variables}
        try:
            val = ex.eval_real(ast, point)
        except DomainError:
            continue
        if abs(val) > 1e6:
            continue
        seeds = Dual.seed([point["x"], point["y"]])
        out = ex.eval_dual(ast, {"x": seeds[0], "y": seeds[1]})
        h = 1e-6
        for i, v in enumerate(variables):
            plus = dict(point)
            minus = dict(point)
            plus[v] += h
            minus[v] -= h
            fd = (ex.eval_real(ast, plus) - ex.eval_real(ast, minus)) / (2 * h)
            assert abs(out.tangent[i] - fd) <= 1e-6 * (1.0 + abs(val) + abs(fd))
        checked += 1
    assert checked > 500


def test_degree_bounds():
    v = ("x", "y")
    assert ex.degree_bound(ex.parse("3.0", v)) == 0
    assert ex.degree_bound(ex.parse("x", v)) == 1
    assert ex.degree_bound(ex.parse("-x*y", v)) == 2
    assert ex.degree_bound(ex.parse("x^3 + y", v)) == 3
    assert ex.degree_bound(ex.parse("x/2.0", v)) == 1
    assert ex.degree_bound(ex.parse("sin(x)", v)) is None
    assert ex.degree_bound(ex.parse("1/(1+x^2)", v)) is None
    assert ex.degree_bound(ex.parse("sin(2.0)*x*y", v)) == 2


def test_parsed_field_smooth_map():
    pf = ex.parse_field([["-x*y", "0"]], ("x", "y"))
    m = pf.to_smooth_map()
    assert m.degree_bound == 2
    val, jac = m.value_and_jacobian([2.0, 3.0])
    assert np.allclose(val, [[-6.0, 0.0]])
    assert np.allclose(jac[0, 0], [-3.0, -2.0])
