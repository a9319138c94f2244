import math

import numpy as np
import pytest

from chaplygin_lab import autodiff as ad
from chaplygin_lab.autodiff import Dual, Dual2, SmoothMap
from chaplygin_lab.errors import DomainError


def test_product_rule_exact():
    x, y = Dual.seed([1.7, -0.4])
    f = x * y
    assert f.val == 1.7 * -0.4
    assert np.allclose(f.tangent, [-0.4, 1.7])


def test_chain_rule_through_functions():
    (x,) = Dual.seed([0.8])
    out = ad.sin(ad.exp(x))
    expect = math.cos(math.exp(0.8)) * math.exp(0.8)
    assert out.tangent[0] == pytest.approx(expect, rel=1e-14)


def test_division_and_power():
    x, y = Dual.seed([2.0, 3.0])
    f = (x ** 3) / y
    assert f.val == pytest.approx(8.0 / 3.0)
    assert f.tangent[0] == pytest.approx(3 * 4.0 / 3.0)
    assert f.tangent[1] == pytest.approx(-8.0 / 9.0)


def test_domain_errors():
    (x,) = Dual.seed([-1.0])
    with pytest.raises(DomainError):
        ad.sqrt(x)
    with pytest.raises(DomainError):
        ad.log(x)
    with pytest.raises(DomainError):
        _ = x / Dual(0.0, np.zeros(1))
    with pytest.raises(DomainError):
        _ = Dual(0.0, np.zeros(1)) ** -1.0
    with pytest.raises(DomainError):
        ad.exp(Dual(1e4, np.zeros(1)))
    with pytest.raises(DomainError):
        ad.atan2(0.0, 0.0)


def test_jacobian_identity_map():
    m = SmoothMap(lambda q: [q[0], q[1], q[2]], 3)
    assert np.allclose(m.jacobian([0.3, -1.0, 2.0]), np.eye(3))


def test_jacobian_scalar_example():
    m = SmoothMap(lambda q: q[0] ** 2 * q[1], 2)
    val, jac = m.value_and_jacobian([2.0, 3.0])
    assert val == 12.0
    assert np.allclose(jac, [12.0, 4.0])


def test_real_equals_dual_value_part(rng):
    m = SmoothMap(lambda q: [[ad.sin(q[0]) * q[1], q[0] ** 2],
                             [ad.exp(q[1] * 0.1), 1.0]], 2)
    for _ in range(10):
        q = rng.uniform(-1, 1, 2)
        val = m.value(q)
        val2, _ = m.value_and_jacobian(q)
        assert np.array_equal(val, val2)


def test_metric_jacobian_matches_finite_difference(rng):
    def gt_fn(q):
        x, y = q
        return [[1.0 + x * x * y * y, 0.0], [0.0, 1.0]]

    m = SmoothMap(gt_fn, 2, (2, 2))
    for _ in range(5):
        q = rng.uniform(0.2, 1.5, 2)
        _, jac = m.value_and_jacobian(q)
        h = 1e-6
        for e in range(2):
            qp, qm = q.copy(), q.copy()
            qp[e] += h
            qm[e] -= h
            fd = (m.value(qp) - m.value(qm)) / (2 * h)
            assert np.max(np.abs(jac[..., e] - fd)) < 1e-6


def test_dual2_hessian():
    x, y = Dual2.seed([2.0, 3.0])
    f = x ** 2 * y
    assert f.val == 12.0
    assert np.allclose(f.g, [12.0, 4.0])
    assert np.allclose(f.h, [[6.0, 4.0], [4.0, 0.0]])


def test_dual2_matches_fd_of_gradient(rng):
    def fn(q):
        return ad.sin(q[0] * q[1]) + ad.exp(0.3 * q[0]) / (1.0 + q[1] ** 2)

    m = SmoothMap(fn, 2, ())
    for _ in range(5):
        q = rng.uniform(-1.0, 1.0, 2)
        _, _, hess = m.second_order_jet(q)
        assert np.allclose(hess, hess.T, atol=1e-14)
        h = 1e-6
        for e in range(2):
            qp, qm = q.copy(), q.copy()
            qp[e] += h
            qm[e] -= h
            _, gp = m.value_and_jacobian(qp)
            _, gm_ = m.value_and_jacobian(qm)
            fd = (gp - gm_) / (2 * h)
            assert np.max(np.abs(hess[..., e] - fd)) < 5e-6


def test_atan2_derivatives():
    y, x = Dual.seed([3.0, 2.0])
    out = ad.atan2(y, x)
    r2 = 13.0
    assert np.allclose(out.tangent, [2.0 / r2, -3.0 / r2])
    y2, x2 = Dual2.seed([3.0, 2.0])
    out2 = ad.atan2(y2, x2)
    h = 1e-6
    fd = (math.atan2(3.0, 2.0 + h) - 2 * math.atan2(3.0, 2.0)
          + math.atan2(3.0, 2.0 - h)) / h ** 2
    assert out2.h[1, 1] == pytest.approx(fd, abs=1e-4)


def test_numpy_ufunc_dispatch_on_object_arrays():
    q = np.array(Dual.seed([0.5, 1.0]), dtype=object)
    sines = np.sin(q)
    assert sines[0].val == pytest.approx(math.sin(0.5))


def test_smooth_map_shape_guard():
    m = SmoothMap(lambda q: [q[0], q[1]], 2, (2,))
    m.value([1.0, 2.0])
    bad = SmoothMap(lambda q: [q[0]], 2, (2,))
    with pytest.raises(ValueError):
        bad.value([1.0, 2.0])


def test_smooth_map_nonfinite_guard():
    m = SmoothMap(lambda q: q[0] / (q[0] - q[0]) if False else float("nan"), 1)
    with pytest.raises(DomainError):
        m.value([1.0])
