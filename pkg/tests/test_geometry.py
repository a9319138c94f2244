import numpy as np
import pytest

from chaplygin_lab import autodiff as ad
from chaplygin_lab import geometry as geo
from chaplygin_lab.autodiff import SmoothMap
from chaplygin_lab.dynamics import IntegratorConfig, State, integrate
from chaplygin_lab.errors import NonSkewTorsion, SingularMetric


def euclidean(n):
    return geo.MetricField(SmoothMap.constant(np.eye(n), n), name="euclid")


def particle_base_metric():
    def fn(q):
        return [[1.0 + q[1] ** 2, 0.0], [0.0, 1.0]]
    return geo.MetricField.from_function(fn, 2, name="particle_base")


def random_metric_field(rng, n):
    """SPD on the unit box: diagonally dominant constant part plus a smooth
    trigonometric perturbation."""
    A = rng.normal(size=(n, n))
    A = A @ A.T + (n + 1.0) * np.eye(n)
    freqs = rng.uniform(0.5, 1.5, size=(n, n))
    amps = rng.uniform(-0.2, 0.2, size=(n, n))

    def fn(q):
        out = np.empty((n, n), dtype=object)
        for i in range(n):
            for j in range(i, n):
                val = A[i, j] + amps[i, j] * ad.sin(freqs[i, j] * q[i % n] + 0.3 * q[j % n])
                out[i, j] = val
                out[j, i] = val
        return out

    return geo.MetricField(SmoothMap(fn, n, (n, n)), name="random_metric")


def random_skew_torsion(rng, n):
    T = rng.normal(size=(n, n, n))
    return T - np.swapaxes(T, 1, 2)


def test_levi_civita_flat():
    assert np.allclose(geo.levi_civita(euclidean(3), [0.0, 1.0, 2.0]), 0.0)


def test_levi_civita_hand_fixture():
    # computed by direct Koszul evaluation for diag(1 + y^2, 1)
    g = particle_base_metric()
    q = [0.4, 0.8]
    sym = geo.levi_civita(g, q)
    y = 0.8
    assert sym[0, 0, 1] == pytest.approx(y / (1 + y * y), rel=1e-12)
    assert sym[0, 1, 0] == pytest.approx(y / (1 + y * y), rel=1e-12)
    assert sym[1, 0, 0] == pytest.approx(-y, rel=1e-12)
    assert sym[1, 1, 1] == 0.0


def test_levi_civita_compatibility(rng):
    for n in (2, 3):
        g = random_metric_field(rng, n)
        for _ in range(5):
            q = rng.uniform(0.0, 1.0, n)
            sym = geo.levi_civita(g, q)
            assert np.allclose(sym, np.swapaxes(sym, 1, 2))
            gv, dg = g.value_and_jacobian(q)
            resid = geo.metric_compatibility_residual(gv, dg, sym)
            assert resid <= 1e-10


def test_levi_civita_singular_metric():
    g = geo.MetricField(SmoothMap.constant([[1.0, 2.0], [2.0, 1.0]], 2))
    with pytest.raises(SingularMetric):
        geo.levi_civita(g, [0.0, 0.0])


def test_prescribed_torsion_zero_gives_levi_civita(rng):
    g = random_metric_field(rng, 3)
    q = rng.uniform(0.0, 1.0, 3)
    sym = geo.metric_connection_from_torsion(g, np.zeros((3, 3, 3)), q)
    assert np.allclose(sym, geo.levi_civita(g, q), atol=1e-13)


def test_prescribed_torsion_contract(rng):
    # the constructed connection is metric and reproduces the torsion
    for n in (2, 3, 4):
        for _ in range(8):
            g = random_metric_field(rng, n)
            T = random_skew_torsion(rng, n)
            q = rng.uniform(0.0, 1.0, n)
            sym = geo.metric_connection_from_torsion(g, T, q)
            back = sym - np.swapaxes(sym, 1, 2)
            assert np.max(np.abs(back - T)) <= 1e-12 * (1 + np.max(np.abs(T)))
            gv, dg = g.value_and_jacobian(q)
            assert geo.metric_compatibility_residual(gv, dg, sym) <= 1e-10


def test_non_skew_torsion_rejected(rng):
    g = euclidean(2)
    with pytest.raises(NonSkewTorsion):
        geo.contorsion_from_torsion(g, rng.normal(size=(2, 2, 2)), [0.0, 0.0])


def test_contorsion_roundtrip(rng):
    for n in (2, 3, 4):
        for _ in range(17):
            g = random_metric_field(rng, n)
            q = rng.uniform(0.0, 1.0, n)
            gv = g.value(q)
            T = random_skew_torsion(rng, n)
            S = geo.contorsion_from_torsion(gv, T)
            T2 = geo.torsion_from_contorsion(S)
            assert np.max(np.abs(T2 - T)) <= 1e-12 * (1 + np.max(np.abs(T)))
            # metric condition g(S(Z,X),X) = 0 via polarization: with the
            # direction slot second, S_low[D,B,C] is skew in (D, C)
            S_low = np.einsum('dm,mbc->dbc', gv, S)
            assert np.max(np.abs(S_low + S_low.transpose(2, 1, 0))) \
                <= 1e-12 * (1 + np.max(np.abs(S_low)))
            # and back: S -> T -> S
            S2 = geo.contorsion_from_torsion(gv, T2)
            assert np.max(np.abs(S2 - S)) <= 1e-12 * (1 + np.max(np.abs(S)))


def test_is_metric_connection(rng):
    g = random_metric_field(rng, 3)
    q = rng.uniform(0.0, 1.0, 3)
    ok, resid = geo.is_metric_connection(g, geo.levi_civita_field(g), q)
    assert ok and resid <= 1e-10
    T = random_skew_torsion(rng, 3)
    sym = geo.metric_connection_from_torsion(g, T, q)
    ok, _ = geo.is_metric_connection(g, sym, q)
    assert ok
    other = random_metric_field(rng, 3)
    ok, resid = geo.is_metric_connection(other, geo.levi_civita_field(g), q)
    assert not ok and resid > 1e-6


def test_symmetric_product_properties(rng):
    g = random_metric_field(rng, 2)
    conn = geo.levi_civita_field(g)
    X = SmoothMap(lambda q: [q[0] ** 2 + 0.3 * q[1], q[0] * q[1]], 2)
    Y = SmoothMap(lambda q: [0.5 - q[1] ** 2, q[0] + 1.0], 2)
    q = rng.uniform(0.0, 1.0, 2)
    xx = geo.symmetric_product(conn, X, X, q)
    # <X:X> = 2 nabla_X X
    sym = conn.symbols(q)
    xv, dX = X.value_and_jacobian(q)
    nxx = dX @ xv + np.einsum('cab,a,b->c', sym, xv, xv)
    assert np.allclose(xx, 2 * nxx, atol=1e-12)

    flat = geo.ConnectionField(lambda q: np.zeros((2, 2, 2)), 2)
    C1 = SmoothMap(lambda q: [1.0, -2.0], 2)
    C2 = SmoothMap(lambda q: [0.5, 3.0], 2)
    assert np.allclose(geo.symmetric_product(flat, C1, C2, q), 0.0)


def test_symmetric_product_matches_finite_difference(rng):
    g = random_metric_field(rng, 2)
    conn = geo.levi_civita_field(g)
    X = SmoothMap(lambda q: [q[0] * q[1] + 1.0, q[0] ** 2 - q[1]], 2)
    Y = SmoothMap(lambda q: [q[1] ** 2, 0.2 * q[0]], 2)
    q = rng.uniform(0.2, 0.8, 2)
    got = geo.symmetric_product(conn, X, Y, q)
    # finite-difference covariant derivatives
    h = 1e-6
    sym = conn.symbols(q)
    xv, yv = X.value(q), Y.value(q)

    def fd_jac(F):
        cols = []
        for e in range(2):
            qp, qm = q.copy(), q.copy()
            qp[e] += h
            qm[e] -= h
            cols.append((F.value(qp) - F.value(qm)) / (2 * h))
        return np.stack(cols, axis=1)

    lead = fd_jac(Y) @ xv + fd_jac(X) @ yv
    quad = np.einsum('cab,a,b->c', sym, xv, yv) + np.einsum('cab,a,b->c', sym, yv, xv)
    assert np.max(np.abs(got - (lead + quad))) < 1e-6


def test_geodesic_rhs_flat():
    flat = geo.ConnectionField(lambda q: np.zeros((2, 2, 2)), 2)
    a = geo.geodesic_rhs(flat, (np.zeros(2), np.array([1.0, 2.0])))
    assert np.allclose(a, 0.0)


def test_geodesic_energy_conservation(rng):
    # metric connections with prescribed torsion preserve kinetic energy
    cfg = IntegratorConfig(method="rk4", step=2e-3)
    for n in (2, 3):
        g = random_metric_field(rng, n)
        T = random_skew_torsion(rng, n)
        conn = geo.ConnectionField(
            lambda q, g=g, T=T: geo.metric_connection_from_torsion(g, T, q), n)
        q0 = rng.uniform(0.2, 0.8, n)
        v0 = rng.normal(size=n) * 0.3
        traj = integrate(geo.geodesic_field(conn), State(q0, v0), (0.0, 1.0), cfg)
        energies = np.array([geo.kinetic_energy(g, qq, vv)
                             for qq, vv in zip(traj.q, traj.v)])
        assert np.max(np.abs(energies - energies[0])) <= 1e-8 * (1 + abs(energies[0]))


def test_sphere_geodesics_are_great_circles():
    # round sphere in colatitude/longitude; equator traversed at unit speed
    def fn(q):
        s = ad.sin(q[0])
        return [[1.0, 0.0], [0.0, s * s]]

    g = geo.MetricField(SmoothMap(fn, 2, (2, 2)), name="sphere")
    conn = geo.levi_civita_field(g)
    cfg = IntegratorConfig(method="rk4", step=1e-3)
    start = State([np.pi / 2, 0.0], [0.0, 1.0])
    traj = integrate(geo.geodesic_field(conn), start, (0.0, 2 * np.pi), cfg)
    assert np.max(np.abs(traj.q[:, 0] - np.pi / 2)) < 1e-10
    assert traj.q[-1, 1] == pytest.approx(2 * np.pi, abs=1e-9)
