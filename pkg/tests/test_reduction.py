import numpy as np
import pytest

from chaplygin_lab import reduction as red
from chaplygin_lab.autodiff import SmoothMap
from chaplygin_lab.errors import ChaplyginError, SingularMetric
from chaplygin_lab.expressions import parse_field
from chaplygin_lab.geometry import metric_compatibility_residual
from chaplygin_lab.reduction import ChaplyginSystem, reduced_jet


def expr_system(gamma, gbb, gbg, ggg, coords=("x", "y"), cc=None, name="expr",
                potential=None, samples=((1.0, 1.0),)):
    k = len(gamma)
    cc = np.zeros((k, k, k)) if cc is None else np.asarray(cc, dtype=float)
    pot = None
    if potential is not None:
        pot = parse_field(potential, coords).to_smooth_map(name="V")
    return ChaplyginSystem(
        name=name, n_base=len(coords), group_dim=k, structure_constants=cc,
        gamma=parse_field(gamma, coords).to_smooth_map(name="gamma"),
        g_bb=parse_field(gbb, coords).to_smooth_map(name="gbb"),
        g_bg=parse_field(gbg, coords).to_smooth_map(name="gbg"),
        g_gg=parse_field(ggg, coords).to_smooth_map(name="ggg"),
        potential=pot,
        sample_points=[np.asarray(s, dtype=float) for s in samples])


# modified free particle: every displayed tensor --------------------------------

class TestModifiedParticle:
    def test_reduced_metric(self, entries):
        sys_ = entries["particle_modified"].system
        q = np.array([1.0, 1.0])
        assert np.allclose(red.reduced_metric(sys_, q), np.diag([2.0, 1.0]),
                           atol=1e-15)
        q = np.array([0.7, -1.3])
        expect = np.diag([1.0 + (0.7 * 1.3) ** 2, 1.0])
        assert np.allclose(red.reduced_metric(sys_, q), expect, atol=1e-15)

    def test_curvature(self, entries):
        sys_ = entries["particle_modified"].system
        for x, y in [(1.0, 1.0), (0.3, -0.8)]:
            om = red.curvature_coeffs(sys_, [x, y])
            assert om[0, 0, 1] == pytest.approx(x, abs=1e-15)
            assert om[0, 1, 0] == pytest.approx(-x, abs=1e-15)

    def test_momentum_pairing(self, entries):
        sys_ = entries["particle_modified"].system
        J = red.momentum_pairing(sys_, [1.0, 1.0])
        assert np.allclose(J.ravel(), [1.0, 0.0], atol=1e-15)

    def test_gyroscopic_tensor(self, entries):
        sys_ = entries["particle_modified"].system
        K = red.metric_connection_tensor(sys_, [1.0, 1.0])
        assert K[0, 0, 1] == pytest.approx(1.0, abs=1e-15)   # x^2 y at (1,1)
        assert K[1, 0, 1] == pytest.approx(0.0, abs=1e-15)

    def test_contorsion_components(self, entries):
        sys_ = entries["particle_modified"].system
        x, y = 0.9, 1.4
        B = red.contorsion_B(sys_, [x, y])
        assert B[1, 0, 0] == pytest.approx(x * x * y, rel=1e-13)
        assert B[0, 0, 1] == pytest.approx(-x * x * y / (1 + x * x * y * y),
                                           rel=1e-13)
        assert B[0, 1, 0] == pytest.approx(0.0, abs=1e-15)

    def test_classification(self, entries):
        sys_ = entries["particle_modified"].system
        cls = red.classify(sys_, [[1.0, 1.0], [0.5, 0.7]])
        assert cls.label == "GyroscopicallyForced"
        # B(d_x, d_x) = x^2 y d_y is the non-skew witness
        assert cls.b_symmetric_part_max > 0.5


# synchro-drive robot ------------------------------------------------------------

class TestMobileRobot:
    def test_reduced_metric_symbolic(self, entries):
        e = entries["mobile_robot"]
        m, J, Jw, R = (e.params[k] for k in ("m", "J", "J_w", "R"))
        for th in np.linspace(0.0, 6.0, 7):
            gt = red.reduced_metric(e.system, [th, 0.4])
            assert np.max(np.abs(gt - np.diag([J, 3 * Jw + m * R * R]))) <= 1e-12

    def test_gyroscopic_cancellation_on_grid(self, entries):
        e = entries["mobile_robot"]
        grid = np.linspace(0.0, 2 * np.pi, 10)
        for th in grid:
            for psi in grid:
                jet = reduced_jet(e.system, [th, psi])
                assert np.max(np.abs(jet.K)) <= 1e-12
                assert np.max(np.abs(jet.Omega)) > 1e-3   # curvature itself is not zero
                assert np.max(np.abs(jet.alpha(np.array([0.7, -0.4])))) <= 1e-12

    def test_all_connections_levi_civita(self, entries):
        e = entries["mobile_robot"]
        for th in np.linspace(0.0, 6.0, 5):
            jet = reduced_jet(e.system, [th, 1.0])
            for sym in (jet.tilde, jet.H1, jet.H2, jet.Hhalf):
                assert np.max(np.abs(sym - jet.lc)) <= 1e-12

    def test_classification(self, entries):
        e = entries["mobile_robot"]
        cls = red.classify(e.system, np.linspace(0.1, 1.9, 4)[:, None] * np.ones(2))
        assert cls.hamiltonian_reducible


# two-wheeled carriage -----------------------------------------------------------

class TestCarriage:
    def test_reduced_metric_display(self, entries):
        e = entries["two_wheeled_robot"]
        gt = red.reduced_metric(e.system, [0.0, 0.0])
        assert np.max(np.abs(gt - e.literature["gt"](None))) <= 1e-12

    def test_curvature_identity_slot(self, entries):
        e = entries["two_wheeled_robot"]
        om = red.curvature_coeffs(e.system, [0.3, -0.2])
        assert np.allclose(om[:, 0, 1], e.literature["Omega_identity"], atol=1e-14)

    def test_gyroscopic_tensor_display(self, entries):
        e = entries["two_wheeled_robot"]
        C0 = e.literature["K_coefficient"]
        K = red.metric_connection_tensor(e.system, [1.0, 2.0])
        assert K[0, 0, 1] == pytest.approx(C0, rel=1e-12)
        assert K[1, 0, 1] == pytest.approx(-C0, rel=1e-12)
        assert K[0, 1, 0] == pytest.approx(-C0, rel=1e-12)

    def test_alpha_closed_form(self, entries, rng):
        # the closed form carries the sign fixed by the full-dynamics oracle
        e = entries["two_wheeled_robot"]
        for _ in range(100):
            q = rng.uniform(-2.0, 2.0, 2)
            v = rng.normal(size=2)
            alpha = red.gyroscopic_alpha(e.system, q, v)
            assert np.max(np.abs(alpha - e.literature["alpha"](v))) <= 1e-10

    def test_tilde_connection_sign_pattern(self, entries):
        e = entries["two_wheeled_robot"]
        jet = reduced_jet(e.system, [0.0, 0.0])
        T = jet.tilde
        K1, K2 = T[0, 0, 0], T[0, 1, 1]
        assert K1 > 0 and K2 > 0
        expected = np.array([
            [[K1, -K2], [-K1, K2]],
            [[K2, -K1], [-K2, K1]],
        ])
        assert np.max(np.abs(T - expected)) <= 1e-12
        # the two scalars should not be degenerate
        assert abs(K1 - K2) > 1e-6

    def test_b_not_skew(self, entries):
        e = entries["two_wheeled_robot"]
        cls = red.classify(e.system, [[0.0, 0.0], [1.0, -1.0]])
        assert cls.label == "GyroscopicallyForced"


# structural identities on all catalog systems -----------------------------------

def test_k_skew_in_last_two(entries, rng):
    for e in entries.values():
        for _ in range(5):
            q = rng.uniform(-1.0, 1.0, 2)
            K = red.metric_connection_tensor(e.system, q)
            assert np.max(np.abs(K + K.transpose(0, 2, 1))) == 0.0


def test_defining_identities_b_and_c(entries, rng):
    for e in entries.values():
        for _ in range(5):
            q = rng.uniform(-1.0, 1.0, 2)
            jet = reduced_jet(e.system, q)
            lhs = np.einsum('cd,dab->abc', jet.gt, jet.B)
            assert np.max(np.abs(lhs - jet.K)) <= 1e-12 * (1 + np.max(np.abs(jet.K)))
            lhs = np.einsum('cd,dab->cab', jet.gt, jet.C)
            assert np.max(np.abs(lhs - jet.K.transpose(2, 0, 1))) \
                <= 1e-12 * (1 + np.max(np.abs(jet.K)))
            assert np.max(np.abs(jet.C + jet.C.transpose(0, 2, 1))) <= 1e-15


def test_alpha_routes_agree_and_annihilate_velocity(entries, rng):
    for e in entries.values():
        for _ in range(20):
            q = rng.uniform(-1.5, 1.5, 2)
            v = rng.normal(size=2) * 3.0
            alpha = red.gyroscopic_alpha(e.system, q, v, check_tol=1e-12)
            assert abs(alpha @ v) <= 1e-12 * (1 + np.max(np.abs(alpha)))


def test_xi_contraction_recovers_alpha(entries, rng):
    for e in entries.values():
        for _ in range(10):
            q = rng.uniform(-1.0, 1.0, 2)
            v = rng.normal(size=2)
            xi = red.xi_two_form(e.system, q, v)
            assert np.max(np.abs(xi + xi.T)) <= 1e-16
            alpha = red.gyroscopic_alpha(e.system, q, v)
            assert np.max(np.abs(v @ xi - alpha)) <= 1e-12 * (1 + np.max(np.abs(alpha)))


def test_metric_compatibility_of_tilde_and_h1(entries, rng):
    for e in entries.values():
        for _ in range(5):
            q = rng.uniform(-1.0, 1.0, 2)
            jet = reduced_jet(e.system, q)
            for sym in (jet.tilde, jet.H1):
                resid = metric_compatibility_residual(jet.gt, jet.dgt, sym)
                assert resid <= 1e-10


def test_connection_chain_equivalences(entries, rng):
    # B skew <=> H2 metric <=> H/2 metric <=> H/2 equals Levi-Civita
    for e in entries.values():
        for _ in range(4):
            q = rng.uniform(-1.0, 1.0, 2)
            jet = reduced_jet(e.system, q)
            b_skew = np.max(np.abs(jet.B + jet.B.transpose(0, 2, 1))) <= 1e-12
            h2_metric = metric_compatibility_residual(jet.gt, jet.dgt, jet.H2) <= 1e-10
            hh_metric = metric_compatibility_residual(jet.gt, jet.dgt, jet.Hhalf) <= 1e-10
            hh_is_lc = np.max(np.abs(jet.Hhalf - jet.lc)) <= 1e-12
            assert b_skew == h2_metric == hh_metric == hh_is_lc


def test_tilde_equals_hhalf_forces_levi_civita(entries, rng):
    # strong-coincidence chain evaluated pointwise
    for e in entries.values():
        for _ in range(4):
            q = rng.uniform(-1.0, 1.0, 2)
            jet = reduced_jet(e.system, q)
            if np.max(np.abs(jet.tilde - jet.Hhalf)) <= 1e-10:
                assert np.max(np.abs(jet.tilde - jet.lc)) <= 1e-9


def test_contorsion_symmetric_parts_coincide(entries, rng):
    for e in entries.values():
        for _ in range(4):
            q = rng.uniform(-1.0, 1.0, 2)
            jet = reduced_jet(e.system, q)
            parts = []
            for sym in (jet.tilde, jet.H1, jet.H2, jet.Hhalf):
                contorsion = sym - jet.lc
                parts.append(contorsion + contorsion.transpose(0, 2, 1))
            for p in parts[1:]:
                assert np.max(np.abs(p - parts[0])) <= 1e-12


# construction validation ---------------------------------------------------------

def test_structure_constants_validation():
    bad_skew = np.zeros((2, 2, 2))
    bad_skew[0, 0, 1] = 1.0
    bad_skew[0, 1, 0] = 1.0      # not skew
    with pytest.raises(ValueError):
        expr_system([["0", "0"], ["0", "0"]],
                    [["1", "0"], ["0", "1"]],
                    [["0", "0"], ["0", "0"]],
                    [["1", "0"], ["0", "1"]], cc=bad_skew)

    bad_jacobi = np.zeros((3, 3, 3))
    bad_jacobi[0, 1, 2] = 1.0
    bad_jacobi[0, 2, 1] = -1.0
    bad_jacobi[1, 2, 0] = 1.0
    bad_jacobi[1, 0, 2] = -1.0
    bad_jacobi[2, 0, 1] = 1.0
    bad_jacobi[2, 1, 0] = -1.0
    bad_jacobi[0, 0, 1] = 0.5    # breaks skewness too; fix it to target Jacobi
    bad_jacobi[0, 1, 0] = -0.5
    with pytest.raises(ValueError):
        expr_system([["0", "0"], ["0", "0"], ["0", "0"]],
                    [["1", "0"], ["0", "1"]],
                    [["0", "0", "0"], ["0", "0", "0"]],
                    [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]],
                    cc=bad_jacobi)


def test_non_spd_reduced_metric_aborts():
    with pytest.raises(SingularMetric):
        expr_system([["0", "0"]],
                    [["x", "0"], ["0", "1"]],    # loses positivity at x = -1
                    [["0"], ["0"]],
                    [["1"]],
                    samples=((-1.0, 0.0),))


def test_custom_expression_system_matches_builtin(entries, rng):
    custom = expr_system([["-x*y", "0"]],
                         [["1", "0"], ["0", "1"]],
                         [["0"], ["0"]],
                         [["1"]])
    builtin = entries["particle_modified"].system
    for _ in range(5):
        q = rng.uniform(0.2, 1.5, 2)
        j1 = reduced_jet(custom, q, order=2)
        j2 = reduced_jet(builtin, q, order=2)
        assert np.allclose(j1.gt, j2.gt, atol=1e-14)
        assert np.allclose(j1.K, j2.K, atol=1e-14)
        assert np.allclose(j1.beta, j2.beta, atol=1e-14)
        assert np.allclose(j1.dbeta, j2.dbeta, atol=1e-14)


def test_reduced_geometry_bundle(entries):
    geom = red.reduced_geometry(entries["particle_modified"].system, [1.0, 1.0])
    assert geom.gt[0, 0] == pytest.approx(2.0)
    assert geom.beta[1] == pytest.approx(-0.5)
    assert geom.nabla_h1.shape == (2, 2, 2)


def test_potential_affects_jet_only_through_dV():
    sys_ = expr_system([["-y", "0"]],
                       [["1", "0"], ["0", "1"]],
                       [["0"], ["0"]],
                       [["1"]], potential="x^2 + y^2")
    jet = reduced_jet(sys_, [0.5, 0.25], order=2)
    assert jet.V == pytest.approx(0.3125)
    assert np.allclose(jet.dV, [1.0, 0.5])
    assert np.allclose(jet.d2V, 2 * np.eye(2))
