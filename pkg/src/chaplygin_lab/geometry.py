"""Metric and affine-connection primitives.

Conventions: a connection is stored as a coefficient array ``sym`` with
``sym[A, B, C]`` the coefficient of ``d/dq^A`` in the covariant derivative
of ``d/dq^C`` along direction ``d/dq^B``.  Metric derivative arrays follow
the SmoothMap jacobian layout ``dg[A, B, C] = d g_AB / d q^C``.  Torsion
and contorsion are (1,2) tensors ``T[A, B, C]`` with the direction slot
second, matching the connection layout.
"""

import numpy as np

from .autodiff import SmoothMap
from .errors import NonSkewTorsion, SingularMetric

__all__ = [
    "MetricField", "ConnectionField",
    "christoffel_first_kind", "levi_civita_symbols", "levi_civita",
    "levi_civita_field",
    "contorsion_from_torsion", "torsion_from_contorsion",
    "metric_connection_from_torsion",
    "metric_compatibility_residual", "is_metric_connection",
    "symmetric_product", "geodesic_rhs", "geodesic_field",
    "spd_inverse", "kinetic_energy",
]


def spd_inverse(g):
    """Inverse of a symmetric positive definite matrix, loud on failure."""
    g = np.asarray(g, dtype=float)
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise SingularMetric(f"matrix is not positive definite: {g.tolist()}") from exc
    return np.linalg.inv(g)


class MetricField:
    """SmoothMap producing a symmetric matrix, positive definite on its chart."""

    def __init__(self, smooth_map, name=None):
        self.map = smooth_map
        self.n = smooth_map.n_in
        self.name = name or smooth_map.name

    @staticmethod
    def from_function(fn, n, name=None):
        return MetricField(SmoothMap(fn, n, (n, n), name=name), name=name)

    def value(self, q):
        g = self.map.value(q)
        return 0.5 * (g + g.T)

    def value_and_jacobian(self, q):
        g, dg = self.map.value_and_jacobian(q)
        g = 0.5 * (g + g.T)
        dg = 0.5 * (dg + dg.transpose(1, 0, 2))
        return g, dg

    def inverse(self, q):
        return spd_inverse(self.value(q))

    def is_spd(self, q):
        try:
            np.linalg.cholesky(self.value(q))
        except np.linalg.LinAlgError:
            return False
        return True


class ConnectionField:
    """Connection coefficients as a function of the base point."""

    def __init__(self, symbols_fn, n, name=None):
        self.symbols_fn = symbols_fn
        self.n = n
        self.name = name or "connection"

    def symbols(self, q):
        return np.asarray(self.symbols_fn(np.asarray(q, dtype=float)), dtype=float)


def christoffel_first_kind(dg):
    """G1[A,B,C] = (d_B g_AC + d_C g_AB - d_A g_BC) / 2."""
    t1 = dg.transpose(0, 2, 1)          # d_B g_AC
    t3 = dg.transpose(2, 0, 1)          # d_A g_BC
    return 0.5 * (t1 + dg - t3)


def levi_civita_symbols(g, dg, ginv=None):
    """Levi-Civita symbols from the metric and its derivative array."""
    if ginv is None:
        ginv = spd_inverse(g)
    return np.tensordot(ginv, christoffel_first_kind(dg), axes=(1, 0))


def levi_civita(metric, q):
    """Levi-Civita symbols of a MetricField at q (Koszul formula, exact
    dual-number derivatives)."""
    g, dg = metric.value_and_jacobian(q)
    return levi_civita_symbols(g, dg)


def levi_civita_field(metric):
    return ConnectionField(lambda q: levi_civita(metric, q), metric.n,
                           name=f"levi_civita({metric.name})")


def _check_skew(T, tol=1e-12):
    T = np.asarray(T, dtype=float)
    dev = np.max(np.abs(T + np.swapaxes(T, 1, 2)))
    if dev > tol:
        raise NonSkewTorsion(f"torsion candidate deviates from skew by {dev:.3e}")
    return T


def contorsion_from_torsion(g, T, q=None):
    """Contorsion S of the unique metric connection with torsion T.

    g may be a MetricField (evaluated at q) or a metric matrix.  Satisfies
    g(S(Z,X),X) = 0 and S(X,Y) - S(Y,X) = T(X,Y).
    """
    gm = g.value(q) if isinstance(g, MetricField) else np.asarray(g, dtype=float)
    T = _check_skew(T)
    ginv = spd_inverse(gm)
    Tl = np.tensordot(gm, T, axes=(1, 0))        # Tl[D,B,C] = g_DM T^M_BC
    t2 = np.moveaxis(Tl, 2, 0)                   # [D,B,C] -> Tl[B,C,D]
    t3 = np.moveaxis(np.swapaxes(Tl, 1, 2), 0, 2)  # [D,B,C] -> Tl[C,B,D]
    S_low = 0.5 * (Tl - t2 - t3)
    return np.tensordot(ginv, S_low, axes=(1, 0))


def torsion_from_contorsion(S, q=None):
    """T(X,Y) = S(X,Y) - S(Y,X)."""
    S = np.asarray(S, dtype=float)
    return S - np.swapaxes(S, 1, 2)


def metric_connection_from_torsion(g, T, q=None):
    """Symbols of the unique metric connection with prescribed skew torsion."""
    if isinstance(g, MetricField):
        gm, dg = g.value_and_jacobian(q)
    else:
        raise TypeError("g must be a MetricField")
    lc = levi_civita_symbols(gm, dg)
    return lc + contorsion_from_torsion(gm, T)


def metric_compatibility_residual(g, dg, sym):
    """max |d_C g_AB - sym_DCA g_DB - sym_DCB g_AD| over all A, B, C."""
    cov = np.einsum('dca,db->cab', sym, g) + np.einsum('dcb,ad->cab', sym, g)
    resid = np.moveaxis(dg, 2, 0) - cov
    return float(np.max(np.abs(resid)))


def is_metric_connection(metric, connection, q, tol=1e-10):
    """Check Dg = 0 for the connection at q; returns (flag, residual)."""
    g, dg = metric.value_and_jacobian(q)
    sym = connection.symbols(q) if isinstance(connection, ConnectionField) \
        else np.asarray(connection, dtype=float)
    resid = metric_compatibility_residual(g, dg, sym)
    return resid <= tol, resid


def symmetric_product(connection, X, Y, q):
    """<X:Y> = nabla_X Y + nabla_Y X at q, exact derivatives of components."""
    sym = connection.symbols(q)
    xv, dX = X.value_and_jacobian(q)
    yv, dY = Y.value_and_jacobian(q)
    lead = dY @ xv + dX @ yv
    quad = np.einsum('cab,a,b->c', sym, xv, yv) + np.einsum('cab,a,b->c', sym, yv, xv)
    return lead + quad


def geodesic_rhs(connection, state):
    """Acceleration -sym^A_(BC) v^B v^C; symbols symmetrized explicitly."""
    q, v = state
    sym = connection.symbols(q) if isinstance(connection, ConnectionField) \
        else np.asarray(connection, dtype=float)
    sym_s = 0.5 * (sym + np.swapaxes(sym, 1, 2))
    return -np.einsum('abc,b,c->a', sym_s, v, v)


def geodesic_field(connection):
    """First-order field y = (q, v) -> (v, a) for the integrators."""
    n = connection.n

    def rhs(y):
        q, v = y[:n], y[n:]
        sym = connection.symbols(q)
        # only the part symmetric in the lower indices drives geodesics
        sym_s = 0.5 * (sym + np.swapaxes(sym, 1, 2))
        a = -np.einsum('abc,b,c->a', sym_s, v, v)
        return np.concatenate([v, a])

    return rhs


def kinetic_energy(metric, q, v):
    return 0.5 * float(v @ metric.value(q) @ v)
