"""Bundle-local model of a G-invariant kinematically constrained system and
the geometry it induces on the base.

The model is chart-local in one trivialization: base coordinates q of
dimension ``n_base``, a ``group_dim``-dimensional symmetry group acting on
the fiber, connection coefficients ``gamma(q)`` fixing the constraints as
``xi^i = -gamma^i_a qdot^a`` (xi the left-trivialized fiber velocity), and
invariant metric blocks evaluated at the trivialization identity.  All the
derived base objects (reduced metric, curvature pairing, gyroscopic
tensors, induced connections) are assembled pointwise from exact dual
derivatives of the blocks.

Blocks with a known polynomial degree bound (<= 2) are differentiated once
and reused through their exact Taylor form; this keeps the per-point cost
of trajectory integration low without ever falling back to finite
differences.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ChaplyginError, SingularMetric
from .geometry import christoffel_first_kind, spd_inverse

__all__ = [
    "ChaplyginSystem", "ReducedGeometryAt", "ReducedJet",
    "reduced_jet", "reduced_geometry", "reduced_metric_value",
    "reduced_metric", "curvature_coeffs", "momentum_pairing",
    "metric_connection_tensor", "contorsion_B", "tensor_C", "connections",
    "gyroscopic_alpha", "xi_two_form", "beta_components", "classify",
    "Classification",
]


def jacobi_residual(c):
    """max |[e_i,[e_j,e_k]] + cyclic| for structure constants c^i_{jk}."""
    term = np.einsum('mjk,lim->lijk', c, c)
    cyc = term + np.einsum('mki,ljm->lijk', c, c) + np.einsum('mij,lkm->lijk', c, c)
    return float(np.max(np.abs(cyc))) if c.size else 0.0


def _spd_inverse_fast(g, context=""):
    n = g.shape[0]
    if n == 1:
        d = g[0, 0]
        if d <= 0.0:
            raise SingularMetric(f"{context}: 1x1 metric not positive")
        return np.array([[1.0 / d]])
    if n == 2:
        a, b, c = g[0, 0], g[0, 1], g[1, 1]
        det = a * c - b * b
        if a <= 0.0 or det <= 0.0:
            raise SingularMetric(f"{context}: 2x2 metric not positive definite")
        return np.array([[c, -b], [-b, a]]) / det
    try:
        return spd_inverse(g)
    except SingularMetric as exc:
        raise SingularMetric(f"{context}: {exc}") from None


class _JetProvider:
    """Per-block jet source.  Polynomial blocks (degree <= 2) anchor one
    exact dual-number jet and evaluate through it; everything else is
    differentiated afresh at each point."""

    __slots__ = ("map", "poly", "q0", "v0", "g0", "h0",
                 "value_zero", "grad_zero", "hess_zero")

    def __init__(self, smooth_map):
        self.map = smooth_map
        deg = getattr(smooth_map, "degree_bound", None)
        self.poly = deg is not None and deg <= 2
        self.q0 = None
        self.value_zero = False
        self.grad_zero = False
        self.hess_zero = False

    def _anchor(self, q):
        v0, g0, h0 = self.map.second_order_jet(q)
        self.q0 = q.copy()
        self.v0, self.g0, self.h0 = v0, g0, h0
        self.hess_zero = not h0.any()
        self.grad_zero = self.hess_zero and not g0.any()
        self.value_zero = self.grad_zero and not np.any(v0)

    def jet(self, q, order):
        if not self.poly:
            if order >= 2:
                return self.map.second_order_jet(q)
            v, g = self.map.value_and_jacobian(q)
            return v, g, None
        if self.q0 is None:
            self._anchor(q)
        if self.grad_zero:
            return self.v0, self.g0, self.h0
        dq = q - self.q0
        if self.hess_zero:
            return self.v0 + self.g0 @ dq, self.g0, self.h0
        gd = self.h0 @ dq
        return (self.v0 + self.g0 @ dq + 0.5 * (gd @ dq),
                self.g0 + gd, self.h0)

    def value(self, q):
        if self.poly:
            return self.jet(q, 1)[0]
        return self.map.value(q)


@dataclass
class ChaplyginSystem:
    """Bundle-local data of a G-invariant constrained mechanical system."""

    name: str
    n_base: int
    group_dim: int
    structure_constants: np.ndarray       # c[i,j,k] with [e_j, e_k] = c^i_jk e_i
    gamma: object                         # SmoothMap (group_dim, n_base)
    g_bb: object                          # SmoothMap (n_base, n_base), symmetric
    g_bg: object                          # SmoothMap (n_base, group_dim)
    g_gg: object                          # SmoothMap (group_dim, group_dim), symmetric
    potential: object = None              # SmoothMap scalar, optional
    sample_points: list = field(default_factory=list)

    def __post_init__(self):
        self.structure_constants = np.asarray(self.structure_constants, dtype=float)
        k = self.group_dim
        if self.structure_constants.shape != (k, k, k):
            raise ValueError("structure constants must have shape (k, k, k)")
        c = self.structure_constants
        if c.size:
            skew = np.max(np.abs(c + np.swapaxes(c, 1, 2)))
            if skew > 1e-12:
                raise ValueError(f"structure constants not skew in lower indices ({skew:.2e})")
            jac = jacobi_residual(c)
            if jac > 1e-12:
                raise ValueError(f"structure constants violate the Jacobi identity ({jac:.2e})")
        self._cc_zero = not c.any()
        self._prov = {
            "gamma": _JetProvider(self.gamma),
            "gbb": _JetProvider(self.g_bb),
            "gbg": _JetProvider(self.g_bg),
            "ggg": _JetProvider(self.g_gg),
        }
        if self.potential is not None:
            self._prov["V"] = _JetProvider(self.potential)
        self._jet_cache = {}
        for q in self.sample_points:
            self.validate_at(np.asarray(q, dtype=float))

    def validate_at(self, q):
        """Reduced metric must be SPD; the assembled block metric is checked
        and reported but only warned about, since some meaningful parameter
        sets give an indefinite (still regular) full kinetic form."""
        jet = reduced_jet(self, q, order=1)
        try:
            np.linalg.cholesky(jet.gt)
        except np.linalg.LinAlgError as exc:
            raise SingularMetric(
                f"{self.name}: reduced metric not SPD at q={np.asarray(q).tolist()}") from exc
        if not self.block_metric_spd(q):
            warnings.warn(
                f"{self.name}: assembled block metric is indefinite at "
                f"q={np.asarray(q).tolist()}; full-space dynamics remain regular",
                stacklevel=2)

    def assembled_metric(self, q):
        """Full (n_base+k) x (n_base+k) kinetic matrix at the identity."""
        gbb = self.g_bb.value(q)
        gbg = self.g_bg.value(q)
        ggg = self.g_gg.value(q)
        top = np.hstack([gbb, gbg])
        bot = np.hstack([gbg.T, ggg])
        return np.vstack([top, bot])

    def block_metric_spd(self, q):
        try:
            np.linalg.cholesky(self.assembled_metric(q))
        except np.linalg.LinAlgError:
            return False
        return True

    def potential_value(self, q):
        return float(self._prov["V"].value(q)) if self.potential is not None else 0.0


class ReducedJet:
    """Pointwise reduced-geometry data; second derivatives and the
    connection/measure layer are filled on request.

    Index conventions: connection symbol arrays sym[c, a, b] multiply
    direction a and argument b; derivative axes come last.
    """

    __slots__ = (
        "q", "order", "gt", "dgt", "d2gt", "gtinv", "dgtinv",
        "J", "dJ", "Omega", "dOmega", "K", "dK", "B", "dB", "C",
        "lc", "dlc", "V", "dV", "d2V", "beta", "dbeta",
        "H1", "H2", "Hhalf", "tilde",
    )

    def alpha(self, v):
        """Gyroscopic covector at (q, v): alpha_b = K[a,e,b] v^a v^e."""
        return v @ (v @ self.K)

    def alpha_from_curvature(self, v):
        """Same covector via the momentum pairing and curvature coefficients."""
        mom = v @ self.J                       # (k,)
        return -np.einsum('i,ibc,c->b', mom, self.Omega, v)

    def alpha_dv(self, v):
        """d alpha_b / d v^e."""
        n = v.size
        ksum = self.K + self.K.transpose(1, 0, 2)
        return (v @ ksum.reshape(n, n * n)).reshape(n, n)

    def alpha_dq(self, v):
        if self.dK is None:
            raise ChaplyginError("second-order jet required for alpha_dq")
        return np.einsum('aebf,a,e->bf', self.dK, v, v)

    def xi_matrix(self, v):
        """Coefficients of the velocity-dependent gyroscopic 2-form."""
        M = np.einsum('e,cea,cb->ab', v, self.B, self.gt)
        return 0.5 * (M - M.T)

    def h_scalar(self, v):
        return float(self.beta @ v)


def reduced_jet(sys, q, order=1, parts="all"):
    """Evaluate the reduced geometry at q.

    order=2 adds the second-derivative arrays (variational dynamics,
    closedness tests).  parts="core" skips the contorsion/connection/unimodularity
    layer that pure trajectory integration never touches.
    """
    q = np.asarray(q, dtype=float)
    n, k = sys.n_base, sys.group_dim
    prov = sys._prov

    # systems whose blocks are all constant have a constant jet
    cached = sys._jet_cache.get(("jet", order, parts)) \
        or sys._jet_cache.get(("jet", order, "all"))
    if cached is not None and (parts == "core" or cached.B is not None):
        out = ReducedJet()
        for slot in ReducedJet.__slots__:
            setattr(out, slot, getattr(cached, slot))
        out.q = q
        return out

    jet = ReducedJet()
    jet.q = q
    jet.order = order

    gam, dgam, d2gam = prov["gamma"].jet(q, order)
    gbb, dgbb, d2gbb = prov["gbb"].jet(q, order)
    gbg, dgbg, d2gbg = prov["gbg"].jet(q, order)
    ggg, dggg, d2ggg = prov["ggg"].jet(q, order)

    gam_var = not prov["gamma"].grad_zero
    gbb_var = not prov["gbb"].grad_zero
    gbg_var = not prov["gbg"].grad_zero
    ggg_var = not prov["ggg"].grad_zero
    gbg_zero = prov["gbg"].value_zero
    gam_h0 = prov["gamma"].hess_zero

    cache = sys._jet_cache
    # constancy of derived arrays, decidable from the static block structure
    c_dW = gam_h0 and not ggg_var
    c_Omega = gam_h0 and (sys._cc_zero or not gam_var)
    c_dJ = c_dW and prov["gbg"].hess_zero
    c_dK = c_dJ and c_Omega and sys._cc_zero
    c_d2gt = gam_h0 and not ggg_var and not gbb_var and gbg_zero

    # reduced metric: the horizontal lift of d/dq^a has fiber part -gamma[:, a]
    W = ggg @ gam                                   # (k, n)
    gt = gbb + gam.T @ W
    if ggg_var or gam_var:
        dW = cache.get("dW") if c_dW else None
        if dW is None:
            dW = np.einsum('ij,jbe->ibe', ggg, dgam)
            if ggg_var:
                dW += np.einsum('ije,jb->ibe', dggg, gam)
            if c_dW:
                cache["dW"] = dW
    else:
        dW = None
    dgt = dgbb.copy() if gbb_var else np.zeros((n, n, n))
    if dW is not None:
        dgt += np.einsum('iae,ib->abe', dgam, W) + np.einsum('ia,ibe->abe', gam, dW)
    if not gbg_zero:
        P = gbg @ gam
        gt = gt - P - P.T
        dP = np.einsum('aie,ib->abe', dgbg, gam) + np.einsum('ai,ibe->abe', gbg, dgam)
        dgt -= dP + dP.transpose(1, 0, 2)
    jet.gt = 0.5 * (gt + gt.T)
    jet.dgt = 0.5 * (dgt + dgt.transpose(1, 0, 2))
    jet.gtinv = _spd_inverse_fast(jet.gt, sys.name)

    # momentum pairing of horizontal lifts with the fiber generators
    jet.J = gbg - W.T
    if dW is None:
        jet.dJ = dgbg
    else:
        jet.dJ = cache.get("dJ") if c_dJ else None
        if jet.dJ is None:
            jet.dJ = dgbg - dW.transpose(1, 0, 2)
            if c_dJ:
                cache["dJ"] = jet.dJ

    # curvature coefficients
    Omega = cache.get("Omega") if c_Omega else None
    if Omega is None:
        dgam_bc = dgam.transpose(0, 2, 1)           # [i, b, c] = d_b gam^i_c
        Omega = dgam_bc - dgam_bc.transpose(0, 2, 1)
        if not sys._cc_zero:
            Omega = Omega - np.einsum('ijl,jb,lc->ibc',
                                      sys.structure_constants, gam, gam)
        if c_Omega:
            cache["Omega"] = Omega
    jet.Omega = Omega
    jet.K = np.einsum('ai,ibc->abc', jet.J, Omega)
    g1 = christoffel_first_kind(jet.dgt)
    jet.lc = np.einsum('ad,dbc->abc', jet.gtinv, g1)

    if sys.potential is not None:
        V, dV, d2V = prov["V"].jet(q, order)
        jet.V, jet.dV, jet.d2V = float(V), dV, d2V
    else:
        jet.V, jet.dV = 0.0, np.zeros(n)
        jet.d2V = np.zeros((n, n)) if order >= 2 else None

    if order >= 2:
        # second derivatives of the reduced metric
        jet.d2gt = cache.get("d2gt") if c_d2gt else None
        if jet.d2gt is None:
            d2W = None
            if ggg_var:
                d2W = np.einsum('ijef,jb->ibef', d2ggg, gam) \
                    + np.einsum('ije,jbf->ibef', dggg, dgam) \
                    + np.einsum('ijf,jbe->ibef', dggg, dgam)
                if not gam_h0:
                    d2W += np.einsum('ij,jbef->ibef', ggg, d2gam)
            elif gam_var and not gam_h0:
                d2W = np.einsum('ij,jbef->ibef', ggg, d2gam)
            d2gt = d2gbb.copy() if gbb_var else np.zeros((n, n, n, n))
            if dW is not None:
                cross = np.einsum('iae,ibf->abef', dgam, dW)
                d2gt += cross + cross.transpose(0, 1, 3, 2)
                if not gam_h0:
                    d2gt += np.einsum('iaef,ib->abef', d2gam, W)
                if d2W is not None:
                    d2gt += np.einsum('ia,ibef->abef', gam, d2W)
            if not gbg_zero:
                d2P = (np.einsum('aief,ib->abef', d2gbg, gam)
                       + np.einsum('aie,ibf->abef', dgbg, dgam)
                       + np.einsum('aif,ibe->abef', dgbg, dgam)
                       + np.einsum('ai,ibef->abef', gbg, d2gam))
                d2gt -= d2P + d2P.transpose(1, 0, 2, 3)
            jet.d2gt = 0.5 * (d2gt + d2gt.transpose(1, 0, 2, 3))
            if c_d2gt:
                cache["d2gt"] = jet.d2gt

        jet.dgtinv = -np.einsum('ac,cde,db->abe', jet.gtinv, jet.dgt, jet.gtinv)

        if gam_h0 and sys._cc_zero:
            jet.dOmega = np.zeros((k, n, n, n))
            jet.dK = cache.get("dK") if c_dK else None
            if jet.dK is None:
                jet.dK = np.einsum('aie,ibc->abce', jet.dJ, Omega)
                if c_dK:
                    cache["dK"] = jet.dK
        else:
            d2gam_bc = d2gam.transpose(0, 2, 1, 3)  # [i, b, c, e]
            dOmega = d2gam_bc - d2gam_bc.transpose(0, 2, 1, 3)
            if not sys._cc_zero:
                cc = sys.structure_constants
                dOmega = dOmega - np.einsum('ijl,jbe,lc->ibce', cc, dgam, gam) \
                    - np.einsum('ijl,jb,lce->ibce', cc, gam, dgam)
            jet.dOmega = dOmega
            jet.dK = np.einsum('aie,ibc->abce', jet.dJ, Omega) \
                + np.einsum('ai,ibce->abce', jet.J, dOmega)

        dg1 = cache.get("dg1") if c_d2gt else None
        if dg1 is None:
            dg1 = 0.5 * (jet.d2gt.transpose(0, 2, 1, 3) + jet.d2gt
                         - jet.d2gt.transpose(2, 0, 1, 3))
            if c_d2gt:
                cache["dg1"] = dg1
        jet.dlc = np.einsum('ade,dbc->abce', jet.dgtinv, g1) \
            + np.einsum('ad,dbce->abce', jet.gtinv, dg1)
    else:
        jet.d2gt = jet.dgtinv = jet.dOmega = jet.dK = jet.dlc = None

    all_const = not (gam_var or gbb_var or gbg_var or ggg_var
                     or (sys.potential is not None and not prov["V"].grad_zero))

    if parts == "core":
        jet.B = jet.C = jet.H1 = jet.H2 = jet.Hhalf = jet.tilde = None
        jet.beta = jet.dbeta = jet.dB = None
        if all_const:
            sys._jet_cache[("jet", order, "core")] = jet
        return jet

    jet.B = np.einsum('cd,abd->cab', jet.gtinv, jet.K)
    jet.C = np.einsum('cd,dab->cab', jet.gtinv, jet.K)
    Bsym = jet.B + jet.B.transpose(0, 2, 1)
    jet.H1 = jet.lc + jet.B
    jet.H2 = jet.lc + jet.B.transpose(0, 2, 1)
    jet.Hhalf = jet.lc + 0.5 * Bsym
    jet.tilde = jet.lc + 0.5 * (Bsym - jet.C)
    jet.beta = np.einsum('cec->e', jet.B) + np.einsum('cce->e', jet.B)

    if order >= 2:
        jet.dB = np.einsum('cde,abd->cabe', jet.dgtinv, jet.K) \
            + np.einsum('cd,abde->cabe', jet.gtinv, jet.dK)
        jet.dbeta = np.einsum('cecf->ef', jet.dB) + np.einsum('ccef->ef', jet.dB)
    else:
        jet.dB = jet.dbeta = None
    if all_const:
        sys._jet_cache[("jet", order, "all")] = jet
    return jet


def reduced_metric_value(sys, q):
    """Reduced metric only; cheap path for energy evaluation."""
    q = np.asarray(q, dtype=float)
    prov = sys._prov
    gam = prov["gamma"].value(q)
    gbb = prov["gbb"].value(q)
    ggg = prov["ggg"].value(q)
    gt = gbb + gam.T @ (ggg @ gam)
    if not prov["gbg"].value_zero:
        gbg = prov["gbg"].value(q)
        P = gbg @ gam
        gt = gt - P - P.T
    return 0.5 * (gt + gt.T)


@dataclass
class ReducedGeometryAt:
    """Pointwise bundle of every reduced geometric object."""

    q: np.ndarray
    gt: np.ndarray
    gtinv: np.ndarray
    levi_civita: np.ndarray
    Omega: np.ndarray
    J: np.ndarray
    K: np.ndarray
    B: np.ndarray
    C: np.ndarray
    nabla_tilde: np.ndarray
    nabla_h1: np.ndarray
    nabla_h2: np.ndarray
    nabla_hhalf: np.ndarray
    beta: np.ndarray


def reduced_geometry(sys, q):
    jet = reduced_jet(sys, q, order=1)
    return ReducedGeometryAt(
        q=jet.q, gt=jet.gt, gtinv=jet.gtinv, levi_civita=jet.lc,
        Omega=jet.Omega, J=jet.J, K=jet.K, B=jet.B, C=jet.C,
        nabla_tilde=jet.tilde, nabla_h1=jet.H1, nabla_h2=jet.H2,
        nabla_hhalf=jet.Hhalf, beta=jet.beta)


# thin operation wrappers ------------------------------------------------------

def reduced_metric(sys, q):
    return reduced_jet(sys, q).gt


def curvature_coeffs(sys, q):
    return reduced_jet(sys, q).Omega


def momentum_pairing(sys, q):
    return reduced_jet(sys, q).J


def metric_connection_tensor(sys, q):
    return reduced_jet(sys, q).K


def contorsion_B(sys, q):
    return reduced_jet(sys, q).B


def tensor_C(sys, q):
    return reduced_jet(sys, q).C


def connections(sys, q):
    """Symbols of the four induced connections as a dict."""
    jet = reduced_jet(sys, q)
    return {"tilde": jet.tilde, "h1": jet.H1, "h2": jet.H2,
            "hhalf": jet.Hhalf, "levi_civita": jet.lc}


def gyroscopic_alpha(sys, q, v, check_tol=1e-12):
    """Gyroscopic covector, computed two ways and cross-checked."""
    v = np.asarray(v, dtype=float)
    jet = reduced_jet(sys, q)
    a1 = jet.alpha(v)
    a2 = jet.alpha_from_curvature(v)
    scale = 1.0 + float(np.max(np.abs(a1)))
    if np.max(np.abs(a1 - a2)) > check_tol * scale:
        raise ChaplyginError(
            f"{sys.name}: gyroscopic covector routes disagree at q={jet.q.tolist()}")
    return a1


def xi_two_form(sys, q, v):
    return reduced_jet(sys, q).xi_matrix(np.asarray(v, dtype=float))


def beta_components(sys, q):
    return reduced_jet(sys, q).beta


@dataclass
class Classification:
    label: str
    b_symmetric_part_max: float
    hhalf_vs_levi_civita_max: float
    tolerance: float

    @property
    def hamiltonian_reducible(self):
        return self.label == "HamiltonianReducible"


def classify(sys, samples, tol=1e-10):
    """Skewness of B over sample points decides whether the reduced flow is
    plain Hamiltonian or carries a genuine gyroscopic force."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    bmax = 0.0
    hmax = 0.0
    for q in samples:
        jet = reduced_jet(sys, q)
        bsym = jet.B + jet.B.transpose(0, 2, 1)
        bmax = max(bmax, float(np.max(np.abs(bsym))) if bsym.size else 0.0)
        hmax = max(hmax, float(np.max(np.abs(jet.Hhalf - jet.lc))))
    label = "HamiltonianReducible" if bmax <= tol else "GyroscopicallyForced"
    return Classification(label, bmax, hmax, tol)
