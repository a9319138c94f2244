"""Invariant-volume decision procedure for the reduced dynamics.

The gyroscopic tensor determines a velocity-linear function h and a basic
1-form beta with h = <beta, v>.  The reduced flow of a kinetic-energy
system preserves some volume form iff beta is exact; the density is then
k = exp f with df = beta, and the phase-space density is k det(reduced
metric).  Everything here is decided numerically: closedness through exact
dual-number derivatives, exactness through quadrature over axis-parallel
paths and random rectangular loops.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import IntegratorConfig, ReducedField, integrate_with_jacobian
from .errors import ChaplyginError, NotClosed, QuadratureFailure
from .reduction import reduced_jet

__all__ = [
    "Region", "MeasureReport", "PotentialEvaluator",
    "h_function", "beta_form", "closedness_residual",
    "beta_potential", "measure_verdict", "density", "verify_invariance",
    "check_stanchenko", "xi_exterior_derivative",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


@dataclass
class Region:
    """Axis-aligned box in base coordinates with a caller-asserted topology flag."""

    lo: np.ndarray
    hi: np.ndarray
    n_samples: int = 64
    simply_connected: bool = True

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != self.hi.shape or not np.all(self.hi > self.lo):
            raise ValueError("region box must have positive volume")

    @property
    def dim(self):
        return self.lo.size

    def grid(self, per_axis=None):
        per_axis = per_axis or max(2, int(round(self.n_samples ** (1.0 / self.dim))))
        axes = [np.linspace(self.lo[i], self.hi[i], per_axis) for i in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def sample(self, rng, count=None):
        count = count or self.n_samples
        return rng.uniform(self.lo, self.hi, size=(count, self.dim))

    def center(self):
        return 0.5 * (self.lo + self.hi)


def h_function(sys, q, v, check_tol=1e-12):
    """Velocity-linear divergence source; two displayed forms cross-checked."""
    v = np.asarray(v, dtype=float)
    jet = reduced_jet(sys, q, order=1)
    h1 = float(jet.beta @ v)
    h2 = float(np.trace(jet.gtinv @ jet.alpha_dv(v).T))
    if abs(h1 - h2) > check_tol * (1.0 + abs(h1)):
        raise ChaplyginError(f"{sys.name}: h-function forms disagree ({h1} vs {h2})")
    return h1


def beta_form(sys, q):
    """Components of the basic 1-form driving the volume evolution."""
    return reduced_jet(sys, q, order=1).beta


def closedness_residual(sys, region_or_points):
    """max |d_a beta_b - d_b beta_a| over the sample set, exact derivatives."""
    pts = region_or_points.grid() if isinstance(region_or_points, Region) \
        else np.atleast_2d(np.asarray(region_or_points, dtype=float))
    worst = 0.0
    for q in pts:
        db = reduced_jet(sys, q, order=2).dbeta
        worst = max(worst, float(np.max(np.abs(db - db.T))))
    return worst


def _segment_integral(sys, p0, axis, a, b, panels):
    """Integral of beta_axis along the straight segment q[axis] in [a, b]."""
    total = 0.0
    edges = np.linspace(a, b, panels + 1)
    q = np.array(p0, dtype=float)
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        for node, w in zip(_GL_NODES, _GL_WEIGHTS):
            q[axis] = mid + half * node
            total += w * half * float(reduced_jet(sys, q, order=1).beta[axis])
    return total


class PotentialEvaluator:
    """Potential of an exact basic 1-form by axis-parallel line integrals."""

    def __init__(self, sys, base_point, panels=16):
        self.sys = sys
        self.base_point = np.asarray(base_point, dtype=float)
        self.panels = panels

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        total = 0.0
        current = self.base_point.copy()
        for axis in range(q.size):
            if q[axis] != current[axis]:
                total += _segment_integral(self.sys, current, axis,
                                           current[axis], q[axis], self.panels)
                current[axis] = q[axis]
        return total

    def loop_residual(self, region, rng, loops=20):
        """Max circulation of beta around random axis-aligned rectangles."""
        worst = 0.0
        dim = region.dim
        for _ in range(loops):
            i, j = rng.choice(dim, size=2, replace=False) if dim > 2 else (0, 1)
            lo = rng.uniform(region.lo, region.hi)
            hi = rng.uniform(lo, region.hi)
            p = lo.copy()
            total = _segment_integral(self.sys, p, i, lo[i], hi[i], self.panels)
            p[i] = hi[i]
            total += _segment_integral(self.sys, p, j, lo[j], hi[j], self.panels)
            p[j] = hi[j]
            total += _segment_integral(self.sys, p, i, hi[i], lo[i], self.panels)
            p[i] = lo[i]
            total += _segment_integral(self.sys, p, j, hi[j], lo[j], self.panels)
            if not np.isfinite(total):
                raise QuadratureFailure("loop integral diverged")
            worst = max(worst, abs(total))
        return worst


def beta_potential(sys, region, base_point=None, threshold=1e-8, rng=None,
                   panels=16):
    """Potential evaluator for beta plus the path-independence residual.

    Requires closedness below the threshold; the caller asserts the region
    is simply connected (boxes are)."""
    resid = closedness_residual(sys, region)
    if resid > threshold:
        raise NotClosed(f"beta is not closed on the region (residual {resid:.3e})")
    rng = rng or np.random.default_rng(0)
    base = region.center() if base_point is None else np.asarray(base_point, dtype=float)
    f = PotentialEvaluator(sys, base, panels=panels)
    loop = f.loop_residual(region, rng)
    return f, loop


@dataclass
class MeasureReport:
    system: str
    verdict: str                       # NoInvariantMeasure | InvariantMeasure | Inconclusive
    closedness_residual: float
    threshold: float
    coarse_threshold: float
    path_independence_residual: float = None
    potential: object = None           # PotentialEvaluator, present iff exact
    base_point: np.ndarray = None
    region_lo: np.ndarray = None
    region_hi: np.ndarray = None
    simply_connected: bool = True
    kinetic_only: bool = True
    notes: str = ""
    f_samples: list = field(default_factory=list)

    def density_k(self, q):
        if self.potential is None:
            raise ChaplyginError("no invariant measure: density unavailable")
        return float(np.exp(self.potential(q)))

    def to_dict(self):
        doc = {
            "schema_version": 1,
            "system": self.system,
            "verdict": self.verdict,
            "closedness_residual": self.closedness_residual,
            "threshold": self.threshold,
            "coarse_threshold": self.coarse_threshold,
            "path_independence_residual": self.path_independence_residual,
            "simply_connected": self.simply_connected,
            "kinetic_only": self.kinetic_only,
            "notes": self.notes,
        }
        if self.region_lo is not None:
            doc["region"] = {"lo": self.region_lo.tolist(),
                             "hi": self.region_hi.tolist()}
        if self.base_point is not None:
            doc["base_point"] = self.base_point.tolist()
        if self.f_samples:
            doc["potential_samples"] = self.f_samples
        return doc

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, separators=(",", ":"))


def measure_verdict(sys, region, threshold=1e-8, coarse=1e-4, rng=None,
                    f_grid_per_axis=5, base_point=None):
    """Decide existence of an invariant volume form for the reduced flow.

    The negative verdict is only issued for kinetic-type systems (no
    potential); a closed beta on a region not asserted simply connected is
    Inconclusive rather than guessed."""
    rng = rng or np.random.default_rng(0)
    kinetic = sys.potential is None
    resid = closedness_residual(sys, region)
    report = MeasureReport(
        system=sys.name, verdict="Inconclusive", closedness_residual=resid,
        threshold=threshold, coarse_threshold=coarse,
        region_lo=region.lo, region_hi=region.hi,
        simply_connected=region.simply_connected, kinetic_only=kinetic)
    if resid > coarse:
        if kinetic:
            report.verdict = "NoInvariantMeasure"
            report.notes = "beta not closed; no basic density can transport the volume"
        else:
            report.verdict = "Inconclusive"
            report.notes = "beta not closed, but a potential term blocks the negative verdict"
        return report
    if resid > threshold:
        report.notes = "closedness residual between the strict and coarse thresholds"
        return report
    if not region.simply_connected:
        report.notes = "beta closed, but the region is not asserted simply connected"
        return report
    f, loop = beta_potential(sys, region, base_point=base_point,
                             threshold=threshold, rng=rng)
    report.path_independence_residual = loop
    if loop > threshold:
        report.notes = "beta closed but loop integrals do not vanish"
        return report
    report.verdict = "InvariantMeasure"
    report.potential = f
    report.base_point = f.base_point
    for q in region.grid(f_grid_per_axis):
        report.f_samples.append({"q": [float(x) for x in q], "f": float(f(q))})
    return report


def density(sys, k_eval, q):
    """Phase-space density of the invariant volume: k(q) det gt(q)."""
    jet = reduced_jet(sys, q, order=1)
    rho = float(k_eval(q)) * float(np.linalg.det(jet.gt))
    if rho <= 0.0:
        raise ChaplyginError("invariant density must be positive")
    return rho


def verify_invariance(sys, log_k, initial_states, t_span, cfg=None,
                      grad_log_k=None, rng=None, pointwise_samples=32):
    """Transport check of a candidate density along the reduced flow.

    For each trajectory the drift of log(k det gt) + log det J is reported;
    when grad_log_k is supplied the pointwise identity <grad log k, v> = h
    is checked at random states as well."""
    cfg = cfg or IntegratorConfig()
    field_ = ReducedField(sys)
    drifts = []
    for s0 in initial_states:
        traj = integrate_with_jacobian(field_, s0, t_span, cfg)
        logrho = np.array([
            float(log_k(qq)) + np.log(np.linalg.det(reduced_jet(sys, qq, order=1).gt))
            for qq in traj.q])
        drift = logrho + traj.log_det_jacobian - logrho[0]
        drifts.append(float(np.max(np.abs(drift))))
    pointwise = None
    if grad_log_k is not None:
        rng = rng or np.random.default_rng(0)
        pointwise = 0.0
        for _ in range(pointwise_samples):
            q = initial_states[0].q + rng.normal(scale=0.5, size=sys.n_base)
            v = rng.normal(size=sys.n_base)
            r = abs(float(np.dot(grad_log_k(q), v)) - h_function(sys, q, v))
            pointwise = max(pointwise, r)
    return {"max_drift": max(drifts), "drifts": drifts,
            "pointwise_residual": pointwise}


def xi_exterior_derivative(sys, q, v):
    """Coefficient blocks of d Xi at (q, v): (dq dq dq, dq dq dv)."""
    jet = reduced_jet(sys, q, order=2)
    # q-derivative of Xi at fixed v: dM[a, b, f] = d_f M_ab
    dM = np.einsum('e,ceaf,cb->abf', v, jet.dB, jet.gt) \
        + np.einsum('e,cea,cbf->abf', v, jet.B, jet.dgt)
    dXi = 0.5 * (dM - dM.transpose(1, 0, 2))
    qqq = dXi.transpose(2, 0, 1)        # [f, a, b] = d_f Xi_ab
    # dXi(e_a, e_b, e_c) = d_a Xi_bc - d_b Xi_ac + d_c Xi_ab
    d_qqq = qqq - qqq.transpose(1, 0, 2) + qqq.transpose(1, 2, 0)
    # v-derivative block: d Xi_ab / d v^c
    Mv = np.einsum('cea,cb->eab', jet.B, jet.gt)
    d_qqv = 0.5 * (Mv.transpose(1, 2, 0) - Mv.transpose(2, 1, 0))
    return d_qqq, d_qqv


def check_stanchenko(sys, F, samples, tol=1e-8):
    """Residuals of the two sufficient volume-preservation conditions for a
    basic function F: the wedge identity dF ^ theta = Xi, and the globally
    conformal identity dF ^ omega = -d omega."""
    worst_as2 = 0.0
    worst_as3 = 0.0
    for q, v in samples:
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        jet = reduced_jet(sys, q, order=2)
        _, dF = F.value_and_jacobian(q)
        p = jet.gt @ v
        lhs = np.outer(dF, p)
        as2 = (lhs - lhs.T) - jet.xi_matrix(v)
        worst_as2 = max(worst_as2, float(np.max(np.abs(as2))))

        # qqv block: antisym_ab(dF_a gt_bc) = d Xi_ab / d v^c
        d_qqq, d_qqv = xi_exterior_derivative(sys, q, v)
        lhs_v = np.einsum('a,bc->abc', dF, jet.gt)
        lhs_v = lhs_v - lhs_v.transpose(1, 0, 2)
        r3 = float(np.max(np.abs(lhs_v - d_qqv)))
        # qqq block: dF ^ (qq block of omega) = (d Xi)_qqq
        dp = np.einsum('aeb,e->ab', jet.dgt, v)    # [a, b] = d_b p_a
        omega_qq = dp - dp.T - jet.xi_matrix(v)
        wedge = np.einsum('a,bc->abc', dF, omega_qq)
        wedge = wedge - wedge.transpose(1, 0, 2) + wedge.transpose(1, 2, 0)
        r3 = max(r3, float(np.max(np.abs(wedge - d_qqq))))
        worst_as3 = max(worst_as3, r3)
    return {"residual_wedge": worst_as2, "residual_conformal": worst_as3,
            "wedge_holds": worst_as2 <= tol, "conformal_holds": worst_as3 <= tol}
