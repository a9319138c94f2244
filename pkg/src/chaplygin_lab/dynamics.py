"""Equations of motion, ODE integration and the full-vs-reduced oracle.

The reduced flow lives on the base tangent space; the full flow carries
the complete configuration with Lagrange multipliers enforcing the
constraints through a saddle linear system.  Matching the projected full
trajectories against the reduced ones is the arbiter for every sign
convention in the reduction pipeline.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (ChaplyginError, NonFiniteState, SingularSaddle,
                     StepLimitExceeded)
from .reduction import reduced_jet, reduced_metric_value

__all__ = [
    "State", "IntegratorConfig", "Trajectory",
    "ReducedField", "FullSystem", "FullField",
    "reduced_vector_field", "full_vector_field",
    "integrate", "integrate_with_jacobian",
    "lift_initial_state", "compare_full_reduced", "geodesic_coincidence",
    "connection_geodesic_field",
]


@dataclass
class State:
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.v))):
            raise NonFiniteState("state entries must be finite")

    def flat(self):
        return np.concatenate([self.q, self.v])


@dataclass
class IntegratorConfig:
    method: str = "rk4"          # "rk4" fixed step or "rk45" adaptive
    step: float = 1e-3
    rtol: float = 1e-10
    atol: float = 1e-12
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown integrator {self.method!r}")
        if self.step <= 0 or self.rtol <= 0 or self.atol <= 0 or self.max_steps <= 0:
            raise ValueError("integrator parameters must be positive")


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray            # (N, 2n) rows [q, v]
    n_dof: int
    energy: np.ndarray = None
    log_det_jacobian: np.ndarray = None
    constraint_residual: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    @property
    def q(self):
        return self.states[:, :self.n_dof]

    @property
    def v(self):
        return self.states[:, self.n_dof:2 * self.n_dof]

    def columns(self):
        n = self.n_dof
        cols = ["t"] + [f"q{i+1}" for i in range(n)] + [f"v{i+1}" for i in range(n)]
        data = [self.t] + [self.q[:, i] for i in range(n)] + [self.v[:, i] for i in range(n)]
        if self.energy is not None:
            cols.append("energy")
            data.append(self.energy)
        if self.log_det_jacobian is not None:
            cols.append("logdetJ")
            data.append(self.log_det_jacobian)
        if self.constraint_residual is not None:
            cols.append("residual")
            data.append(self.constraint_residual)
        return cols, np.column_stack(data)

    def to_csv(self, path):
        cols, data = self.columns()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in data:
                writer.writerow([repr(float(x)) for x in row])

    def to_json(self, path):
        cols, data = self.columns()
        doc = {
            "schema_version": 1,
            "metadata": self.metadata,
            "columns": cols,
            "data": [[float(x) for x in row] for row in data],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=None, separators=(",", ":"))


# reduced dynamics -------------------------------------------------------------

class ReducedField:
    """Second-order field on the base: qddot from the induced geometry."""

    def __init__(self, sys):
        self.sys = sys
        self.n = sys.n_base
        self.name = f"reduced({sys.name})"
        self._eye = np.eye(sys.n_base)

    def rhs(self, y):
        n = self.n
        q, v = y[:n], y[n:]
        jet = reduced_jet(self.sys, q, order=1, parts="core")
        force = jet.alpha(v) + jet.dV
        a = -jet.gtinv @ force - (jet.lc @ v) @ v
        return np.concatenate([v, a])

    def rhs_hessian_form(self, y):
        """Same field through the Hessian/momentum form of the reduced
        equations; kept as an internally cross-checked regression route."""
        n = self.n
        q, v = y[:n], y[n:]
        jet = reduced_jet(self.sys, q, order=1)
        dLdq = 0.5 * np.einsum('abe,a,b->e', jet.dgt, v, v) - jet.dV
        conv = np.einsum('bdc,d,c->b', jet.dgt, v, v)
        a = jet.gtinv @ (dLdq - conv - jet.alpha(v))
        return np.concatenate([v, a])

    def rhs_and_jacobian(self, y):
        """Field value and its (2n x 2n) derivative, exact dual derivatives."""
        n = self.n
        q, v = y[:n], y[n:]
        jet = reduced_jet(self.sys, q, order=2, parts="core")
        alpha = jet.alpha(v)
        force = alpha + jet.dV
        lcv = jet.lc @ v
        a = -jet.gtinv @ force - lcv @ v

        da_dv = -(jet.gtinv @ jet.alpha_dv(v).T) - 2.0 * lcv
        da_dq = -np.einsum('abe,b->ae', jet.dgtinv, force) \
            - jet.gtinv @ (jet.alpha_dq(v) + jet.d2V) \
            - np.einsum('abce,b,c->ae', jet.dlc, v, v)

        jac = np.zeros((2 * n, 2 * n))
        jac[:n, n:] = self._eye
        jac[n:, :n] = da_dq
        jac[n:, n:] = da_dv
        return np.concatenate([v, a]), jac

    def energy(self, y):
        n = self.n
        q, v = y[:n], y[n:]
        gt = reduced_metric_value(self.sys, q)
        return 0.5 * float(v @ gt @ v) + self.sys.potential_value(q)


def reduced_vector_field(sys, state, cross_check=False, tol=1e-10):
    """Acceleration of the reduced dynamics at a state; optionally checks the
    two displayed forms against each other."""
    f = ReducedField(sys)
    y = state.flat() if isinstance(state, State) else np.asarray(state, dtype=float)
    out = f.rhs(y)
    if cross_check:
        alt = f.rhs_hessian_form(y)
        scale = 1.0 + float(np.max(np.abs(out)))
        if np.max(np.abs(out - alt)) > tol * scale:
            raise ChaplyginError(f"{sys.name}: reduced-field forms disagree")
    n = sys.n_base
    return out[:n], out[n:]


# full dynamics ----------------------------------------------------------------

@dataclass
class FullSystem:
    """Unreduced model: metric and constraint one-forms on all coordinates."""

    name: str
    dim: int
    metric: object                 # SmoothMap (dim, dim)
    mu: object                     # SmoothMap (n_constraints, dim)
    n_constraints: int
    base_indices: tuple
    fiber_indices: tuple
    potential: object = None       # SmoothMap scalar
    identity_fiber: np.ndarray = None

    def __post_init__(self):
        self.base_indices = tuple(self.base_indices)
        self.fiber_indices = tuple(self.fiber_indices)
        if self.identity_fiber is None:
            self.identity_fiber = np.zeros(len(self.fiber_indices))
        if set(self.base_indices) | set(self.fiber_indices) != set(range(self.dim)):
            raise ValueError("base and fiber indices must partition the coordinates")

    def potential_value(self, q):
        return float(self.potential.value(q)) if self.potential is not None else 0.0


class FullField:
    """Multiplier dynamics through the saddle system [g, -mu^T; mu, 0]."""

    def __init__(self, fs):
        self.fs = fs
        self.n = fs.dim
        self.k = fs.n_constraints
        self.name = f"full({fs.name})"

    def _assemble(self, q, v):
        fs = self.fs
        g, dg = fs.metric.value_and_jacobian(q)
        g = 0.5 * (g + g.transpose(1, 0))
        dg = 0.5 * (dg + dg.transpose(1, 0, 2))
        # covariant force: -Gamma_1st(v, v) - dV
        s1 = np.einsum('bac,b,c->a', dg, v, v)
        s2 = np.einsum('bca,b,c->a', dg, v, v)
        force = -(s1 - 0.5 * s2)
        if fs.potential is not None:
            _, dV = fs.potential.value_and_jacobian(q)
            force = force - dV
        if self.k:
            mu, dmu = fs.mu.value_and_jacobian(q)
            b = -np.einsum('iae,e,a->i', dmu, v, v)
        else:
            mu = np.zeros((0, self.n))
            b = np.zeros(0)
        return g, mu, force, b

    def accel_and_multipliers(self, q, v):
        g, mu, force, b = self._assemble(q, v)
        n, k = self.n, self.k
        if k == 0:
            return np.linalg.solve(g, force), np.zeros(0)
        K = np.zeros((n + k, n + k))
        K[:n, :n] = g
        K[:n, n:] = -mu.T
        K[n:, :n] = mu
        rhs = np.concatenate([force, b])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSaddle(
                f"{self.name}: constraint compatibility fails at q={q.tolist()}") from exc
        return sol[:n], sol[n:]

    def rhs(self, y):
        n = self.n
        q, v = y[:n], y[n:]
        a, _ = self.accel_and_multipliers(q, v)
        return np.concatenate([v, a])

    def energy(self, y):
        n = self.n
        q, v = y[:n], y[n:]
        g = self.fs.metric.value(q)
        return 0.5 * float(v @ g @ v) + self.fs.potential_value(q)

    def constraint_residual(self, y):
        if self.k == 0:
            return 0.0
        n = self.n
        q, v = y[:n], y[n:]
        mu = self.fs.mu.value(q)
        return float(np.max(np.abs(mu @ v)))


def full_vector_field(fs, state):
    """Accelerations and multipliers of the constrained dynamics."""
    f = FullField(fs)
    if isinstance(state, State):
        q, v = state.q, state.v
    else:
        y = np.asarray(state, dtype=float)
        q, v = y[:fs.dim], y[fs.dim:]
    return f.accel_and_multipliers(q, v)


def full_vector_field_reference(fs, state):
    """Explicit inverse-Hessian form of the multiplier dynamics, kept as a
    regression reference for the saddle route."""
    f = FullField(fs)
    if isinstance(state, State):
        q, v = state.q, state.v
    else:
        y = np.asarray(state, dtype=float)
        q, v = y[:fs.dim], y[fs.dim:]
    g, dg = fs.metric.value_and_jacobian(q)
    g = 0.5 * (g + g.transpose(1, 0))
    dg = 0.5 * (dg + dg.transpose(1, 0, 2))
    W = np.linalg.inv(g)
    dLdq = 0.5 * np.einsum('bce,b,c->e', dg, v, v)
    if fs.potential is not None:
        _, dV = fs.potential.value_and_jacobian(q)
        dLdq = dLdq - dV
    dp = np.einsum('bac,a,c->b', dg, v, v)          # v^c d p_b / d q^c
    fvec = dLdq - dp
    mu, dmu = fs.mu.value_and_jacobian(q)
    C = -mu @ W @ mu.T
    try:
        Cinv = np.linalg.inv(C)
    except np.linalg.LinAlgError as exc:
        raise SingularSaddle(f"{fs.name}: compatibility matrix singular") from exc
    curl = np.einsum('idc,c,d->i', dmu, v, v)        # (d mu_iD / d q^C) v^C v^D
    lam = Cinv @ (mu @ W @ fvec + curl)
    a = W @ (fvec + mu.T @ lam)
    return a, lam


# integrators ------------------------------------------------------------------

def _wrap_field(f):
    if callable(f):
        return f, None, None
    return f.rhs, getattr(f, "energy", None), getattr(f, "constraint_residual", None)


def integrate(field, s0, t_span, cfg=None):
    """Integrate a first-order field, recording every accepted step."""
    cfg = cfg or IntegratorConfig()
    rhs, energy_fn, resid_fn = _wrap_field(field)
    y0 = s0.flat() if isinstance(s0, State) else np.asarray(s0, dtype=float)
    t0, t1 = float(t_span[0]), float(t_span[1])
    if cfg.method == "rk4":
        ts, ys = _rk4(rhs, y0, t0, t1, cfg.step, cfg.max_steps)
    else:
        ts, ys = _rk45(rhs, y0, t0, t1, cfg)
    n_dof = y0.size // 2
    traj = Trajectory(ts, ys, n_dof,
                      metadata={"integrator": cfg.method, "step": cfg.step,
                                "rtol": cfg.rtol, "atol": cfg.atol})
    if energy_fn is not None:
        traj.energy = np.array([energy_fn(y) for y in ys])
    if resid_fn is not None:
        traj.constraint_residual = np.array([resid_fn(y) for y in ys])
    return traj


def _rk4(rhs, y0, t0, t1, h, max_steps):
    span = t1 - t0
    n_steps = max(1, int(round(span / h)))
    if n_steps > max_steps:
        raise StepLimitExceeded(f"{n_steps} steps exceed the budget {max_steps}")
    h = span / n_steps
    ys = np.empty((n_steps + 1, y0.size))
    ts = t0 + h * np.arange(n_steps + 1)
    y = y0.copy()
    ys[0] = y
    h2 = 0.5 * h
    h6 = h / 6.0
    for i in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(y + h2 * k1)
        k3 = rhs(y + h2 * k2)
        k4 = rhs(y + h * k3)
        y = y + h6 * (k1 + 2.0 * (k2 + k3) + k4)
        ys[i + 1] = y
    if not np.all(np.isfinite(y)):
        raise NonFiniteState("integration diverged")
    return ts, ys


_DP_A = [
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
]
_DP_E = np.array([35 / 384 - 5179 / 57600, 0.0, 500 / 1113 - 7571 / 16695,
                  125 / 192 - 393 / 640, -2187 / 6784 + 92097 / 339200,
                  11 / 84 - 187 / 2100, -1 / 40])


def _rk45(rhs, y0, t0, t1, cfg):
    """Dormand-Prince 5(4) with a PI step controller."""
    t, y = t0, y0.copy()
    h = min(cfg.step, t1 - t0)
    ts, ys = [t], [y.copy()]
    err_prev = 1.0
    k1 = rhs(y)
    steps = 0
    while t < t1 - 1e-14:
        if steps > cfg.max_steps:
            raise StepLimitExceeded(f"adaptive integration exceeded {cfg.max_steps} steps")
        steps += 1
        h = min(h, t1 - t)
        ks = [k1]
        for row in _DP_A[1:]:
            yi = y + h * sum(c * k for c, k in zip(row, ks))
            ks.append(rhs(yi))
        y5 = yi                        # FSAL: last stage evaluated at the solution
        err_vec = h * sum(c * k for c, k in zip(_DP_E, ks))
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if not np.isfinite(err):
            raise NonFiniteState("adaptive integration diverged")
        if err <= 1.0:
            t += h
            y = y5
            k1 = ks[-1]
            ts.append(t)
            ys.append(y.copy())
            err = max(err, 1e-10)
            factor = 0.9 * err ** -0.14 * err_prev ** 0.08
            err_prev = err
        else:
            factor = max(0.2, 0.9 * err ** -0.2)
        h *= min(5.0, max(0.2, factor))
    return np.array(ts), np.array(ys)


def integrate_with_jacobian(field, s0, t_span, cfg=None):
    """Integrate the state together with the variational equation
    Jdot = DX J; stores log det J at the output times (LU factorization)."""
    cfg = cfg or IntegratorConfig()
    y0 = s0.flat() if isinstance(s0, State) else np.asarray(s0, dtype=float)
    d = y0.size
    rhs_jac = field.rhs_and_jacobian

    def ext_rhs(z):
        y = z[:d]
        J = z[d:].reshape(d, d)
        f, DX = rhs_jac(y)
        return np.concatenate([f, (DX @ J).ravel()])

    z0 = np.concatenate([y0, np.eye(d).ravel()])
    t0, t1 = float(t_span[0]), float(t_span[1])
    if cfg.method == "rk4":
        ts, zs = _rk4(ext_rhs, z0, t0, t1, cfg.step, cfg.max_steps)
    else:
        ts, zs = _rk45(ext_rhs, z0, t0, t1, cfg)
    ys = zs[:, :d]
    mats = zs[:, d:].reshape(len(ts), d, d)
    signs, logdets = np.linalg.slogdet(mats)
    if np.any(signs <= 0):
        raise NonFiniteState("variational matrix lost orientation")
    n_dof = d // 2
    traj = Trajectory(ts, ys, n_dof, log_det_jacobian=logdets,
                      metadata={"integrator": cfg.method, "step": cfg.step,
                                "variational": True})
    energy_fn = getattr(field, "energy", None)
    if energy_fn is not None:
        traj.energy = np.array([energy_fn(y) for y in ys])
    return traj


# matched initial data and the oracle ------------------------------------------

def lift_initial_state(sys, fs, q, v):
    """Lift reduced initial data to an admissible full state: fiber at the
    trivialization identity, fiber velocity from the constraints."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    gam = sys.gamma.value(q)
    xi = -gam @ v
    qf = np.zeros(fs.dim)
    vf = np.zeros(fs.dim)
    qf[list(fs.base_indices)] = q
    qf[list(fs.fiber_indices)] = fs.identity_fiber
    vf[list(fs.base_indices)] = v
    vf[list(fs.fiber_indices)] = xi
    return State(qf, vf)


@dataclass
class OracleComparison:
    deviation: float
    constraint_residual: float
    trajectory_full: Trajectory
    trajectory_reduced: Trajectory


def compare_full_reduced(fs, sys, q0, v0, t_span, cfg=None):
    """Integrate the multiplier dynamics and the reduced dynamics from
    matched initial data; report the sup deviation of the base projection."""
    cfg = cfg or IntegratorConfig()
    full = FullField(fs)
    red = ReducedField(sys)
    s_full = lift_initial_state(sys, fs, q0, v0)
    s_red = State(np.asarray(q0, dtype=float), np.asarray(v0, dtype=float))
    tf = integrate(full, s_full, t_span, cfg)
    tr = integrate(red, s_red, t_span, cfg)
    base = list(fs.base_indices)
    dq = tf.q[:, base] - tr.q
    dv = tf.v[:, base] - tr.v
    deviation = float(max(np.max(np.abs(dq)), np.max(np.abs(dv))))
    resid = float(np.max(tf.constraint_residual)) if tf.constraint_residual is not None else 0.0
    return OracleComparison(deviation, resid, tf, tr)


def connection_geodesic_field(sys, which):
    """Geodesic field of one of the induced connections on the base."""
    n = sys.n_base
    attr = {"tilde": "tilde", "h1": "H1", "h2": "H2",
            "hhalf": "Hhalf", "levi_civita": "lc"}[which]

    class _Geo:
        name = f"{which}-geodesics({sys.name})"

        @staticmethod
        def rhs(y):
            q, v = y[:n], y[n:]
            jet = reduced_jet(sys, q, order=1)
            sym = getattr(jet, attr)
            sym = 0.5 * (sym + sym.transpose(0, 2, 1))
            a = -np.einsum('abc,b,c->a', sym, v, v)
            return np.concatenate([v, a])

        @staticmethod
        def energy(y):
            q, v = y[:n], y[n:]
            jet = reduced_jet(sys, q, order=1)
            return 0.5 * float(v @ jet.gt @ v)

    return _Geo()


def geodesic_coincidence(sys, s0, t_span, cfg=None,
                         which=("tilde", "h1", "h2", "hhalf")):
    """Max pairwise sup-deviation among the geodesic flows of the induced
    connections, integrated from identical initial data."""
    cfg = cfg or IntegratorConfig()
    trajs = [integrate(connection_geodesic_field(sys, w), s0, t_span, cfg)
             for w in which]
    worst = 0.0
    for i in range(len(trajs)):
        for j in range(i + 1, len(trajs)):
            worst = max(worst, float(np.max(np.abs(trajs[i].states - trajs[j].states))))
    return worst
