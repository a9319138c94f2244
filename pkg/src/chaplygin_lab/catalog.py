"""Built-in parameterized systems.

Each entry carries three mutually consistent models: the bundle-local
ChaplyginSystem used by the reduction pipeline, the FullSystem used by the
Lagrange-multiplier oracle, and the GroupModel used for reconstruction.
Closed-form reference values from the mechanics literature are attached
for regression tests.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import SmoothMap
from .dynamics import FullSystem
from .errors import ParameterOutOfRange
from .reconstruction import abelian_translations, se2_group_model
from .reduction import ChaplyginSystem

__all__ = ["CatalogEntry", "build", "names", "parameter_schema"]


@dataclass
class CatalogEntry:
    name: str
    description: str
    params: dict
    system: ChaplyginSystem
    full_system: FullSystem
    group_model: object
    literature: dict
    default_region: tuple = ((0.0, 0.0), (1.0, 1.0))   # (lo, hi)
    default_state: tuple = ((0.3, 0.2), (0.8, -0.4))   # (q0, v0)


_SE2_CC = np.zeros((3, 3, 3))
_SE2_CC[0, 1, 2] = 1.0    # [e2, e3] = e1
_SE2_CC[0, 2, 1] = -1.0
_SE2_CC[1, 2, 0] = 1.0    # [e3, e1] = e2
_SE2_CC[1, 0, 2] = -1.0


_SCHEMAS = {
    "mobile_robot": {
        "m": (4.0, "kg", "total mass"),
        "J": (1.5, "kg m^2", "body inertia about the vertical axis"),
        "J_w": (0.5, "kg m^2", "axial inertia of each wheel"),
        "R": (0.3, "m", "wheel radius"),
    },
    "two_wheeled_robot": {
        "m0": (10.0, "kg", "chassis mass (without wheels)"),
        "m1": (1.0, "kg", "mass of each wheel"),
        "J": (2.0, "kg m^2", "chassis inertia about the vertical axis"),
        "J_wheel": (1.0, "kg m^2", "axial inertia of each wheel"),
        "l": (0.5, "m", "distance from axle midpoint to center of mass"),
        "R": (0.1, "m", "wheel radius"),
        "c": (0.3, "m", "half the axle length"),
    },
    "particle_modified": {},
    "particle_classical": {},
}


def names():
    return sorted(_SCHEMAS)


def parameter_schema(name):
    if name not in _SCHEMAS:
        raise ParameterOutOfRange(f"unknown system {name!r}; known: {names()}")
    return {k: {"default": v[0], "unit": v[1], "doc": v[2]}
            for k, v in _SCHEMAS[name].items()}


def _resolve_params(name, params):
    schema = _SCHEMAS[name]
    params = dict(params or {})
    unknown = set(params) - set(schema)
    if unknown:
        raise ParameterOutOfRange(f"{name}: unknown parameters {sorted(unknown)}")
    out = {k: float(params.get(k, v[0])) for k, v in schema.items()}
    for k, val in out.items():
        if not val > 0.0:
            raise ParameterOutOfRange(f"{name}: parameter {k} must be positive, got {val}")
    return out


def build(name, params=None):
    if name not in _SCHEMAS:
        raise ParameterOutOfRange(f"unknown system {name!r}; known: {names()}")
    p = _resolve_params(name, params)
    return _BUILDERS[name](p)


# mobile robot with steered, synchronously driven wheels -----------------------

def _mobile_robot(p):
    m, J, Jw, R = p["m"], p["J"], p["J_w"], p["R"]

    def gamma_fn(q):
        th = q[0]
        return [[0.0, -R * ad.cos(th)], [0.0, -R * ad.sin(th)]]

    sys = ChaplyginSystem(
        name="mobile_robot",
        n_base=2, group_dim=2,
        structure_constants=np.zeros((2, 2, 2)),
        gamma=SmoothMap(gamma_fn, 2, (2, 2), name="robot_gamma"),
        g_bb=SmoothMap.constant(np.diag([J, 3 * Jw]), 2, name="robot_gbb"),
        g_bg=SmoothMap.constant(np.zeros((2, 2)), 2, name="robot_gbg"),
        g_gg=SmoothMap.constant(np.diag([m, m]), 2, name="robot_ggg"),
        sample_points=[np.array([0.4, 1.0])],
    )

    def metric_fn(q):
        return np.diag([J, 3 * Jw, m, m])

    def mu_fn(q):
        th = q[0]
        s, c = ad.sin(th), ad.cos(th)
        return [[0.0, 0.0, s, -c],
                [0.0, -R, c, s]]

    fs = FullSystem(
        name="mobile_robot", dim=4,
        metric=SmoothMap(metric_fn, 4, (4, 4), name="robot_metric", degree_bound=0),
        mu=SmoothMap(mu_fn, 4, (2, 4), name="robot_mu"),
        n_constraints=2, base_indices=(0, 1), fiber_indices=(2, 3))

    lit = {
        "gt": lambda q: np.diag([J, 3 * Jw + m * R * R]),
        "K_is_zero": True,
        "beta_is_zero": True,
        "classification": "HamiltonianReducible",
    }
    return CatalogEntry("mobile_robot",
                        "synchro-drive robot: fixed body orientation, steered wheels",
                        p, sys, fs, abelian_translations(2, ("x", "y")), lit,
                        default_region=((0.0, 0.0), (1.0, 1.0)),
                        default_state=((0.3, 0.2), (0.7, 1.1)))


# two-wheeled carriage ----------------------------------------------------------

def _two_wheeled_robot(p):
    m0, m1, J, J2 = p["m0"], p["m1"], p["J"], p["J_wheel"]
    l, R, c = p["l"], p["R"], p["c"]
    m = m0 + 2 * m1

    gam = np.array([[R / 2, R / 2],
                    [0.0, 0.0],
                    [R / (2 * c), -R / (2 * c)]])
    ggg = np.array([[m, 0.0, 0.0],
                    [0.0, m, m0 * l],
                    [0.0, m0 * l, J]])

    sys = ChaplyginSystem(
        name="two_wheeled_robot",
        n_base=2, group_dim=3,
        structure_constants=_SE2_CC,
        gamma=SmoothMap.constant(gam, 2, name="carriage_gamma"),
        g_bb=SmoothMap.constant(np.diag([J2, J2]), 2, name="carriage_gbb"),
        g_bg=SmoothMap.constant(np.zeros((2, 3)), 2, name="carriage_gbg"),
        g_gg=SmoothMap.constant(ggg, 2, name="carriage_ggg"),
        sample_points=[np.array([0.0, 0.0])],
    )

    def metric_fn(q):
        th = q[4]
        s, co = ad.sin(th), ad.cos(th)
        a = m0 * l
        return [[J2, 0.0, 0.0, 0.0, 0.0],
                [0.0, J2, 0.0, 0.0, 0.0],
                [0.0, 0.0, m, 0.0, -a * s],
                [0.0, 0.0, 0.0, m, a * co],
                [0.0, 0.0, -a * s, a * co, J]]

    def mu_fn(q):
        th = q[4]
        s, co = ad.sin(th), ad.cos(th)
        return [[0.0, 0.0, s, -co, 0.0],
                [R, 0.0, co, s, c],
                [0.0, R, co, s, -c]]

    fs = FullSystem(
        name="two_wheeled_robot", dim=5,
        metric=SmoothMap(metric_fn, 5, (5, 5), name="carriage_metric"),
        mu=SmoothMap(mu_fn, 5, (3, 5), name="carriage_mu"),
        n_constraints=3, base_indices=(0, 1), fiber_indices=(2, 3, 4))

    C0 = m0 * l * R ** 3 / (4 * c * c)
    diag = J2 + m * R * R / 4 + J * R * R / (4 * c * c)
    off = m * R * R / 4 - J * R * R / (4 * c * c)

    def alpha_closed_form(v):
        """(C0) (v2 - v1) (v2 dpsi1 - v1 dpsi2); sign fixed by the oracle."""
        return C0 * (v[1] - v[0]) * np.array([v[1], -v[0]])

    lit = {
        "gt": lambda q: np.array([[diag, off], [off, diag]]),
        "K_coefficient": C0,
        "Omega_identity": np.array([0.0, -R * R / (2 * c), 0.0]),
        "alpha": alpha_closed_form,
        "classification": "GyroscopicallyForced",
    }
    return CatalogEntry("two_wheeled_robot",
                        "two-wheel differential-drive carriage on the plane",
                        p, sys, fs, se2_group_model(), lit,
                        default_region=((0.0, 0.0), (1.0, 1.0)),
                        default_state=((0.1, -0.2), (0.8, -0.3)))


# free particle with a velocity constraint --------------------------------------

def _particle(modified):
    if modified:
        def gamma_fn(q):
            return [[-q[0] * q[1], 0.0]]
        gamma = SmoothMap(gamma_fn, 2, (1, 2), name="particle_mod_gamma",
                          degree_bound=2)

        def mu_fn(q):
            return [[-q[0] * q[1], 0.0, 1.0]]
        mu = SmoothMap(mu_fn, 3, (1, 3), name="particle_mod_mu", degree_bound=2)
        sysname = "particle_modified"
        desc = "free particle, vertical velocity slaved to y*x*xdot"

        def beta_fn(q):
            x, y = q
            return np.array([0.0, -x * x * y / (1.0 + x * x * y * y)])
        lit = {
            "gt": lambda q: np.diag([1.0 + q[0] ** 2 * q[1] ** 2, 1.0]),
            "beta": beta_fn,
            "Omega_xy": lambda q: q[0],
            "K_xxy": lambda q: q[0] ** 2 * q[1],
            "classification": "GyroscopicallyForced",
            "measure_verdict": "NoInvariantMeasure",
        }
    else:
        def gamma_fn(q):
            return [[-q[1], 0.0]]
        gamma = SmoothMap(gamma_fn, 2, (1, 2), name="particle_gamma",
                          degree_bound=1)

        def mu_fn(q):
            return [[-q[1], 0.0, 1.0]]
        mu = SmoothMap(mu_fn, 3, (1, 3), name="particle_mu", degree_bound=1)
        sysname = "particle_classical"
        desc = "free particle, vertical velocity slaved to y*xdot"
        lit = {
            "gt": lambda q: np.diag([1.0 + q[1] ** 2, 1.0]),
            "beta": lambda q: np.array([0.0, -q[1] / (1.0 + q[1] ** 2)]),
            "potential_f": lambda y: -0.5 * np.log(1.0 + y * y),
            "density_k": lambda y: 1.0 / np.sqrt(1.0 + y * y),
            "first_integral": lambda q, v: v[0] * np.sqrt(1.0 + q[1] ** 2),
            "classification": "GyroscopicallyForced",
            "measure_verdict": "InvariantMeasure",
        }

    sys = ChaplyginSystem(
        name=sysname,
        n_base=2, group_dim=1,
        structure_constants=np.zeros((1, 1, 1)),
        gamma=gamma,
        g_bb=SmoothMap.constant(np.eye(2), 2, name="particle_gbb"),
        g_bg=SmoothMap.constant(np.zeros((2, 1)), 2, name="particle_gbg"),
        g_gg=SmoothMap.constant(np.eye(1), 2, name="particle_ggg"),
        sample_points=[np.array([1.0, 1.0])],
    )
    fs = FullSystem(
        name=sysname, dim=3,
        metric=SmoothMap.constant(np.eye(3), 3, name="particle_metric"),
        mu=mu, n_constraints=1, base_indices=(0, 1), fiber_indices=(2,))
    region = ((0.5, 0.5), (1.5, 1.5)) if modified else ((-0.5, -0.5), (1.5, 1.5))
    state = ((0.4, 0.7), (0.9, -0.5)) if modified else ((0.0, 0.0), (1.0, 0.3))
    return CatalogEntry(sysname, desc, {}, sys, fs,
                        abelian_translations(1, ("z",)), lit,
                        default_region=region, default_state=state)


_BUILDERS = {
    "mobile_robot": _mobile_robot,
    "two_wheeled_robot": _two_wheeled_robot,
    "particle_modified": lambda p: _particle(True),
    "particle_classical": lambda p: _particle(False),
}
