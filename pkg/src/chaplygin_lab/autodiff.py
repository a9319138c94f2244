"""Forward-mode differentiation on dual numbers.

`Dual` carries a value and a tangent vector (one slot per seeded input
direction), so one evaluation of a function yields its value and a full
row of directional derivatives.  `Dual2` additionally carries a Hessian
block and is used wherever the pipeline needs second derivatives
(variational equations, closedness of 1-forms).  All q-dependent data in
the library lives in `SmoothMap` objects, whose evaluators must accept
plain floats as well as `Dual`/`Dual2` scalars.
"""

import math

import numpy as np

from .errors import DomainError

__all__ = [
    "Dual",
    "Dual2",
    "SmoothMap",
    "jacobian",
    "value_and_jacobian",
    "second_order_jet",
    "sin",
    "cos",
    "tan",
    "exp",
    "log",
    "sqrt",
    "atan2",
]

_NUMERIC = (int, float, np.integer, np.floating)


def _exp_val(x):
    try:
        v = math.exp(x)
    except OverflowError:
        raise DomainError("overflow in exp") from None
    if not math.isfinite(v):
        raise DomainError("overflow in exp")
    return v


def _pow_val(base, p):
    """base ** p on floats with loud domain failures."""
    if base == 0.0 and p < 0:
        raise DomainError("0 raised to a negative power")
    if base < 0.0 and p != round(p):
        raise DomainError("negative base with non-integer exponent")
    try:
        out = math.pow(base, p)
    except OverflowError:
        raise DomainError("overflow in power") from None
    if not math.isfinite(out):
        raise DomainError("non-finite result in power")
    return out


class Dual:
    """First-order dual number with a vector tangent."""

    __slots__ = ("val", "tangent")

    def __init__(self, val, tangent):
        self.val = float(val)
        self.tangent = np.asarray(tangent, dtype=float)

    @staticmethod
    def seed(q):
        """One Dual per coordinate, tangents forming the identity."""
        q = np.asarray(q, dtype=float)
        eye = np.eye(q.size)
        return [Dual(q[i], eye[i]) for i in range(q.size)]

    def __repr__(self):
        return f"Dual({self.val!r}, {self.tangent!r})"

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.tangent + other.tangent)
        if isinstance(other, _NUMERIC):
            return Dual(self.val + other, self.tangent)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.tangent - other.tangent)
        if isinstance(other, _NUMERIC):
            return Dual(self.val - other, self.tangent)
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, _NUMERIC):
            return Dual(other - self.val, -self.tangent)
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val,
                        self.tangent * other.val + other.tangent * self.val)
        if isinstance(other, _NUMERIC):
            return Dual(self.val * other, self.tangent * other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            if other.val == 0.0:
                raise DomainError("division by zero")
            inv = 1.0 / other.val
            return Dual(self.val * inv,
                        (self.tangent - (self.val * inv) * other.tangent) * inv)
        if isinstance(other, _NUMERIC):
            if other == 0:
                raise DomainError("division by zero")
            return Dual(self.val / other, self.tangent / other)
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, _NUMERIC):
            if self.val == 0.0:
                raise DomainError("division by zero")
            inv = 1.0 / self.val
            return Dual(other * inv, (-other * inv * inv) * self.tangent)
        return NotImplemented

    def __neg__(self):
        return Dual(-self.val, -self.tangent)

    def __pos__(self):
        return self

    def __pow__(self, p):
        if isinstance(p, Dual):
            # a^b = exp(b log a); requires a positive base
            if self.val <= 0.0:
                raise DomainError("power with dual exponent needs positive base")
            return exp(p * log(self))
        if isinstance(p, _NUMERIC):
            p = float(p)
            v = _pow_val(self.val, p)
            if p == 0.0:
                return Dual(v, np.zeros_like(self.tangent))
            dv = p * _pow_val(self.val, p - 1.0) if not (self.val == 0.0 and p == 1.0) else 1.0
            return Dual(v, dv * self.tangent)
        return NotImplemented

    def __rpow__(self, base):
        if isinstance(base, _NUMERIC):
            if base <= 0.0:
                raise DomainError("power with dual exponent needs positive base")
            v = _pow_val(base, self.val)
            return Dual(v, v * math.log(base) * self.tangent)
        return NotImplemented

    # elementary functions (method names let numpy ufuncs dispatch here) ---

    def sin(self):
        return Dual(math.sin(self.val), math.cos(self.val) * self.tangent)

    def cos(self):
        return Dual(math.cos(self.val), -math.sin(self.val) * self.tangent)

    def tan(self):
        t = math.tan(self.val)
        return Dual(t, (1.0 + t * t) * self.tangent)

    def exp(self):
        v = _exp_val(self.val)
        return Dual(v, v * self.tangent)

    def log(self):
        if self.val <= 0.0:
            raise DomainError("log of non-positive value")
        return Dual(math.log(self.val), self.tangent / self.val)

    def sqrt(self):
        if self.val < 0.0:
            raise DomainError("sqrt of negative value")
        if self.val == 0.0:
            raise DomainError("sqrt not differentiable at zero")
        s = math.sqrt(self.val)
        return Dual(s, self.tangent / (2.0 * s))

    def arctan2(self, other):
        return atan2(self, other)


class Dual2:
    """Second-order dual: value, gradient and symmetric Hessian block."""

    __slots__ = ("val", "g", "h")

    def __init__(self, val, g, h):
        self.val = float(val)
        self.g = np.asarray(g, dtype=float)
        self.h = np.asarray(h, dtype=float)

    @staticmethod
    def seed(q):
        q = np.asarray(q, dtype=float)
        n = q.size
        eye = np.eye(n)
        zero = np.zeros((n, n))
        return [Dual2(q[i], eye[i], zero) for i in range(n)]

    def __repr__(self):
        return f"Dual2({self.val!r})"

    def __add__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.val + other.val, self.g + other.g, self.h + other.h)
        if isinstance(other, _NUMERIC):
            return Dual2(self.val + other, self.g, self.h)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.val - other.val, self.g - other.g, self.h - other.h)
        if isinstance(other, _NUMERIC):
            return Dual2(self.val - other, self.g, self.h)
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, _NUMERIC):
            return Dual2(other - self.val, -self.g, -self.h)
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, Dual2):
            cross = np.outer(self.g, other.g)
            return Dual2(self.val * other.val,
                         self.g * other.val + other.g * self.val,
                         self.h * other.val + other.h * self.val + cross + cross.T)
        if isinstance(other, _NUMERIC):
            return Dual2(self.val * other, self.g * other, self.h * other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual2):
            return self * other._reciprocal()
        if isinstance(other, _NUMERIC):
            if other == 0:
                raise DomainError("division by zero")
            return Dual2(self.val / other, self.g / other, self.h / other)
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, _NUMERIC):
            return other * self._reciprocal()
        return NotImplemented

    def _reciprocal(self):
        if self.val == 0.0:
            raise DomainError("division by zero")
        inv = 1.0 / self.val
        return _lift1(self, inv, -inv * inv, 2.0 * inv * inv * inv)

    def __neg__(self):
        return Dual2(-self.val, -self.g, -self.h)

    def __pos__(self):
        return self

    def __pow__(self, p):
        if isinstance(p, Dual2):
            if self.val <= 0.0:
                raise DomainError("power with dual exponent needs positive base")
            return exp(p * log(self))
        if isinstance(p, _NUMERIC):
            p = float(p)
            v = _pow_val(self.val, p)
            if p == 0.0:
                return Dual2(v, np.zeros_like(self.g), np.zeros_like(self.h))
            if self.val == 0.0:
                d1 = 1.0 if p == 1.0 else 0.0 if p > 1.0 else None
                d2 = 2.0 if p == 2.0 else 0.0 if (p == 1.0 or p > 2.0) else None
                if d1 is None or d2 is None:
                    raise DomainError("power not twice differentiable at zero")
                return _lift1(self, v, d1, d2)
            d1 = p * _pow_val(self.val, p - 1.0)
            d2 = p * (p - 1.0) * _pow_val(self.val, p - 2.0) if p != 1.0 else 0.0
            return _lift1(self, v, d1, d2)
        return NotImplemented

    def __rpow__(self, base):
        if isinstance(base, _NUMERIC):
            if base <= 0.0:
                raise DomainError("power with dual exponent needs positive base")
            v = _pow_val(base, self.val)
            lb = math.log(base)
            return _lift1(self, v, v * lb, v * lb * lb)
        return NotImplemented

    def sin(self):
        s, c = math.sin(self.val), math.cos(self.val)
        return _lift1(self, s, c, -s)

    def cos(self):
        s, c = math.sin(self.val), math.cos(self.val)
        return _lift1(self, c, -s, -c)

    def tan(self):
        t = math.tan(self.val)
        d = 1.0 + t * t
        return _lift1(self, t, d, 2.0 * t * d)

    def exp(self):
        v = _exp_val(self.val)
        return _lift1(self, v, v, v)

    def log(self):
        if self.val <= 0.0:
            raise DomainError("log of non-positive value")
        inv = 1.0 / self.val
        return _lift1(self, math.log(self.val), inv, -inv * inv)

    def sqrt(self):
        if self.val <= 0.0:
            raise DomainError("sqrt needs a positive argument")
        s = math.sqrt(self.val)
        return _lift1(self, s, 0.5 / s, -0.25 / (s * self.val))

    def arctan2(self, other):
        return atan2(self, other)


def _lift1(u, f, fp, fpp):
    """Chain rule through a scalar function with given derivatives at u.val."""
    outer = np.outer(u.g, u.g)
    return Dual2(f, fp * u.g, fp * u.h + fpp * outer)


def _lift2_dual(a, b, f, fa, fb):
    ta = fa * a.tangent if isinstance(a, Dual) else 0.0
    tb = fb * b.tangent if isinstance(b, Dual) else 0.0
    return Dual(f, ta + tb)


def _lift2_dual2(a, b, f, fa, fb, faa, fab, fbb):
    ag = a.g if isinstance(a, Dual2) else None
    bg = b.g if isinstance(b, Dual2) else None
    if ag is None:
        ag = np.zeros_like(bg)
    if bg is None:
        bg = np.zeros_like(ag)
    ah = a.h if isinstance(a, Dual2) else 0.0
    bh = b.h if isinstance(b, Dual2) else 0.0
    cross = np.outer(ag, bg)
    h = fa * ah + fb * bh + faa * np.outer(ag, ag) \
        + fab * (cross + cross.T) + fbb * np.outer(bg, bg)
    return Dual2(f, fa * ag + fb * bg, h)


# generic elementary functions usable on floats, Dual and Dual2 -------------

def _as_val(x):
    return x.val if isinstance(x, (Dual, Dual2)) else float(x)


def sin(x):
    return x.sin() if isinstance(x, (Dual, Dual2)) else math.sin(x)


def cos(x):
    return x.cos() if isinstance(x, (Dual, Dual2)) else math.cos(x)


def tan(x):
    return x.tan() if isinstance(x, (Dual, Dual2)) else math.tan(x)


def exp(x):
    if isinstance(x, (Dual, Dual2)):
        return x.exp()
    return _exp_val(x)


def log(x):
    if isinstance(x, (Dual, Dual2)):
        return x.log()
    if x <= 0.0:
        raise DomainError("log of non-positive value")
    return math.log(x)


def sqrt(x):
    if isinstance(x, (Dual, Dual2)):
        return x.sqrt()
    if x < 0.0:
        raise DomainError("sqrt of negative value")
    return math.sqrt(x)


def atan2(y, x):
    yv, xv = _as_val(y), _as_val(x)
    if yv == 0.0 and xv == 0.0:
        raise DomainError("atan2(0, 0) undefined")
    f = math.atan2(yv, xv)
    if not isinstance(y, (Dual, Dual2)) and not isinstance(x, (Dual, Dual2)):
        return f
    r2 = xv * xv + yv * yv
    fy, fx = xv / r2, -yv / r2
    if isinstance(y, Dual) or isinstance(x, Dual):
        return _lift2_dual(y, x, f, fy, fx)
    r4 = r2 * r2
    fyy = -2.0 * xv * yv / r4
    fyx = (yv * yv - xv * xv) / r4
    fxx = 2.0 * xv * yv / r4
    return _lift2_dual2(y, x, f, fy, fx, fyy, fyx, fxx)


# SmoothMap ------------------------------------------------------------------

def _collect(entry, grad_width):
    """Split an evaluator output entry into (value, tangent, hessian)."""
    if isinstance(entry, Dual):
        return entry.val, entry.tangent, None
    if isinstance(entry, Dual2):
        return entry.val, entry.g, entry.h
    v = float(entry)
    if grad_width is None:
        return v, None, None
    return v, np.zeros(grad_width), np.zeros((grad_width, grad_width))


class SmoothMap:
    """A function of base coordinates evaluable on floats and dual numbers.

    The wrapped callable receives a sequence of scalars (floats, `Dual`
    or `Dual2`, depending on the requested derivative order) and returns
    a scalar or a nested array of scalars.  The output shape must not
    depend on the evaluation point.
    """

    def __init__(self, fn, n_in, out_shape=None, name=None, degree_bound=None):
        self.fn = fn
        self.n_in = int(n_in)
        self.out_shape = tuple(out_shape) if out_shape is not None else None
        self.name = name or getattr(fn, "__name__", "smooth_map")
        # polynomial total-degree bound when statically known (None otherwise);
        # lets consumers reuse one exact jet for constant/affine/quadratic maps
        self.degree_bound = degree_bound

    def _raw(self, args):
        out = self.fn(args)
        arr = np.asarray(out, dtype=object)
        if self.out_shape is None:
            self.out_shape = arr.shape
        elif arr.shape != self.out_shape:
            raise ValueError(
                f"{self.name}: output shape {arr.shape} != declared {self.out_shape}")
        return arr

    def __call__(self, q):
        return self.value(q)

    def value(self, q):
        q = np.asarray(q, dtype=float)
        arr = self._raw(list(q))
        flat = np.array([float(_as_val(e)) for e in arr.ravel()])
        if not np.all(np.isfinite(flat)):
            raise DomainError(f"{self.name}: non-finite value at q={q.tolist()}")
        out = flat.reshape(self.out_shape)
        return float(out) if out.shape == () else out

    def value_and_jacobian(self, q):
        q = np.asarray(q, dtype=float)
        arr = self._raw(Dual.seed(q))
        n = q.size
        vals = np.empty(arr.size)
        jac = np.empty((arr.size, n))
        for i, e in enumerate(arr.ravel()):
            v, t, _ = _collect(e, n)
            vals[i] = v
            jac[i] = t
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(jac))):
            raise DomainError(f"{self.name}: non-finite derivative at q={q.tolist()}")
        return vals.reshape(self.out_shape), jac.reshape(self.out_shape + (n,))

    def jacobian(self, q):
        return self.value_and_jacobian(q)[1]

    def second_order_jet(self, q):
        """Value, gradient and Hessian arrays at q."""
        q = np.asarray(q, dtype=float)
        arr = self._raw(Dual2.seed(q))
        n = q.size
        vals = np.empty(arr.size)
        grad = np.empty((arr.size, n))
        hess = np.empty((arr.size, n, n))
        for i, e in enumerate(arr.ravel()):
            v, g, h = _collect(e, n)
            vals[i] = v
            grad[i] = g
            hess[i] = h
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(grad))
                and np.all(np.isfinite(hess))):
            raise DomainError(f"{self.name}: non-finite jet at q={q.tolist()}")
        return (vals.reshape(self.out_shape),
                grad.reshape(self.out_shape + (n,)),
                hess.reshape(self.out_shape + (n, n)))

    @staticmethod
    def constant(value, n_in, name=None):
        arr = np.asarray(value, dtype=float)
        return SmoothMap(lambda q, _a=arr: _a, n_in, arr.shape,
                         name=name or "constant", degree_bound=0)


def jacobian(f, q):
    """Jacobian of a SmoothMap at q; column j differentiates along input j."""
    return f.jacobian(q)


def value_and_jacobian(f, q):
    return f.value_and_jacobian(q)


def second_order_jet(f, q):
    return f.second_order_jet(q)
