"""Arithmetic expression DSL for user-defined systems.

Custom systems are described in config files by expression strings over
the base coordinates.  Expressions parse to a small AST and evaluate on
floats or dual numbers, so every derivative the pipeline needs is exact.

Grammar (no implicit multiplication, angles in radians):

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'
"""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Dual, Dual2, SmoothMap
from .errors import DomainError, ExprSyntaxError, UnboundVariable, UnknownIdentifier

__all__ = [
    "Num", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Call",
    "parse", "to_text", "eval_real", "eval_dual", "ParsedField", "parse_field",
    "FUNCTIONS",
]

FUNCTIONS = {
    "sin": (1, ad.sin),
    "cos": (1, ad.cos),
    "tan": (1, ad.tan),
    "exp": (1, ad.exp),
    "ln": (1, ad.log),
    "sqrt": (1, ad.sqrt),
    "atan2": (2, ad.atan2),
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Expr = (Num, Var, Neg, Add, Sub, Mul, Div, Pow, Call)


# tokenizer -------------------------------------------------------------------

_OPS = set("+-*/^(),")


def _byte_offset(text, pos):
    return len(text[:pos].encode("utf-8"))


def _tokenize(text):
    tokens = []  # (kind, value, char_pos)
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _OPS:
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == ".":
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            tokens.append(("num", float(text[i:j]), i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(_byte_offset(text, i), f"unexpected character {c!r}")
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    def __init__(self, text, variables):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.variables = set(variables)

    def _peek(self):
        return self.tokens[self.pos]

    def _next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def _fail(self, tok, expected):
        raise ExprSyntaxError(_byte_offset(self.text, tok[2]),
                              f"unexpected {tok[0]!r}", expected=expected)

    def _expect(self, kind, expected):
        tok = self._next()
        if tok[0] != kind:
            self._fail(tok, expected)
        return tok

    def parse(self):
        e = self.expr()
        tok = self._peek()
        if tok[0] != "end":
            self._fail(tok, "end of input or operator")
        return e

    def expr(self):
        e = self.term()
        while self._peek()[0] in ("+", "-"):
            op = self._next()[0]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self):
        e = self.factor()
        while self._peek()[0] in ("*", "/"):
            op = self._next()[0]
            rhs = self.factor()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def factor(self):
        if self._peek()[0] == "-":
            self._next()
            return Neg(self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        if self._peek()[0] == "^":
            self._next()
            return Pow(base, self.factor())
        return base

    def atom(self):
        tok = self._next()
        kind, value, pos = tok
        if kind == "num":
            return Num(value)
        if kind == "(":
            e = self.expr()
            self._expect(")", "')'")
            return e
        if kind == "ident":
            if self._peek()[0] == "(":
                if value not in FUNCTIONS:
                    raise UnknownIdentifier(value, _byte_offset(self.text, pos))
                self._next()
                args = [self.expr()]
                while self._peek()[0] == ",":
                    self._next()
                    args.append(self.expr())
                self._expect(")", "')' or ','")
                arity = FUNCTIONS[value][0]
                if len(args) != arity:
                    raise ExprSyntaxError(
                        _byte_offset(self.text, pos),
                        f"{value} takes {arity} argument(s), got {len(args)}")
                return Call(value, tuple(args))
            if value not in self.variables:
                raise UnknownIdentifier(value, _byte_offset(self.text, pos))
            return Var(value)
        self._fail(tok, "a number, variable, function or '('")


def parse(text, variables):
    """Parse expression text over the declared variable names."""
    return _Parser(text, variables).parse()


# printer ---------------------------------------------------------------------

_LEVEL = {Num: 5, Var: 5, Call: 5, Pow: 4, Neg: 3, Mul: 2, Div: 2, Add: 1, Sub: 1}


def _wrap(e, min_level):
    s = to_text(e)
    return f"({s})" if _LEVEL[type(e)] < min_level else s


def to_text(e):
    """Render with minimal parentheses; re-parsing yields the same tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, 3)
    if isinstance(e, Add):
        return _wrap(e.left, 1) + " + " + _wrap(e.right, 2)
    if isinstance(e, Sub):
        return _wrap(e.left, 1) + " - " + _wrap(e.right, 2)
    if isinstance(e, Mul):
        return _wrap(e.left, 2) + "*" + _wrap(e.right, 3)
    if isinstance(e, Div):
        return _wrap(e.left, 2) + "/" + _wrap(e.right, 3)
    if isinstance(e, Pow):
        return _wrap(e.left, 5) + "^" + _wrap(e.right, 3)
    if isinstance(e, Call):
        return e.fn + "(" + ", ".join(to_text(a) for a in e.args) + ")"
    raise TypeError(f"not an expression node: {e!r}")


# evaluation ------------------------------------------------------------------

def _eval(e, env):
    t = type(e)
    if t is Num:
        return e.value
    if t is Var:
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if t is Neg:
        return -_eval(e.arg, env)
    if t is Add:
        return _eval(e.left, env) + _eval(e.right, env)
    if t is Sub:
        return _eval(e.left, env) - _eval(e.right, env)
    if t is Mul:
        return _eval(e.left, env) * _eval(e.right, env)
    if t is Div:
        a, b = _eval(e.left, env), _eval(e.right, env)
        if isinstance(b, (int, float)) and b == 0.0:
            raise DomainError("division by zero")
        return a / b
    if t is Pow:
        a, b = _eval(e.left, env), _eval(e.right, env)
        if isinstance(a, (int, float)) and isinstance(b, (int, float)):
            from .autodiff import _pow_val
            return _pow_val(float(a), float(b))
        return a ** b
    if t is Call:
        fn = FUNCTIONS[e.fn][1]
        return fn(*[_eval(a, env) for a in e.args])
    raise TypeError(f"not an expression node: {e!r}")


def eval_real(e, env):
    """IEEE double evaluation; raises DomainError instead of returning NaN."""
    out = _eval(e, env)
    out = float(out)
    if not math.isfinite(out):
        raise DomainError("non-finite expression value")
    return out


def eval_dual(e, env):
    """Evaluate on dual numbers; constants come back with zero tangent."""
    out = _eval(e, env)
    if isinstance(out, (Dual, Dual2)):
        return out
    width = 0
    for v in env.values():
        if isinstance(v, Dual):
            width = v.tangent.size
            break
        if isinstance(v, Dual2):
            width = v.g.size
            break
    return Dual(float(out), np.zeros(width))


def degree_bound(e):
    """Polynomial total-degree bound of an expression, None when not
    polynomial (lets consumers cache exact low-order jets)."""
    t = type(e)
    if t is Num:
        return 0
    if t is Var:
        return 1
    if t is Neg:
        return degree_bound(e.arg)
    if t in (Add, Sub):
        a, b = degree_bound(e.left), degree_bound(e.right)
        return None if a is None or b is None else max(a, b)
    if t is Mul:
        a, b = degree_bound(e.left), degree_bound(e.right)
        return None if a is None or b is None else a + b
    if t is Div:
        a, b = degree_bound(e.left), degree_bound(e.right)
        return a if b == 0 else None
    if t is Pow:
        a = degree_bound(e.left)
        if isinstance(e.right, Num) and e.right.value == int(e.right.value) \
                and e.right.value >= 0 and a is not None:
            return a * int(e.right.value)
        return 0 if a == 0 and degree_bound(e.right) == 0 else None
    if t is Call:
        if all(degree_bound(a) == 0 for a in e.args):
            return 0
        return None
    raise TypeError(f"not an expression node: {e!r}")


# parsed fields ---------------------------------------------------------------

@dataclass(frozen=True)
class ParsedField:
    """Expression-backed array of outputs over an ordered variable list."""

    variables: tuple
    exprs: object      # numpy object array of Expr nodes
    out_shape: tuple

    def to_smooth_map(self, name=None):
        variables = self.variables
        exprs = self.exprs
        flat = list(np.asarray(exprs, dtype=object).ravel())
        shape = self.out_shape
        degrees = [degree_bound(x) for x in flat]
        bound = None if any(d is None for d in degrees) else \
            (max(degrees) if degrees else 0)

        def fn(args):
            env = dict(zip(variables, args))
            vals = [_eval(x, env) for x in flat]
            return np.asarray(vals, dtype=object).reshape(shape)

        return SmoothMap(fn, len(variables), shape, name=name or "parsed_field",
                         degree_bound=bound)


def parse_field(texts, variables):
    """Parse a scalar / vector / matrix of expression strings."""
    arr = np.asarray(texts, dtype=object)
    parsed = np.empty(arr.shape, dtype=object)
    for idx, txt in np.ndenumerate(arr):
        parsed[idx] = parse(str(txt), variables)
    return ParsedField(tuple(variables), parsed, arr.shape)
