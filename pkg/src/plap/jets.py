"""Truncated multivariate Taylor (jet) arithmetic and a small expression language.

A jet stores the Taylor coefficients c[alpha] = d^alpha f / alpha! of a smooth
function at a point, for all multi-indices with total degree |alpha| <= order.
Coefficients are held densely in an (order+1)^nvars hypercube; entries above
the truncation degree are kept at zero and never consulted, so arithmetic is
closed at the stated order.  The Taylor normalization keeps high-order
arithmetic overflow-free.

Division, powers with real exponents, and the unary functions sin, cos, exp,
log, sqrt are implemented through univariate series composition around the
constant term; log, sqrt, and non-integer powers need a positive constant
term, division a nonzero one.  Integer powers fall back to an exact binomial
recurrence and work for any base.

The expression language is the carrier for analytic weights.  Grammar
(ASCII, whitespace insensitive)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := atom ('^' factor)?
    atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')' | '-' atom
    IDENT  := x1 | x2 | x3 | sin | cos | exp | log | sqrt

``^`` is right associative and its exponent subexpression must be constant
(no variables).  Note that under this grammar a leading minus binds before
``^``: ``-x1^2`` parses as ``(-x1)^2``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Jet",
    "JetError",
    "JetDomainError",
    "DivisionByZeroConstantTerm",
    "jet_const",
    "jet_variable",
    "jet_add",
    "jet_sub",
    "jet_scale",
    "jet_mul",
    "jet_div",
    "jet_pow",
    "jet_unary",
    "jet_partial",
    "jet_truncate",
    "jet_allclose",
    "extract_normal_slice",
    "set_normal_slice",
    "jet_compose1",
    "jet_compose_linear",
    "Expr",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "ParseError",
    "parse_expr",
    "eval_point",
    "eval_numpy",
    "eval_on_jets",
    "eval_jet",
]


class JetError(Exception):
    pass


class JetDomainError(JetError):
    """log/sqrt/pow asked for outside their real domain at the expansion point."""


class DivisionByZeroConstantTerm(JetError):
    pass


@lru_cache(maxsize=None)
def _degree_mask(nvars: int, order: int) -> np.ndarray:
    grids = np.indices((order + 1,) * nvars)
    return grids.sum(axis=0) <= order


@lru_cache(maxsize=None)
def _indices_by_degree(nvars: int, order: int) -> tuple[tuple[int, ...], ...]:
    idx = [tuple(int(v) for v in a) for a in np.argwhere(_degree_mask(nvars, order))]
    idx.sort(key=lambda t: (sum(t), t))
    return tuple(idx)


@dataclass(frozen=True)
class Jet:
    """Truncated Taylor expansion; ``coeffs[alpha] = d^alpha f / alpha!``."""

    nvars: int
    order: int
    coeffs: np.ndarray

    def __post_init__(self):
        expect = (self.order + 1,) * self.nvars
        if self.coeffs.shape != expect:
            raise ValueError(f"coefficient array must have shape {expect}")

    @property
    def value(self) -> float:
        """Constant term (evaluation at the expansion point)."""
        return float(self.coeffs[(0,) * self.nvars])

    def derivative(self, alpha: tuple[int, ...]) -> float:
        """d^alpha f at the expansion point (de-normalized coefficient)."""
        if len(alpha) != self.nvars or sum(alpha) > self.order:
            raise ValueError(f"multi-index {alpha} out of range")
        fact = 1.0
        for a in alpha:
            fact *= math.factorial(a)
        return float(self.coeffs[tuple(alpha)]) * fact

    def coefficient(self, alpha: tuple[int, ...]) -> float:
        return float(self.coeffs[tuple(alpha)])

    # arithmetic sugar; the module-level functions are the real implementation
    def __add__(self, other):
        return jet_add(self, _coerce(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return jet_sub(self, _coerce(other, self))

    def __rsub__(self, other):
        return jet_sub(_coerce(other, self), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return jet_scale(self, float(other))
        return jet_mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return jet_scale(self, 1.0 / float(other))
        return jet_div(self, other)

    def __rtruediv__(self, other):
        return jet_div(_coerce(other, self), self)

    def __pow__(self, exponent):
        return jet_pow(self, float(exponent))

    def __neg__(self):
        return jet_scale(self, -1.0)


def _coerce(x, like: Jet) -> Jet:
    if isinstance(x, Jet):
        return x
    return jet_const(like.nvars, like.order, float(x))


def _check_compatible(a: Jet, b: Jet):
    if a.nvars != b.nvars or a.order != b.order:
        raise ValueError(
            f"jet mismatch: ({a.nvars} vars, order {a.order}) vs ({b.nvars} vars, order {b.order})"
        )


def jet_const(nvars: int, order: int, value: float) -> Jet:
    c = np.zeros((order + 1,) * nvars)
    c[(0,) * nvars] = value
    return Jet(nvars, order, c)


def jet_variable(nvars: int, order: int, axis: int, base: float = 0.0) -> Jet:
    """The jet of ``x_axis`` expanded at ``base`` (value base, unit slope)."""
    c = np.zeros((order + 1,) * nvars)
    c[(0,) * nvars] = base
    if order >= 1:
        e = [0] * nvars
        e[axis] = 1
        c[tuple(e)] = 1.0
    return Jet(nvars, order, c)


def jet_add(a: Jet, b: Jet) -> Jet:
    _check_compatible(a, b)
    return Jet(a.nvars, a.order, a.coeffs + b.coeffs)


def jet_sub(a: Jet, b: Jet) -> Jet:
    _check_compatible(a, b)
    return Jet(a.nvars, a.order, a.coeffs - b.coeffs)


def jet_scale(a: Jet, s: float) -> Jet:
    return Jet(a.nvars, a.order, a.coeffs * s)


def jet_mul(a: Jet, b: Jet) -> Jet:
    """Truncated Cauchy product."""
    _check_compatible(a, b)
    n, order = a.nvars, a.order
    out = np.zeros_like(a.coeffs)
    for alpha in _indices_by_degree(n, order):
        ca = a.coeffs[alpha]
        if ca == 0.0:
            continue
        dst = tuple(slice(k, None) for k in alpha)
        src = tuple(slice(None, out.shape[i] - alpha[i]) for i in range(n))
        out[dst] += ca * b.coeffs[src]
    out[~_degree_mask(n, order)] = 0.0
    return Jet(n, order, out)


def jet_div(a: Jet, b: Jet) -> Jet:
    """Graded long division; the denominator needs a nonzero constant term."""
    _check_compatible(a, b)
    b0 = b.value
    if b0 == 0.0:
        raise DivisionByZeroConstantTerm("division by a jet with zero constant term")
    n, order = a.nvars, a.order
    out = np.zeros_like(a.coeffs)
    for gamma in _indices_by_degree(n, order):
        acc = a.coeffs[gamma]
        # subtract sum of b[beta] * out[gamma - beta] over 0 < beta <= gamma
        for beta in np.ndindex(*[g + 1 for g in gamma]):
            if any(beta):
                acc -= b.coeffs[beta] * out[tuple(g - bb for g, bb in zip(gamma, beta))]
        out[gamma] = acc / b0
    return Jet(n, order, out)


def _compose_series(series: np.ndarray, g: Jet) -> Jet:
    """Evaluate sum_k series[k] * ghat^k with ghat = g minus its constant term."""
    n, order = g.nvars, g.order
    ghat = np.array(g.coeffs)
    ghat[(0,) * n] = 0.0
    ghat = Jet(n, order, ghat)
    acc = jet_const(n, order, float(series[-1]))
    for k in range(len(series) - 2, -1, -1):
        acc = jet_mul(acc, ghat)  # fresh array each round, safe to update in place
        acc.coeffs[(0,) * n] += float(series[k])
    return acc


def jet_pow(base: Jet, exponent: float) -> Jet:
    """base**exponent.

    Integer exponents use the exact binomial recurrence and allow any nonzero
    constant term (any at all when the exponent is a nonnegative integer);
    real exponents need a positive constant term.
    """
    n, order = base.nvars, base.order
    b0 = base.value
    e = float(exponent)
    is_int = abs(e - round(e)) < 1e-12 and abs(e) < 1e6
    if is_int:
        k = int(round(e))
        if k >= 0:
            acc = jet_const(n, order, 1.0)
            pw = base
            m = k
            while m:
                if m & 1:
                    acc = jet_mul(acc, pw)
                m >>= 1
                if m:
                    pw = jet_mul(pw, pw)
            return acc
        if b0 == 0.0:
            raise JetDomainError("negative integer power of a jet with zero constant term")
        inv = jet_div(jet_const(n, order, 1.0), base)
        return jet_pow(inv, -k)
    if b0 <= 0.0:
        raise JetDomainError(
            f"real power {e:g} needs a positive constant term, got {b0:g}"
        )
    # binomial series: d^k/dt^k t^e / k! = binom(e, k) * b0^(e-k)
    series = np.empty(order + 1)
    coef = 1.0
    for k in range(order + 1):
        series[k] = coef * b0 ** (e - k)
        coef *= (e - k) / (k + 1)
    return _compose_series(series, base)


_UNARY_NAMES = ("sin", "cos", "exp", "log", "sqrt")


def jet_unary(name: str, g: Jet) -> Jet:
    """Compose an elementary function with a jet."""
    n, order = g.nvars, g.order
    g0 = g.value
    if name == "exp":
        base = math.exp(g0)
        series = np.array([base / math.factorial(k) for k in range(order + 1)])
    elif name == "sin":
        cyc = [math.sin(g0), math.cos(g0), -math.sin(g0), -math.cos(g0)]
        series = np.array([cyc[k % 4] / math.factorial(k) for k in range(order + 1)])
    elif name == "cos":
        cyc = [math.cos(g0), -math.sin(g0), -math.cos(g0), math.sin(g0)]
        series = np.array([cyc[k % 4] / math.factorial(k) for k in range(order + 1)])
    elif name == "log":
        if g0 <= 0.0:
            raise JetDomainError(f"log of jet with non-positive constant term {g0:g}")
        series = np.empty(order + 1)
        series[0] = math.log(g0)
        for k in range(1, order + 1):
            series[k] = ((-1.0) ** (k + 1)) / (k * g0**k)
    elif name == "sqrt":
        if g0 <= 0.0:
            raise JetDomainError(f"sqrt of jet with non-positive constant term {g0:g}")
        return jet_pow(g, 0.5)
    else:
        raise ValueError(f"unknown unary function {name!r}")
    return _compose_series(series, g)


def jet_partial(j: Jet, axis: int) -> Jet:
    """Partial derivative along one variable; the order drops by one."""
    if j.order < 1:
        raise ValueError("cannot differentiate an order-0 jet")
    n, order = j.nvars, j.order
    new_order = order - 1
    src = [slice(0, new_order + 1)] * n
    src[axis] = slice(1, new_order + 2)
    mult_shape = [1] * n
    mult_shape[axis] = new_order + 1
    mult = np.arange(1, new_order + 2).reshape(mult_shape)
    out = np.array(j.coeffs[tuple(src)] * mult)
    out[~_degree_mask(n, new_order)] = 0.0
    return Jet(n, new_order, out)


def jet_truncate(j: Jet, order: int) -> Jet:
    """Drop coefficients above a lower truncation order."""
    if order > j.order:
        raise ValueError("can only truncate to a lower order")
    if order == j.order:
        return j
    sl = tuple(slice(0, order + 1) for _ in range(j.nvars))
    c = np.array(j.coeffs[sl])
    c[~_degree_mask(j.nvars, order)] = 0.0
    return Jet(j.nvars, order, c)


def jet_allclose(a: Jet, b: Jet, rtol: float = 1e-12, atol: float = 1e-12) -> bool:
    _check_compatible(a, b)
    return bool(np.allclose(a.coeffs, b.coeffs, rtol=rtol, atol=atol))


def extract_normal_slice(j: Jet, m: int, axis: int = 0, order: int | None = None) -> Jet:
    """Jet of d^m f / d x_axis^m restricted to the hyperplane x_axis = const.

    The result lives in the remaining nvars-1 variables; by default its order
    is ``j.order - m`` (entries beyond that are not represented in ``j``).
    """
    if m > j.order:
        raise ValueError("normal order exceeds jet order")
    if order is None:
        order = j.order - m
    sl = [slice(0, order + 1)] * j.nvars
    sl[axis] = m
    c = np.array(j.coeffs[tuple(sl)]) * math.factorial(m)
    pad = [(0, order + 1 - s) for s in c.shape]
    c = np.pad(c, pad)
    c[~_degree_mask(j.nvars - 1, order)] = 0.0
    return Jet(j.nvars - 1, order, c)


def set_normal_slice(j: Jet, m: int, tangential: Jet, axis: int = 0) -> Jet:
    """Copy of ``j`` whose x_axis-order-m coefficient row is taken from a
    tangential jet of d^m f / d x_axis^m (inverse of :func:`extract_normal_slice`).

    Tangential coefficients that would exceed the total degree of ``j`` are
    dropped.
    """
    if tangential.nvars != j.nvars - 1:
        raise ValueError("tangential jet must have one variable fewer")
    c = np.array(j.coeffs)
    keep = min(tangential.order, j.order - m)
    src = tangential.coeffs[tuple(slice(0, keep + 1) for _ in range(tangential.nvars))]
    dst = [slice(0, keep + 1)] * j.nvars
    dst[axis] = m
    block = np.array(src) / math.factorial(m)
    mask = _degree_mask(j.nvars - 1, keep) & (
        np.indices((keep + 1,) * tangential.nvars).sum(axis=0) <= j.order - m
    )
    c[tuple(dst)] = np.where(mask, block, 0.0)
    return Jet(j.nvars, j.order, c)


def jet_compose1(outer: Jet, inner: Jet) -> Jet:
    """Compose a univariate jet with an inner jet expanded at the same value.

    ``outer`` is a 1-variable jet of f at s0; ``inner`` must be a jet whose
    constant term equals that same s0 (the univariate jet does not store its
    expansion point, so the caller owns this convention).  The result is the
    jet of f(inner).
    """
    if outer.nvars != 1:
        raise ValueError("outer jet must be univariate")
    series = np.array([outer.coeffs[(k,)] for k in range(outer.order + 1)])
    series = series[: inner.order + 1]
    if len(series) < inner.order + 1:
        series = np.pad(series, (0, inner.order + 1 - len(series)))
    return _compose_series(series, inner)


def jet_compose_linear(j: Jet, matrix: np.ndarray) -> Jet:
    """Jet of x -> f(M x) for a square matrix M acting on the increments."""
    m = np.asarray(matrix, dtype=float)
    n, order = j.nvars, j.order
    if m.shape != (n, n):
        raise ValueError("matrix shape must match the number of variables")
    if order == 0:
        return Jet(n, 0, np.array(j.coeffs))
    # variables of the new jet: linear forms with the rows of M as slopes
    lin = []
    for i in range(n):
        c = np.zeros((order + 1,) * n)
        for k in range(n):
            e = [0] * n
            e[k] = 1
            c[tuple(e)] = m[i, k]
        lin.append(Jet(n, order, c))
    # powers of each linear form up to the truncation order
    powers = []
    for v in lin:
        pw = [jet_const(n, order, 1.0)]
        for _ in range(order):
            pw.append(jet_mul(pw[-1], v))
        powers.append(pw)
    out = np.zeros((order + 1,) * n)
    for alpha in _indices_by_degree(n, order):
        ca = j.coeffs[alpha]
        if ca == 0.0:
            continue
        term = None
        for i, ai in enumerate(alpha):
            if ai == 0:
                continue
            term = powers[i][ai] if term is None else jet_mul(term, powers[i][ai])
        if term is None:
            out[(0,) * n] += ca
        else:
            out += ca * term.coeffs
    out[~_degree_mask(n, order)] = 0.0
    return Jet(n, order, out)


# -- expression language --------------------------------------------------------


class Expr:
    """Base class for expression AST nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 0-based: x1 -> 0


@dataclass(frozen=True)
class Neg(Expr):
    child: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # '+', '-', '*', '/', '^'
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    arg: Expr


class ParseError(Exception):
    def __init__(self, offset: int, expected: tuple[str, ...], found: str):
        self.offset = offset
        self.expected = expected
        self.found = found
        super().__init__(
            f"parse error at offset {offset}: expected one of {', '.join(expected)}; found {found!r}"
        )


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)

_VARIABLES = {"x1": 0, "x2": 1, "x3": 2}


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad_at = len(text) - len(stripped)
            raise ParseError(bad_at, ("NUMBER", "IDENT", "operator"), text[bad_at])
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected: tuple[str, ...]):
        kind, text, pos = self.peek()
        found = text if kind != "eof" else "<end of input>"
        raise ParseError(pos, expected, found)

    def expect_op(self, op: str):
        kind, text, _ = self.peek()
        if kind == "op" and text == op:
            return self.advance()
        self.fail((repr(op),))

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "eof":
            self.fail(("operator", "<end of input>"))
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                e = BinOp(text, e, self.term())
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                e = BinOp(text, e, self.factor())
            else:
                return e

    def factor(self) -> Expr:
        e = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            return BinOp("^", e, self.factor())  # right associative
        return e

    def atom(self) -> Expr:
        kind, text, pos = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "ident":
            self.advance()
            if text in _VARIABLES:
                return Var(_VARIABLES[text])
            if text in _UNARY_NAMES:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(text, arg)
            raise ParseError(
                pos, tuple(sorted(_VARIABLES)) + _UNARY_NAMES, text
            )
        if kind == "op" and text == "(":
            self.advance()
            e = self.expr()
            self.expect_op(")")
            return e
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.atom())
        self.fail(("NUMBER", "IDENT", "'('", "'-'"))


def parse_expr(text: str) -> Expr:
    """Parse an expression; raises :class:`ParseError` with a byte offset."""
    return _Parser(text).parse()


def _as_expr(e) -> Expr:
    return parse_expr(e) if isinstance(e, str) else e


def _constant_exponent(e: Expr) -> float:
    """Exponents must be variable-free; evaluate them to a float."""
    if _has_vars(e):
        raise JetDomainError("exponent expressions must not contain variables")
    return eval_point(e, ())


def _has_vars(e: Expr) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, Num):
        return False
    if isinstance(e, Neg):
        return _has_vars(e.child)
    if isinstance(e, BinOp):
        return _has_vars(e.left) or _has_vars(e.right)
    if isinstance(e, Call):
        return _has_vars(e.arg)
    raise TypeError(f"not an expression node: {e!r}")


def free_variables(e) -> set[int]:
    e = _as_expr(e)
    out: set[int] = set()

    def walk(node):
        if isinstance(node, Var):
            out.add(node.index)
        elif isinstance(node, Neg):
            walk(node.child)
        elif isinstance(node, BinOp):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Call):
            walk(node.arg)

    walk(e)
    return out


def eval_point(e, point) -> float:
    """Evaluate at a point of floats."""
    e = _as_expr(e)
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        if e.index >= len(point):
            raise ValueError(f"expression uses x{e.index + 1} but the point has {len(point)} components")
        return float(point[e.index])
    if isinstance(e, Neg):
        return -eval_point(e.child, point)
    if isinstance(e, BinOp):
        if e.op == "^":
            base = eval_point(e.left, point)
            expo = _constant_exponent(e.right)
            return float(base**expo)
        a = eval_point(e.left, point)
        b = eval_point(e.right, point)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return a / b
    if isinstance(e, Call):
        x = eval_point(e.arg, point)
        if e.fn in ("log", "sqrt") and x <= 0.0 and e.fn == "log":
            raise JetDomainError(f"log of non-positive value {x:g}")
        if e.fn == "sqrt" and x < 0.0:
            raise JetDomainError(f"sqrt of negative value {x:g}")
        return float(getattr(math, e.fn)(x))
    raise TypeError(f"not an expression node: {e!r}")


def eval_numpy(e, arrays) -> np.ndarray:
    """Vectorized evaluation with coordinate arrays in place of variables."""
    e = _as_expr(e)
    arrays = [np.asarray(a, dtype=float) for a in arrays]
    shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()

    def ev(node):
        if isinstance(node, Num):
            return np.full(shape, node.value) if shape else np.float64(node.value)
        if isinstance(node, Var):
            if node.index >= len(arrays):
                raise ValueError(
                    f"expression uses x{node.index + 1} but only {len(arrays)} coordinates given"
                )
            return arrays[node.index]
        if isinstance(node, Neg):
            return -ev(node.child)
        if isinstance(node, BinOp):
            if node.op == "^":
                return ev(node.left) ** _constant_exponent(node.right)
            a, b = ev(node.left), ev(node.right)
            return {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide}[node.op](a, b)
        if isinstance(node, Call):
            return getattr(np, node.fn)(ev(node.arg))
        raise TypeError(f"not an expression node: {node!r}")

    return np.asarray(ev(e), dtype=float)


def eval_on_jets(e, env: dict[int, Jet], nvars: int | None = None, order: int | None = None) -> Jet:
    """Evaluate the AST with variables bound to jets from ``env``."""
    e = _as_expr(e)
    sample = next(iter(env.values()), None)
    if sample is None:
        if nvars is None or order is None:
            raise ValueError("need nvars/order for a variable-free evaluation")
    else:
        nvars = sample.nvars
        order = sample.order

    def ev(node) -> Jet:
        if isinstance(node, Num):
            return jet_const(nvars, order, node.value)
        if isinstance(node, Var):
            if node.index not in env:
                raise ValueError(f"no jet bound for variable x{node.index + 1}")
            return env[node.index]
        if isinstance(node, Neg):
            return jet_scale(ev(node.child), -1.0)
        if isinstance(node, BinOp):
            if node.op == "^":
                return jet_pow(ev(node.left), _constant_exponent(node.right))
            a, b = ev(node.left), ev(node.right)
            if node.op == "+":
                return jet_add(a, b)
            if node.op == "-":
                return jet_sub(a, b)
            if node.op == "*":
                return jet_mul(a, b)
            return jet_div(a, b)
        if isinstance(node, Call):
            return jet_unary(node.fn, ev(node.arg))
        raise TypeError(f"not an expression node: {node!r}")

    return ev(e)


def eval_jet(e, point, order: int) -> Jet:
    """Jet of the expression at a point, one jet variable per coordinate."""
    e = _as_expr(e)
    point = tuple(float(x) for x in point)
    nvars = len(point)
    env = {i: jet_variable(nvars, order, i, base=point[i]) for i in range(nvars)}
    return eval_on_jets(e, env, nvars=nvars, order=order)
