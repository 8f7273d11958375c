"""Symbolic expression core for mechanics work on small systems.

Expressions are immutable trees over exact rational literals, named
constants, and the kinematic variables of an n-degree-of-freedom system:

    q1..qn   generalized coordinates
    v1..vn   generalized velocities
    t        time
    s        group parameter of a transformation family

Everything else parses as a named constant (m, g, hbar, omega, ...).
Supported shapes: n-ary sums and products, unary negation, sin, cos, exp,
and powers with integer or half-integer rational exponents (sqrt(x) is
stored as x^(1/2)).

Equality of expressions is probabilistic-numerical (`equal_numeric`), not
canonical-form symbolic. Simplification here is limited to constant
folding and dropping additive/multiplicative identities.

DSL grammar (also in docs/dsl.md; `to_string` emits the same grammar):

    expr     ::= term (("+" | "-") term)*
    term     ::= unary (("*" | "/") unary)*
    unary    ::= "-" unary | power
    power    ::= atom ["^" exponent]
    exponent ::= ["-"] INT | "(" ["-"] INT ["/" INT] ")"
    atom     ::= NUMBER | IDENT | FNAME "(" expr ")" | "(" expr ")"
    FNAME    ::= "sin" | "cos" | "exp" | "sqrt"
    NUMBER   ::= INT ["." INT] [("e"|"E") ["+"|"-"] INT]
    IDENT    ::= letter (letter | digit | "_")*

`q<k>` / `v<k>` identifiers are validated against the declared number of
degrees of freedom; out-of-range indices are parse errors.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence, Union

__all__ = [
    "Expr", "Num", "Sym", "Add", "Mul", "Pow", "Neg", "Fn",
    "num", "sym", "coord", "vel", "time_var", "group_param", "const",
    "add", "mul", "neg", "pow_", "sqrt", "sin", "cos", "exp",
    "parse_expr", "to_string", "diff", "substitute", "evaluate",
    "equal_numeric", "numeric_residual", "free_symbols", "poly_in",
    "numpy_callable",
    "ExprError", "DslSyntaxError", "UnknownIdentifierError",
    "VarIndexError", "EvalError", "MissingBindingError", "DomainError",
    "NonPolynomialError",
]

Number = Union[int, Fraction]

KIND_COORD = "coord"
KIND_VEL = "vel"
KIND_TIME = "time"
KIND_PARAM = "param"
KIND_CONST = "const"

FUNCTIONS = ("sin", "cos", "exp")  # sqrt becomes Pow(x, 1/2)


class ExprError(Exception):
    """Base error for the expression module."""


class DslSyntaxError(ExprError):
    """Parse failure; carries the 0-based column where it happened."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (column {position})")
        self.position = position


class UnknownIdentifierError(DslSyntaxError):
    pass


class VarIndexError(DslSyntaxError):
    """Coordinate or velocity index outside 1..n_dof."""


class EvalError(ExprError):
    pass


class MissingBindingError(EvalError):
    pass


class DomainError(EvalError):
    """Evaluation left the real domain (negative sqrt, division by zero)."""


class NonPolynomialError(ExprError):
    pass


# ---------------------------------------------------------------------------
# nodes


class Expr:
    """Base class; all concrete nodes are frozen dataclasses."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return add(self, neg(_coerce(other)))

    def __rsub__(self, other):
        return add(_coerce(other), neg(self))

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return mul(self, pow_(_coerce(other), -1))

    def __rtruediv__(self, other):
        return mul(_coerce(other), pow_(self, -1))

    def __pow__(self, exponent):
        return pow_(self, exponent)

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: Fraction

    __slots__ = ("value",)


@dataclass(frozen=True, eq=True)
class Sym(Expr):
    name: str
    kind: str

    __slots__ = ("name", "kind")


@dataclass(frozen=True, eq=True)
class Add(Expr):
    terms: tuple

    __slots__ = ("terms",)


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    factors: tuple

    __slots__ = ("factors",)


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: Fraction

    __slots__ = ("base", "exponent")


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    child: Expr

    __slots__ = ("child",)


@dataclass(frozen=True, eq=True)
class Fn(Expr):
    name: str
    child: Expr

    __slots__ = ("name", "child")


# ---------------------------------------------------------------------------
# constructors with light folding

ZERO = Num(Fraction(0))
ONE = Num(Fraction(1))


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return Num(Fraction(x))
    if isinstance(x, float):
        return Num(Fraction(x))
    raise TypeError(f"cannot coerce {type(x).__name__} to Expr")


def num(value) -> Num:
    return Num(Fraction(value))


def sym(name: str, kind: str) -> Sym:
    return Sym(name, kind)


def coord(i: int) -> Sym:
    return Sym(f"q{i}", KIND_COORD)


def vel(i: int) -> Sym:
    return Sym(f"v{i}", KIND_VEL)


def time_var() -> Sym:
    return Sym("t", KIND_TIME)


def group_param() -> Sym:
    return Sym("s", KIND_PARAM)


def const(name: str) -> Sym:
    return Sym(name, KIND_CONST)


def _term_split(e: Expr):
    """Split a non-Num term into (rational coefficient, factor tuple)."""
    if isinstance(e, Neg):
        c, f = _term_split(e.child)
        return -c, f
    if isinstance(e, Mul):
        if isinstance(e.factors[0], Num):
            return e.factors[0].value, e.factors[1:]
        return Fraction(1), e.factors
    return Fraction(1), (e,)


def add(*terms) -> Expr:
    """n-ary sum; folds rationals and collects like terms (2*x + 3*x -> 5*x).

    Like-term detection is structural: terms whose non-numeric factors are
    the same multiset of subtrees are merged."""
    acc = Fraction(0)
    bucket = {}
    order = []
    queue = [_coerce(t) for t in terms]
    while queue:
        item = queue.pop(0)
        if isinstance(item, Add):
            queue[0:0] = list(item.terms)
            continue
        if isinstance(item, Num):
            acc += item.value
            continue
        coeff, factors = _term_split(item)
        key = tuple(sorted(repr(f) for f in factors))
        if key in bucket:
            bucket[key][0] += coeff
        else:
            bucket[key] = [coeff, factors]
            order.append(key)
    flat = []
    for key in order:
        coeff, factors = bucket[key]
        if coeff == 0:
            continue
        flat.append(mul(Num(coeff), *factors))
    if acc != 0 or not flat:
        flat.append(Num(acc))
    if len(flat) == 1:
        return flat[0]
    # keep a numeric term last for readable output (stable sort)
    flat.sort(key=lambda e: isinstance(e, Num))
    return Add(tuple(flat))


def mul(*factors) -> Expr:
    """n-ary product; folds rationals, hoists signs, and collects exponents
    over structurally identical bases (x*x -> x^2, m*m^(-1) -> 1).

    Exponent collection treats base^0 as 1, so products are simplified on
    the open set where their bases are nonzero."""
    acc = Fraction(1)
    sign = 1
    bases = {}
    order = []
    queue = [_coerce(f) for f in factors]
    while queue:
        item = queue.pop(0)
        while isinstance(item, Neg):
            sign = -sign
            item = item.child
        if isinstance(item, Mul):
            queue[0:0] = list(item.factors)
            continue
        if isinstance(item, Num):
            acc *= item.value
            continue
        if isinstance(item, Pow):
            base, exponent = item.base, item.exponent
        else:
            base, exponent = item, Fraction(1)
        key = repr(base)
        if key in bases:
            bases[key][1] += exponent
        else:
            bases[key] = [base, exponent]
            order.append(key)
    if acc == 0:
        return ZERO
    flat = []
    for key in order:
        base, exponent = bases[key]
        if exponent == 0:
            continue
        piece = pow_(base, exponent)
        if isinstance(piece, Num):
            acc *= piece.value
        else:
            flat.append(piece)
    acc *= sign
    if acc == 0:
        return ZERO
    if acc != 1 or not flat:
        flat.insert(0, Num(acc))
    if len(flat) == 1:
        return flat[0]
    if isinstance(flat[0], Num) and flat[0].value < 0:
        flat[0] = Num(-flat[0].value)
        if flat[0].value == 1:
            flat = flat[1:]
        inner = flat[0] if len(flat) == 1 else Mul(tuple(flat))
        return Neg(inner)
    return Mul(tuple(flat))


def neg(x) -> Expr:
    x = _coerce(x)
    if isinstance(x, Num):
        return Num(-x.value)
    if isinstance(x, Neg):
        return x.child
    return Neg(x)


def pow_(base, exponent) -> Expr:
    base = _coerce(base)
    if isinstance(exponent, Expr):
        if not isinstance(exponent, Num):
            raise ExprError("exponent must be a rational literal")
        exponent = exponent.value
    exponent = Fraction(exponent)
    if exponent.denominator not in (1, 2):
        raise ExprError(
            f"unsupported exponent {exponent}: only integer or half-integer powers"
        )
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if isinstance(base, Num) and exponent.denominator == 1:
        if exponent >= 0:
            return Num(base.value ** int(exponent))
        if base.value == 0:
            raise ExprError("0 raised to a negative power")
        return Num(Fraction(1) / base.value ** int(-exponent))
    return Pow(base, exponent)


def sqrt(x) -> Expr:
    return pow_(x, Fraction(1, 2))


def sin(x) -> Expr:
    return Fn("sin", _coerce(x))


def cos(x) -> Expr:
    return Fn("cos", _coerce(x))


def exp(x) -> Expr:
    return Fn("exp", _coerce(x))


# ---------------------------------------------------------------------------
# traversal helpers


def free_symbols(e: Expr) -> set:
    """Names of all symbols appearing in the expression."""
    out = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Sym):
            out.add(node.name)
        elif isinstance(node, Add):
            stack.extend(node.terms)
        elif isinstance(node, Mul):
            stack.extend(node.factors)
        elif isinstance(node, Pow):
            stack.append(node.base)
        elif isinstance(node, (Neg, Fn)):
            stack.append(node.child)
    return out


def _symbol_kinds(e: Expr) -> dict:
    out = {}
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Sym):
            out[node.name] = node.kind
        elif isinstance(node, Add):
            stack.extend(node.terms)
        elif isinstance(node, Mul):
            stack.extend(node.factors)
        elif isinstance(node, Pow):
            stack.append(node.base)
        elif isinstance(node, (Neg, Fn)):
            stack.append(node.child)
    return out


# ---------------------------------------------------------------------------
# differentiation


def diff(e: Expr, target: Union[str, Sym]) -> Expr:
    """Partial derivative with respect to a variable or named constant."""
    name = target.name if isinstance(target, Sym) else target
    return _diff(e, name)


def _diff(e: Expr, name: str) -> Expr:
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Sym):
        return ONE if e.name == name else ZERO
    if isinstance(e, Add):
        return add(*[_diff(t, name) for t in e.terms])
    if isinstance(e, Neg):
        return neg(_diff(e.child, name))
    if isinstance(e, Mul):
        out = []
        factors = e.factors
        for i, f in enumerate(factors):
            d = _diff(f, name)
            if d is ZERO or (isinstance(d, Num) and d.value == 0):
                continue
            rest = factors[:i] + factors[i + 1:]
            out.append(mul(d, *rest))
        return add(*out) if out else ZERO
    if isinstance(e, Pow):
        d = _diff(e.base, name)
        if isinstance(d, Num) and d.value == 0:
            return ZERO
        return mul(Num(e.exponent), pow_(e.base, e.exponent - 1), d)
    if isinstance(e, Fn):
        d = _diff(e.child, name)
        if isinstance(d, Num) and d.value == 0:
            return ZERO
        if e.name == "sin":
            return mul(cos(e.child), d)
        if e.name == "cos":
            return neg(mul(sin(e.child), d))
        if e.name == "exp":
            return mul(e, d)
    raise ExprError(f"cannot differentiate node {type(e).__name__}")


# ---------------------------------------------------------------------------
# substitution


def substitute(e: Expr, mapping: Mapping[str, Union[Expr, int, float, Fraction]]) -> Expr:
    """Simultaneous substitution by symbol name; no re-substitution."""
    coerced = {k: _coerce(v) for k, v in mapping.items()}
    return _subst(e, coerced)


def _subst(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    if isinstance(e, Num):
        return e
    if isinstance(e, Sym):
        return mapping.get(e.name, e)
    if isinstance(e, Add):
        return add(*[_subst(t, mapping) for t in e.terms])
    if isinstance(e, Mul):
        return mul(*[_subst(f, mapping) for f in e.factors])
    if isinstance(e, Neg):
        return neg(_subst(e.child, mapping))
    if isinstance(e, Pow):
        return pow_(_subst(e.base, mapping), e.exponent)
    if isinstance(e, Fn):
        return Fn(e.name, _subst(e.child, mapping))
    raise ExprError(f"cannot substitute into node {type(e).__name__}")


# ---------------------------------------------------------------------------
# evaluation


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """Evaluate to a float; every free symbol needs a binding."""
    if isinstance(e, Num):
        return float(e.value)
    if isinstance(e, Sym):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise MissingBindingError(f"no binding for symbol '{e.name}'") from None
    if isinstance(e, Add):
        return math.fsum(evaluate(t, bindings) for t in e.terms)
    if isinstance(e, Mul):
        out = 1.0
        for f in e.factors:
            out *= evaluate(f, bindings)
        return out
    if isinstance(e, Neg):
        return -evaluate(e.child, bindings)
    if isinstance(e, Pow):
        base = evaluate(e.base, bindings)
        exponent = e.exponent
        try:
            if exponent.denominator == 1:
                return base ** int(exponent)
            if base < 0:
                raise DomainError(f"negative base {base} under half-integer power")
            return base ** float(exponent)
        except ZeroDivisionError:
            raise DomainError("division by zero") from None
        except OverflowError:
            raise DomainError("overflow in power") from None
    if isinstance(e, Fn):
        val = evaluate(e.child, bindings)
        if e.name == "sin":
            return math.sin(val)
        if e.name == "cos":
            return math.cos(val)
        if e.name == "exp":
            try:
                return math.exp(val)
            except OverflowError:
                raise DomainError("overflow in exp") from None
    raise ExprError(f"cannot evaluate node {type(e).__name__}")


# ---------------------------------------------------------------------------
# probabilistic equality

SAMPLE_LO = -2.0
SAMPLE_HI = 2.0
SAMPLE_CAP = 1e12
DEFAULT_TRIALS = 64
DEFAULT_TOL = 1e-9
DEFAULT_SEED = 1234


def _sample_pairs(e1, e2, trials, seed, bindings):
    """Yield (v1, v2) at random bindings, rejecting singular draws."""
    fixed = dict(bindings or {})
    names = sorted((free_symbols(e1) | free_symbols(e2)) - set(fixed))
    rng = random.Random(seed)
    produced = 0
    attempts = 0
    while produced < trials:
        attempts += 1
        if attempts > 200 * trials:
            raise DomainError(
                "could not find enough nonsingular sample points"
            )
        b = dict(fixed)
        for nm in names:
            b[nm] = rng.uniform(SAMPLE_LO, SAMPLE_HI)
        try:
            v1 = evaluate(e1, b)
            v2 = evaluate(e2, b)
        except DomainError:
            continue
        if not (math.isfinite(v1) and math.isfinite(v2)):
            continue
        if abs(v1) > SAMPLE_CAP or abs(v2) > SAMPLE_CAP:
            continue
        produced += 1
        yield v1, v2


def equal_numeric(e1: Expr, e2: Expr, trials: int = DEFAULT_TRIALS,
                  tol: float = DEFAULT_TOL, seed: int = DEFAULT_SEED,
                  bindings: Mapping[str, float] = None) -> bool:
    """Probabilistic equality: |e1 - e2| <= tol*(1 + |e1| + |e2|) at random
    sample points (uniform in [-2, 2] per unbound symbol, singularities
    rejected). `bindings` pins chosen symbols instead of sampling them."""
    e1 = _coerce(e1)
    e2 = _coerce(e2)
    for v1, v2 in _sample_pairs(e1, e2, trials, seed, bindings):
        if abs(v1 - v2) > tol * (1 + abs(v1) + abs(v2)):
            return False
    return True


def numeric_residual(e1: Expr, e2: Expr = ZERO, trials: int = DEFAULT_TRIALS,
                     seed: int = DEFAULT_SEED,
                     bindings: Mapping[str, float] = None) -> float:
    """Max |e1 - e2| over the same sampling scheme as equal_numeric."""
    e1 = _coerce(e1)
    e2 = _coerce(e2)
    worst = 0.0
    for v1, v2 in _sample_pairs(e1, e2, trials, seed, bindings):
        worst = max(worst, abs(v1 - v2))
    return worst


# ---------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)

_COORD_RE = re.compile(r"^q(\d+)$")
_VEL_RE = re.compile(r"^v(\d+)$")


@dataclass
class _Token:
    kind: str  # number | ident | op | end
    text: str
    position: int


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise DslSyntaxError(f"unexpected character {text[at]!r}", at)
        if m.lastgroup == "number":
            tokens.append(_Token("number", m.group("number"), m.start("number")))
        elif m.lastgroup == "ident":
            tokens.append(_Token("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(_Token("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n_dof: int, constants):
        self.text = text
        self.n_dof = n_dof
        self.constants = None if constants is None else set(constants)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        tok = self.next()
        if tok.kind != "op" or tok.text != op:
            raise DslSyntaxError(f"expected '{op}'", tok.position)
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise DslSyntaxError(f"unexpected trailing input {tok.text!r}", tok.position)
        return e

    def expr(self) -> Expr:
        terms = [self.term()]
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "+-":
                self.next()
                t = self.term()
                terms.append(t if tok.text == "+" else neg(t))
            else:
                return add(*terms)

    def term(self) -> Expr:
        factors = [self.unary()]
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "*/":
                self.next()
                f = self.unary()
                factors.append(f if tok.text == "*" else pow_(f, -1))
            else:
                return mul(*factors)

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.next()
            return neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.next()
            exponent = self.exponent()
            try:
                return pow_(base, exponent)
            except ExprError as err:
                raise DslSyntaxError(str(err), tok.position) from None
        return base

    def exponent(self) -> Fraction:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "(":
            self.next()
            value = self.signed_rational()
            self.expect_op(")")
            return value
        return self.signed_rational(integer_only=True)

    def signed_rational(self, integer_only: bool = False) -> Fraction:
        sign = 1
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.next()
            sign = -1
            tok = self.peek()
        if tok.kind != "number" or "." in tok.text or "e" in tok.text or "E" in tok.text:
            raise DslSyntaxError("expected integer in exponent", tok.position)
        self.next()
        numerator = int(tok.text)
        tok = self.peek()
        if not integer_only and tok.kind == "op" and tok.text == "/":
            self.next()
            tok2 = self.next()
            if tok2.kind != "number" or "." in tok2.text:
                raise DslSyntaxError("expected integer denominator", tok2.position)
            return Fraction(sign * numerator, int(tok2.text))
        return Fraction(sign * numerator)

    def atom(self) -> Expr:
        tok = self.next()
        if tok.kind == "number":
            return Num(Fraction(Decimal(tok.text)))
        if tok.kind == "ident":
            return self.identifier(tok)
        if tok.kind == "op" and tok.text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise DslSyntaxError(
            "expected a number, identifier, or '('" if tok.kind == "end"
            else f"unexpected {tok.text!r}", tok.position)

    def identifier(self, tok: _Token) -> Expr:
        name = tok.text
        if name == "sqrt" or name in FUNCTIONS:
            nxt = self.peek()
            if not (nxt.kind == "op" and nxt.text == "("):
                raise DslSyntaxError(f"expected '(' after function '{name}'", nxt.position)
            self.next()
            arg = self.expr()
            self.expect_op(")")
            return sqrt(arg) if name == "sqrt" else Fn(name, arg)
        m = _COORD_RE.match(name)
        if m:
            idx = int(m.group(1))
            if not (1 <= idx <= self.n_dof):
                raise VarIndexError(
                    f"coordinate index {idx} outside 1..{self.n_dof}", tok.position)
            return coord(idx)
        m = _VEL_RE.match(name)
        if m:
            idx = int(m.group(1))
            if not (1 <= idx <= self.n_dof):
                raise VarIndexError(
                    f"velocity index {idx} outside 1..{self.n_dof}", tok.position)
            return vel(idx)
        if name == "t":
            return time_var()
        if name == "s":
            return group_param()
        if self.constants is not None and name not in self.constants:
            raise UnknownIdentifierError(f"unknown identifier '{name}'", tok.position)
        return const(name)


def parse_expr(text: str, n_dof: int, constants: Iterable[str] = None) -> Expr:
    """Parse DSL text for a system with n_dof degrees of freedom.

    `constants`, when given, is the set of admissible constant names;
    any other bare identifier is rejected. Without it, any identifier
    that is not a variable parses as a named constant.
    """
    return _Parser(text, n_dof, constants).parse()


# ---------------------------------------------------------------------------
# printer (emits the grammar above)

_PREC_ADD = 10
_PREC_NEG = 15
_PREC_MUL = 20
_PREC_POW = 30
_PREC_ATOM = 40


def _print_frac(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    return f"{v.numerator}/{v.denominator}"


def _wrap(e: Expr, parent_prec: int) -> str:
    text, prec = _to_string_prec(e)
    if prec < parent_prec:
        return f"({text})"
    return text


def _to_string_prec(e: Expr):
    if isinstance(e, Num):
        if e.value < 0:
            return f"-{_print_frac(-e.value)}", _PREC_NEG
        text = _print_frac(e.value)
        return text, _PREC_ATOM if e.value.denominator == 1 else _PREC_MUL
    if isinstance(e, Sym):
        return e.name, _PREC_ATOM
    if isinstance(e, Neg):
        return f"-{_wrap(e.child, _PREC_MUL)}", _PREC_NEG
    if isinstance(e, Add):
        parts = [_wrap(e.terms[0], _PREC_ADD)]
        for term in e.terms[1:]:
            if isinstance(term, Neg):
                parts.append(f" - {_wrap(term.child, _PREC_MUL)}")
            elif isinstance(term, Num) and term.value < 0:
                parts.append(f" - {_print_frac(-term.value)}")
            else:
                parts.append(f" + {_wrap(term, _PREC_ADD + 1)}")
        return "".join(parts), _PREC_ADD
    if isinstance(e, Mul):
        parts = [_wrap(f, _PREC_MUL + 1) for f in e.factors]
        return "*".join(parts), _PREC_MUL
    if isinstance(e, Pow):
        if e.exponent == Fraction(1, 2):
            return f"sqrt({to_string(e.base)})", _PREC_ATOM
        base = _wrap(e.base, _PREC_POW + 1)
        if e.exponent.denominator == 1 and e.exponent >= 0:
            return f"{base}^{e.exponent.numerator}", _PREC_POW
        return f"{base}^({_print_frac(e.exponent)})", _PREC_POW
    if isinstance(e, Fn):
        return f"{e.name}({to_string(e.child)})", _PREC_ATOM
    raise ExprError(f"cannot print node {type(e).__name__}")


def to_string(e: Expr) -> str:
    """Render in the DSL grammar; parse(to_string(e)) is equal_numeric to e."""
    return _to_string_prec(e)[0]


# ---------------------------------------------------------------------------
# polynomial collection


def poly_in(e: Expr, var_names: Sequence[str]) -> dict:
    """Collect `e` as a polynomial in the given symbols.

    Returns {exponent tuple -> coefficient Expr}; coefficients are free of
    the listed symbols. Raises NonPolynomialError if any listed symbol sits
    under a function, a fractional power, or a negative power.
    """
    names = list(var_names)
    zero_key = (0,) * len(names)

    def walk(node: Expr) -> dict:
        if free_symbols(node).isdisjoint(names):
            return {zero_key: node}
        if isinstance(node, Sym):
            key = list(zero_key)
            key[names.index(node.name)] = 1
            return {tuple(key): ONE}
        if isinstance(node, Add):
            out = {}
            for term in node.terms:
                for key, coeff in walk(term).items():
                    out[key] = add(out[key], coeff) if key in out else coeff
            return out
        if isinstance(node, Neg):
            return {key: neg(c) for key, c in walk(node.child).items()}
        if isinstance(node, Mul):
            out = {zero_key: ONE}
            for factor in node.factors:
                out = _poly_product(out, walk(factor))
            return out
        if isinstance(node, Pow):
            if node.exponent.denominator != 1 or node.exponent < 0:
                raise NonPolynomialError(
                    f"power {node.exponent} of a polynomial variable")
            out = {zero_key: ONE}
            base = walk(node.base)
            for _ in range(int(node.exponent)):
                out = _poly_product(out, base)
            return out
        if isinstance(node, Fn):
            raise NonPolynomialError(
                f"polynomial variable inside {node.name}()")
        raise ExprError(f"cannot collect node {type(node).__name__}")

    collected = walk(e)
    return {
        key: coeff for key, coeff in collected.items()
        if not (isinstance(coeff, Num) and coeff.value == 0)
    }


def _poly_product(pa: dict, pb: dict) -> dict:
    out = {}
    for ka, ca in pa.items():
        for kb, cb in pb.items():
            key = tuple(a + b for a, b in zip(ka, kb))
            piece = mul(ca, cb)
            out[key] = add(out[key], piece) if key in out else piece
    return out


# ---------------------------------------------------------------------------
# vectorized compilation


def numpy_callable(e: Expr, arg_names: Sequence[str]) -> Callable:
    """Compile to a numpy-vectorized function of the given arguments.

    Every free symbol of `e` must appear in arg_names; substitute numeric
    constants first. Intended for grid evaluation of potentials, gauge
    terms, and coefficient functions.
    """
    missing = free_symbols(e) - set(arg_names)
    if missing:
        raise MissingBindingError(
            f"unbound symbols {sorted(missing)}; substitute them before compiling")

    def emit(node: Expr) -> str:
        if isinstance(node, Num):
            return repr(float(node.value))
        if isinstance(node, Sym):
            return node.name
        if isinstance(node, Add):
            return "(" + " + ".join(emit(term) for term in node.terms) + ")"
        if isinstance(node, Mul):
            return "(" + " * ".join(emit(f) for f in node.factors) + ")"
        if isinstance(node, Neg):
            return f"(-{emit(node.child)})"
        if isinstance(node, Pow):
            if node.exponent.denominator == 1:
                return f"({emit(node.base)})**({int(node.exponent)})"
            return f"({emit(node.base)})**({float(node.exponent)})"
        if isinstance(node, Fn):
            return f"_np.{node.name}({emit(node.child)})"
        raise ExprError(f"cannot compile node {type(node).__name__}")

    import numpy as _np

    source = emit(e)
    code = compile(source, "<noetherlab-expr>", "eval")
    names = list(arg_names)

    def fn(*args):
        if len(args) != len(names):
            raise TypeError(f"expected {len(names)} arguments ({names})")
        env = dict(zip(names, args))
        env["_np"] = _np
        return eval(code, {"__builtins__": {}}, env)

    fn.__doc__ = f"compiled: {to_string(e)}"
    return fn
