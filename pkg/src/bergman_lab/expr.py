"""Weight-expression DSL: parsing, evaluation, pretty-printing.

Expressions describe real-valued weight functions phi(z, t) and defining
functions rho(z) over complex variables z1..zn, t1..tk.  Complex values are
opaque: a variable reaches the reals only through re, im or abs2, so every
accepted top-level expression is real-valued by construction.

Grammar, tightest binding first (unary minus binds tighter than power):

    atom   := NUMBER | VAR | FUNC '(' expr (',' expr)* ')' | '(' expr ')'
    unary  := '-' unary | atom
    power  := unary ('^' ['-'] NUMBER)*
    term   := power ('*' power)*
    expr   := term (('+' | '-') term)*

Functions: re, im, abs2 map complex to real; log, exp map real to real;
max takes two or more real arguments.  Power exponents are numeric
literals; a complex base requires a nonnegative integer exponent.

Parsed expressions are immutable and evaluation is pure, so a single
WeightExpr may be shared freely between threads.
"""

from dataclasses import dataclass
import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "SortError",
    "UnboundVariableError",
    "WeightExpr",
    "parse_expr",
    "eval_expr",
    "eval_many",
    "pretty",
]


class ExprError(ValueError):
    """Base class for expression errors; carries a byte offset when known."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class ExprSyntaxError(ExprError):
    pass


class UnknownIdentifierError(ExprError):
    pass


class ArityError(ExprError):
    pass


class SortError(ExprError):
    """Real/complex sort violation (e.g. log of a complex subexpression)."""


class UnboundVariableError(ExprError):
    pass


# ---------------------------------------------------------------------------
# AST nodes

_PREC_ADD = 10
_PREC_MUL = 20
_PREC_POW = 30
_PREC_NEG = 40
_PREC_ATOM = 50


def _fmt_num(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


@dataclass(frozen=True)
class Const:
    value: float
    is_complex = False
    prec = _PREC_ATOM

    def ev(self, Z, T):
        return np.full(Z.shape[0], float(self.value))

    def pretty(self):
        if self.value < 0:
            return "-" + _fmt_num(-self.value)
        return _fmt_num(self.value)


@dataclass(frozen=True)
class Var:
    kind: str  # "z" or "t"
    index: int  # 1-based
    is_complex = True
    prec = _PREC_ATOM

    def ev(self, Z, T):
        arr = Z if self.kind == "z" else T
        if arr is None or self.index > arr.shape[1]:
            raise UnboundVariableError(
                f"variable {self.kind}{self.index} is not bound"
            )
        return arr[:, self.index - 1]

    def pretty(self):
        return f"{self.kind}{self.index}"


@dataclass(frozen=True)
class Neg:
    arg: object
    prec = _PREC_NEG

    @property
    def is_complex(self):
        return self.arg.is_complex

    def ev(self, Z, T):
        return -self.arg.ev(Z, T)

    def pretty(self):
        return "-" + _wrap(self.arg, _PREC_NEG)


@dataclass(frozen=True)
class Add:
    a: object
    b: object
    prec = _PREC_ADD

    @property
    def is_complex(self):
        return self.a.is_complex or self.b.is_complex

    def ev(self, Z, T):
        return self.a.ev(Z, T) + self.b.ev(Z, T)

    def pretty(self):
        return f"{_wrap(self.a, _PREC_ADD)} + {_wrap(self.b, _PREC_ADD, right=True)}"


@dataclass(frozen=True)
class Sub:
    a: object
    b: object
    prec = _PREC_ADD

    @property
    def is_complex(self):
        return self.a.is_complex or self.b.is_complex

    def ev(self, Z, T):
        return self.a.ev(Z, T) - self.b.ev(Z, T)

    def pretty(self):
        return f"{_wrap(self.a, _PREC_ADD)} - {_wrap(self.b, _PREC_ADD, right=True)}"


@dataclass(frozen=True)
class Mul:
    a: object
    b: object
    prec = _PREC_MUL

    @property
    def is_complex(self):
        return self.a.is_complex or self.b.is_complex

    def ev(self, Z, T):
        return self.a.ev(Z, T) * self.b.ev(Z, T)

    def pretty(self):
        return f"{_wrap(self.a, _PREC_MUL)} * {_wrap(self.b, _PREC_MUL, right=True)}"


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: float
    prec = _PREC_POW

    @property
    def is_complex(self):
        return self.base.is_complex

    def ev(self, Z, T):
        b = self.base.ev(Z, T)
        if self.base.is_complex:
            return b ** int(self.exponent)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.power(b, self.exponent)

    def pretty(self):
        e = self.exponent
        etxt = _fmt_num(e) if e >= 0 else "-" + _fmt_num(-e)
        return f"{_wrap(self.base, _PREC_NEG)}^{etxt}"


@dataclass(frozen=True)
class Re:
    arg: object
    is_complex = False
    prec = _PREC_ATOM

    def ev(self, Z, T):
        return np.real(self.arg.ev(Z, T)) + 0.0

    def pretty(self):
        return f"re({self.arg.pretty()})"


@dataclass(frozen=True)
class Im:
    arg: object
    is_complex = False
    prec = _PREC_ATOM

    def ev(self, Z, T):
        v = self.arg.ev(Z, T)
        return np.imag(v) + 0.0 if np.iscomplexobj(v) else np.zeros_like(v)

    def pretty(self):
        return f"im({self.arg.pretty()})"


@dataclass(frozen=True)
class Abs2:
    arg: object
    is_complex = False
    prec = _PREC_ATOM

    def ev(self, Z, T):
        v = self.arg.ev(Z, T)
        if np.iscomplexobj(v):
            return v.real * v.real + v.imag * v.imag
        return v * v

    def pretty(self):
        return f"abs2({self.arg.pretty()})"


@dataclass(frozen=True)
class Log:
    arg: object
    is_complex = False
    prec = _PREC_ATOM

    def ev(self, Z, T):
        a = self.arg.ev(Z, T)
        # log of a nonpositive value yields the -inf pole sentinel, never a crash
        out = np.full(a.shape, -np.inf)
        np.log(a, out=out, where=a > 0)
        return out

    def pretty(self):
        return f"log({self.arg.pretty()})"


@dataclass(frozen=True)
class Exp:
    arg: object
    is_complex = False
    prec = _PREC_ATOM

    def ev(self, Z, T):
        with np.errstate(over="ignore"):
            return np.exp(self.arg.ev(Z, T))

    def pretty(self):
        return f"exp({self.arg.pretty()})"


@dataclass(frozen=True)
class Max:
    args: tuple
    is_complex = False
    prec = _PREC_ATOM

    def ev(self, Z, T):
        out = self.args[0].ev(Z, T)
        for a in self.args[1:]:
            out = np.maximum(out, a.ev(Z, T))
        return out

    def pretty(self):
        return "max(" + ", ".join(a.pretty() for a in self.args) + ")"


def _wrap(node, parent_prec, right=False):
    text = node.pretty()
    if node.prec < parent_prec or (right and node.prec == parent_prec):
        return f"({text})"
    return text


# ---------------------------------------------------------------------------
# Public wrapper


def _walk(node):
    yield node
    for name in ("arg", "a", "b", "base"):
        child = getattr(node, name, None)
        if child is not None:
            yield from _walk(child)
    for child in getattr(node, "args", ()):
        yield from _walk(child)


@dataclass(frozen=True)
class WeightExpr:
    """A parsed weight/defining-function expression."""

    root: object

    @property
    def is_complex(self):
        return self.root.is_complex

    @property
    def n_z(self):
        return max(
            (n.index for n in _walk(self.root) if isinstance(n, Var) and n.kind == "z"),
            default=0,
        )

    @property
    def n_t(self):
        return max(
            (n.index for n in _walk(self.root) if isinstance(n, Var) and n.kind == "t"),
            default=0,
        )

    def pretty(self):
        return self.root.pretty()

    def __call__(self, z=(), t=()):
        return eval_expr(self, z, t)


# ---------------------------------------------------------------------------
# Tokenizer

_FUNCTIONS = {"re": 1, "im": 1, "abs2": 1, "log": 1, "exp": 1, "max": None}


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            i += 1
            continue
        if ch in "+-*^(),":
            tokens.append((ch, ch, i))
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            lit = text[i:j]
            try:
                value = float(lit)
            except ValueError:
                raise ExprSyntaxError(f"bad numeric literal '{lit}'", i) from None
            tokens.append(("num", value, i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character '{ch}'", i)
    tokens.append(("eof", "", n))
    return tokens


# ---------------------------------------------------------------------------
# Recursive-descent parser


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind, what):
        tok = self.advance()
        if tok[0] != kind:
            raise ExprSyntaxError(f"expected {what}", tok[2])
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "eof":
            raise ExprSyntaxError(f"unexpected '{tok[1]}'", tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.power()
        while self.peek()[0] == "*":
            self.advance()
            node = Mul(node, self.power())
        return node

    def power(self):
        node = self.unary()
        while self.peek()[0] == "^":
            caret = self.advance()
            sign = 1.0
            if self.peek()[0] == "-":
                self.advance()
                sign = -1.0
            tok = self.peek()
            if tok[0] != "num":
                raise ExprSyntaxError("power exponent must be a numeric literal", tok[2])
            self.advance()
            expo = sign * tok[1]
            if node.is_complex and (expo != int(expo) or expo < 0):
                raise SortError(
                    "a complex base requires a nonnegative integer exponent", caret[2]
                )
            node = Pow(node, expo)
        return node

    def unary(self):
        if self.peek()[0] == "-":
            self.advance()
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        tok = self.advance()
        kind, value, off = tok
        if kind == "num":
            return Const(value)
        if kind == "(":
            node = self.expr()
            self.expect(")", "')'")
            return node
        if kind == "ident":
            if self.peek()[0] == "(":
                return self.call(value, off)
            return self.variable(value, off)
        raise ExprSyntaxError(f"unexpected '{value or 'end of input'}'", off)

    def variable(self, name, off):
        if len(name) >= 2 and name[0] in "zt" and name[1:].isdigit():
            index = int(name[1:])
            if index >= 1:
                return Var(name[0], index)
        raise UnknownIdentifierError(f"unknown identifier '{name}'", off)

    def call(self, name, off):
        if name not in _FUNCTIONS:
            raise UnknownIdentifierError(f"unknown function '{name}'", off)
        self.expect("(", "'('")
        args = [self.expr()]
        while self.peek()[0] == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")", "')'")
        arity = _FUNCTIONS[name]
        if arity is not None and len(args) != arity:
            raise ArityError(f"{name} takes {arity} argument(s), got {len(args)}", off)
        if name == "max" and len(args) < 2:
            raise ArityError("max takes at least 2 arguments", off)
        if name in ("log", "exp", "max"):
            for a in args:
                if a.is_complex:
                    raise SortError(f"{name} requires real-valued arguments", off)
        if name == "re":
            return Re(args[0])
        if name == "im":
            return Im(args[0])
        if name == "abs2":
            return Abs2(args[0])
        if name == "log":
            return Log(args[0])
        if name == "exp":
            return Exp(args[0])
        return Max(tuple(args))


def parse_expr(text, allow_complex=False):
    """Parse an expression string into a WeightExpr.

    Raises ExprSyntaxError / UnknownIdentifierError / ArityError with the
    byte offset of the problem.  Unless allow_complex is set, a top-level
    complex-valued expression is rejected (weights must be real).
    """
    root = _Parser(text).parse()
    if root.is_complex and not allow_complex:
        raise SortError(
            "expression is complex-valued; wrap it in re/im/abs2 to obtain a weight"
        )
    return WeightExpr(root)


# ---------------------------------------------------------------------------
# Evaluation


def _coerce_points(arr, width, n_rows):
    if arr is None:
        a = np.zeros((n_rows, 0), dtype=complex)
    else:
        a = np.asarray(arr, dtype=complex)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim == 1:
            a = np.broadcast_to(a, (n_rows, a.shape[0]))
        if a.ndim != 2:
            raise ValueError("points must be scalars, vectors or (N, d) arrays")
    if a.shape[1] < width:
        raise UnboundVariableError(
            f"expression needs {width} variable(s), got {a.shape[1]}"
        )
    return a


def eval_many(expr, z, t=None):
    """Vectorized evaluation over rows of z (and t).

    z: complex array of shape (N, n); t: shape (N, k) or a single (k,) row
    broadcast to all z rows.  Returns a float array for real expressions
    and a complex array when expr was parsed with allow_complex.
    """
    zarr = np.asarray(z, dtype=complex)
    if zarr.ndim == 1:
        zarr = zarr[:, None] if expr.n_z <= 1 else zarr[None, :]
    n_rows = zarr.shape[0]
    zarr = _coerce_points(zarr, expr.n_z, n_rows)
    tarr = _coerce_points(t, expr.n_t, n_rows)
    out = expr.root.ev(zarr, tarr)
    if np.isscalar(out) or out.shape == ():
        out = np.full(n_rows, out)
    return out


def eval_expr(expr, z=(), t=()):
    """Evaluate at a single point; returns a float (or complex for
    allow_complex expressions).  log-poles evaluate to -inf."""
    zrow = np.atleast_1d(np.asarray(z, dtype=complex)).reshape(1, -1)
    trow = np.atleast_1d(np.asarray(t, dtype=complex)).reshape(1, -1)
    val = eval_many(expr, zrow, trow)[0]
    if expr.is_complex:
        return complex(val)
    return float(val)


def pretty(expr):
    """Canonical text form; parse(pretty(e)) reproduces the tree of e."""
    return expr.pretty()
