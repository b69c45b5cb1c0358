from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degsde.coeff_expr import Bin, Call, Lit, Neg, Var, compile_expr, evaluate, parse, to_source
from degsde.errors import ArityError, DomainError, ParseError, UnknownFunction, UnknownVariable

N = 3


# -- parsing -----------------------------------------------------------------


def test_two_token_tree():
    assert parse("0.5 - x1", 1) == Bin("-", Lit(0.5), Var(1))


def test_nesting():
    assert parse("sqrt(abs(x2))", 2) == Call("sqrt", (Call("abs", (Var(2),)),))


def test_ball_diffusion_expression_value():
    e = parse("2*(1 - (x1^2 + x2^2))", 2)
    assert evaluate(e, [0.6, 0.0]) == pytest.approx(1.28, abs=1e-15)


def test_precedence_and_associativity():
    assert parse("1 - 2 - 3", 1) == Bin("-", Bin("-", Lit(1.0), Lit(2.0)), Lit(3.0))
    assert parse("2^3^2", 1) == Bin("^", Lit(2.0), Bin("^", Lit(3.0), Lit(2.0)))
    assert evaluate(parse("2^3^2", 1), [0.0]) == 512.0
    # power binds tighter than unary minus
    assert parse("-x1^2", 1) == Neg(Bin("^", Var(1), Lit(2.0)))
    assert evaluate(parse("-x1^2", 1), [3.0]) == -9.0
    assert parse("2^-1", 1) == Bin("^", Lit(2.0), Neg(Lit(1.0)))
    assert parse("1 + 2 * x1", 1) == Bin("+", Lit(1.0), Bin("*", Lit(2.0), Var(1)))


@pytest.mark.parametrize("src,offset", [("2x1", 1), ("x1 +", 4), ("(x1", 3), ("x1 $ 2", 3), ("", 0)])
def test_syntax_errors_carry_offsets(src, offset):
    with pytest.raises(ParseError) as info:
        parse(src, 2)
    assert info.value.offset == offset


def test_offsets_are_bytes():
    # the two-byte character shifts the byte offset past the character offset
    with pytest.raises(ParseError) as info:
        parse("x1 + é", 1)
    assert info.value.offset == 5


def test_named_errors():
    with pytest.raises(UnknownVariable):
        parse("x3", 2)
    with pytest.raises(UnknownVariable):
        parse("x0", 2)
    with pytest.raises(UnknownFunction):
        parse("sin(x1)", 1)
    with pytest.raises(ArityError):
        parse("min(x1)", 1)
    with pytest.raises(ArityError):
        parse("sqrt(x1, x1)", 1)


# -- evaluation --------------------------------------------------------------


def test_simple_values():
    assert evaluate(parse("7", 1), [123.0]) == 7.0
    assert evaluate(parse("x1*x2", 2), [3.0, 4.0]) == 12.0
    assert evaluate(parse("sqrt(x1)", 1), [2.25]) == 1.5


@pytest.mark.parametrize("src,x", [("log(x1)", [0.0]), ("log(x1)", [-1.0]), ("1/x1", [0.0]),
                                   ("x1^0.5", [-4.0]), ("sqrt(x1)", [-1.0]), ("x1^-1", [0.0]),
                                   ("exp(x1)", [1000.0])])
def test_domain_errors(src, x):
    with pytest.raises(DomainError) as info:
        evaluate(parse(src, 1), x)
    assert info.value.subexpr


def test_domain_error_names_offending_subexpression():
    with pytest.raises(DomainError) as info:
        evaluate(parse("1 + log(x1 - 1)", 1), [1.0])
    assert info.value.subexpr == "log(x1 - 1)"


def test_negative_base_integer_power_is_fine():
    assert evaluate(parse("x1^3", 1), [-2.0]) == -8.0
    assert evaluate(parse("pow(x1, 2)", 1), [-3.0]) == 9.0


def test_vectorised_matches_pointwise():
    e = parse("max(x1, x2) * exp(-x1) + abs(x2)", 2)
    xs = np.random.default_rng(0).normal(size=(50, 2))
    batch = compile_expr(e)(xs)
    assert np.array_equal(batch, [evaluate(e, x) for x in xs])


def test_constant_broadcasts():
    assert compile_expr(parse("2", 2))(np.zeros((4, 5, 2))).shape == (4, 5)


# -- generated corpus --------------------------------------------------------

literals = st.floats(min_value=0.0, max_value=50.0, allow_nan=False).map(lambda v: Lit(round(v, 3)))
variables = st.integers(min_value=1, max_value=N).map(Var)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda t: Bin(*t)),
        st.tuples(st.sampled_from(["sqrt", "abs", "exp", "log"]), children).map(lambda t: Call(t[0], (t[1],))),
        st.tuples(st.sampled_from(["min", "max", "pow"]), children, children).map(
            lambda t: Call(t[0], (t[1], t[2]))),
    )


exprs = st.recursive(literals | variables, _extend, max_leaves=12)


@settings(max_examples=200)
@given(exprs)
def test_print_parse_round_trip(e):
    src = to_source(e)
    assert to_source(parse(src, N)) == src
    assert parse(src, N) == e


def reference(e, x):
    """Plain tree walk with the math module; None when outside the real domain."""
    try:
        return _ref(e, x)
    except (ValueError, ZeroDivisionError, OverflowError):
        return None


def _ref(e, x):
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, Var):
        return x[e.index - 1]
    if isinstance(e, Neg):
        return -_ref(e.arg, x)
    if isinstance(e, Bin):
        a, b = _ref(e.left, x), _ref(e.right, x)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return a / b
        return _ref_pow(a, b)
    a = [_ref(v, x) for v in e.args]
    if e.name == "sqrt":
        return math.sqrt(a[0])
    if e.name == "log":
        return math.log(a[0])
    if e.name == "exp":
        return math.exp(a[0])
    if e.name == "abs":
        return abs(a[0])
    if e.name == "min":
        return min(a)
    if e.name == "max":
        return max(a)
    return _ref_pow(*a)


def _ref_pow(a, b):
    if a == 0 and b < 0:
        raise ZeroDivisionError
    r = math.pow(a, b)
    if isinstance(r, complex):
        raise ValueError
    return r


def _finite(v):
    return v is not None and math.isfinite(v)


def test_agrees_with_reference_walker():
    rng = np.random.default_rng(2024)
    corpus = [parse(s, N) for s in _corpus_sources(rng, 400)]
    checked = 0
    for k in range(10_000):
        e = corpus[k % len(corpus)]
        x = rng.uniform(-3, 3, size=N)
        ref = reference(e, [float(v) for v in x])
        f = compile_expr(e)
        if _finite(ref):
            got = f(x)
            assert float(got) == pytest.approx(ref, rel=1e-12, abs=1e-300)
            checked += 1
        else:
            with pytest.raises(DomainError):
                f(x)
    assert checked > 5000


def _corpus_sources(rng, count):
    """Random well-formed sources built from the grammar (independent of the printer)."""
    def gen(depth):
        r = rng.random()
        if depth == 0 or r < 0.25:
            return f"x{rng.integers(1, N + 1)}" if rng.random() < 0.6 else f"{rng.uniform(0, 4):.3f}"
        if r < 0.55:
            op = rng.choice(["+", "-", "*", "/"])
            return f"({gen(depth - 1)} {op} {gen(depth - 1)})"
        if r < 0.65:
            return f"-{gen(depth - 1)}"
        if r < 0.75:
            return f"({gen(depth - 1)})^{rng.integers(0, 4)}"
        fn = rng.choice(["sqrt", "abs", "exp", "log", "min", "max"])
        if fn in ("min", "max"):
            return f"{fn}({gen(depth - 1)}, {gen(depth - 1)})"
        return f"{fn}({gen(depth - 1)})"
    return [gen(4) for _ in range(count)]
