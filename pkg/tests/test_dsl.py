import random

import pytest
from hypothesis import given, settings

from conftest import FACTORIAL, FIBONACCI, programs, random_program
from seqsynth.dsl import (MAX_SIZE, Operator, ParseError, Program, ProgramError, arity,
                          compare, free_y, leaf, linearize, parse, size, sort_key, to_text)
from seqsynth.interp import Abort, evaluate

O = Operator


def test_arity_table():
    assert arity(O.LOOP2) == 5
    assert arity(O.ZERO) == 0
    assert arity(O.COND) == 3
    assert [arity(op) for op in O] == [0, 0, 0, 0, 0, 2, 2, 2, 2, 2, 3, 3, 5, 2]


def test_size():
    assert size(parse(FACTORIAL)) == 6
    assert size(parse("x")) == 1
    assert size(parse("add(x,y)")) == 3


def test_free_y():
    assert free_y(parse("mul(x,y)"))
    assert not free_y(parse(FACTORIAL))
    # second argument of loop is first-order
    assert free_y(parse("loop(mul(x,y),y,1)"))
    assert not free_y(parse("loop2(y,y,x,0,1)"))
    assert free_y(parse("loop2(y,y,x,0,y)"))
    assert not free_y(parse("compr(y,x)"))


def test_parse_shapes():
    p = parse(FACTORIAL)
    assert p.op == O.LOOP
    assert [c.op for c in p.children] == [O.MUL, O.X, O.ONE]
    assert parse("x") == leaf(O.X)
    assert parse("  loop ( mul( x , y ),x, 1 ) ") == p


@pytest.mark.parametrize("text", ["cond(x,1,2,0)", "add(x)", "foo(x)", "add(x,y", "add(x,y))",
                                  "", "3", "x y", "add(,x)", "loop2(x,y)"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse(text)


def test_parse_error_reports_position():
    with pytest.raises(ParseError) as err:
        parse("add(x,%)")
    assert err.value.pos == 6


def test_size_cap():
    with pytest.raises(ProgramError):
        p = leaf(O.ONE)
        while True:
            p = Program(O.ADD, [p, leaf(O.ONE)])
    assert p.size <= MAX_SIZE


def test_print():
    assert to_text(parse(FACTORIAL)) == "loop(mul(x,y),x,1)"
    assert to_text(leaf(O.Y)) == "y"
    assert to_text(parse(FIBONACCI)) == "loop2(add(x,y),x,x,0,1)"


def test_compare_examples():
    x, xy, xx = parse("x"), parse("add(x,y)"), parse("add(x,x)")
    assert compare(x, xy) == -1
    assert compare(xy, xy) == 0
    assert compare(xx, xy) == -1
    assert compare(xy, xx) == 1


def test_linearize():
    assert linearize(parse(FACTORIAL)) == [O.X, O.Y, O.MUL, O.X, O.ONE, O.LOOP]
    assert linearize(parse("x")) == [O.X]
    assert linearize(parse("add(1,2)")) == [O.ONE, O.TWO, O.ADD]


@settings(max_examples=300)
@given(programs())
def test_text_round_trip(p):
    assert parse(to_text(p)) == p
    assert size(p) == len(linearize(p))


@settings(max_examples=200)
@given(programs(), programs(), programs())
def test_compare_is_total_order(a, b, c):
    assert compare(a, b) == -compare(b, a)
    assert (compare(a, b) == 0) == (a == b)
    if compare(a, b) <= 0 and compare(b, c) <= 0:
        assert compare(a, c) <= 0


def test_sort_key_orders_tokens():
    assert sort_key(parse("add(x,x)")) < sort_key(parse("add(x,y)"))
    assert sort_key(parse("sub(0,0)")) > sort_key(parse("add(2,2)"))


def _outcome(p, x, y):
    try:
        return evaluate(p, x, y)
    except Abort as exc:
        return exc.reason


@settings(max_examples=200, deadline=None)
@given(programs(max_size=15))
def test_closed_programs_ignore_y(p):
    if free_y(p):
        return
    for x in range(4):
        assert _outcome(p, x, 0) == _outcome(p, x, 7) == _outcome(p, x, -3)


def test_equality_and_hash_are_structural():
    rng = random.Random(5)
    for _ in range(200):
        p = random_program(rng, 30)
        q = parse(to_text(p))
        assert p == q and hash(p) == hash(q)
