import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import (CATALAN, DOUBLE_EXP, FACTORIAL, FIBONACCI, GOOGOL_MOD, POWER_SELF,
                      PRIME_CHAR, programs, random_program)
from seqsynth.dsl import parse
from seqsynth.interp import (MAX_ABS, Abort, AbortReason, Budget, Session, SequenceRun,
                             covers, eval_sequence, evaluate)

UNCAPPED = Budget(max_abs=None)


def seq(text, n, budget=UNCAPPED):
    return eval_sequence(parse(text), n, budget)


def test_known_sequences():
    assert seq(FACTORIAL, 8) == [math.factorial(i) for i in range(8)]
    fib = [0, 1]
    while len(fib) < 20:
        fib.append(fib[-1] + fib[-2])
    assert seq(FIBONACCI, 20) == fib
    assert seq(POWER_SELF, 8) == [x ** x for x in range(8)]
    assert seq(DOUBLE_EXP, 8) == [2 ** (2 ** x) for x in range(8)]
    assert seq(CATALAN, 15) == [math.comb(2 * x, x) // (x + 1) for x in range(15)]


def test_prime_characteristic():
    want = [1 if all((x + 1) % d for d in range(2, x + 1)) and x >= 1 else 0 for x in range(12)]
    assert seq(PRIME_CHAR, 12) == want == [0, 1, 1, 0, 1, 0, 1, 0, 0, 0, 1, 0]


def test_googol_mod():
    assert seq(GOOGOL_MOD, 30) == [pow(10, 100, x + 1) for x in range(30)]


@pytest.mark.parametrize("text,x,want", [
    ("compr(mod(x,2),add(1,2))", 0, 6),
    ("loop(add(x,y),add(2,2),0)", 0, 10),
    ("loop2(mul(x,y),y,add(2,2),1,x)", 4, 256),
    ("loop(mul(x,x),add(1,2),2)", 0, 256),
    ("div(sub(0,add(1,2)),2)", 0, -2),
    ("mod(sub(0,add(1,2)),2)", 0, 1),
    ("mod(add(1,2),sub(0,2))", 0, -1),
    ("cond(0,1,2)", 0, 1),
    ("cond(1,1,2)", 0, 2),
    ("cond(sub(0,1),1,2)", 0, 1),
    ("loop(mul(x,2),0,add(1,2))", 0, 3),
    ("loop(mul(x,2),sub(0,2),add(1,2))", 0, 3),
    ("loop2(x,y,0,add(1,2),2)", 0, 3),
    ("compr(sub(1,x),0)", 0, 1),
])
def test_semantics(text, x, want):
    assert evaluate(parse(text), x, 0, UNCAPPED) == want


def test_floor_division_matches_python():
    p, q = parse("div(x,y)"), parse("mod(x,y)")
    for a in range(-9, 10):
        for b in (-4, -3, -1, 1, 2, 5):
            assert evaluate(p, a, b) == a // b
            assert evaluate(q, a, b) == a % b


@pytest.mark.parametrize("text", ["div(1,0)", "mod(x,0)", "div(x,sub(x,x))"])
def test_division_by_zero(text):
    with pytest.raises(Abort) as err:
        evaluate(parse(text), 3)
    assert err.value.reason == AbortReason.DIV_BY_ZERO


def test_cond_is_lazy():
    assert evaluate(parse("cond(0,1,div(1,0))"), 0) == 1
    assert evaluate(parse("cond(1,div(1,0),2)"), 0) == 2


def test_compr_negative_index():
    with pytest.raises(Abort) as err:
        evaluate(parse("compr(0,sub(0,1))"), 0)
    assert err.value.reason == AbortReason.COMPR_NEGATIVE


def test_divergent_compr_exhausts_budget():
    s = Session()
    with pytest.raises(Abort) as err:
        s.run(parse("compr(1,x)"), 0)
    assert err.value.reason == AbortReason.BUDGET
    assert s.left == 0


def test_overflow():
    with pytest.raises(Abort) as err:
        evaluate(parse(DOUBLE_EXP), 10)
    assert err.value.reason == AbortReason.OVERFLOW
    assert evaluate(parse(DOUBLE_EXP), 9) == 2 ** 512
    assert 2 ** 512 < MAX_ABS


def test_budget_scales_with_terms():
    # a program that is cheap at small x but costs ~x^2 steps
    p = parse("loop(loop(add(x,1),y,x),x,0)")
    run = SequenceRun(p, Budget.steps(1, 1))
    got = run.take(1000)
    assert 0 < len(got) < 1000
    assert run.aborted == AbortReason.BUDGET
    assert got == [x * (x + 1) // 2 for x in range(len(got))]
    # a more generous budget reaches further
    assert len(SequenceRun(p, Budget.steps(5, 5)).take(1000)) > len(got)


def test_budget_is_cumulative():
    """Unused allowance carries over to later terms."""
    p = parse("cond(sub(x,add(2,2)),0,loop(add(x,1),mul(mul(2,mul(2,2)),mul(2,mul(2,2))),0))")
    # terms 0..4 are cheap, term 5 needs about 260 steps: more than one
    # term's allowance of 200 but less than what has accumulated by then
    with pytest.raises(Abort):
        Session(Budget.steps(1, 1, 200)).run(p, 5)
    run = SequenceRun(p, Budget.steps(1, 1, 200))
    assert run.take(6) == [0, 0, 0, 0, 0, 64]
    assert run.aborted is None


def test_compr_memo_is_shared_within_session():
    s = Session(Budget.steps(1000, 0))
    p = parse("compr(mod(x,add(1,2)),x)")
    assert [s.run(p, x) for x in range(50)] == [3 * x for x in range(50)]


def test_free_y_sequences_rejected():
    with pytest.raises(ValueError):
        eval_sequence(parse("add(x,y)"), 3)


def test_covers():
    p = parse(FACTORIAL)
    assert covers(p, [1, 1, 2, 6, 24])
    assert not covers(p, [1, 1, 2, 6, 25])
    assert not covers(parse(DOUBLE_EXP), [2 ** (2 ** x) for x in range(12)])


def test_clock_budget_terminates():
    run = SequenceRun(parse("compr(1,x)"), Budget.clock(50, 50))
    assert run.take(3) == []
    assert run.aborted == AbortReason.BUDGET


def _outcome(p, x, budget=Budget()):
    try:
        return evaluate(p, x, 0, budget)
    except Abort as exc:
        return exc.reason


@settings(max_examples=300, deadline=None)
@given(programs(max_size=20), st.integers(0, 20))
def test_evaluation_is_deterministic(p, x):
    assert _outcome(p, x) == _outcome(p, x)


@settings(max_examples=200, deadline=None)
@given(programs(max_size=20), st.integers(0, 10))
def test_results_respect_the_cap(p, x):
    r = _outcome(p, x)
    if isinstance(r, int):
        assert abs(r) <= MAX_ABS


def test_random_programs_never_raise_other_errors():
    rng = random.Random(11)
    for _ in range(3000):
        p = random_program(rng, 30)
        for x in range(3):
            _outcome(p, x)
