from __future__ import annotations

import random

import pytest
from hypothesis import strategies as st

from seqsynth.dsl import LEAVES, OPERATORS, Operator, Program, leaf

NON_LEAVES = [op for op in OPERATORS if op.arity > 0]


def random_program(rng: random.Random, max_size: int) -> Program:
    """Random tree with at most ``max_size`` nodes."""
    if max_size < 3 or rng.random() < 0.3:
        return leaf(rng.choice(LEAVES))
    ops = [op for op in NON_LEAVES if op.arity + 1 <= max_size]
    op = rng.choice(ops)
    budget = max_size - 1 - op.arity  # spare nodes beyond one per child
    kids = []
    for i in range(op.arity):
        extra = rng.randint(0, budget) if i < op.arity - 1 else budget
        extra = rng.randint(0, extra)
        budget -= extra
        kids.append(random_program(rng, 1 + extra))
    return Program(op, kids)


@st.composite
def programs(draw, max_size: int = 25) -> Program:
    return random_program(random.Random(draw(st.integers(0, 2 ** 32))), max_size)


FACTORIAL = "loop(mul(x,y),x,1)"
FIBONACCI = "loop2(add(x,y),x,x,0,1)"
POWER_SELF = "loop2(mul(x,y),y,x,1,x)"
DOUBLE_EXP = "loop(mul(x,x),x,2)"
CATALAN = "div(loop(mul(2,add(sub(x,div(x,y)),x)),x,1),add(1,x))"
PRIME_CHAR = "mod(mod(loop(mul(x,y),x,x),add(1,x)),2)"
GOOGOL_MOD = "mod(loop(loop(mul(add(2,mul(2,add(2,2))),x),x,1),2,2),add(1,x))"


_REPORT: list[tuple[str, bool, str]] = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report(label, passed, detail)``."""
    def record(label: str, passed: bool, detail: str = "") -> bool:
        _REPORT.append((label, bool(passed), detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _REPORT:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")
