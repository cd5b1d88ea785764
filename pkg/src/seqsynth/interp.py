"""Budgeted evaluation of programs over arbitrary-precision integers.

Semantics:

* ``div``/``mod`` use floor division (quotient towards minus infinity,
  remainder with the sign of the divisor); a zero divisor aborts.
* ``cond(a, b, c)`` is ``b`` when ``a <= 0`` and ``c`` otherwise; only the
  taken branch is evaluated.
* ``loop(f, a, b)`` is ``u_a`` with ``u_0 = b`` and ``u_n = f(u_{n-1}, n)``.
* ``loop2(f, g, a, b, c)`` iterates ``(u, v) <- (f(u, v), g(u, v))`` ``a``
  times from ``(b, c)`` and returns ``u``.
* ``compr(f, a)`` is the ``a``-th (from 0) element of the increasing
  enumeration of ``{m >= 0 | f(m, 0) <= 0}``; negative ``a`` aborts.

Cost model (abstract steps): every node evaluation and every loop iteration
costs one step; arithmetic additionally costs ``(digits(a) + digits(b)) // 64``.
"""
from __future__ import annotations

import enum
import sys
import time
from dataclasses import dataclass
from typing import Iterator

from .dsl import Operator, Program

MAX_ABS = 10 ** 285
_MAX_ABS_BITS = MAX_ABS.bit_length()

STEPS_PER_MICROSECOND = 200
INITIAL_US = 50
PER_TERM_US = 50

_CLOCK_CHECK_INTERVAL = 256
_CONST = (0, 1, 2)

if sys.getrecursionlimit() < 20000:
    sys.setrecursionlimit(20000)


class AbortReason(str, enum.Enum):
    OVERFLOW = "overflow"
    BUDGET = "budget-exhausted"
    DIV_BY_ZERO = "div-by-zero"
    COMPR_NEGATIVE = "compr-negative"


class Abort(Exception):
    """Evaluation stopped without producing a value."""

    def __init__(self, reason: AbortReason):
        super().__init__(reason.value)
        self.reason = reason


@dataclass(frozen=True)
class Budget:
    """Evaluation allowance.

    ``mode`` is ``"steps"`` (deterministic abstract steps) or ``"clock"``
    (microseconds of wall-clock time).  ``remaining`` is the initial
    allowance; ``per_term_increment`` is added after each produced term of
    a sequence.  ``max_abs`` is the value cap (``None`` disables it).
    """

    mode: str = "steps"
    remaining: float = INITIAL_US * STEPS_PER_MICROSECOND
    per_term_increment: float = PER_TERM_US * STEPS_PER_MICROSECOND
    max_abs: int | None = MAX_ABS

    def __post_init__(self):
        if self.mode not in ("steps", "clock"):
            raise ValueError(f"unknown budget mode {self.mode!r}")
        if self.remaining <= 0 or self.per_term_increment < 0:
            raise ValueError("budget allowance must be positive")

    @classmethod
    def steps(cls, initial_us: float = INITIAL_US, per_term_us: float = PER_TERM_US,
              steps_per_microsecond: float = STEPS_PER_MICROSECOND,
              max_abs: int | None = MAX_ABS) -> Budget:
        return cls("steps", int(initial_us * steps_per_microsecond),
                   int(per_term_us * steps_per_microsecond), max_abs)

    @classmethod
    def clock(cls, initial_us: float = INITIAL_US, per_term_us: float = PER_TERM_US,
              max_abs: int | None = MAX_ABS) -> Budget:
        return cls("clock", initial_us, per_term_us, max_abs)


DEFAULT_BUDGET = Budget()


def _digits(n: int) -> int:
    # floor(bits * log10(2)), exact enough for a cost model and integer-only
    return (n.bit_length() * 1233) >> 12


class Session:
    """One evaluation session: a budget counter plus the ``compr`` memo.

    The memo maps a lambda body to the elements of its enumeration found so
    far; bodies are closed terms so the memo is valid for every input of
    the session.
    """

    def __init__(self, budget: Budget = DEFAULT_BUDGET):
        self.budget = budget
        self.memo: dict[Program, list] = {}
        self.cap = budget.max_abs
        self._clock = budget.mode == "clock"
        if self._clock:
            self.deadline = time.perf_counter() + budget.remaining * 1e-6
            self.left = _CLOCK_CHECK_INTERVAL
        else:
            self.left = int(budget.remaining)

    def refill(self) -> None:
        """Add one term's worth of allowance."""
        if self._clock:
            self.deadline += self.budget.per_term_increment * 1e-6
        else:
            self.left += int(self.budget.per_term_increment)

    def _exhausted(self) -> None:
        if self._clock and time.perf_counter() < self.deadline:
            self.left = _CLOCK_CHECK_INTERVAL
            return
        self.left = 0
        raise Abort(AbortReason.BUDGET)

    def _check(self, v: int) -> int:
        cap = self.cap
        if cap is not None and v.bit_length() >= _MAX_ABS_BITS and abs(v) > cap:
            raise Abort(AbortReason.OVERFLOW)
        return v

    def run(self, p: Program, x: int, y: int = 0) -> int:
        try:
            return self._check(self.ev(p, x, y))
        except RecursionError:
            raise Abort(AbortReason.BUDGET) from None

    def ev(self, p: Program, x: int, y: int) -> int:
        op = p.op
        self.left -= 1
        if self.left < 0:
            self._exhausted()
        if op <= 4:
            if op == 3:
                return x
            if op == 4:
                return y
            return _CONST[op]
        ch = p.children
        ev = self.ev
        if op <= 9:
            a = ev(ch[0], x, y)
            b = ev(ch[1], x, y)
            self.left -= (_digits(a) + _digits(b)) >> 6
            if self.left < 0:
                self._exhausted()
            if op == 5:
                r = a + b
            elif op == 6:
                r = a - b
            elif op == 7:
                r = a * b
            elif b == 0:
                raise Abort(AbortReason.DIV_BY_ZERO)
            elif op == 8:
                r = a // b
            else:
                r = a % b
            cap = self.cap
            if cap is not None and r.bit_length() >= _MAX_ABS_BITS and abs(r) > cap:
                raise Abort(AbortReason.OVERFLOW)
            return r
        if op == 10:
            if ev(ch[0], x, y) <= 0:
                return ev(ch[1], x, y)
            return ev(ch[2], x, y)
        if op == 11:
            f = ch[0]
            n = ev(ch[1], x, y)
            u = ev(ch[2], x, y)
            i = 1
            while i <= n:
                self.left -= 1
                if self.left < 0:
                    self._exhausted()
                u = ev(f, u, i)
                i += 1
            return u
        if op == 12:
            f, g = ch[0], ch[1]
            n = ev(ch[2], x, y)
            u = ev(ch[3], x, y)
            v = ev(ch[4], x, y)
            i = 0
            while i < n:
                self.left -= 1
                if self.left < 0:
                    self._exhausted()
                u, v = ev(f, u, v), ev(g, u, v)
                i += 1
            return u
        # compr
        f = ch[0]
        a = ev(ch[1], x, y)
        if a < 0:
            raise Abort(AbortReason.COMPR_NEGATIVE)
        entry = self.memo.get(f)
        if entry is None:
            entry = self.memo[f] = [[], 0]  # found elements, next candidate
        found = entry[0]
        while len(found) <= a:
            m = entry[1]
            self.left -= 1
            if self.left < 0:
                self._exhausted()
            if ev(f, m, 0) <= 0:
                found.append(m)
            entry[1] = m + 1
        return found[a]


def evaluate(p: Program, x: int, y: int = 0, budget: Budget = DEFAULT_BUDGET) -> int:
    """Value of ``p`` at ``(x, y)``; raises :class:`Abort` on failure."""
    return Session(budget).run(p, x, y)


class SequenceRun:
    """Lazily produce ``p(0), p(1), ...`` with the per-term budget scheme.

    After the iterator stops, ``aborted`` holds the reason (or ``None`` if
    the requested number of terms was produced).
    """

    def __init__(self, p: Program, budget: Budget = DEFAULT_BUDGET):
        self.program = p
        self.session = Session(budget)
        self.aborted: AbortReason | None = None

    def terms(self, n: int | None = None, start: int = 0) -> Iterator[int]:
        session = self.session
        p = self.program
        x = start
        while n is None or x < start + n:
            try:
                v = session.run(p, x, 0)
            except Abort as exc:
                self.aborted = exc.reason
                return
            yield v
            session.refill()
            x += 1

    def take(self, n: int) -> list[int]:
        return list(self.terms(n))


def iter_sequence(p: Program, budget: Budget = DEFAULT_BUDGET) -> Iterator[int]:
    return SequenceRun(p, budget).terms()


def eval_sequence(p: Program, n: int, budget: Budget = DEFAULT_BUDGET) -> list[int]:
    """First ``n`` terms of ``p``; shorter if evaluation aborts."""
    if p.free_y:
        raise ValueError("program has a free y")
    return SequenceRun(p, budget).take(n)


def covers(p: Program, terms, budget: Budget = DEFAULT_BUDGET) -> bool:
    """True iff ``p(x) == terms[x]`` for every provided index."""
    if p.free_y:
        raise ValueError("program has a free y")
    terms = getattr(terms, "terms", terms)
    n = len(terms)
    i = 0
    for v in SequenceRun(p, budget).terms(n):
        if v != terms[i]:
            return False
        i += 1
    return i == n
