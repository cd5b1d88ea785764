"""Program language: operators, trees, text format, size and ordering.

Programs are immutable operator trees.  Subtrees sitting at higher-order
argument positions (the first argument of ``loop`` and ``compr``, the first
two of ``loop2``) are bodies of implicit ``lambda(x, y)`` binders.
"""
from __future__ import annotations

import enum
import re
from typing import Iterator, Sequence

MAX_SIZE = 10000


class Operator(enum.IntEnum):
    # Declaration order is the fixed token order used for tie breaking.
    ZERO = 0
    ONE = 1
    TWO = 2
    X = 3
    Y = 4
    ADD = 5
    SUB = 6
    MUL = 7
    DIV = 8
    MOD = 9
    COND = 10
    LOOP = 11
    LOOP2 = 12
    COMPR = 13

    @property
    def arity(self) -> int:
        return _ARITY[self]

    @property
    def token(self) -> str:
        return _TOKEN[self]


_ARITY = (0, 0, 0, 0, 0, 2, 2, 2, 2, 2, 3, 3, 5, 2)
_TOKEN = ("0", "1", "2", "x", "y", "add", "sub", "mul", "div", "mod",
          "cond", "loop", "loop2", "compr")
_BY_TOKEN = {t: Operator(i) for i, t in enumerate(_TOKEN)}

# Argument positions that hold lambda bodies.
HIGHER_ORDER = {
    Operator.LOOP: frozenset({0}),
    Operator.LOOP2: frozenset({0, 1}),
    Operator.COMPR: frozenset({0}),
}

OPERATORS = tuple(Operator)
LEAVES = tuple(op for op in OPERATORS if _ARITY[op] == 0)


def arity(op: Operator) -> int:
    return _ARITY[op]


class ProgramError(ValueError):
    pass


class ParseError(ProgramError):
    def __init__(self, message: str, pos: int | None = None):
        if pos is not None:
            message = f"{message} at position {pos}"
        super().__init__(message)
        self.pos = pos


class Program:
    """An operator applied to ``arity(op)`` subprograms.

    Instances are hashable and compare structurally; size, hash and the
    free-``y`` flag are computed once at construction.
    """

    __slots__ = ("op", "children", "size", "_hash", "_free_y")

    def __init__(self, op: Operator, children: Sequence[Program] = ()):
        op = Operator(op)
        children = tuple(children)
        if len(children) != _ARITY[op]:
            raise ProgramError(
                f"{op.token} expects {_ARITY[op]} arguments, got {len(children)}")
        size = 1
        for c in children:
            size += c.size
        if size > MAX_SIZE:
            raise ProgramError(f"program size {size} exceeds cap {MAX_SIZE}")
        self.op = op
        self.children = children
        self.size = size
        self._hash = hash((int(op),) + tuple(c._hash for c in children))
        if op == Operator.Y:
            self._free_y = True
        else:
            ho = HIGHER_ORDER.get(op, ())
            self._free_y = any(c._free_y for i, c in enumerate(children)
                               if i not in ho)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, Program):
            return NotImplemented
        # iterative to stay clear of the recursion limit on deep trees
        todo = [(self, other)]
        while todo:
            a, b = todo.pop()
            if a is b:
                continue
            if a._hash != b._hash or a.op != b.op:
                return False
            todo.extend(zip(a.children, b.children))
        return True

    def __repr__(self) -> str:
        return f"Program({to_text(self)!r})"

    def __str__(self) -> str:
        return to_text(self)

    @property
    def free_y(self) -> bool:
        return self._free_y


def leaf(op: Operator) -> Program:
    return _LEAF_CACHE[op]


_LEAF_CACHE = {op: Program(op) for op in LEAVES}


def size(p: Program) -> int:
    return p.size


def free_y(p: Program) -> bool:
    """True when ``y`` occurs outside every lambda body."""
    return p._free_y


def preorder(p: Program) -> Iterator[Operator]:
    todo = [p]
    while todo:
        node = todo.pop()
        yield node.op
        todo.extend(reversed(node.children))


def linearize(p: Program) -> list[Operator]:
    """Post-order action list that rebuilds ``p`` on an empty stack."""
    out: list[Operator] = []
    todo: list[tuple[Program, bool]] = [(p, False)]
    while todo:
        node, expanded = todo.pop()
        if expanded or not node.children:
            out.append(node.op)
        else:
            todo.append((node, True))
            todo.extend((c, False) for c in reversed(node.children))
    return out


def sort_key(p: Program) -> tuple[int, tuple[int, ...]]:
    return p.size, tuple(int(op) for op in preorder(p))


def compare(p1: Program, p2: Program) -> int:
    """Total order: size first, then pre-order tokens.  Returns -1, 0 or 1."""
    if p1 == p2:
        return 0
    return -1 if sort_key(p1) < sort_key(p2) else 1


def to_text(p: Program) -> str:
    parts: list[str] = []
    todo: list[object] = [p]
    while todo:
        item = todo.pop()
        if isinstance(item, str):
            parts.append(item)
            continue
        node = item
        assert isinstance(node, Program)
        parts.append(node.op.token)
        if node.children:
            parts.append("(")
            todo.append(")")
            for i, c in enumerate(reversed(node.children)):
                todo.append(c)
                if i < len(node.children) - 1:
                    todo.append(",")
    return "".join(parts)


_TOKEN_RE = re.compile(r"\s*(?:(loop2|loop|compr|cond|add|sub|mul|div|mod|[012xy])|([(),])|(\S))")


def parse(text: str) -> Program:
    """Read a program written as e.g. ``loop(mul(x,y),x,1)``."""
    # Each frame: [operator, start position, collected children].
    frames: list[list] = []
    result: Program | None = None
    pos = 0
    expect_term = True
    n = len(text)
    while True:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            break  # only trailing whitespace left
        start = m.start(m.lastindex)
        name, punct, junk = m.groups()
        pos = m.end()
        if junk is not None:
            raise ParseError(f"unexpected character {junk!r}", start)
        if result is not None and not frames:
            raise ParseError("trailing input", start)
        if expect_term:
            if name is None:
                raise ParseError(f"expected a term, got {punct!r}", start)
            op = _BY_TOKEN[name]
            if _ARITY[op] == 0:
                node = _LEAF_CACHE[op]
                if frames:
                    frames[-1][2].append(node)
                    expect_term = False
                else:
                    result = node
                    expect_term = False
            else:
                m2 = _TOKEN_RE.match(text, pos)
                if m2 is None or m2.group(2) != "(":
                    raise ParseError(f"expected '(' after {name}", pos)
                pos = m2.end()
                frames.append([op, start, []])
            continue
        if punct == ",":
            if not frames:
                raise ParseError("unexpected ','", start)
            expect_term = True
        elif punct == ")":
            if not frames:
                raise ParseError("unbalanced ')'", start)
            op, opstart, kids = frames.pop()
            if len(kids) != _ARITY[op]:
                raise ParseError(
                    f"{op.token} expects {_ARITY[op]} arguments, got {len(kids)}",
                    opstart)
            try:
                node = Program(op, kids)
            except ProgramError as exc:
                raise ParseError(str(exc), opstart) from None
            if frames:
                frames[-1][2].append(node)
            else:
                result = node
        else:
            raise ParseError(f"unexpected {name or punct!r}", start)
    if frames or result is None or expect_term:
        raise ParseError("unexpected end of input", n)
    return result
