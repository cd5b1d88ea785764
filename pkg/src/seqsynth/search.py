"""Bottom-up program construction and the policy-guided search tree."""
from __future__ import annotations

import random
import time
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dsl import LEAVES, MAX_SIZE, OPERATORS, Operator, Program, leaf

Stack = tuple  # tuple[Program, ...], bottom first

NOISE_WEIGHT = 0.1
N_ACTIONS = len(OPERATORS)


class IllegalAction(ValueError):
    pass


def legal_actions(stack: Stack) -> list[Operator]:
    n = len(stack)
    out = list(LEAVES)
    for op in OPERATORS[len(LEAVES):]:
        ar = op.arity
        if n >= ar and 1 + sum(p.size for p in stack[n - ar:]) <= MAX_SIZE:
            out.append(op)
    return out


def apply_action(stack: Stack, a: Operator) -> Stack:
    """Pop ``arity(a)`` programs, push ``a`` applied to them (bottom = first arg)."""
    ar = a.arity
    if ar == 0:
        return stack + (leaf(a),)
    if len(stack) < ar:
        raise IllegalAction(f"{a.token} needs {ar} stack items, have {len(stack)}")
    try:
        p = Program(a, stack[len(stack) - ar:])
    except ValueError as exc:
        raise IllegalAction(str(exc)) from None
    return stack[:len(stack) - ar] + (p,)


def replay(actions: Sequence[Operator], stack: Stack = ()) -> Stack:
    for a in actions:
        stack = apply_action(stack, a)
    return stack


def mix_noise(q: Sequence[float], r: Sequence[float]) -> np.ndarray:
    """``0.9 * q + 0.1 * normalize(r)``."""
    r = np.asarray(r, dtype=float)
    q = np.asarray(q, dtype=float)
    return (1.0 - NOISE_WEIGHT) * q + NOISE_WEIGHT * (r / r.sum())


def add_noise(q: Sequence[float], rng: random.Random) -> np.ndarray:
    r = [rng.random() for _ in range(len(q))]
    if sum(r) == 0.0:
        r = [1.0] * len(q)
    return mix_noise(q, r)


class SearchNode:
    __slots__ = ("stack", "children", "embedding", "actions", "cumulative")

    def __init__(self, stack: Stack = ()):
        self.stack = stack
        self.children: dict[Operator, SearchNode] = {}
        self.embedding = None
        # legal actions and their cumulative probabilities, set on first visit
        self.actions: list[Operator] | None = None
        self.cumulative: list[float] | None = None


Policy = Callable[[SearchNode], Sequence[float]]


def _prepare(node: SearchNode, policy: Policy) -> None:
    dist = policy(node)
    acts = legal_actions(node.stack)
    cum = []
    total = 0.0
    for a in acts:
        total += float(dist[a])
        cum.append(total)
    if total <= 0.0:
        cum = [float(i + 1) for i in range(len(acts))]
    node.actions = acts
    node.cumulative = cum


def expand_once(root: SearchNode, policy: Policy, rng: random.Random) -> SearchNode:
    """Descend by sampling legal actions until one leads to a new node; create it.

    The policy is queried once per node; its legal-masked distribution is
    kept on the node.
    """
    node = root
    while True:
        if node.actions is None:
            _prepare(node, policy)
        cum = node.cumulative
        i = bisect_right(cum, rng.random() * cum[-1])
        if i == len(cum):
            i -= 1
        a = node.actions[i]
        child = node.children.get(a)
        if child is None:
            child = SearchNode(apply_action(node.stack, a))
            node.children[a] = child
            return child
        node = child


@dataclass
class SearchResult:
    programs: dict = field(default_factory=dict)  # ordered set of Program
    nodes_created: int = 0
    iterations: int = 0


def run_tree(policy: Policy, rng: random.Random, iterations: int | None = None,
             seconds: float | None = None, root: SearchNode | None = None) -> SearchResult:
    """Grow a search tree for a budget given in iterations and/or seconds."""
    if iterations is None and seconds is None:
        raise ValueError("search needs an iteration or time budget")
    root = root or SearchNode()
    res = SearchResult()
    deadline = None if seconds is None else time.perf_counter() + seconds
    programs = res.programs
    while iterations is None or res.iterations < iterations:
        if deadline is not None and time.perf_counter() >= deadline:
            break
        node = expand_once(root, policy, rng)
        res.iterations += 1
        res.nodes_created += 1
        # every stack element was the top of some node's stack
        programs[node.stack[-1]] = None
    return res


def run_search(target, model, iterations: int | None = None, seconds: float | None = None,
               noise: bool = False, rng: random.Random | None = None) -> SearchResult:
    """Search for programs generating ``target`` guided by a policy model."""
    from .tnn import PolicyEmbedder

    rng = rng or random.Random(0)
    terms = getattr(target, "terms", target)
    embedder = PolicyEmbedder(model, terms)

    def policy(node: SearchNode):
        q = embedder.node_policy(node)
        if noise:
            q = add_noise(q, rng)
        return q

    return run_tree(policy, rng, iterations=iterations, seconds=seconds)
