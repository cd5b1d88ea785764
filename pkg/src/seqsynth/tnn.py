"""Tree neural network policy.

Every tree constructor owns a block.  Leaf constructors are learned
vectors; an ``n``-ary constructor maps the concatenated child embeddings
``(n*d)`` through two tanh layers to ``d``.  Trees embedded:

* integers in base 10: ``-159`` is ``neg(cons_d(9, cons_d(5, 1)))``;
  values beyond +-10**6 become ``big`` / ``neg(big)``;
* sequences (first 16 terms): ``cons_i(t0, cons_i(t1, ... nil_i))``;
* stacks: ``cons_p(top, cons_p(below_top, ... nil_p))``;
* ``head(stack, sequence)``, followed by a linear layer and softmax over
  the 14 actions.
"""
from __future__ import annotations

import io
import random
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dsl import OPERATORS, Operator, Program, linearize
from .search import SearchNode, apply_action, legal_actions

DEFAULT_DIM = 64
KEY_LENGTH = 16
BIG = 10 ** 6
N_ACTIONS = len(OPERATORS)

MAGIC = b"SQSYNTNN"
VERSION = 1


def _op_block(op: Operator) -> str:
    return "op_" + op.token


BLOCK_ARITY: dict[str, int] = {_op_block(op): op.arity for op in OPERATORS}
BLOCK_ARITY.update({"cons_p": 2, "nil_p": 0, "cons_i": 2, "nil_i": 0,
                    "cons_d": 2, "neg": 1, "big": 0, "head": 2})
BLOCK_ARITY.update({f"digit{i}": 0 for i in range(10)})
BLOCKS = tuple(BLOCK_ARITY)
_OP_BLOCK = tuple(_op_block(op) for op in OPERATORS)
_DIGIT = tuple(f"digit{i}" for i in range(10))


class CheckpointError(ValueError):
    pass


class TrainingError(FloatingPointError):
    pass


def sequence_key(terms: Sequence[int]) -> tuple:
    """First 16 terms with values beyond +-10**6 replaced by ``"big"``/``"-big"``."""
    out = []
    for t in terms[:KEY_LENGTH]:
        if t > BIG:
            out.append("big")
        elif t < -BIG:
            out.append("-big")
        else:
            out.append(t)
    return tuple(out)


class PolicyModel:
    def __init__(self, d: int, params: dict[str, np.ndarray]):
        self.d = d
        self.params = params
        self._bind()

    def _bind(self) -> None:
        p = self.params
        self.leaf = {b: p[b + ".v"] for b, ar in BLOCK_ARITY.items() if ar == 0}
        self.layers = {b: (p[b + ".W1"], p[b + ".b1"], p[b + ".W2"], p[b + ".b2"])
                       for b, ar in BLOCK_ARITY.items() if ar > 0}
        self.out_W = p["policy.W"]
        self.out_b = p["policy.b"]

    @staticmethod
    def layout(d: int) -> list[tuple[str, tuple[int, ...], int]]:
        """Parameter names, shapes and init fan-in, in checkpoint order."""
        out = []
        for b, ar in BLOCK_ARITY.items():
            if ar == 0:
                out.append((b + ".v", (d,), 1))
            else:
                out += [(b + ".W1", (d, ar * d), ar * d), (b + ".b1", (d,), ar * d),
                        (b + ".W2", (d, d), d), (b + ".b2", (d,), d)]
        out += [("policy.W", (N_ACTIONS, d), d), ("policy.b", (N_ACTIONS,), d)]
        return out

    def copy(self) -> PolicyModel:
        return PolicyModel(self.d, {k: v.copy() for k, v in self.params.items()})

    def checksum(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for name, _, _ in self.layout(self.d):
            h.update(np.ascontiguousarray(self.params[name], dtype="<f8").tobytes())
        return h.hexdigest()

    def apply(self, block: str, *args: np.ndarray) -> np.ndarray:
        if not args:
            return self.leaf[block]
        W1, b1, W2, b2 = self.layers[block]
        x = args[0] if len(args) == 1 else np.concatenate(args)
        return np.tanh(W2 @ np.tanh(W1 @ x + b1) + b2)

    def policy_from(self, h: np.ndarray) -> np.ndarray:
        z = self.out_W @ h + self.out_b
        z = np.exp(z - z.max())
        return z / z.sum()


def init_model(d: int = DEFAULT_DIM, seed: int = 0) -> PolicyModel:
    """Uniform init in +-1/sqrt(fan_in) (leaf vectors: +-1)."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape, fan_in in PolicyModel.layout(d):
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return PolicyModel(d, params)


def save(m: PolicyModel, path) -> None:
    """Write a checkpoint.

    Layout (little endian): magic ``SQSYNTNN``, u32 version, u32 d, u32
    array count, then per array: u16 name length, name, u8 ndim, u32 dims;
    then every array as row-major float64 in table order.
    """
    layout = m.layout(m.d)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<III", VERSION, m.d, len(layout)))
    for name, shape, _ in layout:
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(struct.pack("<B", len(shape)) + struct.pack(f"<{len(shape)}I", *shape))
    for name, _, _ in layout:
        buf.write(np.ascontiguousarray(m.params[name], dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load(path, d: int | None = None) -> PolicyModel:
    data = Path(path).read_bytes()
    try:
        return _parse_checkpoint(data, path, d)
    except (struct.error, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from None


def _parse_checkpoint(data: bytes, path, d: int | None) -> PolicyModel:
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a policy checkpoint")
    version, dim, count = struct.unpack_from("<III", data, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {VERSION}")
    if d is not None and dim != d:
        raise CheckpointError(f"{path}: dimension {dim}, expected {d}")
    off = 20
    table = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + n].decode()
        off += n
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        table.append((name, tuple(shape)))
    expected = [(name, shape) for name, shape, _ in PolicyModel.layout(dim)]
    if table != expected:
        raise CheckpointError(f"{path}: block table does not match this model layout")
    params = {}
    for name, shape in table:
        count = int(np.prod(shape))
        params[name] = np.frombuffer(data, dtype="<f8", count=count, offset=off) \
            .reshape(shape).astype(np.float64)
        off += 8 * count
    if off != len(data):
        raise CheckpointError(f"{path}: trailing bytes")
    return PolicyModel(dim, params)


# --- single-tree embeddings (search time) ---------------------------------

def int_tree(n: int):
    """Constructor tree of an integer as nested tuples ``(block, *children)``."""
    if n > BIG:
        return ("big",)
    if n < -BIG:
        return ("neg", ("big",))
    if n < 0:
        return ("neg", int_tree(-n))
    digits = str(n)
    t = (_DIGIT[int(digits[0])],)
    for ch in digits[1:]:
        t = ("cons_d", (_DIGIT[int(ch)],), t)
    return t


def embed_tree(m: PolicyModel, t) -> np.ndarray:
    return m.apply(t[0], *(embed_tree(m, c) for c in t[1:]))


def embed_int(m: PolicyModel, n: int, cache: dict | None = None) -> np.ndarray:
    if cache is not None:
        v = cache.get(n)
        if v is None:
            v = cache[n] = embed_tree(m, int_tree(n))
        return v
    return embed_tree(m, int_tree(n))


def embed_key(m: PolicyModel, terms: Sequence[int], cache: dict | None = None) -> np.ndarray:
    e = m.apply("nil_i")
    for t in reversed(list(terms[:KEY_LENGTH])):
        e = m.apply("cons_i", embed_int(m, t, cache), e)
    return e


def embed_program(m: PolicyModel, p: Program, cache: dict | None = None) -> np.ndarray:
    if cache is not None:
        v = cache.get(p)
        if v is not None:
            return v
    v = m.apply(_OP_BLOCK[p.op], *(embed_program(m, c, cache) for c in p.children))
    if cache is not None:
        cache[p] = v
    return v


def embed_stack(m: PolicyModel, stack: Sequence[Program], cache: dict | None = None,
                stack_cache: dict | None = None) -> np.ndarray:
    stack = tuple(stack)
    if stack_cache is not None:
        v = stack_cache.get(stack)
        if v is not None:
            return v
        k = len(stack)
        # longest cached prefix
        while k > 0 and stack[:k] not in stack_cache:
            k -= 1
        e = stack_cache[stack[:k]] if k else m.apply("nil_p")
        for i in range(k, len(stack)):
            e = m.apply("cons_p", embed_program(m, stack[i], cache), e)
            stack_cache[stack[:i + 1]] = e
        return e
    e = m.apply("nil_p")
    for p in stack:
        e = m.apply("cons_p", embed_program(m, p, cache), e)
    return e


def forward_policy(m: PolicyModel, stack: Sequence[Program], terms: Sequence[int]) -> np.ndarray:
    """Action distribution (length 14) for a stack and target sequence."""
    h = m.apply("head", embed_stack(m, stack), embed_key(m, terms))
    return m.policy_from(h)


class PolicyEmbedder:
    """Caching policy evaluation for one search (one target sequence)."""

    def __init__(self, m: PolicyModel, terms: Sequence[int]):
        self.model = m
        self.programs: dict[Program, np.ndarray] = {}
        self.stacks: dict[tuple, np.ndarray] = {(): m.apply("nil_p")}
        self.key = embed_key(m, terms, {})

    def policy(self, stack: Sequence[Program]) -> np.ndarray:
        m = self.model
        e = embed_stack(m, stack, self.programs, self.stacks)
        return m.policy_from(m.apply("head", e, self.key))

    def node_policy(self, node: SearchNode) -> np.ndarray:
        m = self.model
        if node.embedding is None:
            node.embedding = embed_stack(m, node.stack, self.programs, self.stacks)
        return m.policy_from(m.apply("head", node.embedding, self.key))


# --- training examples -----------------------------------------------------

@dataclass(frozen=True)
class TrainingExample:
    stack: tuple
    key: tuple
    action: Operator


def extract_examples(terms: Sequence[int], p: Program) -> list[TrainingExample]:
    """One example per construction action of ``p``."""
    terms = getattr(terms, "terms", terms)
    key = sequence_key(terms)
    out = []
    stack: tuple = ()
    for a in linearize(p):
        out.append(TrainingExample(stack, key, a))
        stack = apply_action(stack, a)
    return out


# --- batched computation over a shared DAG ---------------------------------

class Batch:
    """Computation graph of a set of examples with shared subtrees.

    Nodes are deduplicated structurally (numbers, sequence suffixes,
    programs, stack prefixes), then grouped by (height, block) so each
    group is evaluated with one matrix product per layer.
    """

    def __init__(self, groups: list[tuple[int, str, list[int]]]):
        self._block: list[str] = []
        self._kids: list[tuple[int, ...]] = []
        self._height: list[int] = []
        self._memo: dict = {}
        self.heads: list[int] = []
        self.targets: list[int] = []
        self.n_pairs = 0
        self._plan = None
        for terms, program in groups:
            self.add_pair(terms, program)

    def _node(self, key, block: str, kids: tuple[int, ...]) -> int:
        idx = self._memo.get(key)
        if idx is None:
            idx = len(self._block)
            self._memo[key] = idx
            self._block.append(block)
            self._kids.append(kids)
            self._height.append(1 + max((self._height[k] for k in kids), default=-1))
        return idx

    def _int(self, n: int) -> int:
        return self._tree(int_tree(n))

    def _tree(self, t) -> int:
        idx = self._memo.get(("t", t))
        if idx is None:
            kids = tuple(self._tree(c) for c in t[1:])
            idx = self._node(("t", t), t[0], kids)
        return idx

    def _program(self, p: Program) -> int:
        key = ("p", p)
        idx = self._memo.get(key)
        if idx is None:
            kids = tuple(self._program(c) for c in p.children)
            idx = self._node(key, _OP_BLOCK[p.op], kids)
        return idx

    def _key(self, terms: tuple) -> int:
        e = self._node(("nil_i",), "nil_i", ())
        key = terms[:KEY_LENGTH]
        for i in range(len(key) - 1, -1, -1):
            e = self._node(("s", key[i:]), "cons_i", (self._int(key[i]), e))
        return e

    def _stack(self, stack: tuple) -> int:
        e = self._node(("nil_p",), "nil_p", ())
        for i, p in enumerate(stack):
            e = self._node(("k", stack[:i + 1]), "cons_p", (self._program(p), e))
        return e

    def add_pair(self, terms: Sequence[int], program: Program) -> None:
        terms = tuple(getattr(terms, "terms", terms))
        k = self._key(terms)
        stack: tuple = ()
        for a in linearize(program):
            s = self._stack(stack)
            h = self._node(("h", self.n_pairs, len(self.heads)), "head", (s, k))
            self.heads.append(h)
            self.targets.append(int(a))
            stack = apply_action(stack, a)
        self.n_pairs += 1
        self._plan = None

    def plan(self):
        if self._plan is None:
            order: dict[tuple[int, str], list[int]] = {}
            leaves: dict[str, list[int]] = {}
            for i, (b, h) in enumerate(zip(self._block, self._height)):
                if h == 0:
                    leaves.setdefault(b, []).append(i)
                else:
                    order.setdefault((h, b), []).append(i)
            groups = []
            for (h, b) in sorted(order):
                idx = np.array(order[(h, b)])
                kids = np.array([self._kids[i] for i in idx])
                groups.append((b, idx, kids))
            self._plan = ({b: np.array(v) for b, v in leaves.items()}, groups,
                          np.array(self.heads), np.array(self.targets))
        return self._plan

    def loss_and_grads(self, m: PolicyModel, with_grads: bool = True):
        """Mean cross-entropy of the policy against the taken actions."""
        leaves, groups, heads, targets = self.plan()
        d = m.d
        E = np.empty((len(self._block), d))
        for b, idx in leaves.items():
            E[idx] = m.leaf[b]
        saved = []
        for b, idx, kids in groups:
            W1, b1, W2, b2 = m.layers[b]
            X = E[kids].reshape(len(idx), -1)
            H1 = np.tanh(X @ W1.T + b1)
            out = np.tanh(H1 @ W2.T + b2)
            E[idx] = out
            saved.append((X, H1, out))
        Hh = E[heads]
        Z = Hh @ m.out_W.T + m.out_b
        Z -= Z.max(axis=1, keepdims=True)
        logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
        n = len(heads)
        loss = -logp[np.arange(n), targets].mean()
        if not with_grads:
            return loss, None
        grads: dict[str, np.ndarray] = {}
        dZ = np.exp(logp)
        dZ[np.arange(n), targets] -= 1.0
        dZ /= n
        grads["policy.W"] = dZ.T @ Hh
        grads["policy.b"] = dZ.sum(axis=0)
        dE = np.zeros_like(E)
        np.add.at(dE, heads, dZ @ m.out_W)
        for (b, idx, kids), (X, H1, out) in zip(reversed(groups), reversed(saved)):
            W1, b1, W2, b2 = m.layers[b]
            dZ2 = dE[idx] * (1.0 - out * out)
            dH1 = dZ2 @ W2
            dZ1 = dH1 * (1.0 - H1 * H1)
            dX = (dZ1 @ W1).reshape(kids.shape + (d,))
            np.add.at(dE, kids, dX)
            for name, g in ((".W2", dZ2.T @ H1), (".b2", dZ2.sum(axis=0)),
                            (".W1", dZ1.T @ X), (".b1", dZ1.sum(axis=0))):
                key = b + name
                if key in grads:
                    grads[key] += g
                else:
                    grads[key] = g
        for b, idx in leaves.items():
            grads[b + ".v"] = dE[idx].sum(axis=0)
        return loss, grads


def train(m: PolicyModel, pairs: Iterable[tuple], epochs: int = 50, lr: float = 0.01,
          rng: random.Random | None = None, target_loss: float | None = None,
          log_every: int = 0) -> PolicyModel:
    """Batch gradient descent, one step per sequence/solution pair.

    Returns a trained copy.  With ``target_loss`` training stops after the
    first epoch whose mean batch loss falls below it.
    """
    rng = rng or random.Random(0)
    m = m.copy()
    batches = [Batch([(terms, p)]) for terms, p in pairs]
    params = m.params
    for epoch in range(epochs):
        order = list(range(len(batches)))
        rng.shuffle(order)
        total = 0.0
        for i in order:
            loss, grads = batches[i].loss_and_grads(m)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, pair {i}")
            total += loss
            if lr:
                for name, g in grads.items():
                    params[name] -= lr * g
        mean = total / max(len(batches), 1)
        if log_every and epoch % log_every == 0:
            import logging
            logging.getLogger(__name__).info("epoch %d loss %.4f", epoch, mean)
        if target_loss is not None and mean < target_loss:
            break
    return m


def mean_loss(m: PolicyModel, pairs: Iterable[tuple]) -> float:
    losses = [Batch([(t, p)]).loss_and_grads(m, with_grads=False)[0] for t, p in pairs]
    return float(np.mean(losses))


def greedy_replay(m: PolicyModel, terms: Sequence[int], steps: int) -> tuple:
    """Stack after ``steps`` argmax-legal actions from the empty stack."""
    emb = PolicyEmbedder(m, terms)
    stack: tuple = ()
    for _ in range(steps):
        q = emb.policy(stack)
        acts = legal_actions(stack)
        a = max(acts, key=lambda op: q[op])
        stack = apply_action(stack, a)
    return stack


def reconstructs(m: PolicyModel, terms: Sequence[int], p: Program) -> bool:
    return greedy_replay(m, terms, p.size) == (p,)
