"""Sequence corpus: stripped-file and b-file loading, prefix index, b-file checks."""
from __future__ import annotations

import gzip
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .dsl import Program
from .interp import DEFAULT_BUDGET, MAX_ABS, Budget, SequenceRun

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Sequence:
    anum: int
    terms: tuple[int, ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError(f"A{self.anum:06d} has no terms")

    @property
    def name(self) -> str:
        return format_anum(self.anum)

    def __len__(self) -> int:
        return len(self.terms)


def format_anum(anum: int) -> str:
    return f"A{anum:06d}"


def parse_anum(text: str) -> int:
    m = re.fullmatch(r"\s*A?0*(\d+)\s*", text)
    if m is None:
        raise ValueError(f"bad A-number {text!r}")
    return int(m.group(1))


def _open_text(path):
    path = Path(path)
    with open(path, "rb") as fh:
        gz = fh.read(2) == b"\x1f\x8b"
    if gz:
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


class CorpusFormatError(ValueError):
    pass


_STRIPPED_RE = re.compile(r"A(\d+)\s*,((?:-?\d+,)+)\s*$")


def load_stripped(path, stats: dict | None = None) -> list[Sequence]:
    """Read lines ``A000045 ,0,1,1,2,3,5,``; ``#`` lines are comments.

    Malformed lines are logged with their line number and skipped; the
    count ends up in ``stats["malformed"]`` when a dict is passed.
    """
    seqs: list[Sequence] = []
    bad = 0
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.startswith("#"):
                continue
            m = _STRIPPED_RE.match(line)
            if m is None:
                bad += 1
                log.warning("%s:%d: malformed line skipped", path, lineno)
                continue
            terms = tuple(int(t) for t in m.group(2).split(",")[:-1])
            seqs.append(Sequence(int(m.group(1)), terms))
    if stats is not None:
        stats["malformed"] = bad
    return seqs


def dump_stripped(seqs: Iterable[Sequence], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# stripped sequence data\n")
        for s in seqs:
            fh.write(f"{s.name} ,{','.join(map(str, s.terms))},\n")


class TrieNode:
    __slots__ = ("edges", "anums")

    def __init__(self):
        # first term of the edge label -> (label, child)
        self.edges: dict[int, tuple[tuple[int, ...], TrieNode]] = {}
        self.anums: tuple[int, ...] = ()


class SeqTrie:
    """Path-compressed prefix trie over exact term lists.

    A node's ``anums`` lists the sequences whose full term list ends there.
    """

    def __init__(self):
        self.root = TrieNode()
        self.node_count = 1

    @classmethod
    def build(cls, seqs: Iterable[Sequence]) -> SeqTrie:
        trie = cls()
        for s in seqs:
            trie._insert(s.terms, s.anum)
        return trie

    def _insert(self, terms: tuple[int, ...], anum: int) -> None:
        node = self.root
        i = 0
        n = len(terms)
        while i < n:
            edge = node.edges.get(terms[i])
            if edge is None:
                leaf = TrieNode()
                self.node_count += 1
                node.edges[terms[i]] = (terms[i:], leaf)
                node = leaf
                i = n
                break
            label, child = edge
            j = 0
            while j < len(label) and i + j < n and label[j] == terms[i + j]:
                j += 1
            if j < len(label):
                mid = TrieNode()
                self.node_count += 1
                mid.edges[label[j]] = (label[j:], child)
                node.edges[terms[i]] = (label[:j], mid)
                child = mid
            node = child
            i += j
        node.anums = tuple(sorted(node.anums + (anum,)))

    def match_stream(self, stream: Iterable[int]) -> set[int]:
        """Anums of every stored sequence the stream reproduces in full.

        Stops at the first mismatching term or when the stream ends.
        """
        found: set[int] = set()
        node = self.root
        it = iter(stream)
        for t in it:
            edge = node.edges.get(t)
            if edge is None:
                break
            label, child = edge
            complete = True
            for k in range(1, len(label)):
                t = next(it, None)
                if t is None or t != label[k]:
                    complete = False
                    break
            if not complete:
                break
            node = child
            if node.anums:
                found.update(node.anums)
        return found

    def with_prefix(self, prefix: Iterable[int]) -> list[int]:
        """All anums whose sequence starts with ``prefix``."""
        node = self.root
        prefix = list(prefix)
        i = 0
        while i < len(prefix):
            edge = node.edges.get(prefix[i])
            if edge is None:
                return []
            label, child = edge
            for k in range(len(label)):
                if i + k >= len(prefix):
                    break
                if label[k] != prefix[i + k]:
                    return []
            i += len(label)
            node = child
        out: list[int] = []
        todo = [node]
        while todo:
            nd = todo.pop()
            out.extend(nd.anums)
            todo.extend(child for _, child in nd.edges.values())
        return sorted(out)


def build_trie(seqs: Iterable[Sequence]) -> SeqTrie:
    return SeqTrie.build(seqs)


def match_stream(trie: SeqTrie, stream: Iterable[int]) -> set[int]:
    return trie.match_stream(stream)


@dataclass(frozen=True)
class BFile:
    anum: int
    first_index: int
    values: tuple[int, ...]

    @property
    def pairs(self) -> Iterator[tuple[int, int]]:
        return ((self.first_index + k, v) for k, v in enumerate(self.values))


def load_bfile(path, anum: int | None = None) -> BFile:
    """Read ``<index> <value>`` lines; indices must be consecutive."""
    path = Path(path)
    if anum is None:
        m = re.search(r"[Ab]0*(\d+)", path.name)
        if m is None:
            raise CorpusFormatError(f"cannot infer A-number from {path.name}")
        anum = int(m.group(1))
    first = None
    values: list[int] = []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise CorpusFormatError(f"{path}:{lineno}: expected '<index> <value>'")
            try:
                idx, val = int(parts[0]), int(parts[1])
            except ValueError:
                raise CorpusFormatError(f"{path}:{lineno}: not an integer pair") from None
            if first is None:
                first = idx
            elif idx != first + len(values):
                raise CorpusFormatError(
                    f"{path}:{lineno}: index {idx} breaks the run starting at {first}")
            values.append(val)
    if first is None:
        raise CorpusFormatError(f"{path}: empty b-file")
    return BFile(anum, first, tuple(values))


def dump_bfile(b: BFile, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for idx, val in b.pairs:
            fh.write(f"{idx} {val}\n")


def bfile_path(directory, anum: int) -> Path | None:
    directory = Path(directory)
    for name in (f"b{anum:06d}.txt", f"b{anum:06d}.txt.gz"):
        p = directory / name
        if p.exists():
            return p
    return None


def has_extension(s: Sequence, b: BFile, extra: int, max_abs: int = MAX_ABS) -> bool:
    """Whether ``b`` holds ``extra`` more terms than ``s``, all within the cap."""
    ext = b.values[len(s.terms):len(s.terms) + extra]
    return len(ext) == extra and all(abs(v) <= max_abs for v in ext)


def verify_extension(p: Program, s: Sequence, b: BFile, extra: int,
                     budget: Budget = DEFAULT_BUDGET):
    """Check ``p`` on the ``extra`` b-file terms following the corpus terms.

    Terms are aligned by position: the first corpus term is ``p(0)``.
    Returns ``"verified"``, ``("mismatch", index)`` or ``"aborted"``.
    """
    n = len(s.terms)
    if len(b.values) < n + extra:
        raise ValueError(f"b-file for {s.name} has {len(b.values)} terms, "
                         f"need {n + extra}")
    run = SequenceRun(p, budget)
    want = b.values
    got = 0
    for i, v in enumerate(run.terms(n + extra)):
        if v != want[i]:
            return ("mismatch", i)
        got += 1
    if got < n + extra:
        return "aborted"
    return "verified"


def key_fraction_unique(seqs: list[Sequence], key) -> float:
    counts: dict = {}
    keys = [key(s.terms) for s in seqs]
    for k in keys:
        counts[k] = counts.get(k, 0) + 1
    if not keys:
        return 0.0
    return sum(1 for k in keys if counts[k] == 1) / len(keys)
