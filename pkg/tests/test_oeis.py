import gzip
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import FACTORIAL
from seqsynth.dsl import parse
from seqsynth.oeis import (BFile, CorpusFormatError, Sequence, bfile_path, build_trie,
                           dump_bfile, dump_stripped, format_anum, has_extension,
                           key_fraction_unique, load_bfile, load_stripped, parse_anum,
                           verify_extension)

STRIPPED = """# OEIS stripped file
A000001 ,0,1,1,1,2,1,2,1,5,2,2,1,5,1,2,1,14,
A000045 ,0,1,1,2,3,5,8,13,21,34,
A000142 ,1,1,2,6,24,120,720,5040,
this line is broken
A000004 ,0,0,0,0,0,0,
A999999 ,-3,-2,-1,
A000005 ,1,2,2,3,2,4,2,4,3,4
"""


@pytest.fixture
def stripped(tmp_path):
    path = tmp_path / "stripped"
    path.write_text(STRIPPED)
    return path


def test_load_stripped(stripped):
    stats = {}
    seqs = load_stripped(stripped, stats)
    assert [s.anum for s in seqs] == [1, 45, 142, 4, 999999]
    assert seqs[1].terms == (0, 1, 1, 2, 3, 5, 8, 13, 21, 34)
    assert seqs[4].terms == (-3, -2, -1)
    assert stats["malformed"] == 2


def test_load_gzip(tmp_path, stripped):
    gz = tmp_path / "stripped.gz"
    gz.write_bytes(gzip.compress(stripped.read_bytes()))
    assert load_stripped(gz) == load_stripped(stripped)


def test_dump_round_trip(tmp_path, stripped):
    seqs = load_stripped(stripped)
    out = tmp_path / "again"
    dump_stripped(seqs, out)
    assert load_stripped(out) == seqs


def test_anum_format():
    assert format_anum(45) == "A000045"
    assert parse_anum("A000045") == 45 == parse_anum("45")
    with pytest.raises(ValueError):
        parse_anum("B12")


def test_trie_matches_complete_sequences(stripped):
    trie = build_trie(load_stripped(stripped))
    fact = [1, 1, 2, 6, 24, 120, 720, 5040, 40320]
    assert trie.match_stream(iter(fact)) == {142}
    # stopping early matches nothing
    assert trie.match_stream(iter(fact[:5])) == set()
    assert trie.match_stream(iter([0, 0, 0, 0, 0, 0])) == {4}
    assert trie.match_stream(iter([0, 1, 1, 2, 3, 5, 8, 13, 21, 34, 55])) == {45}
    assert trie.match_stream(iter([7])) == set()


def test_trie_nested_prefixes():
    seqs = [Sequence(1, (1, 2)), Sequence(2, (1, 2, 3)), Sequence(3, (1, 2, 3, 4)),
            Sequence(4, (1, 5)), Sequence(5, (1, 2))]
    trie = build_trie(seqs)
    assert trie.match_stream([1, 2, 3, 4, 5]) == {1, 2, 3, 5}
    assert trie.match_stream([1, 2, 3, 9]) == {1, 2, 5}
    assert trie.with_prefix([1, 2]) == [1, 2, 3, 5]
    assert trie.with_prefix([1]) == [1, 2, 3, 4, 5]
    assert trie.with_prefix([1, 2, 3, 4, 5]) == []
    assert trie.with_prefix([]) == [1, 2, 3, 4, 5]


def test_trie_consumes_lazily():
    """Matching must stop pulling terms after the first mismatch."""
    trie = build_trie([Sequence(1, (0, 1, 2))])
    pulled = []

    def stream():
        for v in [0, 9, 2, 3]:
            pulled.append(v)
            yield v
    assert trie.match_stream(stream()) == set()
    assert pulled == [0, 9]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.integers(-3, 3), min_size=1, max_size=6), min_size=1, max_size=30),
       st.lists(st.integers(-3, 3), max_size=8))
def test_trie_agrees_with_brute_force(lists, stream):
    seqs = [Sequence(i, tuple(t)) for i, t in enumerate(lists)]
    trie = build_trie(seqs)
    want = {s.anum for s in seqs if tuple(stream[:len(s.terms)]) == s.terms}
    assert trie.match_stream(stream) == want
    prefix = stream[:2]
    assert trie.with_prefix(prefix) == sorted(
        s.anum for s in seqs if s.terms[:len(prefix)] == tuple(prefix))


def test_trie_is_compressed():
    trie = build_trie([Sequence(1, tuple(range(50)))])
    assert trie.node_count == 2


def test_bfile_round_trip(tmp_path):
    b = BFile(142, 0, (1, 1, 2, 6, 24))
    path = tmp_path / "b000142.txt"
    dump_bfile(b, path)
    assert load_bfile(path) == b
    assert bfile_path(tmp_path, 142) == path
    assert bfile_path(tmp_path, 143) is None


def test_bfile_comments_and_gap(tmp_path):
    path = tmp_path / "b000007.txt"
    path.write_text("# comment\n1 5\n2 6\n\n3 7\n")
    assert load_bfile(path) == BFile(7, 1, (5, 6, 7))
    path.write_text("1 5\n3 7\n")
    with pytest.raises(CorpusFormatError):
        load_bfile(path)
    path.write_text("")
    with pytest.raises(CorpusFormatError):
        load_bfile(path)


def test_verify_extension():
    import math
    fact = [math.factorial(i) for i in range(30)]
    s = Sequence(142, tuple(fact[:10]))
    b = BFile(142, 0, tuple(fact))
    assert has_extension(s, b, 20)
    assert not has_extension(s, b, 21)
    assert verify_extension(parse(FACTORIAL), s, b, 20) == "verified"
    # matches the known terms, diverges later
    wrong = parse("cond(sub(x,mul(add(1,2),add(1,2))),loop(mul(x,y),x,1),0)")
    assert verify_extension(wrong, s, b, 20) == ("mismatch", 10)
    assert verify_extension(parse("loop(mul(x,x),x,2)"), Sequence(1, (2, 4, 16)),
                            BFile(1, 0, tuple(2 ** 2 ** i for i in range(14))), 11) == "aborted"
    with pytest.raises(ValueError):
        verify_extension(parse(FACTORIAL), s, b, 21)


def test_key_fraction():
    seqs = [Sequence(1, (1, 2)), Sequence(2, (1, 2)), Sequence(3, (1, 3)), Sequence(4, (5,))]
    assert key_fraction_unique(seqs, tuple) == 0.5
