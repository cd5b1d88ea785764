"""OEIS-like surrogate corpus for offline experiments.

Sequences come from ordinary Python formulas (polynomials, recurrences,
number-theoretic functions, periodic patterns, combinations of those) plus a
share of irregular noise sequences nothing small can generate.  Term counts
follow the stripped-file convention of cutting a line at roughly 260
characters, so fast-growing sequences are short.

Usage::

    python -m seqsynth.synthetic --count 20000 --out corpus.txt --bfiles bdir
"""
from __future__ import annotations

import argparse
import math
import random
from functools import lru_cache
from pathlib import Path

from .oeis import BFile, Sequence, dump_bfile, dump_stripped

LINE_CHARS = 260
MIN_TERMS = 4
EXTRA_TERMS = 100


@lru_cache(maxsize=None)
def _primes(limit: int = 20000) -> tuple[int, ...]:
    sieve = bytearray([1]) * (limit + 1)
    sieve[0:2] = b"\x00\x00"
    for i in range(2, int(limit ** 0.5) + 1):
        if sieve[i]:
            sieve[i * i::i] = bytearray(len(sieve[i * i::i]))
    return tuple(i for i, v in enumerate(sieve) if v)


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    i = 2
    while i * i <= n:
        if n % i == 0:
            return False
        i += 1
    return True


def _divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0] if n > 0 else []


def _phi(n: int) -> int:
    return sum(1 for k in range(1, n + 1) if math.gcd(n, k) == 1) if n > 0 else 0


def _digit_sum(n: int, base: int) -> int:
    n = abs(n)
    s = 0
    while n:
        s += n % base
        n //= base
    return s


def _linrec(coeffs, init):
    vals = list(init)

    def f(n):
        while len(vals) <= n:
            vals.append(sum(c * vals[-1 - i] for i, c in enumerate(coeffs)))
        return vals[n]
    return f


def _partial_sums(g):
    cache = [0]

    def f(n):
        while len(cache) <= n + 1:
            cache.append(cache[-1] + g(len(cache) - 1))
        return cache[n + 1]
    return f


def _family(rng: random.Random):
    """A random generator ``n -> int`` (n >= 0) and a signature naming it."""
    kind = rng.choices(
        ["linear", "poly", "power", "geometric", "factorial", "binomial", "linrec",
         "periodic", "modfloor", "numtheory", "psum", "combo", "cond"],
        weights=[10, 10, 6, 8, 4, 5, 10, 8, 8, 10, 5, 8, 4])[0]
    r = rng.randint
    if kind == "linear":
        a, b = r(-4, 12), r(-5, 12)
        return (lambda n: a * n + b), (kind, a, b)
    if kind == "poly":
        cs = [r(-3, 4) for _ in range(r(3, 4))]
        if cs[-1] == 0:
            cs[-1] = 1
        return (lambda n: sum(c * n ** i for i, c in enumerate(cs))), (kind, *cs)
    if kind == "power":
        k, c, s = r(2, 6), r(1, 4), r(-2, 2)
        return (lambda n: c * n ** k + s), (kind, k, c, s)
    if kind == "geometric":
        b, c, s = r(2, 10), r(1, 3), r(-2, 2)
        return (lambda n: c * b ** n + s), (kind, b, c, s)
    if kind == "factorial":
        k = r(0, 3)
        fns = [math.factorial,
               lambda n: math.factorial(2 * n) // math.factorial(n),
               lambda n: math.prod(range(n % 2 or 2, n + 1, 2)) if n > 1 else 1,
               lambda n: n * math.factorial(n)]
        return fns[k], (kind, k)
    if kind == "binomial":
        k = r(0, 4)
        fns = [lambda n: math.comb(2 * n, n),
               lambda n: math.comb(2 * n, n) // (n + 1),
               lambda n: math.comb(n + 2, 2),
               lambda n: math.comb(n + 3, 3),
               lambda n: math.comb(2 * n + 1, n)]
        return fns[k], (kind, k)
    if kind == "linrec":
        order = rng.choice([1, 2, 2, 2, 3])
        coeffs = [r(-2, 3) for _ in range(order)]
        if all(c == 0 for c in coeffs):
            coeffs[0] = 1
        init = [r(-1, 3) for _ in range(order)]
        return _linrec(coeffs, init), (kind, tuple(coeffs), tuple(init))
    if kind == "periodic":
        pat = [r(0, 5) for _ in range(r(2, 6))]
        return (lambda n: pat[n % len(pat)]), (kind, *pat)
    if kind == "modfloor":
        k, j = r(2, 9), rng.choice([0, 1, 2])
        fns = [lambda n: n % k, lambda n: n // k, lambda n: n * n // k]
        return fns[j], (kind, k, j)
    if kind == "numtheory":
        primes = _primes()
        j = r(0, 9)
        fns = [lambda n: primes[n],
               lambda n: len(_divisors(n + 1)),
               lambda n: sum(_divisors(n + 1)),
               lambda n: _phi(n + 1),
               lambda n: int(_is_prime(n)),
               lambda n: _digit_sum(n, 2),
               lambda n: _digit_sum(n, 10),
               lambda n: math.gcd(n, 6),
               lambda n: primes[n] * primes[n],
               lambda n: int(math.isqrt(n) ** 2 == n)]
        return fns[j], (kind, j)
    if kind == "psum":
        inner, sig = _family(rng)
        return _partial_sums(inner), (kind, sig)
    if kind == "combo":
        f, sf = _family(rng)
        g, sg = _family(rng)
        op = rng.choice(["+", "*", "-"])
        if op == "+":
            return (lambda n: f(n) + g(n)), (kind, op, sf, sg)
        if op == "*":
            return (lambda n: f(n) * g(n)), (kind, op, sf, sg)
        return (lambda n: f(n) - g(n)), (kind, op, sf, sg)
    f, sf = _family(rng)
    g, sg = _family(rng)
    k = r(1, 2)
    return (lambda n: f(n) if n % (k + 1) == 0 else g(n)), (kind, k, sf, sg)


def _noise(rng: random.Random):
    style = rng.randrange(3)
    if style == 0:
        hi = rng.choice([10, 100, 1000, 10 ** 6])
        vals: dict[int, int] = {}
        return lambda n: vals.setdefault(n, rng.randint(0, hi))
    if style == 1:
        walk = [rng.randint(-5, 5)]

        def f(n):
            while len(walk) <= n:
                walk.append(walk[-1] + rng.randint(-3, 3))
            return walk[n]
        return f
    base = [rng.randint(1, 9)]

    def g(n):
        while len(base) <= n:
            base.append(base[-1] * rng.randint(1, 3) + rng.randint(0, 5))
        return base[n]
    return g


def _take(f, shift: int, n_max: int):
    """Terms until the stripped line would pass ``LINE_CHARS`` characters."""
    out = []
    chars = 0
    for n in range(n_max):
        v = f(n + shift)
        chars += len(str(v)) + 1
        if chars > LINE_CHARS and len(out) >= MIN_TERMS:
            break
        out.append(v)
    return out


def generate(count: int, seed: int = 0, noise_share: float = 0.2,
             extra: int = EXTRA_TERMS) -> tuple[list[Sequence], dict[int, BFile]]:
    """``count`` distinct sequences with random A-numbers, and their b-files."""
    rng = random.Random(seed)
    pool = iter(rng.sample(range(1, 1000000), min(999999, 20 * count)))
    seqs: list[Sequence] = []
    bfiles: dict[int, BFile] = {}
    formulas: set = set()
    lists: set[tuple[int, ...]] = set()
    while len(seqs) < count:
        anum = next(pool)
        shift = rng.choice([0, 0, 0, 1, 1, 2])
        n_max = rng.choice([10, 20, 30, 40, 50, 60, 80])
        if rng.random() < noise_share:
            f, sig = _noise(rng), None
        else:
            f, sig = _family(rng)
            # one entry per formula, as the real encyclopedia rejects duplicates
            if (sig, shift) in formulas:
                continue
        try:
            terms = tuple(_take(f, shift, n_max))
        except (ZeroDivisionError, IndexError, ValueError):
            continue
        if terms in lists:
            continue
        lists.add(terms)
        seqs.append(Sequence(anum, terms))
        if sig is None:
            continue
        formulas.add((sig, shift))
        try:
            ext = [f(n + shift) for n in range(len(terms) + extra)]
        except (ZeroDivisionError, IndexError, ValueError, OverflowError):
            continue
        bfiles[anum] = BFile(anum, shift, tuple(ext))
    return seqs, bfiles


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--count", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True)
    ap.add_argument("--bfiles", help="directory for b-files")
    args = ap.parse_args(argv)
    seqs, bfiles = generate(args.count, args.seed)
    dump_stripped(sorted(seqs, key=lambda s: s.anum), args.out)
    if args.bfiles:
        d = Path(args.bfiles)
        d.mkdir(parents=True, exist_ok=True)
        for anum, b in bfiles.items():
            dump_bfile(b, d / f"b{anum:06d}.txt")


if __name__ == "__main__":
    main()
