"""Command-line interface: ``seqsynth <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import pickle
import random
import sys
from pathlib import Path

from . import tnn
from .dsl import ParseError, parse, to_text
from .interp import Budget, SequenceRun
from .oeis import (bfile_path, build_trie, format_anum, has_extension, load_bfile,
                   load_stripped, parse_anum, verify_extension)
from .search import run_search
from .selflearn import GenConfig, Run, SolutionDB, read_stats

log = logging.getLogger("seqsynth")

DEFAULT_WORKDIR = "seqsynth-data"


class CommandError(Exception):
    pass


def _corpus_cache(workdir) -> Path:
    return Path(workdir) / "corpus.pkl"


def _load_ingested(workdir):
    path = _corpus_cache(workdir)
    if not path.exists():
        raise CommandError(f"no ingested corpus in {workdir}; run 'seqsynth ingest' first")
    with open(path, "rb") as fh:
        return pickle.load(fh)


def _seed(default: int) -> int:
    return int(os.environ.get("SEQSYNTH_SEED", default))


def cmd_ingest(args) -> int:
    if not Path(args.stripped).exists():
        raise CommandError(f"missing file {args.stripped}")
    info: dict = {}
    seqs = load_stripped(args.stripped, info)
    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    meta = {"stripped": str(Path(args.stripped).resolve()), "bfiles": None}
    if args.bfiles:
        if not Path(args.bfiles).is_dir():
            raise CommandError(f"missing directory {args.bfiles}")
        meta["bfiles"] = str(Path(args.bfiles).resolve())
    with open(_corpus_cache(workdir), "wb") as fh:
        pickle.dump({"sequences": seqs, "meta": meta}, fh, protocol=pickle.HIGHEST_PROTOCOL)
    from .oeis import key_fraction_unique
    frac = key_fraction_unique(seqs, tnn.sequence_key)
    print(f"sequences {len(seqs)}")
    print(f"malformed {info['malformed']}")
    print(f"unique_key_fraction {frac:.4f}")
    return 0


def cmd_eval(args) -> int:
    try:
        p = parse(args.program)
    except ParseError as exc:
        raise CommandError(f"parse error: {exc}") from None
    if p.free_y:
        raise CommandError("error: free y (program is not a sequence)")
    budget = Budget.steps() if args.budget_us is None else \
        Budget.steps(args.budget_us, args.budget_us)
    run = SequenceRun(p, budget)
    for v in run.terms(args.terms):
        print(v)
    if run.aborted is not None:
        print(f"aborted: {run.aborted.value}", file=sys.stderr)
        return 2
    return 0


def _parse_terms(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(" ", "").strip(",").split(",") if t]
    except ValueError:
        raise CommandError(f"cannot parse terms {text!r}") from None


def cmd_match(args) -> int:
    terms = _parse_terms(args.terms)
    data = _load_ingested(args.workdir)
    trie = build_trie(data["sequences"])
    db = SolutionDB.load(args.db) if args.db and Path(args.db).exists() else SolutionDB()
    for anum in trie.with_prefix(terms):
        rec = db.records.get(anum)
        print(format_anum(anum) + ("" if rec is None else " " + to_text(rec.program)))
    return 0


def cmd_search(args) -> int:
    data = _load_ingested(args.workdir)
    by_anum = {s.anum: s for s in data["sequences"]}
    anum = parse_anum(args.anum)
    if anum not in by_anum:
        raise CommandError(f"{format_anum(anum)} is not in the ingested corpus")
    target = by_anum[anum]
    model = tnn.load(args.model) if args.model else tnn.init_model(args.dim, _seed(args.seed))
    res = run_search(target, model, iterations=args.budget, noise=args.noise,
                     rng=random.Random(_seed(args.seed)))
    trie = build_trie(data["sequences"])
    best: dict[int, object] = {}
    budget = Budget.steps()
    for p in res.programs:
        if p.free_y:
            continue
        for a in trie.match_stream(SequenceRun(p, budget).terms()):
            if a not in best or (p.size, to_text(p)) < (best[a].size, to_text(best[a])):
                best[a] = p
    print(f"iterations {res.iterations} programs {len(res.programs)} solved {len(best)}")
    if anum in best:
        print(f"target {format_anum(anum)} {to_text(best[anum])}")
    else:
        print(f"target {format_anum(anum)} unsolved")
    for a in sorted(best):
        if a != anum:
            print(f"{format_anum(a)} {to_text(best[a])}")
    return 0


def cmd_selflearn(args) -> int:
    if not Path(args.config).exists():
        raise CommandError(f"missing config {args.config}")
    cfg = GenConfig.from_file(args.config)
    if not cfg.corpus or not Path(cfg.corpus).exists():
        raise CommandError(f"missing corpus {cfg.corpus!r}")
    stats = Run(cfg, load_stripped(cfg.corpus)).run()
    for s in stats:
        print(",".join(map(str, s.row())))
    return 0


def cmd_verify(args) -> int:
    data = _load_ingested(args.workdir)
    bdir = args.bfiles or data["meta"].get("bfiles")
    if not bdir or not Path(bdir).is_dir():
        raise CommandError("no b-file directory (pass --bfiles or ingest with --bfiles)")
    if not Path(args.db).exists():
        raise CommandError(f"missing database {args.db}")
    by_anum = {s.anum: s for s in data["sequences"]}
    db = SolutionDB.load(args.db)
    checked = passed = 0
    for anum, rec in sorted(db.records.items()):
        path = bfile_path(bdir, anum)
        if path is None or anum not in by_anum:
            continue
        b = load_bfile(path, anum)
        if not has_extension(by_anum[anum], b, args.extra):
            continue
        checked += 1
        result = verify_extension(rec.program, by_anum[anum], b, args.extra)
        passed += result == "verified"
        if args.verbose:
            print(format_anum(anum), result)
    frac = passed / checked if checked else 0.0
    print(f"checked {checked} verified {passed} fraction {frac:.4f}")
    return 0


def cmd_export(args) -> int:
    if not Path(args.db).exists():
        raise CommandError(f"missing database {args.db}")
    db = SolutionDB.load(args.db)
    db.save(args.out)
    print(f"exported {len(db)} solutions to {args.out}")
    return 0


def cmd_stats(args) -> int:
    rundir = Path(args.run)
    path = rundir / "stats.csv"
    if not path.exists():
        raise CommandError(f"missing {path}")
    print(path.read_text(), end="")
    db_path = rundir / "solutions.txt"
    if db_path.exists():
        db = SolutionDB.load(db_path)
        print(f"# solutions {len(db)} mean_size {db.mean_size():.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seqsynth", description="Program synthesis for integer sequences")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a stripped file into the work directory")
    p.add_argument("--stripped", required=True)
    p.add_argument("--bfiles")
    p.add_argument("--workdir", default=DEFAULT_WORKDIR)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("eval", help="print the first terms generated by a program")
    p.add_argument("--program", required=True)
    p.add_argument("--terms", type=int, default=20)
    p.add_argument("--budget-us", type=float, dest="budget_us",
                   help="initial and per-term allowance in microsecond equivalents")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("match", help="list sequences starting with the given terms")
    p.add_argument("--terms", required=True)
    p.add_argument("--db")
    p.add_argument("--workdir", default=DEFAULT_WORKDIR)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("search", help="run one policy-guided search")
    p.add_argument("--anum", required=True)
    p.add_argument("--budget", type=int, default=10000, help="search iterations")
    p.add_argument("--model")
    p.add_argument("--dim", type=int, default=tnn.DEFAULT_DIM)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", action="store_true")
    p.add_argument("--workdir", default=DEFAULT_WORKDIR)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("selflearn", help="run the self-learning loop")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_selflearn)

    p = sub.add_parser("verify", help="check solutions on extra b-file terms")
    p.add_argument("--extra", type=int, default=100)
    p.add_argument("--db", required=True)
    p.add_argument("--bfiles")
    p.add_argument("--workdir", default=DEFAULT_WORKDIR)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export", help="write a normalised copy of a solution database")
    p.add_argument("--db", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("stats", help="print per-generation statistics of a run")
    p.add_argument("--run", required=True, help="run output directory")
    p.set_defaults(func=cmd_stats)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CommandError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
