"""Generate -> test -> train loop with hindsight replay and smallest-solution selection."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import tnn
from .dsl import Program, compare, parse, to_text
from .interp import Budget, SequenceRun
from .oeis import SeqTrie, Sequence, build_trie, format_anum, load_stripped, parse_anum
from .search import run_search

log = logging.getLogger(__name__)

SELECTIONS = ("smallest", "random")


@dataclass
class GenConfig:
    targets_per_gen: int = 160
    searches_parallel: int = 16
    # search budget: abstract iterations, or wall-clock seconds when set
    search_iterations: int = 20000
    search_seconds: float | None = None
    noise_fraction: float = 0.5
    generations: int = 25
    seed: int = 0
    selection: str = "smallest"
    # interpreter budget
    budget_mode: str = "steps"
    initial_us: float = 50.0
    per_term_us: float = 50.0
    steps_per_microsecond: float = 200.0
    # policy training
    dim: int = 64
    epochs: int = 50
    lr: float = 0.01
    continue_training: bool = False
    corpus: str = ""
    outdir: str = "run"

    def __post_init__(self):
        if self.selection not in SELECTIONS:
            raise ValueError(f"selection must be one of {SELECTIONS}")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must lie in [0, 1]")
        for name in ("targets_per_gen", "searches_parallel", "dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.generations < 0 or self.epochs < 0:
            raise ValueError("generations and epochs must be non-negative")

    def budget(self) -> Budget:
        if self.budget_mode == "clock":
            return Budget.clock(self.initial_us, self.per_term_us)
        return Budget.steps(self.initial_us, self.per_term_us, self.steps_per_microsecond)

    @classmethod
    def from_file(cls, path) -> GenConfig:
        """Read ``key = value`` lines (``#`` starts a comment)."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _convert(types[key], val)
        if "SEQSYNTH_SEED" in os.environ:
            values["seed"] = int(os.environ["SEQSYNTH_SEED"])
        return cls(**values)

    def to_text(self) -> str:
        return "".join(f"{k} = {'' if v is None else v}\n"
                       for k, v in dataclasses.asdict(self).items())


def _convert(typ: str, val: str):
    if val == "" or val.lower() == "none":
        return None
    if typ.startswith("int"):
        return int(val)
    if typ.startswith("float"):
        return float(val)
    if typ.startswith("bool"):
        if val.lower() in ("1", "true", "yes", "on"):
            return True
        if val.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {val!r}")
    return val


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# --- solution database ------------------------------------------------------

@dataclass
class SolutionRecord:
    anum: int
    program: Program
    generation_found: int
    generation_improved: int

    @property
    def size(self) -> int:
        return self.program.size


class SolutionDB:
    """Smallest known program per A-number.

    On disk: one ``A<number> <size> <generation> <program>`` line per
    record, sorted by A-number; ``<generation>`` is when the stored
    program was found.
    """

    def __init__(self, records: Iterable[SolutionRecord] = ()):
        self.records: dict[int, SolutionRecord] = {r.anum: r for r in records}

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, anum: int) -> bool:
        return anum in self.records

    def __getitem__(self, anum: int) -> SolutionRecord:
        return self.records[anum]

    def copy(self) -> SolutionDB:
        return SolutionDB(dataclasses.replace(r) for r in self.records.values())

    def mean_size(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.size for r in self.records.values()) / len(self.records)

    def dumps(self) -> str:
        return "".join(f"{format_anum(a)} {r.size} {r.generation_improved} {to_text(r.program)}\n"
                       for a, r in sorted(self.records.items()))

    def save(self, path) -> None:
        _atomic_write(path, self.dumps())

    @classmethod
    def load(cls, path) -> SolutionDB:
        recs = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split(None, 3)
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'A<number> <size> <generation> <program>'")
            anum, sz, gen, text = parse_anum(parts[0]), int(parts[1]), int(parts[2]), parts[3]
            p = parse(text)
            if p.size != sz:
                raise ValueError(f"{path}:{lineno}: size field {sz} but program has size {p.size}")
            recs.append(SolutionRecord(anum, p, gen, gen))
        return cls(recs)


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# --- phases ----------------------------------------------------------------

@dataclass
class GenStats:
    generation: int
    new_solutions: int
    cumulative_solutions: int
    programs_generated: int
    programs_tested: int
    hindsight: int = 0

    CSV_HEADER = ("generation", "new", "cumulative", "generated", "tested", "hindsight")

    def row(self) -> tuple:
        return (self.generation, self.new_solutions, self.cumulative_solutions,
                self.programs_generated, self.programs_tested, self.hindsight)


def select_targets(corpus: list[Sequence], n: int, rng: random.Random) -> list[Sequence]:
    """``n`` uniform draws with replacement."""
    if n < 1:
        raise ValueError("need at least one target")
    return [corpus[rng.randrange(len(corpus))] for _ in range(n)]


def noise_flags(n: int, fraction: float) -> list[bool]:
    """Spread ``floor(n * fraction)`` noised searches evenly over ``n``."""
    return [int((i + 1) * fraction) > int(i * fraction) for i in range(n)]


_worker_model: tnn.PolicyModel | None = None


def _init_worker(model: tnn.PolicyModel) -> None:
    global _worker_model
    _worker_model = model


def _search_job(args) -> list[Program]:
    terms, iterations, seconds, noise, seed = args
    res = run_search(terms, _worker_model, iterations=iterations, seconds=seconds,
                     noise=noise, rng=random.Random(seed))
    return list(res.programs)


def generate_phase(model: tnn.PolicyModel, targets: list[Sequence], cfg: GenConfig,
                   generation: int = 0) -> dict[Program, None]:
    """Union (in a deterministic order) of the programs of one search per target."""
    flags = noise_flags(len(targets), cfg.noise_fraction)
    jobs = [(t.terms, None if cfg.search_seconds else cfg.search_iterations,
             cfg.search_seconds, flags[i], derive_seed(cfg.seed, generation, 1, i))
            for i, t in enumerate(targets)]
    programs: dict[Program, None] = {}
    if cfg.searches_parallel <= 1 or len(jobs) <= 1:
        _init_worker(model)
        results = []
        for job in jobs:
            try:
                results.append(_search_job(job))
            except Exception:
                log.exception("search on target %d failed", jobs.index(job))
                results.append([])
    else:
        with ProcessPoolExecutor(cfg.searches_parallel, initializer=_init_worker,
                                 initargs=(model,)) as pool:
            futures = [pool.submit(_search_job, job) for job in jobs]
            results = []
            for i, fut in enumerate(futures):
                try:
                    results.append(fut.result())
                except Exception:
                    log.exception("search on target %d failed", i)
                    results.append([])
    for progs in results:
        programs.update(dict.fromkeys(progs))
    return programs


def test_phase(programs: Iterable[Program], trie: SeqTrie, db: SolutionDB, budget: Budget,
               generation: int = 0, selection: str = "smallest",
               rng: random.Random | None = None, targets: Iterable[int] = ()):
    """Evaluate closed programs against the corpus and update the database.

    Returns ``(new_db, stats)``; ``stats.hindsight`` counts new solutions for
    sequences that were not targeted in this generation.
    """
    if selection not in SELECTIONS:
        raise ValueError(f"unknown selection {selection!r}")
    rng = rng or random.Random(0)
    db = db.copy()
    before = set(db.records)
    generated = tested = 0
    # reservoir per anum for random selection: [count, chosen program]
    pool: dict[int, list] = {}
    for p in programs:
        generated += 1
        if p.free_y:
            continue
        tested += 1
        covered = trie.match_stream(SequenceRun(p, budget).terms())
        for anum in covered:
            if selection == "random":
                slot = pool.get(anum)
                if slot is None:
                    pool[anum] = [1, p]
                else:
                    slot[0] += 1
                    if rng.randrange(slot[0]) == 0:
                        slot[1] = p
                continue
            rec = db.records.get(anum)
            if rec is None:
                db.records[anum] = SolutionRecord(anum, p, generation, generation)
            elif compare(p, rec.program) < 0:
                rec.program = p
                rec.generation_improved = generation
    for anum, (_, p) in sorted(pool.items()):
        rec = db.records.get(anum)
        if rec is None:
            db.records[anum] = SolutionRecord(anum, p, generation, generation)
        elif rec.program != p:
            rec.program = p
            rec.generation_improved = generation
    new = set(db.records) - before
    targeted = set(targets)
    stats = GenStats(generation, len(new), len(db), generated, tested,
                     hindsight=len(new - targeted))
    return db, stats


def training_pairs(db: SolutionDB, corpus: dict[int, Sequence]) -> list[tuple]:
    return [(corpus[a].terms, r.program) for a, r in sorted(db.records.items())]


def train_phase(db: SolutionDB, corpus: dict[int, Sequence], cfg: GenConfig,
                generation: int = 0, start: tnn.PolicyModel | None = None) -> tnn.PolicyModel:
    """Train a policy on every (sequence, smallest solution) pair.

    A fresh model is initialised unless ``start`` is given.
    """
    if not len(db):
        raise ValueError("cannot train on an empty solution database")
    model = start or tnn.init_model(cfg.dim, derive_seed(cfg.seed, generation, 2))
    return tnn.train(model, training_pairs(db, corpus), epochs=cfg.epochs, lr=cfg.lr,
                     rng=random.Random(derive_seed(cfg.seed, generation, 3)))


# --- driver -----------------------------------------------------------------

class Run:
    """Persistent self-learning run rooted at ``cfg.outdir``.

    Files: ``solutions.txt`` (database), ``stats.csv``, ``model.tnn`` (the
    policy used by the last completed generation) and ``state.json``.
    """

    def __init__(self, cfg: GenConfig, corpus: list[Sequence]):
        self.cfg = cfg
        self.corpus = corpus
        self.by_anum = {s.anum: s for s in corpus}
        self.trie = build_trie(corpus)
        self.dir = Path(cfg.outdir)
        self.db = SolutionDB()
        self.stats: list[GenStats] = []
        self.next_generation = 0
        self.model: tnn.PolicyModel | None = None
        self._resume()

    @property
    def paths(self) -> dict[str, Path]:
        return {k: self.dir / v for k, v in (("db", "solutions.txt"), ("stats", "stats.csv"),
                                             ("model", "model.tnn"), ("state", "state.json"))}

    def _resume(self) -> None:
        state = self.paths["state"]
        if not state.exists():
            return
        info = json.loads(state.read_text())
        self.next_generation = info["next_generation"]
        self.db = SolutionDB.load(self.paths["db"])
        for a, g in info.get("found", {}).items():
            if int(a) in self.db:
                self.db[int(a)].generation_found = g
        self.stats = read_stats(self.paths["stats"])[:self.next_generation]
        if self.cfg.continue_training and self.paths["model"].exists():
            self.model = tnn.load(self.paths["model"], self.cfg.dim)
        log.info("resuming at generation %d", self.next_generation)

    def _persist(self, model: tnn.PolicyModel) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        self.db.save(self.paths["db"])
        write_stats(self.stats, self.paths["stats"])
        tnn.save(model, self.paths["model"])
        state = {"next_generation": self.next_generation,
                 "found": {str(a): r.generation_found for a, r in sorted(self.db.records.items())}}
        _atomic_write(self.paths["state"], json.dumps(state))

    def step(self) -> GenStats:
        cfg = self.cfg
        g = self.next_generation
        t0 = time.perf_counter()
        if g == 0:
            model = tnn.init_model(cfg.dim, derive_seed(cfg.seed, 0, 2))
        else:
            start = self.model.copy() if (cfg.continue_training and self.model) else None
            model = train_phase(self.db, self.by_anum, cfg, g, start)
        t1 = time.perf_counter()
        targets = select_targets(self.corpus, cfg.targets_per_gen,
                                 random.Random(derive_seed(cfg.seed, g, 0)))
        programs = generate_phase(model, targets, cfg, g)
        t2 = time.perf_counter()
        self.db, stats = test_phase(programs, self.trie, self.db, cfg.budget(), g,
                                    cfg.selection, random.Random(derive_seed(cfg.seed, g, 4)),
                                    targets=[t.anum for t in targets])
        t3 = time.perf_counter()
        log.info("gen %d: %d new, %d total, %d programs (%d tested), %d hindsight; "
                 "train %.1fs search %.1fs test %.1fs", g, stats.new_solutions,
                 stats.cumulative_solutions, stats.programs_generated, stats.programs_tested,
                 stats.hindsight, t1 - t0, t2 - t1, t3 - t2)
        self.stats.append(stats)
        self.model = model
        self.next_generation = g + 1
        self._persist(model)
        return stats

    def run(self, generations: int | None = None) -> list[GenStats]:
        """Run up to generation ``cfg.generations`` (inclusive of generation 0)."""
        last = self.cfg.generations if generations is None else generations
        if last == 0 and self.next_generation == 0:
            return []
        while self.next_generation <= last:
            self.step()
        return self.stats


def run(cfg: GenConfig, corpus: list[Sequence] | None = None) -> list[GenStats]:
    if corpus is None:
        corpus = load_stripped(cfg.corpus)
    return Run(cfg, corpus).run()


def write_stats(stats: list[GenStats], path) -> None:
    import io
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GenStats.CSV_HEADER)
    for s in stats:
        w.writerow(s.row())
    _atomic_write(path, buf.getvalue())


def read_stats(path) -> list[GenStats]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [GenStats(*map(int, r)) for r in rows[1:]]
