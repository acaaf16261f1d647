"""Triple store: ingestion, dense-id vocabularies, array indexes, and splits."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .util import expand_ranges, isin_sorted, pack_pairs

log = logging.getLogger(__name__)

DOMAINS = ("Gene", "Chemical", "Disease")
DOMAIN_INITIAL = {"Gene": "G", "Chemical": "C", "Disease": "D"}


class KGError(Exception):
    """Base class for knowledge-graph errors."""


class ParseError(KGError):
    pass


class EmptyDataset(KGError):
    pass


class MissingDomain(KGError):
    pass


class UnknownRelation(KGError):
    pass


class SplitError(KGError):
    pass


@dataclass(frozen=True)
class Triple:
    head: int
    relation: int
    tail: int


class KnowledgeGraph:
    """Immutable, indexed set of (head, relation, tail) facts with dense ids.

    Construction is single-threaded; afterwards the graph is read-only and
    safe for concurrent readers. Index caches are idempotent, so lazy builds
    under the GIL do not break that contract.
    """

    def __init__(self, triple_array, entity_names, relation_names, entity_domains=None):
        arr = np.asarray(triple_array, dtype=np.int64).reshape(-1, 3)
        self.entity_names = list(entity_names)
        self.relation_names = list(relation_names)
        self.entity_ids = {n: i for i, n in enumerate(self.entity_names)}
        self.relation_ids = {n: i for i, n in enumerate(self.relation_names)}
        if len(self.entity_ids) != len(self.entity_names):
            raise KGError("entity names are not unique")
        if len(self.relation_ids) != len(self.relation_names):
            raise KGError("relation names are not unique")
        self.entity_domains = None
        if entity_domains is not None:
            self.entity_domains = list(entity_domains)
            if len(self.entity_domains) != len(self.entity_names):
                raise KGError("one domain tag per entity required")
            bad = [d for d in self.entity_domains if d not in DOMAINS]
            if bad:
                raise KGError(f"unknown domain tags: {sorted(set(bad))[:5]}")
        if arr.size:
            if arr.min() < 0 or arr[:, [0, 2]].max() >= len(self.entity_names):
                raise KGError("triple references entity id outside vocabulary")
            if arr[:, 1].max() >= len(self.relation_names):
                raise KGError("triple references relation id outside vocabulary")
        self._arr = arr
        self._arr.setflags(write=False)

        # Eager: sorted full-triple keys for O(log n) membership, per-relation slices.
        ne, nr = len(self.entity_names), len(self.relation_names)
        self._triple_keys = np.sort(
            pack_pairs(pack_pairs(arr[:, 0], arr[:, 1], nr), arr[:, 2], ne)
        )
        if np.any(self._triple_keys[1:] == self._triple_keys[:-1]):
            raise KGError("duplicate triples in graph")
        order = np.argsort(arr[:, 1], kind="stable")
        self._by_rel_order = order
        counts = np.bincount(arr[:, 1], minlength=nr)
        self._rel_offsets = np.concatenate([[0], np.cumsum(counts)])

        # Lazy caches, keyed by relation id.
        self._csr_cache = {}
        self._pair_key_cache = {}
        self._unique_cache = {}
        self._ht_index = None
        self._triples_list = None

    # -- vocabulary ---------------------------------------------------------

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    def __len__(self) -> int:
        return self._arr.shape[0]

    @property
    def triple_array(self) -> np.ndarray:
        """All triples as an [m, 3] int array (head, relation, tail)."""
        return self._arr

    @property
    def triples(self) -> list[Triple]:
        if self._triples_list is None:
            self._triples_list = [Triple(int(h), int(r), int(t)) for h, r, t in self._arr]
        return self._triples_list

    def entity_domain(self, e: int) -> str | None:
        return None if self.entity_domains is None else self.entity_domains[e]

    def _check_relation(self, r: int):
        if not 0 <= r < self.n_relations:
            raise UnknownRelation(f"relation id {r} out of range")

    # -- indexes ------------------------------------------------------------

    def has(self, h: int, r: int, t: int) -> bool:
        key = (np.int64(h) * self.n_relations + r) * self.n_entities + t
        return bool(isin_sorted(np.asarray([key]), self._triple_keys)[0])

    def relation_pairs(self, r: int):
        """(heads, tails) arrays of relation r, in ingestion order."""
        self._check_relation(r)
        idx = self._by_rel_order[self._rel_offsets[r] : self._rel_offsets[r + 1]]
        idx = np.sort(idx)
        return self._arr[idx, 0], self._arr[idx, 2]

    def relation_count(self, r: int) -> int:
        self._check_relation(r)
        return int(self._rel_offsets[r + 1] - self._rel_offsets[r])

    def pair_keys(self, r: int) -> np.ndarray:
        """Sorted unique packed (head, tail) keys of relation r."""
        if r not in self._pair_key_cache:
            h, t = self.relation_pairs(r)
            self._pair_key_cache[r] = np.unique(pack_pairs(h, t, self.n_entities))
        return self._pair_key_cache[r]

    def _uniques(self, r: int):
        if r not in self._unique_cache:
            h, t = self.relation_pairs(r)
            self._unique_cache[r] = (
                np.unique(h),
                np.unique(t),
                np.unique(h[h == t]),
            )
        return self._unique_cache[r]

    def subject_ids(self, r: int) -> np.ndarray:
        """Sorted unique head entities of relation r."""
        return self._uniques(r)[0]

    def object_ids(self, r: int) -> np.ndarray:
        return self._uniques(r)[1]

    def loop_ids(self, r: int) -> np.ndarray:
        """Sorted unique entities e with r(e, e)."""
        return self._uniques(r)[2]

    def csr(self, r: int, by: str = "head"):
        """Adjacency of relation r as (indptr, cols) over entity ids.

        by="head": cols are tails grouped by head; by="tail": heads by tail.
        """
        key = (r, by)
        if key not in self._csr_cache:
            h, t = self.relation_pairs(r)
            src, dst = (h, t) if by == "head" else (t, h)
            order = np.argsort(src, kind="stable")
            counts = np.bincount(src, minlength=self.n_entities)
            indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
            self._csr_cache[key] = (indptr, dst[order])
        return self._csr_cache[key]

    def tails_of(self, h: int, r: int) -> np.ndarray:
        indptr, cols = self.csr(r, by="head")
        return cols[indptr[h] : indptr[h + 1]]

    def heads_of(self, t: int, r: int) -> np.ndarray:
        indptr, cols = self.csr(r, by="tail")
        return cols[indptr[t] : indptr[t + 1]]

    def relations_between(self, h: int, t: int) -> np.ndarray:
        if self._ht_index is None:
            keys = pack_pairs(self._arr[:, 0], self._arr[:, 2], self.n_entities)
            order = np.argsort(keys, kind="stable")
            self._ht_index = (keys[order], self._arr[order, 1])
        keys, rels = self._ht_index
        want = pack_pairs(np.asarray([h]), np.asarray([t]), self.n_entities)[0]
        lo = np.searchsorted(keys, want, side="left")
        hi = np.searchsorted(keys, want, side="right")
        return rels[lo:hi]

    # -- domain signatures ----------------------------------------------------

    def head_domains(self, r: int) -> frozenset | None:
        if self.entity_domains is None:
            return None
        doms = np.asarray([DOMAIN_INITIAL[d] for d in self.entity_domains])
        return frozenset(doms[self.subject_ids(r)])

    def tail_domains(self, r: int) -> frozenset | None:
        if self.entity_domains is None:
            return None
        doms = np.asarray([DOMAIN_INITIAL[d] for d in self.entity_domains])
        return frozenset(doms[self.object_ids(r)])

    # -- derived graphs -------------------------------------------------------

    def subgraph(self, triple_array) -> "KnowledgeGraph":
        """New graph over the same vocabularies with a subset of triples."""
        return KnowledgeGraph(
            triple_array, self.entity_names, self.relation_names, self.entity_domains
        )

    def write_triples(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for h, r, t in self._arr:
                f.write(
                    f"{self.entity_names[h]}\t{self.relation_names[r]}\t{self.entity_names[t]}\n"
                )

    def write_domains(self, path):
        if self.entity_domains is None:
            raise KGError("graph has no domain tags")
        with open(path, "w", encoding="utf-8") as f:
            for name, dom in zip(self.entity_names, self.entity_domains):
                f.write(f"{name}\t{dom}\n")


def _open_lines(source):
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    return source  # file-like or iterable of lines


def read_domain_sidecar(source) -> dict[str, str]:
    """Parse an `entity<TAB>domain` file into a name -> domain map."""
    tags = {}
    f = _open_lines(source)
    try:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"domain sidecar line {lineno}: expected 2 fields, got {len(parts)}")
            name, dom = parts
            if dom not in DOMAINS:
                raise ParseError(f"domain sidecar line {lineno}: unknown domain {dom!r}")
            tags[name] = dom
    finally:
        if hasattr(f, "close") and f is not source:
            f.close()
    return tags


def ingest(source, domain_source=None) -> KnowledgeGraph:
    """Parse tab-separated `head<TAB>relation<TAB>tail` lines into an indexed graph.

    `#`-prefixed and blank lines are skipped. Duplicate triples are dropped
    with a counted warning. An optional sidecar maps entity names to domain
    tags; when given, every entity must be tagged.
    """
    entity_names: list[str] = []
    relation_names: list[str] = []
    ent_ids: dict[str, int] = {}
    rel_ids: dict[str, int] = {}
    triples: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    duplicates = 0

    f = _open_lines(source)
    try:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"line {lineno}: expected 3 tab-separated fields, got {len(parts)}")
            h_name, r_name, t_name = parts
            if not h_name or not r_name or not t_name:
                raise ParseError(f"line {lineno}: empty field")
            h = ent_ids.setdefault(h_name, len(entity_names))
            if h == len(entity_names):
                entity_names.append(h_name)
            r = rel_ids.setdefault(r_name, len(relation_names))
            if r == len(relation_names):
                relation_names.append(r_name)
            t = ent_ids.setdefault(t_name, len(entity_names))
            if t == len(entity_names):
                entity_names.append(t_name)
            triple = (h, r, t)
            if triple in seen:
                duplicates += 1
                continue
            seen.add(triple)
            triples.append(triple)
    finally:
        if hasattr(f, "close") and f is not source:
            f.close()

    if not triples:
        raise EmptyDataset("no triples in source")
    if duplicates:
        log.warning("dropped %d duplicate triples at ingestion", duplicates)

    domains = None
    if domain_source is not None:
        tags = domain_source if isinstance(domain_source, dict) else read_domain_sidecar(domain_source)
        missing = [n for n in entity_names if n not in tags]
        if missing:
            raise MissingDomain(
                f"{len(missing)} entities lack a domain tag (first: {missing[:3]})"
            )
        domains = [tags[n] for n in entity_names]

    return KnowledgeGraph(np.asarray(triples, dtype=np.int64), entity_names, relation_names, domains)


@dataclass
class Split:
    """Disjoint train/valid/test partition of a graph's triples."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    seed: int

    def sizes(self):
        return (len(self.train), len(self.valid), len(self.test))


def split(kg: KnowledgeGraph, ratios, seed: int) -> Split:
    """Deterministic split with a coverage pass: every entity and relation in
    valid/test also appears in train, so evaluation never sees fresh vocabulary.
    """
    ratios = tuple(float(x) for x in ratios)
    if len(ratios) != 3 or any(x < 0 for x in ratios):
        raise SplitError("three nonnegative ratios required")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must sum to 1, got {sum(ratios)}")
    if ratios[0] <= 0:
        raise SplitError("train ratio must be positive")

    arr = kg.triple_array
    n = arr.shape[0]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(round(ratios[0] * n))
    n_valid = int(round(ratios[1] * n))
    n_train = min(n_train, n)
    n_valid = min(n_valid, n - n_train)
    parts = [perm[:n_train], perm[n_train : n_train + n_valid], perm[n_train + n_valid :]]

    train_idx = list(parts[0])
    covered_e = set(arr[parts[0], 0]) | set(arr[parts[0], 2])
    covered_r = set(arr[parts[0], 1])
    kept = [[], []]
    for slot, part in enumerate(parts[1:]):
        for i in part:
            h, r, t = arr[i]
            if h in covered_e and t in covered_e and r in covered_r:
                kept[slot].append(i)
            else:
                train_idx.append(i)
                covered_e.add(h)
                covered_e.add(t)
                covered_r.add(r)

    out = []
    for requested, idx in zip(ratios, [train_idx, kept[0], kept[1]]):
        if requested > 0 and not idx:
            raise SplitError("graph too small to satisfy the coverage constraint")
        idx = np.asarray(sorted(int(i) for i in idx), dtype=np.int64)
        out.append(arr[idx])
    return Split(out[0], out[1], out[2], seed)


def load_split_files(kg: KnowledgeGraph, train_path, valid_path, test_path, seed: int = 0) -> Split:
    """Load a published split; triples must resolve against kg's vocabulary."""

    def load(path):
        rows = []
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.rstrip("\r\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ParseError(f"{path} line {lineno}: expected 3 fields")
                try:
                    rows.append(
                        (kg.entity_ids[parts[0]], kg.relation_ids[parts[1]], kg.entity_ids[parts[2]])
                    )
                except KeyError as e:
                    raise KGError(f"{path} line {lineno}: unknown name {e.args[0]!r}") from None
        return np.asarray(rows, dtype=np.int64).reshape(-1, 3)

    return Split(load(train_path), load(valid_path), load(test_path), seed)
