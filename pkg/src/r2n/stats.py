"""Relational statistics: relation frequencies by domain block and the
reflexive/symmetric/transitive satisfaction percentages."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .kg import EmptyDataset, KnowledgeGraph, UnknownRelation
from .util import expand_ranges, isin_sorted, pack_pairs

# The satisfied-instance ratios below keep every denominator nonzero:
#   reflexive  = |{x : r(x,x)}| / |{x : x occurs in some r-triple}|
#   symmetric  = |{(x,y) in r : (y,x) in r}| / |r|
#   transitive = |{(x,y,z) : r(x,y), r(y,z), r(x,z)}| / |{(x,y,z) : r(x,y), r(y,z)}|
# A relation whose observed domain signature admits no same-type pairs gets the
# not-applicable sentinel (None) instead of a vacuous 0 or 100.

_CHUNK = 200_000  # triples per transitivity expansion block


def _fmt_domains(doms: frozenset) -> str:
    ordered = [d for d in ("G", "C", "D") if d in doms]
    body = "|".join(ordered)
    return f"({body})" if len(ordered) > 1 else body


def domain_block(kg: KnowledgeGraph, r: int) -> str | None:
    """Label of the relation's domain signature, e.g. 'DxD' or '(G|C)xG'."""
    hd, td = kg.head_domains(r), kg.tail_domains(r)
    if hd is None:
        return None
    return f"{_fmt_domains(hd)}x{_fmt_domains(td)}"


def relation_frequency(kg: KnowledgeGraph, grouping: str = "overall") -> dict[int, float]:
    """Percent frequency of each relation, overall or within its domain block."""
    if len(kg) == 0:
        raise EmptyDataset("empty graph")
    counts = {r: kg.relation_count(r) for r in range(kg.n_relations)}
    if grouping == "overall":
        total = len(kg)
        return {r: 100.0 * c / total for r, c in counts.items()}
    if grouping != "by-domain-signature":
        raise ValueError(f"unknown grouping {grouping!r}")
    if kg.entity_domains is None:
        raise ValueError("by-domain-signature grouping requires domain tags")
    blocks: dict[str, int] = {}
    labels = {}
    for r in range(kg.n_relations):
        labels[r] = domain_block(kg, r)
        blocks[labels[r]] = blocks.get(labels[r], 0) + counts[r]
    return {r: 100.0 * counts[r] / blocks[labels[r]] for r in range(kg.n_relations)}


def property_stats(kg: KnowledgeGraph, r: int):
    """(reflexive %, symmetric %, transitive %) for one relation.

    None marks a not-applicable cell (the report prints it as NA).
    """
    if not 0 <= r < kg.n_relations:
        raise UnknownRelation(f"relation id {r} out of range")
    heads, tails = kg.relation_pairs(r)
    if heads.size == 0:
        raise EmptyDataset(f"relation {r} has no triples")

    hd, td = kg.head_domains(r), kg.tail_domains(r)
    same_type_possible = True if hd is None else bool(hd & td)
    if not same_type_possible:
        return None, None, None

    active = np.union1d(heads, tails)
    n_loops = np.unique(heads[heads == tails]).size
    reflexive = 100.0 * n_loops / active.size

    keys = kg.pair_keys(r)
    rev = pack_pairs(tails, heads, kg.n_entities)
    symmetric = 100.0 * int(isin_sorted(rev, keys).sum()) / heads.size

    indptr, cols = kg.csr(r, by="head")
    premises = 0
    satisfied = 0
    for lo in range(0, heads.size, _CHUNK):
        h_c = heads[lo : lo + _CHUNK]
        t_c = tails[lo : lo + _CHUNK]
        rows, idx = expand_ranges(indptr[t_c], indptr[t_c + 1])
        if rows.size == 0:
            continue
        premises += rows.size
        conclusion = pack_pairs(h_c[rows], cols[idx], kg.n_entities)
        satisfied += int(isin_sorted(conclusion, keys).sum())
    transitive = 100.0 * satisfied / premises if premises else None
    return reflexive, symmetric, transitive


@dataclass
class RelationStats:
    relation: str
    domain_block: str | None
    freq_overall: float
    freq_in_block: float | None
    reflexive: float | None
    symmetric: float | None
    transitive: float | None


@dataclass
class StatsReport:
    rows: list[RelationStats]

    def validate(self):
        for row in self.rows:
            for v in (row.freq_overall, row.freq_in_block, row.reflexive, row.symmetric, row.transitive):
                if v is not None and not 0.0 <= v <= 100.0 + 1e-9:
                    raise ValueError(f"percentage out of range in {row.relation}: {v}")
        blocks: dict[str, float] = {}
        for row in self.rows:
            if row.domain_block is not None and row.freq_in_block is not None:
                blocks[row.domain_block] = blocks.get(row.domain_block, 0.0) + row.freq_in_block
        for label, total in blocks.items():
            if abs(total - 100.0) > 0.01:
                raise ValueError(f"block {label} frequencies sum to {total}, not 100")

    def write_csv(self, path_or_file):
        def fmt(v):
            return "NA" if v is None else f"{v:.4f}"

        close = False
        f = path_or_file
        if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
            f = open(path_or_file, "w", encoding="utf-8", newline="")
            close = True
        try:
            w = csv.writer(f)
            w.writerow(
                ["relation", "domain_block", "freq_overall", "freq_in_block",
                 "reflexive", "symmetric", "transitive"]
            )
            for row in self.rows:
                w.writerow(
                    [row.relation, row.domain_block or "NA", fmt(row.freq_overall),
                     fmt(row.freq_in_block), fmt(row.reflexive), fmt(row.symmetric),
                     fmt(row.transitive)]
                )
        finally:
            if close:
                f.close()


def compute_stats_report(kg: KnowledgeGraph) -> StatsReport:
    overall = relation_frequency(kg, "overall")
    in_block = None
    if kg.entity_domains is not None:
        in_block = relation_frequency(kg, "by-domain-signature")
    rows = []
    for r in range(kg.n_relations):
        refl, sym, trans = property_stats(kg, r)
        rows.append(
            RelationStats(
                relation=kg.relation_names[r],
                domain_block=domain_block(kg, r),
                freq_overall=overall[r],
                freq_in_block=None if in_block is None else in_block[r],
                reflexive=refl,
                symmetric=sym,
                transitive=trans,
            )
        )
    report = StatsReport(rows)
    report.validate()
    return report
