"""Exact Hamming-ranking retrieval and the usual IR metrics.

Search is a linear scan over packed codes (XOR + popcount); ranking
ties at equal distance break by ascending database index so results
are deterministic and oracle-comparable.  Metrics: MAP@k, precision
and recall at N, and a precision/recall sweep over Hamming radius.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .binary_codes import BinaryCodeMatrix, hamming_cross

# Upper bound on the scratch distance block, in entries.
_BLOCK_ENTRIES = 4_000_000


@dataclass
class RankedResult:
    """Top-k neighbours of one query, nearest first."""

    query: int
    indices: np.ndarray
    distances: np.ndarray


def _ranked_distances(queries: BinaryCodeMatrix, database: BinaryCodeMatrix, threads: int = 1):
    """Full stable ranking per query: (order, sorted distances)."""
    if queries.K != database.K:
        raise ValueError(f"code length mismatch: {queries.K} vs {database.K}")
    n_q, n_db = queries.n, database.n
    block = max(1, _BLOCK_ENTRIES // n_db)
    starts = range(0, n_q, block)

    def rank_block(start):
        stop = min(start + block, n_q)
        dist = hamming_cross(queries.take(range(start, stop)), database)
        order = np.argsort(dist, axis=1, kind="stable")
        return order, np.take_along_axis(dist, order, axis=1)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(rank_block, starts))
    else:
        parts = [rank_block(s) for s in starts]
    order = np.concatenate([p[0] for p in parts], axis=0)
    dists = np.concatenate([p[1] for p in parts], axis=0)
    return order, dists


def _topk_row(dist: np.ndarray, k: int):
    """Exact smallest-k of one distance row, ties by ascending index."""
    if k * 4 >= dist.size:
        order = np.argsort(dist, kind="stable")[:k]
        return order, dist[order]
    part = np.argpartition(dist, k - 1)[:k]
    # argpartition picks arbitrary members among boundary ties; gather
    # every candidate at or below the boundary, then rank stably so
    # equal distances fall back to ascending index.
    thresh = dist[part].max()
    cand = np.flatnonzero(dist <= thresh)
    order = cand[np.argsort(dist[cand], kind="stable")[:k]]
    return order, dist[order]


def search(
    queries: BinaryCodeMatrix,
    database: BinaryCodeMatrix,
    k: int,
    threads: int = 1,
) -> list[RankedResult]:
    """Exact top-k by Hamming distance, ties by ascending item index."""
    if not 1 <= k <= database.n:
        raise ValueError(f"k must be in [1, {database.n}], got {k}")
    n_q, n_db = queries.n, database.n
    block = max(1, _BLOCK_ENTRIES // n_db)
    starts = range(0, n_q, block)

    def search_block(start):
        stop = min(start + block, n_q)
        dist = hamming_cross(queries.take(range(start, stop)), database)
        return [_topk_row(dist[i], k) for i in range(stop - start)]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(search_block, starts))
    else:
        parts = [search_block(s) for s in starts]
    results = []
    for part in parts:
        for order, dists in part:
            results.append(
                RankedResult(query=len(results), indices=order, distances=dists)
            )
    return results


def average_precision(flags, r_total: int) -> float:
    """AP over a truncated ranked 0/1 relevance list.

    Normalizes by min(r_total, list length): the number of relevant
    items that could have been retrieved within the truncation.
    """
    flags = np.asarray(flags)
    if flags.size == 0:
        raise ValueError("empty ranked list")
    if r_total < 1:
        raise ValueError(f"r_total must be >= 1, got {r_total}")
    hits = np.nonzero(flags)[0]
    if hits.size == 0:
        return 0.0
    precisions = (np.arange(hits.size) + 1.0) / (hits + 1.0)
    return float(precisions.sum() / min(r_total, flags.size))


def relevance_matrix(query_label_sets, db_label_sets, num_classes: int) -> np.ndarray:
    """Boolean (n_q, n_db) matrix: entry true iff label sets intersect."""

    def indicator(sets):
        ind = np.zeros((len(sets), num_classes), dtype=bool)
        for i, labels in enumerate(sets):
            ind[i, list(labels)] = True
        return ind

    return indicator(query_label_sets) @ indicator(db_label_sets).T


@dataclass
class MetricsReport:
    """MAP@k plus P@N / R@N and radius-swept PR curves."""

    map_at: dict
    top_n: np.ndarray        # columns: N, precision, recall
    pr_radius: np.ndarray    # columns: radius, precision, recall
    n_queries: int
    n_database: int
    config_hash: str | None = None
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "n_queries": self.n_queries,
            "n_database": self.n_database,
            "map": {str(k): v for k, v in self.map_at.items()},
            "top_n": [
                {"n": int(n), "precision": p, "recall": r} for n, p, r in self.top_n
            ],
            "pr_radius": [
                {"radius": int(r), "precision": p, "recall": rc}
                for r, p, rc in self.pr_radius
            ],
            **self.extra,
        }


def metrics_report(
    queries: BinaryCodeMatrix,
    database: BinaryCodeMatrix,
    query_label_sets,
    db_label_sets,
    ks,
    num_classes: int | None = None,
    max_n: int | None = None,
    threads: int = 1,
    config_hash: str | None = None,
) -> MetricsReport:
    """Rank the database for every query and compute all metrics.

    Queries with no relevant database item are excluded from MAP and
    recall averages (their precision is still counted).
    """
    if len(query_label_sets) != queries.n or len(db_label_sets) != database.n:
        raise ValueError("label table sizes do not match code tables")
    ks = sorted(set(int(k) for k in ks))
    if ks and not 1 <= ks[0] <= ks[-1] <= database.n:
        raise ValueError(f"every k must be in [1, {database.n}], got {ks}")
    if num_classes is None:
        num_classes = 1 + max(max(s) for s in [*query_label_sets, *db_label_sets])
    rel = relevance_matrix(query_label_sets, db_label_sets, num_classes)
    r_totals = rel.sum(axis=1)
    order, dists = _ranked_distances(queries, database, threads)
    rel_ranked = np.take_along_axis(rel, order, axis=1)

    has_rel = r_totals > 0
    n_q, n_db = queries.n, database.n
    cum_hits = np.cumsum(rel_ranked, axis=1, dtype=np.float64)

    map_at = {}
    for k in ks:
        aps = []
        for q in range(n_q):
            if has_rel[q]:
                aps.append(average_precision(rel_ranked[q, :k], int(r_totals[q])))
        map_at[k] = float(np.mean(aps)) if aps else 0.0

    n_max = n_db if max_n is None else min(int(max_n), n_db)
    ns = np.arange(1, n_max + 1, dtype=np.float64)
    precision_n = (cum_hits[:, :n_max] / ns).mean(axis=0)
    if has_rel.any():
        recall_n = (cum_hits[has_rel, :n_max] / r_totals[has_rel, None]).mean(axis=0)
    else:
        recall_n = np.zeros(n_max)
    top_n = np.column_stack([ns, precision_n, recall_n])

    # Radius sweep: counts of retrieved / relevant-retrieved per query
    # at Hamming distance <= r, for r = 0..K.
    k_bits = queries.K
    retrieved = np.zeros((n_q, k_bits + 1))
    rel_retrieved = np.zeros((n_q, k_bits + 1))
    for q in range(n_q):
        retrieved[q] = np.bincount(dists[q], minlength=k_bits + 1)
        rel_retrieved[q] = np.bincount(dists[q], weights=rel_ranked[q], minlength=k_bits + 1)
    retrieved = retrieved.cumsum(axis=1)
    rel_retrieved = rel_retrieved.cumsum(axis=1)
    pr_rows = []
    for r in range(k_bits + 1):
        nonempty = retrieved[:, r] > 0
        if nonempty.any():
            precision = float(
                (rel_retrieved[nonempty, r] / retrieved[nonempty, r]).mean()
            )
        else:
            precision = 0.0
        if has_rel.any():
            recall = float((rel_retrieved[has_rel, r] / r_totals[has_rel]).mean())
        else:
            recall = 0.0
        pr_rows.append((r, precision, recall))

    return MetricsReport(
        map_at=map_at,
        top_n=top_n,
        pr_radius=np.array(pr_rows, dtype=np.float64),
        n_queries=n_q,
        n_database=n_db,
        config_hash=config_hash,
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_metrics_csv(report: MetricsReport, out_dir) -> dict:
    """Write map.csv, prn.csv, pr.csv; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    map_path = out / "map.csv"
    with open(map_path, "w", encoding="utf-8") as fh:
        fh.write("k,map\n")
        for k, v in sorted(report.map_at.items()):
            fh.write(f"{k},{_fmt(v)}\n")
    paths["map"] = map_path
    prn_path = out / "prn.csv"
    with open(prn_path, "w", encoding="utf-8") as fh:
        fh.write("N,precision,recall\n")
        for n, p, r in report.top_n:
            fh.write(f"{int(n)},{_fmt(p)},{_fmt(r)}\n")
    paths["prn"] = prn_path
    pr_path = out / "pr.csv"
    with open(pr_path, "w", encoding="utf-8") as fh:
        fh.write("radius,precision,recall\n")
        for r, p, rc in report.pr_radius:
            fh.write(f"{int(r)},{_fmt(p)},{_fmt(rc)}\n")
    paths["pr"] = pr_path
    return paths


def write_metrics_json(report: MetricsReport, path) -> None:
    Path(path).write_text(
        json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
