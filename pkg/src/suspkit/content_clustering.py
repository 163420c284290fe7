"""Greedy cosine clustering of post vectors plus cluster reporting.

Single pass in input order: each item joins the existing leader of
maximal cosine similarity when that similarity clears the threshold
(ties broken by earliest leader), otherwise it founds a new cluster.
The leader scan is a vectorized exhaustive comparison, so results are
identical to a naive pairwise loop.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import MalformedRecord
from .vectors import EmbeddingMatrix


@dataclass
class ClusterAssignment:
    item_ids: list[str]
    labels: np.ndarray  # (n,) cluster index per item
    leader_rows: list[int]  # item row founding each cluster
    centroids: np.ndarray  # (k, d) renormalized member means

    def __post_init__(self):
        if len(self.item_ids) != self.labels.shape[0]:
            raise ValueError("labels and item_ids differ in length")
        counts = np.bincount(self.labels, minlength=self.n_clusters) if len(self.item_ids) else []
        if len(self.item_ids) and int(np.sum(counts)) != len(self.item_ids):
            raise ValueError("cluster sizes do not sum to item count")

    @property
    def n_clusters(self) -> int:
        return len(self.leader_rows)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters).astype(np.int64)

    def members(self, cluster_id: int) -> list[int]:
        return np.flatnonzero(self.labels == cluster_id).tolist()


def _normalized_rows(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return X / safe


def cluster_cosine(X: EmbeddingMatrix | np.ndarray, tau: float,
                   item_ids: Sequence[str] | None = None) -> ClusterAssignment:
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    if isinstance(X, EmbeddingMatrix):
        item_ids = X.item_ids
        X = X.vectors
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    n, d = X.shape
    if item_ids is None:
        item_ids = [str(i) for i in range(n)]
    if len(item_ids) != n:
        raise ValueError("item_ids and rows differ in length")

    unit = _normalized_rows(X)
    labels = np.empty(n, dtype=np.int64)
    leader_rows: list[int] = []
    leader_buf = np.empty((16, d))
    for i in range(n):
        k = len(leader_rows)
        if k:
            sims = leader_buf[:k] @ unit[i]
            best = int(np.argmax(sims))
            if sims[best] >= tau:
                labels[i] = best
                continue
        if k == leader_buf.shape[0]:
            leader_buf = np.concatenate([leader_buf, np.empty_like(leader_buf)])
        leader_buf[k] = unit[i]
        leader_rows.append(i)
        labels[i] = k

    k = len(leader_rows)
    centroids = np.zeros((k, d))
    if n:
        np.add.at(centroids, labels, unit)
        centroids = _normalized_rows(centroids / np.bincount(labels, minlength=k)[:, None])
    return ClusterAssignment(item_ids=list(item_ids), labels=labels,
                             leader_rows=leader_rows, centroids=centroids)


def cluster_report(assignment: ClusterAssignment, texts: Sequence[str],
                   sample_n: int = 10) -> list[dict]:
    """Cluster summaries sorted by size descending, ties by cluster id.

    Samples are the first sample_n member texts in item order.
    """
    if len(texts) != len(assignment.item_ids):
        raise ValueError("texts and assignment differ in length")
    sizes = assignment.sizes
    order = sorted(range(assignment.n_clusters), key=lambda c: (-int(sizes[c]), c))
    report = []
    for cid in order:
        members = assignment.members(cid)
        leader_row = assignment.leader_rows[cid]
        report.append(
            {
                "cluster_id": int(cid),
                "size": int(sizes[cid]),
                "leader_item_id": assignment.item_ids[leader_row],
                "leader_text": texts[leader_row],
                "sample_item_ids": [assignment.item_ids[m] for m in members[:sample_n]],
                "samples": [texts[m] for m in members[:sample_n]],
            }
        )
    return report


def write_cluster_report(report: Sequence[dict], jsonl_path: str | Path,
                         digest_path: str | Path | None = None) -> None:
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for entry in report:
            fh.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")
    if digest_path is None:
        return
    total = sum(entry["size"] for entry in report)
    lines = [f"{len(report)} clusters over {total} items", ""]
    for entry in report:
        lines.append(f"cluster {entry['cluster_id']} size={entry['size']}")
        lines.append(f"  leader: {entry['leader_text']}")
        for text in entry["samples"]:
            lines.append(f"  - {text}")
        lines.append("")
    Path(digest_path).write_text("\n".join(lines), encoding="utf-8")


def keyword_search(assignment: ClusterAssignment, texts: Sequence[str],
                   keywords: Sequence[str]) -> list[dict]:
    """Clusters with at least one case-insensitive keyword occurrence.

    Hits carry per-keyword occurrence counts and are sorted by total
    matches descending, ties by cluster id.
    """
    if len(texts) != len(assignment.item_ids):
        raise ValueError("texts and assignment differ in length")
    folded = [kw.casefold() for kw in keywords]
    hits = []
    for cid in range(assignment.n_clusters):
        counts = dict.fromkeys(keywords, 0)
        for m in assignment.members(cid):
            text = texts[m].casefold()
            for kw, kw_folded in zip(keywords, folded):
                counts[kw] += text.count(kw_folded)
        total = sum(counts.values())
        if total:
            hits.append({"cluster_id": cid, "matches": counts, "total": total})
    hits.sort(key=lambda h: (-h["total"], h["cluster_id"]))
    return hits


@dataclass
class ToxicitySummary:
    scored: int
    toxic: int
    skipped_unknown: int
    threshold: float

    @property
    def fraction(self) -> float:
        return self.toxic / self.scored if self.scored else 0.0

    @property
    def empty(self) -> bool:
        return self.scored == 0


def toxicity_summary(path: str | Path, known_ids: set[str] | None = None,
                     threshold: float = 0.5) -> ToxicitySummary:
    """Fraction of scored posts above the threshold.

    Rows whose tweet id is not in known_ids are skipped and counted;
    pass known_ids=None to accept every row.
    """
    scored = toxic = skipped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            try:
                score = float(row["score"])
            except (KeyError, TypeError, ValueError):
                raise MalformedRecord(f"bad toxicity row: {row!r}") from None
            if not 0.0 <= score <= 1.0:
                raise MalformedRecord(f"score out of range: {score}")
            if known_ids is not None and row["tweet_id"] not in known_ids:
                skipped += 1
                continue
            scored += 1
            if score > threshold:
                toxic += 1
    return ToxicitySummary(scored=scored, toxic=toxic, skipped_unknown=skipped,
                           threshold=threshold)
