"""Evaluation metrics: reconstruction quality, mastery counts, agreement, clustering.

The AUC is implemented twice on purpose — a fast rank-based route and a
brute-force pairwise oracle — and the test suite requires them to agree to
1e-12.  Keeping the oracle in the package (not the tests) makes the
equivalence a checkable property anywhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateDataError, DimensionError, ValidationError
from .solver import MasteryMatrix


# ---------------------------------------------------------------------------
# Reconstruction metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReconstructionReport:
    accuracy: float
    auc: float | None
    rmse: float
    n_cells: int
    binarize_threshold: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "auc": self.auc,
            "rmse": self.rmse,
            "n_cells": self.n_cells,
            "binarize_threshold": self.binarize_threshold,
        }


def auc_mann_whitney(scores: NDArray[np.float64], labels: NDArray[np.int_]) -> float:
    """Rank-based AUC with the standard half-credit for tied scores."""
    from scipy.stats import rankdata

    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDataError("AUC undefined: only one label class present")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_pairwise(scores: NDArray[np.float64], labels: NDArray[np.int_]) -> float:
    """Brute-force oracle: average over every (positive, negative) pair."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    pos_scores = scores[labels == 1]
    neg_scores = scores[labels != 1]
    if pos_scores.size == 0 or neg_scores.size == 0:
        raise DegenerateDataError("AUC undefined: only one label class present")
    total = 0.0
    for p in pos_scores:
        for q in neg_scores:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (pos_scores.size * neg_scores.size)


def reconstruction_metrics(
    predicted: NDArray[np.float64],
    observed: NDArray[np.float64],
    weights: NDArray[np.float64] | None = None,
    binarize_threshold: float = 0.5,
) -> ReconstructionReport:
    """Compare predicted scores against observed scores on observed cells.

    Labels binarize the observed scores at the threshold (exactly at the
    threshold counts as positive); accuracy binarizes the predictions the same
    way, AUC uses the raw predicted scores, RMSE uses raw values on both
    sides.  Cells with zero weight are excluded everywhere.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    if predicted.shape != observed.shape:
        raise DimensionError(f"predicted {predicted.shape} vs observed {observed.shape}")
    if weights is None:
        mask = np.ones(predicted.shape, dtype=bool)
    else:
        weights = np.asarray(weights)
        if weights.shape != observed.shape:
            raise DimensionError(f"weights {weights.shape} vs observed {observed.shape}")
        mask = weights > 0
    pred = predicted[mask]
    obs = observed[mask]
    if pred.size == 0:
        raise DegenerateDataError("no observed cells to score")
    labels = (obs >= binarize_threshold).astype(int)
    pred_labels = (pred >= binarize_threshold).astype(int)
    accuracy = float((pred_labels == labels).mean())
    rmse = float(np.sqrt(((pred - obs) ** 2).mean()))
    if labels.min() == labels.max():
        warnings.warn("AUC undefined: all labels identical; reporting absent")
        auc = None
    else:
        auc = auc_mann_whitney(pred, labels)
    return ReconstructionReport(
        accuracy=accuracy,
        auc=auc,
        rmse=rmse,
        n_cells=int(pred.size),
        binarize_threshold=binarize_threshold,
    )


# ---------------------------------------------------------------------------
# Concept counts (threshold ranking)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConceptCountRow:
    model_id: str
    mastered_count: int
    total: int
    mean_score: float


@dataclass(frozen=True)
class ConceptCountReport:
    rows: tuple[ConceptCountRow, ...]
    threshold: float


def concept_counts(mastery: MasteryMatrix, threshold: float = 0.9) -> ConceptCountReport:
    """Per-model count of concepts with mastery strictly above the threshold.

    Rows are sorted best-first: by count descending, then mean mastery
    descending, then model id.
    """
    rows = []
    for j, model_id in enumerate(mastery.model_ids):
        row = mastery.prob[j]
        rows.append(
            ConceptCountRow(
                model_id=model_id,
                mastered_count=int((row > threshold).sum()),
                total=mastery.n_concepts,
                mean_score=float(row.mean()),
            )
        )
    rows.sort(key=lambda r: (-r.mastered_count, -r.mean_score, r.model_id))
    return ConceptCountReport(rows=tuple(rows), threshold=threshold)


def render_concept_table(report: ConceptCountReport) -> str:
    """Aligned plain-text ranking: mastered-count fraction, model, mean mastery."""
    header = ("con", "model", "acc")
    cells = [
        (f"{r.mastered_count}/{r.total}", r.model_id, f"{r.mean_score:.4f}")
        for r in report.rows
    ]
    widths = [
        max(len(header[c]), *(len(row[c]) for row in cells)) if cells else len(header[c])
        for c in range(3)
    ]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for row in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Inter-annotator agreement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AgreementReport:
    krippendorff_alpha: float
    n_units: int
    n_coders: int
    distance: str


def _nominal_distance(a: Hashable, b: Hashable) -> float:
    return 0.0 if a == b else 1.0


def _jaccard_distance(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 0.0
    return 1.0 - len(a & b) / len(a | b)


def _is_missing(v: object) -> bool:
    return v is None or (isinstance(v, float) and np.isnan(v))


def krippendorff_alpha(
    annotations: Sequence[Sequence[object]],
    distance: str = "nominal",
) -> AgreementReport:
    """Chance-corrected agreement over a units-by-coders table.

    Missing codings are ``None`` (or NaN); a unit contributes only if at least
    two coders labelled it.  ``distance`` is "nominal" for atomic labels or
    "jaccard" for set-valued labels (distance = 1 − overlap/union).

    alpha = 1 − observed/expected disagreement, with expected disagreement
    taken over all pairable values regardless of unit.
    """
    if distance == "nominal":
        dist = _nominal_distance
        norm = lambda v: v  # noqa: E731
    elif distance == "jaccard":
        dist = _jaccard_distance
        norm = lambda v: frozenset(v) if isinstance(v, (set, frozenset, list, tuple)) else frozenset([v])  # noqa: E731
    else:
        raise ValidationError(f"unknown distance {distance!r}")

    rows = [[norm(v) for v in row if not _is_missing(v)] for row in annotations]
    n_coders = max((len(tuple(row)) for row in annotations), default=0)
    pairable = [row for row in rows if len(row) >= 2]
    if n_coders < 2 or not pairable:
        raise ValidationError("need >= 2 coders and >= 1 unit with >= 2 codings")

    n_values = sum(len(row) for row in pairable)
    observed = 0.0
    for row in pairable:
        m = len(row)
        within = 0.0
        for i in range(m):
            for j in range(m):
                if i != j:
                    within += dist(row[i], row[j])
        observed += within / (m - 1)
    observed /= n_values

    freq: dict[object, int] = {}
    for row in pairable:
        for v in row:
            freq[v] = freq.get(v, 0) + 1
    distinct = list(freq)
    expected = 0.0
    for a_i, va in enumerate(distinct):
        for vb in distinct[a_i + 1 :]:
            expected += 2.0 * freq[va] * freq[vb] * dist(va, vb)
    expected /= n_values * (n_values - 1)

    if expected == 0.0:
        raise DegenerateDataError(
            "zero expected disagreement: all codings identical, alpha undefined"
        )
    return AgreementReport(
        krippendorff_alpha=1.0 - observed / expected,
        n_units=len(pairable),
        n_coders=n_coders,
        distance=distance,
    )


# ---------------------------------------------------------------------------
# Mastery-profile clustering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClusterResult:
    assignments: dict[str, int]          # model_id -> cluster label (excluded: -1)
    merges: tuple[tuple[int, int, float], ...]
    excluded: tuple[str, ...]


def _cosine_distance_matrix(rows: NDArray[np.float64]) -> NDArray[np.float64]:
    norms = np.linalg.norm(rows, axis=1)
    sim = (rows @ rows.T) / np.outer(norms, norms)
    d = 1.0 - np.clip(sim, -1.0, 1.0)
    np.fill_diagonal(d, 0.0)
    return d


def cluster_models(mastery: MasteryMatrix, n_clusters: int) -> ClusterResult:
    """Agglomerative average-linkage clustering of mastery rows (cosine distance).

    Deterministic: equal-distance merge candidates resolve to the lowest index
    pair.  All-zero rows have no direction and are excluded with a warning
    (labelled -1).  The merge list is the full dendrogram in scipy-style ids
    (originals 0..n-1, then one new id per merge).
    """
    if n_clusters < 1:
        raise ValidationError("n_clusters must be >= 1")
    rows = mastery.prob
    keep = [i for i in range(rows.shape[0]) if np.any(rows[i] != 0)]
    excluded = tuple(mastery.model_ids[i] for i in range(rows.shape[0]) if i not in keep)
    if excluded:
        warnings.warn(f"excluding all-zero mastery rows: {excluded}")
    if len(keep) < 2:
        raise ValidationError("need at least 2 non-zero mastery rows to cluster")
    if n_clusters > len(keep):
        raise ValidationError(
            f"n_clusters={n_clusters} exceeds the {len(keep)} clusterable rows"
        )

    dist = _cosine_distance_matrix(rows[keep])
    # Active clusters: scipy-style integer ids; members in original-row terms.
    members: dict[int, list[int]] = {i: [keep[i]] for i in range(len(keep))}
    cluster_d = {(i, j): dist[i, j] for i in range(len(keep)) for j in range(i + 1, len(keep))}
    active = sorted(members)
    merges: list[tuple[int, int, float]] = []
    next_id = len(keep)
    labels_at_cut: dict[int, list[int]] | None = None
    while len(active) > 1:
        if len(active) == n_clusters:
            labels_at_cut = {cid: list(members[cid]) for cid in active}
        best_pair = min(cluster_d, key=lambda p: (cluster_d[p], p))
        a, b = best_pair
        d_ab = cluster_d.pop(best_pair)
        merges.append((a, b, d_ab))
        size_a, size_b = len(members[a]), len(members[b])
        members[next_id] = members.pop(a) + members.pop(b)
        active = [c for c in active if c not in (a, b)]
        for c in active:
            d_ac = cluster_d.pop((min(a, c), max(a, c)))
            d_bc = cluster_d.pop((min(b, c), max(b, c)))
            cluster_d[(c, next_id)] = (size_a * d_ac + size_b * d_bc) / (size_a + size_b)
        active.append(next_id)
        next_id += 1
    if labels_at_cut is None:  # n_clusters == 1
        labels_at_cut = {active[0]: list(members[active[0]])}

    # Stable labels: clusters numbered by their smallest original row index.
    ordered = sorted(labels_at_cut.values(), key=min)
    assignments = {mid: -1 for mid in mastery.model_ids}
    for label, rows_in_cluster in enumerate(ordered):
        for i in rows_in_cluster:
            assignments[mastery.model_ids[i]] = label
    return ClusterResult(
        assignments=assignments,
        merges=tuple(merges),
        excluded=excluded,
    )
