"""Response logs, grading aggregation, and the score/weight matrix pair.

``ResponseMatrix`` is the numerical hand-off point to the solver: ``scores``
holds the per-cell fraction of correct attempts and ``weights`` the
observation mask (attempt coverage capped at 1).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .bank import ItemBank
from .errors import DimensionError, FormatError, ValidationError
from .grading import GradingRule, grade

DEFAULT_REPEATS = 10


@dataclass(frozen=True)
class Attempt:
    item_id: str
    attempt_index: int
    raw_output: str


@dataclass(frozen=True)
class ResponseLog:
    """All graded-able attempts for one model."""

    model_id: str
    entries: tuple[Attempt, ...]

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValidationError("response log with empty model id")
        seen: set[tuple[str, int]] = set()
        for e in self.entries:
            if e.attempt_index < 0:
                raise ValidationError(
                    f"model {self.model_id!r}: negative attempt index on {e.item_id!r}"
                )
            key = (e.item_id, e.attempt_index)
            if key in seen:
                raise ValidationError(
                    f"model {self.model_id!r}: duplicate attempt {key!r}"
                )
            seen.add(key)


def load_response_logs(path: str | Path) -> list[ResponseLog]:
    """Read a JSONL file of attempts; returns one log per model (file order)."""
    path = Path(path)
    by_model: dict[str, list[Attempt]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                attempt = Attempt(rec["item"], int(rec["attempt"]), rec["output"])
                model = rec["model"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: bad attempt record ({exc!r})") from exc
            by_model.setdefault(model, []).append(attempt)
    return [ResponseLog(model, tuple(entries)) for model, entries in by_model.items()]


def save_response_log(log_: ResponseLog, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in log_.entries:
            fh.write(
                json.dumps(
                    {
                        "model": log_.model_id,
                        "item": e.item_id,
                        "attempt": e.attempt_index,
                        "output": e.raw_output,
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )


@dataclass(frozen=True)
class ResponseMatrix:
    """Item-by-model score fractions plus the matching observation weights."""

    scores: NDArray[np.float64]
    weights: NDArray[np.float64]
    item_ids: tuple[str, ...]
    model_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        s, w = np.asarray(self.scores), np.asarray(self.weights)
        if s.shape != w.shape:
            raise DimensionError(f"scores {s.shape} vs weights {w.shape}")
        if s.shape != (len(self.item_ids), len(self.model_ids)):
            raise DimensionError(
                f"matrix {s.shape} vs ids ({len(self.item_ids)}, {len(self.model_ids)})"
            )
        if s.size and (s.min() < 0 or s.max() > 1):
            raise ValidationError("scores outside [0, 1]")
        if w.size and (w.min() < 0 or w.max() > 1):
            raise ValidationError("weights outside [0, 1]")
        if np.any(s[w == 0] != 0):
            raise ValidationError("unobserved cells (weight 0) must carry score 0")

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_models(self) -> int:
        return len(self.model_ids)


def aggregate(
    logs: list[ResponseLog],
    bank: ItemBank,
    rule: GradingRule | None = None,
    repeats: int = DEFAULT_REPEATS,
) -> ResponseMatrix:
    """Grade every attempt and average per cell.

    score = correct/graded attempts for the cell; weight = graded/repeats
    capped at 1; cells with no attempts get score 0, weight 0.  Model columns
    are sorted by id so the result does not depend on log order.
    """
    if not logs:
        raise ValidationError("no response logs given")
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    known_items = set(bank.item_ids)
    unknown = sorted(
        {e.item_id for lg in logs for e in lg.entries if e.item_id not in known_items}
    )
    if unknown:
        raise ValidationError(f"unknown item ids in logs: {unknown}")

    merged: dict[str, list[Attempt]] = {}
    for lg in logs:
        merged.setdefault(lg.model_id, []).extend(lg.entries)
    # Re-validate after merging: the same model may be split across files but
    # must not repeat an (item, attempt) pair; attempt indices must fit R.
    for model_id, entries in merged.items():
        keys = [(e.item_id, e.attempt_index) for e in entries]
        if len(keys) != len(set(keys)):
            dupes = sorted({k for k in keys if keys.count(k) > 1})
            raise ValidationError(f"model {model_id!r}: duplicate attempts {dupes}")
        bad = sorted({e.item_id for e in entries if e.attempt_index >= repeats})
        if bad:
            raise ValidationError(
                f"model {model_id!r}: attempt index >= repeats ({repeats}) on {bad}"
            )

    model_ids = tuple(sorted(merged))
    item_index = {iid: i for i, iid in enumerate(bank.item_ids)}
    keys = {item.item_id: item.answer_key for item in bank.items}
    scores = np.zeros((len(bank), len(model_ids)), dtype=np.float64)
    weights = np.zeros_like(scores)
    for j, model_id in enumerate(model_ids):
        cells: dict[str, list[int]] = {}
        for e in merged[model_id]:
            cells.setdefault(e.item_id, []).append(
                grade(e.raw_output, keys[e.item_id], rule)
            )
        for item_id, marks in cells.items():
            i = item_index[item_id]
            scores[i, j] = sum(marks) / len(marks)
            weights[i, j] = min(len(marks) / repeats, 1.0)
    return ResponseMatrix(scores, weights, bank.item_ids, model_ids)


# ---------------------------------------------------------------------------
# CSV round-trip (scores and weights as parallel files)
# ---------------------------------------------------------------------------

def save_matrix_csv(
    matrix: NDArray[np.float64],
    row_ids: tuple[str, ...],
    col_ids: tuple[str, ...],
    path: str | Path,
    corner: str = "id",
) -> None:
    """Generic labelled-matrix CSV: header of column ids, first column row ids.

    Floats are written with ``repr`` (shortest round-trip form) so that
    save→load is bit-exact and reruns produce byte-identical files.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([corner, *col_ids])
        for rid, row in zip(row_ids, np.asarray(matrix)):
            writer.writerow([rid, *[repr(float(v)) for v in row]])


def load_matrix_csv(path: str | Path) -> tuple[NDArray[np.float64], tuple[str, ...], tuple[str, ...]]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty matrix file")
    col_ids = tuple(rows[0][1:])
    row_ids = tuple(r[0] for r in rows[1:])
    try:
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric cell ({exc})") from exc
    if values.size and values.shape[1] != len(col_ids):
        raise FormatError(f"{path}: ragged rows")
    return values, row_ids, col_ids


def save_response_matrix(rm: ResponseMatrix, scores_path: str | Path, weights_path: str | Path) -> None:
    save_matrix_csv(rm.scores, rm.item_ids, rm.model_ids, scores_path, corner="item_id")
    save_matrix_csv(rm.weights, rm.item_ids, rm.model_ids, weights_path, corner="item_id")


def load_response_matrix(scores_path: str | Path, weights_path: str | Path | None = None) -> ResponseMatrix:
    scores, item_ids, model_ids = load_matrix_csv(scores_path)
    if weights_path is None:
        weights = np.ones_like(scores)
    else:
        weights, w_items, w_models = load_matrix_csv(weights_path)
        if (w_items, w_models) != (item_ids, model_ids):
            raise DimensionError("weights CSV ids do not match scores CSV ids")
    return ResponseMatrix(scores, weights, item_ids, model_ids)
