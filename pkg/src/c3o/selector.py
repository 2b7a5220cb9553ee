"""Dynamic model selection by cross-validated relative error."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import C3OError, NotEnoughData
from .predictors import (
    DEFAULT_K,
    FAMILIES,
    OPTIMISTIC,
    PESSIMISTIC,
    TrainedModel,
    train_optimistic,
    train_pessimistic,
)
from .repository import Point, RuntimeDataset, feature_weights

UNAVAILABLE = -1.0
FAILED_PREDICTION_ERROR = 1.0


@dataclass(frozen=True)
class SelectionReport:
    mrae: Mapping[str, float]
    folds: int
    chosen: str
    n_points: int

    def to_dict(self) -> dict:
        return {"mrae": dict(self.mrae), "folds": self.folds, "chosen": self.chosen, "n_points": self.n_points}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "SelectionReport":
        return cls({k: float(v) for k, v in obj["mrae"].items()}, int(obj["folds"]), obj["chosen"], int(obj["n_points"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def sort_points(points: Sequence[Point]) -> list[Point]:
    """Canonical order: lexicographic on feature values, then runtime."""
    return sorted(points, key=lambda p: (p[0].values, p[1]))


def train_family(
    family: str,
    points: Sequence[Point],
    k: int = DEFAULT_K,
    machine_names: Sequence[str] | None = None,
) -> TrainedModel:
    if family == PESSIMISTIC:
        return train_pessimistic(points, feature_weights(points), k)
    if family == OPTIMISTIC:
        return train_optimistic(points, machine_names=machine_names)
    raise ValueError(f"unknown model family {family!r}")


def cross_validate(points: Sequence[Point], model_family: str, folds: int = 5, k: int = DEFAULT_K) -> float:
    """Mean relative absolute error of ``model_family`` under k-fold CV.

    Points are sorted by feature vector and dealt round-robin into
    ``min(folds, n)`` folds. A held-out point whose fold model cannot be
    trained or cannot predict it counts with relative error 1.0.
    """
    if len(points) < 2:
        raise NotEnoughData(f"cross-validation needs >= 2 points, have {len(points)}")
    ordered = sort_points(points)
    n_folds = min(folds, len(ordered))
    errors = []
    for fold in range(n_folds):
        held = [p for i, p in enumerate(ordered) if i % n_folds == fold]
        train = [p for i, p in enumerate(ordered) if i % n_folds != fold]
        try:
            model = train_family(model_family, train, k)
        except C3OError:
            errors.extend([FAILED_PREDICTION_ERROR] * len(held))
            continue
        for fv, actual in held:
            try:
                errors.append(abs(model.predict(fv) - actual) / actual)
            except C3OError:
                errors.append(FAILED_PREDICTION_ERROR)
    return float(np.mean(errors))


def select_and_train(
    points: Sequence[Point],
    folds: int = 5,
    min_points_for_cv: int = 5,
    k: int = DEFAULT_K,
    machine_names: Sequence[str] | None = None,
) -> tuple[TrainedModel, SelectionReport]:
    """Pick the family with the lower CV error and retrain it on all points.

    Below ``min_points_for_cv`` points no CV is run and the optimistic model
    is used; both errors are then reported as -1.
    """
    if len(points) < 2:
        raise NotEnoughData(f"need >= 2 points, have {len(points)}")
    ordered = sort_points(points)
    if len(ordered) < min_points_for_cv:
        report = SelectionReport({f: UNAVAILABLE for f in FAMILIES}, 0, OPTIMISTIC, len(ordered))
    else:
        mrae = {f: cross_validate(ordered, f, folds, k) for f in FAMILIES}
        chosen = OPTIMISTIC if mrae[OPTIMISTIC] < mrae[PESSIMISTIC] else PESSIMISTIC
        report = SelectionReport(mrae, min(folds, len(ordered)), chosen, len(ordered))
    return train_family(report.chosen, ordered, k, machine_names), report


def retrain_on_arrival(
    current: tuple[TrainedModel, SelectionReport] | None,
    dataset: RuntimeDataset,
    **settings,
) -> tuple[TrainedModel, SelectionReport]:
    """Reselect and retrain from scratch on the dataset's collapsed view; ``current`` is discarded."""
    if not dataset.collapsed:
        raise NotEnoughData("dataset is empty")
    settings.setdefault("machine_names", tuple(m.name for m in dataset.catalog))
    return select_and_train(dataset.points(), **settings)
