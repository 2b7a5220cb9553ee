"""Runtime models trained on collapsed runtime data.

Two families share one contract (``train_*`` returns an immutable model with
``predict(FeatureVector) -> runtime_ms``):

``PessimisticModel``
    k-nearest-neighbour regression on min-max normalized features, where each
    feature's squared distance is weighted by its correlation with runtime.
    Good at reproducing recurring and densely covered configurations.

``OptimisticModel``
    Multiplicative decomposition ``R_ref * m(machine) * s(n)/s(n_ref) *
    prod_j g_j(x_j)`` assuming features act independently. The scale-out term
    ``s`` is parametric, so it extrapolates to unseen node counts.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.optimize import nnls

from .core import MACHINE_FEATURE, NODE_FEATURE, FeatureVector, NormalizationTable, normalize_features
from .errors import FeatureMismatch, NotEnoughData, UnknownMachineType
from .repository import CorrelationWeights, Point

PESSIMISTIC = "pessimistic"
OPTIMISTIC = "optimistic"
FAMILIES = (PESSIMISTIC, OPTIMISTIC)
MODEL_FORMAT = 1
DEFAULT_K = 3
EXACT_MATCH_DISTANCE = 1e-12


def _split(points: Sequence[Point]) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    if not points:
        raise NotEnoughData("no training points")
    names = points[0][0].names
    for fv, _ in points:
        if fv.names != names:
            raise FeatureMismatch(f"training features differ: {names} vs {fv.names}")
    X = np.array([fv.values for fv, _ in points], dtype=float).reshape(len(points), len(names))
    y = np.array([rt for _, rt in points], dtype=float)
    return names, X, y


def _check_query(names: tuple[str, ...], query: FeatureVector):
    if query.names != names:
        raise FeatureMismatch(f"model expects features {names}, got {query.names}")


# --- pessimistic -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PessimisticModel:
    names: tuple[str, ...]
    table: NormalizationTable
    weights: CorrelationWeights
    k: int
    train_X: np.ndarray  # normalized; machine-type column kept as raw index
    train_y: np.ndarray

    family = PESSIMISTIC

    def _encode(self, query: FeatureVector) -> np.ndarray:
        z = self.table.apply_array(query.as_array())
        if MACHINE_FEATURE in self.names:
            j = self.names.index(MACHINE_FEATURE)
            z[j] = query.values[j]
        return z

    def distances(self, query: FeatureVector) -> np.ndarray:
        _check_query(self.names, query)
        z = self._encode(query)
        delta = self.train_X - z
        if MACHINE_FEATURE in self.names:
            j = self.names.index(MACHINE_FEATURE)
            delta[:, j] = (delta[:, j] != 0).astype(float)
        w = self.weights.as_array()
        active = w > 0  # zero-weight features never contribute, even when their offset overflows
        with np.errstate(over="ignore"):
            return np.sqrt((delta[:, active] ** 2) @ w[active])

    def predict(self, query: FeatureVector) -> float:
        d = self.distances(query)
        exact = d < EXACT_MATCH_DISTANCE
        if exact.any():
            return float(np.mean(self.train_y[exact]))
        nearest = np.argsort(d, kind="stable")[: self.k]
        dk, yk = d[nearest], self.train_y[nearest]
        if np.isinf(dk).all() or dk.max() - dk.min() <= EXACT_MATCH_DISTANCE * dk.max():
            return float(np.mean(yk))
        w = 1.0 / dk
        return float(np.dot(w, yk) / w.sum())

    def to_dict(self) -> dict:
        return {
            "model_format": MODEL_FORMAT,
            "family": self.family,
            "names": list(self.names),
            "table": self.table.to_dict(),
            "weights": self.weights.to_dict(),
            "k": self.k,
            "train_X": self.train_X.tolist(),
            "train_y": self.train_y.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "PessimisticModel":
        names = tuple(obj["names"])
        return cls(
            names=names,
            table=NormalizationTable.from_dict(obj["table"]),
            weights=CorrelationWeights.from_dict(obj["weights"]),
            k=int(obj["k"]),
            train_X=np.array(obj["train_X"], dtype=float).reshape(-1, len(names)),
            train_y=np.array(obj["train_y"], dtype=float),
        )


def train_pessimistic(points: Sequence[Point], weights: CorrelationWeights, k: int = DEFAULT_K) -> PessimisticModel:
    """Store normalized training points; ``k`` is clamped to the number of points.

    Distance between normalized ``x`` and ``y`` is
    ``sqrt(sum_j w_j * delta_j**2)`` where ``delta_j`` is the absolute
    difference for numeric features and a same/different indicator for the
    machine-type index.
    """
    names, X, y = _split(points)
    if weights.names != names:
        raise FeatureMismatch(f"weights cover {weights.names}, points have {names}")
    if k < 1:
        raise ValueError("k must be >= 1")
    normalized, table = normalize_features([fv for fv, _ in points])
    train_X = np.array([fv.values for fv in normalized], dtype=float).reshape(len(points), len(names))
    if MACHINE_FEATURE in names:
        j = names.index(MACHINE_FEATURE)
        train_X[:, j] = X[:, j]
    return PessimisticModel(names, table, weights, min(k, len(points)), train_X, y)


def predict_pessimistic(model: PessimisticModel, query: FeatureVector) -> float:
    return model.predict(query)


# --- scale-out -------------------------------------------------------------


def scaleout_basis(n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return np.stack([np.ones_like(n), 1.0 / n, np.log2(n), n], axis=-1)


def scaleout_curve(theta: Sequence[float], n) -> np.ndarray:
    return scaleout_basis(n) @ np.asarray(theta, dtype=float)


def fit_scaleout(points: Sequence[tuple[float, float]]) -> tuple[float, float, float, float]:
    """Non-negative least squares fit of ``t0 + t1/n + t2*log2(n) + t3*n``.

    With fewer than four distinct node counts the trailing terms are dropped
    (``t3`` first, then ``t2``) and reported as zero.
    """
    n = np.array([p[0] for p in points], dtype=float)
    t = np.array([p[1] for p in points], dtype=float)
    distinct = len(np.unique(n))
    if distinct < 2:
        raise NotEnoughData(f"need >= 2 distinct node counts, have {distinct}")
    terms = min(4, distinct)
    A = scaleout_basis(n)[:, :terms]
    # column scaling keeps the active-set solver well conditioned
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    x, _ = nnls(A / norms, t)
    theta = np.zeros(4)
    theta[:terms] = x / norms
    return tuple(float(v) for v in theta)


# --- optimistic ------------------------------------------------------------


def _interp(x, xs: np.ndarray, fs: np.ndarray):
    """Clamped linear interpolation through the knots ``(xs, fs)``.

    Works with the fraction ``(x - x0) / (x1 - x0)`` rather than a slope, so
    knots closer together than the factor values never overflow.
    """
    x = np.asarray(x, dtype=float)
    if len(xs) == 1:
        return np.full(x.shape, fs[0]) if x.ndim else float(fs[0])
    i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
    x0, x1 = xs[i], xs[i + 1]
    with np.errstate(over="ignore"):
        t = np.clip((x - x0) / (x1 - x0), 0.0, 1.0)
    out = fs[i] + t * (fs[i + 1] - fs[i])
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class PiecewiseFactor:
    """Linear interpolation between knots, clamped to the end knots outside their range."""

    xs: tuple[float, ...]
    factors: tuple[float, ...]

    def __call__(self, x):
        return _interp(x, np.asarray(self.xs), np.asarray(self.factors))

    def to_dict(self) -> dict:
        return {"xs": list(self.xs), "factors": list(self.factors)}


@dataclass(frozen=True, eq=False)
class OptimisticModel:
    names: tuple[str, ...]
    reference: FeatureVector
    reference_runtime: float
    scaleout_params: tuple[float, float, float, float] | None
    feature_factors: Mapping[str, PiecewiseFactor]
    machine_factors: Mapping[int, float]
    machine_names: tuple[str, ...] | None = None
    rounds: int = 0

    family = OPTIMISTIC

    def machine_label(self, index: int) -> str:
        if self.machine_names is not None and 0 <= index < len(self.machine_names):
            return self.machine_names[index]
        return str(index)

    def scale_ratio(self, n: float) -> float:
        if self.scaleout_params is None:
            return 1.0
        s = float(scaleout_curve(self.scaleout_params, n))
        return s / float(scaleout_curve(self.scaleout_params, self.reference[NODE_FEATURE]))

    def predict(self, query: FeatureVector) -> float:
        _check_query(self.names, query)
        runtime = self.reference_runtime
        if MACHINE_FEATURE in self.names:
            index = int(query[MACHINE_FEATURE])
            if index not in self.machine_factors:
                raise UnknownMachineType(self.machine_label(index))
            runtime *= self.machine_factors[index]
        if NODE_FEATURE in self.names:
            runtime *= self.scale_ratio(query[NODE_FEATURE])
        for name, factor in self.feature_factors.items():
            runtime *= float(factor(query[name]))
        return float(runtime)

    def to_dict(self) -> dict:
        return {
            "model_format": MODEL_FORMAT,
            "family": self.family,
            "names": list(self.names),
            "reference": self.reference.to_dict(),
            "reference_runtime": self.reference_runtime,
            "scaleout_params": None if self.scaleout_params is None else list(self.scaleout_params),
            "feature_factors": {k: f.to_dict() for k, f in self.feature_factors.items()},
            "machine_factors": {str(k): v for k, v in self.machine_factors.items()},
            "machine_names": None if self.machine_names is None else list(self.machine_names),
            "rounds": self.rounds,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "OptimisticModel":
        theta = obj["scaleout_params"]
        names = obj["machine_names"]
        return cls(
            names=tuple(obj["names"]),
            reference=FeatureVector.from_dict(obj["reference"]),
            reference_runtime=float(obj["reference_runtime"]),
            scaleout_params=None if theta is None else tuple(float(v) for v in theta),
            feature_factors={
                k: PiecewiseFactor(tuple(f["xs"]), tuple(f["factors"])) for k, f in obj["feature_factors"].items()
            },
            machine_factors={int(k): float(v) for k, v in obj["machine_factors"].items()},
            machine_names=None if names is None else tuple(names),
            rounds=int(obj.get("rounds", 0)),
        )


def _geomean(v: np.ndarray) -> float:
    return float(np.exp(np.mean(np.log(v))))


def default_reference(points: Sequence[Point]) -> FeatureVector:
    """Coordinate-wise median; the machine type is the most frequent one (lowest index on ties)."""
    names, X, _ = _split(points)
    ref = np.median(X, axis=0)
    if MACHINE_FEATURE in names:
        j = names.index(MACHINE_FEATURE)
        labels, counts = np.unique(X[:, j], return_counts=True)
        ref[j] = labels[np.argmax(counts)]
    return FeatureVector(names, tuple(ref))


def _group_geomean(keys: np.ndarray, ratios: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    labels, inverse = np.unique(keys, return_inverse=True)
    logs = np.bincount(inverse, weights=np.log(ratios)) / np.bincount(inverse)
    return labels, np.exp(logs)


def train_optimistic(
    points: Sequence[Point],
    reference: FeatureVector | None = None,
    machine_names: Sequence[str] | None = None,
    max_rounds: int = 10,
    tol: float = 1e-6,
) -> OptimisticModel:
    """Fit the multiplicative independent-factor model by backfitting.

    Each round refits the scale-out curve on runtimes divided by the other
    factors, then every numeric feature's knot factors (geometric mean of
    residual ratios per distinct value), then the per-machine factors. Factors
    are renormalized to 1 at ``reference`` and the leftover scale goes into
    the reference runtime. Stops after ``max_rounds`` or once no factor moves
    by more than ``tol`` relatively.
    """
    names, X, y = _split(points)
    if len(points) < 2:
        raise NotEnoughData(f"need >= 2 training points, have {len(points)}")
    if reference is None:
        reference = default_reference(points)
    _check_query(names, reference)
    ref = reference.as_array()

    mcol = names.index(MACHINE_FEATURE) if MACHINE_FEATURE in names else None
    ncol = names.index(NODE_FEATURE) if NODE_FEATURE in names else None
    numeric = [j for j in range(len(names)) if j not in (mcol, ncol)]

    machines = X[:, mcol].astype(int) if mcol is not None else np.zeros(len(y), dtype=int)
    ref_machine = int(ref[mcol]) if mcol is not None else 0
    if ref_machine not in machines:
        raise UnknownMachineType(str(ref_machine))
    machine_vals = {int(m): 1.0 for m in np.unique(machines)}
    mvec = np.ones(len(y))

    knots = {j: np.unique(X[:, j]) for j in numeric}
    knot_vals = {j: np.ones(len(knots[j])) for j in numeric}
    G = np.ones((len(y), len(numeric)))

    nodes = X[:, ncol] if ncol is not None else None
    fit_scale = nodes is not None and len(np.unique(nodes)) >= 2
    theta = None
    S = np.ones(len(y))
    R = _geomean(y)

    def snapshot():
        parts = [S, np.array(list(machine_vals.values()))] + [knot_vals[j] for j in numeric]
        return np.concatenate(parts)

    rounds = 0
    for rounds in range(1, max_rounds + 1):
        before = snapshot()
        if fit_scale:
            adjusted = y / (mvec * G.prod(axis=1))
            theta = fit_scaleout(list(zip(nodes, adjusted)))
            s_train = scaleout_curve(theta, nodes)
            s_ref = float(scaleout_curve(theta, ref[ncol]))
            if s_ref <= 0 or np.any(s_train <= 0) or scaleout_curve(theta, 1.0) <= 0:
                # only the log term survived, so s(1) = 0; positivity for every n >= 1 needs a flat curve
                theta = (_geomean(adjusted), 0.0, 0.0, 0.0)
                s_train, s_ref = np.full(len(y), theta[0]), theta[0]
            S = s_train / s_ref
        R = _geomean(y / (mvec * S * G.prod(axis=1)))

        for col, j in enumerate(numeric):
            if len(knots[j]) < 2:
                continue
            others = np.delete(G, col, axis=1).prod(axis=1)
            _, vals = _group_geomean(X[:, j], y / (R * mvec * S * others))
            vals = vals / _interp(ref[j], knots[j], vals)
            knot_vals[j] = vals
            G[:, col] = _interp(X[:, j], knots[j], vals)
            R = _geomean(y / (mvec * S * G.prod(axis=1)))

        if len(machine_vals) > 1:
            labels, vals = _group_geomean(machines, y / (R * S * G.prod(axis=1)))
            vals = vals / vals[list(labels).index(ref_machine)]
            machine_vals = {int(m): float(v) for m, v in zip(labels, vals)}
            mvec = np.array([machine_vals[int(m)] for m in machines])
            R = _geomean(y / (mvec * S * G.prod(axis=1)))

        after = snapshot()
        if np.max(np.abs(after - before) / before) < tol:
            break

    factors = {
        names[j]: PiecewiseFactor(tuple(float(x) for x in knots[j]), tuple(float(v) for v in knot_vals[j]))
        for j in numeric
        if len(knots[j]) >= 2
    }
    return OptimisticModel(
        names=names,
        reference=reference,
        reference_runtime=R,
        scaleout_params=None if theta is None else tuple(float(v) for v in theta),
        feature_factors=factors,
        machine_factors=machine_vals,
        machine_names=None if machine_names is None else tuple(machine_names),
        rounds=rounds,
    )


def predict_optimistic(model: OptimisticModel, query: FeatureVector) -> float:
    return model.predict(query)


# --- shared ----------------------------------------------------------------

TrainedModel = Union[PessimisticModel, OptimisticModel]


def model_to_dict(model: TrainedModel) -> dict:
    return model.to_dict()


def model_from_dict(obj: Mapping) -> TrainedModel:
    if obj.get("model_format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model_format {obj.get('model_format')!r}")
    family = obj.get("family")
    if family == PESSIMISTIC:
        return PessimisticModel.from_dict(obj)
    if family == OPTIMISTIC:
        return OptimisticModel.from_dict(obj)
    raise ValueError(f"unknown model family {family!r}")
