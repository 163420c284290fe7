"""Shapley-value attributions for trained classifiers.

Coalition value v(S) is the mean model output over a background set
with the features in S taken from the explained instance.  Exact mode
enumerates all coalitions (feature count capped at 15); sampled mode
averages marginal contributions over antithetic permutation pairs and
then distributes the efficiency residual proportionally to |phi|.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import SuspkitError
from .suspension_model import FeatureMatrix, SchemaMismatch, TrainedModel

MAX_EXACT_FEATURES = 15

Predictor = Callable[[np.ndarray], np.ndarray]


class TooManyFeatures(SuspkitError):
    pass


@dataclass
class Explanation:
    feature_names: tuple[str, ...]
    values: np.ndarray  # instance feature values as the model saw them
    phi: np.ndarray
    base_value: float
    output: float
    user_id: str = ""

    @property
    def efficiency_gap(self) -> float:
        return float(abs(self.phi.sum() + self.base_value - self.output))


def _as_2d(background: np.ndarray) -> np.ndarray:
    background = np.asarray(background, dtype=np.float64)
    if background.ndim != 2 or background.shape[0] == 0:
        raise ValueError("background must be a non-empty 2-D array")
    return background


def _coalition_values(
    predict: Predictor, x: np.ndarray, background: np.ndarray, bits: np.ndarray
) -> np.ndarray:
    """Mean output per coalition; predictions batched across
    coalitions to keep call counts low."""
    r, m = background.shape
    n_subsets = bits.shape[0]
    v = np.empty(n_subsets)
    chunk = max(1, 65536 // r)
    for start in range(0, n_subsets, chunk):
        block_bits = bits[start : start + chunk]
        b = block_bits.shape[0]
        stacked = np.broadcast_to(background, (b, r, m)).copy()
        mask = np.broadcast_to(block_bits[:, None, :], (b, r, m))
        stacked[mask] = np.broadcast_to(x, (b, r, m))[mask]
        preds = predict(stacked.reshape(b * r, m)).reshape(b, r)
        v[start : start + b] = preds.mean(axis=1)
    return v


def shapley_exact(
    predict: Predictor, x: np.ndarray, background: np.ndarray
) -> tuple[np.ndarray, float, float]:
    """Exact Shapley attribution by full coalition enumeration.

    Returns (phi, base_value, output) where base_value = v(empty set)
    and output = f(x).
    """
    x = np.asarray(x, dtype=np.float64)
    background = _as_2d(background)
    m = x.shape[0]
    if background.shape[1] != m:
        raise SchemaMismatch("background width differs from the instance")
    if m > MAX_EXACT_FEATURES:
        raise TooManyFeatures(f"{m} features exceeds the exact-mode cap of {MAX_EXACT_FEATURES}")

    masks = np.arange(2**m, dtype=np.uint32)
    bits = ((masks[:, None] >> np.arange(m, dtype=np.uint32)) & 1).astype(bool)
    v = _coalition_values(predict, x, background, bits)
    sizes = bits.sum(axis=1)

    fact = [math.factorial(i) for i in range(m + 1)]
    weights = np.array([fact[s] * fact[m - s - 1] / fact[m] for s in range(m)])

    phi = np.empty(m)
    for i in range(m):
        without = np.flatnonzero(~bits[:, i])
        gains = v[without + (1 << i)] - v[without]
        phi[i] = float(np.sum(weights[sizes[without]] * gains))
    return phi, float(v[0]), float(v[-1])


def shapley_sampled(
    predict: Predictor,
    x: np.ndarray,
    background: np.ndarray,
    samples: int = 64,
    seed: int = 0,
) -> tuple[np.ndarray, float, float]:
    """Permutation-sampling Shapley estimate with antithetic pairs.

    The efficiency residual is redistributed proportionally to |phi|
    so that sum(phi) + base_value equals the instance output.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    background = _as_2d(background)
    r, m = background.shape
    if m != x.shape[0]:
        raise SchemaMismatch("background width differs from the instance")

    rng = np.random.default_rng(seed)
    perms = []
    while len(perms) < samples:
        perm = rng.permutation(m)
        perms.append(perm)
        if len(perms) < samples:
            perms.append(perm[::-1])

    base_value = float(predict(background).mean())
    output = float(predict(x[None, :])[0])

    phi = np.zeros(m)
    for perm in perms:
        # Position j of the stack has the first j permuted features
        # from the instance; m+1 coalition rows per permutation.
        stacked = np.broadcast_to(background, (m + 1, r, m)).copy()
        for j, feat in enumerate(perm):
            stacked[j + 1 :, :, feat] = x[feat]
        v = predict(stacked.reshape((m + 1) * r, m)).reshape(m + 1, r).mean(axis=1)
        phi[perm] += np.diff(v)
    phi /= len(perms)

    residual = (output - base_value) - phi.sum()
    weights = np.abs(phi)
    total = weights.sum()
    if total > 0.0:
        phi += residual * weights / total
    else:
        phi += residual / m
    return phi, base_value, output


def explain_matrix(
    model: TrainedModel,
    matrix: FeatureMatrix,
    background: FeatureMatrix,
    rows: Sequence[int] | None = None,
    background_size: int = 100,
    samples: int = 64,
    seed: int = 0,
    method: str = "auto",
) -> list[Explanation]:
    """Explanations for selected rows of a matrix, using a seeded
    background sample drawn from the training matrix."""
    if matrix.feature_names != model.input_feature_names:
        raise SchemaMismatch("matrix schema differs from the model's")
    if background.feature_names != model.input_feature_names:
        raise SchemaMismatch("background schema differs from the model's")
    names = model.feature_names
    m = len(names)
    if method == "auto":
        method = "exact" if m <= MAX_EXACT_FEATURES else "sampled"
    if method not in ("exact", "sampled"):
        raise ValueError(f"unknown method {method!r}")

    def imputed_selected(fm: FeatureMatrix) -> np.ndarray:
        X = fm.X[:, model.selection_mask]
        out = np.array(X, copy=True)
        missing = np.isnan(out)
        out[missing] = np.broadcast_to(model.medians, out.shape)[missing]
        return out

    rng = np.random.default_rng(seed)
    bg = imputed_selected(background)
    if bg.shape[0] > background_size:
        bg = bg[np.sort(rng.choice(bg.shape[0], size=background_size, replace=False))]

    X = imputed_selected(matrix)
    if rows is None:
        rows = range(matrix.n)
    predict = model.predict_proba_selected
    explanations = []
    for i in rows:
        if method == "exact":
            phi, base, out = shapley_exact(predict, X[i], bg)
        else:
            phi, base, out = shapley_sampled(predict, X[i], bg, samples=samples, seed=seed)
        explanations.append(
            Explanation(
                feature_names=names,
                values=X[i].copy(),
                phi=phi,
                base_value=base,
                output=out,
                user_id=matrix.user_ids[i],
            )
        )
    return explanations


@dataclass
class ImpactSummary:
    feature_names: tuple[str, ...]
    mean_abs_phi: np.ndarray
    ranking: list[str]  # names sorted by mean |phi| descending
    scatter: dict[str, list[tuple[float, float]]]  # name -> (value, phi)

    def rank_of(self, name: str) -> int:
        return self.ranking.index(name) + 1


def impact_summary(explanations: Sequence[Explanation]) -> ImpactSummary:
    if not explanations:
        raise ValueError("need at least one explanation")
    names = explanations[0].feature_names
    for exp in explanations[1:]:
        if exp.feature_names != names:
            raise SchemaMismatch("explanations disagree on feature schema")
    phis = np.stack([exp.phi for exp in explanations])
    mean_abs = np.abs(phis).mean(axis=0)
    order = sorted(range(len(names)), key=lambda i: (-mean_abs[i], i))
    scatter = {
        name: [(float(exp.values[i]), float(exp.phi[i])) for exp in explanations]
        for i, name in enumerate(names)
    }
    return ImpactSummary(
        feature_names=names,
        mean_abs_phi=mean_abs,
        ranking=[names[i] for i in order],
        scatter=scatter,
    )


def write_explanations_csv(path: str | Path, explanations: Sequence[Explanation]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "feature", "value", "phi"])
        for exp in explanations:
            for i, name in enumerate(exp.feature_names):
                writer.writerow([exp.user_id, name, repr(float(exp.values[i])),
                                 repr(float(exp.phi[i]))])


def write_summary_csv(path: str | Path, summary: ImpactSummary) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "mean_abs_phi", "rank"])
        index = {name: i for i, name in enumerate(summary.feature_names)}
        for rank, name in enumerate(summary.ranking, start=1):
            writer.writerow([name, repr(float(summary.mean_abs_phi[index[name]])), rank])
