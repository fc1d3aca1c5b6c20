"""Exact Shapley attributions over appliance channels, attribution entropy,
and the differentiable entropy term used as a training regularizer.

A player is a group of cells of the (T, D) window. With the default
``"channel"`` granularity, player i is the whole length-T series of channel
i. A coalition keeps its players' cells at their true values and replaces
everything else with the baseline window. Because every Shapley value is a
fixed linear combination of the 2^P coalition outputs, the composition
shapley -> normalize -> entropy stays differentiable with respect to the
model parameters.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from . import forecaster as fc
from . import numkit as nk

MAX_PLAYERS = 20
EPS = 1e-12
ATTRIBUTION_FORMAT_VERSION = 1


class EnumerationLimit(ValueError):
    """More players than exact enumeration allows."""


# ---------------------------------------------------------------- coalitions


def player_masks(T: int, D: int, granularity: str = "channel") -> np.ndarray:
    """Boolean (P, T, D) array: which window cells each player owns."""
    if granularity == "channel":
        masks = np.zeros((D, T, D), dtype=bool)
        for i in range(D):
            masks[i, :, i] = True
    elif granularity == "timestep":
        masks = np.zeros((T, T, D), dtype=bool)
        for t in range(T):
            masks[t, t, :] = True
    else:
        raise ValueError(f"unknown granularity {granularity!r}")
    return masks


@lru_cache(maxsize=32)
def coalition_bits(P: int) -> np.ndarray:
    """(2^P, P) membership table; row s is the coalition whose bitmask is s."""
    if P > MAX_PLAYERS:
        raise EnumerationLimit(f"{P} players exceed the exact-enumeration limit of {MAX_PLAYERS}")
    s = np.arange(2**P, dtype=np.int64)[:, None]
    bits = ((s >> np.arange(P)) & 1).astype(bool)
    bits.setflags(write=False)
    return bits


@lru_cache(maxsize=32)
def shapley_matrix(P: int) -> np.ndarray:
    """(2^P, P) matrix M with phi = v @ M for coalition values v.

    For player i and coalition S:
    ``M[S, i] = w(|S| - 1)`` if i is in S and ``-w(|S|)`` otherwise, where
    ``w(k) = k! (P - k - 1)! / P!``.
    """
    bits = coalition_bits(P)
    size = bits.sum(axis=1)
    w = np.array([math.factorial(k) * math.factorial(P - k - 1) / math.factorial(P) for k in range(P)])
    M = np.where(bits, w[np.clip(size - 1, 0, P - 1)][:, None], -w[np.clip(size, 0, P - 1)][:, None])
    M.setflags(write=False)
    return M


def coalition_inputs(x: np.ndarray, baseline: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """All 2^P hybrid windows for each window in ``x``.

    ``x`` is (N, T, D); the result is (N * 2^P, T, D), window-major.
    """
    P = masks.shape[0]
    bits = coalition_bits(P)
    keep = np.einsum("sp,ptd->std", bits.astype(np.float64), masks.astype(np.float64)) > 0
    x = np.asarray(x, dtype=np.float64)
    hybrid = np.where(keep[None], x[:, None], np.asarray(baseline, dtype=np.float64)[None, None])
    return hybrid.reshape(-1, *x.shape[1:])


# -------------------------------------------------------------------- shapley


def shapley_exact(model_fn: Callable[[np.ndarray], np.ndarray], x, baseline, granularity: str = "channel") -> np.ndarray:
    """Exact Shapley values of one (T, D) window.

    ``model_fn`` maps a (M, T, D) batch to M outputs.
    """
    x = np.asarray(x, dtype=np.float64)
    return shapley_batch(model_fn, x[None], baseline, granularity)[0]


def shapley_batch(model_fn, X, baseline, granularity: str = "channel", chunk: int = 64) -> np.ndarray:
    """Exact Shapley values for each window of a (N, T, D) batch; returns (N, P)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise nk.ShapeError(f"expected (N, T, D) windows, got {X.shape}")
    N, T, D = X.shape
    baseline = np.broadcast_to(np.asarray(baseline, dtype=np.float64), (T, D))
    masks = player_masks(T, D, granularity)
    P = masks.shape[0]
    M = shapley_matrix(P)
    out = np.empty((N, P))
    for start in range(0, N, chunk):
        part = X[start : start + chunk]
        values = np.asarray(model_fn(coalition_inputs(part, baseline, masks)), dtype=np.float64)
        if values.shape != (len(part) * 2**P,):
            raise nk.ShapeError(f"model_fn returned shape {values.shape}")
        if not np.isfinite(values).all():
            raise nk.NonFiniteError("model output is not finite")
        out[start : start + len(part)] = values.reshape(len(part), 2**P) @ M
    return out


def shapley_permutation(model_fn, x, baseline, n_permutations: int, seed: int = 0, granularity: str = "channel"):
    """Monte Carlo Shapley estimate from random player orderings.

    Returns ``(mean, standard_error)``. The coalition values are cached, so
    each permutation only costs table lookups.
    """
    x = np.asarray(x, dtype=np.float64)
    T, D = x.shape
    masks = player_masks(T, D, granularity)
    P = masks.shape[0]
    values = np.asarray(model_fn(coalition_inputs(x[None], np.broadcast_to(baseline, (T, D)), masks)))
    rng = np.random.default_rng(seed)
    perms = np.argsort(rng.random((n_permutations, P)), axis=1)
    codes = np.cumsum(1 << perms, axis=1)
    prev = np.concatenate([np.zeros((n_permutations, 1), dtype=np.int64), codes[:, :-1]], axis=1)
    marg = values[codes] - values[prev]
    contrib = np.zeros((n_permutations, P))
    np.put_along_axis(contrib, perms, marg, axis=1)
    return contrib.mean(axis=0), contrib.std(axis=0, ddof=1) / math.sqrt(n_permutations)


# ------------------------------------------------------------------- entropy


def normalize_attribution(phi, eps: float = EPS) -> np.ndarray:
    """``(|phi_i| + eps) / sum_j (|phi_j| + eps)`` along the last axis."""
    a = np.abs(np.asarray(phi, dtype=np.float64)) + eps
    if a.shape[-1] < 1:
        raise ValueError("attribution vector is empty")
    return a / a.sum(axis=-1, keepdims=True)


def shap_entropy(phi_norm) -> np.ndarray | float:
    """Shannon entropy in nats along the last axis; zero entries contribute 0."""
    p = np.asarray(phi_norm, dtype=np.float64)
    safe = np.where(p > 0, p, 1.0)
    h = -np.sum(np.where(p > 0, p * np.log(safe), 0.0), axis=-1)
    h = np.maximum(h, 0.0)
    return float(h) if np.ndim(h) == 0 else h


def entropy_penalty(H, alpha: float):
    """Quadratic pull of the entropy towards the target ``alpha``."""
    return (alpha - H) * (alpha - H)


def differentiable_batch_entropy(
    params: fc.LstmParams,
    X_sub,
    baseline,
    leaves: dict[str, nk.Tensor],
    granularity: str = "channel",
    eps: float = EPS,
) -> nk.Tensor:
    """Mean attribution entropy of the windows in ``X_sub``, recorded on the
    tape that owns ``leaves``.

    Coalition outputs come from eval-mode forwards, so no dropout randomness is
    consumed and the value equals the non-differentiable path exactly.
    """
    X_sub = np.asarray(X_sub, dtype=np.float64)
    if X_sub.ndim != 3 or X_sub.shape[0] < 1:
        raise nk.ShapeError(f"expected a non-empty (k, T, D) batch, got {X_sub.shape}")
    k, T, D = X_sub.shape
    masks = player_masks(T, D, granularity)
    P = masks.shape[0]
    M = shapley_matrix(P)
    hybrid = coalition_inputs(X_sub, np.broadcast_to(baseline, (T, D)), masks)
    values, _ = fc.forward_batch(params, hybrid, mode="eval", leaves=leaves)
    phi = nk.matmul(values.reshape(k, 2**P), M)
    p = nk.normalize(nk.abs_(phi) + eps, axis=-1)
    H = -nk.sum_(p * nk.log(p), axis=-1)
    return nk.mean(H)


def model_fn_for(params: fc.LstmParams) -> Callable[[np.ndarray], np.ndarray]:
    return lambda batch: fc.predict(params, batch)


def mean_profile(inputs: np.ndarray) -> np.ndarray:
    """Per-cell mean window of a training set, the default coalition baseline."""
    return np.asarray(inputs, dtype=np.float64).mean(axis=0)


# ----------------------------------------------------------- attribution sets


@dataclass
class Attribution:
    phi: np.ndarray
    phi_norm: np.ndarray
    entropy: float
    sample_id: int


@dataclass
class AttributionMatrix:
    phi: np.ndarray  # (N, P) raw Shapley values
    sample_ids: np.ndarray  # (N,) int
    membership: np.ndarray  # (N,) bool, True = training member
    feature_names: tuple[str, ...]
    model_id: str = "model"
    target_hours: np.ndarray | None = None  # hour of day of each window's target
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.phi.ndim != 2:
            raise ValueError(f"phi must be (N, P), got {self.phi.shape}")
        n, d = self.phi.shape
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        self.membership = np.asarray(self.membership, dtype=bool)
        if self.sample_ids.shape != (n,) or self.membership.shape != (n,):
            raise ValueError("sample_ids and membership must have one entry per row")
        if len(self.feature_names) != d:
            raise ValueError("feature_names does not match the attribution width")
        if not np.isfinite(self.phi).all():
            raise ValueError("attributions must be finite")
        if self.target_hours is not None:
            self.target_hours = np.asarray(self.target_hours, dtype=np.int64)

    def __len__(self) -> int:
        return self.phi.shape[0]

    @property
    def n_features(self) -> int:
        return self.phi.shape[1]

    @property
    def phi_norm(self) -> np.ndarray:
        return normalize_attribution(self.phi)

    @property
    def entropy(self) -> np.ndarray:
        return shap_entropy(self.phi_norm)

    def rows(self):
        for i in range(len(self)):
            yield Attribution(self.phi[i], self.phi_norm[i], float(self.entropy[i]), int(self.sample_ids[i]))

    def select(self, mask) -> AttributionMatrix:
        mask = np.asarray(mask)
        return AttributionMatrix(
            phi=self.phi[mask],
            sample_ids=self.sample_ids[mask],
            membership=self.membership[mask],
            feature_names=self.feature_names,
            model_id=self.model_id,
            target_hours=None if self.target_hours is None else self.target_hours[mask],
            meta=dict(self.meta),
        )


def explain_dataset(params, inputs, baseline, sample_ids, membership, feature_names, model_id, target_hours=None,
                    granularity: str = "channel") -> AttributionMatrix:
    phi = shapley_batch(model_fn_for(params), inputs, baseline, granularity)
    if granularity == "timestep":
        feature_names = tuple(f"t{t}" for t in range(phi.shape[1]))
    return AttributionMatrix(
        phi=phi,
        sample_ids=sample_ids,
        membership=membership,
        feature_names=tuple(feature_names),
        model_id=model_id,
        target_hours=target_hours,
        meta={"granularity": granularity},
    )


def save_attributions(am: AttributionMatrix, path, baseline_spec: str = "train_mean_profile") -> tuple[Path, Path]:
    """CSV (sample_id, membership_flag, [target_hour,] phi_1..phi_P, entropy) plus a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    P = am.n_features
    ent = am.entropy
    header = ["sample_id", "membership_flag"]
    if am.target_hours is not None:
        header.append("target_hour")
    header += [f"phi_{i + 1}" for i in range(P)] + ["entropy"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(am)):
            row = [int(am.sample_ids[i]), int(am.membership[i])]
            if am.target_hours is not None:
                row.append(int(am.target_hours[i]))
            row += [repr(float(v)) for v in am.phi[i]] + [repr(float(ent[i]))]
            w.writerow(row)
    sidecar = path.with_suffix(".json")
    sidecar.write_text(
        json.dumps(
            {
                "format_version": ATTRIBUTION_FORMAT_VERSION,
                "feature_names": list(am.feature_names),
                "model_id": am.model_id,
                "baseline": baseline_spec,
                "n_rows": len(am),
                "meta": am.meta,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return path, sidecar


def load_attributions(path) -> AttributionMatrix:
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    if side.get("format_version") != ATTRIBUTION_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version {side.get('format_version')}")
    names = tuple(side["feature_names"])
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    P = len(names)
    phi_cols = [header.index(f"phi_{i + 1}") for i in range(P)]
    has_hour = "target_hour" in header
    try:
        phi = np.array([[float(r[j]) for j in phi_cols] for r in rows]).reshape(len(rows), P)
        ids = [int(r[0]) for r in rows]
        member = [r[1] == "1" for r in rows]
        hours = [int(r[header.index("target_hour")]) for r in rows] if has_hour else None
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed attribution row ({exc})") from None
    return AttributionMatrix(
        phi=phi,
        sample_ids=ids,
        membership=member,
        feature_names=names,
        model_id=side["model_id"],
        target_hours=hours,
        meta=side.get("meta", {}),
    )
