"""Explanation-only privacy attacks.

Every attack reads attribution vectors and nothing else: no parameters, no
training data. Each target row gets a score, and ``direction`` says which end
of the scale points to "training member". The reference-based attacks compare
a target with a set of attributions the adversary knows to come from training
members. By default they keep the nearest reference (max similarity or min
divergence); ``aggregate="mean"`` averages over all references instead.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .explainer import AttributionMatrix, shap_entropy

HIGHER = "higher_means_member"
LOWER = "lower_means_member"
REPORT_FORMAT_VERSION = 1

ATTACKS = ("entropy", "similarity", "divergence", "rank_correlation", "rank_consistency")
DIRECTIONS = {
    "entropy": LOWER,
    "similarity": HIGHER,
    "divergence": LOWER,
    "rank_correlation": HIGHER,
    "rank_consistency": HIGHER,
}


@dataclass
class AttackScore:
    attack_name: str
    sample_ids: np.ndarray
    scores: np.ndarray
    direction: str
    membership: np.ndarray | None = None
    flags: np.ndarray | None = None  # True where the score fell back to a convention

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores))

    @property
    def std(self) -> float:
        return float(np.std(self.scores))

    @property
    def per_sample(self) -> list[tuple[int, float]]:
        return [(int(i), float(s)) for i, s in zip(self.sample_ids, self.scores)]


def _check_width(targets: AttributionMatrix, references: AttributionMatrix):
    if len(targets) == 0 or len(references) == 0:
        raise ValueError("attack needs non-empty target and reference sets")
    if targets.n_features != references.n_features:
        raise ValueError(f"dimension mismatch: {targets.n_features} vs {references.n_features} features")


def _reduce(pairwise: np.ndarray, how: str) -> np.ndarray:
    if how == "max":
        return pairwise.max(axis=1)
    if how == "min":
        return pairwise.min(axis=1)
    if how == "mean":
        return pairwise.mean(axis=1)
    raise ValueError(f"unknown aggregation {how!r}")


def _score(name, targets, values, flags=None) -> AttackScore:
    return AttackScore(name, targets.sample_ids.copy(), values, DIRECTIONS[name], targets.membership.copy(), flags)


# ----------------------------------------------------------- pairwise metrics


def cosine_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity; any pair involving a zero vector scores 0."""
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    dots = A @ B.T
    denom = np.outer(na, nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(out, -1.0, 1.0)


def _xlogy_ratio(p: np.ndarray, m: np.ndarray) -> np.ndarray:
    safe_p = np.where(p > 0, p, 1.0)
    safe_m = np.where(m > 0, m, 1.0)
    return np.where(p > 0, p * np.log(safe_p / safe_m), 0.0)


def jsd(P, Q) -> np.ndarray | float:
    """Jensen-Shannon divergence in nats along the last axis (0 log 0 = 0)."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    M = 0.5 * (P + Q)
    out = 0.5 * _xlogy_ratio(P, M).sum(axis=-1) + 0.5 * _xlogy_ratio(Q, M).sum(axis=-1)
    out = np.clip(out, 0.0, math.log(2.0))
    return float(out) if np.ndim(out) == 0 else out


def jsd_matrix(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    return jsd(P[:, None, :], Q[None, :, :])


def _check_distributions(P: np.ndarray, what: str):
    if np.any(P < 0) or not np.allclose(P.sum(axis=-1), 1.0, atol=1e-9):
        raise ValueError(f"{what} rows are not probability distributions")


def importance_ranks(phi: np.ndarray, signed: bool = False) -> np.ndarray:
    """Average ranks (1 = least important) of |phi| along each row."""
    values = phi if signed else np.abs(phi)
    return rankdata(values, axis=1, method="average")


def spearman_matrix(R: np.ndarray, S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise Spearman rho from rank rows.

    Tie-free pairs use ``1 - 6 sum d^2 / (d (d^2 - 1))``; pairs with ties use
    the Pearson correlation of the average ranks. Pairs where either side is
    constant are undefined: they score 0 and are flagged.
    """
    d = R.shape[1]
    if d < 2:
        raise ValueError("rank correlation needs at least 2 features")
    sq = (R**2).sum(1)[:, None] + (S**2).sum(1)[None, :] - 2.0 * R @ S.T
    closed = 1.0 - 6.0 * sq / (d * (d * d - 1))
    Rc = R - R.mean(axis=1, keepdims=True)
    Sc = S - S.mean(axis=1, keepdims=True)
    nr = np.linalg.norm(Rc, axis=1)
    ns = np.linalg.norm(Sc, axis=1)
    undefined = (nr == 0)[:, None] | (ns == 0)[None, :]
    denom = np.where(undefined, 1.0, np.outer(nr, ns))
    pearson = (Rc @ Sc.T) / denom
    ties = _has_ties(R)[:, None] | _has_ties(S)[None, :]
    rho = np.where(ties, pearson, closed)
    rho = np.where(undefined, 0.0, rho)
    return np.clip(rho, -1.0, 1.0), undefined


def _has_ties(R: np.ndarray) -> np.ndarray:
    s = np.sort(R, axis=1)
    return np.any(s[:, 1:] == s[:, :-1], axis=1)


def _pair_signs(R: np.ndarray) -> np.ndarray:
    d = R.shape[1]
    i, j = np.triu_indices(d, k=1)
    return np.sign(R[:, i] - R[:, j])


def kendall_matrix(R: np.ndarray, S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise Kendall tau-a: (concordant - discordant) / (d (d - 1) / 2).

    Tied pairs count as neither; pairs where either side is constant are flagged
    and score 0.
    """
    d = R.shape[1]
    if d < 2:
        raise ValueError("rank consistency needs at least 2 features")
    A, B = _pair_signs(R), _pair_signs(S)
    tau = (A @ B.T) / (d * (d - 1) / 2)
    undefined = (~A.any(axis=1))[:, None] | (~B.any(axis=1))[None, :]
    return np.where(undefined, 0.0, tau), undefined


# -------------------------------------------------------------------- attacks


def entropy_attack(targets: AttributionMatrix) -> AttackScore:
    if len(targets) == 0:
        raise ValueError("entropy attack needs at least one target")
    return _score("entropy", targets, np.atleast_1d(shap_entropy(targets.phi_norm)))


def similarity_attack(targets: AttributionMatrix, references: AttributionMatrix, aggregate: str = "max") -> AttackScore:
    _check_width(targets, references)
    sims = cosine_matrix(targets.phi, references.phi)
    return _score("similarity", targets, _reduce(sims, aggregate))


def divergence_attack(targets: AttributionMatrix, references: AttributionMatrix, aggregate: str = "min") -> AttackScore:
    _check_width(targets, references)
    P, Q = targets.phi_norm, references.phi_norm
    _check_distributions(P, "target")
    _check_distributions(Q, "reference")
    return _score("divergence", targets, _reduce(jsd_matrix(P, Q), aggregate))


def rank_correlation_attack(targets, references, aggregate: str = "max", signed: bool = False) -> AttackScore:
    _check_width(targets, references)
    rho, undefined = spearman_matrix(importance_ranks(targets.phi, signed), importance_ranks(references.phi, signed))
    return _score("rank_correlation", targets, _reduce(rho, aggregate), undefined.any(axis=1))


def rank_consistency_attack(targets, references, aggregate: str = "max", signed: bool = False) -> AttackScore:
    _check_width(targets, references)
    tau, undefined = kendall_matrix(importance_ranks(targets.phi, signed), importance_ranks(references.phi, signed))
    return _score("rank_consistency", targets, _reduce(tau, aggregate), undefined.any(axis=1))


def membership_auc(member_scores, nonmember_scores, direction: str = HIGHER) -> float:
    """P(random member looks more like a member than a random non-member), ties 1/2."""
    m = np.asarray(member_scores, dtype=np.float64)
    n = np.asarray(nonmember_scores, dtype=np.float64)
    if m.size == 0 or n.size == 0:
        raise ValueError("membership_auc needs non-empty member and non-member sets")
    if direction == LOWER:
        m, n = -m, -n
    elif direction != HIGHER:
        raise ValueError(f"unknown direction {direction!r}")
    ranks = rankdata(np.concatenate([m, n]))
    u = ranks[: m.size].sum() - m.size * (m.size + 1) / 2.0
    return float(u / (m.size * n.size))


def run_attacks(targets: AttributionMatrix, references: AttributionMatrix, aggregate: str = "nearest") -> dict[str, AttackScore]:
    """All five attacks. ``aggregate`` is "nearest" (max/min) or "mean"."""
    near = aggregate == "nearest"
    if not near and aggregate != "mean":
        raise ValueError(f"aggregate must be 'nearest' or 'mean', got {aggregate!r}")
    return {
        "entropy": entropy_attack(targets),
        "similarity": similarity_attack(targets, references, "max" if near else "mean"),
        "divergence": divergence_attack(targets, references, "min" if near else "mean"),
        "rank_correlation": rank_correlation_attack(targets, references, "max" if near else "mean"),
        "rank_consistency": rank_consistency_attack(targets, references, "max" if near else "mean"),
    }


# ---------------------------------------------------------------------- report


@dataclass
class AttackReport:
    model_id: str
    scores: dict[str, AttackScore]
    auc: dict[str, float]
    nearest_row: dict[str, float]
    mean_aggregation_row: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "model_id": self.model_id,
            "auc": self.auc,
            "nearest_row": self.nearest_row,
            "mean_aggregation_row": self.mean_aggregation_row,
            "attacks": {
                name: {
                    "direction": s.direction,
                    "mean": s.mean,
                    "std": s.std,
                    "n": int(len(s.scores)),
                    "member_mean": float(np.mean(s.scores[s.membership])) if s.membership.any() else None,
                    "nonmember_mean": float(np.mean(s.scores[~s.membership])) if (~s.membership).any() else None,
                    "flagged": int(s.flags.sum()) if s.flags is not None else 0,
                }
                for name, s in self.scores.items()
            },
        }


def _auc_or_nan(s: AttackScore) -> float:
    if s.membership is None or not s.membership.any() or s.membership.all():
        return math.nan
    return membership_auc(s.scores[s.membership], s.scores[~s.membership], s.direction)


def audit(targets: AttributionMatrix, references: AttributionMatrix, model_id: str | None = None) -> AttackReport:
    """Score every target with all five attacks and compute member-vs-non-member AUCs."""
    near = run_attacks(targets, references, "nearest")
    mean = run_attacks(targets, references, "mean")
    return AttackReport(
        model_id=model_id or targets.model_id,
        scores=near,
        auc={name: _auc_or_nan(s) for name, s in near.items()},
        nearest_row={name: s.mean for name, s in near.items()},
        mean_aggregation_row={name: s.mean for name, s in mean.items()},
    )


def save_report(report: AttackReport, out_dir, stem: str = "attack") -> list[Path]:
    """``<stem>_report.json`` plus one ``<stem>_<attack>.csv`` score table per attack."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    rpath = out_dir / f"{stem}_report.json"
    rpath.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths.append(rpath)
    for name, s in report.scores.items():
        p = out_dir / f"{stem}_{name}.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_id", "membership_flag", "score", "flagged"])
            flags = s.flags if s.flags is not None else np.zeros(len(s.scores), dtype=bool)
            for sid, mem, sc, fl in zip(s.sample_ids, s.membership, s.scores, flags):
                w.writerow([int(sid), int(mem), repr(float(sc)), int(fl)])
        paths.append(p)
    return paths
