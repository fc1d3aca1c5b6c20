"""Comparison tables, heatmap data and entropy summaries.

Every function here is pure: the same attribution matrices and metrics give
byte-identical files. Plotting is left to external tools.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .explainer import AttributionMatrix

REPORT_FORMAT_VERSION = 1
TABLE_COLUMNS = ("shap_entropy", "similarity", "jsd", "rank_correlation", "rank_consistency", "mae")
# attack name in an AttackReport row -> comparison table column
ATTACK_COLUMNS = {
    "entropy": "shap_entropy",
    "similarity": "similarity",
    "divergence": "jsd",
    "rank_correlation": "rank_correlation",
    "rank_consistency": "rank_consistency",
}
MODEL_LABELS = {"baseline": "Baseline", "shap_reg": "SHAP-Regularized", "dp": "DP-SGD"}
HOURS = 24

SCHEMA = {
    "comparison_table.csv": {
        "columns": ["house", "model", *TABLE_COLUMNS],
        "definition": "attack means over the target windows with nearest-reference aggregation "
                      "(max similarity / min JSD / max rank agreement); mae is test MAE in scaled units",
    },
    "comparison_table_mean_aggregation.csv": {
        "columns": ["house", "model", *TABLE_COLUMNS],
        "definition": "as comparison_table.csv but every reference-based attack averages over all references",
    },
    "heatmap.csv": {
        "columns": ["house", "model", "hour", "appliance", "mean_abs_phi"],
        "definition": "mean |phi_appliance| over test windows whose target hour-of-day equals hour",
    },
    "entropy_hourly.csv": {
        "columns": ["house", "model", "appliance", "hour", "share", "entropy_term", "delta_vs_baseline"],
        "definition": "share_h = a_h / sum_h a_h with a_h the mean normalized |phi| of the appliance over test "
                      "windows at hour h; entropy_term = -share_h ln share_h (nats)",
    },
    "entropy_summary.csv": {
        "columns": ["house", "model", "appliance", "aggregate_entropy", "delta_vs_baseline"],
        "definition": "aggregate_entropy = mean over hours of entropy_term; the row with appliance '*' "
                      "holds the mean window-level attribution entropy over the test set",
    },
}


def _num(v: float) -> str:
    return repr(float(v))


def _write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


# ------------------------------------------------------------ comparison table


@dataclass(frozen=True)
class ComparisonRow:
    house: str
    model: str
    values: dict  # TABLE_COLUMNS -> float

    def formatted(self, decimals: int = 4) -> list[str]:
        return [self.house, MODEL_LABELS.get(self.model, self.model),
                *(f"{self.values[c]:.{decimals}f}" for c in TABLE_COLUMNS)]


def comparison_row(house: str, model: str, attack_row: dict, mae: float) -> ComparisonRow:
    values = {ATTACK_COLUMNS[k]: float(v) for k, v in attack_row.items()}
    values["mae"] = float(mae)
    missing = [c for c in TABLE_COLUMNS if c not in values]
    if missing:
        raise ValueError(f"comparison row for {house}/{model} lacks {missing}")
    return ComparisonRow(house, model, values)


def write_comparison_table(rows: list[ComparisonRow], path) -> Path:
    return _write_csv(Path(path), ["house", "model", *TABLE_COLUMNS],
                      ([r.house, r.model, *(_num(r.values[c]) for c in TABLE_COLUMNS)] for r in rows))


def render_markdown(rows: list[ComparisonRow], decimals: int = 4) -> str:
    head = ["House", "Model", "SHAP entropy", "Similarity", "JSD", "Rank corr.", "Rank consist.", "MAE"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    lines += ["| " + " | ".join(r.formatted(decimals)) + " |" for r in rows]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------- heatmap


def _by_hour(am: AttributionMatrix) -> list[tuple[int, np.ndarray]]:
    if am.target_hours is None:
        raise ValueError(f"{am.model_id}: attributions carry no target hours")
    return [(h, am.target_hours == h) for h in range(HOURS) if np.any(am.target_hours == h)]


def hourly_mean_abs(am: AttributionMatrix) -> tuple[np.ndarray, np.ndarray]:
    """``(hours, M)`` with ``M[k, j]`` the mean |phi_j| over windows at ``hours[k]``."""
    groups = _by_hour(am)
    absphi = np.abs(am.phi)
    return np.array([h for h, _ in groups]), np.array([absphi[m].mean(axis=0) for _, m in groups])


def heatmap_rows(house: str, model: str, am: AttributionMatrix) -> list[list[str]]:
    hours, M = hourly_mean_abs(am)
    return [[house, model, str(int(h)), name, _num(M[k, j])]
            for k, h in enumerate(hours) for j, name in enumerate(am.feature_names)]


# ------------------------------------------------------------------- entropies


def hourly_entropy(am: AttributionMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-appliance attribution distribution across hours.

    Returns ``(hours, share, terms)`` of shape ``(K,)``, ``(K, P)``, ``(K, P)``:
    ``share[:, j]`` sums to 1 over the hours present and ``terms`` holds
    ``-share ln share`` (0 where the share is 0).
    """
    groups = _by_hour(am)
    pn = am.phi_norm
    a = np.array([pn[m].mean(axis=0) for _, m in groups])
    totals = a.sum(axis=0, keepdims=True)
    share = np.divide(a, totals, out=np.zeros_like(a), where=totals > 0)
    terms = np.where(share > 0, -share * np.log(np.where(share > 0, share, 1.0)), 0.0)
    return np.array([h for h, _ in groups]), share, terms


def aggregate_entropy(am: AttributionMatrix) -> np.ndarray:
    """Per-appliance mean of the hourly entropy terms."""
    return hourly_entropy(am)[2].mean(axis=0)


def entropy_tables(house: str, models: dict[str, AttributionMatrix], reference: str = "baseline"):
    """Rows for entropy_hourly.csv and entropy_summary.csv, deltas taken against ``reference``."""
    hourly, summary = {}, {}
    for model, am in models.items():
        hours, share, terms = hourly_entropy(am)
        hourly[model] = {(name, int(h)): (share[k, j], terms[k, j])
                         for k, h in enumerate(hours) for j, name in enumerate(am.feature_names)}
        summary[model] = dict(zip(am.feature_names, terms.mean(axis=0)))
        summary[model]["*"] = float(np.mean(am.entropy))
    ref_h, ref_s = hourly.get(reference), summary.get(reference)

    hourly_rows, summary_rows = [], []
    for model in models:
        for (name, h), (s, t) in hourly[model].items():
            base = ref_h.get((name, h)) if ref_h else None
            delta = "" if base is None else _num(t - base[1])
            hourly_rows.append([house, model, name, str(h), _num(s), _num(t), delta])
        for name, v in summary[model].items():
            base = ref_s.get(name) if ref_s else None
            delta = "" if base is None else _num(v - base)
            summary_rows.append([house, model, name, _num(v), delta])
    return hourly_rows, summary_rows


# ---------------------------------------------------------------- full report


@dataclass
class HouseResults:
    house: str
    attack_rows: dict[str, dict]  # model -> attack name -> mean score (nearest aggregation)
    attack_rows_mean: dict[str, dict]  # same with mean aggregation
    mae: dict[str, float]
    testsets: dict[str, AttributionMatrix]


def write_report(results: list[HouseResults], out_dir, meta: dict | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    near, mean, heat, hourly, summary = [], [], [], [], []
    for hr in results:
        for model in hr.attack_rows:
            near.append(comparison_row(hr.house, model, hr.attack_rows[model], hr.mae[model]))
            mean.append(comparison_row(hr.house, model, hr.attack_rows_mean[model], hr.mae[model]))
        for model, am in hr.testsets.items():
            heat += heatmap_rows(hr.house, model, am)
        h_rows, s_rows = entropy_tables(hr.house, hr.testsets)
        hourly += h_rows
        summary += s_rows

    paths = [
        write_comparison_table(near, out / "comparison_table.csv"),
        write_comparison_table(mean, out / "comparison_table_mean_aggregation.csv"),
        _write_csv(out / "heatmap.csv", SCHEMA["heatmap.csv"]["columns"], heat),
        _write_csv(out / "entropy_hourly.csv", SCHEMA["entropy_hourly.csv"]["columns"], hourly),
        _write_csv(out / "entropy_summary.csv", SCHEMA["entropy_summary.csv"]["columns"], summary),
    ]
    md = out / "comparison_table.md"
    md.write_text(render_markdown(near), encoding="utf-8")
    paths.append(md)
    schema = out / "report_schema.json"
    doc = {"format_version": REPORT_FORMAT_VERSION, "files": SCHEMA, "meta": meta or {}}
    schema.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths.append(schema)
    return paths


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
