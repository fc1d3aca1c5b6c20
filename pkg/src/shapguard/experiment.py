"""End-to-end comparison of training regimes on one or more households.

This is the library side of the CLI pipeline and of the acceptance grid:
train each regime, explain member / non-member / reference windows, run the
attacks, and collect the comparison metrics.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import explainer as ex
from . import forecaster as fc
from . import privattack as pa
from . import trainer as tr
from .dataio import TimeSeriesFrame, WindowedDataset, chronological_validation, make_windows


@dataclass
class ExperimentConfig:
    window: int = 24
    train_fraction: float = 0.8
    hidden_size: int = 16
    num_layers: int = 1
    dropout: float = 0.0
    epochs: int = 15
    batch_size: int = 32
    learning_rate: float = 0.1
    lam: float = 1.5
    alpha: float | None = None
    reg_subsample: int = 4
    adaptive: bool = False
    dp_clip: float = 1.0
    dp_noise_multiplier: float = 0.5
    validation_fraction: float = 0.1
    n_members: int = 200
    n_nonmembers: int = 200
    n_references: int = 100
    granularity: str = "channel"
    regimes: tuple[str, ...] = ("baseline", "shap_reg", "dp")

    def train_config(self, regime: str, seed: int) -> tr.TrainConfig:
        return tr.TrainConfig(
            regime=regime,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=seed,
            lam=self.lam if regime == "shap_reg" else 0.0,
            alpha=self.alpha,
            reg_subsample=self.reg_subsample,
            adaptive=self.adaptive,
            dp_clip=self.dp_clip,
            dp_noise_multiplier=self.dp_noise_multiplier,
            validation_fraction=self.validation_fraction,
            granularity=self.granularity,
        )

    def lstm_config(self, input_dim: int, seed: int) -> fc.LstmConfig:
        return fc.LstmConfig(input_dim, self.hidden_size, self.num_layers, self.dropout, seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        if "regimes" in d:
            d["regimes"] = tuple(d["regimes"])
        return cls(**d)


@dataclass
class AuditSets:
    targets: ex.AttributionMatrix  # members followed by non-members
    references: ex.AttributionMatrix  # known training members, disjoint from targets
    testset: ex.AttributionMatrix  # every test window


def select_windows(n_fit: int, n_test: int, cfg: ExperimentConfig, seed: int):
    """Deterministic indices: member targets and references from the fit windows
    (disjoint), non-member targets from the test windows."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    n_mem = min(cfg.n_members, n_fit)
    n_ref = min(cfg.n_references, n_fit - n_mem)
    if n_ref < 1:
        raise ValueError("not enough training windows for members and references")
    perm = rng.permutation(n_fit)
    members = np.sort(perm[:n_mem])
    refs = np.sort(perm[n_mem : n_mem + n_ref])
    nonmembers = np.sort(rng.permutation(n_test)[: min(cfg.n_nonmembers, n_test)])
    return members, refs, nonmembers


def build_audit_sets(params: fc.LstmParams, fit: WindowedDataset, test: WindowedDataset, baseline: np.ndarray,
                     cfg: ExperimentConfig, seed: int, model_id: str) -> AuditSets:
    members, refs, nonmembers = select_windows(len(fit), len(test), cfg, seed)
    # test-window ids are offset past the train ids so sample_id stays unique
    offset = len(fit) + 10**6
    names = fit.feature_names

    def explain(ds, idx, member, id_offset):
        return ex.explain_dataset(
            params, ds.inputs[idx], baseline, idx + id_offset, np.full(len(idx), member), names, model_id,
            ds.target_hours[idx], cfg.granularity,
        )

    mem = explain(fit, members, True, 0)
    non = explain(test, nonmembers, False, offset)
    targets = ex.AttributionMatrix(
        phi=np.vstack([mem.phi, non.phi]),
        sample_ids=np.concatenate([mem.sample_ids, non.sample_ids]),
        membership=np.concatenate([mem.membership, non.membership]),
        feature_names=mem.feature_names,
        model_id=model_id,
        target_hours=np.concatenate([mem.target_hours, non.target_hours]),
        meta=mem.meta,
    )
    references = explain(fit, refs, True, 0)
    testset = explain(test, np.arange(len(test)), False, offset)
    return AuditSets(targets, references, testset)


@dataclass
class RegimeResult:
    regime: str
    params: fc.LstmParams
    record: tr.TrainRecord
    test_mae: float
    test_entropy: float
    report: pa.AttackReport
    sets: AuditSets

    def summary(self) -> dict:
        return {
            "regime": self.regime,
            "test_mae": self.test_mae,
            "test_entropy": self.test_entropy,
            "auc": dict(self.report.auc),
            "attack_means": dict(self.report.nearest_row),
            "attack_means_mean_aggregation": dict(self.report.mean_aggregation_row),
        }


@dataclass
class CellResult:
    house_id: str
    seed: int
    results: dict[str, RegimeResult] = field(default_factory=dict)

    def summary(self) -> dict:
        return {"house_id": self.house_id, "seed": self.seed,
                "regimes": {k: v.summary() for k, v in self.results.items()}}


def run_regime(regime: str, train: WindowedDataset, test: WindowedDataset, cfg: ExperimentConfig, seed: int,
               model_id: str | None = None) -> RegimeResult:
    fit, _ = chronological_validation(train, cfg.validation_fraction)
    baseline = ex.mean_profile(fit.inputs)
    params, record = tr.train(train, cfg.train_config(regime, seed), cfg.lstm_config(train.n_features, seed),
                              baseline=baseline)
    model_id = model_id or f"{train.house_id}/{regime}/seed{seed}"
    sets = build_audit_sets(params, fit, test, baseline, cfg, seed, model_id)
    report = pa.audit(sets.targets, sets.references, model_id)
    return RegimeResult(
        regime=regime,
        params=params,
        record=record,
        test_mae=tr.evaluate_mae(params, test),
        test_entropy=float(np.mean(sets.testset.entropy)),
        report=report,
        sets=sets,
    )


def run_cell(frame: TimeSeriesFrame, seed: int, cfg: ExperimentConfig) -> CellResult:
    train, test = make_windows(frame, cfg.window, cfg.train_fraction)
    cell = CellResult(frame.house_id, seed)
    for regime in cfg.regimes:
        cell.results[regime] = run_regime(regime, train, test, cfg, seed)
    return cell


def entropy_gap(cell: CellResult) -> float:
    return cell.results["shap_reg"].test_entropy - cell.results["baseline"].test_entropy


def mae_ratio(cell: CellResult) -> float:
    base = cell.results["baseline"].test_mae
    return cell.results["shap_reg"].test_mae / base if base > 0 else math.inf
