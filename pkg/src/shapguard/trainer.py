"""Training regimes for the LSTM forecaster.

* ``baseline``: plain batch MSE.
* ``shap_reg``: MSE plus ``lam * (alpha - H)^2`` where H is the mean
  attribution entropy of a few windows of the batch, optionally with
  adaptive ``lam``.
* ``dp``: per-sample gradients clipped to L2 norm ``dp_clip`` with Gaussian
  noise of std ``dp_noise_multiplier * dp_clip`` added to their sum before
  averaging (the DP-SGD update shape; no privacy accounting).

All regimes use plain SGD. Shuffling, dropout, DP noise and regularizer
subsampling draw from separate seeded streams, so switching a feature on
never perturbs the randomness of the others.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import explainer as ex
from . import forecaster as fc
from . import numkit as nk
from .dataio import WindowedDataset, chronological_validation

log = logging.getLogger(__name__)

REGIMES = ("baseline", "shap_reg", "dp")
LAMBDA_MIN, LAMBDA_MAX = 1e-4, 1e2


class TrainingDiverged(ArithmeticError):
    def __init__(self, epoch: int, batch: int, detail: str = ""):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}{': ' + detail if detail else ''}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    regime: str = "baseline"
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-2
    seed: int = 0
    lam: float = 1.0
    alpha: float | None = None  # None -> ln(number of players)
    reg_subsample: int = 4
    adaptive: bool = False
    adapt_factor: float = 2.0
    patience: int = 2
    dp_clip: float = 1.0  # math.inf disables clipping
    dp_noise_multiplier: float = 1.0
    validation_fraction: float = 0.1
    granularity: str = "channel"

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.reg_subsample < 1:
            raise ValueError("epochs, batch_size and reg_subsample must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.lam < 0 or (self.alpha is not None and self.alpha < 0):
            raise ValueError("lam and alpha must be non-negative")
        if self.adapt_factor <= 1.0 or self.patience < 1:
            raise ValueError("adapt_factor must exceed 1 and patience be >= 1")
        if not self.dp_clip > 0 or self.dp_noise_multiplier < 0:
            raise ValueError("dp_clip must be positive and dp_noise_multiplier non-negative")

    def target_entropy(self, n_players: int) -> float:
        return math.log(n_players) if self.alpha is None else float(self.alpha)


@dataclass
class EpochRow:
    epoch: int
    train_mse: float
    val_mae: float
    mean_entropy: float  # NaN outside shap_reg
    lam: float
    train_loss: float  # the regime's objective


@dataclass
class TrainRecord:
    rows: list[EpochRow] = field(default_factory=list)
    checkpoint: str | None = None

    @property
    def val_mae(self) -> list[float]:
        return [r.val_mae for r in self.rows]

    @property
    def train_loss(self) -> list[float]:
        return [r.train_loss for r in self.rows]

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_mse", "val_mae", "mean_entropy", "lambda"])
            for r in self.rows:
                ent = "" if math.isnan(r.mean_entropy) else repr(r.mean_entropy)
                w.writerow([r.epoch, repr(r.train_mse), repr(r.val_mae), ent, repr(r.lam)])
        return path


# --------------------------------------------------------------------- losses


def batch_mse(yhat, y):
    """Mean squared error; works on numkit tensors and plain arrays."""
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0] if y.ndim else 1
    if n == 0:
        raise fc.EmptyBatch("batch_mse of an empty batch")
    if isinstance(yhat, nk.Tensor):
        if yhat.shape != y.shape:
            raise nk.ShapeError(f"prediction shape {yhat.shape} != target shape {y.shape}")
        err = yhat - y
        return nk.mean(err * err)
    yhat = np.asarray(yhat, dtype=np.float64)
    if yhat.shape != y.shape:
        raise nk.ShapeError(f"prediction shape {yhat.shape} != target shape {y.shape}")
    return float(np.mean((yhat - y) ** 2))


def total_loss(mse, H, lam: float, alpha: float):
    if lam < 0:
        raise ValueError("lam must be non-negative")
    return mse + lam * ex.entropy_penalty(H, alpha)


def adapt_lambda(record: TrainRecord, lam: float, cfg: TrainConfig, alpha: float) -> float:
    """Two-sided adjustment from the validation MAE history.

    * MAE rose in each of the last ``patience`` epochs: divide by ``adapt_factor``.
    * MAE fell in the last epoch while mean entropy sits below ``alpha - 0.1``:
      multiply by ``adapt_factor``.

    The result is clamped to [1e-4, 1e2]. ``lam == 0`` means the regularizer
    is switched off and stays off.
    """
    if lam == 0.0:
        return 0.0
    mae = record.val_mae
    new = lam
    if len(mae) > cfg.patience and all(mae[-j] > mae[-j - 1] for j in range(1, cfg.patience + 1)):
        new = lam / cfg.adapt_factor
    elif len(mae) >= 2 and mae[-1] < mae[-2] and record.rows[-1].mean_entropy < alpha - 0.1:
        new = lam * cfg.adapt_factor
    return min(max(new, LAMBDA_MIN), LAMBDA_MAX)


# ------------------------------------------------------------------ gradients


def _check(value: float, epoch: int, batch: int):
    if not math.isfinite(value):
        raise TrainingDiverged(epoch, batch)


def loss_and_grad(params, X, y, regime: str, *, lam=0.0, alpha=0.0, X_reg=None, baseline=None,
                  dropout_rng=None, granularity="channel"):
    """One tape: returns ``(objective, mse, mean_entropy, grads)`` for baseline/shap_reg."""
    tape = nk.Tape()
    leaves = fc.bind(params, tape)
    yhat, _ = fc.forward_batch(params, X, mode="train", rng=dropout_rng, leaves=leaves)
    mse = batch_mse(yhat, y)
    H = None
    loss = mse
    if regime == "shap_reg":
        H = ex.differentiable_batch_entropy(params, X_reg, baseline, leaves, granularity)
        loss = total_loss(mse, H, lam, alpha)
    grads = tape.backward(loss)
    return loss.item(), mse.item(), (math.nan if H is None else H.item()), grads


def per_sample_grads(params, X, y, dropout_rng=None):
    """Gradient of each sample's squared error, stacked on a leading axis."""
    tape = nk.Tape()
    leaves = fc.bind(params, tape, per_sample=X.shape[0])
    yhat, _ = fc.forward_batch(params, X, mode="train", rng=dropout_rng, leaves=leaves)
    err = yhat - np.asarray(y, dtype=np.float64)
    sq = err * err
    grads = tape.backward(nk.sum_(sq))
    return float(np.mean(sq.data)), grads


def dp_gradient(params, X, y, clip: float, noise_multiplier: float, noise_rng, dropout_rng=None):
    """Clipped, noised, averaged per-sample gradient. Returns ``(mse, grads, norms)``."""
    mse, g = per_sample_grads(params, X, y, dropout_rng)
    B = X.shape[0]
    names = list(g)
    sq = np.zeros(B)
    for name in names:
        sq += np.sum(g[name].reshape(B, -1) ** 2, axis=1)
    norms = np.sqrt(sq)
    if math.isinf(clip):
        scale = np.ones(B)
    else:
        scale = np.minimum(1.0, clip / np.maximum(norms, 1e-300))
    out = {}
    for name in names:
        total = np.tensordot(scale, g[name], axes=1)
        if noise_multiplier > 0:
            total = total + noise_rng.normal(0.0, noise_multiplier * clip, size=total.shape)
        out[name] = total / B
    return mse, out, norms * scale


# ------------------------------------------------------------------- training


def evaluate_mae(params, ds: WindowedDataset) -> float:
    return float(np.mean(np.abs(fc.predict(params, ds.inputs) - ds.targets)))


def _streams(seed: int):
    shuffle, dropout, noise, subsample = np.random.SeedSequence(seed).spawn(4)
    return (np.random.default_rng(shuffle), np.random.default_rng(dropout),
            np.random.default_rng(noise), np.random.default_rng(subsample))


def train(dataset: WindowedDataset, tcfg: TrainConfig, lcfg: fc.LstmConfig, init: fc.LstmParams | None = None,
          baseline: np.ndarray | None = None, callback=None):
    """Train one model. Returns ``(params, record)``.

    The last ``validation_fraction`` of the (chronological) training windows is
    held out for MAE monitoring and lambda adaptation.
    """
    if len(dataset) == 0:
        raise fc.EmptyBatch("empty training set")
    if lcfg.input_dim != dataset.n_features:
        raise ValueError(f"LstmConfig.input_dim={lcfg.input_dim} but dataset has {dataset.n_features} features")
    fit, val = chronological_validation(dataset, tcfg.validation_fraction)
    params = (init or fc.init_params(lcfg)).copy()
    if baseline is None:
        baseline = ex.mean_profile(fit.inputs)
    n_players = ex.player_masks(dataset.window, dataset.n_features, tcfg.granularity).shape[0]
    alpha = tcfg.target_entropy(n_players)
    lam = tcfg.lam
    shuffle_rng, dropout_rng, noise_rng, sub_rng = _streams(tcfg.seed)
    record = TrainRecord()
    N = len(fit)

    for epoch in range(tcfg.epochs):
        order = shuffle_rng.permutation(N)
        mses, losses, ents = [], [], []
        for b, start in enumerate(range(0, N, tcfg.batch_size)):
            idx = order[start : start + tcfg.batch_size]
            X, y = fit.inputs[idx], fit.targets[idx]
            try:
                if tcfg.regime == "dp":
                    mse, grads, _ = dp_gradient(params, X, y, tcfg.dp_clip, tcfg.dp_noise_multiplier,
                                                noise_rng, dropout_rng)
                    loss, H = mse, math.nan
                else:
                    X_reg = None
                    if tcfg.regime == "shap_reg":
                        k = min(tcfg.reg_subsample, len(idx))
                        X_reg = X[np.sort(sub_rng.choice(len(idx), size=k, replace=False))]
                    loss, mse, H, grads = loss_and_grad(
                        params, X, y, tcfg.regime, lam=lam, alpha=alpha, X_reg=X_reg,
                        baseline=baseline, dropout_rng=dropout_rng, granularity=tcfg.granularity,
                    )
            except nk.NonFiniteError as exc:
                raise TrainingDiverged(epoch, b, str(exc)) from exc
            _check(loss, epoch, b)
            for name, g in grads.items():
                params.arrays[name] = params.arrays[name] - tcfg.learning_rate * g
            mses.append(mse)
            losses.append(loss)
            ents.append(H)
        row = EpochRow(
            epoch=epoch,
            train_mse=float(np.mean(mses)),
            val_mae=evaluate_mae(params, val),
            mean_entropy=float(np.mean(ents)) if tcfg.regime == "shap_reg" else math.nan,
            lam=lam,
            train_loss=float(np.mean(losses)),
        )
        record.rows.append(row)
        log.debug("epoch %d: %s", epoch, asdict(row))
        if callback is not None:
            callback(row)
        if tcfg.regime == "shap_reg" and tcfg.adaptive:
            lam = adapt_lambda(record, lam, tcfg, alpha)
    return params, record
