"""Multi-layer LSTM regressor: a (T, D) window of appliance channels in, one
next-hour aggregate value out.

Gates follow the classic non-peephole layout ``[input, forget, cell, output]``
packed along the last axis of each ``w_ih``/``w_hh``/``bias`` array.
The prediction is a linear head applied to the top layer's last hidden state.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numkit as nk
from .numkit import Tape, Tensor

CHECKPOINT_FORMAT_VERSION = 1
_CKPT_MAGIC = "shapguard.lstm-checkpoint"


class EmptyBatch(ValueError):
    pass


@dataclass(frozen=True)
class LstmConfig:
    input_dim: int
    hidden_size: int = 16
    num_layers: int = 1
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_size < 1 or self.num_layers < 1:
            raise ValueError(f"input_dim, hidden_size and num_layers must be >= 1: {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass
class LstmParams:
    config: LstmConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def names(self) -> list[str]:
        return list(self.arrays)

    def copy(self) -> LstmParams:
        return LstmParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.reshape(-1) for v in self.arrays.values()])

    @property
    def size(self) -> int:
        return sum(v.size for v in self.arrays.values())

    def equals(self, other: LstmParams) -> bool:
        """Bit-exact comparison of configuration and every parameter array."""
        if self.config != other.config or list(self.arrays) != list(other.arrays):
            return False
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.arrays.values(), other.arrays.values())
        )


def param_shapes(cfg: LstmConfig) -> dict[str, tuple[int, ...]]:
    H = cfg.hidden_size
    shapes: dict[str, tuple[int, ...]] = {}
    for layer in range(cfg.num_layers):
        d_in = cfg.input_dim if layer == 0 else H
        shapes[f"layer{layer}.w_ih"] = (d_in, 4 * H)
        shapes[f"layer{layer}.w_hh"] = (H, 4 * H)
        shapes[f"layer{layer}.bias"] = (4 * H,)
    shapes["head.w"] = (H,)
    shapes["head.b"] = ()
    return shapes


def init_params(cfg: LstmConfig) -> LstmParams:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights from ``cfg.seed``; forget-gate bias 1.0."""
    rng = np.random.default_rng(cfg.seed)
    bound = 1.0 / np.sqrt(cfg.hidden_size)
    H = cfg.hidden_size
    arrays = {}
    for name, shape in param_shapes(cfg).items():
        arrays[name] = rng.uniform(-bound, bound, size=shape).astype(np.float64)
    for layer in range(cfg.num_layers):
        arrays[f"layer{layer}.bias"][H : 2 * H] = 1.0
    return LstmParams(cfg, arrays)


def zero_params(cfg: LstmConfig) -> LstmParams:
    return LstmParams(cfg, {k: np.zeros(s) for k, s in param_shapes(cfg).items()})


def bind(params: LstmParams, tape: Tape, per_sample: int | None = None) -> dict[str, Tensor]:
    """Register the parameters as named leaves on ``tape``.

    With ``per_sample=B`` every array is tiled to a leading axis of length B,
    so each batch element gets its own copy and the leaf gradients come out
    per sample (used by DP training).
    """
    out = {}
    for name, value in params.arrays.items():
        if per_sample is not None:
            value = np.broadcast_to(value, (per_sample,) + value.shape)
        out[name] = tape.leaf(value, name)
    return out


def _constants(params: LstmParams) -> dict[str, Tensor]:
    return {k: Tensor(v) for k, v in params.arrays.items()}


def _check_input(cfg: LstmConfig, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise nk.ShapeError(f"expected a (B, T, D) batch, got shape {X.shape}")
    if X.shape[0] == 0:
        raise EmptyBatch("forward_batch called with an empty batch")
    if X.shape[2] != cfg.input_dim or X.shape[1] < 1:
        raise nk.ShapeError(f"window shape {X.shape[1:]} does not match input_dim={cfg.input_dim}")
    return X


def _run(weights: dict[str, Tensor], cfg: LstmConfig, X: np.ndarray, train: bool, rng, per_sample: bool) -> Tensor:
    B, T, _ = X.shape
    H = cfg.hidden_size
    layer_in: Tensor = Tensor(X)
    h = None
    for layer in range(cfg.num_layers):
        w_ih = weights[f"layer{layer}.w_ih"]
        w_hh = weights[f"layer{layer}.w_hh"]
        bias = weights[f"layer{layer}.bias"]
        if layer > 0 and train and cfg.dropout > 0.0:
            keep = rng.random((B, T, H)) >= cfg.dropout
            layer_in = layer_in * (keep / (1.0 - cfg.dropout))
        if per_sample:
            bias = bias.reshape(B, 1, 4 * H)
        t = -1
        try:
            proj = nk.matmul(layer_in, w_ih) + bias
            c = None
            hs = []
            for t in range(T):
                step = proj[:, t, :]
                z = step if h is None else step + nk.matmul(h, w_hh)
                i_gate = nk.sigmoid(z[:, :H])
                f_gate = nk.sigmoid(z[:, H : 2 * H])
                g_cand = nk.tanh(z[:, 2 * H : 3 * H])
                o_gate = nk.sigmoid(z[:, 3 * H :])
                c = i_gate * g_cand if c is None else f_gate * c + i_gate * g_cand
                h = o_gate * nk.tanh(c)
                if layer < cfg.num_layers - 1:
                    hs.append(h)
        except nk.NonFiniteError as exc:
            raise nk.NonFiniteError(f"non-finite activation at layer {layer}, step {t}: {exc}") from exc
        if layer < cfg.num_layers - 1:
            layer_in = nk.stack(hs, axis=1)
            h = None
    if per_sample:
        return nk.sum_(h * weights["head.w"], axis=-1) + weights["head.b"]
    return nk.matmul(h, weights["head.w"]) + weights["head.b"]


def forward_batch(params: LstmParams, X, mode: str = "eval", tape: Tape | None = None, rng=None, leaves=None):
    """Predict for a (B, T, D) batch. Returns ``(yhat (B,), tape)``.

    Pass ``leaves`` (from :func:`bind`) to reuse parameters already on ``tape``.
    Train mode applies inter-layer dropout drawn from ``rng``.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    cfg = params.config
    X = _check_input(cfg, X)
    train = mode == "train"
    if train and cfg.dropout > 0.0 and cfg.num_layers > 1 and rng is None:
        raise ValueError("train mode with dropout needs an rng")
    if leaves is None:
        tape = tape if tape is not None else Tape()
        leaves = bind(params, tape)
    else:
        tape = next(iter(leaves.values())).tape
    per_sample = leaves["layer0.w_ih"].ndim == 3
    if per_sample and leaves["layer0.w_ih"].shape[0] != X.shape[0]:
        raise nk.ShapeError("per-sample parameters do not match the batch size")
    return _run(leaves, cfg, X, train, rng, per_sample), tape


def forward(params: LstmParams, x, mode: str = "eval", tape: Tape | None = None, rng=None, leaves=None):
    """Single (T, D) window. Returns ``(yhat scalar, tape)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise nk.ShapeError(f"expected a (T, D) window, got shape {x.shape}")
    yhat, tape = forward_batch(params, x[None], mode=mode, tape=tape, rng=rng, leaves=leaves)
    return yhat[0], tape


def predict(params: LstmParams, X, chunk: int = 4096) -> np.ndarray:
    """Eval-mode predictions without recording a tape."""
    X = _check_input(params.config, X)
    weights = _constants(params)
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], chunk):
        part = X[start : start + chunk]
        out[start : start + len(part)] = _run(weights, params.config, part, False, None, False).data
    return out


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(params: LstmParams, path, meta: dict | None = None) -> Path:
    """Write a JSON header line followed by the raw little-endian float64 payload."""
    path = Path(path)
    layout, offset = [], 0
    for name, arr in params.arrays.items():
        layout.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        offset += arr.size
    header = {
        "magic": _CKPT_MAGIC,
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(params.config),
        "seed": params.config.seed,
        "dtype": "<f8",
        "params": layout,
        "meta": meta or {},
    }
    payload = np.concatenate([a.reshape(-1) for a in params.arrays.values()]).astype("<f8").tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(payload)
    return path


def load_checkpoint(path) -> tuple[LstmParams, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        payload = fh.read()
    if header.get("magic") != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a shapguard checkpoint")
    if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version {header.get('format_version')}")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    cfg = LstmConfig(**header["config"])
    arrays = {}
    for entry in header["params"]:
        chunk = flat[entry["offset"] : entry["offset"] + entry["count"]]
        arrays[entry["name"]] = chunk.reshape(entry["shape"]).copy()
    params = LstmParams(cfg, arrays)
    if list(arrays) != list(param_shapes(cfg)):
        raise ValueError(f"{path}: parameter layout does not match its config")
    return params, header.get("meta", {})
