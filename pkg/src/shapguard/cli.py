"""``shapguard`` command line: synth, ingest, train, explain, attack, report, run.

Each command is an independent process working on one experiment directory
(``--out``). A file lock on that directory serializes writers to its
``manifest.json``; every command appends JSON lines to ``run_log.jsonl``.

Settings resolve in the order flag > ``SHAPGUARD_<FLAG>`` environment
variable > ``--config`` JSON file > built-in default.

Exit codes: 0 ok, 1 configuration error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from filelock import FileLock, Timeout

from . import __version__
from . import dataio as dio
from . import explainer as ex
from . import forecaster as fc
from . import numkit as nk
from . import privattack as pa
from . import report as rp
from . import trainer as tr
from .experiment import ExperimentConfig, build_audit_sets

MANIFEST_FORMAT_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class ManifestIncomplete(ConfigError):
    def __init__(self, missing: list[str]):
        super().__init__("incomplete manifest, missing or stale artifacts: " + ", ".join(missing))
        self.missing = missing


# ---------------------------------------------------------------- settings


# flag -> (type, default); "config" and "out" are handled separately
FLAGS = {
    "seed": (int, 0),
    "house": (str, "house1"),
    "regime": (str, "baseline"),
    "lambda": (float, None),
    "alpha": (float, None),
}


def _env_name(flag: str) -> str:
    return "SHAPGUARD_" + flag.upper().replace("-", "_")


def _coerce(kind, value, flag: str):
    if value is None or isinstance(value, kind):
        return value
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"--{flag}: cannot read {value!r} as {kind.__name__}") from None


def load_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def resolve(args: argparse.Namespace, flag: str, config: dict, kind=str, default=None):
    value = getattr(args, flag.replace("-", "_"), None)
    if value is None:
        value = os.environ.get(_env_name(flag))
    if value is None:
        value = config.get(flag, config.get(flag.replace("-", "_")))
    if value is None:
        value = default
    return _coerce(kind, value, flag)


@dataclasses.dataclass
class Settings:
    out: Path
    seed: int
    house: str
    regime: str
    lam: float | None
    alpha: float | None
    experiment: ExperimentConfig
    config: dict

    def echo(self) -> dict:
        return {"out": str(self.out), "seed": self.seed, "house": self.house, "regime": self.regime,
                "lambda": self.lam, "alpha": self.alpha, "experiment": self.experiment.to_dict()}


def settings_from(args: argparse.Namespace) -> Settings:
    config_path = args.config if args.config is not None else os.environ.get(_env_name("config"))
    config = load_config(config_path)
    out = resolve(args, "out", config)
    if out is None:
        raise ConfigError("no experiment directory: pass --out or set SHAPGUARD_OUT")
    vals = {flag: resolve(args, flag, config, kind, default) for flag, (kind, default) in FLAGS.items()}
    if vals["regime"] not in tr.REGIMES:
        raise ConfigError(f"--regime must be one of {tr.REGIMES}, got {vals['regime']!r}")
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    exp_doc = config.get("experiment", {})
    unknown = set(exp_doc) - fields
    if unknown:
        raise ConfigError(f"unknown experiment settings: {sorted(unknown)}")
    try:
        exp = ExperimentConfig.from_dict(exp_doc)
        if vals["lambda"] is not None:
            exp = dataclasses.replace(exp, lam=vals["lambda"])
        if vals["alpha"] is not None:
            exp = dataclasses.replace(exp, alpha=vals["alpha"])
        if getattr(args, "granularity", None):
            exp = dataclasses.replace(exp, granularity=args.granularity)
        for regime in exp.regimes:
            exp.train_config(regime, vals["seed"])  # validates
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment settings: {exc}") from None
    return Settings(Path(out), vals["seed"], vals["house"], vals["regime"], vals["lambda"], vals["alpha"], exp, config)


# ---------------------------------------------------------------- manifest


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Experiment:
    """An experiment directory: manifest, run log and artifact layout."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.manifest_path = self.root / "manifest.json"
        self.log_path = self.root / "run_log.jsonl"

    def lock(self, timeout: float = 600.0) -> FileLock:
        self.root.mkdir(parents=True, exist_ok=True)
        return FileLock(str(self.root / ".manifest.lock"), timeout=timeout)

    def load(self) -> dict:
        if not self.manifest_path.exists():
            return {"format_version": MANIFEST_FORMAT_VERSION, "houses": {}}
        doc = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        if doc.get("format_version") != MANIFEST_FORMAT_VERSION:
            raise ConfigError(f"{self.manifest_path}: unsupported format_version {doc.get('format_version')}")
        return doc

    def save(self, doc: dict):
        tmp = self.manifest_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, self.manifest_path)

    def ref(self, path: Path) -> dict:
        return {"path": Path(path).relative_to(self.root).as_posix(), "sha256": sha256(path)}

    def log(self, **event):
        self.root.mkdir(parents=True, exist_ok=True)
        event = {"time": round(time.time(), 3), **event}
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True, default=str) + "\n")

    # artifact locations
    def dataset_stem(self, house: str, split: str) -> Path:
        return self.root / "data" / house / split

    def checkpoint(self, house: str, regime: str) -> Path:
        return self.root / "models" / house / f"{regime}.ckpt"

    def attribution(self, house: str, regime: str, kind: str) -> Path:
        return self.root / "attributions" / house / f"{regime}_{kind}.csv"

    def attack_dir(self, house: str) -> Path:
        return self.root / "attacks" / house


def _house(doc: dict, house: str) -> dict:
    return doc["houses"].setdefault(house, {})


def _require(doc: dict, house: str, *keys) -> dict:
    node = doc["houses"].get(house)
    trail = [house]
    for k in keys:
        if not isinstance(node, dict) or k not in node:
            raise FileNotFoundError(f"manifest has no {'/'.join(trail + [k])}; run the earlier pipeline stage first")
        node = node[k]
        trail.append(k)
    return node


def _verify(exp: Experiment, refs: list[dict]) -> list[str]:
    bad = []
    for r in refs:
        p = exp.root / r["path"]
        if not p.is_file():
            bad.append(f"{r['path']} (missing)")
        elif sha256(p) != r["sha256"]:
            bad.append(f"{r['path']} (hash mismatch)")
    return bad


def _checked(exp: Experiment, refs: list[dict]) -> list[Path]:
    bad = _verify(exp, refs)
    if bad:
        raise FileNotFoundError("stale or missing artifacts: " + ", ".join(bad))
    return [exp.root / r["path"] for r in refs]


# ---------------------------------------------------------------- commands


def cmd_synth(args, st: Settings, exp: Experiment, doc: dict) -> list[Path]:
    n = args.appliances if args.appliances is not None else st.config.get("appliances", 6)
    days = args.days if args.days is not None else st.config.get("days", 90)
    try:
        cfg = dio.SynthConfig(seed=st.seed, days=days, appliances=dio.default_appliances(n),
                              occupancy_profile=dio.DEFAULT_OCCUPANCY, house_id=st.house,
                              cadence_s=args.cadence or st.config.get("cadence_s", 3600))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    path = Path(args.target) if args.target else exp.root / "raw" / f"{st.house}.csv"
    return [dio.write_csv(dio.generate_synthetic(cfg), path)]


def cmd_ingest(args, st: Settings, exp: Experiment, doc: dict) -> list[Path]:
    src = Path(args.input)
    if not src.is_file():
        raise FileNotFoundError(f"input CSV not found: {src}")
    schema = dio.REFIT_SCHEMA if args.schema == "refit" else dio.CsvSchema()
    frame = dio.resample_hourly(dio.ingest_csv(src, schema, house_id=st.house))
    train, test = dio.make_windows(frame, st.experiment.window, st.experiment.train_fraction)
    paths = []
    node = _house(doc, st.house)
    node["datasets"] = {}
    for split, ds in (("train", train), ("test", test)):
        files = dio.save_dataset(ds, exp.dataset_stem(st.house, split))
        node["datasets"][split] = [exp.ref(p) for p in files]
        paths += files
    # later stages depend on the data, so a re-ingest invalidates them
    for key in ("models", "attributions", "attacks"):
        node.pop(key, None)
    return paths


def _dataset(exp: Experiment, doc: dict, house: str, split: str) -> dio.WindowedDataset:
    _checked(exp, _require(doc, house, "datasets", split))
    return dio.load_dataset(exp.dataset_stem(house, split))


def _fit_and_baseline(train: dio.WindowedDataset, cfg: ExperimentConfig):
    fit, _ = dio.chronological_validation(train, cfg.validation_fraction)
    return fit, ex.mean_profile(fit.inputs)


def cmd_train(args, st: Settings, exp: Experiment, doc: dict) -> list[Path]:
    train = _dataset(exp, doc, st.house, "train")
    cfg = st.experiment
    _, baseline = _fit_and_baseline(train, cfg)
    tcfg = cfg.train_config(st.regime, st.seed)
    params, record = tr.train(train, tcfg, cfg.lstm_config(train.n_features, st.seed), baseline=baseline)
    ckpt = fc.save_checkpoint(params, exp.checkpoint(st.house, st.regime), meta={
        "regime": st.regime, "house": st.house, "train_config": dataclasses.asdict(tcfg),
        "feature_names": list(train.feature_names), "tool_version": __version__,
    })
    log_csv = record.to_csv(ckpt.with_name(f"{st.regime}_train_log.csv"))
    node = _house(doc, st.house)
    node.setdefault("models", {})[st.regime] = [exp.ref(ckpt), exp.ref(log_csv)]
    node.get("attributions", {}).pop(st.regime, None)
    node.get("attacks", {}).pop(st.regime, None)
    return [ckpt, log_csv]


def _model(exp: Experiment, doc: dict, house: str, regime: str) -> fc.LstmParams:
    ckpt, _ = _checked(exp, _require(doc, house, "models", regime))
    return fc.load_checkpoint(ckpt)[0]


def cmd_explain(args, st: Settings, exp: Experiment, doc: dict) -> list[Path]:
    train = _dataset(exp, doc, st.house, "train")
    test = _dataset(exp, doc, st.house, "test")
    params = _model(exp, doc, st.house, st.regime)
    fit, baseline = _fit_and_baseline(train, st.experiment)
    model_id = f"{st.house}/{st.regime}/seed{st.seed}"
    sets = build_audit_sets(params, fit, test, baseline, st.experiment, st.seed, model_id)
    paths, refs = [], {}
    for kind, am in (("targets", sets.targets), ("references", sets.references), ("test", sets.testset)):
        files = ex.save_attributions(am, exp.attribution(st.house, st.regime, kind))
        refs[kind] = [exp.ref(p) for p in files]
        paths += files
    node = _house(doc, st.house)
    node.setdefault("attributions", {})[st.regime] = refs
    node.get("attacks", {}).pop(st.regime, None)
    return paths


def cmd_attack(args, st: Settings, exp: Experiment, doc: dict) -> list[Path]:
    refs = _require(doc, st.house, "attributions", st.regime)
    for kind in ("targets", "references"):
        _checked(exp, refs[kind])
    targets = ex.load_attributions(exp.attribution(st.house, st.regime, "targets"))
    references = ex.load_attributions(exp.attribution(st.house, st.regime, "references"))
    report = pa.audit(targets, references)
    paths = pa.save_report(report, exp.attack_dir(st.house), stem=st.regime)
    _house(doc, st.house).setdefault("attacks", {})[st.regime] = [exp.ref(p) for p in paths]
    return paths


def _complete_refs(doc: dict, regimes) -> tuple[list[dict], list[str]]:
    refs, missing = [], []
    if not doc["houses"]:
        missing.append("houses (nothing ingested)")
    for house, node in sorted(doc["houses"].items()):
        for split in ("train", "test"):
            r = node.get("datasets", {}).get(split)
            (refs.extend(r) if r else missing.append(f"{house}/datasets/{split}"))
        for regime in regimes:
            m = node.get("models", {}).get(regime)
            (refs.extend(m) if m else missing.append(f"{house}/models/{regime}"))
            a = node.get("attributions", {}).get(regime)
            if a:
                for kind in ("targets", "references", "test"):
                    refs.extend(a[kind])
            else:
                missing.append(f"{house}/attributions/{regime}")
            k = node.get("attacks", {}).get(regime)
            (refs.extend(k) if k else missing.append(f"{house}/attacks/{regime}"))
    return refs, missing


def cmd_report(args, st: Settings, exp: Experiment, doc: dict) -> list[Path]:
    regimes = st.experiment.regimes
    refs, missing = _complete_refs(doc, regimes)
    missing += _verify(exp, refs)
    if missing:
        raise ManifestIncomplete(missing)
    results = []
    for house in sorted(doc["houses"]):
        test = dio.load_dataset(exp.dataset_stem(house, "test"))
        rows, rows_mean, mae, testsets = {}, {}, {}, {}
        for regime in regimes:
            params = fc.load_checkpoint(exp.checkpoint(house, regime))[0]
            mae[regime] = tr.evaluate_mae(params, test)
            rep = json.loads((exp.attack_dir(house) / f"{regime}_report.json").read_text(encoding="utf-8"))
            rows[regime] = rep["nearest_row"]
            rows_mean[regime] = rep["mean_aggregation_row"]
            testsets[regime] = ex.load_attributions(exp.attribution(house, regime, "test"))
        results.append(rp.HouseResults(house, rows, rows_mean, mae, testsets))
    meta = {"tool_version": __version__, "experiment_id": doc.get("experiment_id"), "regimes": list(regimes)}
    paths = rp.write_report(results, exp.root / "report", meta)
    doc["report"] = [exp.ref(p) for p in paths]
    return paths


def cmd_run(args, st: Settings, exp: Experiment, doc: dict) -> list[Path]:
    paths = cmd_ingest(args, st, exp, doc)
    for regime in st.experiment.regimes:
        sub = dataclasses.replace(st, regime=regime)
        paths += cmd_train(args, sub, exp, doc)
        paths += cmd_explain(args, sub, exp, doc)
        paths += cmd_attack(args, sub, exp, doc)
    return paths + cmd_report(args, st, exp, doc)


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "explain": cmd_explain,
    "attack": cmd_attack,
    "report": cmd_report,
    "run": cmd_run,
}


# ---------------------------------------------------------------- plumbing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="experiment directory")
    common.add_argument("--seed", help="random seed")
    common.add_argument("--house", help="house identifier")
    common.add_argument("--regime", help="baseline | shap_reg | dp")
    common.add_argument("--lambda", dest="lambda", help="entropy penalty weight")
    common.add_argument("--alpha", help="target entropy in nats (default ln of player count)")

    parser = argparse.ArgumentParser(prog="shapguard", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"shapguard {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common], help="write a synthetic household CSV")
    p.add_argument("--days", type=int)
    p.add_argument("--appliances", type=int)
    p.add_argument("--cadence", type=int, help="seconds between readings")
    p.add_argument("--target", help="output CSV (default <out>/raw/<house>.csv)")
    for name in ("ingest", "run"):
        p = sub.add_parser(name, parents=[common],
                           help="parse, resample and window a CSV" if name == "ingest" else "every stage for one house")
        p.add_argument("--input", required=True, help="household CSV")
        p.add_argument("--schema", choices=("generic", "refit"), default="generic")
    sub.add_parser("train", parents=[common], help="train one regime")
    p = sub.add_parser("explain", parents=[common], help="exact Shapley attributions")
    p.add_argument("--granularity", choices=("channel", "timestep"))
    sub.add_parser("attack", parents=[common], help="run the five attacks on saved attributions")
    sub.add_parser("report", parents=[common], help="comparison table, heatmap and entropy summaries")
    return parser


def _exit_code(exc: BaseException) -> int | None:
    if isinstance(exc, (ConfigError, ex.EnumerationLimit, Timeout)):
        return EXIT_CONFIG
    if isinstance(exc, (dio.DataError, FileNotFoundError, fc.EmptyBatch)):
        return EXIT_DATA
    if isinstance(exc, (nk.NonFiniteError, nk.DomainError, tr.TrainingDiverged, FloatingPointError)):
        return EXIT_NUMERIC
    return None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    exp = None
    started = time.perf_counter()
    try:
        st = settings_from(args)
        exp = Experiment(st.out)
        with exp.lock():
            exp.log(event="start", command=args.command, config=st.echo(), tool_version=__version__)
            doc = exp.load()
            doc.setdefault("experiment_id", hashlib.sha256(
                json.dumps(st.experiment.to_dict(), sort_keys=True).encode()).hexdigest()[:12])
            doc["tool_version"] = __version__
            doc["config"] = st.experiment.to_dict()
            paths = COMMANDS[args.command](args, st, exp, doc)
            exp.save(doc)
            for p in paths:
                exp.log(event="artifact", command=args.command, path=str(p), sha256=sha256(p))
            exp.log(event="end", command=args.command, status="ok", exit_code=EXIT_OK,
                    elapsed_s=round(time.perf_counter() - started, 3))
        return EXIT_OK
    except Exception as exc:
        code = _exit_code(exc)
        if code is None:
            raise
        err = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
        if isinstance(exc, ManifestIncomplete):
            err["missing"] = exc.missing
        print(json.dumps(err), file=sys.stderr)
        if exp is not None:
            try:
                exp.log(event="end", command=args.command, status="error", **err)
            except OSError:
                pass
        return code


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
