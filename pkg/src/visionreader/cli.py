"""Command-line entry points: ``vrk``, ``forge`` and ``vrk-eval``.

Every ``vrk`` command that produces artifacts writes them into a fresh run
directory (``<root>/<timestamp>-<command>-seed<N>``). Files are staged in a
temporary directory and moved into place only when the command succeeds.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    CATEGORIES,
    ConfigError,
    DatasetError,
    QARecord,
    load_dataset,
    load_feature_bundles,
    load_metadata,
    save_dataset,
    save_feature_bundles,
    write_jsonl,
)
from .forge import build_corpus, compute_stats, load_templates
from .fusion import FusionConfig
from .metrics import EvalPair, evaluate, ocr_coverage_bucket
from .model import ModelConfig
from .reports import BUCKETERS, MissingMetadataError, format_table, report_by_bucket, report_by_field, rows_to_csv
from .synthetic import SyntheticFeatureProvider, synthetic_books
from .training import TrainSchedule, evaluate_examples, make_examples, run_data_fraction_sweep, train
from .validation import check_fraction_list

log = logging.getLogger("visionreader")

COMMANDS = ("build", "train", "eval", "ablate", "sweep", "report")
PRIMARY_FIELDS = ("title", "author", "publisher", "translator")
CONFIG_VERSION = 1

# desk-scale defaults for the bundled synthetic corpus
DEFAULT_CONFIG = {
    "version": CONFIG_VERSION,
    "synthetic": {"n_images": 80, "seed": 0, "translator_rate": 0.5},
    "model": {"d_model": 32, "n_heads": 4, "n_encoder_layers": 1, "n_decoder_layers": 1, "ffn_hidden": 64,
              "dropout": 0.0, "max_decode_len": 16},
    "fusion": {"d_model": 32, "f_obj": 32, "f_det": 16, "f_rec": 16, "f_grid": 16, "max_text_len": 48},
    "schedule": {"lr": 3e-3, "batch_size": 32, "max_epochs": 80, "patience": 15},
    "eval_split": "dev",
}


class CLIError(Exception):
    """Reported as a single-line diagnostic with a non-zero exit status."""


# --------------------------------------------------------------------------
# run specification


@dataclass
class RunSpec:
    command: str
    config_path: str | None = None
    seed: int = 0
    no_object: bool = False
    no_ocr: bool = False
    field_scope: tuple[str, ...] = PRIMARY_FIELDS
    fractions: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    out: str | None = None
    checkpoint: str | None = None
    split: str | None = None
    bucketer: str = "field"
    predictions: str | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if (self.no_object or self.no_ocr) and self.command not in ("train", "eval", "ablate"):
            raise ConfigError("--no-object/--no-ocr only apply to train, eval and ablate")
        if not self.field_scope:
            raise ConfigError("field scope is empty")
        bad = [f for f in self.field_scope if f not in CATEGORIES]
        if bad:
            raise ConfigError(f"unknown field(s): {', '.join(bad)}")

    @property
    def genre_mode(self) -> bool:
        return tuple(self.field_scope) == ("genre",)


@dataclass
class LoadedConfig:
    raw: dict
    model: ModelConfig
    fusion: FusionConfig
    schedule: TrainSchedule
    records: list
    bundles: dict
    inputs: dict = field(default_factory=dict)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def read_config(path: str | None) -> tuple[dict, Path]:
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG)), Path.cwd()
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise CLIError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CLIError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(raw, dict) or raw.get("version") != CONFIG_VERSION:
        raise CLIError(f"config {path} must be a JSON object with \"version\": {CONFIG_VERSION}")
    base = json.loads(json.dumps(DEFAULT_CONFIG))
    if "data" in raw:
        base.pop("synthetic")
    return _merge(base, raw), Path(path).resolve().parent


def _synthetic_corpus(opts: dict, fusion: FusionConfig):
    n = int(opts.get("n_images", 80))
    seed = int(opts.get("seed", 0))
    books = synthetic_books(n, seed=seed, translator_rate=float(opts.get("translator_rate", 0.5)))
    records = build_corpus(books, load_templates(), seed=seed, ratios=tuple(opts.get("ratios", (0.7, 0.15, 0.15))))
    provider = SyntheticFeatureProvider.for_config(
        fusion, seed=seed, grid_size=int(opts.get("grid_size", 4)), miss_rate=float(opts.get("miss_rate", 0.0))
    )
    return records, {b.image_id: provider.for_metadata(b) for b in books}, books


def load_run_config(spec: RunSpec) -> LoadedConfig:
    raw, base = read_config(spec.config_path)
    seed = spec.seed
    try:
        model = ModelConfig(**{**raw["model"], "seed": seed})
        fusion = FusionConfig(**{**raw["fusion"], "seed": seed, "no_object": spec.no_object, "no_ocr": spec.no_ocr})
        schedule = TrainSchedule(**{**raw["schedule"], "seed": seed})
    except TypeError as exc:
        raise CLIError(f"invalid config: {exc}") from None

    inputs = {}
    if "data" in raw:
        data_path = base / raw["data"]
        if not data_path.exists():
            raise CLIError(f"data file not found: {data_path}")
        records = load_dataset(data_path)
        inputs[str(data_path)] = _sha256(data_path)
        if "features" in raw:
            feat_path = base / raw["features"]
            if not feat_path.exists():
                raise CLIError(f"features file not found: {feat_path}")
            bundles = load_feature_bundles(feat_path)
            inputs[str(feat_path)] = _sha256(feat_path)
        elif "metadata" in raw:
            meta_path = base / raw["metadata"]
            provider = SyntheticFeatureProvider.for_config(fusion, seed=int(raw.get("feature_seed", 0)))
            bundles = {m.image_id: provider.for_metadata(m) for m in load_metadata(meta_path)}
            inputs[str(meta_path)] = _sha256(meta_path)
        else:
            raise CLIError("config with \"data\" also needs \"features\" or \"metadata\"")
    else:
        records, bundles, _ = _synthetic_corpus(raw["synthetic"], fusion)
        inputs["synthetic"] = hashlib.sha256(json.dumps(raw["synthetic"], sort_keys=True).encode()).hexdigest()

    records = [r for r in records if r.category in spec.field_scope]
    if not records:
        raise CLIError(f"no records left for fields {','.join(spec.field_scope)}")
    return LoadedConfig(raw, model, fusion, schedule, records, bundles, inputs)


# --------------------------------------------------------------------------
# run directories


def run_root(spec: RunSpec) -> Path:
    if spec.out:
        return Path(spec.out)
    return Path(os.environ.get("VRK_RUN_DIR", "runs"))


class RunDir:
    """Stage artifacts in a temp dir; ``commit`` writes the manifest and renames."""

    def __init__(self, spec: RunSpec, inputs: dict | None = None, config: dict | None = None):
        self.spec = spec
        self.root = run_root(spec)
        self.root.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".tmp-", dir=self.root))
        self.inputs = inputs or {}
        self.config = config or {}
        self.started = _dt.datetime.now(_dt.timezone.utc)

    def path(self, name: str) -> Path:
        return self.tmp / name

    def write_json(self, name: str, obj) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        return p

    def commit(self) -> Path:
        artifacts = {}
        for p in sorted(self.tmp.rglob("*")):
            if p.is_file():
                artifacts[str(p.relative_to(self.tmp))] = _sha256(p)
        input_hash = hashlib.sha256(json.dumps(self.inputs, sort_keys=True).encode()).hexdigest()
        manifest = {
            "command": self.spec.command,
            "seed": self.spec.seed,
            "spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(self.spec).items()},
            "config": self.config,
            "inputs": self.inputs,
            "input_hash": input_hash,
            "artifacts": artifacts,
            "started": self.started.isoformat(),
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        self.write_json("manifest.json", manifest)
        stamp = self.started.strftime("%Y%m%dT%H%M%S%fZ")
        final = self.root / f"{stamp}-{self.spec.command}-seed{self.spec.seed}"
        n = 1
        while final.exists():
            final = self.root / f"{stamp}-{self.spec.command}-seed{self.spec.seed}-{n}"
            n += 1
        os.replace(self.tmp, final)
        return final

    def abort(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


# --------------------------------------------------------------------------
# commands


def _eval_pairs(records: Sequence[QARecord], preds: Sequence[str], bundles: dict | None = None) -> list[EvalPair]:
    pairs = []
    for r, p in zip(records, preds):
        meta = {"question": r.question, "image_id": r.image_id}
        if bundles is not None and r.image_id in bundles:
            meta["ocr_coverage"] = ocr_coverage_bucket(r.answer, bundles[r.image_id].ocr_texts)
        pairs.append(EvalPair(r.answer, p, r.category, meta))
    return pairs


def _write_eval_artifacts(run: RunDir, prefix: str, records, preds, bundles, genre_mode: bool) -> dict:
    pairs = _eval_pairs(records, preds, bundles)
    report = evaluate(pairs, bucket_keys=("ocr_coverage",) if bundles is not None else ())
    write_jsonl(
        run.path(f"{prefix}predictions.jsonl"),
        ({"image_id": r.image_id, "question": r.question, "prediction": p} for r, p in zip(records, preds)),
    )
    run.write_json(f"{prefix}report.json", report.to_dict())
    run.write_text(f"{prefix}by_field.csv", rows_to_csv(report_by_field(pairs, genre_mode), percent=True))
    for b in BUCKETERS:
        run.write_text(f"{prefix}by_{b}.csv", rows_to_csv(report_by_bucket(pairs, b), percent=True))
    return report.to_dict()


def _train_into(run: RunDir, cfg: LoadedConfig, spec: RunSpec, prefix: str = "") -> tuple:
    result = train(cfg.records, cfg.bundles, cfg.model, cfg.fusion, cfg.schedule, log_path=run.path(f"{prefix}train_log.jsonl"))
    save_checkpoint(run.path(f"{prefix}checkpoint.pt"), result.model, result.vocab, result.state.rng_state)
    return result


def _eval_split_records(cfg: LoadedConfig, spec: RunSpec) -> list[QARecord]:
    split = spec.split or cfg.raw.get("eval_split", "dev")
    records = [r for r in cfg.records if r.split == split]
    if not records:
        raise CLIError(f"split {split!r} has no records in scope")
    return records


def cmd_train(spec: RunSpec) -> Path:
    cfg = load_run_config(spec)
    run = RunDir(spec, cfg.inputs, cfg.raw)
    try:
        result = _train_into(run, cfg, spec)
        dev = [r for r in cfg.records if r.split == "dev"]
        report, preds = evaluate_examples(result.model, make_examples(dev, cfg.bundles, result.vocab, cfg.fusion), result.vocab)
        _write_eval_artifacts(run, "dev_", dev, preds, cfg.bundles, spec.genre_mode)
        return run.commit()
    except BaseException:
        run.abort()
        raise


def cmd_eval(spec: RunSpec) -> Path:
    if spec.checkpoint is None:
        raise CLIError("eval needs --checkpoint (or use --gold/--pred for file scoring)")
    cfg = load_run_config(spec)
    model, vocab, _ = load_checkpoint(spec.checkpoint)
    if spec.no_object or spec.no_ocr:
        fc = dataclasses.replace(model.fusion_config, no_object=spec.no_object, no_ocr=spec.no_ocr)
        model.fusion.config = fc
    records = _eval_split_records(cfg, spec)
    run = RunDir(spec, {**cfg.inputs, spec.checkpoint: _sha256(spec.checkpoint)}, cfg.raw)
    try:
        examples = make_examples(records, cfg.bundles, vocab, model.fusion_config)
        _, preds = evaluate_examples(model, examples, vocab)
        _write_eval_artifacts(run, "", records, preds, cfg.bundles, spec.genre_mode)
        return run.commit()
    except BaseException:
        run.abort()
        raise


def cmd_ablate(spec: RunSpec) -> Path:
    """Train the full model and the ablated one on the same seed; compare per field."""
    if not (spec.no_object or spec.no_ocr):
        raise CLIError("ablate needs --no-object and/or --no-ocr")
    full_spec = dataclasses.replace(spec, no_object=False, no_ocr=False)
    full_cfg = load_run_config(full_spec)
    abl_cfg = load_run_config(spec)
    run = RunDir(spec, full_cfg.inputs, full_cfg.raw)
    try:
        rows = {}
        for prefix, cfg in (("full_", full_cfg), ("ablated_", abl_cfg)):
            result = _train_into(run, cfg, spec, prefix)
            records = _eval_split_records(cfg, spec)
            _, preds = evaluate_examples(result.model, make_examples(records, cfg.bundles, result.vocab, cfg.fusion), result.vocab)
            _write_eval_artifacts(run, prefix, records, preds, cfg.bundles, spec.genre_mode)
            rows[prefix] = {r["field"]: r for r in report_by_field(_eval_pairs(records, preds), spec.genre_mode)}
        delta = []
        for f, full in rows["full_"].items():
            abl = rows["ablated_"][f]
            delta.append({"field": f, "em": abl["em"], "f1": abl["f1"], "n": abl["n"],
                          "delta_em": abl["em"] - full["em"], "delta_f1": abl["f1"] - full["f1"]})
        run.write_json("ablation.json", delta)
        run.write_text("ablation.csv", rows_to_csv(delta))
        return run.commit()
    except BaseException:
        run.abort()
        raise


def cmd_sweep(spec: RunSpec) -> Path:
    cfg = load_run_config(spec)
    run = RunDir(spec, cfg.inputs, cfg.raw)
    try:
        points = run_data_fraction_sweep(
            cfg.records, cfg.bundles, spec.fractions, cfg.model, cfg.fusion, cfg.schedule, seed=spec.seed
        )
        run.write_json("sweep.json", [p.to_dict() for p in points.values()])
        rows = [{"fraction": p.fraction, "train_images": p.train_images, "train_records": p.train_records,
                 "dev_em": p.dev_em, "dev_f1": p.dev_f1} for p in points.values()]
        run.write_text("sweep.csv", rows_to_csv(rows))
        return run.commit()
    except BaseException:
        run.abort()
        raise


def _read_predictions(path) -> dict:
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                key = (str(obj["image_id"]), obj["question"])
                pred = obj["prediction"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DatasetError(f"bad prediction record ({exc})", line=lineno) from None
            preds[key] = "" if pred is None else str(pred)
    return preds


def join_predictions(gold: Sequence[QARecord], preds: dict) -> tuple[list[QARecord], list[str]]:
    """Match predictions to gold by ``(image_id, question)``; missing ones score as empty."""
    seen = set()
    for r in gold:
        key = (r.image_id, r.question)
        if key in seen:
            raise DatasetError(f"duplicate gold key {key!r}")
        seen.add(key)
    return list(gold), [preds.get((r.image_id, r.question), "") for r in gold]


def score_files(gold_path, pred_path, normalize=True, literal_eq9=False, fields=None, features_path=None) -> tuple[dict, list]:
    gold = load_dataset(gold_path)
    if fields:
        gold = [r for r in gold if r.category in fields]
    if not gold:
        raise CLIError("no gold records to score")
    records, preds = join_predictions(gold, _read_predictions(pred_path))
    bundles = load_feature_bundles(features_path) if features_path else None
    pairs = _eval_pairs(records, preds, bundles)
    report = evaluate(pairs, normalize=normalize, literal_eq9=literal_eq9,
                      bucket_keys=("ocr_coverage",) if bundles else ())
    return report.to_dict(), pairs


def cmd_report(spec: RunSpec, gold: str | None, features: str | None) -> str:
    if not spec.predictions or not gold:
        raise CLIError("report needs --pred and --gold")
    _, pairs = score_files(gold, spec.predictions, fields=spec.field_scope, features_path=features)
    if spec.bucketer == "field":
        rows = report_by_field(pairs, spec.genre_mode)
    else:
        try:
            rows = report_by_bucket(pairs, spec.bucketer)
        except MissingMetadataError as exc:
            raise CLIError(str(exc)) from None
    return rows_to_csv(rows, percent=True)


def _atomic_write(path, write) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=path.parent)
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def cmd_build(meta: str, templates: str | None, seed: int, ratios: str, out: str) -> list[QARecord]:
    try:
        ratio_t = tuple(float(v) for v in ratios.split(","))
    except ValueError:
        raise CLIError(f"--ratios must be three comma-separated numbers, got {ratios!r}") from None
    metas = load_metadata(meta)
    records = build_corpus(metas, load_templates(templates), seed=seed, ratios=ratio_t)
    _atomic_write(out, lambda p: save_dataset(p, records))
    return records


def cmd_stats(data: str, meta: str | None = None) -> str:
    records = load_dataset(data)
    stats = compute_stats(records, load_metadata(meta) if meta else None)
    return stats.to_json()


def cmd_synth(n_images: int, seed: int, out: str, fusion_overrides: dict | None = None) -> Path:
    """Write a synthetic corpus (metadata, QA JSONL, feature bundles) and a config for it."""
    raw = json.loads(json.dumps(DEFAULT_CONFIG))
    fusion = FusionConfig(**{**raw["fusion"], **(fusion_overrides or {})})
    records, bundles, books = _synthetic_corpus({"n_images": n_images, "seed": seed}, fusion)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(out_dir / "metadata.jsonl", (dataclasses.asdict(b) for b in books))
    save_dataset(out_dir / "corpus.jsonl", records)
    save_feature_bundles(out_dir / "features.jsonl", bundles.values())
    raw.pop("synthetic")
    raw.update({"data": "corpus.jsonl", "features": "features.jsonl"})
    (out_dir / "config.json").write_text(json.dumps(raw, indent=2) + "\n", encoding="utf-8")
    return out_dir


# --------------------------------------------------------------------------
# argument parsing


def _fields(text: str | None) -> tuple[str, ...]:
    if not text:
        return PRIMARY_FIELDS
    return tuple(f.strip() for f in text.split(",") if f.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vrk", description="OCR-VQA toolkit: build, train, evaluate, analyse.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, ablation=False):
        sp.add_argument("--config", help="JSON config with \"version\": 1 (default: bundled synthetic corpus)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--fields", help="comma-separated field scope (default: all but genre)")
        sp.add_argument("--out", help="run output root (default: $VRK_RUN_DIR or ./runs)")
        if ablation:
            sp.add_argument("--no-object", action="store_true", help="drop object features")
            sp.add_argument("--no-ocr", action="store_true", help="drop OCR features and OCR text")

    sp = sub.add_parser("build", help="clean metadata and synthesize a QA corpus")
    sp.add_argument("--meta", required=True)
    sp.add_argument("--templates")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--ratios", default="0.7,0.15,0.15")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("stats", help="corpus statistics as JSON")
    sp.add_argument("--data", required=True)
    sp.add_argument("--meta")

    sp = sub.add_parser("synth", help="write a synthetic corpus with feature bundles")
    sp.add_argument("--n-images", type=int, default=80)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    common(sub.add_parser("train", help="train a model"), ablation=True)

    sp = sub.add_parser("eval", help="evaluate a checkpoint, or score a predictions file")
    common(sp, ablation=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--split", choices=("train", "dev", "test"))
    sp.add_argument("--gold")
    sp.add_argument("--pred")
    sp.add_argument("--literal-eq9", action="store_true", help="F1 as P*R/(P+R), without the factor 2")
    sp.add_argument("--no-normalize", action="store_true", help="compare answers without lowercasing")

    sp = sub.add_parser("ablate", help="train full and ablated models on one seed and compare")
    common(sp, ablation=True)
    sp.add_argument("--split", choices=("train", "dev", "test"))

    sp = sub.add_parser("sweep", help="train on nested fractions of the train images")
    common(sp)
    sp.add_argument("--fractions", default="0.25,0.5,0.75,1.0")

    sp = sub.add_parser("report", help="per-field or per-bucket CSV from a predictions file")
    sp.add_argument("--gold", required=True)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--features")
    sp.add_argument("--by", choices=("field",) + BUCKETERS, default="field")
    sp.add_argument("--fields")
    return p


def dispatch(args: argparse.Namespace) -> int:
    cmd = args.command
    if cmd == "build":
        records = cmd_build(args.meta, args.templates, args.seed, args.ratios, args.out)
        print(f"wrote {len(records)} records to {args.out}")
        return 0
    if cmd == "stats":
        print(cmd_stats(args.data, args.meta))
        return 0
    if cmd == "synth":
        print(cmd_synth(args.n_images, args.seed, args.out))
        return 0
    if cmd == "eval" and args.gold and args.pred:
        report, _ = score_files(args.gold, args.pred, not args.no_normalize, args.literal_eq9,
                                _fields(args.fields) if args.fields else None)
        print(json.dumps(report, ensure_ascii=False, indent=2))
        return 0
    if cmd == "report":
        spec = RunSpec("report", field_scope=_fields(args.fields) if args.fields else tuple(CATEGORIES),
                       bucketer=args.by, predictions=args.pred)
        sys.stdout.write(cmd_report(spec, args.gold, args.features))
        return 0

    spec = RunSpec(
        command=cmd,
        config_path=args.config,
        seed=args.seed,
        no_object=getattr(args, "no_object", False),
        no_ocr=getattr(args, "no_ocr", False),
        field_scope=_fields(args.fields),
        fractions=tuple(check_fraction_list(args.fractions)) if cmd == "sweep" else (0.25, 0.5, 0.75, 1.0),
        out=args.out,
        checkpoint=getattr(args, "checkpoint", None),
        split=getattr(args, "split", None),
    )
    runner = {"train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate, "sweep": cmd_sweep}[cmd]
    print(runner(spec))
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    torch.set_num_threads(max(1, min(4, os.cpu_count() or 1)))
    try:
        return dispatch(args)
    except (CLIError, ConfigError, DatasetError, ValueError, KeyError, OSError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"vrk {args.command}: error: {msg}", file=sys.stderr)
        return 2


def forge_main(argv: Sequence[str] | None = None) -> int:
    """``forge build ...`` / ``forge stats ...``."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in ("build", "stats"):
        print("usage: forge {build,stats} ...", file=sys.stderr)
        return 2
    return main(argv)


def eval_main(argv: Sequence[str] | None = None) -> int:
    """``vrk-eval run --gold G --pred P [--literal-eq9] [--no-normalize]``."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] != "run":
        print("usage: vrk-eval run --gold <jsonl> --pred <jsonl> [--literal-eq9] [--no-normalize]", file=sys.stderr)
        return 2
    rest = argv[1:]
    if "--gold" not in rest or "--pred" not in rest:
        print("vrk-eval run: error: --gold and --pred are required", file=sys.stderr)
        return 2
    return main(["eval"] + rest)


if __name__ == "__main__":
    sys.exit(main())
