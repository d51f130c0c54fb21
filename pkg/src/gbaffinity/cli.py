"""Command-line interface.

Subcommands: gen-synth, featurize, train, predict, evaluate, tune, importance.
All artifacts go under ``--out``; ``manifest.json`` there lists the SHA-256
of every artifact. Settings come from defaults, then ``--config`` (JSON),
then command-line flags.

Exit codes: 0 success, 1 unexpected error, 2 configuration error,
3 input parse/featurization error, 4 training error, 5 evaluation error,
6 unreadable model file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .baseline import RankDeficientWarning, ols_fit
from .boost import PRESETS, ModelFormatError, TrainConfig, load_model, save_model, train
from .evaluation import aggregate_runs, evaluate_predictions, format_table, importance_report
from .featurize import FeatureMatrix, FeaturizeError, InteractionConfig, featurize_dataset, feature_columns
from .molio import DatasetSchema, MolIOError, gen_synthetic, infer_schema, parse_dataset, write_dataset
from .tune import DEFAULT_RANGES, random_search

logger = logging.getLogger("gbaffinity")

THREADS_ENV = "GBAFFINITY_THREADS"

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_TRAIN = 4
EXIT_EVALUATE = 5
EXIT_MODEL = 6


class ConfigError(Exception):
    pass


class TrainError(Exception):
    pass


class EvaluateError(Exception):
    pass


class CacheCollisionError(Exception):
    pass


@dataclass
class RunConfig:
    train: Optional[Path] = None
    valid: Optional[Path] = None
    test: list[Path] = field(default_factory=list)
    out: Path = Path("gbaffinity-out")
    cache_dir: Optional[Path] = None
    model: Optional[Path] = None
    interaction: InteractionConfig = field(default_factory=InteractionConfig)
    train_config: TrainConfig = field(default_factory=TrainConfig)
    seeds: list[int] = field(default_factory=lambda: [0])
    valid_fraction: float = 0.0
    split_seed: int = 0
    threads: int = 1
    use_grid: bool = False
    tuner: dict = field(default_factory=dict)

    @property
    def cache(self) -> Path:
        return self.cache_dir or self.out / "cache"


# ------------------------------------------------------------------ config


def _path(value, base: Path) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in str(text).replace(" ", "").split(",") if s]
    except ValueError:
        raise ConfigError(f"invalid seed list {text!r}") from None
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    file_cfg: dict = {}
    base = Path.cwd()
    if getattr(args, "config", None):
        cfg_path = Path(args.config)
        try:
            file_cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {cfg_path}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must contain a JSON object")
        base = cfg_path.resolve().parent

    try:
        for key in ("train", "valid", "cache_dir", "model"):
            if file_cfg.get(key):
                setattr(cfg, key, _path(file_cfg[key], base))
        if file_cfg.get("out"):
            cfg.out = _path(file_cfg["out"], base)
        tests = file_cfg.get("test", [])
        cfg.test = [_path(t, base) for t in ([tests] if isinstance(tests, str) else tests)]
        if "seeds" in file_cfg:
            cfg.seeds = [int(s) for s in file_cfg["seeds"]]
        for key in ("valid_fraction", "split_seed", "threads", "use_grid"):
            if key in file_cfg:
                setattr(cfg, key, type(getattr(cfg, key))(file_cfg[key]))
        inter = dict(file_cfg.get("interaction", {}))
        train_cfg = PRESETS[file_cfg.get("preset", "lightgbm")].to_dict()
        train_cfg.update(file_cfg.get("train_config", {}))
        cfg.tuner = dict(file_cfg.get("tuner", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from None

    # command-line flags override the file
    for key in ("train", "valid", "cache_dir", "model"):
        if getattr(args, key, None):
            setattr(cfg, key, Path(getattr(args, key)))
    if getattr(args, "out", None):
        cfg.out = Path(args.out)
    if getattr(args, "test", None):
        cfg.test = [Path(t) for t in args.test]
    if getattr(args, "seeds", None):
        cfg.seeds = _parse_seeds(args.seeds)
    for key in ("valid_fraction", "split_seed", "threads"):
        if getattr(args, key, None) is not None:
            setattr(cfg, key, getattr(args, key))
    if getattr(args, "grid", False):
        cfg.use_grid = True
    if getattr(args, "cutoff", None) is not None:
        inter["d_cutoff"] = args.cutoff
    if getattr(args, "boundary", None):
        inter["boundary_inclusive"] = args.boundary == "inclusive"
    if getattr(args, "preset", None):
        train_cfg = {**PRESETS[args.preset].to_dict(), **file_cfg.get("train_config", {})}
    for key in ("n_trees", "learning_rate", "max_depth", "max_leaves", "min_child_samples",
                "l2_leaf_reg", "feature_fraction", "early_stopping_rounds"):
        if getattr(args, key, None) is not None:
            train_cfg[key] = getattr(args, key)
    if getattr(args, "threads", None) is None and "threads" not in file_cfg:
        try:
            cfg.threads = int(os.environ.get(THREADS_ENV) or 1)
        except ValueError:
            raise ConfigError(f"${THREADS_ENV} must be an integer") from None

    try:
        cfg.interaction = InteractionConfig.from_dict(inter)
        cfg.train_config = TrainConfig.from_dict(train_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.threads < 1:
        raise ConfigError("--threads must be >= 1")
    if not 0.0 <= cfg.valid_fraction < 1.0:
        raise ConfigError("--valid-fraction must be in [0, 1)")
    return cfg


# --------------------------------------------------------------- artifacts


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    return path


def update_manifest(out: Path) -> Path:
    """Rewrite ``out/manifest.json`` with the hash of every artifact under ``out``."""
    manifest = out / "manifest.json"
    artifacts = {
        p.relative_to(out).as_posix(): sha256_file(p)
        for p in sorted(out.rglob("*"))
        if p.is_file() and p != manifest
    }
    _dump_json({"tool": "gbaffinity", "version": __version__, "artifacts": artifacts}, manifest)
    return manifest


@dataclass
class Featurizer:
    interaction: InteractionConfig
    schema: DatasetSchema
    train_sha256: str = ""

    def to_dict(self) -> dict:
        return {
            "interaction": self.interaction.to_dict(),
            "schema": self.schema.to_dict(),
            "train_sha256": self.train_sha256,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Featurizer":
        return cls(InteractionConfig.from_dict(d["interaction"]), DatasetSchema.from_dict(d["schema"]), d.get("train_sha256", ""))

    @property
    def columns(self) -> list[str]:
        return feature_columns(self.interaction, self.schema)


def _featurizer_path(cfg: RunConfig) -> Path:
    return cfg.out / "featurizer.json"


def load_or_build_featurizer(cfg: RunConfig) -> Featurizer:
    """Schema frozen from the training set; reused while the training file
    and interaction settings are unchanged."""
    if cfg.train is None:
        raise ConfigError("a training dataset is required (--train)")
    if not cfg.train.exists():
        raise ConfigError(f"training dataset not found: {cfg.train}")
    train_hash = sha256_file(cfg.train)
    path = _featurizer_path(cfg)
    if path.exists():
        try:
            existing = Featurizer.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (KeyError, ValueError, json.JSONDecodeError):
            existing = None
        if existing and existing.train_sha256 == train_hash and existing.interaction == cfg.interaction:
            return existing
    complexes = parse_dataset(cfg.train)
    feat = Featurizer(cfg.interaction, infer_schema(complexes), train_hash)
    _dump_json(feat.to_dict(), path)
    return feat


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0


def load_features(
    dataset: Path, feat: Featurizer, cfg: RunConfig, stats: CacheStats | None = None
) -> FeatureMatrix:
    """Featurize ``dataset``, memoized on its content plus the featurizer settings."""
    if not dataset.exists():
        raise ConfigError(f"dataset not found: {dataset}")
    key_src = json.dumps(
        {"data": sha256_file(dataset), "interaction": feat.interaction.to_dict(), "schema": feat.schema.to_dict()},
        sort_keys=True,
    )
    key = hashlib.sha256(key_src.encode()).hexdigest()
    cache_file = cfg.cache / f"{key}.gbfm"
    columns = tuple(feat.columns)
    if cache_file.exists():
        matrix = FeatureMatrix.load(cache_file)
        if matrix.column_names != columns:
            raise CacheCollisionError(f"cache entry {cache_file.name} has unexpected columns")
        if stats:
            stats.hits += 1
        logger.info("cache hit for %s", dataset.name)
        return matrix
    t0 = time.perf_counter()
    complexes = parse_dataset(dataset)
    t1 = time.perf_counter()
    matrix = featurize_dataset(complexes, feat.interaction, feat.schema, threads=cfg.threads, use_grid=cfg.use_grid)
    t2 = time.perf_counter()
    logger.info(
        "featurized %s: %d complexes, parse %.2fs, featurize %.2fs", dataset.name, len(complexes), t1 - t0, t2 - t1
    )
    cfg.cache.mkdir(parents=True, exist_ok=True)
    matrix.save(cache_file)
    if stats:
        stats.misses += 1
    return matrix


def split_validation(matrix: FeatureMatrix, fraction: float, seed: int) -> tuple[FeatureMatrix, FeatureMatrix]:
    perm = np.random.default_rng(seed).permutation(matrix.n_rows)
    n_valid = int(round(fraction * matrix.n_rows))
    valid_idx, train_idx = np.sort(perm[:n_valid]), np.sort(perm[n_valid:])
    return matrix.take(train_idx), matrix.take(valid_idx)


def train_valid_matrices(cfg: RunConfig, feat: Featurizer) -> tuple[FeatureMatrix, Optional[FeatureMatrix]]:
    train_m = load_features(cfg.train, feat, cfg)
    if cfg.valid is not None:
        return train_m, load_features(cfg.valid, feat, cfg)
    if cfg.valid_fraction > 0:
        return split_validation(train_m, cfg.valid_fraction, cfg.split_seed)
    return train_m, None


# ---------------------------------------------------------------- commands


def cmd_gen_synth(args, cfg: RunConfig) -> dict:
    output = Path(args.output) if args.output else cfg.out / "synthetic.jsonl"
    output.parent.mkdir(parents=True, exist_ok=True)
    try:
        complexes = gen_synthetic(args.n, tuple(args.atoms), args.seed, args.target, args.noise)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_dataset(complexes, output)
    logger.info("wrote %d synthetic complexes to %s", len(complexes), output)
    return {"output": str(output), "n": len(complexes)}


def cmd_featurize(args, cfg: RunConfig) -> dict:
    t0 = time.perf_counter()
    feat = load_or_build_featurizer(cfg)
    stats = CacheStats()
    outputs = {}
    for path in [cfg.train, cfg.valid, *cfg.test]:
        if path is None:
            continue
        matrix = load_features(path, feat, cfg, stats)
        csv_path = cfg.out / "features" / f"{path.stem}.csv"
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        matrix.to_csv(csv_path)
        outputs[path.stem] = sha256_file(csv_path)
    logger.info("featurize finished in %.2fs (%d cache hits, %d misses)", time.perf_counter() - t0, stats.hits, stats.misses)
    return {"hits": stats.hits, "misses": stats.misses, "outputs": outputs}


def _model_path(cfg: RunConfig, seed: int) -> Path:
    return cfg.out / "models" / f"model_seed{seed}.json"


def cmd_train(args, cfg: RunConfig) -> dict:
    feat = load_or_build_featurizer(cfg)
    train_m, valid_m = train_valid_matrices(cfg, feat)
    if cfg.train_config.early_stopping_rounds and valid_m is None:
        raise ConfigError("early stopping needs --valid or --valid-fraction")
    models = {}
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        try:
            result = train(train_m, valid_m, cfg.train_config.replace(rng_seed=seed), threads=cfg.threads)
        except ValueError as exc:
            raise TrainError(str(exc)) from None
        model = result.model
        model.metadata.update({"seed": seed, "featurizer": feat.to_dict()})
        path = _model_path(cfg, seed)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_model(model, path)
        _dump_json(
            {
                "seed": seed,
                "n_trees": model.n_trees,
                "best_iteration": result.best_iteration,
                "stopped_early": result.stopped_early,
                "log": result.log,
            },
            cfg.out / "logs" / f"train_seed{seed}.json",
        )
        logger.info(
            "seed %d: %d trees in %.2fs, final train RMSE %.4f%s",
            seed, model.n_trees, time.perf_counter() - t0, result.log[-1]["train_rmse"],
            f" (early stop at {len(result.log) - 1}, best {result.best_iteration})" if result.stopped_early else "",
        )
        models[seed] = str(path)
    return {"models": models}


def _models(cfg: RunConfig) -> list[tuple[int, Path]]:
    if cfg.model is not None:
        return [(-1, cfg.model)]
    paths = [(s, _model_path(cfg, s)) for s in cfg.seeds]
    missing = [str(p) for _, p in paths if not p.exists()]
    if missing:
        raise ConfigError(f"model file(s) not found: {missing}")
    return paths


def _featurizer_of(model) -> Featurizer:
    try:
        return Featurizer.from_dict(model.metadata["featurizer"])
    except (KeyError, TypeError, ValueError):
        raise EvaluateError("model carries no featurizer settings; was it trained with this CLI?") from None


def cmd_predict(args, cfg: RunConfig) -> dict:
    if not cfg.test:
        raise ConfigError("predict needs at least one --test dataset")
    written = []
    for seed, mpath in _models(cfg):
        model = load_model(mpath)
        feat = _featurizer_of(model)
        tag = mpath.stem
        for test in cfg.test:
            matrix = load_features(test, feat, cfg)
            pred = model.predict(matrix)
            out = cfg.out / "predictions" / f"{test.stem}_{tag}.csv"
            out.parent.mkdir(parents=True, exist_ok=True)
            lines = ["id,affinity,prediction"] + [
                f"{rid},{y!r},{p!r}" for rid, y, p in zip(matrix.row_ids, matrix.labels.tolist(), pred.tolist())
            ]
            out.write_text("\n".join(lines) + "\n", encoding="utf-8")
            written.append(str(out))
    return {"predictions": written}


def cmd_evaluate(args, cfg: RunConfig) -> dict:
    if not cfg.test:
        raise ConfigError("evaluate needs at least one --test dataset")
    models = [(seed, load_model(p)) for seed, p in _models(cfg)]
    feat = _featurizer_of(models[0][1])
    datasets = [t.stem for t in cfg.test]
    gbdt_row: dict = {}
    lr_row: dict = {}
    lr_model = None
    if cfg.train is not None and cfg.train.exists():
        train_m = load_features(cfg.train, feat, cfg)
        with warnings.catch_warnings(record=True) as caught:
            # pooled one-hot sums add up to the atom count, so some collinearity is normal here
            warnings.simplefilter("always", RankDeficientWarning)
            lr_model = ols_fit(train_m.rows, train_m.labels)
        for w in caught:
            logger.info("linear baseline: %s", w.message)
    summary = {}
    for test in cfg.test:
        matrix = load_features(test, feat, cfg)
        runs = []
        for seed, model in models:
            if tuple(model.feature_names) != tuple(feat.columns):
                raise EvaluateError(f"model for seed {seed} was trained on different columns")
            try:
                runs.append(evaluate_predictions(matrix.labels, model.predict(matrix), test.stem, "GBDT", seed))
            except ValueError as exc:
                raise EvaluateError(f"{test.stem}: {exc}") from None
        agg = aggregate_runs(runs)
        gbdt_row[test.stem] = agg
        _dump_json(agg.to_dict(), cfg.out / "reports" / f"{test.stem}.json")
        summary[test.stem] = {"GBDT": agg.to_dict()}
        if lr_model is not None:
            try:
                lr = evaluate_predictions(matrix.labels, lr_model.predict(matrix.rows), test.stem, "LR")
            except ValueError as exc:
                raise EvaluateError(f"{test.stem}: {exc}") from None
            lr_row[test.stem] = lr
            summary[test.stem]["LR"] = lr.to_dict()
    rows = [("GBDT", gbdt_row)] + ([("LR", lr_row)] if lr_row else [])
    table = format_table(rows, datasets)
    (cfg.out / "reports").mkdir(parents=True, exist_ok=True)
    (cfg.out / "reports" / "table.txt").write_text(table, encoding="utf-8")
    _dump_json(summary, cfg.out / "reports" / "summary.json")
    print(table, end="")
    return {"table": table, "summary": summary}


def cmd_tune(args, cfg: RunConfig) -> dict:
    feat = load_or_build_featurizer(cfg)
    train_m, valid_m = train_valid_matrices(cfg, feat)
    if valid_m is None:
        raise ConfigError("tune needs --valid or --valid-fraction > 0")
    tuner = cfg.tuner
    n_trials = args.n_trials if args.n_trials is not None else int(tuner.get("n_trials", 20))
    ranges = {k: tuple(v) for k, v in tuner.get("ranges", DEFAULT_RANGES).items()}
    seed = args.tune_seed if args.tune_seed is not None else int(tuner.get("seed", 0))
    include_base = bool(tuner.get("include_default", True)) and not args.no_default_trial
    try:
        result = random_search(
            train_m, valid_m, cfg.train_config, n_trials, ranges, seed, include_base, threads=cfg.threads
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _dump_json([t.to_dict() for t in result.trials], cfg.out / "tune" / "trials.json")
    _dump_json(result.best_config.to_dict(), cfg.out / "tune" / "best_config.json")
    logger.info("best trial %d: valid RMSE %.4f", result.best_trial.index, result.best_trial.valid_rmse)
    return {"best": result.best_config.to_dict(), "best_valid_rmse": result.best_trial.valid_rmse}


def cmd_importance(args, cfg: RunConfig) -> dict:
    seed, mpath = _models(cfg)[0]
    model = load_model(mpath)
    report = importance_report(model)
    out_dir = cfg.out / "importance"
    written = report.write(out_dir)
    return {"files": [str(p) for p in written]}


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "tune": cmd_tune,
    "importance": cmd_importance,
}


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (default: gbaffinity-out)")
    common.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    common.add_argument("--log-level", default="INFO")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--train", help="training dataset (atoms JSONL)")
    data.add_argument("--valid", help="validation dataset (atoms JSONL)")
    data.add_argument("--test", action="append", help="test dataset; repeatable")
    data.add_argument("--cache-dir", help="feature cache directory (default: OUT/cache)")
    data.add_argument("--cutoff", type=float, help="interaction cutoff in Angstrom")
    data.add_argument("--boundary", choices=("inclusive", "exclusive"), help="count pairs exactly at the cutoff?")
    data.add_argument("--grid", action="store_true", help="use the cell-grid neighbour search")
    data.add_argument("--valid-fraction", type=float, help="carve a seeded validation split from --train")
    data.add_argument("--split-seed", type=int)
    data.add_argument("--seeds", help="comma-separated training seeds, e.g. 1,2,3")
    data.add_argument("--model", help="explicit model file (overrides OUT/models/model_seed<S>.json)")

    hyper = argparse.ArgumentParser(add_help=False)
    hyper.add_argument("--preset", choices=sorted(PRESETS))
    hyper.add_argument("--n-trees", type=int)
    hyper.add_argument("--learning-rate", type=float)
    hyper.add_argument("--max-depth", type=int)
    hyper.add_argument("--max-leaves", type=int)
    hyper.add_argument("--min-child-samples", type=int)
    hyper.add_argument("--l2-leaf-reg", type=float)
    hyper.add_argument("--feature-fraction", type=float)
    hyper.add_argument("--early-stopping-rounds", type=int)

    parser = argparse.ArgumentParser(prog="gbaffinity", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", parents=[common], help="write synthetic complexes")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--atoms", type=int, nargs=2, default=(20, 60), metavar=("MIN", "MAX"))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--target", choices=("linear", "friedman1", "pairwise_contact"), default="friedman1")
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--output", help="output JSONL (default: OUT/synthetic.jsonl)")

    sub.add_parser("featurize", parents=[common, data], help="featurize datasets into CSV + cache")
    sub.add_parser("train", parents=[common, data, hyper], help="train one model per seed")
    sub.add_parser("predict", parents=[common, data], help="write predictions for --test sets")
    sub.add_parser("evaluate", parents=[common, data], help="metrics report over seeds and test sets")
    t = sub.add_parser("tune", parents=[common, data, hyper], help="random-search hyperparameters")
    t.add_argument("--n-trials", type=int)
    t.add_argument("--tune-seed", type=int)
    t.add_argument("--no-default-trial", action="store_true", help="do not evaluate the base config as trial 0")
    sub.add_parser("importance", parents=[common, data], help="feature importance CSV + SVG charts")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = build_config(args)
        COMMANDS[args.command](args, cfg)
        if cfg.out.exists():
            update_manifest(cfg.out)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (MolIOError, FeaturizeError, CacheCollisionError) as exc:
        logger.error("input error: %s", exc)
        return EXIT_PARSE
    except TrainError as exc:
        logger.error("training failed: %s", exc)
        return EXIT_TRAIN
    except ModelFormatError as exc:
        logger.error("model error: %s", exc)
        return EXIT_MODEL
    except EvaluateError as exc:
        logger.error("evaluation failed: %s", exc)
        return EXIT_EVALUATE
    except Exception:  # noqa: BLE001
        logger.exception("unexpected error")
        return EXIT_UNEXPECTED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
