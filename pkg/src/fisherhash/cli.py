"""Command-line front end: train, encode, index, query, eval, ablate, curves.

Every run resolves a configuration (JSON file plus flag overrides),
hashes it, and stamps the hash into all JSON artifacts so outputs can
be traced back to their exact settings.  Exit codes: 0 ok, 2 config
error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from .binary_codes import BinaryCodeMatrix
from .datasets import (
    Dataset,
    load_dataset,
    load_labels,
    load_manifest,
    make_synthetic,
    write_labels,
)
from .encoder import EncoderSpec, forward, load_checkpoint
from .evaluation import metrics_report, search, write_metrics_csv, write_metrics_json
from .exceptions import ConfigError, DataError, NumericalError
from .training import HyperParams, train, write_loss_curves

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

ABLATION_VARIANTS = ("pair", "pair+intra", "full")


def config_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        payload = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{p}: top-level config must be an object")
    return payload


def _resolve_out_dir(args) -> Path:
    if args.out is None:
        raise ConfigError("an output directory is required (--out DIR)")
    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise ConfigError(
                f"output directory {out} is not empty (pass --force to replace)"
            )
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threads(args) -> int:
    n = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if n < 1:
        raise ConfigError(f"--threads must be >= 1, got {n}")
    return n


def _build_dataset(cfg: dict, base_dir: Path) -> Dataset:
    spec = cfg.get("dataset")
    if not spec:
        raise ConfigError("config needs a 'dataset' section")
    if "manifest" in spec:
        manifest_path = base_dir / spec["manifest"]
        try:
            manifest = load_manifest(manifest_path)
        except FileNotFoundError as exc:
            raise DataError(f"dataset manifest not found: {manifest_path}") from exc
        return load_dataset(manifest, base_dir=manifest_path.parent)
    if "synthetic" in spec:
        syn = dict(spec["synthetic"])
        try:
            return make_synthetic(
                classes=int(syn["classes"]),
                per_class=int(syn["per_class"]),
                dim=int(syn["dim"]),
                separation=float(syn["separation"]),
                seed=int(syn["seed"]),
                query_fraction=float(syn.get("query_fraction", 0.1)),
            )
        except KeyError as exc:
            raise ConfigError(f"synthetic dataset spec missing key {exc}") from exc
    raise ConfigError("dataset section needs either 'manifest' or 'synthetic'")


def _build_hyper(cfg: dict, args) -> HyperParams:
    hyper = dict(cfg.get("hyper", {}))
    if args.seed is not None:
        hyper["seed"] = args.seed
    try:
        return HyperParams(**hyper)
    except TypeError as exc:
        raise ConfigError(f"bad hyper section: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_encoder_spec(cfg: dict, dataset: Dataset, hp: HyperParams) -> EncoderSpec:
    enc = dict(cfg.get("encoder", {}))
    hidden = tuple((int(w), str(a)) for w, a in enc.get("hidden_layers", []))
    try:
        return EncoderSpec(
            input_dim=dataset.input_dim,
            output_dim=hp.bits,
            hidden_layers=hidden,
            seed=int(enc.get("seed", hp.seed)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _resolved_payload(cfg: dict, args, command: str) -> dict:
    payload = {"command": command, "config": cfg}
    if args.seed is not None:
        payload["seed_override"] = args.seed
    return payload


def _write_meta(out: Path, payload: dict, chash: str) -> None:
    meta = {"config_hash": chash, "resolved": payload}
    (out / "meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _encode_features(state, features: np.ndarray) -> BinaryCodeMatrix:
    u, _ = forward(state, features)
    return BinaryCodeMatrix.from_values(u)


# ----------------------------------------------------------------- train


def cmd_train(args) -> int:
    _threads(args)  # validated for interface coherence; training numerics never depend on it
    cfg = _load_config_file(args.config)
    base_dir = Path(args.config).parent if args.config else Path(".")
    dataset = _build_dataset(cfg, base_dir)
    hp = _build_hyper(cfg, args)
    spec = _build_encoder_spec(cfg, dataset, hp)
    payload = _resolved_payload(cfg, args, "train")
    chash = config_hash(payload)
    out = _resolve_out_dir(args)
    try:
        report = train(dataset, hp, spec, out_dir=out, config_hash=chash)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write_meta(out, payload, chash)
    print(f"trained {hp.epochs} epochs; training MAP {report.train_map:.4f}; "
          f"artifacts in {out} (config {chash})")
    return EXIT_OK


# ---------------------------------------------------------------- encode


def cmd_encode(args) -> int:
    from .datasets import load_features

    state = load_checkpoint(args.checkpoint)
    features = load_features(args.features)
    codes = _encode_features(state, features)
    out = _resolve_out_dir(args)
    codes.save(out / "codes.fhsh")
    payload = {
        "command": "encode",
        "checkpoint": str(args.checkpoint),
        "features": str(args.features),
    }
    _write_meta(out, payload, config_hash(payload))
    print(f"encoded {codes.n} items at {codes.K} bits -> {out / 'codes.fhsh'}")
    return EXIT_OK


# ----------------------------------------------------------------- index


def cmd_index(args) -> int:
    codes = BinaryCodeMatrix.load(args.codes)
    _, label_sets = load_labels(args.labels, num_classes=args.classes, n_items=codes.n)
    out = _resolve_out_dir(args)
    codes.save(out / "codes.fhsh")
    write_labels(out / "labels.txt", label_sets)
    payload = {
        "command": "index",
        "name": args.name,
        "bits": codes.K,
        "items": codes.n,
        "classes": args.classes,
    }
    chash = config_hash(payload)
    (out / "index.json").write_text(
        json.dumps(
            {"name": args.name, "bits": codes.K, "items": codes.n,
             "classes": args.classes, "config_hash": chash},
            indent=2, sort_keys=True,
        ) + "\n",
        encoding="utf-8",
    )
    print(f"indexed {codes.n} items ({codes.K} bits) as {args.name!r} in {out}")
    return EXIT_OK


def _load_index(path) -> tuple[BinaryCodeMatrix, list, int]:
    idx_dir = Path(path)
    meta_path = idx_dir / "index.json"
    if not meta_path.exists():
        raise DataError(f"not an index directory (missing index.json): {idx_dir}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    codes = BinaryCodeMatrix.load(idx_dir / "codes.fhsh")
    _, label_sets = load_labels(
        idx_dir / "labels.txt", num_classes=int(meta["classes"]), n_items=codes.n
    )
    return codes, label_sets, int(meta["classes"])


# ----------------------------------------------------------------- query


def cmd_query(args) -> int:
    db_codes, _, _ = _load_index(args.index)
    queries = BinaryCodeMatrix.load(args.queries)
    if args.k < 1 or args.k > db_codes.n:
        raise ConfigError(f"--k must be in [1, {db_codes.n}], got {args.k}")
    results = search(queries, db_codes, k=args.k, threads=_threads(args))
    out = _resolve_out_dir(args)
    with open(out / "results.csv", "w", encoding="utf-8") as fh:
        fh.write("query,rank,item,distance\n")
        for res in results:
            for rank, (item, dist) in enumerate(zip(res.indices, res.distances), 1):
                fh.write(f"{res.query},{rank},{item},{dist}\n")
    payload = {"command": "query", "index": str(args.index),
               "queries": str(args.queries), "k": args.k}
    _write_meta(out, payload, config_hash(payload))
    print(f"wrote top-{args.k} results for {queries.n} queries to {out / 'results.csv'}")
    return EXIT_OK


# ------------------------------------------------------------------ eval


def cmd_eval(args) -> int:
    db_codes = BinaryCodeMatrix.load(args.db_codes)
    query_codes = BinaryCodeMatrix.load(args.query_codes)
    _, db_labels = load_labels(args.db_labels, num_classes=args.classes, n_items=db_codes.n)
    _, query_labels = load_labels(
        args.query_labels, num_classes=args.classes, n_items=query_codes.n
    )
    try:
        ks = [int(k) for k in args.ks.split(",") if k]
    except ValueError as exc:
        raise ConfigError(f"bad --ks list {args.ks!r}") from exc
    payload = {
        "command": "eval",
        "db_codes": str(args.db_codes),
        "query_codes": str(args.query_codes),
        "ks": ks,
    }
    chash = config_hash(payload)
    try:
        report = metrics_report(
            query_codes, db_codes, query_labels, db_labels,
            ks=ks, num_classes=args.classes, threads=_threads(args),
            config_hash=chash,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = _resolve_out_dir(args)
    write_metrics_csv(report, out)
    write_metrics_json(report, out / "report.json")
    _write_meta(out, payload, chash)
    shown = ", ".join(f"MAP@{k}={v:.4f}" for k, v in sorted(report.map_at.items()))
    print(f"evaluated {query_codes.n} queries against {db_codes.n} items: {shown}")
    return EXIT_OK


# ---------------------------------------------------------------- ablate


def _eval_split_map(out_dir: Path, dataset: Dataset) -> float:
    """Query-split MAP against the trained database codes."""
    state = load_checkpoint(out_dir / "encoder.fhnn")
    query_idx = dataset.split("query")
    if query_idx.size == 0:
        raise ConfigError("ablation needs a non-empty query split")
    q_codes = _encode_features(state, dataset.features[:, query_idx])
    db_idx = dataset.split("database") if "database" in dataset.splits else dataset.split("train")
    train_idx = dataset.split("train")
    if np.array_equal(db_idx, train_idx):
        db_codes = BinaryCodeMatrix.load(out_dir / "codes.fhsh")
    else:
        db_codes = _encode_features(state, dataset.features[:, db_idx])
    rep = metrics_report(
        q_codes, db_codes,
        dataset.subset_labels(query_idx), dataset.subset_labels(db_idx),
        ks=[db_codes.n], num_classes=dataset.num_classes,
    )
    return rep.map_at[db_codes.n]


def cmd_ablate(args) -> int:
    cfg = _load_config_file(args.config)
    base_dir = Path(args.config).parent if args.config else Path(".")
    if args.seed is not None:
        raise ConfigError("--seed conflicts with ablate.seeds; remove one")
    ablate_cfg = cfg.get("ablate", {})
    seeds = [int(s) for s in ablate_cfg.get("seeds", [])]
    if not seeds:
        raise ConfigError("ablate config needs a non-empty 'ablate.seeds' list")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"duplicate seeds in ablate.seeds: {seeds}")
    variants = ablate_cfg.get("variants", list(ABLATION_VARIANTS))
    for v in variants:
        if v not in ABLATION_VARIANTS:
            raise ConfigError(f"unknown variant {v!r}; choose from {ABLATION_VARIANTS}")
    payload = _resolved_payload(cfg, args, "ablate")
    chash = config_hash(payload)
    out = _resolve_out_dir(args)

    rows = []
    for variant in variants:
        for seed in seeds:
            run_cfg = json.loads(json.dumps(cfg))  # deep copy
            run_cfg.setdefault("hyper", {})["seed"] = seed
            syn = run_cfg.get("dataset", {}).get("synthetic")
            if syn is not None:
                # fresh draw per run: each seed sees its own blobs
                syn["seed"] = int(syn.get("seed", 0)) + seed
            dataset = _build_dataset(run_cfg, base_dir)
            hp = _build_hyper(run_cfg, args).ablation(variant)
            spec = _build_encoder_spec(run_cfg, dataset, hp)
            run_dir = out / f"{variant.replace('+', '_')}_seed{seed}"
            run_dir.mkdir(parents=True)
            try:
                train(dataset, hp, spec, out_dir=run_dir, config_hash=chash)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            score = _eval_split_map(run_dir, dataset)
            rows.append((variant, seed, score))
            print(f"{variant:11s} seed={seed} MAP={score:.4f}")

    with open(out / "ablation.csv", "w", encoding="utf-8") as fh:
        fh.write("variant,seed,map\n")
        for variant, seed, score in rows:
            fh.write(f"{variant},{seed},{score!r}\n")
    medians = {
        v: float(np.median([r[2] for r in rows if r[0] == v]))
        for v in variants
    }
    summary = {"config_hash": chash, "medians": medians}
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_meta(out, payload, chash)
    print("medians: " + ", ".join(f"{v}={m:.4f}" for v, m in medians.items()))
    return EXIT_OK


# ---------------------------------------------------------------- curves


def cmd_curves(args) -> int:
    try:
        margins = [float(m) for m in args.margins.split(",") if m]
    except ValueError as exc:
        raise ConfigError(f"bad --margins list {args.margins!r}") from exc
    if not margins:
        raise ConfigError("--margins needs at least one value")
    if any(m < 0 for m in margins):
        raise ConfigError("margins must be >= 0")
    out = _resolve_out_dir(args)
    write_loss_curves(out / "curves.csv", margins,
                      d_min=args.d_min, d_max=args.d_max, points=args.points)
    payload = {"command": "curves", "margins": margins,
               "d_min": args.d_min, "d_max": args.d_max, "points": args.points}
    _write_meta(out, payload, config_hash(payload))
    print(f"wrote loss curves for m in {margins} to {out / 'curves.csv'}")
    return EXIT_OK


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="override hyper.seed")
    common.add_argument("--threads", type=int,
                        help="worker threads for query evaluation (results are independent of it)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--force", action="store_true",
                        help="replace a non-empty output directory")
    common.add_argument("--json", action="store_true",
                        help="machine-readable errors on stderr")

    parser = argparse.ArgumentParser(
        prog="fisherhash",
        description="Binary hash code learning and Hamming retrieval",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[common], help="train encoder, codes, centers")

    p = sub.add_parser("encode", parents=[common], help="encode features with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)

    p = sub.add_parser("index", parents=[common], help="bundle codes and labels into an index")
    p.add_argument("--codes", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--name", default="index")

    p = sub.add_parser("query", parents=[common], help="top-k Hamming search against an index")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, required=True)

    p = sub.add_parser("eval", parents=[common], help="retrieval metrics for code tables")
    p.add_argument("--db-codes", required=True)
    p.add_argument("--db-labels", required=True)
    p.add_argument("--query-codes", required=True)
    p.add_argument("--query-labels", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--ks", default="1,10,100")

    sub.add_parser("ablate", parents=[common], help="run loss-component ablations")

    p = sub.add_parser("curves", parents=[common], help="emit margin loss curves")
    p.add_argument("--margins", default="0,1,2")
    p.add_argument("--d-min", type=float, default=-8.0)
    p.add_argument("--d-max", type=float, default=8.0)
    p.add_argument("--points", type=int, default=161)

    return parser


_HANDLERS = {
    "train": cmd_train,
    "encode": cmd_encode,
    "index": cmd_index,
    "query": cmd_query,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "curves": cmd_curves,
}


def _report_error(args, exc: Exception, kind: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
    else:
        print(f"error ({kind}): {exc}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        _report_error(args, exc, "config")
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        _report_error(args, exc, "data")
        return EXIT_DATA
    except NumericalError as exc:
        _report_error(args, exc, "numerical")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
