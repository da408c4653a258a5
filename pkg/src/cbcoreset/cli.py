"""Command-line pipeline: bottleneck -> score -> select, plus bench utilities.

Every stage writes its artifacts into an output directory together with a
``<stage>.manifest.json`` recording the tool version, resolved parameters,
and SHA-256 of every input and output, so a run can be reproduced and
verified bit-for-bit. Flags override values from an optional INI config
file (one section per stage). Exit codes: 1 for configuration problems,
2 for I/O and file-format problems, 3 for numerical failures; errors are
emitted as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .bench import BenchmarkConfig, SyntheticSpec, run_benchmark
from .bottleneck import (
    Bottleneck,
    ConceptCatalog,
    assemble_bottleneck,
    select_discriminative,
)
from .errors import CbcError, ConfigError
from .sampler import LABEL_FREE, LABELED, SelectionSpec, ccs_select, lookup_cutoff
from .scorer import TrainConfig, score_dataset, zero_shot_pseudo_labels
from .tensor_io import (
    file_sha256,
    read_embeddings,
    read_labels,
    read_named_embeddings,
    read_scores,
    write_coreset,
    write_embeddings,
    write_labels,
    write_scores,
)

OUT_DIR_ENV = "CBCORESET_OUT"

BOTTLENECK_JSON = "bottleneck.json"
BOTTLENECK_EC = "bottleneck_ec.cbe"
SCORES_JSONL = "scores.jsonl"
MARGINS_JSONL = "margins.jsonl"
PSEUDO_CBL = "pseudo_labels.cbl"
CORESET_TXT = "coreset.txt"


class _Stage:
    """Resolves one stage's settings from flags, config file, and defaults."""

    def __init__(self, args, section: str):
        self.args = args
        self.cfg = configparser.ConfigParser()
        path = getattr(args, "config", None)
        if path:
            if not Path(path).is_file():
                raise ConfigError(f"config file not found: {path}")
            self.cfg.read(path)
        self.section = section

    def get(self, key: str, cast=str, default=None, required=False):
        val = getattr(self.args, key.replace("-", "_"), None)
        if val is None and self.cfg.has_option(self.section, key):
            raw = self.cfg.get(self.section, key)
            if cast is bool:
                val = self.cfg.getboolean(self.section, key)
            else:
                try:
                    val = cast(raw)
                except ValueError as exc:
                    raise ConfigError(f"[{self.section}] {key}: {exc}") from exc
        if val is None:
            val = default
        if val is None and required:
            raise ConfigError(f"missing required setting {key!r} for stage {self.section}")
        return val

    def input_path(self, key: str, required=True) -> Path | None:
        val = self.get(key, str, required=required)
        if val is None:
            return None
        p = Path(val)
        if not p.is_file():
            raise ConfigError(f"{key}: file not found: {p}")
        return p


def _out_dir(stage: _Stage) -> Path:
    out = stage.get("out-dir", str, os.environ.get(OUT_DIR_ENV, "."))
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _trainer_from(stage: _Stage) -> TrainConfig:
    return TrainConfig(
        lr=stage.get("lr", float, 1e-3),
        momentum=stage.get("momentum", float, 0.9),
        weight_decay=stage.get("weight-decay", float, 5e-4),
        epochs=stage.get("epochs", int, 100),
        batch_size=stage.get("batch-size", int, 256),
        seed=stage.get("seed", int, 0),
        likelihood=stage.get("likelihood", str, "softmax"),
    )


def _write_manifest(out_dir: Path, command: str, params: dict, inputs: dict, outputs: list[Path]):
    manifest = {
        "tool": "cbcoreset",
        "version": __version__,
        "command": command,
        "params": params,
        "inputs": {
            name: {"path": str(p), "sha256": file_sha256(p)} for name, p in inputs.items()
        },
        "outputs": {p.name: file_sha256(p) for p in outputs},
    }
    path = out_dir / f"{command}.manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def cmd_bottleneck(args) -> list[Path]:
    stage = _Stage(args, "bottleneck")
    catalog_path = stage.input_path("catalog")
    emb_path = stage.input_path("concept-embeddings")
    names_path = stage.input_path("concept-names")
    k = stage.get("k", int, 5)
    normalize = not stage.get("no-normalize", bool, False)
    out_dir = _out_dir(stage)

    catalog = ConceptCatalog.from_json_file(catalog_path)
    names, matrix = read_named_embeddings(emb_path, names_path)
    embeddings = {name: matrix.data[i] for i, name in enumerate(names)}
    bneck = assemble_bottleneck(select_discriminative(catalog, k), embeddings, normalize=normalize)

    json_out = out_dir / BOTTLENECK_JSON
    ec_out = out_dir / BOTTLENECK_EC
    json_out.write_text(bneck.to_json() + "\n", encoding="utf-8")
    write_embeddings(ec_out, bneck.ec)
    manifest = _write_manifest(
        out_dir,
        "bottleneck",
        {"k": k, "normalize": normalize},
        {"catalog": catalog_path, "concept_embeddings": emb_path, "concept_names": names_path},
        [json_out, ec_out],
    )
    return [json_out, ec_out, manifest]


def cmd_score(args) -> list[Path]:
    stage = _Stage(args, "score")
    visual_path = stage.input_path("visual")
    bneck_path = stage.input_path("bottleneck")
    ec_path = stage.input_path("ec")
    labels_path = stage.input_path("labels", required=False)
    prompts_path = stage.input_path("prompts", required=False)
    if (labels_path is None) == (prompts_path is None):
        raise ConfigError("provide exactly one of --labels (labeled) or --prompts (label-free)")
    mode = stage.get("mode", str)
    if mode == LABELED and labels_path is None:
        raise ConfigError("labeled mode needs --labels")
    if mode == LABEL_FREE and prompts_path is None:
        raise ConfigError("label-free mode needs --prompts and forbids --labels")
    keep_margins = stage.get("margins", bool, False)
    trainer = _trainer_from(stage)
    out_dir = _out_dir(stage)

    bneck = Bottleneck.from_json_file(bneck_path, ec=read_embeddings(ec_path))
    visual = read_embeddings(visual_path)
    labels = read_labels(labels_path) if labels_path else None
    prompts = read_embeddings(prompts_path) if prompts_path else None

    table = score_dataset(
        visual, bneck, trainer, labels=labels, prompt_embeddings=prompts, keep_margins=keep_margins
    )
    scores_out = out_dir / SCORES_JSONL
    outputs = [scores_out]
    if keep_margins:
        margins_out = out_dir / MARGINS_JSONL
        write_scores(scores_out, table, margins_path=margins_out)
        outputs.append(margins_out)
    else:
        write_scores(scores_out, table)

    inputs = {"visual": visual_path, "bottleneck": bneck_path, "ec": ec_path}
    if labels_path:
        inputs["labels"] = labels_path
    if prompts_path:
        inputs["prompts"] = prompts_path
    manifest = _write_manifest(
        out_dir,
        "score",
        {
            "mode": LABELED if labels_path else LABEL_FREE,
            "margins": keep_margins,
            **{k: getattr(trainer, k) for k in (
                "lr", "momentum", "weight_decay", "epochs", "batch_size", "seed", "likelihood"
            )},
        },
        inputs,
        outputs,
    )
    return outputs + [manifest]


def cmd_pseudo_label(args) -> list[Path]:
    stage = _Stage(args, "pseudo-label")
    visual_path = stage.input_path("visual")
    prompts_path = stage.input_path("prompts")
    out_dir = _out_dir(stage)

    labels = zero_shot_pseudo_labels(read_embeddings(visual_path), read_embeddings(prompts_path))
    out = out_dir / PSEUDO_CBL
    write_labels(out, labels)
    manifest = _write_manifest(
        out_dir, "pseudo-label", {}, {"visual": visual_path, "prompts": prompts_path}, [out]
    )
    return [out, manifest]


def cmd_select(args) -> list[Path]:
    stage = _Stage(args, "select")
    scores_path = stage.input_path("scores")
    visual_path = stage.input_path("visual", required=False)
    alpha = stage.get("alpha", float, required=True)
    mode = stage.get("mode", str, LABELED)
    if mode not in (LABELED, LABEL_FREE):
        raise ConfigError(f"mode must be {LABELED!r} or {LABEL_FREE!r}, got {mode!r}")
    beta = stage.get("beta", float)
    tag = stage.get("dataset-tag", str)
    if beta is None:
        if tag is None:
            raise ConfigError("provide --beta or a --dataset-tag to resolve it from")
        beta = lookup_cutoff(tag, alpha, mode)
    spec = SelectionSpec(
        alpha=alpha,
        beta=beta,
        bins=stage.get("bins", int, 50),
        seed=stage.get("seed", int, 0),
        topup=not stage.get("no-topup", bool, False),
    )
    out_dir = _out_dir(stage)

    table = read_scores(scores_path)
    meta = {
        "score_file_sha256": file_sha256(scores_path),
        "dataset_sha256": file_sha256(visual_path) if visual_path else None,
        "mode": mode,
    }
    coreset = ccs_select(table, spec, meta=meta)
    out = out_dir / CORESET_TXT
    write_coreset(out, coreset)
    inputs = {"scores": scores_path}
    if visual_path:
        inputs["visual"] = visual_path
    manifest = _write_manifest(
        out_dir, "select", {**spec.to_meta(), "mode": mode, "dataset_tag": tag}, inputs, [out]
    )
    return [out, manifest]


def cmd_pipeline(args) -> list[Path]:
    written = cmd_bottleneck(args)
    stage = _Stage(args, "score")
    out_dir = _out_dir(stage)
    args.bottleneck = str(out_dir / BOTTLENECK_JSON)
    args.ec = str(out_dir / BOTTLENECK_EC)
    written += cmd_score(args)
    args.scores = str(out_dir / SCORES_JSONL)
    written += cmd_select(args)
    return written


def cmd_bench(args) -> list[Path]:
    stage = _Stage(args, "bench")
    spec = SyntheticSpec(
        num_classes=stage.get("num-classes", int, 10),
        per_class=stage.get("per-class", int, 200),
        dim=stage.get("dim", int, 64),
        noise_sigma=stage.get("noise-sigma", float, 0.15),
        mislabel_fraction=stage.get("mislabel-fraction", float, 0.1),
        concepts_per_class=stage.get("k", int, 5),
    )
    seeds = tuple(int(s) for s in str(stage.get("seeds", str, "0,1,2")).split(","))
    cfg = BenchmarkConfig(
        spec=spec,
        alpha=stage.get("alpha", float, 0.9),
        beta=stage.get("beta", float, 0.3),
        bins=stage.get("bins", int, 50),
        seeds=seeds,
        scorer=replace(TrainConfig(), epochs=stage.get("epochs", int, 100)),
    )
    out_dir = _out_dir(stage)
    result = run_benchmark(cfg)

    csv_out = out_dir / "results.csv"
    json_out = out_dir / "results.json"
    md_out = out_dir / "summary.md"
    result.to_csv(csv_out)
    result.to_json(json_out)
    md_out.write_text(result.to_markdown(), encoding="utf-8")
    manifest = _write_manifest(
        out_dir,
        "bench",
        {"alpha": cfg.alpha, "beta": cfg.beta, "bins": cfg.bins, "seeds": list(seeds),
         "num_classes": spec.num_classes, "per_class": spec.per_class, "dim": spec.dim,
         "noise_sigma": spec.noise_sigma, "mislabel_fraction": spec.mislabel_fraction},
        {},
        [csv_out, json_out, md_out],
    )
    print(result.to_markdown())
    return [csv_out, json_out, md_out, manifest]


def _add_common(p):
    p.add_argument("--config", help="INI config file; flags override its values")
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or .)")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbcoreset",
        description="Concept-bottleneck difficulty scoring and coverage-centric coreset selection",
    )
    parser.add_argument("--version", action="version", version=f"cbcoreset {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bottleneck", help="select discriminative concepts and build the bottleneck matrix")
    _add_common(p)
    p.add_argument("--catalog", help="JSON catalog {class: [concepts]}")
    p.add_argument("--concept-embeddings", help="CBE1 matrix of concept vectors")
    p.add_argument("--concept-names", help="JSON array naming each row of the matrix")
    p.add_argument("--k", type=int, help="concepts per class (default 5)")
    p.add_argument("--no-normalize", action="store_const", const=True,
                   help="keep raw concept rows instead of unit-normalizing")
    p.set_defaults(func=cmd_bottleneck)

    p = sub.add_parser("score", help="train the bottleneck layer and emit per-sample AUM scores")
    _add_common(p)
    p.add_argument("--visual", help="CBE1 visual embeddings")
    p.add_argument("--bottleneck", help="bottleneck JSON from the bottleneck stage")
    p.add_argument("--ec", help="bottleneck embedding matrix (CBE1)")
    p.add_argument("--labels", help="CBL1 labels (labeled mode)")
    p.add_argument("--prompts", help="CBE1 class-prompt embeddings (label-free mode)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--likelihood", choices=["softmax", "logit"])
    p.add_argument("--mode", choices=[LABELED, LABEL_FREE])
    p.add_argument("--margins", action="store_const", const=True,
                   help="also write the per-epoch margin trajectories")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("pseudo-label", help="zero-shot pseudo-labels from class prompt embeddings")
    _add_common(p)
    p.add_argument("--visual")
    p.add_argument("--prompts")
    p.set_defaults(func=cmd_pseudo_label)

    p = sub.add_parser("select", help="coverage-centric selection from a score table")
    _add_common(p)
    p.add_argument("--scores", help="score table JSONL")
    p.add_argument("--visual", help="optional dataset file to hash into the coreset provenance")
    p.add_argument("--alpha", type=float, help="pruning rate: fraction of samples removed")
    p.add_argument("--beta", type=float, help="cutoff rate: fraction of hardest samples excluded")
    p.add_argument("--dataset-tag", help="resolve beta from the built-in cutoff table")
    p.add_argument("--mode", choices=[LABELED, LABEL_FREE])
    p.add_argument("--bins", type=int)
    p.add_argument("--no-topup", action="store_const", const=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("pipeline", help="bottleneck -> score -> select in one run")
    _add_common(p)
    p.add_argument("--catalog")
    p.add_argument("--concept-embeddings")
    p.add_argument("--concept-names")
    p.add_argument("--k", type=int)
    p.add_argument("--no-normalize", action="store_const", const=True)
    p.add_argument("--visual")
    p.add_argument("--labels")
    p.add_argument("--prompts")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--likelihood", choices=["softmax", "logit"])
    p.add_argument("--margins", action="store_const", const=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--dataset-tag")
    p.add_argument("--mode", choices=[LABELED, LABEL_FREE])
    p.add_argument("--bins", type=int)
    p.add_argument("--no-topup", action="store_const", const=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("bench", help="synthetic CCS-vs-random benchmark")
    _add_common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--bins", type=int)
    p.add_argument("--seeds", help="comma-separated seeds (default 0,1,2)")
    p.add_argument("--num-classes", type=int)
    p.add_argument("--per-class", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--mislabel-fraction", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except CbcError as exc:
        print(json.dumps(exc.to_json(), sort_keys=True), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(json.dumps({"error": "io_error", "message": str(exc)}, sort_keys=True), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
