"""``ammrg`` command-line tool.

Every subcommand prints line-delimited JSON records on stdout. Exit status
is 0 on success, 2 on usage errors (bad flags, bad config keys) and 1 when
the work itself fails.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import classifier as clf_mod
from .encoders import SentenceEncoder
from .errors import AmmrgError, ConfigError
from .hopfield import PatternMatrix, retrieve
from .memory_bank import build_report_memory, load_bank, save_bank
from .metrics import ce_scores, nlg_scores
from .pipeline import (ABLATIONS, PipelineConfig, build_banks, make_encoder, read_config_file, report_candidates,
                       run_pipeline, run_stage1, sweep)
from .roi import apply_mask, patch_means, read_raster, select_roi, write_raster
from .synthetic import generate_corpus, load_corpus, read_labels, read_lines, save_corpus


class UsageError(Exception):
    pass


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def emit(record, out=None):
    out = out or sys.stdout
    out.write(json.dumps(record, default=_json_default, sort_keys=True) + "\n")


def parse_floats(text, name):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{name} must be a comma-separated list of numbers") from None


# flag name -> config field; flags left unset do not override the config file
_OVERRIDES = {
    "beta": "beta",
    "mode": "mode",
    "tau": "tau",
    "top_k": "top_k",
    "cap": "cap_per_disease",
    "report_size": "report_memory_size",
    "n_cases": "n_cases",
    "d_out": "d_out",
}


def load_config(args):
    values = read_config_file(args.config) if args.config else {}
    for flag, key in _OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    if args.seed is not None:
        values["seed"] = args.seed
    return PipelineConfig(**values)


def corpus_for(args, config):
    directory = getattr(args, "corpus", None) or config.corpus_dir
    if directory:
        return load_corpus(directory)
    return generate_corpus(config.n_cases, config.seed, config.image_size, config.patch_size, config.channels)


def classifier_for(args, config, corpus):
    path = getattr(args, "classifier", None) or config.classifier_path
    if path:
        return clf_mod.load_classifier(path)
    return run_stage1(corpus, config).classifier


# ----------------------------------------------------------------- commands


def cmd_gen_corpus(args, config):
    cases = generate_corpus(config.n_cases, config.seed, config.image_size, config.patch_size, config.channels)
    save_corpus(cases, args.out)
    emit({"command": "gen-corpus", "out": str(args.out), "n_cases": len(cases),
          "positives": int(sum(c.labels.sum() for c in cases))})


def cmd_train(args, config):
    corpus = corpus_for(args, config)
    stage1 = run_stage1(corpus, config)
    clf_mod.save_classifier(stage1.classifier, args.out)
    truth = np.stack([c.labels for c in corpus])
    p, r, f1 = ce_scores(stage1.probs > 0.5, truth)
    emit({"command": "train", "out": str(args.out), "epochs": config.train_epochs,
          "initial_loss": float(stage1.loss_trace[0]), "final_loss": float(stage1.loss_trace[-1]),
          "precision": p, "recall": r, "f1": f1})


def _select_cases(corpus, case_id):
    if case_id is None:
        return corpus
    picked = [c for c in corpus if c.id == case_id]
    if not picked:
        raise ValueError(f"no case with id {case_id!r}")
    return picked


def cmd_cam(args, config):
    corpus = corpus_for(args, config)
    clf = classifier_for(args, config, corpus)
    cases = _select_cases(corpus, args.case)
    if args.out and len(cases) != 1:
        raise UsageError("--out needs a single --case")
    encoder = make_encoder(config)
    for case in cases:
        cam = clf_mod.linear_cam(clf, encoder.encode_patches(case.image), args.disease, config.patch_size)
        means = patch_means(cam, config.patch_size)
        if args.out:
            write_raster(args.out, cam)
        emit({"command": "cam", "case": case.id, "disease": args.disease,
              "argmax_patch": int(np.argmax(means)), "max": float(cam.max()),
              "out": str(args.out) if args.out else None})


def cmd_mask(args, config):
    image = read_raster(args.image)
    cam = read_raster(args.cam)
    if cam.ndim == 3:
        if cam.shape[2] != 1:
            raise ValueError("activation raster must have one channel")
        cam = cam[:, :, 0]
    sel = select_roi(patch_means(cam, config.patch_size), config.tau, config.top_k, config.patch_size)
    masked = apply_mask(image, sel)
    write_raster(args.out, masked)
    emit({"command": "mask", "out": str(args.out), "tau": config.tau, "top_k": config.top_k,
          "selected": sel.indices})


def cmd_build_bank(args, config):
    corpus = corpus_for(args, config)
    if args.kind == "visual":
        classifier = None
        path = args.classifier or config.classifier_path
        if path:
            classifier = clf_mod.load_classifier(path)
        stage1 = run_stage1(corpus, config, classifier)
        bank, _ = build_banks(corpus, stage1, config)
        counts = np.bincount(bank.disease_ids, minlength=config.n_diseases)
    else:
        enc = SentenceEncoder(config.feature_dim, config.seed)
        bank = build_report_memory(report_candidates(corpus, enc), config.report_memory_size, config.feature_dim)
        counts = bank.labels.sum(axis=0)
    save_bank(bank, args.out)
    emit({"command": "build-bank", "kind": args.kind, "out": str(args.out), "size": len(bank),
          "dim": bank.dim, "per_disease": counts})


def _queries(args):
    if args.query is not None:
        return [parse_floats(args.query, "--query")]
    rows = [parse_floats(line, "--query-file") for line in read_lines(args.query_file) if line.strip()]
    if not rows:
        raise ValueError(f"{args.query_file} holds no query vectors")
    return rows


def cmd_retrieve(args, config):
    if args.top < 1:
        raise UsageError("--top must be >= 1")
    bank = load_bank(args.bank)
    memory = PatternMatrix(bank.features)
    hcfg = config.hopfield()
    for i, q in enumerate(_queries(args)):
        res = retrieve(np.array(q), memory, hcfg)
        order = np.argsort(-res.weights, kind="stable")[: args.top]
        emit({"command": "retrieve", "query": i, "iterations": res.iterations,
              "final_energy": float(res.energy_trace[-1]), "best": int(order[0]),
              "top": [{"index": int(j), "weight": float(res.weights[j])} for j in order]})


def cmd_pipeline(args, config):
    corpus = corpus_for(args, config)
    stage1 = run_stage1(corpus, config)
    ablations = ABLATIONS if args.ablate == "all" else (args.ablate,)
    for ablate in ablations:
        res = run_pipeline(corpus, config, ablate, stage1=stage1)
        if args.reports_out:
            out = Path(args.reports_out)
            if len(ablations) > 1:
                out = out.with_name(f"{out.stem}.{ablate}{out.suffix}")
            out.write_text("".join(r.text + "\n" for r in res.reports), encoding="utf-8")
        if args.per_case:
            for r in res.reports:
                emit({"command": "pipeline", "ablate": ablate, "case": r.case_id, "report": r.text})
        emit({"command": "pipeline", "ablate": ablate, "n_cases": len(corpus),
              "visual_bank_size": len(res.visual_bank), "report_memory_size": len(res.report_memory),
              **res.metrics})


def cmd_evaluate(args, config):
    cands = read_lines(args.candidates)
    refs = read_lines(args.references)
    record = {"command": "evaluate", "n": len(cands), **nlg_scores(cands, refs)}
    if args.pred_labels or args.true_labels:
        if not (args.pred_labels and args.true_labels):
            raise UsageError("--pred-labels and --true-labels go together")
        p, r, f1 = ce_scores(read_labels(args.pred_labels), read_labels(args.true_labels))
        record.update(ce_precision=p, ce_recall=r, ce_f1=f1)
    emit(record)


def cmd_sweep(args, config):
    values = parse_floats(args.values, "--values")
    if not values:
        raise UsageError("--values is empty")
    if args.param in ("cap", "report-size"):
        if any(v != int(v) or v < 1 for v in values):
            raise UsageError(f"--param {args.param} takes positive integers")
        values = [int(v) for v in values]
    with_pipeline = args.with_pipeline or args.param == "report-size"
    corpus = corpus_for(args, config) if with_pipeline or args.param == "cap" else None
    for row in sweep(corpus, config, args.param, values, with_pipeline=with_pipeline, ablate=args.ablate):
        emit({"command": "sweep", **row})


# ------------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--beta", type=float)
    common.add_argument("--mode", choices=("cccp", "gradient"))
    common.add_argument("--tau", type=float)
    common.add_argument("--top-k", type=int)
    common.add_argument("--cap", type=int, help="visual bank cap per disease")
    common.add_argument("--report-size", type=int, help="report memory size")
    common.add_argument("--n-cases", type=int)
    common.add_argument("--d-out", type=int)

    parser = argparse.ArgumentParser(prog="ammrg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    def corpus_arg(p):
        p.add_argument("--corpus", type=Path, help="corpus directory (default: generate one from the seed)")

    p = add("gen-corpus", cmd_gen_corpus, "write a synthetic corpus directory")
    p.add_argument("--out", type=Path, required=True)

    p = add("train", cmd_train, "train the linear classifier")
    corpus_arg(p)
    p.add_argument("--out", type=Path, required=True)

    p = add("cam", cmd_cam, "class activation maps for one disease")
    corpus_arg(p)
    p.add_argument("--classifier", type=Path)
    p.add_argument("--disease", type=int, required=True, choices=range(14), metavar="{0..13}")
    p.add_argument("--case")
    p.add_argument("--out", type=Path, help="write the map raster (single case only)")

    p = add("mask", cmd_mask, "zero everything outside the RoI of an activation map")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--cam", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = add("build-bank", cmd_build_bank, "build and save a visual bank or report memory")
    corpus_arg(p)
    p.add_argument("--kind", choices=("visual", "report"), required=True)
    p.add_argument("--classifier", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = add("retrieve", cmd_retrieve, "Hopfield retrieval against a saved bank")
    p.add_argument("--bank", type=Path, required=True)
    q = p.add_mutually_exclusive_group(required=True)
    q.add_argument("--query", help="comma-separated vector")
    q.add_argument("--query-file", type=Path, help="one comma-separated vector per line")
    p.add_argument("--top", type=int, default=5)

    p = add("pipeline", cmd_pipeline, "run both stages and score the generated reports")
    corpus_arg(p)
    p.add_argument("--ablate", choices=ABLATIONS + ("all",), default="both",
                   help="memories left on: none, visual, report, both (or all four runs)")
    p.add_argument("--reports-out", type=Path)
    p.add_argument("--per-case", action="store_true")

    p = add("evaluate", cmd_evaluate, "NLG and CE metrics for line-parallel files")
    p.add_argument("--candidates", type=Path, required=True)
    p.add_argument("--references", type=Path, required=True)
    p.add_argument("--pred-labels", type=Path)
    p.add_argument("--true-labels", type=Path)

    p = add("sweep", cmd_sweep, "parameter sweep")
    corpus_arg(p)
    p.add_argument("--param", choices=("beta", "cap", "report-size"), required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--with-pipeline", action="store_true",
                   help="also run the pipeline per value (always on for report-size)")
    p.add_argument("--ablate", choices=ABLATIONS, default="both")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on bad usage
    try:
        config = load_config(args)
        args.func(args, config)
    except (UsageError, ConfigError) as exc:
        print(f"ammrg {args.command}: {exc}", file=sys.stderr)
        return 2
    except (AmmrgError, ValueError, ArithmeticError, OSError, KeyError) as exc:
        print(f"ammrg {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
