"""Command-line driver: synth / prune / slice / train / eval / predict / gradcheck.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric failure.
"""
import argparse
import os
import sys

import numpy as np

from . import canonical, gradcheck, imaging, tabular, traineval
from .config import ConfigError, RunConfig, parse_config
from .models import (
    CheckpointError,
    build_hybrid_model,
    build_image_model,
    build_symptoms_model,
    checkpoint_load,
    checkpoint_save,
    predict_proba,
    predicted_stage,
)
from .synthcohort import CohortSpec, CohortSpecError, generate_cohort

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

MODALITY_TO_KIND = {"symptoms": "symptoms", "mri": "image", "hybrid": "hybrid"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class UsageError(Exception):
    pass


def _build_parser():
    parser = _Parser(prog="pdmm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--out", required=True)
    p.add_argument("--patients", type=int, required=True)
    p.add_argument("--distribution", choices=["balanced", "ppmi"], default="balanced")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("prune", help="drop correlated features from a CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)

    p = sub.add_parser("slice", help="export the three central cross-sections as PGM")
    p.add_argument("--volume", required=True)
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("train", help="train one modality on a cohort directory")
    p.add_argument("--modality", choices=sorted(MODALITY_TO_KIND), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("eval", help="evaluate a checkpoint on its test split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline-symptoms", default=None,
                   help="symptoms checkpoint for the error-correction statistic")
    p.add_argument("--baseline-image", default=None,
                   help="image checkpoint for the error-correction statistic")

    p = sub.add_parser("predict", help="print the probability vector for one patient")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--patient", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)

    return parser


def _run_config_from(args) -> RunConfig:
    cfg = parse_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg.validate()


def _split_dataset(dataset, cfg):
    plan = traineval.stratified_split(dataset.ids, dataset.stages, cfg.test_ratio, cfg.seed)
    return plan, dataset.subset(plan.train_ids), dataset.subset(plan.test_ids)


def _load_for_kind(data_dir, kind, image_side):
    return traineval.load_dataset(
        data_dir,
        image_side=image_side,
        need_features=kind in ("symptoms", "hybrid"),
        need_images=kind in ("image", "hybrid"),
    )


def cmd_synth(args):
    spec = CohortSpec(n_patients=args.patients, distribution=args.distribution, seed=args.seed)
    generate_cohort(spec, args.out)
    print(f"wrote cohort of {args.patients} patients to {args.out}")
    return EXIT_OK


def cmd_prune(args):
    table = tabular.load_feature_table(args.features)
    pruned, report = tabular.prune_correlated(table, args.threshold)
    tabular.save_feature_table(pruned, args.out)
    canonical.dump_file(report.to_json_dict(), args.report)
    print(f"kept {len(report.kept)} of {table.n_features} features "
          f"(threshold {report.threshold})")
    return EXIT_OK


def cmd_slice(args):
    volume = imaging.volume_read(args.volume)
    triplet = imaging.center_slices(volume)
    for name, image in zip(("sagittal", "coronal", "transverse"), triplet):
        path = f"{args.out_prefix}_{name}.pgm"
        imaging.export_pgm(image, path)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_train(args):
    cfg = _run_config_from(args)
    kind = MODALITY_TO_KIND[args.modality]
    dataset = _load_for_kind(args.data, kind, cfg.image_side)
    plan, train_ds, test_ds = _split_dataset(dataset, cfg)

    if kind == "symptoms":
        model = build_symptoms_model(
            train_ds.features.shape[1], hidden_width=cfg.hidden_width, deep=True, seed=cfg.seed
        )
    elif kind == "image":
        model = build_image_model(cfg.image_side, backbone_frozen=cfg.backbone_frozen, seed=cfg.seed)
    else:
        model = build_hybrid_model(
            cfg.image_side, train_ds.features.shape[1],
            seed=cfg.seed, backbone_frozen=cfg.backbone_frozen,
        )
    model.config["run"] = {"config": cfg.to_json_dict(), "modality": args.modality}

    log = traineval.train_model(model, train_ds, cfg, cfg.seed, test_data=test_ds)
    checkpoint_save(model, args.out)

    preds, labels = traineval.predict_dataset(model, test_ds)
    report = traineval.metrics_report(traineval.confusion_matrix(preds, labels))
    canonical.dump_file(
        {
            "config": cfg.to_json_dict(),
            "modality": args.modality,
            "split": plan.to_json_dict(),
            "epochs": log.epochs,
            "final_test_report": report.to_json_dict(),
        },
        args.log,
    )
    final_acc = report.accuracy
    print(f"trained {args.modality} model: test accuracy {final_acc:.4f}; "
          f"checkpoint {args.out}, log {args.log}")
    return EXIT_OK


def _eval_checkpoint(ckpt_path, data_dir):
    model = checkpoint_load(ckpt_path)
    run = model.config.get("run") or {}
    cfg = RunConfig.from_dict(run.get("config", {})) if run.get("config") else RunConfig()
    dataset = _load_for_kind(data_dir, model.kind, cfg.image_side)
    plan, _, test_ds = _split_dataset(dataset, cfg)
    preds, labels = traineval.predict_dataset(model, test_ds)
    return model, cfg, plan, test_ds, preds, labels


def cmd_eval(args):
    model, cfg, plan, test_ds, preds, labels = _eval_checkpoint(args.ckpt, args.data)
    report = traineval.metrics_report(traineval.confusion_matrix(preds, labels))
    if args.baseline_symptoms and args.baseline_image:
        if model.kind != "hybrid":
            raise UsageError("error-correction baselines require a hybrid checkpoint")
        _, _, _, _, sym_preds, _ = _eval_checkpoint(args.baseline_symptoms, args.data)
        _, _, _, _, img_preds, _ = _eval_checkpoint(args.baseline_image, args.data)
        report.error_correction = traineval.error_correction_rate(
            preds, sym_preds, img_preds, labels
        )
    canonical.dump_file(
        {
            "config": cfg.to_json_dict(),
            "kind": model.kind,
            "split": plan.to_json_dict(),
            "report": report.to_json_dict(),
        },
        args.out,
    )
    print(report.render_table())
    return EXIT_OK


def cmd_predict(args):
    model = checkpoint_load(args.ckpt)
    run = model.config.get("run") or {}
    cfg = RunConfig.from_dict(run.get("config", {})) if run.get("config") else RunConfig()
    dataset = _load_for_kind(args.data, model.kind, cfg.image_side)
    if args.patient not in dataset.ids:
        raise FileNotFoundError(f"patient {args.patient!r} not in {args.data}")
    i = dataset.ids.index(args.patient)
    probs = predict_proba(
        model,
        features=dataset.features[i] if dataset.features is not None else None,
        image=dataset.images[i] if dataset.images is not None else None,
    )
    scores = "[" + ", ".join(f"{p:.2f}" for p in probs) + "]"
    print(f"patient {args.patient}: predicted {predicted_stage(probs)}  scores {scores}")
    return EXIT_OK


def cmd_gradcheck(args):
    results = gradcheck.run_suite(seed=args.seed)
    width = max(len(name) for name, _ in results)
    failed = False
    for name, err in results:
        status = "ok" if err < gradcheck.TOLERANCE else "FAIL"
        print(f"{name:<{width}}  {err:.3e}  {status}")
        failed = failed or err >= gradcheck.TOLERANCE
    if failed:
        print("gradient check FAILED", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"all {len(results)} configurations below {gradcheck.TOLERANCE:g}")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "prune": cmd_prune,
    "slice": cmd_slice,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
}

_DATA_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    tabular.TabularError,
    imaging.VolumeFormatError,
    CheckpointError,
    ConfigError,
    CohortSpecError,
    traineval.EvalError,
)


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"pdmm: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"pdmm: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"pdmm: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"pdmm: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
