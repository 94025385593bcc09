"""Command line entry points.

Subcommands: gen-synthetic, split, pretrain, train, eval, grid, sweep-shift,
report. Config files are JSON with the hyperparameter field names
(learning_rate, batch_size, hidden_units, dropout, recurrent_dropout,
epochs, learning_rate_step23, epochs_step23); --preset picks a named set
instead. SPARSESEQ_WORKERS overrides any --workers value.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import classify, data, experiments, presets
from . import autodiff as ad
from .encoders import EncoderConfig, impute_view
from .pretrain import PretrainConfig, pretrain
from .synthetic import SyntheticParams, build_benchmark, parse_ratio


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    return args.func(args) or 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparseseq")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen-synthetic", help="generate the synthetic benchmark")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--t", type=int, default=100)
    p.add_argument("--missing", type=float, default=0.0)
    p.add_argument("--ratio", default="1:1", help="minority:majority, e.g. 1:20")
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("split", help="stratified 60/20/20 split into a directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("pretrain", help="self-supervised encoder pre-training")
    p.add_argument("--encoder", choices=["gru", "gru-d"], default="gru")
    p.add_argument("--scheme", choices=["flags", "mean", "forward", "simple", "grud"],
                   default=None, help="input view; defaults to flags/grud per encoder")
    p.add_argument("--shift", type=int, default=1)
    p.add_argument("--loss", choices=["masked-mse", "l1"], default="masked-mse")
    p.add_argument("--data", required=True, help="training split (raw JSONL)")
    p.add_argument("--config", default=None, help="hyperparameter JSON")
    p.add_argument("--preset", default="desk")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train a classifier (scratch / frozen / fine-tuned)")
    p.add_argument("--init", default=None, help="pre-trained encoder JSON")
    p.add_argument("--mode", choices=["frozen", "fine-tuned", "scratch"], default="scratch")
    p.add_argument("--encoder", choices=["gru", "gru-d"], default="gru")
    p.add_argument("--scheme", default=None)
    p.add_argument("--imbalance", default="none",
                   help="none | cw | os | us | os-cw:FRACTION")
    p.add_argument("--data-dir", required=True,
                   help="directory holding train.jsonl, val.jsonl, test.jsonl")
    p.add_argument("--config", default=None)
    p.add_argument("--preset", default="desk")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--metrics", default="auroc,auprc,f1")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="run the missingness x imbalance benchmark grid")
    p.add_argument("--spec", default=None, help="GridSpec JSON; defaults are the full grid")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--no-resume", action="store_true")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("sweep-shift", help="sweep the time-shift factor on one cell")
    p.add_argument("--imbalance", default="1:20")
    p.add_argument("--missing", type=float, default=0.3)
    p.add_argument("--encoder", choices=["gru", "gru-d"], default="gru")
    p.add_argument("--shifts", default="0,1,2,5")
    p.add_argument("--modes", default="frozen,fine_tuned")
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--preset", default="desk")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--t", type=int, default=100)
    p.add_argument("--noise-std", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_shift)

    p = sub.add_parser("report", help="summarize a results CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["table", "csv", "plotdata"], default="table")
    p.add_argument("--metric", default="auprc")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


# ---------------------------------------------------------------------------

def cmd_gen_synthetic(args) -> int:
    params = SyntheticParams(
        n_samples=args.n, seq_len=args.t, missing_rate=args.missing,
        imbalance=parse_ratio(args.ratio), noise_std=args.noise_std, seed=args.seed)
    dataset = build_benchmark(params)
    data.save_dataset(dataset, args.out)
    counts = dataset.class_counts()
    print(f"wrote {dataset.n_samples} samples to {args.out} (class counts: {counts.tolist()})")
    return 0


def cmd_split(args) -> int:
    dataset = data.load_dataset(args.data)
    train, val, test = data.split(dataset, seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, part in (("train", train), ("val", val), ("test", test)):
        data.save_dataset(part, os.path.join(args.out_dir, f"{name}.jsonl"))
    print(f"split {dataset.n_samples} samples -> "
          f"{train.n_samples}/{val.n_samples}/{test.n_samples} in {args.out_dir}")
    return 0


def _resolve_hp(args, model_key: str) -> classify.Hyperparams:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            return classify.Hyperparams.from_obj(json.load(fh))
    return presets.get_preset(args.preset, model_key)


def _encoder_setup(encoder: str, scheme: str | None, n_variables: int,
                   hp: classify.Hyperparams) -> EncoderConfig:
    arch = "grud" if encoder == "gru-d" else "gru"
    if scheme is None:
        scheme = "grud" if arch == "grud" else "flags"
    return EncoderConfig(arch=arch, scheme=scheme, n_variables=n_variables,
                         hidden=hp.hidden_units, dropout=hp.dropout,
                         recurrent_dropout=hp.recurrent_dropout)


def cmd_pretrain(args) -> int:
    train = data.load_dataset(args.data)
    stats = data.compute_stats(train)
    train_n = data.normalize(train, stats)
    model_key = f"{args.encoder}-apc"
    hp = _resolve_hp(args, model_key)
    enc_config = _encoder_setup(args.encoder, args.scheme, train.n_variables, hp)
    view = impute_view(train_n, stats, enc_config.scheme)
    cfg = PretrainConfig(shift=args.shift, loss=args.loss.replace("-", "_"),
                         learning_rate=hp.learning_rate, batch_size=hp.batch_size,
                         epochs=hp.epochs)
    params, curve = pretrain(view, enc_config, cfg, args.seed)
    payload = {
        "enc_config": enc_config.to_obj(),
        "stats": stats.to_obj(),
        "pretrain": {"shift": args.shift, "loss": cfg.loss, "seed": args.seed},
        "params": ad.params_to_obj(params),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    curve_path = str(args.out) + ".curve.csv"
    with open(curve_path, "w", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(curve, start=1):
            writer.writerow([epoch, repr(loss)])
    print(f"pre-trained {model_key} for {cfg.epochs} epochs; "
          f"final loss {curve[-1]:.6f}; wrote {args.out} and {curve_path}")
    return 0


def _parse_imbalance(text: str) -> classify.TrainPlan:
    mapping = {"none": "none", "cw": "class_weights", "os": "oversample", "us": "undersample"}
    if text in mapping:
        return classify.TrainPlan(imbalance=mapping[text])
    if text.startswith("os-cw:"):
        return classify.TrainPlan(imbalance="oversample_cw",
                                  oversample_fraction=float(text.split(":", 1)[1]))
    raise SystemExit(f"unknown imbalance method {text!r}")


def cmd_train(args) -> int:
    train = data.load_dataset(os.path.join(args.data_dir, "train.jsonl"))
    val = data.load_dataset(os.path.join(args.data_dir, "val.jsonl"))
    mode = args.mode.replace("-", "_")
    pretrained = None
    if mode != "scratch":
        if not args.init:
            raise SystemExit(f"mode {args.mode} needs --init with pre-trained weights")
        with open(args.init, encoding="utf-8") as fh:
            payload = json.load(fh)
        pretrained = ad.params_from_obj(payload["params"])
        enc_config = EncoderConfig.from_obj(payload["enc_config"])
        stats = data.NormStats.from_obj(payload["stats"])
        model_key = f"{'gru-d' if enc_config.arch == 'grud' else 'gru'}-apc"
        hp = _resolve_hp(args, model_key)
        if hp.hidden_units != enc_config.hidden:
            hp = classify.Hyperparams.from_obj({**hp.to_obj(), "hidden_units": enc_config.hidden})
    else:
        stats = data.compute_stats(train)
        hp = _resolve_hp(args, "gru-d" if args.encoder == "gru-d" else "gru")
        enc_config = _encoder_setup(args.encoder, args.scheme, train.n_variables, hp)
    plan = _parse_imbalance(args.imbalance)
    plan = classify.TrainPlan(mode=mode, imbalance=plan.imbalance,
                              oversample_fraction=plan.oversample_fraction)
    train_n = data.normalize(train, stats)
    val_n = data.normalize(val, stats)
    model = classify.train_classifier(pretrained, plan, train_n, val_n, stats,
                                      enc_config, hp, args.seed)
    payload = {
        "enc_config": enc_config.to_obj(),
        "stats": stats.to_obj(),
        "n_classes": model.n_classes,
        "selection": model.selection,
        "params": ad.params_to_obj(model.params),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    epochs_path = str(args.out) + ".epochs.csv"
    with open(epochs_path, "w", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", model.selection["metric"]])
        for epoch, value in enumerate(model.selection["history"], start=1):
            writer.writerow([epoch, repr(value)])
    selection_path = str(args.out) + ".selection.json"
    with open(selection_path, "w", encoding="utf-8") as fh:
        json.dump(model.selection, fh)
    print(f"trained ({mode}); best {model.selection['metric']} "
          f"{model.selection['best_value']:.4f} at epoch {model.selection['best_epoch']}; "
          f"wrote {args.out}")
    return 0


def load_model(path) -> classify.TrainedModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return classify.TrainedModel(
        params=ad.params_from_obj(payload["params"]),
        enc_config=EncoderConfig.from_obj(payload["enc_config"]),
        stats=data.NormStats.from_obj(payload["stats"]),
        n_classes=int(payload["n_classes"]),
        selection=payload.get("selection", {}),
    )


def cmd_eval(args) -> int:
    model = load_model(args.model)
    dataset = data.load_dataset(args.data)
    dataset = data.normalize(dataset, model.stats)
    wanted = tuple(m.strip() for m in args.metrics.split(","))
    scores = classify.evaluate_model(model, dataset, wanted)
    text = json.dumps(scores, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_grid(args) -> int:
    spec = experiments.GridSpec()
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            spec = experiments.GridSpec.from_obj(json.load(fh))
    table = experiments.run_grid(spec, workers=args.workers, out_path=args.out,
                                 resume=not args.no_resume,
                                 log=lambda msg: print(msg, flush=True))
    errors = [r for r in table.rows if r.get("error")]
    print(f"grid complete: {len(table.rows) - len(errors)} rows, {len(errors)} failures -> {args.out}")
    return 1 if errors else 0


def cmd_sweep_shift(args) -> int:
    shifts = [int(s) for s in args.shifts.split(",") if s != ""]
    modes = [m.strip().replace("-", "_") for m in args.modes.split(",")]
    table = experiments.sweep_shift(
        imbalance=args.imbalance, missing=args.missing, encoder=args.encoder,
        shifts=shifts, modes=modes, runs=args.runs, master_seed=args.seed,
        preset=args.preset, workers=args.workers, out_path=args.out,
        n_samples=args.n, seq_len=args.t, noise_std=args.noise_std,
        log=lambda msg: print(msg, flush=True))
    errors = [r for r in table.rows if r.get("error")]
    print(f"sweep complete: {len(table.rows) - len(errors)} rows, {len(errors)} failures -> {args.out}")
    return 1 if errors else 0


def cmd_report(args) -> int:
    table = experiments.ResultsTable.load(args.input)
    text = experiments.report(table, fmt=args.format, metric=args.metric)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
