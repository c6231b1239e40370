"""Command-line entry point.

Subcommands: train, attribute, evaluate, ablate, render. Options mirror the
config-file keys (e.g. --method.N overrides method.N); exit codes are
0 success, 1 usage/config error, 2 data/format error, 3 numeric failure.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import attribution as attr
from . import baselines, datasets, metrics, models
from .config import KEYS, ExperimentConfig, parse_config_file
from .errors import ConfigError, DomainError, FormatError, LocalAttrError
from .heatmap import render_heatmap


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_config_flags(parser):
    parser.add_argument("--config", help="key=value config file")
    for key in KEYS:
        parser.add_argument(f"--{key}", dest=f"cfg::{key}", metavar="V")


def _load_config(args):
    cfg = ExperimentConfig()
    if args.config:
        parse_config_file(args.config, cfg)
    for name, value in vars(args).items():
        if name.startswith("cfg::") and value is not None:
            cfg.apply(name[5:], value)
    return cfg


# ---------------------------------------------------------------------------
# model spec strings, e.g. "conv:8x3x3:same,relu,pool2,flatten,dense:10"


def parse_model_spec(spec, input_shape):
    if not spec:
        raise ConfigError("model.spec is empty")
    shape = tuple(input_shape)
    layers = []
    for part in spec.split(","):
        part = part.strip()
        fields = part.split(":")
        kind = fields[0]
        try:
            if kind == "dense":
                if len(shape) != 1:
                    raise ConfigError(f"dense after non-flat shape {shape}; add flatten")
                layers.append(models.Dense(shape[0], int(fields[1])))
            elif kind == "conv":
                oc, kh, kw = (int(v) for v in fields[1].split("x"))
                padding = fields[2] if len(fields) > 2 else "same"
                layers.append(models.Conv2d(shape[0], oc, kh, kw, padding))
            elif kind == "relu":
                layers.append(models.ReLU())
            elif kind == "pool2":
                layers.append(models.MaxPool2())
            elif kind == "flatten":
                layers.append(models.Flatten())
            else:
                raise ConfigError(f"unknown layer kind {kind!r} in model.spec")
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"bad layer spec {part!r}") from exc
        shape = models._out_shape(layers[-1], shape)
    return layers


# ---------------------------------------------------------------------------
# shared plumbing


def _load_dataset(cfg):
    if not cfg.data_path:
        raise ConfigError("data.path is required")
    return datasets.load_dataset(cfg.data_path, cfg.data_format)


def _load_model(cfg):
    if not cfg.model_path:
        raise ConfigError("model.path is required")
    if not os.path.exists(cfg.model_path):
        raise FormatError(f"{cfg.model_path}: no such weight file")
    return models.load_weights(cfg.model_path)


def _sample_seed(master, index):
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])


def _metric_baseline(cfg, x):
    if cfg.metric_baseline == "zero":
        return np.zeros_like(x)
    if cfg.metric_baseline == "mean":
        return np.full_like(x, x.mean())
    raise ConfigError(f"unknown metric.baseline {cfg.metric_baseline!r}")


def _k_targets(cfg, model):
    return min(model.n_classes - 1, 20) if cfg.k_targets < 0 else cfg.k_targets


def compute_attribution(model, x, cfg, sample_index):
    """One sample's attribution map per the configured method.

    The explained label is the model's own prediction at x. Returns
    (AttributionMap, gradient_evaluations).
    """
    y = int(model.predict(x)[0])
    seed = _sample_seed(cfg.seed, sample_index)
    if cfg.method == "la":
        space = attr.make_local_space(x, cfg.s_range, cfg.mode, cfg.eps_min)
        amap, trace = attr.local_attribution(
            model, x, y, n_iter=cfg.n_iter, space=space,
            k_targets=_k_targets(cfg, model), attack=cfg.attack)
        return amap, trace.gradient_evaluations
    if cfg.method == "sm":
        return baselines.saliency(model, x, y, signed=cfg.signed), 1
    if cfg.method == "ig":
        return baselines.integrated_gradients(model, x, y, steps=cfg.ig_steps), cfg.ig_steps
    if cfg.method == "sg":
        n = 1 if cfg.sg_sigma == 0.0 else cfg.sg_n
        return baselines.smoothgrad(model, x, y, sigma=cfg.sg_sigma,
                                    n_samples=cfg.sg_n, seed=seed), n
    if cfg.method == "random":
        return baselines.random_attribution(np.asarray(x).shape, seed=seed), 0
    raise ConfigError(f"unknown method {cfg.method!r}")


def _select_samples(cfg, dataset):
    if len(dataset) == 0 or cfg.samples < 1:
        raise ConfigError("no samples to process")
    n = min(cfg.samples, len(dataset))
    return dataset.inputs[:n], dataset.labels[:n]


def evaluate_samples(model, inputs, labels, cfg, out_dir=None):
    """Insertion/deletion AUCs for each sample; optionally writes curve CSVs."""
    records = []
    for i, (x, label) in enumerate(zip(inputs, labels)):
        amap, evals = compute_attribution(model, x, cfg, i)
        if not np.all(np.isfinite(amap.values)):
            raise DomainError(f"non-finite attribution for sample {i}")
        ranking = metrics.rank_dimensions(amap.values)
        baseline = _metric_baseline(cfg, x)
        ins = metrics.insertion_curve(model, x, ranking, baseline, cfg.n_points)
        dele = metrics.deletion_curve(model, x, ranking, baseline, cfg.n_points)
        if not (np.isfinite(ins.auc) and np.isfinite(dele.auc)):
            raise DomainError(f"non-finite AUC for sample {i}")
        if out_dir is not None:
            metrics.save_curve_csv(ins, os.path.join(out_dir, f"sample_{i:04d}_insertion.csv"))
            metrics.save_curve_csv(dele, os.path.join(out_dir, f"sample_{i:04d}_deletion.csv"))
        records.append({
            "index": i,
            "label": int(label),
            "predicted": int(model.predict(x)[0]),
            "insertion_auc": ins.auc,
            "deletion_auc": dele.auc,
            "gradient_evaluations": int(evals),
        })
    return records


def _report(cfg, records, wall_clock):
    return {
        "config": cfg.as_dict(),
        "samples": records,
        "mean_insertion_auc": float(np.mean([r["insertion_auc"] for r in records])),
        "mean_deletion_auc": float(np.mean([r["deletion_auc"] for r in records])),
        "gradient_evaluations_total": int(sum(r["gradient_evaluations"] for r in records)),
        "wall_clock_seconds": wall_clock,
    }


def _write_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(cfg):
    data = _load_dataset(cfg)
    layers = parse_model_spec(cfg.model_spec, data.input_shape)
    model = models.build_model(data.input_shape, layers, seed=cfg.train_seed)
    result = models.train_sgd(model, data, models.TrainConfig(
        cfg.lr, cfg.epochs, cfg.batch_size, cfg.train_seed))
    if not cfg.model_path:
        raise ConfigError("model.path is required to save weights")
    os.makedirs(os.path.dirname(cfg.model_path) or ".", exist_ok=True)
    models.save_weights(result.model, cfg.model_path)
    print(f"saved {cfg.model_path}  train_accuracy={result.train_accuracy:.4f}")
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_json(os.path.join(cfg.output_dir, "train_report.json"),
                {"config": cfg.as_dict(), "train_accuracy": result.train_accuracy})
    return 0


def cmd_attribute(cfg):
    model = _load_model(cfg)
    data = _load_dataset(cfg)
    inputs, _ = _select_samples(cfg, data)
    os.makedirs(cfg.output_dir, exist_ok=True)
    for i, x in enumerate(inputs):
        amap, _ = compute_attribution(model, x, cfg, i)
        stem = os.path.join(cfg.output_dir, f"attribution_{i:04d}")
        attr.save_attribution(amap, stem + ".bin")
        attr.save_attribution_csv(amap, stem + ".csv")
        if cfg.heatmaps and len(data.input_shape) == 3:
            render_heatmap(amap.values, data.input_shape[1:], stem + ".ppm")
    print(f"wrote {len(inputs)} attribution maps to {cfg.output_dir}")
    return 0


def cmd_evaluate(cfg):
    model = _load_model(cfg)
    data = _load_dataset(cfg)
    inputs, labels = _select_samples(cfg, data)
    os.makedirs(cfg.output_dir, exist_ok=True)
    curves_dir = os.path.join(cfg.output_dir, "curves")
    os.makedirs(curves_dir, exist_ok=True)
    started = time.time()
    records = evaluate_samples(model, inputs, labels, cfg, out_dir=curves_dir)
    report = _report(cfg, records, time.time() - started)
    _write_json(os.path.join(cfg.output_dir, "report.json"), report)
    with open(os.path.join(cfg.output_dir, "report.csv"), "w") as f:
        f.write("index,label,predicted,insertion_auc,deletion_auc,gradient_evaluations\n")
        for r in records:
            f.write(f"{r['index']},{r['label']},{r['predicted']},"
                    f"{r['insertion_auc']!r},{r['deletion_auc']!r},"
                    f"{r['gradient_evaluations']}\n")
    print(f"mean_insertion_auc={report['mean_insertion_auc']:.5f} "
          f"mean_deletion_auc={report['mean_deletion_auc']:.5f}")
    return 0


_SWEEPABLE = {
    "mode": "method.mode",
    "attack_type": "method.attack",
    "N": "method.N",
    "s_range": "method.s_range",
    "k_targets": "method.k_targets",
}


def cmd_ablate(cfg, sweep, values):
    if sweep not in _SWEEPABLE:
        raise ConfigError(f"sweep must be one of {sorted(_SWEEPABLE)}")
    model = _load_model(cfg)
    data = _load_dataset(cfg)
    inputs, labels = _select_samples(cfg, data)
    os.makedirs(cfg.output_dir, exist_ok=True)
    rows = []
    for value in values:
        run_cfg = ExperimentConfig(**vars(cfg))
        run_cfg.apply(_SWEEPABLE[sweep], value)
        records = evaluate_samples(model, inputs, labels, run_cfg)
        rows.append((value,
                     float(np.mean([r["insertion_auc"] for r in records])),
                     float(np.mean([r["deletion_auc"] for r in records])),
                     int(sum(r["gradient_evaluations"] for r in records))))
    out_path = os.path.join(cfg.output_dir, f"ablate_{sweep}.csv")
    with open(out_path, "w") as f:
        f.write(f"{sweep},mean_insertion_auc,mean_deletion_auc,gradient_evaluations\n")
        for value, ins, dele, evals in rows:
            f.write(f"{value},{ins!r},{dele!r},{evals}\n")
    print(f"wrote {out_path}")
    return 0


def cmd_render(args):
    values = attr.load_attribution(args.attribution)
    try:
        h, w = (int(v) for v in args.shape.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"bad --shape {args.shape!r}, expected HxW") from exc
    render_heatmap(values, (h, w), args.out, colormap=args.colormap)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------


def _build_parser():
    parser = _Parser(prog="localattr",
                     description="local-space gradient attribution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "attribute", "evaluate"):
        p = sub.add_parser(name)
        _add_config_flags(p)
    p = sub.add_parser("ablate")
    _add_config_flags(p)
    p.add_argument("--sweep", required=True, help=f"one of {sorted(_SWEEPABLE)}")
    p.add_argument("--values", required=True, help="comma-separated sweep values")
    p = sub.add_parser("render")
    p.add_argument("--attribution", required=True, help="attribution .bin file")
    p.add_argument("--shape", required=True, help="image shape HxW")
    p.add_argument("--out", required=True, help="output image (.ppm or .png)")
    p.add_argument("--colormap", default="gray", choices=("gray", "diverging"))
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "render":
            return cmd_render(args)
        cfg = _load_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "attribute":
            return cmd_attribute(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "ablate":
            return cmd_ablate(cfg, args.sweep, args.values.split(","))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except LocalAttrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
