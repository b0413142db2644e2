"""``fauxaudit`` command line: generate, train, audit, evaluate.

Each command reads a JSON config, writes its outputs into ``--out`` and
echoes the fully resolved config there as ``config.json``. Exit codes: 0 on
success, 2 for invalid input, 3 when training or an attack diverges.
"""

import argparse
import math
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from . import benchmark, io, synthgen as sg
from .dataset import split_indices
from .errors import ConfigError, DivergenceError, FauxError, ProvenanceError
from .evaluation import compare_models, feature_mi, ndcg, pr_curve
from .fairtest import TESTS, AuditConfig, audit_arrays, flags_for, transparency
from .linalg import child_seed, make_rng
from .neural import AdversaryConfig, TrainConfig, embed_columns, fit_logistic, init_mlp, train
from .neural.train import train_adversarial

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3
SPLIT = (0.7, 0.15, 0.15)

SCENARIOS = {
    "mixture": benchmark.mixture_scenario,
    "gaussian": benchmark.gaussian_scenario,
    "random": benchmark.random_direction_scenario,
    "linear": benchmark.linear_c_scenario,
}


def _out_dir(args, config):
    out = args.out or config.get("out")
    if not out:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    os.makedirs(out, exist_ok=True)
    return out


def _resolve_path(base, path):
    if path is None:
        return None
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base, path))


def _known(config, allowed, where):
    extra = sorted(set(config) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")


# -- generate ------------------------------------------------------------------------

def _spec_from_config(config, seed):
    if "spec" in config:
        spec = sg.SyntheticSpec.from_dict(config["spec"])
        return replace(spec, seed=seed) if seed is not None else spec
    scen = dict(config.get("scenario", {"name": "mixture"}))
    if isinstance(scen, str):
        scen = {"name": scen}
    name = scen.pop("name", "mixture")
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    bias = scen.pop("bias", config.get("bias", 1.0))
    if seed is not None:
        scen["seed"] = seed
    try:
        return SCENARIOS[name](bias, **scen)
    except TypeError as exc:
        raise ConfigError(f"scenario {name!r}: {exc}") from None


def _write_splits(out, n, seed):
    parts = split_indices(n, SPLIT, make_rng(child_seed(seed, "split")))
    doc = {k: sorted(int(i) for i in p) for k, p in zip(("train", "val", "test"), parts)}
    io.write_json(os.path.join(out, "splits.json"), doc)
    return doc


def cmd_generate(config, args):
    out = _out_dir(args, config)
    seed = args.seed if args.seed is not None else config.get("seed")
    if "ingest" in config:
        ing = dict(config["ingest"])
        csv_path = ing.pop("csv", None)
        if csv_path is None:
            raise ConfigError("ingest: 'csv' path is required")
        seed = 0 if seed is None else int(seed)
        data = io.ingest_csv(_resolve_path(args.config_dir, csv_path), ing)
        io.write_dataset(out, data, seed=seed)
        _write_splits(out, data.n_rows, seed)
        resolved = {"command": "generate", "ingest": dict(config["ingest"]), "seed": seed,
                    "split": list(SPLIT)}
    else:
        spec = _spec_from_config(config, seed)
        if "n" in config:
            spec = replace(spec, n_samples=int(config["n"]))
        data = sg.sample_dataset(spec)
        io.write_dataset(out, data, spec=spec, seed=spec.seed)
        twin = spec.with_bias(0.0, seed=child_seed(spec.seed, "twin"))
        io.write_dataset(os.path.join(out, "twin"), sg.sample_dataset(twin), spec=twin,
                         seed=twin.seed)
        _write_splits(out, data.n_rows, spec.seed)
        resolved = {"command": "generate", "spec": spec.to_dict(), "seed": spec.seed,
                    "split": list(SPLIT)}
    io.write_json(os.path.join(out, "config.json"), resolved)
    return out


# -- train ----------------------------------------------------------------------------

def _load_dataset_dir(path):
    if path is None:
        raise ConfigError("config is missing 'dataset'")
    if not os.path.isdir(path):
        raise ConfigError(f"{path}: dataset directory not found")
    data, spec = io.read_dataset(path)
    splits_path = os.path.join(path, "splits.json")
    splits = io.read_json(splits_path) if os.path.exists(splits_path) else None
    return data, spec, splits


def _fit_rows(splits, n):
    if splits is None:
        return np.arange(n)
    return np.array(sorted(splits["train"] + splits["val"]), dtype=np.int64)


def _aux_columns(aux_cfg, data, spec):
    cols = aux_cfg.get("columns", "c_block" if spec is not None else "all")
    if cols == "all":
        return list(range(data.n_features))
    if cols == "c_block":
        if spec is None or spec.fusion != "concat":
            raise ConfigError("aux columns 'c_block' need a concat synthetic dataset")
        return spec.c_block_columns()
    out = []
    for name in cols:
        if name not in data.column_names:
            raise ConfigError(f"aux column {name!r} is not a feature column")
        out.append(data.column_names.index(name))
    return out


def _select_protected(data, names):
    if names is None:
        return data
    idx = []
    for name in names:
        if name not in data.protected_names:
            raise ConfigError(f"protected column {name!r} not found in dataset "
                              f"(available: {data.protected_names})")
        idx.append(data.protected_names.index(name))
    return replace(data, protected=data.protected[:, idx], protected_names=list(names))


def cmd_train(config, args):
    _known(config, {"dataset", "out", "seed", "target", "aux", "train", "adversary", "fair"},
           "train config")
    out = _out_dir(args, config)
    ds_dir = _resolve_path(args.config_dir, config.get("dataset"))
    data, spec, splits = _load_dataset_dir(ds_dir)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    tcfg = dict(config.get("train", {}))
    tcfg["seed"] = int(seed)
    try:
        train_cfg = TrainConfig(**tcfg)
        adv_cfg = AdversaryConfig(**config.get("adversary", {}))
    except TypeError as exc:
        raise ConfigError(f"train config: {exc}") from None
    target_hidden = tuple(config.get("target", {}).get("hidden", (32, 32)))
    aux_cfg = dict(config.get("aux", {}))
    aux_hidden = tuple(aux_cfg.get("hidden", (16,)))
    data = _select_protected(data, aux_cfg.get("protected"))
    if data.protected.shape[1] == 0:
        raise ConfigError("dataset has no protected columns to train the auxiliary model on")
    rows = data.subset(_fit_rows(splits, data.n_rows))
    d = data.n_features
    metrics = {}

    init = init_mlp(d, target_hidden, 1, seed=child_seed(seed, "target"))
    res = train(init, rows, "y", train_cfg, full_result=True)
    io.write_model(os.path.join(out, "target.json"), res.model)
    metrics["target"] = _train_metrics(res)

    cols = _aux_columns(aux_cfg, data, spec)
    k = data.protected.shape[1]
    view = benchmark.c_block_view(rows, cols)
    aux_res = train(init_mlp(len(cols), aux_hidden, k, seed=child_seed(seed, "aux")), view, "c",
                    train_cfg, full_result=True)
    io.write_model(os.path.join(out, "aux.json"), embed_columns(aux_res.model, cols, d))
    metrics["aux"] = _train_metrics(aux_res)

    fair = args.fair or bool(config.get("fair", False))
    if fair:
        fair_res = train_adversarial(init, rows, replace(train_cfg, adversary=adv_cfg),
                                     full_result=True)
        io.write_model(os.path.join(out, "fair_target.json"), fair_res.model)
        metrics["fair_target"] = _train_metrics(fair_res)

    twin_dir = os.path.join(ds_dir, "twin")
    if spec is not None and os.path.isdir(twin_dir):
        twin, _ = io.read_dataset(twin_dir)
        twin_rows = twin.subset(_fit_rows(splits, twin.n_rows)) if twin.n_rows == data.n_rows else twin
        ref = train(init, twin_rows, "y", train_cfg, full_result=True)
        io.write_model(os.path.join(out, "reference.json"), ref.model)
        metrics["reference"] = _train_metrics(ref)

    io.write_json(os.path.join(out, "metrics.json"), metrics)
    resolved = {
        "command": "train", "dataset": ds_dir, "seed": int(seed),
        "train": asdict(replace(train_cfg, adversary=None)), "adversary": asdict(adv_cfg),
        "target": {"hidden": list(target_hidden)},
        "aux": {"hidden": list(aux_hidden), "columns": [data.column_names[i] for i in cols],
                "protected": list(data.protected_names)},
        "fair": fair,
    }
    io.write_json(os.path.join(out, "config.json"), resolved)
    return out


def _train_metrics(res):
    return {"train_accuracy": res.train_accuracy, "val_accuracy": res.val_accuracy,
            "best_epoch": res.best_epoch, "epochs_run": res.epochs_run}


# -- audit ------------------------------------------------------------------------------

def _parse_tests(text):
    tests = [t.strip() for t in text.split(",") if t.strip()]
    unknown = [t for t in tests if t not in TESTS]
    if unknown:
        raise ConfigError(f"unknown tests {unknown}; choose from {list(TESTS)}")
    return tuple(tests)


def _audit_config(raw, tests):
    raw = dict(raw)
    if tests is not None:
        raw["tests"] = tests
    if raw.get("fta_norm") == "inf":
        raw["fta_norm"] = math.inf
    try:
        return AuditConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"audit config: {exc}") from None


def _score_table(path, rows, scores, flags, ifs=None, unfair=None):
    header = ["row_index"] + list(scores) + [f"flag_{t}" for t in flags]
    columns = [rows] + list(scores.values()) + list(flags.values())
    if ifs is not None:
        header += [io.IFS_COLUMN, io.UNFAIR_COLUMN]
        columns += [ifs, unfair]
    io.write_table(path, header, columns)


def cmd_audit(config, args):
    _known(config, {"dataset", "models", "out", "seed", "split", "audit", "kappa"},
           "audit config")
    out = _out_dir(args, config)
    ds_dir = _resolve_path(args.config_dir, config.get("dataset"))
    model_dir = _resolve_path(args.config_dir, config.get("models"))
    if model_dir is None:
        raise ConfigError("config is missing 'models'")
    data, spec, splits = _load_dataset_dir(ds_dir)
    tests = _parse_tests(args.tests) if args.tests else None
    audit_cfg = _audit_config(config.get("audit", {}), tests)
    split = config.get("split", "test")
    if split == "all" or splits is None:
        rows = np.arange(data.n_rows)
    elif split in splits:
        rows = np.array(splits[split], dtype=np.int64)
    else:
        raise ConfigError(f"unknown split {split!r}")
    kappa = float(config.get("kappa", 3.0))

    target = io.read_model(os.path.join(model_dir, "target.json"))
    aux = io.read_model(os.path.join(model_dir, "aux.json"))
    if target.input_dim != data.n_features or aux.input_dim != data.n_features:
        raise ConfigError(f"model input width {target.input_dim} does not match the "
                          f"{data.n_features} dataset features")
    if "lic_ub" in audit_cfg.tests and tests and (spec is None or data.provenance is None):
        raise ProvenanceError("lic_ub needs a synthetic dataset with provenance")
    held = data.subset(rows)
    fit_rows = data.subset(_fit_rows(splits, data.n_rows))
    w_lin = None
    if {"fta_weighted", "unfair_map"} & set(audit_cfg.tests):
        w_lin = fit_logistic(fit_rows.features, fit_rows.protected[:, 0], l2=audit_cfg.logistic_l2)
    bounds = (fit_rows.features.min(axis=0), fit_rows.features.max(axis=0)) if fit_rows.n_rows else None
    if audit_cfg.ig_baseline is None and "faux_ig" in audit_cfg.tests and fit_rows.n_rows:
        audit_cfg = replace(audit_cfg, ig_baseline=fit_rows.features.mean(axis=0))

    sigma0 = None
    if spec is not None and data.provenance is not None:
        ref_path = os.path.join(model_dir, "reference.json")
        twin_dir = os.path.join(ds_dir, "twin")
        if os.path.exists(ref_path) and os.path.isdir(twin_dir):
            twin, twin_spec = io.read_dataset(twin_dir)
            twin_held = twin.subset(rows) if twin.n_rows == data.n_rows else twin
            if twin_held.n_rows:
                sigma0 = float(np.std(sg.dataset_ifs(io.read_model(ref_path), twin_spec, twin_held)))

    summary = {"rows": int(held.n_rows), "split": split, "kappa": kappa, "sigma0": sigma0}
    models = {"": target}
    fair_path = os.path.join(model_dir, "fair_target.json")
    if args.fair:
        if not os.path.exists(fair_path):
            raise ConfigError(f"{fair_path}: --fair needs a fair target (train with --fair)")
        models["_fair"] = io.read_model(fair_path)
    for suffix, model in models.items():
        scores, notes = audit_arrays(held, model, aux, audit_cfg, spec=spec, w_lin=w_lin,
                                     bounds=bounds)
        flags = flags_for(scores, audit_cfg)
        ifs = unfair = None
        if sigma0 is not None:
            ifs = sg.dataset_ifs(model, spec, held)
            unfair = sg.fairness_labels(ifs, sigma0, kappa)
        _score_table(os.path.join(out, f"scores{suffix}.csv"), rows, scores, flags, ifs, unfair)
        summary["target" + suffix] = {
            t: {"mean": float(np.mean(s)) if s.size else None,
                "median": float(np.median(s)) if s.size else None,
                "flagged": int(flags[t].sum())}
            for t, s in scores.items()
        }
        summary["target" + suffix]["degenerate_aux_rows"] = int(sum(1 for n in notes if n))
        if unfair is not None:
            summary["target" + suffix]["unfair_rows"] = int(unfair.sum())
    if held.n_rows and np.any(held.protected[:, 0] == 0):
        report = transparency(aux, held, space=audit_cfg.gradient_space)
        io.write_json(os.path.join(out, "transparency.json"), report.to_dict())
    io.write_json(os.path.join(out, "summary.json"), summary)
    resolved = {"command": "audit", "dataset": ds_dir, "models": model_dir, "split": split,
                "kappa": kappa, "fair": bool(args.fair), "audit": audit_cfg.to_dict()}
    io.write_json(os.path.join(out, "config.json"), resolved)
    return out


# -- evaluate ----------------------------------------------------------------------------

def _read_scores(path):
    header, body = io.read_table(path)
    cols = {}
    for name in header:
        cols[name] = io._float_column(path, header, body, name)
    return cols


def _score_names(cols):
    return [c for c in cols if c in TESTS]


def render_pr_svg(curve, title):
    """PR curve as a polyline in a 640x480 SVG with 0-1 axes."""
    left, right, top, bottom = 70, 610, 40, 420

    def px(r):
        return left + r * (right - left)

    def py(p):
        return bottom - p * (bottom - top)

    pts = [(0.0, float(curve.precision[0]))] + list(zip(curve.recall.tolist(),
                                                         curve.precision.tolist()))
    poly = " ".join(f"{px(r):.2f},{py(p):.2f}" for r, p in pts)
    parts = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="640" height="480" viewBox="0 0 640 480">',
        '<rect x="0" y="0" width="640" height="480" fill="white"/>',
        f'<text x="320" y="24" text-anchor="middle" font-size="16">{title} '
        f'(AP {curve.average_precision:.3f})</text>',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}" stroke="black"/>',
    ]
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(f'<line x1="{px(v):.2f}" y1="{bottom}" x2="{px(v):.2f}" y2="{bottom + 6}" stroke="black"/>')
        parts.append(f'<text x="{px(v):.2f}" y="{bottom + 22}" text-anchor="middle" font-size="12">{v:g}</text>')
        parts.append(f'<line x1="{left - 6}" y1="{py(v):.2f}" x2="{left}" y2="{py(v):.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 10}" y="{py(v) + 4:.2f}" text-anchor="end" font-size="12">{v:g}</text>')
    parts.append(f'<text x="{(left + right) / 2}" y="468" text-anchor="middle" font-size="13">recall</text>')
    parts.append(f'<text x="18" y="{(top + bottom) / 2}" text-anchor="middle" font-size="13" '
                 f'transform="rotate(-90 18 {(top + bottom) / 2})">precision</text>')
    parts.append(f'<polyline points="{poly}" fill="none" stroke="#1f5fa8" stroke-width="2"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_evaluate(config, args):
    _known(config, {"audit", "scores", "fair_scores", "transparency", "dataset", "out", "seed",
                    "mi_k", "split"}, "evaluate config")
    out = _out_dir(args, config)
    base = args.config_dir
    audit_dir = _resolve_path(base, config.get("audit"))
    scores_path = _resolve_path(base, config.get("scores"))
    fair_path = _resolve_path(base, config.get("fair_scores"))
    trans_path = _resolve_path(base, config.get("transparency"))
    if audit_dir is not None:
        scores_path = scores_path or os.path.join(audit_dir, "scores.csv")
        candidate = os.path.join(audit_dir, "scores_fair.csv")
        if fair_path is None and os.path.exists(candidate):
            fair_path = candidate
        candidate = os.path.join(audit_dir, "transparency.json")
        if trans_path is None and os.path.exists(candidate):
            trans_path = candidate
    if scores_path is None:
        raise ConfigError("evaluate needs 'audit' or 'scores'")
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    cols = _read_scores(scores_path)
    tests = _score_names(cols)
    metrics = {"scores": scores_path}
    if fair_path is None and io.UNFAIR_COLUMN not in cols:
        raise ConfigError(f"{scores_path}: missing ground-truth column {io.UNFAIR_COLUMN!r} "
                          "(or give 'fair_scores' for a model comparison)")
    if io.UNFAIR_COLUMN in cols:
        labels = cols[io.UNFAIR_COLUMN].astype(np.int64)
        metrics["prevalence"] = float(labels.mean()) if labels.size else None
        metrics["average_precision"] = {}
        if labels.sum() == 0:
            metrics["note"] = "no unfair rows; average precision is undefined"
        else:
            for t in tests:
                curve = pr_curve(cols[t], labels)
                metrics["average_precision"][t] = curve.average_precision
                io.write_table(os.path.join(out, f"pr_{t}.csv"), ["recall", "precision"],
                               [curve.recall, curve.precision])
                if args.svg:
                    io.atomic_write(os.path.join(out, f"pr_{t}.svg"), render_pr_svg(curve, t))
    if fair_path is not None:
        fair_cols = _read_scores(fair_path)
        metrics["compare"] = {t: compare_models(fair_cols[t], cols[t])
                              for t in tests if t in fair_cols and cols[t].size and fair_cols[t].size}
    if trans_path is not None:
        ds_dir = _resolve_path(base, config.get("dataset"))
        if ds_dir is None and audit_dir is not None:
            ds_dir = io.read_json(os.path.join(audit_dir, "config.json")).get("dataset")
        if ds_dir is not None:
            data, _, _ = _load_dataset_dir(ds_dir)
            held = data.subset(cols["row_index"].astype(np.int64))
            report_doc = io.read_json(trans_path)
            scores = np.array([g["score"] for g in report_doc["groups"]])
            relevance = feature_mi(held, k=int(config.get("mi_k", 3)), seed=seed)
            metrics["transparency_ndcg"] = ndcg(scores, relevance)
    io.write_json(os.path.join(out, "metrics.json"), metrics)
    resolved = {"command": "evaluate", "scores": scores_path, "fair_scores": fair_path,
                "transparency": trans_path, "seed": seed, "svg": bool(args.svg),
                "mi_k": int(config.get("mi_k", 3))}
    io.write_json(os.path.join(out, "config.json"), resolved)
    return out


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "audit": cmd_audit,
            "evaluate": cmd_evaluate}


def build_parser():
    parser = argparse.ArgumentParser(prog="fauxaudit",
                                     description="Gradient-based individual fairness audits.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--out", help="output directory (overrides 'out' in the config)")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--tests", help="comma-separated tests to run (audit)")
    parser.add_argument("--fair", action="store_true",
                        help="also train / audit an adversarially debiased target")
    parser.add_argument("--svg", action="store_true", help="render PR curves as SVG (evaluate)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("fauxaudit: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    try:
        config = io.read_json(args.config)
        if not isinstance(config, dict):
            raise ConfigError(f"{args.config}: top level must be a JSON object")
        args.config_dir = os.path.dirname(os.path.abspath(args.config))
        COMMANDS[args.command](config, args)
    except DivergenceError as exc:
        epoch = "" if exc.epoch is None else f" (epoch {exc.epoch})"
        print(f"fauxaudit: diverged{epoch}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FauxError, ValueError, KeyError, OSError) as exc:
        print(f"fauxaudit: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
