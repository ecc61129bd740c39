"""Command-line driver: simulate, train, search, recommend, km.

Every command writes plain JSON/CSV (and optionally SVG) artifacts that embed
a provenance block (config hash plus seeds) and contain no timestamps, so
rerunning a command with identical inputs reproduces byte-identical files.

Exit codes: 0 success, 1 runtime failure (e.g. training divergence),
2 usage or config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from coxkit import coxlinear, metrics, optim, recommend, riskmlp
from coxkit.data import (
    CsvParseError,
    SchemaError,
    StandardizationParams,
    append_treatment_feature,
    load_csv,
    split_indices,
    standardize_apply,
    standardize_fit,
    write_csv,
)
from coxkit.plots import render_km_svg
from coxkit.simulate import SimulationSpec, generate

SCHEMA_VERSION = 1


class UsageError(ValueError):
    """Bad flags, config files, or input data; maps to exit code 2."""


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(payload) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:16]


def write_json(path, payload) -> None:
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _provenance(command: str, effective_config: dict, seeds: dict) -> dict:
    return {
        "command": command,
        "schema_version": SCHEMA_VERSION,
        "config_hash": config_hash(effective_config),
        "seeds": seeds,
    }


def _merge(defaults: dict, override: dict, path: str = "") -> dict:
    out = dict(defaults)
    for key, value in override.items():
        if key not in defaults:
            raise UsageError(f"unknown config key {path + key!r}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge(defaults[key], value, path + key + ".")
        else:
            out[key] = value
    return out


# ---------------------------------------------------------------- simulate


def _spec_from_args(args) -> SimulationSpec:
    try:
        return SimulationSpec(
            n=args.n,
            d=args.d,
            risk_kind=args.risk,
            lambda_max=args.lambda_max,
            r=args.r,
            mean_u=args.mean_u,
            observed_fraction=args.observed_fraction,
            with_treatment=args.with_treatment,
            seed=0 if args.seed is None else args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim = generate(spec)
    spec_dict = asdict(spec)
    prov = _provenance("simulate", spec_dict, {"simulation": spec.seed})

    write_csv(sim.dataset, out_dir / "dataset.csv", comment=canonical_json(prov))
    with open(out_dir / "true_risks.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {canonical_json(prov)}\n")
        writer = csv.writer(fh)
        writer.writerow(["true_risk"])
        for value in sim.true_risks:
            writer.writerow([repr(float(value))])
    write_json(
        out_dir / "provenance.json",
        {
            "provenance": prov,
            "spec": spec_dict,
            "censor_time": sim.censor_time,
            "n_events": sim.dataset.n_events,
            "event_fraction": sim.dataset.n_events / sim.dataset.n,
        },
    )
    print(
        f"simulate: wrote {sim.dataset.n} patients "
        f"({sim.dataset.n_events} events) to {out_dir}"
    )
    return 0


# ------------------------------------------------------------------- train


DATASET_DEFAULTS = {
    "csv": None,
    "time_col": "time",
    "event_col": "event",
    "treatment_col": "treatment",
    "risks_csv": None,
    "simulate": None,
}

TRAIN_DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "dataset": DATASET_DEFAULTS,
    "split": {"fractions": [2 / 3, 1 / 6, 1 / 6], "seed": 0},
    "standardize": True,
    "model": "deep_cox",
    "network": {
        "hidden_layers": 1,
        "nodes_per_layer": 8,
        "activation": "selu",
        "dropout_rate": 0.0,
        "l2_coefficient": 0.0,
    },
    "optimizer": {
        "kind": "adam",
        "learning_rate": 0.01,
        "lr_decay_rate": 0.0,
        "momentum": 0.9,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_epsilon": 1e-8,
        "clip_norm": None,
        "epochs": 500,
        "batch_size": None,
        "seed": 0,
    },
    "evaluation": {"bootstrap_replicates": 200, "alpha": 0.05, "seed": 0},
    "out_dir": ".",
}


def load_config(path, seed_override=None, out_dir_override=None) -> dict:
    try:
        user = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    if not isinstance(user, dict):
        raise UsageError("config must be a JSON object")
    if user.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise UsageError(
            f"unsupported schema_version {user.get('schema_version')!r}"
        )
    cfg = _merge(copy.deepcopy(TRAIN_DEFAULTS), user)
    if seed_override is not None:
        cfg["split"]["seed"] = seed_override
        cfg["optimizer"]["seed"] = seed_override
        cfg["evaluation"]["seed"] = seed_override
        if cfg["dataset"]["simulate"] is not None:
            cfg["dataset"]["simulate"]["seed"] = seed_override
    if out_dir_override is not None:
        cfg["out_dir"] = out_dir_override
    return cfg


def read_risks_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None or "true_risk" not in header:
            raise UsageError(f"{path}: expected a 'true_risk' column")
        col = header.index("true_risk")
        values = [float(row[col]) for row in reader if row]
    return np.asarray(values, dtype=float)


def _load_source(ds_cfg: dict):
    """Dataset plus optional aligned ground-truth risks."""
    has_csv = ds_cfg.get("csv") is not None
    has_sim = ds_cfg.get("simulate") is not None
    if has_csv == has_sim:
        raise UsageError("dataset must specify exactly one of 'csv' or 'simulate'")
    if has_sim:
        try:
            spec = SimulationSpec(**ds_cfg["simulate"])
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad simulation spec: {exc}") from None
        sim = generate(spec)
        return sim.dataset, sim.true_risks
    ds = load_csv(
        ds_cfg["csv"],
        time_col=ds_cfg["time_col"],
        event_col=ds_cfg["event_col"],
        treatment_col=ds_cfg["treatment_col"],
    )
    risks = None
    if ds_cfg.get("risks_csv") is not None:
        risks = read_risks_csv(ds_cfg["risks_csv"])
        if risks.shape[0] != ds.n:
            raise UsageError(
                f"risks sidecar has {risks.shape[0]} rows, dataset has {ds.n}"
            )
    return ds, risks


def _network_config(cfg: dict) -> riskmlp.NetworkConfig:
    try:
        return riskmlp.NetworkConfig(**cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad network config: {exc}") from None


def _optimizer_config(cfg: dict) -> optim.OptimizerConfig:
    try:
        return optim.OptimizerConfig(**cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad optimizer config: {exc}") from None


def _prepare_splits(cfg: dict):
    """Load, split, standardize, and append the treatment feature."""
    ds, true_risks = _load_source(cfg["dataset"])
    fractions = tuple(cfg["split"]["fractions"])
    try:
        idx = split_indices(ds.n, fractions, cfg["split"]["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    parts = [ds.subset(i) for i in idx]
    risk_parts = [None, None, None]
    if true_risks is not None:
        risk_parts = [true_risks[i] for i in idx]

    standardization = None
    if cfg["standardize"]:
        params = standardize_fit(parts[0])
        parts = [standardize_apply(p, params) for p in parts]
        standardization = {
            "means": [float(v) for v in params.means],
            "stddevs": [float(v) for v in params.stddevs],
        }

    treatment_index = None
    if ds.treatments is not None:
        augmented = [append_treatment_feature(p) for p in parts]
        treatment_index = augmented[0][1]
        parts = [a[0] for a in augmented]
    return parts, risk_parts, standardization, treatment_index


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed, args.out_dir)
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = {
        "split": cfg["split"]["seed"],
        "optimizer": cfg["optimizer"]["seed"],
        "evaluation": cfg["evaluation"]["seed"],
    }
    prov = _provenance("train", cfg, seeds)

    (train_ds, val_ds, test_ds), risk_parts, standardization, treatment_index = (
        _prepare_splits(cfg)
    )

    history = None
    if cfg["model"] == "linear_cph":
        model = coxlinear.fit_cph(train_ds)
        test_risks = coxlinear.predict_linear_risk(model, test_ds.covariates)
        model_payload = {"model_type": "linear_cph", **coxlinear.to_dict(model)}
    elif cfg["model"] == "deep_cox":
        net_config = _network_config(cfg["network"])
        opt_config = _optimizer_config(cfg["optimizer"])
        model, history = optim.train(train_ds, net_config, opt_config, val_ds)
        test_risks = riskmlp.forward(model, test_ds.covariates, mode="infer")
        model_payload = {"model_type": "deep_cox", **riskmlp.to_dict(model)}
    else:
        raise UsageError(f"unknown model {cfg['model']!r}")

    model_payload.update(
        {
            "feature_names": list(test_ds.feature_names),
            "treatment_index": treatment_index,
            "standardization": standardization,
            "provenance": prov,
        }
    )
    write_json(out_dir / "model.json", model_payload)

    if history is not None:
        with open(out_dir / "history.csv", "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {canonical_json(prov)}\n")
            writer = csv.writer(fh)
            columns = ["epoch", "learning_rate", "train_loss"]
            if history.val_cindex is not None:
                columns.append("val_cindex")
            writer.writerow(columns)
            for epoch, loss in enumerate(history.train_loss):
                row = [epoch, repr(history.learning_rates[epoch]), repr(loss)]
                if history.val_cindex is not None:
                    row.append(repr(history.val_cindex[epoch]))
                writer.writerow(row)

    evaluation = cfg["evaluation"]
    c_index = metrics.concordance_index(test_ds.times, test_ds.events, test_risks)
    interval = metrics.bootstrap_ci(
        test_ds.times,
        test_ds.events,
        test_risks,
        n_replicates=evaluation["bootstrap_replicates"],
        alpha=evaluation["alpha"],
        seed=evaluation["seed"],
    )
    report = {
        "model": cfg["model"],
        "n_train": train_ds.n,
        "n_val": val_ds.n,
        "n_test": test_ds.n,
        "c_index": c_index,
        "ci_lower": interval.lower,
        "ci_upper": interval.upper,
        "bootstrap_replicates": evaluation["bootstrap_replicates"],
        "alpha": evaluation["alpha"],
        "risk_mse": None,
        "provenance": prov,
    }
    if risk_parts[2] is not None:
        report["risk_mse"] = metrics.risk_mse(test_risks, risk_parts[2])
    write_json(out_dir / "metrics.json", report)
    print(
        f"train[{cfg['model']}]: test C-index {c_index:.4f} "
        f"({interval.lower:.4f}, {interval.upper:.4f})"
        + (f", risk MSE {report['risk_mse']:.4f}" if report["risk_mse"] is not None else "")
    )
    return 0


# ------------------------------------------------------------------ search


def _space_from_file(path) -> optim.SearchSpace:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read search space: {exc}") from None
    kwargs = {}
    for key, value in raw.items():
        kwargs[key] = tuple(value)
    try:
        return optim.SearchSpace(**kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad search space: {exc}") from None


def cmd_search(args) -> int:
    seed = 0 if args.seed is None else args.seed
    ds = load_csv(
        args.data,
        time_col=args.time_col,
        event_col=args.event_col,
        treatment_col=args.treatment_col,
    )
    if args.standardize:
        ds = standardize_apply(ds, standardize_fit(ds))
    if ds.treatments is not None:
        ds, _ = append_treatment_feature(ds)
    space = optim.SearchSpace() if args.space is None else _space_from_file(args.space)

    effective = {
        "data": str(args.data),
        "space": asdict(space),
        "trials": args.trials,
        "k": args.k,
        "epochs": args.epochs,
        "optimizer": args.optimizer,
        "seed": seed,
        "standardize": args.standardize,
    }
    prov = _provenance("search", effective, {"search": seed})
    try:
        best_net, best_opt, trials = optim.random_search(
            space,
            ds,
            k=args.k,
            n_trials=args.trials,
            seed=seed,
            epochs=args.epochs,
            optimizer_kind=args.optimizer,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = [
        {
            "trial": t["trial"],
            "network": asdict(t["network"]),
            "optimizer": asdict(t["optimizer"]),
            "fold_cindex": t["fold_cindex"],
            "mean_cindex": t["mean_cindex"],
        }
        for t in trials
    ]
    best_index = max(trials, key=lambda t: (t["mean_cindex"], -t["trial"]))["trial"]
    write_json(
        out_dir / "search_trials.json",
        {"trials": log, "best_trial": best_index, "provenance": prov},
    )
    write_json(
        out_dir / "best_config.json",
        {
            "schema_version": SCHEMA_VERSION,
            "model": "deep_cox",
            "network": asdict(best_net),
            "optimizer": asdict(best_opt),
            "provenance": prov,
        },
    )
    print(
        f"search: best trial {best_index} "
        f"mean C-index {trials[best_index]['mean_cindex']:.4f}"
    )
    return 0


# --------------------------------------------------------------- recommend


def _model_from_payload(payload: dict):
    kind = payload.get("model_type")
    if kind == "linear_cph":
        return coxlinear.from_dict(payload)
    if kind == "deep_cox":
        return riskmlp.from_dict(payload)
    raise UsageError(f"unknown model_type {kind!r} in model file")


def cmd_recommend(args) -> int:
    try:
        payload = json.loads(Path(args.model).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read model: {exc}") from None
    model = _model_from_payload(payload)
    ds = load_csv(
        args.data,
        time_col=args.time_col,
        event_col=args.event_col,
        treatment_col=args.treatment_col,
    )
    if ds.treatments is None:
        raise UsageError(f"{args.data}: no treatment column {args.treatment_col!r}")
    if payload.get("standardization") is not None:
        std = payload["standardization"]
        ds = standardize_apply(
            ds, StandardizationParams(std["means"], std["stddevs"])
        )
    ds, treatment_index = append_treatment_feature(ds)
    stored_index = payload.get("treatment_index")
    if stored_index is not None and stored_index != treatment_index:
        raise UsageError(
            f"model expects the treatment feature at column {stored_index}, "
            f"data puts it at {treatment_index}"
        )

    report = recommend.evaluate_recommendations(ds, model, treatment_index)
    effective = {
        "model": str(args.model),
        "data": str(args.data),
        "model_config_hash": payload.get("provenance", {}).get("config_hash"),
    }
    prov = _provenance("recommend", effective, {})

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    body = recommend.report_to_dict(report)
    body["provenance"] = prov
    write_json(out_dir / "recommendation.json", body)
    metrics.write_km_csv(
        report.km_recommendation,
        out_dir / "km_recommendation.csv",
        comment=canonical_json(prov),
    )
    metrics.write_km_csv(
        report.km_anti_recommendation,
        out_dir / "km_anti_recommendation.csv",
        comment=canonical_json(prov),
    )
    if not args.no_svg:
        svg = render_km_svg(
            [
                ("Recommendation", report.km_recommendation),
                ("Anti-Recommendation", report.km_anti_recommendation),
            ],
            title="Survival by recommendation concordance",
            p_value=report.log_rank_result.p_value,
        )
        (out_dir / "recommendation.svg").write_text(
            f"<!-- {canonical_json(prov)} -->\n" + svg, encoding="utf-8"
        )
    medians = body["median_survival"]
    print(
        f"recommend: median survival {medians['recommendation']} (Rec) vs "
        f"{medians['anti_recommendation']} (Anti-Rec), "
        f"log-rank p = {report.log_rank_result.p_value:.3g}"
    )
    return 0


# ---------------------------------------------------------------------- km


def _read_km_columns(path, time_col, event_col, group_col):
    times, events, groups = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file, header row required")
        header = [h.strip() for h in header]
        for col in [time_col, event_col] + ([group_col] if group_col else []):
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
        t_i, e_i = header.index(time_col), header.index(event_col)
        g_i = header.index(group_col) if group_col else None
        for row_num, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                t = float(row[t_i])
                e = float(row[e_i])
            except ValueError:
                raise CsvParseError(f"non-numeric time/event at row {row_num}") from None
            if t <= 0:
                raise CsvParseError(f"non-positive time {t} at row {row_num}")
            if e not in (0.0, 1.0):
                raise CsvParseError(f"event value {e} outside {{0,1}} at row {row_num}")
            times.append(t)
            events.append(int(e))
            if g_i is not None:
                groups.append(row[g_i].strip())
    if not times:
        raise CsvParseError(f"{path}: no data rows")
    return np.asarray(times), np.asarray(events), groups


def _safe_label(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label)


def cmd_km(args) -> int:
    times, events, groups = _read_km_columns(
        args.data, args.time_col, args.event_col, args.group_by
    )
    effective = {
        "data": str(args.data),
        "group_by": args.group_by,
        "alpha": args.alpha,
    }
    prov = _provenance("km", effective, {})
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.group_by is None:
        labelled = [("all", np.ones(times.shape[0], dtype=bool))]
    else:
        labels = sorted(set(groups))
        group_arr = np.asarray(groups)
        labelled = [(label, group_arr == label) for label in labels]

    curves = []
    summary = {}
    for label, mask in labelled:
        curve = metrics.kaplan_meier(times[mask], events[mask], alpha=args.alpha)
        curves.append((label, curve))
        summary[label] = {
            "n": int(mask.sum()),
            "events": int(events[mask].sum()),
            "median_survival": metrics.median_survival(curve),
        }
        name = "km.csv" if label == "all" else f"km_{_safe_label(label)}.csv"
        metrics.write_km_csv(curve, out_dir / name, comment=canonical_json(prov))

    log_rank_payload = None
    p_value = None
    if len(curves) == 2:
        (_, mask_a), (_, mask_b) = labelled
        result = metrics.log_rank(
            times[mask_a], events[mask_a], times[mask_b], events[mask_b]
        )
        log_rank_payload = {"statistic": result.statistic, "p_value": result.p_value}
        p_value = result.p_value
    write_json(
        out_dir / "km.json",
        {"groups": summary, "log_rank": log_rank_payload, "provenance": prov},
    )
    if not args.no_svg:
        svg = render_km_svg(curves, title="Kaplan-Meier survival", p_value=p_value)
        (out_dir / "km.svg").write_text(
            f"<!-- {canonical_json(prov)} -->\n" + svg, encoding="utf-8"
        )
    print(f"km: wrote {len(curves)} curve(s) to {out_dir}")
    return 0


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coxkit",
        description="Survival analysis experiments: Cox regression, deep Cox "
        "risk networks, and treatment recommendations.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="master seed")

    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", parents=[common], help="generate synthetic survival data")
    p_sim.add_argument("--risk", choices=["linear", "gaussian"], required=True)
    p_sim.add_argument("--n", type=int, required=True, help="number of patients")
    p_sim.add_argument("--d", type=int, default=10, help="number of covariates")
    p_sim.add_argument("--lambda-max", type=float, default=5.0)
    p_sim.add_argument("--r", type=float, default=0.5)
    p_sim.add_argument("--mean-u", type=float, default=5.0)
    p_sim.add_argument("--observed-fraction", type=float, default=0.9)
    p_sim.add_argument("--with-treatment", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_train = sub.add_parser("train", parents=[common], help="train and evaluate a model")
    p_train.add_argument("--config", required=True, help="experiment config JSON")
    p_train.set_defaults(func=cmd_train, out_dir=None)

    p_search = sub.add_parser(
        "search", parents=[common], help="random hyperparameter search"
    )
    p_search.add_argument("--data", required=True, help="dataset CSV")
    p_search.add_argument("--time-col", default="time")
    p_search.add_argument("--event-col", default="event")
    p_search.add_argument("--treatment-col", default="treatment")
    p_search.add_argument("--trials", type=int, default=10)
    p_search.add_argument("--k", type=int, default=3)
    p_search.add_argument("--epochs", type=int, default=200)
    p_search.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p_search.add_argument("--space", default=None, help="search-space JSON file")
    p_search.add_argument(
        "--no-standardize", dest="standardize", action="store_false",
        help="skip standardization (fit on the full dataset before folding)",
    )
    p_search.set_defaults(func=cmd_search)

    p_rec = sub.add_parser(
        "recommend", parents=[common], help="evaluate treatment recommendations"
    )
    p_rec.add_argument("--model", required=True, help="model JSON from train")
    p_rec.add_argument("--data", required=True, help="test dataset CSV")
    p_rec.add_argument("--time-col", default="time")
    p_rec.add_argument("--event-col", default="event")
    p_rec.add_argument("--treatment-col", default="treatment")
    p_rec.add_argument("--no-svg", action="store_true")
    p_rec.set_defaults(func=cmd_recommend)

    p_km = sub.add_parser("km", parents=[common], help="Kaplan-Meier curves")
    p_km.add_argument("--data", required=True, help="dataset CSV")
    p_km.add_argument("--time-col", default="time")
    p_km.add_argument("--event-col", default="event")
    p_km.add_argument("--group-by", default=None, help="column defining curve groups")
    p_km.add_argument("--alpha", type=float, default=0.05)
    p_km.add_argument("--no-svg", action="store_true")
    p_km.set_defaults(func=cmd_km)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SchemaError, CsvParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (optim.TrainingDiverged, coxlinear.FitError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
