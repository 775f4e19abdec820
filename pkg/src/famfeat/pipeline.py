"""Stage orchestration behind the service endpoints and the CLI.

Each ``run_*`` function is one pipeline stage: it reads artifacts from
disk, applies the configuration, writes outputs atomically and returns a
JSON-friendly summary. Stages are deterministic given (inputs, config,
seed) and idempotent on their outputs.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from . import classify, dataset, report, selection
from .bands import DEFAULT_BAND_PLAN, DEFAULT_REGION_MAP
from .config import PipelineConfig
from .errors import DataFormatError, ParameterError
from .features import extract_epoch_features
from .preprocess import (
    auto_flag_eog,
    bandpass_filter,
    ica_decompose,
    remove_components,
    slice_epochs,
)
from .synth import SynthSpec, synth_recordings

log = logging.getLogger(__name__)


def run_synth(spec: SynthSpec, out_dir) -> dict:
    """Generate a recordings dataset from a synthesis spec."""
    channels, records = synth_recordings(spec)
    manifest = dataset.write_recordings_dataset(out_dir, spec.fs, channels, records)
    labels = [lab for entry in manifest["recordings"] for lab in entry["labels"]]
    counts: dict[str, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    return {
        "out": str(out_dir),
        "recordings": len(manifest["recordings"]),
        "trials": len(labels),
        "class_counts": counts,
    }


def run_preprocess(in_dir, out_dir, config: PipelineConfig) -> dict:
    """Filter, clean and epoch every recording of a dataset."""
    records = dataset.load_recordings_dataset(in_dir)
    if not records:
        raise DataFormatError("dataset contains no recordings", path=str(in_dir))
    epochs = []
    ica_log = []
    channels = None
    fs = None
    for rec, labels, subject in records:
        channels = rec.channels
        fs = rec.fs
        filtered = bandpass_filter(rec, config.filter.lo, config.filter.hi)
        removed: list[int] = []
        status = "disabled"
        if config.ica.enabled:
            if config.ica.remove_override is not None:
                dec = ica_decompose(
                    filtered,
                    n_components=config.ica.n_components,
                    seed=config.seed,
                    max_iter=config.ica.max_iter,
                    tol=config.ica.tol,
                )
                removed = sorted(config.ica.remove_override)
                filtered = remove_components(filtered, dec, set(removed))
                status = "override"
            elif filtered.eog_channel is not None:
                dec = ica_decompose(
                    filtered,
                    n_components=config.ica.n_components,
                    seed=config.seed,
                    max_iter=config.ica.max_iter,
                    tol=config.ica.tol,
                )
                eog = filtered.samples[:, filtered.eog_channel]
                flagged = auto_flag_eog(dec, eog, threshold=config.ica.eog_threshold)
                removed = sorted(flagged)
                filtered = remove_components(filtered, dec, flagged)
                status = "auto"
            else:
                status = "skipped (no EOG channel)"
        ica_log.append({"subject": subject, "status": status, "removed": removed})
        epochs.extend(
            slice_epochs(
                filtered,
                labels,
                start_s=config.window.start_s,
                end_s=config.window.end_s,
                subject=subject,
            )
        )
    dataset.write_epochs_dataset(out_dir, fs, channels, epochs)
    provenance = {
        "stage": "preprocess",
        "config": config.model_dump(mode="json"),
        "config_hash": config.config_hash(),
        "input": str(in_dir),
        "ica": ica_log,
    }
    dataset.write_json(Path(out_dir) / "provenance.json", provenance)
    return {
        "out": str(out_dir),
        "epochs": len(epochs),
        "recordings": len(records),
        "ica": ica_log,
    }


def run_extract(in_dir, out_path, config: PipelineConfig) -> dict:
    """Turn an epochs dataset into a feature table (one CSV row per epoch)."""
    channels, fs, epochs = dataset.load_epochs_dataset(in_dir)
    if not epochs:
        raise DataFormatError("dataset contains no epochs", path=str(in_dir))
    pairs = None
    if config.features.correlation_pairs is not None:
        index = {c: i for i, c in enumerate(channels)}
        try:
            pairs = [(index[a], index[b]) for a, b in config.features.correlation_pairs]
        except KeyError as err:
            raise ParameterError(f"correlation pair names unknown channel {err}") from None
    names = None
    rows = []
    labels = []
    missing: dict[str, int] = {}
    for ep in epochs:
        fv = extract_epoch_features(
            ep,
            plan=DEFAULT_BAND_PLAN,
            channel_names=channels,
            families=config.features.toggles(),
            pairs=pairs,
            wavelet=config.features.wavelet_name,
            wavelet_stats=config.features.wavelet_stats,
            psd_segment_len=config.features.psd_segment_len,
            on_undefined="nan",
        )
        if names is None:
            names = fv.names
        elif names != fv.names:
            raise ParameterError("inconsistent feature layout across epochs")
        rows.append(fv.values)
        labels.append(ep.label)
        for m in fv.missing:
            missing[m] = missing.get(m, 0) + 1
    values = np.vstack(rows)
    dataset.write_feature_table(out_path, names, values, labels)
    missing_total = int(sum(missing.values()))
    sidecar = {
        "stage": "extract",
        "config": config.model_dump(mode="json"),
        "config_hash": config.config_hash(),
        "input": str(in_dir),
        "rows": len(labels),
        "columns": len(names),
        "missing_values": missing_total,
        "missing_features": sorted(missing),
    }
    dataset.write_json(Path(out_path).with_suffix(".json"), sidecar)
    if missing_total:
        log.warning("%d undefined feature values recorded as %s",
                    missing_total, dataset.MISSING_MARKER)
    return {
        "out": str(out_path),
        "rows": len(labels),
        "columns": len(names) + 1,
        "missing_values": missing_total,
        "missing_features": sorted(missing),
    }


def _load_matrix_for_selection(features_path, class_a=None, class_b=None):
    names, values, labels = dataset.read_feature_table(features_path)
    keep_rows = np.ones(len(labels), dtype=bool)
    if class_a is not None and class_b is not None:
        keep_rows = np.asarray([lab in (class_a, class_b) for lab in labels], dtype=bool)
        present = {lab for lab, k in zip(labels, keep_rows) if k}
        if present != {class_a, class_b}:
            raise ParameterError(
                f"classes {sorted({class_a, class_b} - present)} absent from the table"
            )
    values = values[keep_rows]
    labels = [lab for lab, k in zip(labels, keep_rows) if k]
    finite = np.all(np.isfinite(values), axis=0)
    dropped = [names[i] for i in np.flatnonzero(~finite)]
    fm = selection.FeatureMatrix(
        values=values[:, finite],
        labels=labels,
        names=[n for n, f in zip(names, finite) if f],
    )
    return fm, dropped


def run_select(features_path, class_a, class_b, out_dir, config: PipelineConfig) -> dict:
    """Run the three-stage cascade for one class pair and write the report."""
    fm, dropped = _load_matrix_for_selection(features_path, class_a, class_b)
    sel = config.selection
    rep = selection.run_cascade(
        fm,
        class_a,
        class_b,
        alpha=sel.alpha,
        stage_sizes=sel.stage_sizes,
        t_test=sel.t_test,
        fdr_denominator=sel.fdr_denominator,
        r=sel.r,
        l=sel.l,
        wrapper_sigma=sel.wrapper_sigma,
        wrapper_C=sel.wrapper_C,
        wrapper_folds=sel.wrapper_folds,
        seed=config.seed,
    )
    out_dir = Path(out_dir)
    dataset.write_selection_report(out_dir / "report.tsv", rep)
    final_names = [rep.names[i] for i in rep.stage3_ids]

    fam = report.family_tally(final_names)
    reg, pair_count = report.region_tally(final_names, DEFAULT_REGION_MAP)
    reg_norm = report.normalized_region_tally(reg, DEFAULT_REGION_MAP)
    dataset.atomic_write_text(
        out_dir / "families.csv",
        report.tally_csv(list(fam.items()), ("family", "count")),
    )
    dataset.atomic_write_text(
        out_dir / "regions.csv",
        report.tally_csv(
            list(reg.items()) + [("channel_pairs", pair_count)], ("region", "count")
        ),
    )
    dataset.atomic_write_text(
        out_dir / "regions_normalized.csv",
        report.tally_csv(
            [(r, float(v)) for r, v in reg_norm.items()], ("region", "count_per_electrode")
        ),
    )
    sidecar = dataset.selection_report_to_json(rep)
    sidecar.update(
        {
            "stage": "select",
            "config": config.model_dump(mode="json"),
            "config_hash": config.config_hash(),
            "input": str(features_path),
            "dropped_columns": dropped,
        }
    )
    dataset.write_json(out_dir / "report.json", sidecar)
    warnings = []
    if dropped:
        warnings.append(f"{len(dropped)} columns dropped for missing values")
    if rep.shortfall:
        warnings.append(
            f"cascade fell short: {len(rep.stage3_ids)} final features "
            f"(target {sel.stage_sizes[2]})"
        )
    return {
        "out": str(out_dir),
        "stage_sizes": [len(rep.stage1_ids), len(rep.stage2_ids), len(rep.stage3_ids)],
        "best_ccr": rep.stage3_best_ccr,
        "final_features": final_names,
        "partial": rep.shortfall,
        "warnings": warnings,
    }


def _resolve_feature_names(features_arg) -> tuple[list[str], list]:
    """Feature names plus, when available, the class pair they came from."""
    path = Path(features_arg)
    feature_case: list = []
    if path.is_dir():
        tsv = path / "report.tsv"
        meta = path / "report.json"
    else:
        tsv = path
        meta = path.with_name("report.json")
    names = dataset.load_selected_features(tsv)
    if meta.is_file():
        try:
            feature_case = list(dataset.read_json(meta).get("class_pair", []))
        except DataFormatError:
            feature_case = []
    return names, feature_case


def run_train(
    features_path,
    out_dir,
    config: PipelineConfig,
    feature_list=None,
    class_a=None,
    class_b=None,
    name: str = "",
) -> dict:
    """Sigma search + cross-validated evaluation + final model artifact.

    Two-class tables train one machine; three-class tables train the
    pairwise ensemble (reusing a two-class feature list when one is given).
    """
    names, values, labels = dataset.read_feature_table(features_path)
    if class_a is not None and class_b is not None:
        keep = np.asarray([lab in (class_a, class_b) for lab in labels], dtype=bool)
        values = values[keep]
        labels = [lab for lab, k in zip(labels, keep) if k]
    classes = sorted(set(labels))
    if len(classes) not in (2, 3):
        raise ParameterError(f"training needs 2 or 3 classes, table has {len(classes)}")

    feature_case: list = []
    if feature_list is not None:
        if isinstance(feature_list, (str, Path)):
            selected, feature_case = _resolve_feature_names(feature_list)
        else:
            selected = list(feature_list)
        index = {n: i for i, n in enumerate(names)}
        missing = [n for n in selected if n not in index]
        if missing:
            raise ParameterError(f"selected features absent from the table: {missing[:5]}")
        cols = [index[n] for n in selected]
    else:
        selected = list(names)
        cols = list(range(len(names)))
    X = values[:, cols]
    if not np.all(np.isfinite(X)):
        bad = [selected[i] for i in np.flatnonzero(~np.all(np.isfinite(X), axis=0))]
        raise ParameterError(f"selected features contain missing values: {bad[:5]}")
    y = np.asarray(labels)

    svm_cfg = config.svm
    grid = svm_cfg.sigma_grid if svm_cfg.sigma_grid is not None else classify.default_sigma_grid()
    best_sigma, table = classify.sigma_search(
        X, y, C=svm_cfg.C, coarse_grid=grid,
        refine_steps=svm_cfg.refine_steps, k_folds=svm_cfg.cv_folds, seed=config.seed,
    )
    result = classify.cross_validated_ccr(
        X, y, sigma=best_sigma, C=svm_cfg.C, k_folds=svm_cfg.cv_folds, seed=config.seed
    )

    mean, sd, (Xz,) = classify.standardize_columns(X)
    if len(classes) == 2:
        model = classify.train_svm(
            Xz,
            np.where(y == classes[0], 1.0, -1.0),
            sigma=best_sigma,
            C=svm_cfg.C,
            class_pair=(classes[0], classes[1]),
        )
    else:
        model = classify.train_one_vs_one(Xz, y, sigma=best_sigma, C=svm_cfg.C)

    out_dir = Path(out_dir)
    dataset.write_model(
        out_dir / "model.json", model, selected, {"mean": mean, "sd": sd}
    )
    protocol = {
        "k_folds": svm_cfg.cv_folds,
        "seed": config.seed,
        "sigma": best_sigma,
        "C": svm_cfg.C,
        "sigma_table": [[float(s), float(c)] for s, c in table],
        "evaluation": "cross_validation",
    }
    eval_obj = dataset.eval_result_to_json(
        result, name=name or Path(str(features_path)).stem,
        protocol=protocol, feature_case=feature_case,
    )
    dataset.write_json(out_dir / "eval.json", eval_obj)
    return {
        "out": str(out_dir),
        "classes": [str(c) for c in classes],
        "sigma": best_sigma,
        "ccr": result.ccr,
        "per_fold": result.per_fold,
        "n_features": len(selected),
        "feature_case": feature_case,
    }


def run_eval(features_path, model_path, out_path, name: str = "") -> dict:
    """Apply a saved model to a feature table and write the eval artifact."""
    model, feature_names, standardize = dataset.load_model(model_path)
    names, values, labels = dataset.read_feature_table(features_path)
    index = {n: i for i, n in enumerate(names)}
    missing = [n for n in feature_names if n not in index]
    if missing:
        raise ParameterError(f"model features absent from the table: {missing[:5]}")
    X = values[:, [index[n] for n in feature_names]]
    if not np.all(np.isfinite(X)):
        raise ParameterError("feature table has missing values in model columns")
    Xz = (X - standardize["mean"]) / standardize["sd"]

    if isinstance(model, classify.MulticlassModel):
        classes = list(model.classes)
        pred = classify.predict_one_vs_one_many(model, Xz)
    else:
        classes = list(model.class_pair)
        vals = model.decision_values(Xz)
        pred = [classes[0] if v >= 0 else classes[1] for v in vals]
    class_index = {c: i for i, c in enumerate(classes)}
    unknown = sorted({lab for lab in labels if lab not in class_index})
    if unknown:
        raise ParameterError(f"table labels unknown to the model: {unknown}")
    confusion = np.zeros((len(classes), len(classes)), dtype=int)
    for truth, guess in zip(labels, pred):
        confusion[class_index[truth], class_index[guess]] += 1
    ccr = 100.0 * float(np.trace(confusion)) / int(confusion.sum())
    result = classify.EvalResult(
        ccr=ccr, per_fold=[ccr], confusion=confusion, classes=classes
    )
    eval_obj = dataset.eval_result_to_json(
        result,
        name=name or Path(str(features_path)).stem,
        protocol={"evaluation": "held_out", "model": str(model_path)},
    )
    dataset.write_json(out_path, eval_obj)
    return {"out": str(out_path), "ccr": ccr, "classes": [str(c) for c in classes]}


def run_report(eval_paths, selection_paths, out_dir) -> dict:
    """Summary tables + figures from eval artifacts and selection reports."""
    out_dir = Path(out_dir)
    if not eval_paths and not selection_paths:
        raise ParameterError("report needs at least one eval or selection input")
    outputs = []

    evals = [dataset.load_eval_result(p) for p in eval_paths]
    if evals:
        lines = ["name,case,n_classes,ccr"]
        for ev in evals:
            case = "-".join(ev["classes"])
            lines.append(f"{ev['name']},{case},{len(ev['classes'])},{ev['ccr']!r}")
        dataset.atomic_write_text(out_dir / "runs.csv", "\n".join(lines) + "\n")
        outputs.append("runs.csv")

        by_case: dict[str, list[float]] = {}
        for ev in evals:
            if len(ev["classes"]) == 2:
                by_case.setdefault("-".join(ev["classes"]), []).append(float(ev["ccr"]))
        if by_case:
            dataset.atomic_write_text(out_dir / "summary.csv", report.mean_sd_table(by_case))
            outputs.append("summary.csv")

        two_class = {}
        three_class = {}
        for ev in evals:
            if len(ev["classes"]) == 2:
                two_class.setdefault("-".join(ev["classes"]), []).append(float(ev["ccr"]))
            elif len(ev["classes"]) == 3 and ev.get("feature_case"):
                three_class.setdefault("-".join(ev["feature_case"]), []).append(float(ev["ccr"]))
        cases = sorted(set(two_class) | set(three_class))
        if cases:
            lines = ["case,two_class_ccr,three_class_ccr"]
            for case in cases:
                two = two_class.get(case)
                three = three_class.get(case)
                two_s = repr(sum(two) / len(two)) if two else ""
                three_s = repr(sum(three) / len(three)) if three else ""
                lines.append(f"{case},{two_s},{three_s}")
            dataset.atomic_write_text(out_dir / "two_vs_three.csv", "\n".join(lines) + "\n")
            outputs.append("two_vs_three.csv")

    if selection_paths:
        fam_acc = {f: 0.0 for f in report.FAMILY_ORDER}
        reg_acc: dict[str, float] = {}
        reg_norm_acc: dict[str, float] = {}
        n_sel = 0
        for p in selection_paths:
            names, _ = _resolve_feature_names(p)
            fam = report.family_tally(names)
            reg, _pairs = report.region_tally(names, DEFAULT_REGION_MAP)
            for k, v in fam.items():
                fam_acc[k] += v
            for k, v in reg.items():
                reg_acc[k] = reg_acc.get(k, 0.0) + v
            for k, v in report.normalized_region_tally(reg, DEFAULT_REGION_MAP).items():
                reg_norm_acc[k] = reg_norm_acc.get(k, 0.0) + v
            n_sel += 1
        fam_mean = {k: v / n_sel for k, v in fam_acc.items()}
        reg_mean = {k: v / n_sel for k, v in reg_acc.items()}
        reg_norm_mean = {k: v / n_sel for k, v in reg_norm_acc.items()}
        for stem, data, key, title in (
            ("families", fam_mean, "family", "Selected features per family (mean)"),
            ("regions", reg_mean, "region", "Selected features per region (mean)"),
            (
                "regions_normalized",
                reg_norm_mean,
                "region",
                "Selected features per region, per electrode (mean)",
            ),
        ):
            dataset.atomic_write_text(
                out_dir / f"{stem}.csv",
                report.tally_csv(
                    [(k, float(v)) for k, v in data.items()], (key, "mean_count")
                ),
            )
            dataset.atomic_write_text(
                out_dir / f"{stem}.svg",
                report.svg_bar_chart(title, list(data.keys()), list(data.values())),
            )
            outputs.extend([f"{stem}.csv", f"{stem}.svg"])

    return {"out": str(out_dir), "outputs": outputs}
