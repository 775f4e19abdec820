"""On-disk formats: datasets, feature tables, selection reports, models.

A dataset is a directory with a ``manifest.json`` (fs, channel names, one
entry per recording or epoch) plus one numeric CSV matrix per entry (rows =
samples, columns = channels). Feature tables are a single CSV with a header
of feature names plus a final ``label`` column; undefined values carry the
explicit marker ``NA``. All writers are atomic (temp file + rename), emit
UTF-8 with LF endings and contain nothing nondeterministic, so re-running
a stage reproduces outputs byte for byte.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .classify import EvalResult, MulticlassModel, SvmModel
from .errors import DataFormatError, ParameterError
from .preprocess import Epoch, Recording
from .selection import SelectionReport

MISSING_MARKER = "NA"
DATASET_FORMAT = "famfeat-dataset"
MODEL_FORMAT = "famfeat-model"
EVAL_FORMAT = "famfeat-eval"
FORMAT_VERSION = 1

# matrix files round-trip through this many significant digits
_MATRIX_FMT = "%.10g"


def _fmt(x: float) -> str:
    """Shortest exact decimal representation of a float."""
    return repr(float(x))


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataFormatError("file not found", path=str(path)) from None
    except json.JSONDecodeError as err:
        raise DataFormatError(f"invalid JSON: {err.msg}", path=str(path), line=err.lineno) from None


def write_matrix_csv(path, array: np.ndarray, header: list[str]) -> None:
    array = np.asarray(array, dtype=float)
    if array.ndim != 2 or array.shape[1] != len(header):
        raise ParameterError("matrix and header shapes disagree")
    lines = [",".join(header)]
    for row in array:
        lines.append(",".join(_MATRIX_FMT % v for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_matrix_csv(path, expect_columns: list[str] | None = None) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split(",")
            try:
                body = np.loadtxt(fh, delimiter=",", ndmin=2)
            except ValueError:
                body = None
    except FileNotFoundError:
        raise DataFormatError("file not found", path=str(path)) from None
    if body is None:
        # slow rescan to locate the offending line for the diagnostic
        with open(path, "r", encoding="utf-8") as fh:
            next(fh)
            for lineno, line in enumerate(fh, start=2):
                for field in line.rstrip("\n").split(","):
                    try:
                        float(field)
                    except ValueError:
                        raise DataFormatError(
                            f"not a number: {field!r}", path=str(path), line=lineno
                        ) from None
        raise DataFormatError("malformed numeric matrix", path=str(path))
    if body.shape[1] != len(header):
        raise DataFormatError(
            f"{body.shape[1]} columns of data under {len(header)} header fields",
            path=str(path),
        )
    if expect_columns is not None and header != expect_columns:
        raise DataFormatError("column header does not match the manifest", path=str(path))
    return header, body


def write_recordings_dataset(out_dir, fs: float, channels: list[str], records) -> dict:
    """Write a recordings-kind dataset; ``records`` as from synth_recordings."""
    out_dir = Path(out_dir)
    entries = []
    for i, rec in enumerate(records):
        recording: Recording = rec["recording"]
        rel = f"rec_{i:03d}.csv"
        write_matrix_csv(out_dir / rel, recording.samples, list(channels))
        entries.append(
            {
                "path": rel,
                "subject": rec["subject"],
                "onsets": [int(o) for o in recording.stimulus_onsets],
                "labels": list(rec["labels"]),
                "eog_channel": recording.eog_channel,
            }
        )
    manifest = {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "kind": "recordings",
        "fs": fs,
        "channels": list(channels),
        "recordings": entries,
    }
    write_json(out_dir / "manifest.json", manifest)
    return manifest


def load_recordings_dataset(in_dir):
    """Yield (Recording, labels, subject) per manifest entry."""
    in_dir = Path(in_dir)
    manifest = read_json(in_dir / "manifest.json")
    _check_manifest(manifest, "recordings", in_dir)
    fs = float(manifest["fs"])
    channels = list(manifest["channels"])
    out = []
    for entry in manifest["recordings"]:
        _, samples = read_matrix_csv(in_dir / entry["path"], expect_columns=channels)
        onsets = [int(o) for o in entry["onsets"]]
        labels = list(entry["labels"])
        if len(labels) != len(onsets):
            raise DataFormatError(
                f"{len(labels)} labels for {len(onsets)} onsets in {entry['path']}",
                path=str(in_dir / "manifest.json"),
            )
        try:
            rec = Recording(
                channels=channels,
                samples=samples,
                fs=fs,
                stimulus_onsets=onsets,
                eog_channel=entry.get("eog_channel"),
            )
        except ParameterError as err:
            raise DataFormatError(str(err), path=str(in_dir / entry["path"])) from err
        out.append((rec, labels, entry.get("subject", "")))
    return out


def write_epochs_dataset(out_dir, fs: float, channels: list[str], epochs: list[Epoch]) -> dict:
    out_dir = Path(out_dir)
    entries = []
    for i, ep in enumerate(epochs):
        rel = f"epoch_{i:04d}.csv"
        write_matrix_csv(out_dir / rel, ep.samples, list(channels))
        entries.append(
            {
                "path": rel,
                "label": ep.label,
                "subject": ep.source[0],
                "trial": int(ep.source[1]),
            }
        )
    manifest = {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "kind": "epochs",
        "fs": fs,
        "channels": list(channels),
        "epochs": entries,
    }
    write_json(out_dir / "manifest.json", manifest)
    return manifest


def load_epochs_dataset(in_dir):
    in_dir = Path(in_dir)
    manifest = read_json(in_dir / "manifest.json")
    _check_manifest(manifest, "epochs", in_dir)
    fs = float(manifest["fs"])
    channels = list(manifest["channels"])
    epochs = []
    for entry in manifest["epochs"]:
        _, samples = read_matrix_csv(in_dir / entry["path"], expect_columns=channels)
        try:
            ep = Epoch(
                samples=samples,
                fs=fs,
                label=entry["label"],
                source=(entry.get("subject", ""), int(entry.get("trial", 0))),
            )
        except ParameterError as err:
            raise DataFormatError(str(err), path=str(in_dir / entry["path"])) from err
        epochs.append(ep)
    return channels, fs, epochs


def _check_manifest(manifest, kind: str, in_dir) -> None:
    path = str(Path(in_dir) / "manifest.json")
    if manifest.get("format") != DATASET_FORMAT:
        raise DataFormatError(f"not a {DATASET_FORMAT} manifest", path=path)
    if manifest.get("kind") != kind:
        raise DataFormatError(
            f"expected a {kind!r} dataset, found {manifest.get('kind')!r}", path=path
        )
    if int(manifest.get("version", -1)) > FORMAT_VERSION:
        raise DataFormatError("manifest version is newer than this build", path=path)


def write_feature_table(path, names: list[str], values: np.ndarray, labels: list) -> None:
    """Feature CSV: one row per epoch, exact decimal floats, NA for missing."""
    values = np.asarray(values, dtype=float)
    if values.shape != (len(labels), len(names)):
        raise ParameterError("values shape must be (len(labels), len(names))")
    lines = [",".join(list(names) + ["label"])]
    for row, label in zip(values, labels):
        cells = [(_fmt(v) if np.isfinite(v) else MISSING_MARKER) for v in row]
        cells.append(str(label))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_feature_table(path) -> tuple[list[str], np.ndarray, list[str]]:
    """Returns (names, values with NaN where marked missing, labels)."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split(",")
            if header[-1] != "label":
                raise DataFormatError(
                    "last column of a feature table must be 'label'", path=str(path), line=1
                )
            names = header[:-1]
            values = []
            labels = []
            for lineno, line in enumerate(fh, start=2):
                cells = line.rstrip("\n").split(",")
                if len(cells) != len(header):
                    raise DataFormatError(
                        f"{len(cells)} cells under {len(header)} header fields",
                        path=str(path),
                        line=lineno,
                    )
                row = np.empty(len(names))
                for k, cell in enumerate(cells[:-1]):
                    if cell == MISSING_MARKER:
                        row[k] = np.nan
                    else:
                        try:
                            row[k] = float(cell)
                        except ValueError:
                            raise DataFormatError(
                                f"not a number: {cell!r}", path=str(path), line=lineno
                            ) from None
                values.append(row)
                labels.append(cells[-1])
    except FileNotFoundError:
        raise DataFormatError("file not found", path=str(path)) from None
    if not values:
        raise DataFormatError("feature table has no rows", path=str(path))
    return names, np.vstack(values), labels


def write_selection_report(path, report: SelectionReport) -> None:
    """Human-readable TSV of the cascade: stage, rank, feature name, score."""
    lines = ["stage\trank\tfeature\tscore"]
    for rank, (fid, p) in enumerate(zip(report.stage1_ids, report.stage1_pvalues), 1):
        lines.append(f"1\t{rank}\t{report.names[fid]}\t{_fmt(p)}")
    for rank, (fid, s) in enumerate(zip(report.stage2_ids, report.stage2_scores), 1):
        lines.append(f"2\t{rank}\t{report.names[fid]}\t{_fmt(s)}")
    for rank, fid in enumerate(report.stage3_ids, 1):
        lines.append(f"3\t{rank}\t{report.names[fid]}\t{_fmt(report.stage3_best_ccr)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def selection_report_to_json(report: SelectionReport) -> dict:
    return {
        "class_pair": list(report.class_pair),
        "stage1": [
            {"id": int(i), "feature": report.names[i], "p_value": float(p)}
            for i, p in zip(report.stage1_ids, report.stage1_pvalues)
        ],
        "stage2": [
            {"id": int(i), "feature": report.names[i], "score": float(s)}
            for i, s in zip(report.stage2_ids, report.stage2_scores)
        ],
        "stage3": {
            "ids": [int(i) for i in report.stage3_ids],
            "features": [report.names[i] for i in report.stage3_ids],
            "best_ccr": float(report.stage3_best_ccr),
            "trace": [float(t) for t in report.stage3_trace],
        },
        "shortfall": bool(report.shortfall),
        "degenerate_columns": [int(i) for i in report.degenerate_columns],
    }


def load_selected_features(path) -> list[str]:
    """Feature names from a selection TSV (stage-3 rows) or a plain list file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataFormatError("file not found", path=str(path)) from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines and lines[0].startswith("stage\t"):
        names = [ln.split("\t")[2] for ln in lines[1:] if ln.split("\t")[0] == "3"]
        if not names:
            raise DataFormatError("selection report has no stage-3 rows", path=str(path))
        return names
    return [ln.strip() for ln in lines]


def _machine_to_json(m: SvmModel) -> dict:
    return {
        "class_pair": list(m.class_pair),
        "sigma": m.sigma,
        "C": m.C,
        "bias": m.bias,
        "dual_coefficients": [float(v) for v in m.dual_coefficients],
        "support_vectors": [[float(v) for v in row] for row in m.support_vectors],
    }


def _machine_from_json(obj) -> SvmModel:
    return SvmModel(
        support_vectors=np.asarray(obj["support_vectors"], dtype=float),
        dual_coefficients=np.asarray(obj["dual_coefficients"], dtype=float),
        bias=float(obj["bias"]),
        sigma=float(obj["sigma"]),
        C=float(obj["C"]),
        class_pair=tuple(obj["class_pair"]),
    )


def write_model(path, model, feature_names: list[str], standardize: dict) -> None:
    """Versioned JSON model artifact, loadable by a later eval invocation."""
    if isinstance(model, MulticlassModel):
        machines = model.machines
        classes = list(model.classes)
    else:
        machines = [model]
        classes = list(model.class_pair)
    obj = {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "classes": classes,
        "feature_names": list(feature_names),
        "standardize": {
            "mean": [float(v) for v in standardize["mean"]],
            "sd": [float(v) for v in standardize["sd"]],
        },
        "machines": [_machine_to_json(m) for m in machines],
    }
    write_json(path, obj)


def load_model(path):
    """Returns (model, feature_names, standardize) from a model artifact."""
    obj = read_json(path)
    if obj.get("format") != MODEL_FORMAT:
        raise DataFormatError(f"not a {MODEL_FORMAT} artifact", path=str(path))
    if int(obj.get("version", -1)) > FORMAT_VERSION:
        raise DataFormatError("model version is newer than this build", path=str(path))
    machines = [_machine_from_json(m) for m in obj["machines"]]
    classes = list(obj["classes"])
    if len(classes) == 2 and len(machines) == 1:
        model = machines[0]
    else:
        model = MulticlassModel(machines=machines, classes=classes)
    standardize = {
        "mean": np.asarray(obj["standardize"]["mean"], dtype=float),
        "sd": np.asarray(obj["standardize"]["sd"], dtype=float),
    }
    return model, list(obj["feature_names"]), standardize


def eval_result_to_json(
    result: EvalResult, name: str = "", protocol: dict | None = None,
    feature_case: list | None = None,
) -> dict:
    return {
        "format": EVAL_FORMAT,
        "version": FORMAT_VERSION,
        "name": name,
        "classes": [str(c) for c in result.classes],
        "ccr": float(result.ccr),
        "per_fold": [float(v) for v in result.per_fold],
        "confusion": [[int(v) for v in row] for row in result.confusion],
        "protocol": protocol or {},
        "feature_case": feature_case or [],
    }


def load_eval_result(path) -> dict:
    obj = read_json(path)
    if obj.get("format") != EVAL_FORMAT:
        raise DataFormatError(f"not a {EVAL_FORMAT} artifact", path=str(path))
    return obj
