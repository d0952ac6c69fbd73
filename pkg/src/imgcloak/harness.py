"""Batch evaluation: dataset ingestion, attack + baseline execution, metric
aggregation, parameter sweeps, and report persistence.

Reports are fully deterministic under a fixed seed: JSON is written with
sorted keys and aggregates are recomputable (and re-verified on load) from the
per-image records.
"""

from __future__ import annotations

import csv
import json
import math
import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from .attack import AttackConfig, hide_all, hide_sensitive
from .baselines import BaselineSpec, apply_baseline
from .detector.scenes import load_image_png, quantize_image, save_image_png
from .detector.types import BoxGeometry, Detection, ImageTensor
from .errors import AttackError, DatasetError, InvalidInputError, ReportIntegrityError
from .metrics import (
    DEGENERATE_DENOMINATOR,
    ImageOutcome,
    MatchCriterion,
    MetricValue,
    SsimParams,
    leakage_all,
    leakage_sensitive,
    psnr,
    ssim,
    success_rate_all,
    success_rate_sensitive,
)

REPORT_FORMAT_VERSION = 1
ATTACK_METHOD = "adversarial"
SWEEPABLE_PARAMETERS = ("epsilon", "threshold", "baseline_parameter")


# ---------------------------------------------------------------------------
# dataset


@dataclass(frozen=True)
class DatasetEntry:
    image_id: str
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class DatasetManifest:
    root: str
    entries: tuple[DatasetEntry, ...]
    category_names: tuple[str, ...]
    annotations: dict[str, tuple[tuple[BoxGeometry, int], ...]] | None

    def load_image(self, image_id: str) -> ImageTensor:
        entry = next((e for e in self.entries if e.image_id == image_id), None)
        if entry is None:
            raise DatasetError(f"unknown image id {image_id!r}")
        return load_image_png(os.path.join(self.root, "images", entry.file_name))

    def ground_truth(self, image_id: str):
        if self.annotations is None:
            return None
        return self.annotations.get(image_id, ())


def load_dataset(path: str, detector_categories=None) -> DatasetManifest:
    """Load an image directory with a COCO-style annotation subset.

    Annotation category names are remapped by name onto detector_categories
    when given; unmappable names raise with the offending entry named.
    """
    ann_path = os.path.join(path, "annotations.json")
    if not os.path.exists(ann_path):
        raise DatasetError(f"no annotations.json under {path}")
    try:
        with open(ann_path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed annotations.json: {exc}") from exc

    categories = {c["id"]: c["name"] for c in payload.get("categories", [])}
    names = tuple(categories[k] for k in sorted(categories))
    target = tuple(detector_categories) if detector_categories is not None else names
    entries = []
    ids = set()
    for img in payload.get("images", []):
        image_id = f"{img['id']:05d}" if isinstance(img["id"], int) else str(img["id"])
        if image_id in ids:
            raise DatasetError(f"duplicate image id {image_id!r}")
        ids.add(image_id)
        file_path = os.path.join(path, "images", img["file_name"])
        if not os.path.exists(file_path):
            raise DatasetError(f"image file missing for id {image_id!r}: {img['file_name']}")
        entries.append(DatasetEntry(image_id, img["file_name"], int(img["width"]), int(img["height"])))
    raw_ids = {f"{img['id']:05d}" if isinstance(img["id"], int) else str(img["id"]): img["id"] for img in payload.get("images", [])}
    by_raw = {v: k for k, v in raw_ids.items()}

    annotations: dict[str, list] = {e.image_id: [] for e in entries}
    for ann in payload.get("annotations", []):
        image_id = by_raw.get(ann["image_id"])
        if image_id is None:
            raise DatasetError(f"annotation {ann.get('id')} references missing image id {ann['image_id']}")
        name = categories.get(ann["category_id"])
        if name is None:
            raise DatasetError(f"annotation {ann.get('id')} references unknown category {ann['category_id']}")
        if name not in target:
            raise DatasetError(f"annotation {ann.get('id')} category {name!r} not in detector categories")
        x, y, w, h = ann["bbox"]
        annotations[image_id].append((BoxGeometry(x, y, x + w, y + h), target.index(name)))

    has_annotations = bool(payload.get("annotations"))
    return DatasetManifest(
        root=path,
        entries=tuple(entries),
        category_names=target,
        annotations={k: tuple(v) for k, v in annotations.items()} if has_annotations else None,
    )


# ---------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class RunConfig:
    attack: AttackConfig
    baselines: tuple[BaselineSpec, ...] = ()
    sensitive_policy: str = "fixed"  # fixed | per_image | all_predetected
    sensitive_categories: tuple[int, ...] = ()
    per_image_sensitive: dict[str, tuple[int, ...]] | None = None
    target_category: int | None = None  # sensitive mode disguise class
    criterion: MatchCriterion = field(default_factory=MatchCriterion)
    ssim_params: SsimParams = field(default_factory=SsimParams)
    seed: int = 0

    def __post_init__(self):
        if self.sensitive_policy not in ("fixed", "per_image", "all_predetected"):
            raise InvalidInputError(f"unknown sensitive_policy {self.sensitive_policy!r}")
        if self.attack.mode == "sensitive":
            if self.target_category is None:
                raise InvalidInputError("sensitive mode requires target_category")
            if self.sensitive_policy == "fixed" and not self.sensitive_categories:
                raise InvalidInputError("fixed sensitive policy requires sensitive_categories")
            if self.sensitive_policy == "per_image" and not self.per_image_sensitive:
                raise InvalidInputError("per_image sensitive policy requires per_image_sensitive")
        object.__setattr__(self, "baselines", tuple(self.baselines))
        object.__setattr__(self, "sensitive_categories", tuple(int(c) for c in self.sensitive_categories))

    def to_dict(self) -> dict:
        return {
            "attack": {
                "mode": self.attack.mode,
                "epsilon": self.attack.epsilon,
                "threshold": self.attack.threshold,
                "max_iterations": self.attack.max_iterations,
                "step_size": self.attack.step_size,
                "total_epsilon": self.attack.total_epsilon,
            },
            "baselines": [b.to_dict() for b in self.baselines],
            "sensitive_policy": self.sensitive_policy,
            "sensitive_categories": list(self.sensitive_categories),
            "target_category": self.target_category,
            "criterion": self.criterion.to_dict(),
            "ssim_params": self.ssim_params.to_dict(),
            "seed": self.seed,
        }


@dataclass
class EvaluationReport:
    format_version: int
    config: dict
    records: list[dict]
    tables: list[dict]
    curves: dict | None = None
    environment: dict = field(default_factory=dict)
    adversarial_images: dict[str, ImageTensor] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "config": self.config,
            "records": self.records,
            "tables": self.tables,
            "curves": self.curves,
            "environment": self.environment,
        }


# ---------------------------------------------------------------------------
# per-image execution


def _detections_json(dets) -> list[dict]:
    return [d.to_dict() for d in dets]


def _detections_from_json(rows) -> tuple[Detection, ...]:
    return tuple(Detection.from_dict(r) for r in rows)


def _prenms_scores(detector, image: ImageTensor) -> list[list]:
    """Per-proposal [category, best non-background score] before thresholding."""
    proposals = detector.propose(image)
    matrix = detector.classify(image, proposals)
    if matrix.num_proposals == 0:
        return []
    fg = matrix.scores[:, : detector.background_index]
    cats = fg.argmax(axis=1)
    return [[int(c), float(fg[i, c])] for i, c in enumerate(cats)]


def _quality(original: ImageTensor, processed: ImageTensor, ssim_params) -> dict:
    value = psnr(original, processed)
    return {
        "psnr": None if math.isinf(value) else value,
        "psnr_infinite": math.isinf(value),
        "ssim": ssim(original, processed, ssim_params),
    }


def _sensitive_for(config: RunConfig, image_id: str, pre_detections) -> tuple[int, ...]:
    if config.sensitive_policy == "fixed":
        return config.sensitive_categories
    if config.sensitive_policy == "per_image":
        return tuple(config.per_image_sensitive.get(image_id, ()))
    return tuple(sorted({d.category_index for d in pre_detections}))


def _baseline_seeded(spec: BaselineSpec, config: RunConfig, image_id: str) -> BaselineSpec:
    if spec.method != "additive_noise":
        return spec
    derived = (config.seed * 1_000_003 + zlib.crc32(image_id.encode())) % 2**31
    return BaselineSpec(spec.method, spec.parameter, derived)


def _run_one(detector, image: ImageTensor, image_id: str, ground_truth, config: RunConfig) -> tuple[dict, ImageTensor | None]:
    threshold = config.attack.threshold
    original_dets = detector.detect(image, threshold)
    record: dict = {
        "id": image_id,
        "skip_reason": None,
        "ground_truth": None
        if ground_truth is None
        else [[b.x_min, b.y_min, b.x_max, b.y_max, int(c)] for b, c in ground_truth],
        "sensitive_categories": None,
        "original": {
            "detections": _detections_json(original_dets),
            "prenms": _prenms_scores(detector, image),
        },
        "attack": None,
        "baselines": {},
    }

    adv_image = None
    try:
        if config.attack.mode == "all":
            result = hide_all(detector, image, config.attack)
            sensitive = None
        else:
            sensitive = _sensitive_for(config, image_id, original_dets)
            record["sensitive_categories"] = sorted(sensitive)
            result = hide_sensitive(detector, image, sensitive, config.target_category, config.attack)
    except AttackError as exc:
        record["skip_reason"] = str(exc)
    else:
        adv_image = quantize_image(result.adversarial_image)
        # record what lossless persistence preserves: detections re-run on the
        # quantized image, and success re-verified on them
        adv_dets = detector.detect(adv_image, threshold)
        if config.attack.mode == "all":
            verified = len(adv_dets) == 0
        else:
            verified = all(d.category_index not in sensitive for d in adv_dets)
        record["attack"] = {
            "succeeded": bool(result.succeeded and verified),
            "iterations": result.iterations_used,
            "detections": _detections_json(adv_dets),
            "prenms": _prenms_scores(detector, adv_image),
            **_quality(image, adv_image, config.ssim_params),
        }

    for spec in config.baselines:
        processed = apply_baseline(image, _baseline_seeded(spec, config, image_id))
        record["baselines"][spec.method] = {
            "detections": _detections_json(detector.detect(processed, threshold)),
            **_quality(image, processed, config.ssim_params),
        }
    return record, adv_image


# ---------------------------------------------------------------------------
# aggregation


def _outcomes_for_method(records, config: dict, method: str) -> list[ImageOutcome]:
    mode = config["attack"]["mode"]
    outcomes = []
    for rec in records:
        if method == ATTACK_METHOD:
            if rec["skip_reason"] is not None:
                continue
            dets = _detections_from_json(rec["attack"]["detections"])
        else:
            if method not in rec["baselines"]:
                continue
            dets = _detections_from_json(rec["baselines"][method]["detections"])
        gt = rec["ground_truth"]
        outcomes.append(
            ImageOutcome(
                image_id=rec["id"],
                mode=mode,
                original_detections=_detections_from_json(rec["original"]["detections"]),
                adversarial_detections=dets,
                sensitive_categories=None if mode == "all" else frozenset(rec["sensitive_categories"] or ()),
                ground_truth=None if gt is None else tuple((BoxGeometry(*row[:4]), row[4]) for row in gt),
            )
        )
    return outcomes


def _mean_quality(records, method: str) -> tuple[float | None, float | None, int]:
    psnrs, ssims, infinite = [], [], 0
    for rec in records:
        block = rec["attack"] if method == ATTACK_METHOD else rec["baselines"].get(method)
        if block is None:
            continue
        if block["psnr_infinite"]:
            infinite += 1
        else:
            psnrs.append(block["psnr"])
        ssims.append(block["ssim"])
    mean_psnr = float(np.mean(psnrs)) if psnrs else None
    mean_ssim = float(np.mean(ssims)) if ssims else None
    return mean_psnr, mean_ssim, infinite


def _criterion_from(config: dict) -> MatchCriterion:
    c = config["criterion"]
    return MatchCriterion(c["iou_threshold"], c["require_category_match"])


def aggregate_tables(records, config: dict) -> list[dict]:
    """One row per method; recomputable from the per-image records alone."""
    mode = config["attack"]["mode"]
    criterion = _criterion_from(config)
    methods = [ATTACK_METHOD] + [b["method"] for b in config["baselines"]]
    rows = []
    for method in methods:
        outcomes = _outcomes_for_method(records, config, method)
        flags: list[str] = []
        if not outcomes:
            rows.append(
                {
                    "method": method,
                    "images": 0,
                    "success_rate": None,
                    "leakage": None,
                    "mean_psnr": None,
                    "mean_ssim": None,
                    "infinite_psnr_count": 0,
                    "flags": ["no_outcomes"],
                }
            )
            continue
        if mode == "all":
            success = success_rate_all(outcomes)
            leakage = leakage_all(outcomes)
        else:
            success = success_rate_sensitive(outcomes, criterion)
            leakage = leakage_sensitive(outcomes, criterion)
        flags.extend(success.flags)
        flags.extend(leakage.flags)
        mean_psnr, mean_ssim, infinite = _mean_quality(records, method)
        rows.append(
            {
                "method": method,
                "images": len(outcomes),
                "success_rate": success.value,
                "leakage": leakage.value,
                "mean_psnr": mean_psnr,
                "mean_ssim": mean_ssim,
                "infinite_psnr_count": infinite,
                "flags": sorted(set(flags)),
            }
        )
    return rows


def _environment() -> dict:
    from . import __version__
    from ._accel import USE_NUMBA

    return {"package_version": __version__, "numpy_version": np.__version__, "numba_enabled": USE_NUMBA}


def run_batch(detector, manifest: DatasetManifest, config: RunConfig) -> EvaluationReport:
    """Run the configured attack and baselines over every manifest image."""
    records = []
    adversarial_images = {}
    for entry in sorted(manifest.entries, key=lambda e: e.image_id):
        image = manifest.load_image(entry.image_id)
        record, adv = _run_one(detector, image, entry.image_id, manifest.ground_truth(entry.image_id), config)
        records.append(record)
        if adv is not None:
            adversarial_images[entry.image_id] = adv
    config_dict = config.to_dict()
    return EvaluationReport(
        format_version=REPORT_FORMAT_VERSION,
        config=config_dict,
        records=records,
        tables=aggregate_tables(records, config_dict),
        environment=_environment(),
        adversarial_images=adversarial_images,
    )


# ---------------------------------------------------------------------------
# sweeps


def _replace_parameter(config: RunConfig, parameter: str, value) -> RunConfig:
    from dataclasses import replace

    if parameter == "epsilon":
        attack = AttackConfig(
            epsilon=float(value),
            threshold=config.attack.threshold,
            max_iterations=config.attack.max_iterations,
            mode=config.attack.mode,
            total_epsilon=config.attack.total_epsilon,
        )
        return replace(config, attack=attack)
    if parameter == "baseline_parameter":
        if not config.baselines:
            raise InvalidInputError("baseline_parameter sweep requires at least one baseline")
        new = tuple(BaselineSpec(b.method, value, b.seed) for b in config.baselines)
        return replace(config, baselines=new)
    raise InvalidInputError(f"cannot rerun parameter {parameter!r}")


def _threshold_curves(report: EvaluationReport, values) -> dict:
    """Re-threshold the stored pre-NMS score sets of one completed run.

    The leakage numerator counts adversarial score rows at or above each T;
    the denominator stays fixed at the run's own threshold so the series is a
    literal non-increasing function of T.
    """
    mode = report.config["attack"]["mode"]
    sensitive_by_id = {r["id"]: set(r["sensitive_categories"] or ()) for r in report.records}

    def count(rows, t, sens=None):
        return sum(1 for cat, score in rows if score >= t and (sens is None or cat in sens))

    base_t = report.config["attack"]["threshold"]
    leakage_series = []
    for t in values:
        num = 0
        den = 0
        for rec in report.records:
            if rec["skip_reason"] is not None:
                continue
            sens = sensitive_by_id[rec["id"]] if mode == "sensitive" else None
            num += count(rec["attack"]["prenms"], t, sens)
            den += count(rec["original"]["prenms"], base_t, sens)
        leakage_series.append(0.0 if den == 0 else num / den)
    return {
        "parameter": "threshold",
        "values": [float(v) for v in values],
        "series": {"leakage": leakage_series},
        "note": "re-thresholded pre-NMS scores of a single run; denominator fixed at the run threshold",
    }


def sweep_parameter(detector, manifest: DatasetManifest, config: RunConfig, parameter: str, values) -> EvaluationReport:
    """Evaluate a parameter range.

    epsilon and baseline_parameter rerun the batch per value; threshold runs
    once at the base config and re-thresholds the stored score sets.
    """
    values = list(values)
    if parameter not in SWEEPABLE_PARAMETERS:
        raise InvalidInputError(f"parameter must be one of {SWEEPABLE_PARAMETERS}, got {parameter!r}")
    if len(values) < 2:
        raise InvalidInputError("sweep requires at least 2 values")
    if parameter == "epsilon":
        for v in values:
            AttackConfig(epsilon=float(v), mode=config.attack.mode)  # validates range
    if parameter == "threshold":
        for v in values:
            if not 0.0 < float(v) < 1.0:
                raise InvalidInputError(f"threshold value {v} outside (0, 1)")
    if parameter == "baseline_parameter":
        for v in values:
            for b in config.baselines:
                BaselineSpec(b.method, v, b.seed)  # validates per method

    if parameter == "threshold":
        report = run_batch(detector, manifest, config)
        report.curves = _threshold_curves(report, values)
        return report

    series: dict[str, list] = {"success_rate": [], "leakage": [], "mean_psnr": [], "mean_ssim": []}
    last = None
    for v in values:
        last = run_batch(detector, manifest, _replace_parameter(config, parameter, v))
        row = last.tables[0] if parameter == "epsilon" else last.tables[1]
        for key in series:
            series[key].append(row[key])
    last.curves = {"parameter": parameter, "values": [float(v) for v in values], "series": series}
    return last


def per_category_leakage(report: EvaluationReport, categories) -> list[dict]:
    """Leakage restricted to each category, from sensitive-mode records."""
    if report.config["attack"]["mode"] != "sensitive":
        raise InvalidInputError("per_category_leakage requires a sensitive-mode report")
    criterion = _criterion_from(report.config)
    rows = []
    for cat in categories:
        cat = int(cat)
        outcomes = []
        for rec in report.records:
            if rec["skip_reason"] is not None or rec["ground_truth"] is None:
                continue
            outcomes.append(
                ImageOutcome(
                    image_id=rec["id"],
                    mode="sensitive",
                    original_detections=_detections_from_json(rec["original"]["detections"]),
                    adversarial_detections=_detections_from_json(rec["attack"]["detections"]),
                    sensitive_categories=frozenset({cat}),
                    ground_truth=tuple((BoxGeometry(*row[:4]), row[4]) for row in rec["ground_truth"]),
                )
            )
        if not outcomes:
            rows.append({"category": cat, "leakage": 0.0, "flags": [DEGENERATE_DENOMINATOR]})
            continue
        value = leakage_sensitive(outcomes, criterion)
        rows.append({"category": cat, "leakage": value.value, "flags": sorted(value.flags)})
    return rows


# ---------------------------------------------------------------------------
# persistence


def _json_bytes(data: dict) -> bytes:
    return json.dumps(data, sort_keys=True, indent=1, allow_nan=False).encode()


def write_report(report: EvaluationReport, directory: str):
    """Persist report.json, tables.csv, optional curves.csv, and lossless
    adversarial images under images/."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "report.json"), "wb") as fh:
        fh.write(_json_bytes(report.to_json_dict()))
    table_fields = ["method", "images", "success_rate", "leakage", "mean_psnr", "mean_ssim", "infinite_psnr_count", "flags"]
    with open(os.path.join(directory, "tables.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=table_fields)
        writer.writeheader()
        for row in report.tables:
            writer.writerow({**row, "flags": ";".join(row["flags"])})
    if report.curves is not None:
        with open(os.path.join(directory, "curves.csv"), "w", newline="") as fh:
            metrics = sorted(report.curves["series"])
            writer = csv.writer(fh)
            writer.writerow([report.curves["parameter"], *metrics])
            for i, v in enumerate(report.curves["values"]):
                writer.writerow([v, *[report.curves["series"][m][i] for m in metrics]])
    if report.adversarial_images:
        img_dir = os.path.join(directory, "images")
        os.makedirs(img_dir, exist_ok=True)
        for image_id, image in sorted(report.adversarial_images.items()):
            save_image_png(image, os.path.join(img_dir, f"{image_id}.png"))


def read_report(directory: str) -> EvaluationReport:
    """Load a persisted report, re-verify aggregates, reload images."""
    path = os.path.join(directory, "report.json")
    if not os.path.exists(path):
        raise ReportIntegrityError(f"no report.json under {directory}")
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format_version") != REPORT_FORMAT_VERSION:
        raise ReportIntegrityError(
            f"report format version {data.get('format_version')} incompatible with {REPORT_FORMAT_VERSION}"
        )
    expected = aggregate_tables(data["records"], data["config"])
    for stored, recomputed in zip(data["tables"], expected):
        if stored != recomputed:
            raise ReportIntegrityError(f"aggregate row for method {stored.get('method')!r} fails re-verification")
    if len(data["tables"]) != len(expected):
        raise ReportIntegrityError("aggregate table row count mismatch")
    images = {}
    img_dir = os.path.join(directory, "images")
    if os.path.isdir(img_dir):
        for name in sorted(os.listdir(img_dir)):
            if name.endswith(".png"):
                images[name[:-4]] = load_image_png(os.path.join(img_dir, name))
    return EvaluationReport(
        format_version=data["format_version"],
        config=data["config"],
        records=data["records"],
        tables=data["tables"],
        curves=data.get("curves"),
        environment=data.get("environment", {}),
        adversarial_images=images,
    )
