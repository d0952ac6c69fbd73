"""Command-line entry points: protect, evaluate, sweep, dataset, serve."""

from __future__ import annotations

import json
import math
import os
import sys

import click

from .attack import AttackConfig, hide_all, hide_sensitive
from .baselines import METHODS, BaselineSpec
from .detector import (
    ToyDetector,
    generate_corpus,
    load_bundled_detector,
    load_image_png,
    save_corpus,
    save_image_png,
)
from .detector.scenes import quantize_image
from .errors import ImgcloakError
from .harness import (
    RunConfig,
    SWEEPABLE_PARAMETERS,
    load_dataset,
    run_batch,
    sweep_parameter,
    write_report,
)
from .metrics import psnr, ssim


def parse_fraction(text: str) -> float:
    """Accept decimal ('0.0314') or fraction ('8/255') syntax."""
    text = str(text).strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _load_detector(path: str | None) -> ToyDetector:
    return ToyDetector.load(path) if path else load_bundled_detector()


def _category_index(detector: ToyDetector, name: str) -> int:
    shape_names = detector.category_names[: detector.background_index]
    if name not in shape_names:
        raise click.BadParameter(f"unknown category {name!r}; expected one of {shape_names}")
    return shape_names.index(name)


@click.group()
def main():
    """Hide or disguise objects from a detector with crafted perturbations."""


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["all", "sensitive"]), default="all", show_default=True)
@click.option("--epsilon", default="3/255", show_default=True, help="per-step L-inf bound; decimal or k/255")
@click.option("--threshold", default=0.3, show_default=True, type=float)
@click.option("--max-iters", default=150, show_default=True, type=int)
@click.option("--sensitive", multiple=True, help="sensitive category name (repeatable; sensitive mode)")
@click.option("--target-class", default=None, help="disguise category name (sensitive mode)")
@click.option("--detector", "detector_path", default=None, type=click.Path(exists=True))
@click.option("--out", "-o", "out_dir", required=True, type=click.Path())
def protect(inputs, mode, epsilon, threshold, max_iters, sensitive, target_class, detector_path, out_dir):
    """Protect one or more images (or directories of PNGs).

    Writes a lossless adversarial PNG per input plus summary.json; exits 0
    only if every image succeeded.
    """
    det = _load_detector(detector_path)
    try:
        config = AttackConfig(
            epsilon=parse_fraction(epsilon), threshold=threshold, max_iterations=max_iters, mode=mode
        )
        if mode == "sensitive":
            if not sensitive or target_class is None:
                raise click.UsageError("sensitive mode requires --sensitive and --target-class")
            sensitive_idx = [_category_index(det, n) for n in sensitive]
            target_idx = _category_index(det, target_class)
        paths = []
        for item in inputs:
            if os.path.isdir(item):
                paths.extend(
                    os.path.join(item, n) for n in sorted(os.listdir(item)) if n.lower().endswith(".png")
                )
            else:
                paths.append(item)
        if not paths:
            raise click.UsageError("no PNG inputs found")
        os.makedirs(out_dir, exist_ok=True)
        summary = []
        all_ok = True
        for path in paths:
            image = load_image_png(path)
            if mode == "all":
                result = hide_all(det, image, config)
            else:
                result = hide_sensitive(det, image, sensitive_idx, target_idx, config)
            adv = quantize_image(result.adversarial_image)
            out_path = os.path.join(out_dir, os.path.basename(path))
            save_image_png(adv, out_path)
            entry = result.to_json_dict(det.category_names)
            entry["input"] = path
            entry["output"] = out_path
            entry["psnr"] = None if math.isinf(psnr(image, adv)) else psnr(image, adv)
            entry["ssim"] = ssim(image, adv)
            summary.append(entry)
            all_ok &= result.succeeded
            click.echo(f"{path}: {'ok' if result.succeeded else 'FAILED'} ({result.iterations_used} iterations)")
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=1, sort_keys=True)
    except (ImgcloakError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    sys.exit(0 if all_ok else 1)


def _parse_baselines(specs) -> tuple[BaselineSpec, ...]:
    parsed = []
    for text in specs:
        method, _, param = text.partition(":")
        if method not in METHODS:
            raise click.BadParameter(f"unknown baseline {method!r}; expected one of {METHODS}")
        parsed.append(BaselineSpec(method, float(param) if param else None))
    return tuple(parsed)


def _run_config(det, mode, epsilon, threshold, max_iters, sensitive, target_class, baseline, seed) -> RunConfig:
    attack = AttackConfig(
        epsilon=parse_fraction(epsilon), threshold=threshold, max_iterations=max_iters, mode=mode
    )
    kwargs = {}
    if mode == "sensitive":
        if not sensitive or target_class is None:
            raise click.UsageError("sensitive mode requires --sensitive and --target-class")
        kwargs["sensitive_categories"] = tuple(_category_index(det, n) for n in sensitive)
        kwargs["target_category"] = _category_index(det, target_class)
    return RunConfig(attack=attack, baselines=_parse_baselines(baseline), seed=seed, **kwargs)


_shared_eval_options = [
    click.option("--dataset", required=True, type=click.Path(exists=True)),
    click.option("--mode", type=click.Choice(["all", "sensitive"]), default="all", show_default=True),
    click.option("--epsilon", default="3/255", show_default=True),
    click.option("--threshold", default=0.3, show_default=True, type=float),
    click.option("--max-iters", default=150, show_default=True, type=int),
    click.option("--sensitive", multiple=True),
    click.option("--target-class", default=None),
    click.option("--baseline", multiple=True, help="method or method:parameter (repeatable)"),
    click.option("--detector", "detector_path", default=None, type=click.Path(exists=True)),
    click.option("--seed", default=0, show_default=True, type=int),
    click.option("--out", "-o", "out_dir", required=True, type=click.Path()),
]


def _apply_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn

    return wrap


@main.command()
@_apply_options(_shared_eval_options)
def evaluate(dataset, mode, epsilon, threshold, max_iters, sensitive, target_class, baseline, detector_path, seed, out_dir):
    """Run the attack and baselines over a dataset; write a report directory."""
    det = _load_detector(detector_path)
    try:
        manifest = load_dataset(dataset, det.category_names[: det.background_index])
        config = _run_config(det, mode, epsilon, threshold, max_iters, sensitive, target_class, baseline, seed)
        report = run_batch(det, manifest, config)
        write_report(report, out_dir)
    except ImgcloakError as exc:
        raise click.ClickException(str(exc)) from exc
    for row in report.tables:
        click.echo(
            f"{row['method']}: success={row['success_rate']} leakage={row['leakage']} "
            f"psnr={row['mean_psnr']} ssim={row['mean_ssim']}"
        )
    click.echo(f"report written to {out_dir}")


@main.command()
@_apply_options(_shared_eval_options)
@click.option("--param", required=True, type=click.Choice(list(SWEEPABLE_PARAMETERS)))
@click.option("--values", required=True, help="comma-separated values; epsilon accepts k/255")
def sweep(dataset, mode, epsilon, threshold, max_iters, sensitive, target_class, baseline, detector_path, seed, out_dir, param, values):
    """Sweep one parameter over a value list; write report with curves."""
    det = _load_detector(detector_path)
    try:
        manifest = load_dataset(dataset, det.category_names[: det.background_index])
        config = _run_config(det, mode, epsilon, threshold, max_iters, sensitive, target_class, baseline, seed)
        parsed = [parse_fraction(v) for v in values.split(",")]
        report = sweep_parameter(det, manifest, config, param, parsed)
        write_report(report, out_dir)
    except ImgcloakError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"swept {param} over {len(parsed)} values; report written to {out_dir}")


@main.command()
@click.option("--count", default=20, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--full-kind", is_flag=True, help="one circle, square, and triangle per scene")
@click.option("--out", "-o", "out_dir", required=True, type=click.Path())
def dataset(count, seed, full_kind, out_dir):
    """Generate a synthetic annotated scene corpus."""
    corpus = generate_corpus(count, seed=seed, full_kind=full_kind)
    save_corpus(out_dir, corpus)
    click.echo(f"wrote {count} scenes to {out_dir}")


@main.command()
@click.option("--port", default=8571, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--detector", "detector_path", default=None, type=click.Path(exists=True))
@click.option("--frontend", "frontend_dir", default=None, type=click.Path(exists=True), help="built static assets to serve at /")
def serve(port, host, detector_path, frontend_dir):
    """Start the local HTTP service (loopback-only by default)."""
    import uvicorn

    from .service import create_app

    app = create_app(_load_detector(detector_path), frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
