"""Command-line entry points.

Five subcommands: ``analyze`` (offset-misalignment study), ``adapt``
(generator adaptation run), ``evaluate`` (metric suite over a finished run
directory), ``prompt-study`` (template-misalignment table) and ``report``
(concept-shift series plus alleviation comparison for a run directory).

Configs are JSON objects; ``--set key=value`` overrides apply last and
values parse as JSON with a plain-string fallback. Unknown keys are
rejected. Every command writes a resolved-config snapshot into its output
directory, and re-running from that snapshot reproduces the primary CSV
outputs byte for byte. Exit codes: 0 success, 1 validation error, 2
runtime failure; error messages go to standard error.

Schedule fields accept fractions: a t_thresh or t_int strictly between 0
and 1 resolves to that fraction of t_adapt. Defaults follow the training
recipe: t_thresh half of t_adapt, t_int a tenth, batch size 2, 4 context
tokens, 200 prompt iterations, learning rates 0.002.

The AIR_CACHE_DIR environment variable gives relative embedding-cache
paths a base directory for ``analyze`` with dataset="cache".
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_TEMPLATE,
    ClassConceptDataset,
    StudyConfig,
    prompt_augmentation_study,
    run_misalignment_study,
    write_template_rows_csv,
)
from .backends import ToyEncoder
from .embeddings import cache_load
from .engine import (
    DEFAULT_INIT_TEXT,
    AdaptationConfig,
    Backends,
    config_from_doc,
    list_anchor_indices,
    list_checkpoints,
    load_anchor,
    load_checkpoint_params,
    read_config_doc,
    run_adaptation,
    sample_generator_embeddings,
    sample_generator_images,
)
from .errors import AirError, ConfigError, ParseError, UnknownKeyError
from .fileio import atomic_write_json
from .metrics import (
    DistanceReport,
    GaussianStats,
    concept_shift_curve,
    encoder_distance,
    frechet_distance,
    intra_cluster_diversity,
    misalignment_vs_ground_truth,
    write_metric_reports_csv,
    write_series_csv,
)
from .scenarios import SyntheticPairFamily, build_scenario

DEFAULT_T_ADAPT = 2000
DEFAULT_SCENARIO = "rotated_text"
DEFAULT_PROMPT_TEMPLATES = (
    "a photo of a {label}",
    "an image of a {label}",
    "a drawing of a {label}",
    "{label}",
)

_ADAPT_KEYS = set(AdaptationConfig.__dataclass_fields__) | {"scenario", "scenario_params",
                                                            "backend"}
_ANALYZE_KEYS = {
    "dataset", "n_pairs", "seed", "min_images", "templates", "encoder",
    "amplitude", "base_noise", "dim", "images_per_concept", "image_jitter",
    "image_cache", "text_cache", "template",
}
_EVALUATE_KEYS = {"n_samples", "k_clusters", "seed", "run_dir"}
_REPORT_KEYS = {"n_samples", "seed", "metric", "run_dir"}
_PROMPT_STUDY_KEYS = {"source_text", "target_label", "templates", "seed", "n_images"}


@dataclass(frozen=True)
class CommandConfig:
    command: str
    config_path: str | None
    overrides: tuple[str, ...]
    output_dir: str | None
    seed: int | None


# ---------------------------------------------------------------------------
# config plumbing


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(overrides) -> dict:
    out = {}
    for item in overrides or ():
        if "=" not in item:
            raise ParseError(f"override {item!r} is not of the form key=value")
        key, _, value = item.partition("=")
        key = key.strip()
        if not key:
            raise ParseError(f"override {item!r} has an empty key")
        out[key] = _coerce(value)
    return out


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"config {p} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"config root must be a JSON object, got {type(doc).__name__}")
    return doc


def _merged_doc(path, overrides, known: set[str], command: str | None = None) -> dict:
    """Merge config file and overrides, rejecting unknown keys.

    Written snapshots carry a "command" marker; it is accepted back here,
    checked against the running command, so every config.json a command
    writes can be replayed directly with --config.
    """
    doc = _load_config_file(path)
    doc.update(parse_overrides(overrides))
    written_by = doc.pop("command", None)
    if written_by is not None and command is not None and written_by != command:
        raise ConfigError(
            f"config snapshot came from {written_by!r}, not from {command!r}")
    unknown = sorted(set(doc) - known)
    if unknown:
        raise UnknownKeyError(f"unknown config keys: {', '.join(unknown)}")
    return doc


def _fraction_of(value, t_adapt: int, name: str) -> int:
    """Values strictly between 0 and 1 resolve as a fraction of t_adapt."""
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if 0.0 < v < 1.0:
        return int(round(v * t_adapt))
    if v != int(v):
        raise ConfigError(f"{name} must be an integer or a fraction in (0, 1), got {value!r}")
    return int(v)


def parse_config(path, overrides, seed: int | None = None,
                 baseline: bool = False) -> tuple[AdaptationConfig, dict]:
    """Resolve an adaptation config: file, then overrides, then defaults."""
    doc = _merged_doc(path, overrides, _ADAPT_KEYS)

    t_adapt = int(doc.get("t_adapt", DEFAULT_T_ADAPT))
    t_thresh = (_fraction_of(doc["t_thresh"], t_adapt, "t_thresh")
                if "t_thresh" in doc else t_adapt // 2)
    t_int = (_fraction_of(doc["t_int"], t_adapt, "t_int")
             if "t_int" in doc else max(1, t_adapt // 10))

    cfg = AdaptationConfig(
        t_adapt=t_adapt,
        t_thresh=t_thresh,
        t_int=t_int,
        eta=float(doc.get("eta", 0.002)),
        batch_size=int(doc.get("batch_size", 2)),
        seed=int(seed if seed is not None else doc.get("seed", 0)),
        source_text=str(doc.get("source_text", "")),
        target_text=str(doc.get("target_text", "")),
        baseline_mode=bool(doc.get("baseline_mode", False) or baseline),
        m_tokens=int(doc.get("m_tokens", 4)),
        k_iter=int(doc.get("k_iter", 200)),
        mu=float(doc.get("mu", 0.002)),
        n_pairs=int(doc.get("n_pairs", 1000)),
        init_text=str(doc.get("init_text", DEFAULT_INIT_TEXT)),
        label_mode=str(doc.get("label_mode", "interpolate")),
        prompt_learning=str(doc.get("prompt_learning", "align")),
    )
    selectors = {
        "scenario": str(doc.get("scenario", DEFAULT_SCENARIO)),
        "scenario_params": dict(doc.get("scenario_params", {})),
        "backend": str(doc["backend"]) if "backend" in doc else None,
    }
    cfg.validate()
    return cfg, selectors


def _scenario_for(selectors: dict):
    params = selectors.get("scenario_params", {})
    return build_scenario(selectors.get("scenario", DEFAULT_SCENARIO), **params)


def _out_dir(args, default: str) -> Path:
    out = Path(args.out) if args.out else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_snapshot(out: Path, command: str, doc: dict) -> None:
    atomic_write_json(out / "config.json", {"command": command, **doc})


def _print(line: str) -> None:
    sys.stdout.write(line + "\n")


# ---------------------------------------------------------------------------
# commands: each prepare_* validates and returns the thunk that does the work


def prepare_adapt(args):
    cfg, selectors = parse_config(args.config, args.set, seed=args.seed,
                                  baseline=args.baseline)
    scenario = _scenario_for(selectors)
    _check_backend_flag(args, scenario)
    config_backend = selectors.get("backend")
    if config_backend and config_backend != scenario.encoder.name:
        raise ConfigError(
            f"scenario {scenario.name!r} runs on encoder {scenario.encoder.name!r}, "
            f"not {config_backend!r}"
        )
    if not cfg.source_text:
        cfg = replace(cfg, source_text=scenario.source_text)
    if not cfg.target_text:
        cfg = replace(cfg, target_text=scenario.target_text)
    cfg.validate()
    out = _out_dir(args, "run")
    selectors_doc = {
        "scenario": scenario.name,
        "scenario_params": scenario.params,
        "backend": scenario.encoder.name,
    }

    def run():
        backends = Backends(encoder=scenario.encoder,
                            source_generator=scenario.source_generator)
        state = run_adaptation(cfg, backends, run_dir=out, selectors=selectors_doc)
        last = state.history[-1] if state.history else None
        suffix = f", final loss {last.loss_total!r}" if last else ""
        _print(f"adapt: {state.t_next} steps, {len(state.anchors)} anchors, "
               f"run directory {out}{suffix}")

    return run


def _rebuild_run(run_dir: Path):
    """Scenario, config and backends for a finished run directory."""
    doc = read_config_doc(run_dir)
    cfg = config_from_doc(doc)
    scenario = build_scenario(doc.get("scenario", DEFAULT_SCENARIO),
                              **doc.get("scenario_params", {}))
    return cfg, scenario


def _generator_at(run_dir: Path, scenario, t_next: int):
    generator = scenario.source_generator.clone()
    generator.set_parameters(load_checkpoint_params(run_dir, t_next))
    return generator


def _check_backend_flag(args, scenario) -> None:
    if args.backend and args.backend != scenario.encoder.name:
        raise ConfigError(
            f"scenario {scenario.name!r} runs on encoder {scenario.encoder.name!r}, "
            f"not {args.backend!r}"
        )


def prepare_evaluate(args):
    doc = _merged_doc(args.config, args.set, _EVALUATE_KEYS)
    run_dir = Path(args.run_dir)
    if not (run_dir / "config.json").is_file():
        raise ConfigError(f"{run_dir} is not a run directory (no config.json)")
    cfg, scenario = _rebuild_run(run_dir)
    _check_backend_flag(args, scenario)
    steps = list_checkpoints(run_dir)
    if not steps:
        raise ConfigError(f"{run_dir} has no checkpoints to evaluate")
    n_samples = int(doc.get("n_samples", 256))
    k_clusters = int(doc.get("k_clusters", 10))
    seed = int(args.seed if args.seed is not None else doc.get("seed", cfg.seed))
    out = _out_dir(args, str(run_dir / "eval"))

    def run():
        _write_snapshot(out, "evaluate", {
            "run_dir": str(run_dir), "n_samples": n_samples,
            "k_clusters": k_clusters, "seed": seed,
        })
        generator = _generator_at(run_dir, scenario, steps[-1])
        gen_images = sample_generator_images(generator, seed, n_samples)
        ref_images = scenario.real_target_images
        encoder = scenario.encoder
        reports = [encoder_distance(encoder, gen_images, ref_images)]

        gen_emb = encoder.encode_images(gen_images)
        ref_emb = encoder.encode_images(ref_images)
        fd = frechet_distance(GaussianStats.from_samples(gen_emb),
                              GaussianStats.from_samples(ref_emb))
        reports.append(DistanceReport(
            metric="frechet_distance", value=fd, n_generated=len(gen_emb),
            n_reference=len(ref_emb), encoder=encoder.name))

        k = min(k_clusters, len(gen_emb))
        diversity = intra_cluster_diversity(
            list(gen_emb), k,
            lambda a, b: float(np.linalg.norm(
                np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))),
            seed=seed)
        reports.append(DistanceReport(
            metric="intra_cluster_diversity", value=diversity,
            n_generated=len(gen_emb), n_reference=0, encoder=encoder.name))

        write_metric_reports_csv(reports, out / "metrics.csv", run_id=run_dir.name)
        for r in reports:
            _print(f"evaluate: {r.metric} = {r.value!r}")
        _print(f"evaluate: wrote {out / 'metrics.csv'}")

    return run


def prepare_report(args):
    doc = _merged_doc(args.config, args.set, _REPORT_KEYS)
    run_dir = Path(args.run_dir)
    if not (run_dir / "config.json").is_file():
        raise ConfigError(f"{run_dir} is not a run directory (no config.json)")
    cfg, scenario = _rebuild_run(run_dir)
    _check_backend_flag(args, scenario)
    steps = list_checkpoints(run_dir)
    if len(steps) < 2:
        raise ConfigError(
            f"{run_dir} has {len(steps)} checkpoint(s); the shift curve needs >= 2"
        )
    metric = str(doc.get("metric", "clip_distance"))
    if metric not in ("clip_distance", "frechet"):
        raise ConfigError(f"metric must be clip_distance|frechet, got {metric!r}")
    n_samples = int(doc.get("n_samples", 256))
    seed = int(args.seed if args.seed is not None else doc.get("seed", cfg.seed))
    out = _out_dir(args, str(run_dir / "report"))

    def run():
        _write_snapshot(out, "report", {
            "run_dir": str(run_dir), "n_samples": n_samples,
            "seed": seed, "metric": metric,
        })
        encoder = scenario.encoder
        reference = scenario.reference_embeddings()
        checkpoints = []
        for t_next in steps:
            generator = _generator_at(run_dir, scenario, t_next)
            emb = sample_generator_embeddings(generator, encoder, seed, n_samples)
            checkpoints.append((t_next, emb))
        series = concept_shift_curve(checkpoints, reference, metric=metric)
        write_series_csv(series, metric, out / "concept_shift.csv")

        gen_source = sample_generator_images(scenario.source_generator, seed, n_samples)
        refs = scenario.real_target_images
        e_target = encoder.encode_text(cfg.target_text).values.astype(np.float64)
        e_source = encoder.encode_text(cfg.source_text).values.astype(np.float64)
        rows = [DistanceReport(
            metric="misalignment_source",
            value=misalignment_vs_ground_truth(encoder, e_target - e_source,
                                               gen_source, refs),
            n_generated=len(gen_source), n_reference=len(refs),
            encoder=encoder.name)]
        anchor_indices = list_anchor_indices(run_dir)
        if anchor_indices:
            last = load_anchor(run_dir, anchor_indices[-1])
            e_prompt = encoder.encode_tokens(
                last.prompt.full_sequence()).values.astype(np.float64)
            rows.append(DistanceReport(
                metric="misalignment_refined",
                value=misalignment_vs_ground_truth(encoder, e_target - e_prompt,
                                                   gen_source, refs),
                n_generated=len(gen_source), n_reference=len(refs),
                encoder=encoder.name))
        write_metric_reports_csv(rows, out / "alleviation.csv", run_id=run_dir.name)

        _print(f"report: {len(series)} shift points ({metric}), "
               f"{len(rows)} alleviation rows, output {out}")

    return run


def _resolve_cache_path(value: str) -> Path:
    p = Path(value)
    base = os.environ.get("AIR_CACHE_DIR")
    if not p.is_absolute() and base:
        return Path(base) / p
    return p


def prepare_analyze(args):
    doc = _merged_doc(args.config, args.set, _ANALYZE_KEYS)
    seed = int(args.seed if args.seed is not None else doc.get("seed", 0))
    templates = doc.get("templates", [DEFAULT_TEMPLATE])
    if isinstance(templates, str):
        templates = [templates]
    scfg = StudyConfig(
        dataset=str(doc.get("dataset", "synthetic")),
        n_pairs=int(doc.get("n_pairs", 5000)),
        seed=seed,
        min_images=int(doc.get("min_images", 10)),
        templates=tuple(templates),
        encoder=str(doc.get("encoder", args.backend or "toy")),
    )
    if scfg.dataset == "synthetic":
        source = SyntheticPairFamily(
            amplitude=float(doc.get("amplitude", 0.5)),
            base_noise=float(doc.get("base_noise", 0.02)),
            dim=int(doc.get("dim", 16)),
            images_per_concept=int(doc.get("images_per_concept", 12)),
            image_jitter=float(doc.get("image_jitter", 0.01)),
            seed=seed,
        )
        resolved = {"dataset": "synthetic", "n_pairs": scfg.n_pairs, "seed": seed,
                    "min_images": scfg.min_images, "templates": list(scfg.templates),
                    "encoder": scfg.encoder, "amplitude": source.amplitude,
                    "base_noise": source.base_noise, "dim": source.dim,
                    "images_per_concept": source.images_per_concept,
                    "image_jitter": source.image_jitter}
    elif scfg.dataset == "cache":
        for key in ("image_cache", "text_cache"):
            if key not in doc:
                raise ConfigError(f"dataset 'cache' requires config key {key}")
        image_path = _resolve_cache_path(str(doc["image_cache"]))
        text_path = _resolve_cache_path(str(doc["text_cache"]))
        for p in (image_path, text_path):
            if not p.is_file():
                raise ConfigError(f"embedding cache not found: {p}")
        template = str(doc.get("template", DEFAULT_TEMPLATE))
        source = ClassConceptDataset.from_caches(cache_load(image_path),
                                                 cache_load(text_path),
                                                 template=template)
        resolved = {"dataset": "cache", "n_pairs": scfg.n_pairs, "seed": seed,
                    "min_images": scfg.min_images, "templates": list(scfg.templates),
                    "encoder": scfg.encoder, "image_cache": str(image_path),
                    "text_cache": str(text_path), "template": template}
    else:
        raise ConfigError(f"dataset must be synthetic|cache, got {scfg.dataset!r}")
    out = _out_dir(args, "study")

    def run():
        _write_snapshot(out, "analyze", resolved)
        result = run_misalignment_study(scfg, source, out_dir=out)
        _print(f"analyze: spearman rho = {result.rho!r} over "
               f"{len(result.records)} pairs, output {out}")

    return run


def prepare_prompt_study(args):
    doc = _merged_doc(args.config, args.set, _PROMPT_STUDY_KEYS)
    if args.backend not in (None, "toy"):
        raise ConfigError(f"prompt-study supports the 'toy' backend, got {args.backend!r}")
    seed = int(args.seed if args.seed is not None else doc.get("seed", 0))
    source_text = str(doc.get("source_text", "photo"))
    target_label = str(doc.get("target_label", "sketch"))
    templates = doc.get("templates", list(DEFAULT_PROMPT_TEMPLATES))
    if isinstance(templates, str):
        templates = [templates]
    n_images = int(doc.get("n_images", 64))
    if n_images < 1:
        raise ConfigError(f"n_images must be >= 1, got {n_images}")
    out = _out_dir(args, "prompt-study")

    def run():
        _write_snapshot(out, "prompt-study", {
            "source_text": source_text, "target_label": target_label,
            "templates": list(templates), "seed": seed, "n_images": n_images,
        })
        backend = ToyEncoder(seed)
        rng = np.random.default_rng([seed, 0xA19])
        alpha = rng.standard_normal((n_images, backend.image_dim))
        beta = alpha + rng.standard_normal(backend.image_dim)
        rows = prompt_augmentation_study(
            backend, source_text, target_label, list(templates),
            backend.encode_images(alpha.astype(np.float32)),
            backend.encode_images(beta.astype(np.float32)))
        write_template_rows_csv(rows, out / "templates.csv")
        flagged = sum(1 for r in rows if r.flagged)
        _print(f"prompt-study: {len(rows)} templates, {flagged} flagged, output {out}")

    return run


# ---------------------------------------------------------------------------
# parser and entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airkit",
        description="Zero-shot generator adaptation with anchor-refined text "
                    "directions, plus the offset-misalignment diagnostics.",
    )
    parser.add_argument("--version", action="version", version=f"airkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_run_dir=False):
        if needs_run_dir:
            p.add_argument("run_dir", help="run directory produced by 'adapt'")
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="config override, repeatable; value parsed as JSON "
                            "with plain-string fallback")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--backend", default=None, help="encoder backend name")

    p = sub.add_parser("analyze", help="offset-misalignment correlation study")
    common(p)
    p.set_defaults(prepare=prepare_analyze)

    p = sub.add_parser("adapt", help="run generator adaptation")
    common(p)
    p.add_argument("--baseline", action="store_true",
                   help="directional loss only: no anchors, no adaptive loss")
    p.set_defaults(prepare=prepare_adapt)

    p = sub.add_parser("evaluate", help="metric suite over a run directory")
    common(p, needs_run_dir=True)
    p.set_defaults(prepare=prepare_evaluate)

    p = sub.add_parser("prompt-study", help="template misalignment table")
    common(p)
    p.set_defaults(prepare=prepare_prompt_study)

    p = sub.add_parser("report", help="concept-shift and alleviation reports")
    common(p, needs_run_dir=True)
    p.set_defaults(prepare=prepare_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    command = CommandConfig(command=args.command, config_path=args.config,
                            overrides=tuple(args.set), output_dir=args.out,
                            seed=args.seed)

    try:
        thunk = args.prepare(args)
    except AirError as exc:
        sys.stderr.write(f"error: {command.command}: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"error: {command.command}: {exc}\n")
        return 1

    try:
        thunk()
    except Exception as exc:  # noqa: BLE001 - boundary maps failures to exit codes
        sys.stderr.write(f"runtime failure: {command.command}: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
