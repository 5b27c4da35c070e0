"""Command-line entry point.

Subcommands cover the pipeline stages individually (preprocess,
segment, eval) and composed (run), plus the toggle-grid study (ablate).
Exit codes: 0 success, 1 usage error, 2 runtime error. Tables go to
standard output with metric fractions rendered as two-decimal
percentages; logs go to standard error; machine-readable artifacts stay
as fractions in [0, 1].

The backend is chosen explicitly with ``--backend`` (or the
IAPAS_BACKEND environment variable): ``replay:DIR`` serves recorded
fixtures, ``http(s)://...`` talks to a live model server, and
``record:DIR@URL`` proxies to a live server while writing fixtures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Any, Iterator, Sequence

from . import __version__
from .backends import InferenceBackend, RecordingBackend, RemoteBackend, ReplayBackend
from .datasets import DatasetManifest, scan_mvtec_layout
from .errors import ConfigError, IapasError, MetricsError
from .pipeline import (
    PreprocessResult,
    config_digest,
    evaluate_predictions,
    preprocess_category,
    run_ablation,
    run_category,
    segment_category,
    write_json_atomic,
)
from .types import PipelineConfig, validate_config


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _log(message: str) -> None:
    print(message, file=sys.stderr)


@contextmanager
def _stage(name: str) -> Iterator[None]:
    """Prefix pipeline errors with the stage they came from."""
    try:
        yield
    except IapasError as exc:
        raise type(exc)(f"{name}: {exc}") from exc


def resolve_backend(spec: str | None) -> InferenceBackend:
    """Turn a backend spec string into a backend instance.

    Accepts replay:DIR, record:DIR@URL, or an http(s) URL; falls back to
    the IAPAS_BACKEND environment variable when no flag was given.
    """
    if spec is None:
        spec = os.environ.get("IAPAS_BACKEND")
    if not spec:
        raise ConfigError("no backend specified: pass --backend or set IAPAS_BACKEND")
    if spec.startswith("replay:"):
        return ReplayBackend(Path(spec[len("replay:"):]))
    if spec.startswith("record:"):
        target, sep, url = spec[len("record:"):].partition("@")
        if not sep or not target or not url:
            raise ConfigError(f"record backend spec must be record:DIR@URL, got {spec!r}")
        return RecordingBackend(RemoteBackend(url), Path(target))
    if spec.startswith(("http://", "https://")):
        return RemoteBackend(spec)
    raise ConfigError(
        f"unrecognized backend spec {spec!r}: expected replay:DIR, record:DIR@URL, "
        "or an http(s) URL"
    )


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    config = (
        PipelineConfig.from_json_file(args.config) if args.config else PipelineConfig()
    )
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "texture", False):
        config = replace(config, texture_mode=True)
    return validate_config(config)


def _scan(dataset: str) -> DatasetManifest:
    with _stage("scan"):
        return scan_mvtec_layout(dataset)


def _pct(fraction: float) -> str:
    return f"{100.0 * fraction:.2f}"


def _print_metrics_line(label: str, document: dict[str, Any]) -> None:
    print(f"{label}  AP {_pct(document['ap'])}  F1-max {_pct(document['f1_max'])}")


def _cmd_preprocess(args: argparse.Namespace) -> int:
    config = _load_config(args)
    backend = resolve_backend(args.backend)
    manifest = _scan(args.dataset)
    with _stage("preprocess"):
        pre = preprocess_category(manifest.category(args.category), config, backend)
    out_path = Path(args.out) / args.category / "preprocess.json"
    write_json_atomic(out_path, pre.to_json_dict())
    _log(f"wrote {out_path}")
    print(f"{args.category}  prompts: {', '.join(pre.prompt_bundle.final)}")
    print(f"{args.category}  size_threshold: {pre.size_threshold.value:.6f}")
    return 0


def _cmd_segment(args: argparse.Namespace) -> int:
    backend = resolve_backend(args.backend)
    manifest = _scan(args.dataset)
    try:
        raw = json.loads(Path(args.preprocess).read_text(encoding="utf-8"))
        pre = PreprocessResult.from_json_dict(raw)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load preprocess result {args.preprocess}: {exc}") from exc
    with _stage("segment"):
        run_manifest = segment_category(
            manifest, args.category, pre, pre.config_snapshot, backend, args.out, args.jobs
        )
    _log(f"wrote {Path(args.out) / args.category / 'manifest.json'}")
    if isinstance(run_manifest["metrics"], dict):
        _print_metrics_line(args.category, run_manifest["metrics"])
    else:
        _log(f"{args.category}: metrics skipped (no positive pixels)")
    return 0


def _read_config_digest(pred_dir: Path, category: str) -> str:
    manifest_path = pred_dir / category / "manifest.json"
    try:
        return json.loads(manifest_path.read_text(encoding="utf-8"))["config_digest"]
    except (OSError, ValueError, KeyError):
        return "unknown"


def _report_document(
    dataset: str, category: str | None, ap: float, f1: float,
    pixels: int, positives: int, digest: str,
) -> dict[str, Any]:
    return {
        "dataset": dataset,
        "category": category,
        "ap": ap,
        "f1_max": f1,
        "pixels": pixels,
        "positives": positives,
        "pooling": "category",
        "aggregation": "mean-over-categories",
        "config_digest": digest,
    }


def _cmd_eval(args: argparse.Namespace) -> int:
    manifest = _scan(args.dataset)
    pred_dir = Path(args.pred)
    if args.category:
        with _stage("eval"):
            report = evaluate_predictions(manifest, args.category, pred_dir)
        document = _report_document(
            manifest.name, args.category, report.ap, report.f1_max,
            report.pixels, report.positives, _read_config_digest(pred_dir, args.category),
        )
        write_json_atomic(Path(args.report), document)
        _print_metrics_line(args.category, document)
        return 0
    per_category = []
    digests = set()
    for category in manifest.categories:
        try:
            with _stage("eval"):
                report = evaluate_predictions(manifest, category.name, pred_dir)
        except MetricsError as exc:
            _log(f"{category.name}: skipped ({exc})")
            continue
        per_category.append((category.name, report))
        digests.add(_read_config_digest(pred_dir, category.name))
        _print_metrics_line(
            category.name, {"ap": report.ap, "f1_max": report.f1_max}
        )
    if not per_category:
        raise MetricsError("eval: no category produced metrics")
    mean_ap = sum(r.ap for _, r in per_category) / len(per_category)
    mean_f1 = sum(r.f1_max for _, r in per_category) / len(per_category)
    document = _report_document(
        manifest.name, None, mean_ap, mean_f1,
        sum(r.pixels for _, r in per_category),
        sum(r.positives for _, r in per_category),
        digests.pop() if len(digests) == 1 else "mixed",
    )
    write_json_atomic(Path(args.report), document)
    _print_metrics_line("mean", document)
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args)
    backend = resolve_backend(args.backend)
    manifest = _scan(args.dataset)
    names = [args.category] if args.category else [c.name for c in manifest.categories]
    collected = []
    for name in names:
        with _stage("run"):
            run_manifest = run_category(manifest, name, config, backend, args.out, args.jobs)
        if isinstance(run_manifest["metrics"], dict):
            collected.append((name, run_manifest["metrics"]))
            _print_metrics_line(name, run_manifest["metrics"])
        else:
            _log(f"{name}: metrics skipped (no positive pixels)")
    if not args.category and collected:
        mean_ap = sum(m["ap"] for _, m in collected) / len(collected)
        mean_f1 = sum(m["f1_max"] for _, m in collected) / len(collected)
        document = _report_document(
            manifest.name, None, mean_ap, mean_f1,
            sum(m["pixels"] for _, m in collected),
            sum(m["positives"] for _, m in collected),
            config_digest(config),
        )
        write_json_atomic(Path(args.out) / "report.json", document)
        _print_metrics_line("mean", document)
    return 0


_ABLATION_HEADER = ("Step 1-1", "Step 1-3", "Step 2-2", "AP", "F1-max")


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    backend = resolve_backend(args.backend)
    manifest = _scan(args.dataset)
    with _stage("ablate"):
        rows = run_ablation(manifest, args.category, config, backend, args.out, args.jobs)
    write_json_atomic(Path(args.out) / "ablation.json", {"category": args.category, "rows": rows})
    widths = (8, 8, 8, 7, 7)
    print("  ".join(h.ljust(w) for h, w in zip(_ABLATION_HEADER, widths)))
    for row in rows:
        cells = (
            "O" if row["tagging"] else "X",
            "O" if row["llm"] else "X",
            "O" if row["size_filter"] else "X",
            _pct(row["ap"]) if row["ap"] is not None else "-",
            _pct(row["f1_max"]) if row["f1_max"] is not None else "-",
        )
        print("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return 0


def _add_common(parser: argparse.ArgumentParser, *, backend: bool = True) -> None:
    parser.add_argument("--dataset", required=True, help="dataset root directory")
    if backend:
        parser.add_argument(
            "--backend",
            help="replay:DIR, record:DIR@URL, or an http(s) URL "
            "(default: IAPAS_BACKEND environment variable)",
        )
        parser.add_argument("--config", help="pipeline config JSON file")
        parser.add_argument("--seed", type=int, help="override the config seed")
        parser.add_argument(
            "--texture", action="store_true",
            help="texture-mode detector thresholds (unless set in the config)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="iapas", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"iapas {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("preprocess", help="run Stage 1 and write the prompt/threshold JSON")
    _add_common(p)
    p.add_argument("--category", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("segment", help="run Stage 2 from a saved preprocess result")
    _add_common(p)
    p.add_argument("--category", required=True)
    p.add_argument("--preprocess", required=True, help="preprocess.json from the preprocess step")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, help="parallel image workers (default: CPU count)")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("eval", help="score written predictions against ground truth")
    _add_common(p, backend=False)
    p.add_argument("--category", help="single category (default: all, mean-aggregated)")
    p.add_argument("--pred", required=True, help="predictions directory (run/segment output)")
    p.add_argument("--report", required=True, help="report JSON path to write")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("run", help="preprocess + segment + eval")
    _add_common(p)
    p.add_argument("--category", help="single category (default: all)")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("ablate", help="run all six pipeline-switch combinations")
    _add_common(p)
    p.add_argument("--category", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=_cmd_ablate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except IapasError as exc:
        _log(f"error: {exc}")
        return 2
    except OSError as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
