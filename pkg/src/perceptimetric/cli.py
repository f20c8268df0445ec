"""Subcommand front end: feature extraction, delta evaluation, scoring, metrics,
bootstrap, and report assembly.

Every output file is written atomically (temp file + rename) and accompanied
by a ``<output>.manifest.json`` recording the full configuration and the
sha256 of every input, so identical inputs, config, and seed reproduce
identical bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__, featio
from .abx import (
    abx_scores,
    deltas_csv_text,
    evaluate_deltas,
    load_items,
    read_deltas_csv,
    read_scores_csv,
    scores_csv_text,
)
from .errors import PerceptimetricError
from .report import ReportError, build_report
from .runio import (
    atomic_write_text,
    build_manifest,
    sha256_file,
    write_json_atomic,
    write_manifest,
)
from .stats import (
    aggregate,
    bootstrap,
    build_design_matrix,
    fit_probit_lasso,
    load_responses,
    native_effect,
    pairwise_significance,
    select_lambda_cv,
    spearman,
)

DEFAULT_CV_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
DEFAULT_CV_FOLDS = 5


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (PerceptimetricError, ReportError) as exc:
        print(f"perceptimetric: error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, NotADirectoryError) as exc:
        print(f"perceptimetric: error: {exc}", file=sys.stderr)
        return 1


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("PERCEPTIMETRIC_THREADS", "1")))


def _config_echo(args) -> dict:
    skip = {"handler"}
    return {k: (str(v) if isinstance(v, Path) else v)
            for k, v in vars(args).items() if k not in skip}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perceptimetric",
        description="Score speech representations against human phone discrimination.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mfcc", help="compute MFCC features for a directory of WAVs")
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window-ms", type=float, default=25.0)
    p.add_argument("--stride-ms", type=float, default=10.0)
    p.add_argument("--coeffs", type=int, default=13)
    p.add_argument("--mel-filters", type=int, default=40)
    p.add_argument("--fft-size", type=int, default=512)
    p.add_argument("--rate", type=int, default=16000)
    _common_flags(p)
    p.set_defaults(handler=cmd_mfcc)

    p = sub.add_parser("delta", help="evaluate triplet deltas over a feature archive")
    p.add_argument("--features", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--out", required=True)
    _common_flags(p)
    p.set_defaults(handler=cmd_delta)

    p = sub.add_parser("abx", help="aggregate deltas into ABX scores")
    p.add_argument("--deltas", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--group-by", default="subset",
                   choices=["contrast", "subset", "subset-language"])
    p.add_argument("--out", required=True)
    p.add_argument("--label", default=None, help="model label (default: deltas stem)")
    _common_flags(p)
    p.set_defaults(handler=cmd_abx)

    p = sub.add_parser("probit", help="fit the lasso probit and report its ll")
    p.add_argument("--deltas", required=True)
    p.add_argument("--responses", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--lambda", dest="lam", type=float, default=None)
    group.add_argument("--cv", action="store_true",
                       help="pick lambda by cross-validation (also the default)")
    p.add_argument("--cv-grid", default=",".join(str(x) for x in DEFAULT_CV_GRID))
    p.add_argument("--cv-folds", type=int, default=DEFAULT_CV_FOLDS)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default=None)
    _common_flags(p)
    p.set_defaults(handler=cmd_probit)

    p = sub.add_parser("spearman", help="rank correlation at contrast or stimulus level")
    p.add_argument("--deltas", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--level", required=True, choices=["contrast", "stimulus"])
    p.add_argument("--out", required=True)
    p.add_argument("--label", default=None)
    _common_flags(p)
    p.set_defaults(handler=cmd_spearman)

    p = sub.add_parser("native-effect",
                       help="correlate model and human native-language effects")
    p.add_argument("--deltas-fr", required=True)
    p.add_argument("--deltas-en", required=True)
    p.add_argument("--responses", required=True,
                   help="responses CSV holding both language groups")
    p.add_argument("--items", required=True)
    p.add_argument("--level", required=True, choices=["contrast", "stimulus"])
    p.add_argument("--out", required=True)
    p.add_argument("--label", default=None)
    _common_flags(p)
    p.set_defaults(handler=cmd_native_effect)

    p = sub.add_parser("bootstrap", help="participant bootstrap for one metric")
    p.add_argument("--metric", required=True,
                   choices=["ll", "spearman", "native-effect"])
    p.add_argument("--deltas", default=None)
    p.add_argument("--deltas-fr", default=None)
    p.add_argument("--deltas-en", default=None)
    p.add_argument("--responses", required=True)
    p.add_argument("--items", default=None)
    p.add_argument("--level", default="contrast", choices=["contrast", "stimulus"])
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--cv-grid", default=",".join(str(x) for x in DEFAULT_CV_GRID))
    p.add_argument("--cv-folds", type=int, default=DEFAULT_CV_FOLDS)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default=None)
    _common_flags(p)
    p.set_defaults(handler=cmd_bootstrap)

    p = sub.add_parser("pairwise",
                       help="bootstrap significance of a two-model comparison")
    p.add_argument("--metric", required=True,
                   choices=["ll", "spearman", "native-effect"])
    p.add_argument("--deltas-a", default=None)
    p.add_argument("--deltas-b", default=None)
    p.add_argument("--deltas-a-fr", default=None)
    p.add_argument("--deltas-a-en", default=None)
    p.add_argument("--deltas-b-fr", default=None)
    p.add_argument("--deltas-b-en", default=None)
    p.add_argument("--responses", required=True)
    p.add_argument("--items", default=None)
    p.add_argument("--level", default="contrast", choices=["contrast", "stimulus"])
    p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="shared penalty for ll comparisons")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--label-a", default="model_a")
    p.add_argument("--label-b", default="model_b")
    p.add_argument("--out", required=True)
    _common_flags(p)
    p.set_defaults(handler=cmd_pairwise)

    p = sub.add_parser("report", help="assemble metric outputs into tables")
    p.add_argument("--metrics", nargs="*", default=[])
    p.add_argument("--pairwise", nargs="*", default=[])
    p.add_argument("--abx", nargs="*", default=[], help="abx score CSVs")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--charts", action="store_true")
    _common_flags(p)
    p.set_defaults(handler=cmd_report)

    return parser


def _common_flags(p):
    p.add_argument("--threads", type=int, default=None,
                   help="parallelism cap (env PERCEPTIMETRIC_THREADS as fallback)")
    p.add_argument("--seed", type=int, default=0)


def _atomic_archive_write(entries, out_path):
    directory = os.path.dirname(os.path.abspath(out_path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-perceptimetric-")
    os.close(fd)
    try:
        featio.write_archive(entries, tmp)
        os.replace(tmp, out_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cmd_mfcc(args) -> int:
    audio_dir = Path(args.audio_dir)
    wavs = sorted(audio_dir.glob("*.wav"))
    if not wavs:
        raise PerceptimetricError(f"no .wav files found in {audio_dir}")
    config = featio.MfccConfig(
        window_length=args.window_ms / 1000.0,
        stride=args.stride_ms / 1000.0,
        num_coefficients=args.coeffs,
        num_mel_filters=args.mel_filters,
        fft_size=args.fft_size,
    )
    entries = []
    for wav in wavs:
        audio = featio.resample_linear(featio.read_wav(wav), args.rate)
        entries.append(featio.compute_mfcc(audio, config, stimulus_id=wav.stem))
    _atomic_archive_write(entries, args.out)
    manifest = build_manifest(
        "mfcc", _config_echo(args), {w.name: w for w in wavs}, [args.out], args.seed
    )
    write_manifest(args.out, manifest)
    return 0


def cmd_delta(args) -> int:
    archive = featio.read_archive(args.features)
    items = load_items(args.items)
    records = evaluate_deltas(archive, items, model_id=Path(args.features).stem,
                              threads=_threads(args))
    atomic_write_text(args.out, deltas_csv_text(records))
    manifest = build_manifest(
        "delta", _config_echo(args),
        {"features": args.features, "items": args.items}, [args.out], args.seed,
    )
    write_manifest(args.out, manifest)
    return 0


def cmd_abx(args) -> int:
    deltas = read_deltas_csv(args.deltas)
    items = load_items(args.items)
    grouping = args.group_by.replace("-", "_")
    scores = abx_scores(deltas, items, group_by=grouping)
    label = args.label or Path(args.deltas).stem
    atomic_write_text(args.out, scores_csv_text(scores, label))
    manifest = build_manifest(
        "abx", _config_echo(args),
        {"deltas": args.deltas, "items": args.items}, [args.out], args.seed,
    )
    write_manifest(args.out, manifest)
    return 0


def _delta_map(path) -> dict[str, float]:
    return {r.triplet_id: r.delta for r in read_deltas_csv(path)}


def _resolve_lambda(args, design, correct) -> float:
    if args.lam is not None:
        return args.lam
    grid = [float(x) for x in str(args.cv_grid).split(",") if x]
    return select_lambda_cv(design, correct, grid, folds=args.cv_folds,
                            seed=args.seed)


def _metric_payload(args, metric: str, label: str, value: float, inputs: dict,
                    extra: dict | None = None) -> dict:
    payload = {
        "metric": metric,
        "model": label,
        "value": value,
        "ci_low": None,
        "ci_high": None,
        "seed": args.seed,
        "config": _config_echo(args),
        "inputs": {
            name: {"path": str(path), "sha256": sha256_file(path)}
            for name, path in inputs.items()
        },
    }
    if extra:
        payload.update(extra)
    return payload


def cmd_probit(args) -> int:
    delta_map = _delta_map(args.deltas)
    responses = load_responses(args.responses)
    design = build_design_matrix(responses, delta_map)
    correct = [r.correct for r in responses]
    lam = _resolve_lambda(args, design, correct)
    fit = fit_probit_lasso(design, correct, lam)
    label = args.label or Path(args.deltas).stem
    payload = _metric_payload(
        args, "ll", label, fit.log_likelihood,
        {"deltas": args.deltas, "responses": args.responses},
        extra={
            "lambda": lam,
            "converged": fit.converged,
            "iterations": fit.iterations,
            "optimality_residual": fit.optimality_residual,
            "n_responses": len(responses),
            "coefficients": dict(zip(fit.column_names, map(float, fit.coefficients))),
        },
    )
    write_json_atomic(args.out, payload)
    write_manifest(args.out, build_manifest(
        "probit", _config_echo(args),
        {"deltas": args.deltas, "responses": args.responses}, [args.out], args.seed))
    return 0


def cmd_spearman(args) -> int:
    delta_map = _delta_map(args.deltas)
    responses = load_responses(args.responses)
    items = load_items(args.items)
    pairs = aggregate(args.level, delta_map, responses, items)
    value = spearman(pairs.model_values, pairs.human_values)
    label = args.label or Path(args.deltas).stem
    payload = _metric_payload(
        args, f"spearman_{args.level}", label, value,
        {"deltas": args.deltas, "responses": args.responses, "items": args.items},
        extra={"n_units": len(pairs.units), "dropped_units": pairs.dropped},
    )
    write_json_atomic(args.out, payload)
    write_manifest(args.out, build_manifest(
        "spearman", _config_echo(args),
        {"deltas": args.deltas, "responses": args.responses, "items": args.items},
        [args.out], args.seed))
    return 0


def _split_language_groups(responses):
    fr = [r for r in responses if r.language_group == "french"]
    en = [r for r in responses if r.language_group == "english"]
    if not fr or not en:
        raise PerceptimetricError(
            "native-effect needs responses from both language groups "
            f"(got {len(fr)} french, {len(en)} english)"
        )
    return fr, en


def cmd_native_effect(args) -> int:
    fr_map = _delta_map(args.deltas_fr)
    en_map = _delta_map(args.deltas_en)
    responses = load_responses(args.responses)
    items = load_items(args.items)
    resp_fr, resp_en = _split_language_groups(responses)
    value = native_effect(fr_map, en_map, resp_fr, resp_en, args.level, items)
    label = args.label or f"{Path(args.deltas_fr).stem}-vs-{Path(args.deltas_en).stem}"
    inputs = {"deltas_fr": args.deltas_fr, "deltas_en": args.deltas_en,
              "responses": args.responses, "items": args.items}
    payload = _metric_payload(args, f"native_effect_{args.level}", label, value, inputs)
    write_json_atomic(args.out, payload)
    write_manifest(args.out, build_manifest(
        "native-effect", _config_echo(args), inputs, [args.out], args.seed))
    return 0


def _require(args, names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise PerceptimetricError(
            f"metric {args.metric!r} requires {', '.join(missing)}"
        )


def cmd_bootstrap(args) -> int:
    responses = load_responses(args.responses)
    inputs = {"responses": args.responses}

    if args.metric == "ll":
        _require(args, ["deltas"])
        delta_map = _delta_map(args.deltas)
        inputs["deltas"] = args.deltas
        design = build_design_matrix(responses, delta_map)
        lam = _resolve_lambda(args, design, [r.correct for r in responses])

        def metric(rs):
            d = build_design_matrix(rs, delta_map)
            return fit_probit_lasso(d, [r.correct for r in rs], lam).log_likelihood

        metric_name = "ll"
        extra = {"lambda": lam}
    elif args.metric == "spearman":
        _require(args, ["deltas", "items"])
        delta_map = _delta_map(args.deltas)
        items = load_items(args.items)
        inputs.update({"deltas": args.deltas, "items": args.items})

        def metric(rs):
            pairs = aggregate(args.level, delta_map, rs, items)
            return spearman(pairs.model_values, pairs.human_values)

        metric_name = f"spearman_{args.level}"
        extra = {}
    else:
        _require(args, ["deltas_fr", "deltas_en", "items"])
        fr_map = _delta_map(args.deltas_fr)
        en_map = _delta_map(args.deltas_en)
        items = load_items(args.items)
        inputs.update({"deltas_fr": args.deltas_fr, "deltas_en": args.deltas_en,
                       "items": args.items})

        def metric(rs):
            fr = [r for r in rs if r.language_group == "french"]
            en = [r for r in rs if r.language_group == "english"]
            return native_effect(fr_map, en_map, fr, en, args.level, items)

        metric_name = f"native_effect_{args.level}"
        extra = {}

    report = bootstrap(metric, responses, n=args.n, seed=args.seed,
                       metric_name=metric_name, threads=_threads(args))
    label = args.label or (Path(args.deltas).stem if args.deltas else metric_name)
    payload = _metric_payload(
        args, metric_name, label, report.point_estimate, inputs,
        extra={
            "ci_low": report.ci_low,
            "ci_high": report.ci_high,
            "n_bootstrap": args.n,
            "n_missing": report.n_missing,
            **extra,
        },
    )
    write_json_atomic(args.out, payload)
    write_manifest(args.out, build_manifest(
        "bootstrap", _config_echo(args), inputs, [args.out], args.seed))
    return 0


def cmd_pairwise(args) -> int:
    responses = load_responses(args.responses)
    inputs = {"responses": args.responses}

    if args.metric == "ll":
        _require(args, ["deltas_a", "deltas_b"])
        deltas_a = _delta_map(args.deltas_a)
        deltas_b = _delta_map(args.deltas_b)
        inputs.update({"deltas_a": args.deltas_a, "deltas_b": args.deltas_b})

        def metric(rs, dmap):
            d = build_design_matrix(rs, dmap)
            return fit_probit_lasso(d, [r.correct for r in rs], args.lam).log_likelihood

        metric_name = "ll"
    elif args.metric == "spearman":
        _require(args, ["deltas_a", "deltas_b", "items"])
        deltas_a = _delta_map(args.deltas_a)
        deltas_b = _delta_map(args.deltas_b)
        items = load_items(args.items)
        inputs.update({"deltas_a": args.deltas_a, "deltas_b": args.deltas_b,
                       "items": args.items})

        def metric(rs, dmap):
            pairs = aggregate(args.level, dmap, rs, items)
            return spearman(pairs.model_values, pairs.human_values)

        metric_name = f"spearman_{args.level}"
    else:
        _require(args, ["deltas_a_fr", "deltas_a_en", "deltas_b_fr", "deltas_b_en",
                        "items"])
        deltas_a = (_delta_map(args.deltas_a_fr), _delta_map(args.deltas_a_en))
        deltas_b = (_delta_map(args.deltas_b_fr), _delta_map(args.deltas_b_en))
        items = load_items(args.items)
        inputs.update({
            "deltas_a_fr": args.deltas_a_fr, "deltas_a_en": args.deltas_a_en,
            "deltas_b_fr": args.deltas_b_fr, "deltas_b_en": args.deltas_b_en,
            "items": args.items,
        })

        def metric(rs, dmaps):
            fr = [r for r in rs if r.language_group == "french"]
            en = [r for r in rs if r.language_group == "english"]
            return native_effect(dmaps[0], dmaps[1], fr, en, args.level, items)

        metric_name = f"native_effect_{args.level}"

    result = pairwise_significance(metric, responses, deltas_a, deltas_b,
                                   n=args.n, seed=args.seed,
                                   metric_name=metric_name, threads=_threads(args))
    payload = {
        "metric": metric_name,
        "model_a": args.label_a,
        "model_b": args.label_b,
        "difference": result.difference,
        "ci_low": result.ci_low,
        "ci_high": result.ci_high,
        "significant": result.significant,
        "n_bootstrap": args.n,
        "n_missing": result.n_missing,
        "seed": args.seed,
        "config": _config_echo(args),
        "inputs": {
            name: {"path": str(path), "sha256": sha256_file(path)}
            for name, path in inputs.items()
        },
    }
    write_json_atomic(args.out, payload)
    write_manifest(args.out, build_manifest(
        "pairwise", _config_echo(args), inputs, [args.out], args.seed))
    return 0


def cmd_report(args) -> int:
    if not args.metrics and not args.abx:
        print("perceptimetric report: error: no metric or abx inputs given",
              file=sys.stderr)
        return 2
    metrics = []
    for path in args.metrics:
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
        for key in ("metric", "model", "value"):
            if key not in payload:
                raise ReportError(f"{path}: not a metric output (missing {key!r})")
        metrics.append(payload)
    pairwise = []
    for path in args.pairwise:
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
        for key in ("metric", "model_a", "model_b", "difference", "significant"):
            if key not in payload:
                raise ReportError(f"{path}: not a pairwise output (missing {key!r})")
        pairwise.append(payload)
    abx_tables = [(Path(path).stem, read_scores_csv(path)) for path in args.abx]

    markdown, csv_text, charts = build_report(metrics, pairwise, abx_tables,
                                              charts=args.charts)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [out_dir / "report.md", out_dir / "report.csv"]
    atomic_write_text(outputs[0], markdown)
    atomic_write_text(outputs[1], csv_text)
    for name, svg in sorted(charts.items()):
        chart_path = out_dir / f"chart_{name}.svg"
        atomic_write_text(chart_path, svg)
        outputs.append(chart_path)

    input_files = {f"metric_{i}": p for i, p in enumerate(args.metrics)}
    input_files.update({f"pairwise_{i}": p for i, p in enumerate(args.pairwise)})
    input_files.update({f"abx_{i}": p for i, p in enumerate(args.abx)})
    write_manifest(out_dir / "report", build_manifest(
        "report", _config_echo(args), input_files, outputs, args.seed))
    return 0


if __name__ == "__main__":
    sys.exit(main())
