"""Assemble metric outputs into markdown/CSV tables and simple SVG bar charts."""

from __future__ import annotations

import io
import csv

from .errors import PerceptimetricError


class ReportError(PerceptimetricError):
    """Incompatible or unusable metric files."""


def check_input_compatibility(payloads) -> None:
    """Reject metric files computed from different input files.

    Two payloads clash when they recorded the same logical input name (e.g.
    "items") with different content hashes.
    """
    seen: dict[str, tuple[str, str]] = {}
    clashes = []
    for payload in payloads:
        label = payload.get("model", payload.get("metric", "?"))
        for name, entry in payload.get("inputs", {}).items():
            digest = entry.get("sha256", "")
            if name in seen and seen[name][0] != digest:
                clashes.append(
                    f"input {name!r}: {label} has {digest[:12]} "
                    f"but {seen[name][1]} has {seen[name][0][:12]}"
                )
            else:
                seen.setdefault(name, (digest, label))
    if clashes:
        raise ReportError("metric files disagree on inputs:\n  " + "\n  ".join(clashes))


def significant_wins(pairwise) -> dict[str, set[tuple[str, str]]]:
    """Per metric, the set of (winner, loser) pairs after dropping redundant
    comparisons: C>A is suppressed when C>B and B>A are both present."""
    by_metric: dict[str, set[tuple[str, str]]] = {}
    for payload in pairwise:
        if not payload.get("significant"):
            continue
        metric = payload["metric"]
        a, b = payload["model_a"], payload["model_b"]
        winner, loser = (a, b) if payload["difference"] > 0 else (b, a)
        by_metric.setdefault(metric, set()).add((winner, loser))
    reduced = {}
    for metric, wins in by_metric.items():
        middles = {w for w, _ in wins} | {l for _, l in wins}
        reduced[metric] = {
            (w, l)
            for (w, l) in wins
            if not any((w, m) in wins and (m, l) in wins for m in middles)
        }
    return reduced


def _fmt(value) -> str:
    if value is None:
        return ""
    return format(float(value), ".6f")


def build_report(metrics, pairwise=(), abx_tables=(), charts: bool = False):
    """Returns (markdown, csv_text, {chart_name: svg_text}).

    ``metrics``: metric JSON payloads (dicts). ``pairwise``: pairwise JSON
    payloads. ``abx_tables``: (label, rows) pairs from abx score CSVs.
    """
    metrics = list(metrics)
    if not metrics and not abx_tables:
        raise ReportError("no metric outputs to report")
    check_input_compatibility(list(metrics) + list(pairwise))
    wins = significant_wins(pairwise)

    md = io.StringIO()
    csv_buf = io.StringIO()
    writer = csv.writer(csv_buf)
    writer.writerow(["metric", "model", "group", "value", "ci_low", "ci_high",
                     "significantly_above"])

    md.write("# perceptimetric report\n")

    metric_names = sorted({m["metric"] for m in metrics})
    chart_data: dict[str, list[tuple[str, float]]] = {}
    for name in metric_names:
        rows = sorted((m for m in metrics if m["metric"] == name),
                      key=lambda m: m["model"])
        md.write(f"\n## {name}\n\n")
        md.write("| model | value | 95% CI low | 95% CI high | significantly above |\n")
        md.write("|---|---:|---:|---:|---|\n")
        for m in rows:
            above = sorted(l for (w, l) in wins.get(name, ()) if w == m["model"])
            above_text = ", ".join(above)
            md.write(
                f"| {m['model']} | {_fmt(m['value'])} | {_fmt(m.get('ci_low'))} "
                f"| {_fmt(m.get('ci_high'))} | {above_text} |\n"
            )
            writer.writerow([name, m["model"], "", _fmt(m["value"]),
                             _fmt(m.get("ci_low")), _fmt(m.get("ci_high")),
                             ";".join(above)])
        chart_data[name] = [(m["model"], float(m["value"])) for m in rows]

    for label, rows in abx_tables:
        md.write(f"\n## ABX scores: {label}\n\n")
        md.write("| model | group | triplets | accuracy | mean delta |\n")
        md.write("|---|---|---:|---:|---:|\n")
        for row in sorted(rows, key=lambda r: (r["model"], r["group"])):
            md.write(
                f"| {row['model']} | {row['group']} | {row['n_triplets']} "
                f"| {_fmt(row['abx_accuracy'])} | {_fmt(row['mean_delta'])} |\n"
            )
            writer.writerow([f"abx:{label}", row["model"], row["group"],
                             _fmt(row["abx_accuracy"]), "", "", ""])

    charts_out = {}
    if charts:
        for name, bars in chart_data.items():
            if bars:
                charts_out[name] = svg_bar_chart(name, bars)
    return md.getvalue(), csv_buf.getvalue(), charts_out


def svg_bar_chart(title: str, bars) -> str:
    """Minimal deterministic horizontal bar chart."""
    bar_height, gap, left, width = 22, 8, 150, 420
    magnitude = max(abs(v) for _, v in bars) or 1.0
    height = 40 + len(bars) * (bar_height + gap)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{left + width + 120}" '
        f'height="{height}">',
        f'<text x="10" y="20" font-family="monospace" font-size="14">{title}</text>',
    ]
    y = 36
    for label, value in bars:
        w = abs(value) / magnitude * width
        parts.append(
            f'<text x="10" y="{y + 15}" font-family="monospace" font-size="12">'
            f"{label}</text>"
        )
        parts.append(
            f'<rect x="{left}" y="{y}" width="{w:.2f}" height="{bar_height}" '
            f'fill="{"#4477aa" if value >= 0 else "#cc6677"}"/>'
        )
        parts.append(
            f'<text x="{left + w + 6:.2f}" y="{y + 15}" font-family="monospace" '
            f'font-size="12">{value:.4f}</text>'
        )
        y += bar_height + gap
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
