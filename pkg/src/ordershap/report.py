"""Attribution report rendering: machine-readable TSV and an HTML heatmap.

Both encodings carry the exact float values: the TSV prints ``repr`` of each
number and every heatmap cell embeds the same string in a ``data-value``
attribute next to its color encoding.
"""
from __future__ import annotations

from html import escape

import numpy as np

from .core import AttributionReport
from .errors import ConfigurationError

TSV_COLUMNS = ("slot", "token", "phi_x", "phi_z", "stderr_x", "stderr_z")

POSITIVE_RGB = (27, 158, 119)   # green
NEGATIVE_RGB = (231, 41, 138)   # pink


def parse_slot_groups(text: str, n: int) -> list[list[int]]:
    """Parse a --merge-slots spec like '0-1,2,3' into index groups.

    Slots not mentioned stay as singleton groups in order.
    """
    groups = []
    seen = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            members = list(range(int(lo), int(hi) + 1))
        else:
            members = [int(part)]
        for m in members:
            if not 0 <= m < n:
                raise ConfigurationError(f"slot {m} outside 0..{n - 1}")
            if m in seen:
                raise ConfigurationError(f"slot {m} appears in two merge groups")
            seen.add(m)
        groups.append(members)
    for m in range(n):
        if m not in seen:
            groups.append([m])
    groups.sort(key=lambda g: g[0])
    return groups


def merge_report_rows(tokens, report: AttributionReport, groups):
    """Collapse slot groups by summation; stderr combines in quadrature."""
    rows = []
    for group in groups:
        token = "+".join(str(tokens[i]) for i in group)
        phi_x = float(sum(report.occurrence_values[i] for i in group))
        phi_z = float(sum(report.order_values[i] for i in group))
        se_x = float(np.sqrt(sum(report.occurrence_stderr[i] ** 2 for i in group)))
        se_z = float(np.sqrt(sum(report.order_stderr[i] ** 2 for i in group)))
        rows.append((group[0], token, phi_x, phi_z, se_x, se_z))
    return rows


def report_rows(tokens, report: AttributionReport, merge_spec: str = None):
    n = report.n
    if merge_spec:
        return merge_report_rows(tokens, report, parse_slot_groups(merge_spec, n))
    return [
        (
            i,
            str(tokens[i]),
            float(report.occurrence_values[i]),
            float(report.order_values[i]),
            float(report.occurrence_stderr[i]),
            float(report.order_stderr[i]),
        )
        for i in range(n)
    ]


def render_tsv(tokens, report: AttributionReport, merge_spec: str = None) -> str:
    lines = ["\t".join(TSV_COLUMNS)]
    for slot, token, phi_x, phi_z, se_x, se_z in report_rows(tokens, report, merge_spec):
        lines.append(
            "\t".join([str(slot), token, repr(phi_x), repr(phi_z), repr(se_x), repr(se_z)])
        )
    lines.append(
        "# mode=%s seed=%s evaluations=%d permutations=%d converged=%s baseline=%r full=%r"
        % (
            report.mode,
            report.seed,
            report.evaluation_count,
            report.permutations,
            report.converged,
            report.baseline_value,
            report.full_value,
        )
    )
    return "\n".join(lines) + "\n"


def _cell(value: float, stderr: float, max_abs: float) -> str:
    rgb = POSITIVE_RGB if value >= 0 else NEGATIVE_RGB
    alpha = 0.0 if max_abs == 0.0 else min(1.0, abs(value) / max_abs)
    style = f"background-color:rgba({rgb[0]},{rgb[1]},{rgb[2]},{alpha:.4f})"
    return (
        f'<td class="v" style="{style}" data-value="{escape(repr(value))}" '
        f'title="value={escape(repr(value))} stderr={escape(repr(stderr))}">'
        f"{value:+.4f}</td>"
    )


def render_heatmap(tokens, report: AttributionReport, title: str,
                   merge_spec: str = None) -> str:
    """Self-contained HTML heatmap: green positive, pink negative, shade by
    magnitude relative to the report's max |value|."""
    rows = report_rows(tokens, report, merge_spec)
    max_abs = max(
        [abs(r[2]) for r in rows] + [abs(r[3]) for r in rows] + [0.0]
    )
    header = "".join(f"<th>{escape(str(r[1]))}</th>" for r in rows)
    occ_cells = "".join(_cell(r[2], r[4], max_abs) for r in rows)
    ord_cells = "".join(_cell(r[3], r[5], max_abs) for r in rows)
    meta = (
        f"mode={report.mode} seed={report.seed} evaluations={report.evaluation_count} "
        f"permutations={report.permutations} converged={report.converged}"
    )
    return f"""<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>{escape(title)}</title>
<style>
body {{ font-family: sans-serif; margin: 1.5em; }}
table {{ border-collapse: collapse; }}
th, td {{ border: 1px solid #999; padding: 6px 10px; text-align: center; }}
td.v {{ font-family: monospace; }}
caption {{ caption-side: bottom; padding-top: .6em; color: #555; font-size: .85em; }}
</style></head>
<body>
<h2>{escape(title)}</h2>
<table>
<caption>{escape(meta)}</caption>
<tr><th></th>{header}</tr>
<tr><th>occurrence</th>{occ_cells}</tr>
<tr><th>order</th>{ord_cells}</tr>
</table>
</body></html>
"""


def render_metrics_tsv(rows) -> str:
    """Metrics table: one row per explanation mode with its correlations."""
    lines = ["\t".join(["explanation", "p_a", "p", "evaluations", "permutations", "converged"])]
    for name, p_a, p, evals, perms, converged in rows:
        lines.append(
            "\t".join([name, repr(float(p_a)), repr(float(p)), str(evals), str(perms), str(converged)])
        )
    return "\n".join(lines) + "\n"
