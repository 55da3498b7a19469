"""Machine-readable (TSV) and aligned-text renderings of pipeline outputs."""

from __future__ import annotations

from collections.abc import Sequence

from .evaluation import EvalReport, report_header
from .selection import SelectionResult
from .vectorizer import FeatureDescriptor, FeatureSpace


def aligned(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Left-aligned columns separated by two spaces."""
    table = [list(header)] + [list(r) for r in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def tsv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    return "\n".join("\t".join(r) for r in [list(header)] + [list(r) for r in rows]) + "\n"


def eval_reports_tsv(reports: dict) -> str:
    """Every configuration of every algorithm, one row each."""
    reports = list(reports.values())
    if not reports:
        return ""
    out = ["\t".join(report_header(reports[0].k))]
    for rep in reports:
        out += ["\t".join(r) for r in rep.table_rows()]
    return "\n".join(out) + "\n"


SUMMARY_HEADER = ("Algorithm", "Configuration", "Average cross validation F1")


def summary_rows(reports: dict) -> list[list[str]]:
    """Best configuration per algorithm, in reporting order."""
    rows = []
    for rep in reports.values():
        rows.append([rep.algorithm.title, rep.best_config.label(), f"{rep.best_mean_f1:.4f}"])
    return rows


def eval_summary_text(reports: dict) -> str:
    return aligned(SUMMARY_HEADER, summary_rows(reports))


def eval_report_text(report: EvalReport) -> str:
    rows = [[r.config.label(), f"{r.mean_f1:.4f}"] + [f"{s:.3f}" for s in r.cv.fold_f1] for r in report.per_config]
    header = ["config", "mean_f1"] + [f"f{i + 1}" for i in range(report.k)]
    return aligned(header, rows)


TOP_HEADER = ("kind", "name", "weight")


def top_feature_rows(top: Sequence[tuple[FeatureDescriptor, float]]) -> list[list[str]]:
    return [[str(d.kind), d.name, repr(float(w))] for d, w in top]


def top_features_tsv(top) -> str:
    return tsv(TOP_HEADER, top_feature_rows(top))


def top_features_text(top) -> str:
    return aligned(TOP_HEADER, [[k, n, f"{float(w):+.4f}"] for k, n, w in top_feature_rows(top)])


SELECTION_HEADER = ("column", "kind", "name", "weight")


def selection_tsv(selection: SelectionResult, space: FeatureSpace) -> str:
    """Kept columns by |weight| descending, ties by column id."""
    ranked = sorted(zip(selection.kept_columns, selection.weights), key=lambda cw: (-abs(cw[1]), cw[0]))
    rows = []
    for col, w in ranked:
        d = space.descriptors[col]
        rows.append([str(col), str(d.kind), d.name, repr(float(w))])
    return tsv(SELECTION_HEADER, rows)
