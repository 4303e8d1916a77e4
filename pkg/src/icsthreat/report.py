"""Deterministic Markdown and JSON reports.

Reports never contain timestamps. Instead they carry a SHA-256 digest of
the inputs they were built from, so identical inputs give byte-identical
files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable

from .attack import AttackPath
from .errors import BadBoundsError
from .model import SystemModel, render_model
from .nvd import ScoredThreatSet
from .stride import StrideCategory, summarize_by_asset, summarize_by_category


@dataclass(frozen=True)
class TopRow:
    category: StrideCategory
    interaction: str
    score: float

    def to_dict(self) -> dict:
        return {"category": self.category.value, "interaction": self.interaction,
                "score": self.score}


def top_n(sts: ScoredThreatSet, n: int) -> list[TopRow]:
    """Highest-scored (category, interaction) pairs.

    Several rules can raise the same category on the same interaction; they
    collapse into one row carrying the highest score. Ties are broken by
    STRIDE order, then by interaction id.
    """
    if n < 1:
        raise BadBoundsError(f"n must be at least 1, got {n}")
    best: dict[tuple, float] = {}
    for s in sts:
        if s.score is None:
            continue
        key = (s.threat.category, s.threat.interaction)
        best[key] = max(best.get(key, 0.0), s.score.value)
    rows = [TopRow(cat, inter, score) for (cat, inter), score in best.items()]
    rows.sort(key=lambda r: (-r.score, r.category.rank, r.interaction))
    return rows[:n]


def digest(*parts: bytes | str) -> str:
    """SHA-256 over length-prefixed parts, so part boundaries matter."""
    h = hashlib.sha256()
    for part in parts:
        data = part.encode("utf-8") if isinstance(part, str) else part
        h.update(f"{len(data)}:".encode())
        h.update(data)
    return h.hexdigest()


@dataclass(frozen=True)
class ReportDocument:
    model: str
    digest: str
    by_category: tuple[tuple[StrideCategory, int], ...] = ()
    by_asset: tuple[tuple[str, int], ...] = ()
    top_threats: tuple[TopRow, ...] = ()
    paths: tuple[AttackPath, ...] = ()
    notes: tuple[str, ...] = field(default=())

    @property
    def total(self) -> int:
        return sum(count for _, count in self.by_category)


def build_report(m: SystemModel, sts: ScoredThreatSet, paths: Iterable[AttackPath] = (),
                 n: int = 5, input_digest: str | None = None) -> ReportDocument:
    """Assemble a report.

    ``input_digest`` should hash the raw input files; when omitted the
    digest covers the canonical model text and the scored threats.
    """
    threats = [s.threat for s in sts]
    if input_digest is None:
        scored = [f"{s.threat.threat_id}={'' if s.score is None else s.score.value}" for s in sts]
        input_digest = digest(render_model(m), "\n".join(scored))
    return ReportDocument(
        model=m.name,
        digest=input_digest,
        by_category=tuple(summarize_by_category(threats)),
        by_asset=tuple(summarize_by_asset(threats).items()),
        top_threats=tuple(top_n(sts, n)),
        paths=tuple(paths),
        notes=tuple(m.notes),
    )


def _score(value: float | None) -> float | None:
    return None if value is None else round(value, 4)


def report_to_dict(doc: ReportDocument) -> dict:
    return {
        "model": doc.model,
        "digest": doc.digest,
        "summary_by_category": [{"category": cat.value, "count": count}
                                for cat, count in doc.by_category],
        "summary_by_asset": [{"asset": asset, "count": count} for asset, count in doc.by_asset],
        "top_threats": [row.to_dict() for row in doc.top_threats],
        "paths": [{"goal": p.goal, "score": _score(p.path_score),
                   "steps": [{"element": s.element, "technique": s.technique.name,
                              "tactic": s.tactic} for s in p.steps]}
                  for p in doc.paths],
        "notes": list(doc.notes),
    }


def render_json(doc: ReportDocument) -> str:
    return json.dumps(report_to_dict(doc), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _cell(text) -> str:
    return str(text).replace("|", "\\|").replace("\n", " ")


def _table(header: list[str], rows: list[list]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(_cell(c) for c in row) + " |" for row in rows]
    return lines


def render_markdown(doc: ReportDocument) -> str:
    out = [f"# Threat report: {doc.model}", "", f"Input digest: `{doc.digest}`", ""]

    out += ["## Threats by STRIDE category", ""]
    rows = [[cat.label, count] for cat, count in doc.by_category]
    out += _table(["Category", "Count"], rows + [["**Total**", doc.total]]) + [""]

    out += ["## Threats by asset", ""]
    asset_total = sum(count for _, count in doc.by_asset)
    out += _table(["Asset", "Count"],
                  [[a, c] for a, c in doc.by_asset] + [["**Total**", asset_total]]) + [""]

    out += [f"## Top {len(doc.top_threats)} threats", ""]
    if doc.top_threats:
        out += _table(["Category", "Interaction", "CVSS score"],
                      [[r.category.label, r.interaction, f"{r.score:.1f}"]
                       for r in doc.top_threats])
    else:
        out.append("No scored threats.")
    out.append("")

    out += ["## Attack paths", ""]
    if doc.paths:
        rows = []
        for i, p in enumerate(doc.paths, 1):
            chain = " -> ".join(f"{s.element}: {s.technique.name} ({s.tactic})" for s in p.steps)
            rows.append([i, f"{p.path_score:.4f}", len(p.steps), chain])
        out += _table(["#", "Score", "Steps", "Path"], rows)
    else:
        out.append("No attack paths.")
    out.append("")

    if doc.notes:
        out += ["## Notes", ""]
        out += [f"- {note}" for note in doc.notes]
        out.append("")
    return "\n".join(out)
