"""Offline CVE feeds, score bindings, and an optional NVD API fetcher.

A feed is a small JSON projection of NVD records (id, description, vendor
tags, v3.1 base score and vector). Bindings tie a specific
(interaction, STRIDE category) pair to a CVE or to a manual score; that is
how enumerated threats pick up real-world scores.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
import threading
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable

import requests

from .errors import (BadResponseError, DuplicateCveError, NetworkError, ParseError,
                     RateLimitedError, UnknownBindingError)
from .model import load_json
from .scoring import Score, ScoreMethod, score_composite
from .stride import StrideCategory, Threat, ThreatSet

CVE_RE = re.compile(r"CVE-\d{4}-\d{4,}\Z")
API_KEY_ENV = "NVD_API_KEY"
PAGE_SIZE = 2000


@dataclass(frozen=True)
class CveRecord:
    cve_id: str
    description: str = ""
    vendor_tags: tuple[str, ...] = ()
    base_score: float | None = None
    vector_string: str | None = None

    def __post_init__(self):
        if not CVE_RE.match(self.cve_id):
            raise ParseError(f"malformed CVE id {self.cve_id!r}", token=self.cve_id)
        if self.base_score is not None and not 0.0 <= self.base_score <= 10.0:
            raise ParseError(f"{self.cve_id}: base_score {self.base_score} outside [0, 10]",
                             token=self.cve_id)

    def to_dict(self) -> dict:
        doc = {"cve_id": self.cve_id, "description": self.description,
               "vendor_tags": list(self.vendor_tags)}
        if self.base_score is not None:
            doc["base_score"] = self.base_score
        if self.vector_string is not None:
            doc["vector_string"] = self.vector_string
        return doc


@dataclass(frozen=True)
class CveCatalog:
    records: tuple[CveRecord, ...] = ()
    source: str = ""
    retrieved: str = ""
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for r in self.records:
            if r.cve_id in index:
                raise DuplicateCveError(f"duplicate CVE id {r.cve_id}", token=r.cve_id)
            index[r.cve_id] = r
        object.__setattr__(self, "_by_id", index)

    def __len__(self):
        return len(self.records)

    def __contains__(self, cve_id):
        return cve_id in self._by_id

    def get(self, cve_id: str) -> CveRecord | None:
        return self._by_id.get(cve_id)

    def by_vendor(self, tag: str) -> list[CveRecord]:
        tag = tag.lower()
        return sorted((r for r in self.records if tag in (t.lower() for t in r.vendor_tags)),
                      key=lambda r: r.cve_id)


def _record(raw, where: str) -> CveRecord:
    if not isinstance(raw, dict) or not isinstance(raw.get("cve_id"), str):
        raise ParseError(f"{where}: record needs a string cve_id")
    tags = raw.get("vendor_tags", [])
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        raise ParseError(f"{where}: vendor_tags must be a list of strings", token=raw["cve_id"])
    score = raw.get("base_score")
    if score is not None and (isinstance(score, bool) or not isinstance(score, (int, float))):
        raise ParseError(f"{where}: base_score must be a number", token=raw["cve_id"])
    return CveRecord(raw["cve_id"], str(raw.get("description", "")), tuple(tags),
                     None if score is None else float(score), raw.get("vector_string"))


def load_feed(text: str | bytes) -> CveCatalog:
    doc = load_json(text)
    if not isinstance(doc, dict) or not isinstance(doc.get("records", []), list):
        raise ParseError("feed must be an object with a 'records' array")
    records = [_record(raw, f"records[{i}]") for i, raw in enumerate(doc.get("records", []))]
    return CveCatalog(tuple(records), str(doc.get("source", "")), str(doc.get("retrieved", "")))


def write_feed(c: CveCatalog) -> str:
    doc = {"source": c.source, "retrieved": c.retrieved,
           "records": [r.to_dict() for r in c.records]}
    return json.dumps(doc, indent=2) + "\n"


def query_by_keyword(c: CveCatalog, keyword: str) -> list[CveRecord]:
    """Case-insensitive substring match over vendor tags and description."""
    key = keyword.lower()
    hits = [r for r in c.records
            if key in r.description.lower() or any(key in t.lower() for t in r.vendor_tags)]
    return sorted(hits, key=lambda r: r.cve_id)


# -- bindings ----------------------------------------------------------------

@dataclass(frozen=True)
class ScoreBinding:
    interaction: str
    category: StrideCategory
    cve_id: str | None = None
    score: float | None = None
    cwe_note: str | None = None


def load_bindings(text: str | bytes) -> list[ScoreBinding]:
    doc = load_json(text)
    if not isinstance(doc, list):
        raise ParseError("bindings file must be a JSON array")
    out, seen = [], set()
    for i, raw in enumerate(doc):
        where = f"bindings[{i}]"
        if not isinstance(raw, dict) or "interaction" not in raw or "category" not in raw:
            raise ParseError(f"{where}: needs interaction and category")
        cve_id, score = raw.get("cve_id"), raw.get("score")
        if (cve_id is None) == (score is None):
            raise ParseError(f"{where}: give exactly one of cve_id or score")
        if score is not None and (isinstance(score, bool) or not isinstance(score, (int, float))
                                  or not 0 <= score <= 10):
            raise ParseError(f"{where}: score must be a number in [0, 10]")
        b = ScoreBinding(str(raw["interaction"]), StrideCategory.parse(raw["category"]),
                         cve_id, None if score is None else float(score), raw.get("cwe_note"))
        key = (b.interaction, b.category)
        if key in seen:
            raise UnknownBindingError(
                f"{b.category.value} on {b.interaction} is bound more than once",
                subject=b.interaction)
        seen.add(key)
        out.append(b)
    return out


@dataclass(frozen=True)
class ScoredThreat:
    threat: Threat
    score: Score | None = None
    cve_id: str | None = None
    cwe_note: str | None = None

    def sort_key(self):
        # scored first, highest first; unscored keep the canonical threat order
        if self.score is None:
            return (1, 0.0, self.threat.sort_key())
        return (0, -self.score.value, self.threat.sort_key())


@dataclass(frozen=True)
class ScoredThreatSet:
    model: str
    threats: tuple[ScoredThreat, ...] = ()

    def __len__(self):
        return len(self.threats)

    def __iter__(self):
        return iter(self.threats)

    def scores(self) -> dict[str, float]:
        return {s.threat.threat_id: s.score.value for s in self.threats if s.score is not None}

    def cwe_notes(self) -> dict[str, str]:
        return {s.threat.threat_id: s.cwe_note for s in self.threats if s.cwe_note}


def attach_scores(ts: ThreatSet, c: CveCatalog, bindings: Iterable[ScoreBinding],
                  fallback=None) -> ScoredThreatSet:
    """Score threats from bindings; ``fallback`` is a (base, temporal, env) metric triple."""
    by_pair: dict[tuple, list[Threat]] = {}
    for t in ts:
        by_pair.setdefault((t.interaction, t.category), []).append(t)

    bound: dict[str, tuple] = {}
    seen = set()
    for b in bindings:
        key = (b.interaction, b.category)
        if key in seen:
            raise UnknownBindingError(
                f"{b.category.value} on {b.interaction} is bound more than once",
                subject=b.interaction)
        seen.add(key)
        if key not in by_pair:
            raise UnknownBindingError(
                f"no {b.category.value} threat on interaction {b.interaction!r}",
                subject=b.interaction)
        if b.cve_id is not None:
            record = c.get(b.cve_id)
            if record is None:
                raise UnknownBindingError(f"{b.cve_id} is not in the feed", subject=b.cve_id)
            if record.base_score is None:
                raise UnknownBindingError(f"{b.cve_id} has no base score", subject=b.cve_id)
            score = Score(record.base_score, ScoreMethod.CVSS31_BASE)
        else:
            score = Score(b.score, ScoreMethod.CVSS31_BASE)
        for t in by_pair[key]:
            bound[t.threat_id] = (score, b.cve_id, b.cwe_note)

    default = score_composite(*fallback) if fallback is not None else None
    out = []
    for t in ts:
        if t.threat_id in bound:
            out.append(ScoredThreat(t, *bound[t.threat_id]))
        else:
            out.append(ScoredThreat(t, default))
    out.sort(key=ScoredThreat.sort_key)
    return ScoredThreatSet(ts.model, tuple(out))


# -- remote fetch ------------------------------------------------------------

_path_locks: dict[str, threading.Lock] = {}
_locks_guard = threading.Lock()


def _lock_for(path: Path) -> threading.Lock:
    with _locks_guard:
        return _path_locks.setdefault(str(path.resolve()), threading.Lock())


def _from_api(item: dict, keyword: str) -> CveRecord:
    cve = item.get("cve", {})
    desc = next((d.get("value", "") for d in cve.get("descriptions", [])
                 if d.get("lang") == "en"), "")
    metrics = cve.get("metrics", {}).get("cvssMetricV31", [])
    # prefer the NVD-assigned primary metric over CNA-supplied ones
    metrics = sorted(metrics, key=lambda m: m.get("type") != "Primary")
    score = vector = None
    if metrics:
        data = metrics[0].get("cvssData", {})
        score, vector = data.get("baseScore"), data.get("vectorString")
    return CveRecord(cve["id"], desc, (keyword.lower(),),
                     None if score is None else float(score), vector)


def _get_page(session, endpoint, params, headers, timeout) -> dict:
    try:
        resp = session.get(endpoint, params=params, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise NetworkError(f"cannot reach {endpoint}: {exc}", subject=endpoint) from None
    if resp.status_code in (403, 429):
        retry = resp.headers.get("Retry-After")
        hint = f" (retry after {retry}s)" if retry else ""
        raise RateLimitedError(f"rate limited by {endpoint}: HTTP {resp.status_code}{hint}",
                               retry_after=retry)
    if resp.status_code != 200:
        raise BadResponseError(f"HTTP {resp.status_code} from {endpoint}", subject=endpoint)
    try:
        body = resp.json()
    except ValueError:
        raise BadResponseError(f"non-JSON body from {endpoint}", subject=endpoint) from None
    if not isinstance(body, dict) or not isinstance(body.get("vulnerabilities"), list):
        raise BadResponseError(f"unexpected payload from {endpoint}", subject=endpoint)
    return body


def fetch_remote(endpoint: str, keyword: str, out_path, *, api_key: str | None = None,
                 session=None, timeout: float = 30.0, retrieved: str | None = None) -> CveCatalog:
    """Page through an NVD CVE API 2.0 keyword search and write a feed file.

    The file is written atomically, so a failure never leaves a partial feed.
    """
    out_path = Path(out_path)
    session = session or requests.Session()
    headers = {"apiKey": api_key} if api_key else {}
    records: dict[str, CveRecord] = {}
    start = 0
    while True:
        params = {"keywordSearch": keyword, "startIndex": start, "resultsPerPage": PAGE_SIZE}
        body = _get_page(session, endpoint, params, headers, timeout)
        page = body["vulnerabilities"]
        try:
            for item in page:
                rec = _from_api(item, keyword)
                records[rec.cve_id] = rec
        except (KeyError, TypeError, AttributeError):
            raise BadResponseError(f"malformed vulnerability entry from {endpoint}") from None
        start += len(page)
        total = body.get("totalResults", start)
        if not page or start >= total:
            break

    catalog = CveCatalog(tuple(sorted(records.values(), key=lambda r: r.cve_id)),
                         source=endpoint, retrieved=retrieved or date.today().isoformat())
    with _lock_for(out_path):
        fd, tmp = tempfile.mkstemp(dir=out_path.parent, prefix=out_path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(write_feed(catalog))
            os.replace(tmp, out_path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    return catalog
