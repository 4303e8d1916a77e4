"""Vulnerability scoring.

Two scorers live here:

* :func:`score_composite` combines base, temporal and environmental metric
  weights into a single 0-10 value (a CVSS-v2-style composite).
* :func:`score_cvss31_base` is the standard CVSS v3.1 base score computed
  from a ``CVSS:3.1/...`` vector string.

Both return a :class:`Score`; :func:`severity_bucket` maps any score onto
the v3.1 qualitative rating scale.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, fields
from decimal import ROUND_HALF_UP, Decimal

from .errors import ParseError


class ScoreMethod(enum.Enum):
    COMPOSITE = "Composite"
    CVSS31_BASE = "Cvss31Base"


class SeverityRating(enum.Enum):
    NONE = "None"
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    CRITICAL = "Critical"


@dataclass(frozen=True)
class Score:
    value: float
    method: ScoreMethod = ScoreMethod.CVSS31_BASE

    def __post_init__(self):
        if not 0.0 <= self.value <= 10.0:
            raise ValueError(f"score {self.value} outside [0, 10]")

    def __str__(self):
        return f"{self.value:.1f}"


def round1(x: float) -> float:
    """Round half-up to one decimal."""
    return float(Decimal(repr(x)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def severity_bucket(score) -> SeverityRating:
    value = score.value if isinstance(score, Score) else float(score)
    value = round1(value)
    if value == 0.0:
        return SeverityRating.NONE
    if value < 4.0:
        return SeverityRating.LOW
    if value < 7.0:
        return SeverityRating.MEDIUM
    if value < 9.0:
        return SeverityRating.HIGH
    return SeverityRating.CRITICAL


# -- composite (base/temporal/environmental) score ---------------------------

def _norm(level: str) -> str:
    return re.sub(r"[^a-z]", "", str(level).lower())


# level name -> weight; None marks levels that carry no numeric weight
WEIGHTS = {
    "access_vector": {"Local": None, "AdjacentNetwork": None, "Network": None},
    "access_complexity": {"Low": None, "Medium": None, "High": None},
    "authentication": {"None": None, "Single": None, "Multiple": None},
    "confidentiality": {"None": 0.0, "Partial": 0.5, "Complete": 1.0},
    "integrity": {"None": 0.0, "Partial": 0.5, "Complete": 1.0},
    "availability": {"None": 0.0, "Partial": 0.5, "Complete": 1.0},
    "exploitability": {"Unproven": 0.85, "ProofOfConcept": 0.9, "Functional": 0.95, "High": 1.0},
    "impact": {"None": 0.0, "Low": 0.22, "Medium": 0.56, "High": 0.7, "Critical": 0.85},
    "exploit_code_maturity": {"NotDefined": 0.0, "Unproven": 0.9, "ProofOfConcept": 0.95,
                              "Functional": 1.0, "High": 1.0},
    "remediation_level": {"OfficialFix": 0.0, "TemporaryFix": 0.25, "Workaround": 0.75,
                          "Unavailable": 1.0},
    "report_confidence": {"Unconfirmed": 0.0, "Uncorroborated": 0.5, "Confirmed": 1.0},
    "collateral_damage": {"None": 0.0, "Low": 0.1, "LowMedium": 0.3, "MediumHigh": 0.4,
                          "High": 0.5},
    "target_distribution": {"None": 0.0, "Low": 0.25, "Medium": 0.75, "High": 1.0},
    "confidentiality_req": {"NotDefined": 0.0, "Low": 0.5, "Medium": 1.0, "High": 1.51},
    "integrity_req": {"NotDefined": 0.0, "Low": 0.5, "Medium": 1.0, "High": 1.51},
    "availability_req": {"NotDefined": 0.0, "Low": 0.5, "Medium": 1.0, "High": 1.51},
}

# short names accepted on the command line
ABBREVIATIONS = {
    "AV": "access_vector", "AC": "access_complexity", "Au": "authentication",
    "C": "confidentiality", "I": "integrity", "A": "availability",
    "E_base": "exploitability", "IMP": "impact",
    "E_t": "exploit_code_maturity", "RL": "remediation_level", "RC": "report_confidence",
    "CDP": "collateral_damage", "TD": "target_distribution",
    "CR": "confidentiality_req", "IR": "integrity_req", "AR": "availability_req",
}


_LEVEL_NAMES = {metric: {_norm(name): name for name in table} for metric, table in WEIGHTS.items()}


def canonical_level(metric: str, level: str) -> str:
    table = WEIGHTS[metric]
    if level in table:
        return level
    name = _LEVEL_NAMES[metric].get(_norm(level))
    if name is not None:
        return name
    raise ParseError(f"{metric}: unknown level {level!r} (expected one of {', '.join(table)})",
                     token=str(level))


class _Metrics:
    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, canonical_level(f.name, getattr(self, f.name)))

    def weight(self, metric: str) -> float:
        return WEIGHTS[metric][getattr(self, metric)]


@dataclass(frozen=True)
class BaseMetrics(_Metrics):
    """Intrinsic metrics.

    Access vector, complexity and authentication are recorded but carry no
    weight in the composite formula.
    """

    access_vector: str = "Network"
    access_complexity: str = "Low"
    authentication: str = "Single"
    confidentiality: str = "Complete"
    integrity: str = "Complete"
    availability: str = "Complete"
    exploitability: str = "Functional"
    impact: str = "High"


@dataclass(frozen=True)
class TemporalMetrics(_Metrics):
    exploit_code_maturity: str = "Functional"
    remediation_level: str = "OfficialFix"
    report_confidence: str = "Confirmed"


@dataclass(frozen=True)
class EnvironmentalMetrics(_Metrics):
    """Environment metrics; only collateral damage enters the formula."""

    collateral_damage: str = "Low"
    target_distribution: str = "Medium"
    confidentiality_req: str = "High"
    integrity_req: str = "Medium"
    availability_req: str = "Low"


def parse_metric_pairs(pairs) -> tuple[BaseMetrics, TemporalMetrics, EnvironmentalMetrics]:
    """Build the three metric groups from ``NAME=Level`` strings.

    Unspecified metrics keep their dataclass defaults.
    """
    given: dict[str, str] = {}
    for pair in pairs:
        name, sep, level = str(pair).partition("=")
        if not sep:
            raise ParseError(f"expected NAME=Level, got {pair!r}", token=str(pair))
        name = name.strip()
        metric = ABBREVIATIONS.get(name) or (name if name in WEIGHTS else None)
        if metric is None:
            raise ParseError(f"unknown metric {name!r}", token=name)
        if metric in given:
            raise ParseError(f"metric {name!r} given twice", token=name)
        given[metric] = level.strip()

    def group(cls):
        return cls(**{f.name: given[f.name] for f in fields(cls) if f.name in given})

    return group(BaseMetrics), group(TemporalMetrics), group(EnvironmentalMetrics)


def composite_raw(b: BaseMetrics, t: TemporalMetrics, e: EnvironmentalMetrics) -> float:
    """Unclamped, unrounded composite value."""
    c, i, a = b.weight("confidentiality"), b.weight("integrity"), b.weight("availability")
    cdp = e.weight("collateral_damage")
    numerator = (1 - (1 - c) * (1 - i) * (1 - a)) * (
        t.weight("exploit_code_maturity") * t.weight("remediation_level")
        * t.weight("report_confidence"))
    denominator = (0.6 * (1 - c) + 0.4 * (1 - cdp)) * b.weight("impact") + 0.6 * cdp
    if denominator == 0:
        return 0.0 if numerator == 0 else math.inf
    return numerator / denominator * b.weight("exploitability")


def score_composite(b: BaseMetrics, t: TemporalMetrics, e: EnvironmentalMetrics) -> Score:
    raw = composite_raw(b, t, e)
    return Score(round1(min(max(raw, 0.0), 10.0)), ScoreMethod.COMPOSITE)


# -- CVSS v3.1 base score ----------------------------------------------------

_BASE_VALUES = {
    "AV": ("N", "A", "L", "P"),
    "AC": ("L", "H"),
    "PR": ("N", "L", "H"),
    "UI": ("N", "R"),
    "S": ("U", "C"),
    "C": ("H", "L", "N"),
    "I": ("H", "L", "N"),
    "A": ("H", "L", "N"),
}
_OPTIONAL_VALUES = {
    "E": "XUPFH", "RL": "XOTWU", "RC": "XURC",
    "CR": "XLMH", "IR": "XLMH", "AR": "XLMH",
    "MAV": "XNALP", "MAC": "XLH", "MPR": "XNLH", "MUI": "XNR", "MS": "XUC",
    "MC": "XNLH", "MI": "XNLH", "MA": "XNLH",
}

_AV = {"N": 0.85, "A": 0.62, "L": 0.55, "P": 0.2}
_AC = {"L": 0.77, "H": 0.44}
_PR_UNCHANGED = {"N": 0.85, "L": 0.62, "H": 0.27}
_PR_CHANGED = {"N": 0.85, "L": 0.68, "H": 0.5}
_UI = {"N": 0.85, "R": 0.62}
_CIA = {"H": 0.56, "L": 0.22, "N": 0.0}


@dataclass(frozen=True)
class Cvss31Vector:
    AV: str
    AC: str
    PR: str
    UI: str
    S: str
    C: str
    I: str  # noqa: E741
    A: str
    extra: tuple[tuple[str, str], ...] = ()

    def __str__(self):
        base = "/".join(f"{k}:{getattr(self, k)}" for k in _BASE_VALUES)
        tail = "".join(f"/{k}:{v}" for k, v in self.extra)
        return f"CVSS:3.1/{base}{tail}"


def parse_vector(text: str) -> Cvss31Vector:
    """Parse a ``CVSS:3.1/...`` vector.

    Metric order is free; temporal and environmental metrics are accepted
    and validated but do not affect the base score.
    """
    if not isinstance(text, str):
        raise ParseError("vector must be a string")
    parts = text.strip().split("/")
    if parts[0] != "CVSS:3.1":
        raise ParseError(f"vector must start with 'CVSS:3.1', got {parts[0]!r}", token=parts[0])
    seen: dict[str, str] = {}
    for token in parts[1:]:
        name, sep, value = token.partition(":")
        allowed = _BASE_VALUES.get(name) or _OPTIONAL_VALUES.get(name)
        if not sep or allowed is None:
            raise ParseError(f"unknown metric token {token!r}", token=token)
        if name in seen:
            raise ParseError(f"duplicate metric {name!r}", token=token)
        if value not in allowed:
            raise ParseError(f"bad value for {name}: {value!r}", token=token)
        seen[name] = value
    missing = [k for k in _BASE_VALUES if k not in seen]
    if missing:
        raise ParseError(f"missing base metric(s): {', '.join(missing)}", token=missing[0])
    extra = tuple((k, seen[k]) for k in _OPTIONAL_VALUES if k in seen)
    return Cvss31Vector(**{k: seen[k] for k in _BASE_VALUES}, extra=extra)


def roundup(x: float) -> float:
    """CVSS v3.1 Roundup: smallest one-decimal number >= x, float-safe."""
    scaled = round(x * 100000)
    if scaled % 10000 == 0:
        return scaled / 100000.0
    return (math.floor(scaled / 10000) + 1) / 10.0


def score_cvss31_base(v: Cvss31Vector | str) -> Score:
    if isinstance(v, str):
        v = parse_vector(v)
    changed = v.S == "C"
    iss = 1 - (1 - _CIA[v.C]) * (1 - _CIA[v.I]) * (1 - _CIA[v.A])
    if changed:
        impact = 7.52 * (iss - 0.029) - 3.25 * (iss - 0.02) ** 15
    else:
        impact = 6.42 * iss
    pr = (_PR_CHANGED if changed else _PR_UNCHANGED)[v.PR]
    exploitability = 8.22 * _AV[v.AV] * _AC[v.AC] * pr * _UI[v.UI]
    if impact <= 0:
        return Score(0.0, ScoreMethod.CVSS31_BASE)
    if changed:
        value = roundup(min(1.08 * (impact + exploitability), 10))
    else:
        value = roundup(min(impact + exploitability, 10))
    return Score(value, ScoreMethod.CVSS31_BASE)
