"""STRIDE threat enumeration over a system model.

Threats are produced by a data-driven rule set: each rule names a STRIDE
category and a predicate over a flow (source kind, target kind, whether the
flow crosses a trust boundary). Every flow/rule match yields one threat.
"""

from __future__ import annotations

import enum
import json
import re
import string
from collections import Counter
from dataclasses import dataclass
from importlib import resources

from .errors import DuplicateRuleError, ParseError
from .model import KINDS, SystemModel, require_valid, load_json, trust_boundary_crossings

WILDCARD = "*"
_PLACEHOLDERS = {"source", "target", "flow"}


class StrideCategory(enum.Enum):
    SPOOFING = "spoofing"
    TAMPERING = "tampering"
    REPUDIATION = "repudiation"
    INFORMATION_DISCLOSURE = "information_disclosure"
    DENIAL_OF_SERVICE = "denial_of_service"
    ELEVATION_OF_PRIVILEGE = "elevation_of_privilege"

    @property
    def label(self) -> str:
        """Display name, e.g. ``Denial Of Service``."""
        return self.value.replace("_", " ").title()

    @property
    def definition(self) -> str:
        return _DEFINITIONS[self]

    @property
    def rank(self) -> int:
        """Position in the S-T-R-I-D-E acronym."""
        return _ORDER.index(self)

    @classmethod
    def parse(cls, text: str) -> "StrideCategory":
        key = re.sub(r"[^a-z]", "", str(text).lower())
        for cat in cls:
            if cat.value.replace("_", "") == key:
                return cat
        raise ParseError(f"unknown STRIDE category {text!r}", token=str(text))


_ORDER = list(StrideCategory)
_DEFINITIONS = {
    StrideCategory.SPOOFING: "Disguising the real identity to appear as trusted source",
    StrideCategory.TAMPERING: "Modifying data without permission",
    StrideCategory.REPUDIATION: "Denying taking part in a transaction falsely",
    StrideCategory.INFORMATION_DISCLOSURE: "Revealing sensitive data to unauthorized entities",
    StrideCategory.DENIAL_OF_SERVICE: "Denying access to resource or data",
    StrideCategory.ELEVATION_OF_PRIVILEGE: "Gaining unauthorized access of elevated rights",
}


@dataclass(frozen=True)
class ThreatRule:
    rule_id: str
    category: StrideCategory
    source_kind: str = WILDCARD
    target_kind: str = WILDCARD
    requires_boundary_crossing: bool | None = None  # None = any
    title_template: str = "{flow}"
    description_template: str = ""

    def matches(self, source_kind: str, target_kind: str, crossing: bool) -> bool:
        return ((self.source_kind == WILDCARD or self.source_kind == source_kind)
                and (self.target_kind == WILDCARD or self.target_kind == target_kind)
                and (self.requires_boundary_crossing is None
                     or self.requires_boundary_crossing == crossing))


RuleSet = tuple[ThreatRule, ...]


@dataclass(frozen=True)
class Threat:
    threat_id: str
    category: StrideCategory
    interaction: str
    attributed_asset: str
    title: str
    description: str
    rule_id: str = ""

    def sort_key(self):
        return (self.interaction, self.category.rank, self.rule_id)

    def to_dict(self) -> dict:
        return {
            "threat_id": self.threat_id,
            "category": self.category.value,
            "interaction": self.interaction,
            "asset": self.attributed_asset,
            "rule_id": self.rule_id,
            "title": self.title,
            "description": self.description,
        }


@dataclass(frozen=True)
class ThreatSet:
    model: str
    threats: tuple[Threat, ...] = ()

    def __len__(self):
        return len(self.threats)

    def __iter__(self):
        return iter(self.threats)

    def to_json(self) -> str:
        doc = {"model": self.model, "threats": [t.to_dict() for t in self.threats]}
        return json.dumps(doc, indent=2) + "\n"


# -- rules -------------------------------------------------------------------

def _crossing(value) -> bool | None:
    if value is None or value in ("any", "*"):
        return None
    if value is True or value == "yes":
        return True
    if value is False or value == "no":
        return False
    raise ParseError(f"requires_boundary_crossing must be yes/no/any, got {value!r}",
                     token=str(value))


def _kind(value, where) -> str:
    if value in (None, "*", "any"):
        return WILDCARD
    if value not in KINDS:
        raise ParseError(f"{where}: unknown element kind {value!r}", token=str(value))
    return value


def _check_template(template, where) -> str:
    if not isinstance(template, str):
        raise ParseError(f"{where}: template must be a string")
    try:
        names = {name for _, name, _, _ in string.Formatter().parse(template) if name is not None}
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from None
    unknown = names - _PLACEHOLDERS
    if unknown:
        raise ParseError(f"{where}: unknown placeholder(s) {sorted(unknown)}",
                         token=sorted(unknown)[0])
    return template


def load_rules(text: str | bytes) -> RuleSet:
    doc = load_json(text)
    if isinstance(doc, dict) and "rules" in doc:
        doc = doc["rules"]
    if not isinstance(doc, list):
        raise ParseError("rule file must be a JSON array of rule objects")
    rules, seen = [], set()
    for i, raw in enumerate(doc):
        where = f"rules[{i}]"
        if not isinstance(raw, dict) or "rule_id" not in raw or "category" not in raw:
            raise ParseError(f"{where}: rule needs at least rule_id and category")
        rid = raw["rule_id"]
        if rid in seen:
            raise DuplicateRuleError(f"duplicate rule_id '{rid}'", token=rid)
        seen.add(rid)
        rules.append(ThreatRule(
            rule_id=rid,
            category=StrideCategory.parse(raw["category"]),
            source_kind=_kind(raw.get("source_kind"), where),
            target_kind=_kind(raw.get("target_kind"), where),
            requires_boundary_crossing=_crossing(raw.get("requires_boundary_crossing", "any")),
            title_template=_check_template(raw.get("title_template", "{flow}"), where),
            description_template=_check_template(raw.get("description_template", ""), where),
        ))
    return tuple(rules)


def default_rules() -> RuleSet:
    return load_rules(resources.files("icsthreat.data").joinpath("default_rules.json").read_text())


# -- enumeration -------------------------------------------------------------

def enumerate_threats(m: SystemModel, rules: RuleSet) -> ThreatSet:
    require_valid(m)
    kinds = {el.id: el.kind for el in m.elements}
    crossing = set(trust_boundary_crossings(m))
    threats = []
    for f in m.flows:
        is_crossing = f.id in crossing
        for rule in rules:
            if not rule.matches(kinds[f.source], kinds[f.target], is_crossing):
                continue
            # spoofing impersonates the sender; everything else lands on the receiver
            asset = f.source if rule.category is StrideCategory.SPOOFING else f.target
            values = {"source": f.source, "target": f.target, "flow": f.id}
            threats.append(Threat(
                threat_id=f"{rule.rule_id}@{f.id}",
                category=rule.category,
                interaction=f.id,
                attributed_asset=asset,
                title=rule.title_template.format(**values),
                description=rule.description_template.format(**values),
                rule_id=rule.rule_id,
            ))
    threats.sort(key=Threat.sort_key)
    return ThreatSet(model=m.name, threats=tuple(threats))


def summarize_by_category(ts) -> list[tuple[StrideCategory, int]]:
    """Six rows in alphabetical order of the display label."""
    counts = Counter(t.category for t in ts)
    return [(cat, counts.get(cat, 0)) for cat in sorted(StrideCategory, key=lambda c: c.label)]


def summarize_by_asset(ts) -> dict[str, int]:
    counts = Counter(t.attributed_asset for t in ts)
    return {asset: counts[asset] for asset in sorted(counts)}
