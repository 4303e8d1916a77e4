"""Threat modeling and attack-path analysis for industrial control systems."""

from .attack import (AttackGraph, AttackMatrix, AttackPath, AttackStep, MappingTable, Tactic,
                     Technique, build_attack_graph, default_mapping, default_matrix,
                     enumerate_paths, export_paths_dot, load_attack_matrix, load_mapping,
                     map_threat_to_techniques, rank_paths)
from .model import (AssetInventory, Element, Flow, Issue, SystemModel, TrustBoundary,
                    export_dot, identify_assets, parse_model, purdue_check, render_model,
                    trust_boundary_crossings, validate_model)
from .scoring import (BaseMetrics, Cvss31Vector, EnvironmentalMetrics, Score, ScoreMethod,
                      SeverityRating, TemporalMetrics, parse_vector, score_cvss31_base,
                      score_composite, severity_bucket)
from .stride import (StrideCategory, Threat, ThreatRule, ThreatSet, default_rules,
                     enumerate_threats, load_rules, summarize_by_asset, summarize_by_category)

__version__ = "0.1.0"
