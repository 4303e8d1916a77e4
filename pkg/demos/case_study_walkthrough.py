"""
Walk through a bundled case study
=================================

Loads one of the bundled ICS models, enumerates STRIDE threats, attaches
CVE scores from the offline feed and lists the best attack paths.

Run with ``python demos/case_study_walkthrough.py [iom|iop]``.
"""

import sys
from importlib import resources

from icsthreat import attack, model, nvd, report, stride

case = sys.argv[1] if len(sys.argv) > 1 else "iom"


def bundled(name):
    return resources.files("icsthreat.data").joinpath("cases", case, name).read_bytes()


# %%
# Model and architecture checks
# -----------------------------
m = model.parse_model(bundled("model.json"))
print(f"{m.name}: {len(m.elements)} elements, {len(m.flows)} flows")
for issue in model.purdue_check(m):
    print("  purdue:", issue)

# %%
# Threat enumeration
# ------------------
ts = stride.enumerate_threats(m, stride.load_rules(bundled("rules.json")))
for cat, count in stride.summarize_by_category(ts):
    print(f"  {cat.label:<24} {count}")
print("  by asset:", stride.summarize_by_asset(ts))

# %%
# Scores and the top threats
# --------------------------
sts = nvd.attach_scores(ts, nvd.load_feed(bundled("feed.json")),
                        nvd.load_bindings(bundled("bindings.json")))
for row in report.top_n(sts, 5):
    print(f"  {row.score:4.1f}  {row.category.label:<24} {row.interaction}")

# %%
# Attack paths
# ------------
matrix = attack.default_matrix()
g = attack.build_attack_graph(m, ts, matrix, attack.default_mapping(matrix),
                              sts.scores(), sts.cwe_notes())
for p in attack.enumerate_paths(g, max_len=4, max_paths=3):
    print(f"  {p.path_score:.3f}  " + " -> ".join(f"{s.element}:{s.technique.name}"
                                                 for s in p.steps))
