"""
Scoring tour
============

Compares the CVSS v3.1 base calculator with the composite formula and
shows the severity bucket each score falls into.
"""

from icsthreat import scoring

vectors = [
    "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H",
    "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:C/C:H/I:H/A:H",
    "CVSS:3.1/AV:L/AC:H/PR:H/UI:R/S:U/C:L/I:N/A:N",
    "CVSS:3.1/AV:P/AC:H/PR:H/UI:R/S:U/C:N/I:N/A:N",
]
for v in vectors:
    s = scoring.score_cvss31_base(v)
    print(f"{s.value:4.1f} {scoring.severity_bucket(s).value:<8} {v}")

# %%
# The composite formula takes named metric levels; anything left out keeps
# its default level. The default remediation level is an official fix,
# which zeroes the temporal factor, so unpatched cases set RL explicitly.
for pairs in (["RL=Unavailable"],
              ["C=Partial", "I=None", "A=None", "RL=Workaround"],
              ["C=Partial", "I=Partial", "A=Partial", "RL=Unavailable", "CDP=High"],
              ["C=Complete", "I=Complete", "A=Complete"]):
    s = scoring.score_composite(*scoring.parse_metric_pairs(pairs))
    print(f"{s.value:4.1f} {scoring.severity_bucket(s).value:<8} {' '.join(pairs)}")
