"""Command-line driver.

Exit codes: 0 success, 1 validation findings, 2 usage or parse error,
3 file I/O error, 4 network error.

``--case iom`` or ``--case iop`` stands in for the model path and also
selects that case study's bundled rules, feed and bindings unless they are
given explicitly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

from . import attack, model, nvd, report, scoring, stride
from .errors import (BadBoundsError, IcsThreatError, InvalidModelError, NetworkError,
                     ParseError, UnknownBindingError, UnknownTechniqueError,
                     UnmappedCategoryError)

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_IO, EXIT_NETWORK = 0, 1, 2, 3, 4
CASES = ("iom", "iop")


class Inputs:
    """Raw bytes of every input file, kept for the report digest."""

    def __init__(self):
        self.parts: list[bytes] = []

    def read(self, path) -> bytes:
        data = Path(path).read_bytes()
        self.parts.append(data)
        return data

    def bundled(self, *names) -> bytes:
        data = resources.files("icsthreat.data").joinpath(*names).read_bytes()
        self.parts.append(data)
        return data


def _case_file(args, inputs: Inputs, attr: str, filename: str) -> bytes | None:
    path = getattr(args, attr, None)
    if path is not None:
        return inputs.read(path)
    if getattr(args, "case", None):
        return inputs.bundled("cases", args.case, filename)
    return None


def _load_model(args, inputs: Inputs) -> model.SystemModel:
    if (args.model is None) == (getattr(args, "case", None) is None):
        raise _Usage("give exactly one of MODEL or --case")
    text = _case_file(args, inputs, "model", "model.json")
    return model.parse_model(text)


def _load_rules(args, inputs: Inputs) -> stride.RuleSet:
    text = _case_file(args, inputs, "rules", "rules.json")
    if text is None:
        return stride.load_rules(inputs.bundled("default_rules.json"))
    return stride.load_rules(text)


def _load_attack_data(args, inputs: Inputs):
    text = inputs.read(args.matrix) if args.matrix else inputs.bundled("attack_matrix.json")
    matrix = attack.load_attack_matrix(text)
    text = inputs.read(args.mapping) if args.mapping else inputs.bundled("stride_mapping.json")
    return matrix, attack.load_mapping(text, matrix)


def _scored(args, inputs: Inputs, ts) -> nvd.ScoredThreatSet:
    feed = _case_file(args, inputs, "nvd", "feed.json")
    bindings = _case_file(args, inputs, "bindings", "bindings.json")
    catalog = nvd.load_feed(feed) if feed is not None else nvd.CveCatalog()
    fallback = scoring.parse_metric_pairs(args.composite_fallback) if args.composite_fallback else None
    return nvd.attach_scores(ts, catalog, nvd.load_bindings(bindings) if bindings else [],
                             fallback)


class _Usage(Exception):
    pass


def _print_issues(issues) -> None:
    for issue in issues:
        prefix = "warning" if issue.severity == "warning" else "error"
        print(f"{prefix}: {issue}", file=sys.stderr)


def _valid_model(args, inputs: Inputs) -> model.SystemModel:
    m = _load_model(args, inputs)
    issues = model.validate_model(m)
    if issues:
        raise InvalidModelError(f"{len(issues)} validation issue(s)", issues)
    return m


# -- commands ----------------------------------------------------------------

def cmd_validate(args) -> int:
    m = _load_model(args, Inputs())
    issues = model.validate_model(m)
    _print_issues(issues)
    _print_issues(model.purdue_check(m))
    if issues:
        return EXIT_INVALID
    print(f"ok: {len(m.elements)} elements, {len(m.flows)} flows, "
          f"{len(m.boundaries)} trust boundaries")
    return EXIT_OK


def _threats_markdown(ts: stride.ThreatSet) -> str:
    lines = [f"# Threats: {ts.model}", "",
             "| Threat | Category | Interaction | Asset | Title |", "|---|---|---|---|---|"]
    lines += [f"| {t.threat_id} | {t.category.value} | {t.interaction} | "
              f"{t.attributed_asset} | {t.title} |" for t in ts]
    lines += ["", f"{len(ts)} threats", ""]
    return "\n".join(lines)


def cmd_threats(args) -> int:
    inputs = Inputs()
    m = _valid_model(args, inputs)
    ts = stride.enumerate_threats(m, _load_rules(args, inputs))
    sys.stdout.write(ts.to_json() if args.format == "json" else _threats_markdown(ts))
    return EXIT_OK


def _paths(args, inputs: Inputs, m, ts, sts) -> list[attack.AttackPath]:
    matrix, mapping = _load_attack_data(args, inputs)
    g = attack.build_attack_graph(m, ts, matrix, mapping, sts.scores(), sts.cwe_notes())
    return attack.enumerate_paths(g, args.entry, args.goal, args.max_len, args.paths)


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def cmd_paths(args) -> int:
    inputs = Inputs()
    m = _valid_model(args, inputs)
    ts = stride.enumerate_threats(m, _load_rules(args, inputs))
    sts = _scored(args, inputs, ts)
    args.paths = args.top
    paths = _paths(args, inputs, m, ts, sts)
    print("| # | Score | Path |")
    print("|---|---|---|")
    for i, p in enumerate(paths, 1):
        chain = " -> ".join(f"{s.element}:{s.technique.name} ({s.tactic})" for s in p.steps)
        print(f"| {i} | {p.path_score:.4f} | {chain} |")
    if args.dot:
        _write(Path(args.dot), attack.export_paths_dot(paths))
    return EXIT_OK


def cmd_score(args) -> int:
    if args.vector is not None:
        score = scoring.score_cvss31_base(args.vector)
    else:
        score = scoring.score_composite(*scoring.parse_metric_pairs(args.composite))
    print(f"{score} {scoring.severity_bucket(score).value}")
    return EXIT_OK


def cmd_report(args) -> int:
    inputs = Inputs()
    m = _valid_model(args, inputs)
    ts = stride.enumerate_threats(m, _load_rules(args, inputs))
    sts = _scored(args, inputs, ts)
    paths = _paths(args, inputs, m, ts, sts)
    params = json.dumps({"top": args.top, "entry": args.entry, "goal": args.goal,
                         "max_len": args.max_len, "paths": args.paths,
                         "composite_fallback": args.composite_fallback}, sort_keys=True)
    doc = report.build_report(m, sts, paths, args.top, report.digest(*inputs.parts, params))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "report.md", report.render_markdown(doc))
    _write(out / "report.json", report.render_json(doc))
    _write(out / "dfd.dot", model.export_dot(m))
    _write(out / "paths.dot", attack.export_paths_dot(paths))
    print(f"wrote report.md, report.json, dfd.dot, paths.dot to {out}")
    return EXIT_OK


def cmd_fetch_nvd(args) -> int:
    catalog = nvd.fetch_remote(args.endpoint, args.keyword, args.out,
                               api_key=os.environ.get(nvd.API_KEY_ENV))
    print(f"wrote {len(catalog)} records to {args.out}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _model_args(p) -> None:
    p.add_argument("model", nargs="?", help="model JSON file")
    p.add_argument("--case", choices=CASES, help="use a bundled case-study model")


def _pipeline_args(p) -> None:
    _model_args(p)
    p.add_argument("--rules", help="threat rule file (default: bundled)")
    p.add_argument("--matrix", help="ATT&CK for ICS matrix file (default: bundled)")
    p.add_argument("--mapping", help="STRIDE-to-technique mapping file (default: bundled)")
    p.add_argument("--nvd", help="offline CVE feed file")
    p.add_argument("--bindings", help="score bindings file")
    p.add_argument("--entry", default=attack.DEFAULT_ENTRY, help="entry tactic")
    p.add_argument("--goal", default=attack.DEFAULT_GOAL, help="goal tactic")
    p.add_argument("--max-len", type=int, default=4, help="maximum steps per path (min 2)")
    p.add_argument("--composite-fallback", nargs="+", metavar="NAME=Level",
                   help="score unbound threats with the composite formula")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icsthreat", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model and report architecture findings")
    _model_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("threats", help="enumerate STRIDE threats")
    _model_args(p)
    p.add_argument("--rules", help="threat rule file (default: bundled)")
    p.add_argument("--format", choices=("md", "json"), default="json")
    p.set_defaults(func=cmd_threats)

    p = sub.add_parser("paths", help="rank attack paths")
    _pipeline_args(p)
    p.add_argument("--top", type=_positive, default=10, help="number of paths to list")
    p.add_argument("--dot", help="write the listed paths as DOT")
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("score", help="score a CVSS vector or composite metric set")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--vector", help="CVSS:3.1/... base vector")
    mode.add_argument("--composite", "--eq1", dest="composite", nargs="+", metavar="NAME=Level",
                      help="composite metrics, e.g. C=None I=Partial E_t=High")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="write Markdown/JSON report and DOT diagrams")
    _pipeline_args(p)
    p.add_argument("--top", type=_positive, default=5, help="rows in the top-threat table")
    p.add_argument("--paths", type=_positive, default=5, help="attack paths to include")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("fetch-nvd", help=f"download a CVE feed (API key from ${nvd.API_KEY_ENV})")
    p.add_argument("--endpoint", required=True, help="NVD CVE API 2.0 URL")
    p.add_argument("--keyword", required=True)
    p.add_argument("--out", required=True, help="feed file to write")
    p.set_defaults(func=cmd_fetch_nvd)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _Usage as exc:
        parser.error(str(exc))
    except InvalidModelError as exc:
        _print_issues(exc.issues)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (UnknownBindingError, UnmappedCategoryError) as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NetworkError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except (ParseError, BadBoundsError, UnknownTechniqueError, IcsThreatError) as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
