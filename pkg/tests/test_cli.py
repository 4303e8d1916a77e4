import json
import os
import pathlib
import subprocess
import sys

import pydot
import pytest

from icsthreat import cli
from icsthreat.nvd import load_feed

from conftest import case_path
from mock_nvd import api_item, serve


def run(capsys, *argv):
    try:
        code = cli.main(list(argv))
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def model_file(tmp_path):
    def write(doc, name="model.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)
    return write


# -- validate ----------------------------------------------------------------

def test_validate_fixture(capsys):
    code, out, err = run(capsys, "validate", case_path("iom", "model.json"))
    assert code == 0 and out.startswith("ok: 5 elements, 9 flows")
    assert err == ""


def test_validate_prints_purdue_warnings(capsys):
    code, _, err = run(capsys, "validate", "--case", "iop")
    assert code == 0
    assert "warning: WARNING NO_DMZ [human_to_scada]" in err


def test_validate_ref_unknown(capsys, model_file):
    path = model_file({"name": "m", "elements": [
        {"id": "plc", "name": "PLC", "kind": "process", "purdue_level": 1}],
        "flows": [{"source": "plc", "target": "plx"}]})
    code, _, err = run(capsys, "validate", path)
    assert code == 1 and "REF_UNKNOWN [plx]" in err


def test_validate_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "validate", str(tmp_path / "nope.json"))
    assert code == 3 and "nope.json" in err


def test_validate_parse_error(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"name": ')
    code, _, err = run(capsys, "validate", str(path))
    assert code == 2 and "PARSE_ERROR" in err


def test_model_and_case_exclusive(capsys):
    assert run(capsys, "validate")[0] == 2
    assert run(capsys, "validate", "--case", "iom", case_path("iom", "model.json"))[0] == 2


# -- threats -----------------------------------------------------------------

def test_threats_iop_json(capsys):
    code, out, _ = run(capsys, "threats", "--case", "iop")
    assert code == 0
    doc = json.loads(out)
    assert len(doc["threats"]) == 172
    assert any(t["category"] == "elevation_of_privilege" and t["interaction"] == "plc_to_rtu"
               for t in doc["threats"])


def test_threats_default_rules_markdown(capsys):
    code, out, _ = run(capsys, "threats", case_path("iop", "model.json"), "--format", "md")
    assert code == 0 and "| elevation_of_privilege | plc_to_rtu |" in out


def test_threats_empty_model(capsys, model_file):
    code, out, _ = run(capsys, "threats", model_file({"name": "empty", "elements": [], "flows": []}))
    assert code == 0 and json.loads(out)["threats"] == []


def test_threats_bad_format(capsys):
    code, _, err = run(capsys, "threats", "--case", "iom", "--format", "xml")
    assert code == 2 and "usage:" in err


def test_threats_invalid_model(capsys, model_file):
    path = model_file({"name": "m", "elements": [
        {"id": "plc", "name": "PLC", "kind": "process", "purdue_level": 9}]})
    code, _, err = run(capsys, "threats", path)
    assert code == 1 and "LEVEL_RANGE" in err


def test_threats_custom_rules(capsys, tmp_path):
    rules = tmp_path / "rules.json"
    rules.write_text(json.dumps([{"rule_id": "X", "category": "Tampering"}]))
    code, out, _ = run(capsys, "threats", "--case", "iom", "--rules", str(rules))
    assert code == 0 and len(json.loads(out)["threats"]) == 9


# -- paths -------------------------------------------------------------------

def test_paths_defaults_reach_impact(capsys):
    code, out, _ = run(capsys, "paths", "--case", "iom")
    assert code == 0
    table = [line for line in out.splitlines() if line.startswith("| 1 ")]
    assert table and table[0].rstrip(" |").endswith("(Impact)")


def test_paths_max_len_one(capsys):
    code, _, err = run(capsys, "paths", "--case", "iom", "--max-len", "1")
    assert code == 2 and "BAD_BOUNDS" in err


def test_paths_dot(capsys, tmp_path):
    out = tmp_path / "out.dot"
    code, _, _ = run(capsys, "paths", "--case", "iop", "--top", "3", "--dot", str(out))
    assert code == 0
    graph = pydot.graph_from_dot_data(out.read_text())[0]
    assert len(graph.get_subgraphs()) == 3


def test_paths_unknown_tactic(capsys):
    assert run(capsys, "paths", "--case", "iom", "--goal", "Exfiltration")[0] == 2


# -- score -------------------------------------------------------------------

def test_score_vector(capsys):
    code, out, _ = run(capsys, "score", "--vector", "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H")
    assert code == 0 and out == "9.8 Critical\n"


def test_score_composite_none(capsys):
    code, out, _ = run(capsys, "score", "--eq1", "C=None", "I=None", "A=None", "RL=Unavailable")
    assert code == 0 and out == "0.0 None\n"


def test_score_composite_clamped(capsys):
    code, out, _ = run(capsys, "score", "--composite", "E_t=High", "RL=Unavailable", "CDP=None",
                       "IMP=Low", "E_base=High")
    assert out == "10.0 Critical\n"


@pytest.mark.parametrize("argv", [
    ["score", "--vector", "CVSS:3.1/AV:N", "--eq1", "C=None"],
    ["score"],
    ["score", "--vector", "CVSS:3.1/AV:N/AC:L"],
    ["score", "--eq1", "C=Maybe"],
])
def test_score_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


# -- report ------------------------------------------------------------------

def test_report_iom_top5_explicit_files(capsys, tmp_path):
    code, _, _ = run(capsys, "report", case_path("iom", "model.json"),
                     "--rules", case_path("iom", "rules.json"),
                     "--nvd", case_path("iom", "feed.json"),
                     "--bindings", case_path("iom", "bindings.json"),
                     "--top", "5", "--out", str(tmp_path))
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["dfd.dot", "paths.dot", "report.json",
                                                          "report.md"]
    top = json.loads((tmp_path / "report.json").read_text())["top_threats"]
    assert [(r["category"], r["interaction"], r["score"]) for r in top] == [
        ("spoofing", "sensor_to_plc", 9.8), ("tampering", "plc_to_sensor", 9.8),
        ("spoofing", "actuator_to_plc", 7.5), ("information_disclosure", "plc_to_hmi", 7.5),
        ("spoofing", "plc_to_hmi", 4.8)]
    for name in ("dfd.dot", "paths.dot"):
        assert pydot.graph_from_dot_data((tmp_path / name).read_text())


def test_report_rerun_identical(capsys, tmp_path):
    for d in ("a", "b"):
        assert run(capsys, "report", "--case", "iop", "--out", str(tmp_path / d))[0] == 0
    for name in ("report.md", "report.json", "dfd.dot", "paths.dot"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_report_read_only_dir(capsys, tmp_path, monkeypatch):
    target = tmp_path / "ro"
    target.mkdir()
    target.chmod(0o500)
    if os.geteuid() == 0:
        # root bypasses mode bits, so fail the write the way the kernel would
        real = pathlib.Path.write_text

        def deny(self, *args, **kwargs):
            if self.parent == target:
                raise PermissionError(13, "Permission denied", str(self))
            return real(self, *args, **kwargs)
        monkeypatch.setattr(pathlib.Path, "write_text", deny)
    try:
        code, _, err = run(capsys, "report", "--case", "iom", "--out", str(target))
        assert code == 3 and "Permission denied" in err
    finally:
        target.chmod(0o700)


def test_report_out_is_a_file(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run(capsys, "report", "--case", "iom", "--out", str(blocker))[0] == 3


def test_report_bad_binding(capsys, tmp_path):
    bindings = tmp_path / "b.json"
    bindings.write_text(json.dumps([{"interaction": "nowhere", "category": "Spoofing",
                                     "score": 5}]))
    code, _, err = run(capsys, "report", "--case", "iom", "--bindings", str(bindings),
                       "--out", str(tmp_path / "o"))
    assert code == 1 and "UNKNOWN_BINDING" in err


def test_report_composite_fallback_scores_everything(capsys, tmp_path):
    code, _, _ = run(capsys, "report", "--case", "iom", "--top", "200", "--out", str(tmp_path),
                     "--composite-fallback", "RL=Unavailable", "IMP=Critical")
    assert code == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    pairs = {(r["category"], r["interaction"]) for r in doc["top_threats"]}
    assert doc["top_threats"][0]["score"] == 9.8 and len(pairs) == len(doc["top_threats"]) > 5


# -- fetch-nvd ---------------------------------------------------------------

def test_fetch_nvd_mock(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("NVD_API_KEY", "secret")
    out = tmp_path / "feed.json"
    items = [api_item("CVE-2023-0001", "Schneider Electric PLC", 9.8,
                      "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H")]
    with serve(items) as url:
        code, stdout, _ = run(capsys, "fetch-nvd", "--endpoint", url, "--keyword", "schneider",
                              "--out", str(out))
        headers = serve.requests[0][2]
    assert code == 0 and "1 records" in stdout
    assert headers.get("apiKey") == "secret"
    assert len(load_feed(out.read_text())) == 1


def test_fetch_nvd_needs_endpoint(capsys, tmp_path):
    assert run(capsys, "fetch-nvd", "--keyword", "x", "--out", str(tmp_path / "f"))[0] == 2


def test_fetch_nvd_server_error(capsys, tmp_path):
    with serve(status=500) as url:
        code, _, err = run(capsys, "fetch-nvd", "--endpoint", url, "--keyword", "x",
                           "--out", str(tmp_path / "f.json"))
    assert code == 4 and "BAD_RESPONSE" in err
    assert not (tmp_path / "f.json").exists()


# -- entry points ------------------------------------------------------------

def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "icsthreat", "score", "--vector",
                           "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:N/I:N/A:H"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == "7.5 High\n"


def test_no_command_is_usage_error(capsys):
    assert run(capsys)[0] == 2
