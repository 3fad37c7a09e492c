import json

import pytest

from icon2.cli import main, parse_attr
from icon2.errors import UsageError
from icon2.report import validate

SPEC = {
    "num_images": 300,
    "sensitive_marginals": {"low": 0.5, "high": 0.5},
    "classes": ["car", "truck"],
    "explanatory": [
        {"name": "size", "level": "instance", "values": ["small", "large"],
         "conditional": {"low": {"small": 0.8, "large": 0.2}, "high": {"small": 0.2, "large": 0.8}},
         "models": {"small": {"detect_prob": 0.5}, "large": {"detect_prob": 0.9}}},
        {"name": "time", "level": "image", "values": ["day", "night"], "marginal": {"day": 0.5, "night": 0.5}},
    ],
    "clutter_fp_rate": 1.0,
    "seed": 3,
}


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    root = tmp_path_factory.mktemp("scenario")
    (root / "spec.json").write_text(json.dumps(SPEC))
    assert main(["synth", "--spec", str(root / "spec.json"), "--out", str(root / "data")]) == 0
    return root / "data"


def _common(data, out, *extra):
    return ["--gt", str(data / "gt.json"), "--dets", str(data / "dets.json"),
            "--attr", f"income={data / 'attr_income.csv'}",
            "--attr", f"size={data / 'attr_size.csv'}",
            "--attr", f"time={data / 'attr_time.csv'}",
            "--out", str(out), "--boot-reps", "100", "--min-support", "20", *extra]


def test_audit_outputs_validate(scenario, tmp_path, capsys):
    assert main(["audit", *_common(scenario, tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "audit.json").read_text())
    validate(doc)
    assert [c["class_name"] for c in doc["classes"]] == ["car", "truck"]
    assert doc["classes"][0]["ranking"][0]["attribute"] == "size"
    assert (tmp_path / "o" / "report.md").read_text().startswith("# ")
    header = (tmp_path / "o" / "controlled_ap_points.csv").read_text().splitlines()[0]
    assert header.startswith("class,explanatory_attribute,sensitive_value,explanatory_value,ap,ci_low,ci_high")
    assert "σ=" in capsys.readouterr().out


def test_rerun_is_byte_identical(scenario, tmp_path):
    for name in ("a", "b"):
        assert main(["audit", *_common(scenario, tmp_path / name), "--seed", "7"]) == 0
    for f in ("audit.json", "report.md", "controlled_ap_points.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.parametrize("cmd,files", [
    ("evaluate", ["ap_by_group.json", "ap_by_group.csv", "report.md"]),
    ("rank", ["ranking.json", "report.md"]),
    ("control", ["control_car_size.json", "control_truck_time.json", "controlled_ap_points.csv", "report.md"]),
])
def test_subcommand_outputs(scenario, tmp_path, cmd, files):
    assert main([cmd, *_common(scenario, tmp_path)]) == 0
    for f in files:
        assert (tmp_path / f).is_file(), f
        if f.endswith(".json"):
            validate(json.loads((tmp_path / f).read_text()))


def test_manifest_and_class_filter(scenario, tmp_path):
    assert main(["evaluate", "--manifest", str(scenario / "manifest.json"), "--classes", "truck",
                 "--out", str(tmp_path), "--boot-reps", "0", "--min-support", "1"]) == 0
    doc = json.loads((tmp_path / "ap_by_group.json").read_text())
    assert [c["class_name"] for c in doc["classes"]] == ["truck"]
    assert doc["sensitive"] == "income" and doc["sensitive_values"] == ["low", "high"]


def test_missing_detections_exit_2(scenario, tmp_path, capsys):
    args = _common(scenario, tmp_path)
    args[3] = str(tmp_path / "nowhere.json")
    assert main(["evaluate", *args]) == 2
    assert "nowhere.json" in capsys.readouterr().err


def test_invalid_spec_exit_2(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({**SPEC, "num_images": 0}))
    assert main(["synth", "--spec", str(tmp_path / "bad.json"), "--out", str(tmp_path / "x")]) == 2
    assert "num_images" in capsys.readouterr().err


def test_unknown_attribute_exit_2(scenario, tmp_path):
    assert main(["rank", *_common(scenario, tmp_path), "--explanatory", "weather"]) == 2


def test_unreliable_cells_exit_1(scenario, tmp_path):
    args = _common(scenario, tmp_path) + ["--min-support", "100000"]
    assert main(["evaluate", *args]) == 1
    assert (tmp_path / "ap_by_group.json").is_file()
    assert main(["evaluate", *args, "--allow-unreliable"]) == 0


def test_derived_attributes(scenario, tmp_path):
    assert main(["rank", *_common(scenario, tmp_path), "--derive", "aspect_ratio", "--derive", "crowdedness",
                 "--explanatory", "aspect_ratio", "--explanatory", "crowdedness"]) == 0
    doc = json.loads((tmp_path / "ranking.json").read_text())
    assert {e["attribute"] for e in doc["classes"][0]["entries"]} == {"aspect_ratio", "crowdedness"}


def test_bundled_example_round_trip(tmp_path, monkeypatch):
    monkeypatch.setenv("ICON2_NO_COLOR", "1")
    assert main(["synth", "--out", str(tmp_path / "data"), "--seed", "1"]) == 0
    assert main(["rank", "--manifest", str(tmp_path / "data" / "manifest.json"), "--out", str(tmp_path / "o"),
                 "--boot-reps", "0"]) == 0
    doc = json.loads((tmp_path / "o" / "ranking.json").read_text())
    assert doc["classes"][0]["entries"][0]["attribute"] == "size"


def test_parse_attr():
    a = parse_attr("income=inc.csv:image:sensitive:bins=3")
    assert (a.name, str(a.path), a.level, a.kind, a.binning.num_bins) == ("income", "inc.csv", "image", "sensitive", 3)
    e = parse_attr("h=h.csv:edges=10,20")
    assert e.binning.edges == (10.0, 20.0) and e.binning.num_bins == 3
    for bad in ("nopath", "x=p.csv:image", "x=p.csv:pixel:sensitive", "x=p.csv:bins=two"):
        with pytest.raises(UsageError):
            parse_attr(bad)
