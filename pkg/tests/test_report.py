import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from tapknock.report import fmt, report_summary, summary_line, write_report
from tapknock.protocols import CellResult, EvalReport
from tapknock.svg import STOPS, colour, heatmap


def test_fmt():
    assert fmt(0.123456) == "0.1235" and fmt(None) == "NA" and fmt(float("nan")) == "NA" and fmt(1) == "1.0000"


def test_colour_stops():
    for value, hex_colour in STOPS:
        assert colour(value) == hex_colour
    assert colour(-1.0) == STOPS[0][1] and colour(0.9) == STOPS[-1][1]
    mid = colour(0.05)
    assert mid not in (STOPS[0][1], STOPS[1][1])


def test_heatmap_is_valid_svg():
    grid = np.array([[0.1, np.nan], [0.3, 0.45]])
    svg = heatmap(grid, ["2", "4"], ["0", "0.5"], "a < b")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    texts = [t.text for t in root.iter() if t.tag.endswith("text")]
    assert "n/a" in texts and "0.4500" in texts and "a < b" in texts
    with pytest.raises(ValueError, match="does not match"):
        heatmap(grid, ["2"], ["0", "0.5"])


def _report():
    grid = np.linspace(0, 1, 3)
    cells = [CellResult((u, t), s, e, 0.5, 4, 12, np.array([1, 0.5, 0]), np.array([0, 0.25, 1]), None, ("f1", "f2"))
             for u, t, s, e in [("u01", "1", 0, 0.1), ("u01", "1", 1, 0.2), ("u02", "1", 0, 0.0), ("u02", "1", 1, 0.3)]]
    return EvalReport("terminal-agnostic", ("user", "terminal"), {"window": "2.5"}, cells, [], grid)


def test_report_files(tmp_path):
    rep = _report()
    assert summary_line(rep) == "mean EER = 0.1500"
    write_report(rep, tmp_path)
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert doc == report_summary(rep)
    assert doc["per_user"]["u01"]["eer"] == 0.15 and doc["per_seed_eer"] == [0.05, 0.25]
    assert doc["per_terminal"] == {"1": 0.15}
    users = (tmp_path / "users.tsv").read_text().splitlines()
    assert users == ["user\teer\ttheta\tclassifiers", "u01\t0.1500\t0.5000\t2", "u02\t0.1500\t0.5000\t2"]
    assert (tmp_path / "importance.tsv").read_text().splitlines()[1] == "f1\t4"
