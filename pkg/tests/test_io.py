import numpy as np

from nived.geometry import Rectangle, generate_structured_mesh
from nived.io import format_value, header_lines, read_csv, write_csv, write_json, write_vtk


def test_float_format_round_trips():
    x = 0.1 + 0.2
    assert float(format_value(x)) == x
    assert format_value((16, 8)) == "16x8"
    assert format_value(3) == "3"


def test_csv_header_and_rows(tmp_path):
    path = tmp_path / "a.csv"
    write_csv(path, ["a", "b"], [[1.0 / 3, 2], [np.float64(2.5), "x"]], {"seed": 1})
    text = path.read_text().splitlines()
    assert text[0].startswith("# nived") and '"seed": 1' in text[1]
    cols, rows = read_csv(path)
    assert cols == ["a", "b"] and float(rows[0][0]) == 1.0 / 3


def test_json(tmp_path):
    import json
    path = tmp_path / "s.json"
    write_json(path, {"v": np.arange(3), "x": np.float64(1.5)}, {"k": 1})
    data = json.loads(path.read_text())
    assert data["v"] == [0, 1, 2] and data["config"] == {"k": 1} and "nived_version" in data
    assert len(header_lines({})) == 2


def test_vtk_legacy_ascii(tmp_path):
    mesh = generate_structured_mesh(Rectangle(0, 0, 1, 1), 2)
    path = tmp_path / "f.vtk"
    write_vtk(path, mesh, {"u": np.ones((9, 2)), "s": np.zeros((9, 3)), "p": np.arange(9.0)},
              {"a": 1})
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2] == "ASCII" and lines[3] == "DATASET UNSTRUCTURED_GRID"
    assert "POINTS 9 double" in lines and "CELLS 8 32" in lines and "POINT_DATA 9" in lines
    assert "VECTORS u double" in lines and "SCALARS s_12 double 1" in lines
