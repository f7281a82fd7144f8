import numpy as np
import pytest

from ssalign import io
from ssalign.errors import InputError


def test_matrix_csv_round_trip(tmp_path, rng):
    m = rng.standard_normal((3, 4))
    io.write_matrix_csv(tmp_path / "m.csv", m, header="note")
    back, headers = io.read_matrix_csv(tmp_path / "m.csv")
    np.testing.assert_array_equal(back, m)
    assert headers == ["# note"]


def test_matrix_csv_errors_name_location(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,abc\n")
    with pytest.raises(InputError, match=r"bad.csv: row 2, column 2"):
        io.read_matrix_csv(path)
    path.write_text("1,2\n3\n")
    with pytest.raises(InputError, match="row 2 has 1 columns"):
        io.read_matrix_csv(path)
    path.write_text("1,nan\n")
    with pytest.raises(InputError, match="non-finite"):
        io.read_matrix_csv(path)
    path.write_text("# only a comment\n")
    with pytest.raises(InputError, match="no data"):
        io.read_matrix_csv(path)
    with pytest.raises(InputError, match="cannot read"):
        io.read_matrix_csv(tmp_path / "missing.csv")


def test_features_dim_header(tmp_path):
    io.write_features_csv(tmp_path / "f.csv", np.ones((2, 3)))
    assert (tmp_path / "f.csv").read_text().startswith("# dim=3\n")
    assert io.read_features_csv(tmp_path / "f.csv").shape == (2, 3)
    (tmp_path / "g.csv").write_text("dim=4\n1,2,3\n")
    with pytest.raises(InputError, match="dim=4"):
        io.read_features_csv(tmp_path / "g.csv")


def test_pgm_round_trip_quantised(tmp_path):
    grid = np.array([[0.0, 0.5], [1.0, 0.25]])
    io.write_pgm(tmp_path / "g.pgm", grid)
    text = (tmp_path / "g.pgm").read_text()
    assert text.splitlines()[:3] == ["P2", "2 2", "65535"]
    back = io.read_pgm(tmp_path / "g.pgm")
    np.testing.assert_allclose(back, grid, atol=0.5 / 65535)
    io.write_pgm(tmp_path / "h.pgm", back)
    assert (tmp_path / "h.pgm").read_text() == text


def test_pgm_with_comments(tmp_path):
    (tmp_path / "c.pgm").write_text("P2\n# made by hand\n2 1\n10\n0 10\n")
    np.testing.assert_array_equal(io.read_pgm(tmp_path / "c.pgm"), [[0.0, 1.0]])


@pytest.mark.parametrize(
    "content",
    ["P5\n1 1\n255\n0\n", "P2\n2 2\n255\n0 1 2\n", "P2\n1 1\n10\n11\n", "P2\nx 1\n10\n0\n", ""],
)
def test_pgm_malformed(tmp_path, content):
    (tmp_path / "bad.pgm").write_text(content)
    with pytest.raises(InputError):
        io.read_pgm(tmp_path / "bad.pgm")


def test_read_grid_dispatches_on_extension(tmp_path):
    io.write_matrix_csv(tmp_path / "g.csv", [[0.1, 0.2]])
    np.testing.assert_array_equal(io.read_grid(tmp_path / "g.csv"), [[0.1, 0.2]])
    io.write_pgm(tmp_path / "g.pgm", [[0.0, 1.0]])
    np.testing.assert_array_equal(io.read_grid(tmp_path / "g.pgm"), [[0.0, 1.0]])


def test_json_sorted_and_errors(tmp_path):
    io.write_json(tmp_path / "r.json", {"b": 1, "a": [1.5]})
    assert (tmp_path / "r.json").read_text().index('"a"') < (tmp_path / "r.json").read_text().index('"b"')
    assert io.read_json(tmp_path / "r.json") == {"a": [1.5], "b": 1}
    (tmp_path / "x.json").write_text("{oops")
    with pytest.raises(InputError, match="invalid JSON"):
        io.read_json(tmp_path / "x.json")
