import json
import os
import sys

sys.path.append(os.getcwd())

import pytest

from emission import Column, emit, read_csv, write_csv, write_plot_script

COLUMNS = [Column("z", "m"), Column("visibility")]
ROWS = [(0.13, 1.0), (0.14, 0.3901234567890123), (0.17, 1e-17)]


def test_written_table_reads_back(tmp_path):
    path = write_csv(str(tmp_path / "fringe.csv"), "fringe", COLUMNS, ROWS, "abc123")
    table = read_csv(path)
    assert table.header["command"] == "fringe"
    assert table.header["config_sha256"] == "abc123"
    assert table.header["columns"] == "z[m],visibility[1]"
    assert [col.unit for col in table.columns] == ["m", "1"]
    assert table.data.shape == (3, 2)
    assert list(table.column("visibility")) == [1.0, 0.3901234567890123, 1e-17]
    with pytest.raises(KeyError):
        table.column("phase")


def test_rewrite_is_byte_identical(tmp_path):
    first = write_csv(str(tmp_path / "a.csv"), "fringe", COLUMNS, ROWS, "abc123")
    second = write_csv(str(tmp_path / "b.csv"), "fringe", COLUMNS, ROWS, "abc123")
    with open(first, "rb") as f, open(second, "rb") as g:
        content = f.read()
        assert content == g.read()
    assert b"\r\n" not in content


def test_row_length_mismatch(tmp_path):
    with pytest.raises(ValueError):
        write_csv(str(tmp_path / "bad.csv"), "fringe", COLUMNS, [(1.0,)], "abc123")


def test_plot_scripts(tmp_path):
    line = write_plot_script(str(tmp_path / "plot_fringe.py"), "fringe.csv", "fringe", COLUMNS)
    with open(line, encoding="utf-8") as f:
        text = f.read()
    assert 'ax.plot(data["z"], data["visibility"], label="visibility[1]")' in text
    assert 'plt.savefig("fringe.png", dpi=200)' in text

    columns = [Column("x", "m"), Column("y", "m"), Column("sigma_z")]
    grid = write_plot_script(str(tmp_path / "plot_texture.py"), "texture.csv", "texture", columns, kind="map")
    with open(grid, encoding="utf-8") as f:
        text = f.read()
    assert 'data["sigma_z"].reshape(len(y), len(x))' in text
    compile(text, grid, "exec")


def test_emit_writes_metadata(tmp_path):
    out = tmp_path / "out"
    csv_path, plot_path, meta_path = emit(
        str(out), "fringe", "fringe", COLUMNS, ROWS, "abc123", {"visibility": 1.0}
    )
    assert sorted(os.listdir(out)) == ["fringe.csv", "fringe.json", "plot_fringe.py"]
    with open(meta_path, encoding="utf-8") as f:
        metadata = json.load(f)
    assert metadata["command"] == "fringe"
    assert metadata["outputs"] == ["fringe.csv", "plot_fringe.py"]
    assert metadata["summary"] == {"visibility": 1.0}
    assert {"numpy", "scipy", "python"} <= set(metadata["versions"])
