import numpy as np
import pytest
from numpy.testing import assert_array_equal

from pcbb.fields import read_field_csv, write_field_csv, write_field_vtk
from pcbb.heat_fvm import Grid


@pytest.mark.parametrize("dim", [2, 3])
def test_csv_round_trip(tmp_path, rng, dim):
    grid = Grid(dim, 3)
    values = rng.normal(size=grid.n)
    path = tmp_path / "f.csv"
    write_field_csv(path, grid, values, "w")
    lines = path.read_text().splitlines()
    assert lines[0] == ("i,j,w" if dim == 2 else "i,j,k,w")
    assert len(lines) == grid.n + 1
    assert_array_equal(read_field_csv(path, grid), values)


def test_csv_indices_follow_grid_axes(tmp_path):
    grid = Grid(2, 2)
    write_field_csv(tmp_path / "f.csv", grid, [0.0, 1.0, 2.0, 3.0])
    rows = tmp_path.joinpath("f.csv").read_text().splitlines()[1:]
    assert rows == ["0,0,0.0", "0,1,1.0", "1,0,2.0", "1,1,3.0"]


def test_size_mismatch(tmp_path):
    with pytest.raises(ValueError):
        write_field_csv(tmp_path / "f.csv", Grid(2, 2), np.zeros(5))


def test_vtk_layout(tmp_path):
    grid = Grid(2, 2)
    # value = 10 i + j, with i along x
    values = np.array([0.0, 1.0, 10.0, 11.0])
    path = tmp_path / "f.vtk"
    write_field_vtk(path, grid, values, "theta")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# vtk DataFile")
    assert "DATASET STRUCTURED_POINTS" in lines
    assert "DIMENSIONS 3 3 1" in lines
    assert "CELL_DATA 4" in lines
    assert "SCALARS theta double 1" in lines
    data = [float(v) for v in lines[lines.index("LOOKUP_TABLE default") + 1 :]]
    # VTK runs x fastest
    assert data == [0.0, 10.0, 1.0, 11.0]


def test_vtk_3d_dimensions(tmp_path):
    grid = Grid(3, 2)
    write_field_vtk(tmp_path / "f.vtk", grid, np.arange(8.0))
    text = tmp_path.joinpath("f.vtk").read_text()
    assert "DIMENSIONS 3 3 3" in text and "SPACING 0.5 0.5 0.5" in text
