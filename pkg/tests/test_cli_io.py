import itertools
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from polytopt.cli import main
from polytopt.config import config_from_dict, dump_config, load_config, parse_config
from polytopt.exceptions import ConfigError
from polytopt.exporters import export_history, export_vtk, read_history, read_vtk
from polytopt.topopt import HistoryRow
from polytopt.voromesh import PolyMesh, extract_faces

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
MINIMAL = "domain: {type: box, lo: [0, 0, 0], hi: [1, 1, 1]}\nmesh: {n_seeds: 30}\nvolume_fraction: 0.3\n"


# ---------------------------------------------------------------- config

def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    table = {
        (cfg.simp.penal, 3.0), (cfg.simp.eps, 1e-4), (cfg.material.E, 1e4), (cfg.material.nu, 0.3),
        (cfg.optimizer.max_iter, 300), (cfg.optimizer.change_tol, 0.01), (cfg.mesh.reflection_c, 1.5),
        (cfg.optimizer.move, 0.2), (cfg.optimizer.damping, 0.5), (cfg.mesh.lloyd_iters, 50),
        (cfg.solver.tol, 1e-8), (cfg.solver.max_iter, 10_000),
    }
    for got, want in table:
        assert got == want
    assert cfg.objective.kind == "compliance" and cfg.filter_radius() is None


def test_incompressible_rejected():
    with pytest.raises(ConfigError, match="material.nu"):
        parse_config(MINIMAL + "material: {nu: 0.5}\n")


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="filterr"):
        parse_config(MINIMAL + "filterr: {radius: 0.1}\n")
    with pytest.raises(ConfigError, match=r"optimizer.*'movee'"):
        parse_config(MINIMAL + "optimizer: {movee: 0.1}\n")
    with pytest.raises(ConfigError, match=r"supports\[0\]"):
        parse_config(MINIMAL + "supports: [{point: [0, 0, 0], component: [x]}]\n")


def test_scientific_notation_and_types():
    cfg = parse_config(MINIMAL + "material: {E: 2e5}\nsimp: {eps: 1e-3}\n")
    assert cfg.material.E == 2e5 and cfg.simp.eps == 1e-3
    with pytest.raises(ConfigError, match="mesh.n_seeds"):
        parse_config(MINIMAL.replace("n_seeds: 30", "n_seeds: many"))


def test_relative_filter_radius():
    cfg = parse_config(MINIMAL.replace("hi: [1, 1, 1]", "hi: [2, 1, 1]") + "filter: {radius: 0.05, relative: true}\n")
    assert cfg.filter_radius() == pytest.approx(0.1)
    cfg = parse_config(MINIMAL + "filter: {radius: 0.07}\n")
    assert cfg.filter_radius() == pytest.approx(0.07)


def test_mechanism_requires_output():
    with pytest.raises(ConfigError, match="objective.output"):
        parse_config(MINIMAL + "objective: {kind: mechanism}\n")


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_roundtrip(path):
    cfg = load_config(path)
    again = parse_config(dump_config(cfg))
    assert again == cfg


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="nope.yaml"):
        load_config(tmp_path / "nope.yaml")


# ---------------------------------------------------------------- VTK

CUBE = np.array(list(itertools.product([0, 1], repeat=3)), float)


def test_vtk_single_cube(tmp_path):
    mesh = PolyMesh(CUBE, [extract_faces(CUBE)])
    p = tmp_path / "cube.vtk"
    export_vtk(mesh, [1.0], p)
    text = p.read_text()
    assert "POINTS 8 double" in text and "CELLS 1 " in text and "CELL_TYPES 1\n42\n" in text
    assert "SCALARS density double 1" in text
    v, els, rho = read_vtk(p)
    np.testing.assert_array_equal(v, CUBE)
    assert len(els) == 1 and len(els[0]) == 6
    assert rho.tolist() == [1.0]


def test_vtk_roundtrip(tmp_path, cube_mesh_50, rng):
    rho = rng.random(cube_mesh_50.n_elements)
    p = tmp_path / "m.vtk"
    export_vtk(cube_mesh_50, rho, p)
    v, els, back = read_vtk(p)
    np.testing.assert_array_equal(v, cube_mesh_50.vertices)
    np.testing.assert_array_equal(back, rho)
    for a, b in zip(els, cube_mesh_50.elements):
        assert len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def test_vtk_density_length(tmp_path, cube_mesh_50):
    with pytest.raises(ValueError):
        export_vtk(cube_mesh_50, np.ones(3), tmp_path / "x.vtk")


# ---------------------------------------------------------------- history

def test_history_single_row(tmp_path):
    p = tmp_path / "h.csv"
    export_history([HistoryRow(1, 0.1, 0.3, 0.2)], p)
    lines = p.read_text().splitlines()
    assert lines == ["iteration,objective,volume_fraction,max_density_change", "1,0.1,0.3,0.2"]


def test_history_roundtrip(tmp_path, rng):
    rows = [HistoryRow(i + 1, *rng.random(3)) for i in range(25)]
    p = tmp_path / "h.csv"
    export_history(rows, p)
    back = read_history(p)
    assert [r.iteration for r in back] == list(range(1, 26))
    for a, b in zip(rows, back):
        assert abs(a.objective - b.objective) <= 1e-12 * abs(a.objective)
        assert a == b


def test_history_empty(tmp_path):
    with pytest.raises(ValueError):
        export_history([], tmp_path / "h.csv")


# ---------------------------------------------------------------- CLI

def _write(tmp_path, text, name="p.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


SMALL_CANTILEVER = """
name: small
domain: {type: box, lo: [0, 0, 0], hi: [2, 1, 0.5]}
volume_fraction: 0.3
mesh: {n_seeds: 40, lloyd_iters: 10}
filter: {radius: 0.3}
optimizer: {max_iter: 6}
supports:
  - region: {type: plane, point: [0, 0, 0], normal: [1, 0, 0]}
  - region: {type: plane, point: [0, 0, 0.5], normal: [0, 0, -1]}
    components: [z]
loads:
  - point: [2, 0.5, 0.5]
    force: [0, -1, 0]
"""


def test_cli_optimize_outputs(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL_CANTILEVER)
    out = tmp_path / "out"
    assert main(["optimize", str(cfg), "--output-dir", str(out), "--seed", "3"]) == 0
    assert (out / "small.vtk").exists() and (out / "small_history.csv").exists() and (out / "small.mesh").exists()
    assert "objective:" in capsys.readouterr().out
    hist = read_history(out / "small_history.csv")
    assert 1 <= len(hist) <= 6


def test_cli_deterministic(tmp_path):
    cfg = _write(tmp_path, SMALL_CANTILEVER)
    for d in ("a", "b"):
        assert main(["optimize", str(cfg), "--output-dir", str(tmp_path / d), "--threads", "2"]) == 0
    for f in ("small.vtk", "small_history.csv", "small.mesh"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_cli_patch_test(capsys):
    assert main(["patch-test", str(CONFIGS / "cube.yaml")]) == 0
    out = capsys.readouterr().out
    err = float(out.split("max interior error")[1].split()[0])
    assert err < 1e-8


def test_cli_mesh_stats_analyze(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL_CANTILEVER)
    assert main(["mesh", str(cfg), "--output-dir", str(tmp_path)]) == 0
    assert (tmp_path / "small_stats.txt").read_text().startswith("elements: 40")
    capsys.readouterr()
    assert main(["stats", str(tmp_path / "small.mesh")]) == 0
    assert "vertices per element" in capsys.readouterr().out
    assert main(["analyze", str(cfg)]) == 0
    assert "compliance (full material)" in capsys.readouterr().out


def test_cli_missing_file(tmp_path, capsys):
    missing = tmp_path / "missing.yaml"
    assert main(["optimize", str(missing)]) != 0
    assert str(missing) in capsys.readouterr().err


def test_cli_bad_config(tmp_path, capsys):
    cfg = _write(tmp_path, MINIMAL + "filterr: 1\n")
    assert main(["mesh", str(cfg)]) != 0
    assert "filterr" in capsys.readouterr().err


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "polytopt.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("mesh", "analyze", "optimize", "patch-test", "stats"):
        assert cmd in r.stdout
