import csv
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mixedelast.experiments import (ExperimentConfig, cauchy_gap, fit_rate, hourglass_flag, run,
                                    run_compression, run_convergence, run_cook, run_infsup_sweep)
from mixedelast.mesh import cook2d, write_mesh


def test_fit_rate():
    h = np.array([0.5, 0.25, 0.125])
    assert_allclose(fit_rate(h, 3 * h ** 2), 2.0)
    assert np.isnan(fit_rate(h[:1], h[:1]))
    assert_allclose(fit_rate(h, [1.0, np.nan, 1.0 / 16]), 2.0)


def test_cauchy_gap():
    assert_allclose(cauchy_gap([1.0, 2.0, 2.02]), 0.02 / 2.02)
    assert np.isnan(cauchy_gap([1.0]))
    assert np.isnan(cauchy_gap([1.0, np.nan]))


def test_hourglass_detector():
    x = np.linspace(0, 1, 11)
    assert not hourglass_flag(x, -x * (1 - x))
    assert hourglass_flag(x, (-1.0) ** np.arange(11) * 0.1 - x)
    assert not hourglass_flag(x[:3], x[:3])
    # order along x does not matter
    perm = np.random.default_rng(0).permutation(11)
    assert hourglass_flag(x[perm], ((-1.0) ** np.arange(11) * 0.1)[perm])


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig.defaults("nope")
    with pytest.raises(ValueError):
        ExperimentConfig.defaults("cook2d", elements="L9N11R1")
    with pytest.raises(ValueError):
        ExperimentConfig.defaults("cook2d", steps=0)
    assert len(ExperimentConfig.defaults("infsup").triples()) == 32


def test_convergence_run_writes_outputs(tmp_path):
    cfg = ExperimentConfig.defaults("convergence", meshes=(2, 4), out=str(tmp_path))
    rows, rates = run_convergence(cfg)
    assert [r.dofs for r in rows] == [82, 274]
    assert_allclose(rows[0].E_U, 1.76e-2, rtol=0.01)
    assert rates["U"] > 1.8
    with open(tmp_path / "convergence.csv") as fh:
        table = list(csv.reader(fh))
    assert table[0][:6] == ["mesh", "dofs", "h", "E_U", "E_K", "E_P"]
    assert "e-" in table[1][3]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["lambda"] == 1.0 and manifest["experiment"] == "convergence"


def test_unstable_triple_failure_is_recorded():
    rows, rates = run_convergence(ExperimentConfig.defaults("convergence", elements="L2N11R1",
                                                            meshes=(2,)))
    assert not rows[0].converged and "SingularSystem" in rows[0].error
    assert np.isnan(rates["U"])


def test_cook_moderate_lambda(tmp_path):
    cfg = ExperimentConfig.defaults("cook2d", lam=400.0, loads=(24.0, 32.0), meshes=(2, 4),
                                    out=str(tmp_path))
    rows = run_cook(cfg)
    assert all(r.converged for r in rows)
    by_load = {f: [r.norm_U for r in rows if r.load == f] for f in (24.0, 32.0)}
    assert all(b > a for a, b in zip(by_load[24.0], by_load[32.0]))
    assert all(r.quantity > 0 and r.vtk for r in rows)
    assert (tmp_path / "cook2d.csv").exists()


def test_cook_from_mesh_file(tmp_path):
    write_mesh(cook2d(2), tmp_path / "c.msh")
    cfg = ExperimentConfig.defaults("cook2d", lam=400.0, loads=(24.0,),
                                    mesh_files=(str(tmp_path / "c.msh"),))
    rows = run_cook(cfg)
    assert rows[0].converged and rows[0].N_e == 8


def test_cook3d_small():
    cfg = ExperimentConfig.defaults("cook3d", lam=120.0, loads=(6.0,), meshes=(2,), steps=2)
    rows = run_cook(cfg, dim=3)
    assert rows[0].converged and rows[0].quantity > 0
    with pytest.raises(ValueError):
        run_cook(ExperimentConfig.defaults("cook2d", params={"direction": "z"}), dim=2)


def test_compression_zero_load():
    rows = run_compression(ExperimentConfig.defaults("compression", loads=(0.0,), meshes=(2,),
                                                     steps=1))
    assert rows[0].converged and rows[0].quantity == 0.0 and rows[0].hourglass is False


def test_compression_moderate_lambda():
    rows = run_compression(ExperimentConfig.defaults("compression", lam=400.0, loads=(60.0,),
                                                     meshes=(2, 4)))
    assert all(r.converged and not r.hourglass for r in rows)
    q = [r.quantity for r in rows]
    assert 0 < q[0] < 50 and abs(q[1] - q[0]) / q[1] < 0.05


def test_infsup_sweep_small(tmp_path):
    cfg = ExperimentConfig.defaults("infsup", elements=("L1N11R1", "L2N11B1"), meshes=(2,),
                                    out=str(tmp_path))
    reps = run_infsup_sweep(cfg)
    assert [r.stable for r in reps] == [True, False]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["results"]["unstable"] == ["L2N11B1"]


def test_infsup_empty_mesh_list(tmp_path):
    cfg = ExperimentConfig.defaults("infsup", meshes=(), out=str(tmp_path))
    assert run(cfg) == []
    lines = (tmp_path / "infsup.csv").read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("elements,dim,N_e")
