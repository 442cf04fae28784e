import numpy as np
import pytest

import skel


def test_stable_parameterization_and_recovery():
    rng = np.random.default_rng(0)
    a = skel.stable_dt_operator(rng.normal(size=(6, 6)), rng.normal(size=(3, 3)))
    assert skel.spectral_radius(a) < 1.0
    target = rng.uniform(-1, 1, size=(4, 4))
    target *= 0.9 / max(abs(np.linalg.eigvals(target)))
    l, r = skel.recover_stable_dt(target)
    assert np.linalg.norm(skel.stable_dt_operator(l, r) - target) < 1e-6


def test_dlyap_and_expm_match_numpy_oracles():
    rng = np.random.default_rng(1)
    a = rng.uniform(-1, 1, size=(5, 5))
    a *= 0.8 / max(abs(np.linalg.eigvals(a)))
    p = skel.solve_dlyap(a, np.eye(5))
    assert np.linalg.norm(p - a.T @ p @ a - np.eye(5)) < 1e-10
    w, v = np.linalg.eig(0.3 * a)
    oracle = (v @ np.diag(np.exp(w)) @ np.linalg.inv(v)).real
    assert np.abs(skel.expm(0.3 * a) - oracle).max() < 1e-10


def test_train_simulate_certify_roundtrip(tmp_path):
    data = skel.gen_synthetic("tanh_contraction", n_traj=3, steps=40, seed=2)
    assert data[0].states.shape == (2, 40)
    cfg = skel.TrainConfig()
    cfg.epochs = 30
    cfg.embedding_dim = 6
    cfg.hidden = [12, 12]
    cfg.lr = 1e-2
    model, log = skel.fit(data, cfg)
    assert len(log.rows) == 31
    assert all(row.spectral_radius < 1.0 for row in log.rows)
    assert log.best_loss <= log.rows[0].total
    sim = model.simulate(data[0].states[:, 0], 10)
    assert sim.shape == (2, 11)
    path = str(tmp_path / "model.json")
    model.save(path)
    again = skel.load_model(path)
    np.testing.assert_array_equal(again.simulate(data[0].states[:, 0], 10), sim)
    cert = skel.certify(model, data)
    assert cert["verdict"] in ("pass", "fail")
    assert cert["rho"] < 1.0
    report = skel.evaluate(model, data)
    assert set(report) == {"nse", "rec_error", "rho"}


def test_errors_surface_as_python_exceptions():
    with pytest.raises(skel.ParseError):
        skel.load_csv("/nonexistent/file.csv")
    with pytest.raises(ValueError):
        skel.nse(np.zeros((2, 3)), np.zeros((2, 3)))


def test_cli_in_process(tmp_path):
    out = str(tmp_path / "d.csv")
    assert skel.run_cli(["gen-data", "--n-traj", "2", "--steps", "5", "--out", out]) == 0
    assert len(skel.load_csv(out)) == 2
    assert skel.run_cli(["bogus"]) == 1
