import math

import numpy as np
import pytest

from fishmpc import tinynn
from fishmpc.fdm import Action, Standardizer, train_fdm
from fishmpc.geometry import LocalState, WorldState, to_frame, world_to_local
from fishmpc.gmpc import GmpcConfig, receding_horizon
from fishmpc.ilc import (
    DEFAULT_GRID,
    IlcModel,
    IlcTrainConfig,
    generate_ilc_dataset,
    ilc_act,
    ilc_control_loop,
    read_ilc_csv,
    samples_from_log,
    train_ilc,
    write_ilc_csv,
)
from fishmpc.path import default_path
from fishmpc.sim import SurrogateParams, collect_transitions, surrogate_plant

CFG = GmpcConfig(iterations=30)


@pytest.fixture(scope="module")
def fdm():
    return train_fdm(collect_transitions(SurrogateParams(), 300, seed=0), seed=0)[0]


@pytest.fixture(scope="module")
def dataset(fdm):
    return generate_ilc_dataset(fdm, CFG, default_path(), surrogate_plant())


@pytest.fixture(scope="module")
def trained(dataset):
    return train_ilc(dataset, IlcTrainConfig(epochs=300), seed=0)


def test_default_grid():
    assert len(DEFAULT_GRID) == 27
    assert sorted({g[0] for g in DEFAULT_GRID}) == [50, 100, 150]
    assert sorted({g[1] for g in DEFAULT_GRID}) == [350, 400, 450]
    assert sorted({g[2] for g in DEFAULT_GRID}) == pytest.approx([-math.pi / 18, 0, math.pi / 18])


def test_dataset_bounds_and_determinism(fdm, dataset):
    assert len(dataset) > 27 * 5
    assert all(200 <= s.action.b_ms <= 900 and 200 <= s.action.d_ms <= 900 for s in dataset)
    assert all(-math.pi < s.ref_rel[2] <= math.pi for s in dataset)
    again = generate_ilc_dataset(fdm, CFG, default_path(), surrogate_plant(), DEFAULT_GRID[:2])
    assert again == dataset[: len(again)]


def test_samples_from_log(fdm):
    log = receding_horizon(fdm, surrogate_plant(), WorldState(100, 450, 0), default_path(), CFG, 3)
    samples = samples_from_log(log)
    assert len(samples) == 3
    for pose, rec, s in zip(log.poses, log.steps, samples):
        assert s.state == world_to_local(pose)
        assert s.ref_rel == to_frame(pose, *rec.ref)
        assert s.action == rec.action


def test_training(dataset, trained):
    model, hist = trained
    assert len(hist) == 300
    assert hist[-1] < 0.1 * hist[0]
    assert model.net.layer_dims == [6, 8, 2]


def test_training_deterministic(dataset):
    a = train_ilc(dataset, IlcTrainConfig(epochs=3), seed=1)
    b = train_ilc(dataset, IlcTrainConfig(epochs=3), seed=1)
    assert a[1] == b[1] and a[0].to_dict() == b[0].to_dict()


def test_training_errors(dataset):
    with pytest.raises(ValueError):
        train_ilc([], seed=0)
    with pytest.raises(ValueError):
        train_ilc(dataset[:10], seed=0)


def test_act_clamped_and_pure():
    net = tinynn.mlp_init([6, 8, 2], 0)
    net.biases[-1][:] = [5.0, -5.0]
    for w in net.weights:
        w[:] = 0
    m = IlcModel(net, Standardizer(np.zeros(6), np.ones(6)))
    a = ilc_act(m, LocalState(1, 2, 3), (10, 0, 0))
    assert a == Action(900, 200)
    assert ilc_act(m, LocalState(1, 2, 3), (10, 0, 0)) == a


def test_act_in_bounds_random(trained):
    model, _ = trained
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = ilc_act(model, LocalState(*rng.normal(0, 100, 3)), rng.normal(0, 100, 3))
        assert 200 <= a.b_ms <= 900 and 200 <= a.d_ms <= 900


def test_control_loop_zero_steps(trained):
    log = ilc_control_loop(trained[0], surrogate_plant(), WorldState(100, 400, 0), default_path(), CFG, 0)
    assert log.steps == []


def test_control_loop_runs(trained):
    log = ilc_control_loop(trained[0], surrogate_plant(), WorldState(100, 420, 0), default_path(), CFG, 40)
    assert 0 < len(log.steps) < 40
    assert all(math.isnan(r.j_final) for r in log.steps)


@pytest.mark.parametrize("seed", range(10))
def test_pose_invariance(trained, seed):
    rng = np.random.default_rng(seed)
    phi, tx, ty = rng.uniform(-math.pi, math.pi), *rng.uniform(-200, 200, 2)
    path = default_path()
    moved = path.transformed(tx, ty, phi)
    s0 = WorldState(90, 420, 0.05)
    c, s = math.cos(phi), math.sin(phi)
    s1 = WorldState(c * 90 - s * 420 + tx, s * 90 + c * 420 + ty, 0.05 + phi)
    a = ilc_control_loop(trained[0], surrogate_plant(), s0, path, CFG, 40).actions
    b = ilc_control_loop(trained[0], surrogate_plant(), s1, moved, CFG, 40).actions
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x.b_ms == pytest.approx(y.b_ms, abs=1e-9) and x.d_ms == pytest.approx(y.d_ms, abs=1e-9)


def test_csv_and_model_round_trip(dataset, trained, tmp_path):
    f = tmp_path / "ilc.csv"
    write_ilc_csv(dataset[:25], f)
    assert f.read_text().splitlines()[0] == "vx,vy,omega,ref_dx,ref_dy,ref_dtheta,b_ms,d_ms"
    assert read_ilc_csv(f) == dataset[:25]
    m = tmp_path / "ilc.json"
    trained[0].save(m)
    back = IlcModel.load(m)
    s = dataset[0]
    assert ilc_act(back, s.state, s.ref_rel) == ilc_act(trained[0], s.state, s.ref_rel)
