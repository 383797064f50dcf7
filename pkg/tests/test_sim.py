import math

import numpy as np
import pytest

from fishmpc.fdm import Action, read_transitions_csv, train_fdm, write_transitions_csv
from fishmpc.geometry import LocalState, WorldState, compose_world, rebase
from fishmpc.gmpc import GmpcConfig
from fishmpc.sim import (
    PathSpec,
    ScenarioConfig,
    SurrogateParams,
    collect_transitions,
    standard_starts,
    run_scenario,
    surrogate_from_dict,
    surrogate_step,
    surrogate_to_dict,
)
from fishmpc.trajectory import StepRecord, TrajectoryLog, rmse

P = SurrogateParams()


def test_surrogate_symmetry_and_sign():
    n = surrogate_step(P, LocalState(), Action(500, 500))
    assert n.dtheta_rad == 0 and n.dy_mm == 0 and n.dx_mm > 0
    assert surrogate_step(P, LocalState(), Action(300, 800)).dtheta_rad > 0
    assert surrogate_step(P, LocalState(), Action(800, 300)).dtheta_rad < 0


def test_surrogate_formula_values():
    # b=900 -> b_n=1, d=200 -> d_n=0, dt=1.1 s, zero initial velocity
    n = surrogate_step(P, LocalState(), Action(900, 200))
    assert n.dtheta_rad == pytest.approx(-0.6)
    assert n.dx_mm == pytest.approx(20.0)
    assert n.dy_mm == pytest.approx(-2.5)
    assert (n.vx_mm_s, n.vy_mm_s, n.omega_rad_s) == pytest.approx((20 / 1.1, -2.5 / 1.1, -0.6 / 1.1))


def test_surrogate_momentum():
    n = surrogate_step(P, LocalState(50.0, -10.0, 0.0), Action(200, 200))
    assert (n.dx_mm, n.dy_mm) == pytest.approx((0.3 * 50 * 0.4, 0.3 * -10 * 0.4))


def test_surrogate_param_validation():
    with pytest.raises(ValueError):
        SurrogateParams(k_fwd=0)
    with pytest.raises(ValueError):
        SurrogateParams(momentum=1.0)
    assert surrogate_from_dict(surrogate_to_dict(P)) == P


def test_surrogate_chaining_matches_world_integration():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, y, th = rng.uniform(0, 600), rng.uniform(0, 600), rng.uniform(-math.pi, math.pi)
        pose, loc = WorldState(x, y, th), LocalState()
        vwx = vwy = 0.0
        for _ in range(10):
            a = Action(*rng.uniform(200, 900, 2))
            n = surrogate_step(P, loc, a)
            pose, loc = compose_world(pose, n), rebase(n)
            # independent world-frame integration: advance by the plant law written in world axes
            dt = a.duration_s
            b_n, d_n = (a.b_ms - 200) / 700, (a.d_ms - 200) / 700
            c, s = math.cos(th), math.sin(th)
            fx = 40 * (b_n + d_n) / 2
            fy = 5 * (d_n - b_n) / 2
            dxw = c * fx - s * fy + 0.3 * vwx * dt
            dyw = s * fx + c * fy + 0.3 * vwy * dt
            x, y, th = x + dxw, y + dyw, th + 0.6 * (d_n - b_n)
            vwx, vwy = dxw / dt, dyw / dt
            assert pose.x_mm == pytest.approx(x, abs=1e-9)
            assert pose.y_mm == pytest.approx(y, abs=1e-9)
            assert math.cos(pose.theta_rad - th) == pytest.approx(1.0, abs=1e-12)


def test_collect_transitions_rows_bounds_determinism(tmp_path):
    a = collect_transitions(P, 300, seed=4)
    b = collect_transitions(P, 300, seed=4)
    assert len(a) == 300 and a == b
    assert all(200 <= s.action.b_ms <= 900 and 200 <= s.action.d_ms <= 900 for s in a)
    assert a[0].state == LocalState()
    assert a[1].state == rebase(a[0].next)
    f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_transitions_csv(a, f1)
    write_transitions_csv(b, f2)
    assert f1.read_bytes() == f2.read_bytes()
    assert read_transitions_csv(f1) == a
    assert collect_transitions(P, 5, seed=5) != collect_transitions(P, 5, seed=6)
    with pytest.raises(ValueError):
        collect_transitions(P, 0, seed=0)


def _log(devs):
    log = TrajectoryLog(WorldState(0, 0, 0))
    for k, d in enumerate(devs):
        log.steps.append(StepRecord(k, WorldState(d, 0, 0), Action(300, 300), (0.0, 0.0, 0.0), 0.6))
    return log


def test_rmse_examples():
    assert rmse(_log([0, 0, 0])) == 0
    assert rmse(_log([5, 5, 5, 5])) == pytest.approx(5)
    assert rmse(_log([3, 4])) == pytest.approx(math.sqrt(12.5))
    with pytest.raises(ValueError):
        rmse(_log([]))


def test_log_elapsed_time_exact():
    log = _log([1, 2, 3])
    assert log.elapsed_s == pytest.approx(1.8, abs=1e-15)


def test_log_csv_header(tmp_path):
    f = tmp_path / "log.csv"
    _log([1.0]).write_csv(f)
    assert f.read_text().splitlines()[0] == "step,x_mm,y_mm,theta_rad,b_ms,d_ms,ref_x,ref_y,ref_theta,dt_s,J_final"


@pytest.fixture(scope="module")
def fdm():
    return train_fdm(collect_transitions(P, 300, seed=0), seed=0)[0]


def scen(name, start, **kw):
    return ScenarioConfig(name=name, start=start, gmpc=GmpcConfig(iterations=kw.pop("iterations", 60)), **kw)


def test_run_scenario_ordering_and_determinism(fdm):
    reps = {name: run_scenario(scen(name, start), {"fdm": fdm}) for name, start in standard_starts()}
    assert reps["on"].rmse_mm < reps["above"].rmse_mm
    assert reps["on"].rmse_mm < reps["below"].rmse_mm
    again = run_scenario(scen("on", (100.0, 400.0, 0.0)), {"fdm": fdm})
    assert again.to_dict() == reps["on"].to_dict()
    r = reps["above"]
    assert r.elapsed_s == pytest.approx(sum(a.duration_s for a in r.log.actions), abs=1e-12)
    assert r.to_dict()["config"]["start"] == [100.0, 450.0, 0.0]


def test_run_scenario_errors(fdm):
    with pytest.raises(ValueError, match="outside"):
        run_scenario(scen("x", (700.0, 100.0, 0.0)), {"fdm": fdm})
    with pytest.raises(ValueError, match="needs model"):
        run_scenario(scen("x", (100.0, 400.0, 0.0)), {})
    with pytest.raises(ValueError, match="needs model"):
        run_scenario(scen("x", (100.0, 400.0, 0.0), controller="distilled"), {"fdm": fdm})


def test_run_scenario_noise_is_seeded(fdm):
    a = run_scenario(scen("n", (100.0, 400.0, 0.0), noise_mm=1.0, seed=3, iterations=20), {"fdm": fdm})
    b = run_scenario(scen("n", (100.0, 400.0, 0.0), noise_mm=1.0, seed=3, iterations=20), {"fdm": fdm})
    c = run_scenario(scen("n", (100.0, 400.0, 0.0), noise_mm=1.0, seed=4, iterations=20), {"fdm": fdm})
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != c.to_dict()


def test_report_write(fdm, tmp_path):
    rep = run_scenario(scen("w", (100.0, 400.0, 0.0), iterations=10, max_steps=3), {"fdm": fdm})
    rep.write(tmp_path)
    assert (tmp_path / "w_report.json").is_file()
    assert len((tmp_path / "w_trajectory.csv").read_text().splitlines()) == 4


def test_fdm_plant_scenario(fdm):
    rep = run_scenario(scen("f", (100.0, 400.0, 0.0), plant="fdm", iterations=30), {"fdm": fdm})
    assert math.isfinite(rep.rmse_mm) and rep.rmse_mm >= 0


def test_path_spec_default_matches_standard_starts():
    path = PathSpec().build()
    assert (path[0].x_mm, path[0].y_mm) == (100.0, 400.0)
    assert [s for _, s in standard_starts()] == [(100.0, 450.0, 0.0), (100.0, 400.0, 0.0), (100.0, 350.0, 0.0)]
