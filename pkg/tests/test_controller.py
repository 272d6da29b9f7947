import numpy as np
import pytest

from tgcmpc import polytope as pt
from tgcmpc.conic import Solution
from tgcmpc.controller import (
    FALLBACK,
    OK,
    MpcStepInput,
    StepLog,
    StepProgram,
    TubeMpc,
    cornering_equilibrium,
    fallback_command,
    schedule,
    solve_step,
)
from tgcmpc.errors import DimensionMismatchError, EmptySetError, InvalidParameterError
from tgcmpc.bank import ControllerBank


@pytest.fixture(scope="module")
def entry(small_bank):
    return small_bank.lookup(10.0)[0]


@pytest.fixture(scope="module")
def sp(entry):
    return StepProgram(entry)


def test_origin_is_the_optimum(sp):
    out = solve_step(sp, np.zeros(4), np.zeros(10), deterministic=True)
    assert out.status == OK
    np.testing.assert_allclose(out.nu, 0.0, atol=1e-7)
    assert out.delta_cmd == pytest.approx(0.0, abs=1e-7)
    assert out.objective == pytest.approx(0.0, abs=1e-8)
    assert out.slack_max < 1e-9


def test_command_is_feedback_plus_correction(entry, sp):
    x0 = np.array([0.2, -0.01, 0.1, 0.05])
    out = solve_step(sp, x0, np.zeros(10), deterministic=True)
    assert out.delta_cmd == -entry.gcc.K[0] @ x0 + out.nu[0]
    np.testing.assert_allclose(out.z[0], x0, atol=1e-12)
    assert out.alpha[0] == pytest.approx(0.0, abs=1e-9)
    assert np.all(np.diff(out.alpha) >= -1e-7) or np.all(out.alpha >= -1e-9)


def test_nominal_plan_follows_the_model(entry, sp):
    x0 = np.array([0.3, 0.02, -0.1, 0.05])
    kappa = np.linspace(0.0, 0.01, 10)
    out = solve_step(sp, x0, kappa, deterministic=True)
    d = entry.model
    Acl = d.Ad - d.Bdu @ entry.gcc.K
    for k in range(10):
        pred = Acl @ out.z[k] + d.Bdu[:, 0] * out.nu[k] + d.Bdr[:, 0] * kappa[k]
        np.testing.assert_allclose(out.z[k + 1], pred, atol=1e-7)


def test_tube_recursion_holds_in_the_solution(entry, sp):
    out = solve_step(sp, np.array([0.2, 0.01, 0.2, -0.1]), np.full(10, 0.01), deterministic=True)
    t = entry.mrci
    w = np.sqrt(np.concatenate([[t.a_alpha], t.a_sigma]))
    for k in range(10):
        assert out.alpha[k + 1] >= np.linalg.norm(w * np.concatenate([[out.alpha[k]], out.sigma[k]])) - 1e-7


def test_horizon_one(entry):
    out = solve_step(StepProgram(entry, N=1), np.array([0.1, 0, 0, 0]), [0.0], deterministic=True)
    assert out.status == OK and out.z.shape == (2, 4)
    with pytest.raises(InvalidParameterError):
        StepProgram(entry, N=0)


def test_equilibrium_is_a_fixed_point(entry):
    x_ss, nu_ss = cornering_equilibrium(entry)
    d = entry.model
    assert x_ss[0] == 0.0
    u = -entry.gcc.K[0] @ x_ss + nu_ss
    np.testing.assert_allclose(d.Ad @ x_ss + d.Bdu[:, 0] * u + d.Bdr[:, 0], x_ss, atol=1e-12)


def test_mild_sustained_curve_is_tracked(entry, sp):
    x_ss, _ = cornering_equilibrium(entry)
    d, kappa = entry.model, 0.01  # 1 m/s^2 at 10 m/s
    x = kappa * x_ss
    for _ in range(200):
        out = solve_step(sp, x, np.full(10, kappa), deterministic=True)
        x = d.Ad @ x + d.Bdu[:, 0] * out.delta_cmd + d.Bdr[:, 0] * kappa
    assert abs(x[0]) < 0.05
    np.testing.assert_allclose(x[1:], kappa * x_ss[1:], atol=1e-3)
    assert out.slack_max < 1e-6


def test_objective_decreases_along_nominal_loop(entry, sp):
    d = entry.model
    x = np.array([0.3, 0.02, 0.05, -0.02])
    objs = []
    for _ in range(60):
        out = solve_step(sp, x, np.zeros(10), deterministic=True)
        assert out.slack_max < 1e-6
        objs.append(out.objective)
        x = d.Ad @ x + d.Bdu[:, 0] * out.delta_cmd
    assert np.max(np.diff(objs)) <= 1e-6


def test_interior_start_needs_no_slack(entry, sp, rng):
    # the tube tightening eats into the terminal set; its inner 30% is slack-free
    for v in pt.sample_uniform(entry.terminal.scaled(0.3), 20, rng):
        out = solve_step(sp, np.array([0.0, 0.0, *v]), np.zeros(10), deterministic=True)
        assert out.status == OK and out.slack_max < 1e-6


def test_adversarial_start_uses_slack(entry, sp):
    out = solve_step(sp, np.array([3.0, 0.5, 4.0, 2.0]), np.zeros(10), deterministic=True)
    assert out.status in ("optimal", "inaccurate")
    assert out.slack_max > 1e-3 and out.penalty > 0
    assert np.isfinite(out.delta_cmd) and abs(out.delta_cmd) <= entry.delta_max


def test_solver_failure_falls_back(entry, monkeypatch):
    sp = StepProgram(entry)
    monkeypatch.setattr(sp.handle, "solve", lambda b: Solution(status="infeasible"))
    x0 = np.array([0.2, 0.02, 0.1, 0.05])
    out = solve_step(sp, x0, np.zeros(10), deterministic=True)
    assert out.status == FALLBACK
    assert out.delta_cmd == fallback_command(entry, x0)
    assert out.delta_cmd == pytest.approx(-entry.gcc.K[0] @ x0)
    assert np.isnan(out.objective)
    big = fallback_command(entry, np.array([100.0, 0, 0, 0]))
    assert abs(big) == entry.delta_max


def test_overrun_aborts_only_when_not_deterministic(entry):
    sp = StepProgram(entry)
    x0 = np.array([0.1, 0.0, 0.0, 0.0])
    assert solve_step(sp, x0, np.zeros(10), budget=0.0, deterministic=False).status == "timeout"
    out = solve_step(sp, x0, np.zeros(10), budget=0.0, deterministic=True)
    assert out.status == OK and out.overrun


def test_tube_mpc_schedules_and_caches(small_bank):
    mpc = TubeMpc(small_bank, deterministic=True)
    out = mpc.step(MpcStepInput(np.zeros(4), 10.6, np.zeros(3)))
    assert out.vx_entry == 11.0 and not out.clamped
    mpc.step(MpcStepInput(np.zeros(4), 11.2, np.zeros(3)))
    assert len(mpc._programs) == 1
    out = mpc.step(MpcStepInput(np.zeros(4), 30.0, np.zeros(3)))
    assert out.vx_entry == 15.0 and out.clamped
    assert schedule(small_bank, 10.5)[0].vx == 11.0
    with pytest.raises(EmptySetError):
        TubeMpc(ControllerBank([], 0.025))


def test_step_input_validation():
    with pytest.raises(DimensionMismatchError):
        MpcStepInput(np.zeros(3), 10.0, np.zeros(10))
    with pytest.raises(InvalidParameterError):
        MpcStepInput(np.array([0, np.nan, 0, 0]), 10.0, np.zeros(10))


def test_step_log(sp, tmp_path):
    log = StepLog()
    out = solve_step(sp, np.zeros(4), np.zeros(10), deterministic=True)
    log.record(0.0, 10.0, np.zeros(4), out)
    log.write(tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0].startswith("t,vx,x0_0") and len(lines) == 2
