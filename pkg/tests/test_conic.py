import numpy as np
import pytest

from tgcmpc import conic
from tgcmpc.conic import ConicProgram, bmat
from tgcmpc.errors import BackendUnavailableError


def backends():
    out = [conic.ClarabelBackend()]
    try:
        out.append(conic.CvxpyBackend("CLARABEL"))
    except BackendUnavailableError:
        pass
    return out


@pytest.fixture(params=backends(), ids=lambda b: b.name)
def backend(request):
    return request.param


def test_lp(backend):
    prog = ConicProgram("lp")
    x = prog.variable("x")
    prog.add_nonneg(x - 1.0)
    prog.minimize(x)
    sol = conic.solve(prog, backend)
    assert sol.status == conic.OPTIMAL
    assert float(sol["x"]) == pytest.approx(1.0, abs=1e-7)


def test_sdp_trace(backend):
    prog = ConicProgram("sdp")
    X = prog.variable("X", (2, 2), symmetric=True)
    prog.add_psd(X - np.eye(2))
    prog.minimize(X.trace())
    sol = conic.solve(prog, backend)
    np.testing.assert_allclose(sol["X"], np.eye(2), atol=1e-6)
    assert sol.objective == pytest.approx(2.0, abs=1e-6)


def test_soc(backend):
    prog = ConicProgram("soc")
    t = prog.variable("t")
    prog.add_soc(t, np.array([3.0, 4.0]))
    prog.minimize(t)
    sol = conic.solve(prog, backend)
    assert float(sol["t"]) == pytest.approx(5.0, abs=1e-6)


def test_squares_and_pins():
    prog = ConicProgram("qp")
    x = prog.variable("x", (2,))
    prog.pin("target", x[0], 0.0)
    prog.minimize(squares=[x - np.array([3.0, -2.0])])
    sf = prog.compile()
    h = conic.ClarabelBackend().prepare(sf)
    for v in (0.0, 1.5):
        sol = h.solve(sf.rhs(target=np.array([v])))
        np.testing.assert_allclose(prog.unpack(sol.x)["x"], [v, -2.0], atol=1e-7)


def test_infeasible():
    prog = ConicProgram("bad")
    x = prog.variable("x")
    prog.add_nonneg(x - 1.0)
    prog.add_nonneg(-x)
    prog.minimize(x)
    assert conic.solve(prog).status == conic.INFEASIBLE


def test_lmi_block_assembly():
    prog = ConicProgram("schur")
    t = prog.variable("t")
    # [[t, 1], [1, 1]] >= 0  <=>  t >= 1
    prog.add_psd(bmat([[t.reshape((1, 1)), np.ones((1, 1))], [np.ones((1, 1)), np.ones((1, 1))]]))
    prog.minimize(t)
    assert float(conic.solve(prog)["t"]) == pytest.approx(1.0, abs=1e-6)


def test_asymmetric_psd_rejected():
    prog = ConicProgram("asym")
    M = prog.variable("M", (2, 2))
    with pytest.raises(ValueError):
        prog.add_psd(M)
