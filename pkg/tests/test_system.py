import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcbf.errors import ModelError
from mcbf.scenarios import BUILTINS
from mcbf.sets import Box
from mcbf.system import (AgentModel, MultiAgentSystem, SafetyModel, combined_vector_field,
                         eval_cascade, eval_H, eval_psi, eval_psi_adversarial, eval_psi_r)
from mcbf.symmat import lambda_min


def single_integrators(n_agents=2, adversaries=()):
    agents = [AgentModel(2, 2, lambda x: np.zeros(2), lambda x: np.eye(2), Box([-1, -1], [1, 1]))
              for _ in range(n_agents)]
    return MultiAgentSystem(agents, frozenset(adversaries))


def test_eval_H_examples(builtin):
    sm = builtin("diag_coop").safety
    np.testing.assert_allclose(eval_H(sm, [2, 0, 0, 2]), np.diag([3.0, 3.0]))
    np.testing.assert_allclose(eval_H(sm, [1, 0, 0, 1]), np.zeros((2, 2)), atol=1e-15)
    assert lambda_min(eval_H(sm, [0, 0, 0, 2]))[0] == pytest.approx(-1.0)


def test_eval_psi_examples(builtin):
    sm = builtin("diag_coop").safety
    x = np.array([2.0, 0.0, 0.0, 2.0])
    P = eval_psi(sm, x, [1.0, 0.0, 0.0, 0.0], c_alpha=1.0)
    assert P[0, 0] == pytest.approx(7.0)
    # drift free, zero input: Psi = c H
    np.testing.assert_allclose(eval_psi(sm, x, np.zeros(4), c_alpha=1.0), eval_H(sm, x))


def test_eval_psi_adversarial_stacks(builtin):
    sc = builtin("diag_adv")
    x = np.array([2.0, 0.5, -1.5, 2.0])
    uN, uA = np.array([0.3, -0.2]), np.array([-1.0, 0.4])
    full = sc.system.stack_inputs(uN, uA)
    np.testing.assert_allclose(full, [0.3, -0.2, -1.0, 0.4])
    np.testing.assert_allclose(eval_psi_adversarial(sc.safety, sc.system, x, uN, uA),
                               eval_psi(sc.safety, x, full))
    zero = eval_psi_adversarial(sc.safety, sc.system, x, np.zeros(2), np.zeros(2))
    np.testing.assert_allclose(zero, sc.safety.lie_F_H(x) + sc.safety.c_alpha * eval_H(sc.safety, x))


def test_combined_vector_field_examples(builtin):
    sys = single_integrators()
    u = np.array([1.0, -2.0, 0.5, 0.0])
    np.testing.assert_allclose(combined_vector_field(sys, np.ones(4), u), u)
    sc = builtin("dbl_int_ho")
    x = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 2.0, 0.0])
    f = combined_vector_field(sc.system, x, np.zeros(4))
    np.testing.assert_allclose(f, sc.A @ x)


def test_undamped_double_integrator_field():
    sys = MultiAgentSystem([AgentModel(2, 1, lambda x: np.array([x[1], 0.0]),
                                       lambda x: np.array([[0.0], [1.0]]), Box([-5], [5]))])
    np.testing.assert_allclose(combined_vector_field(sys, [1.0, 2.0], [3.0]), [2.0, 3.0])


def test_shape_errors():
    sys = single_integrators()
    with pytest.raises(ModelError):
        combined_vector_field(sys, np.zeros(3), np.zeros(4))
    with pytest.raises(ModelError):
        combined_vector_field(sys, np.zeros(4), np.zeros(3))
    with pytest.raises(ModelError):
        AgentModel(2, 3, lambda x: x, lambda x: np.eye(2), Box([-1, -1], [1, 1]))
    with pytest.raises(ModelError):
        MultiAgentSystem(sys.agents, frozenset([5]))
    bad = SafetyModel(2, lambda x: np.eye(3), lambda x: np.eye(2), lambda x: [])
    with pytest.raises(ModelError):
        eval_H(bad, np.zeros(4))


def test_block_structure():
    sys = single_integrators()
    sys = MultiAgentSystem([AgentModel(2, 2, lambda x: -x, lambda x: np.diag(1 + x ** 2),
                                       Box([-1, -1], [1, 1])) for _ in range(2)])
    x, u = np.array([0.1, 0.2, 0.3, 0.4]), np.array([1.0, 1.0, -1.0, 0.5])
    base = combined_vector_field(sys, x, u)
    x2 = x.copy()
    x2[0] += 0.5
    moved = combined_vector_field(sys, x2, u)
    assert np.all(moved[2:] == base[2:]) and not np.allclose(moved[:2], base[:2])
    G = sys.input_matrix(x)
    assert np.all(G[:2, 2:] == 0) and np.all(G[2:, :2] == 0)


@pytest.mark.parametrize("name", BUILTINS)
def test_lie_derivatives_match_finite_differences(builtin, name):
    sc = builtin(name)
    sm, sys = sc.safety, sc.system
    rng = np.random.default_rng(7)
    h = 1e-5
    casc = sm.top()
    for _ in range(100):
        x = sc.spec.domain.sample(rng, 1)[0]
        u = sys.input_set().center() + rng.uniform(-1, 1, sys.m)
        v = combined_vector_field(sys, x, u)
        fd = (eval_H(sm, x + h * v) - eval_H(sm, x - h * v)) / (2 * h)
        an = sm.lie_F_H(x) + sum(M * uj for M, uj in zip(sm.lie_G_H(x), u))
        assert np.linalg.norm(fd - an) <= 1e-4 * (1 + np.linalg.norm(an))
        # top of the cascade: d/dt Psi_{r-1} along the field
        top = casc.psi[-1]
        fd = (top(x + h * v) - top(x - h * v)) / (2 * h)
        an = casc.lie_F_top(x) + sum(M * uj for M, uj in zip(casc.lie_G_top(x), u))
        assert np.linalg.norm(fd - an) <= 1e-4 * (1 + np.linalg.norm(an))


def test_cascade_recursion_by_finite_differences(builtin):
    sc = builtin("dbl_int_ho")
    sm, sys = sc.safety, sc.system
    casc = sm.top()
    assert casc.r == 2
    rng = np.random.default_rng(3)
    h = 1e-5
    for _ in range(50):
        x = sc.spec.domain.sample(rng, 1)[0]
        u = rng.uniform(-1, 1, sys.m)
        v = combined_vector_field(sys, x, u)
        Hdot = (eval_H(sm, x + h * v) - eval_H(sm, x - h * v)) / (2 * h)
        np.testing.assert_allclose(eval_cascade(sm, x, 1), Hdot + casc.c_alpha[0] * eval_H(sm, x),
                                   atol=1e-6 * (1 + np.abs(Hdot).max()))
        # Psi_1 does not depend on the input
        v2 = combined_vector_field(sys, x, -u)
        Hdot2 = (eval_H(sm, x + h * v2) - eval_H(sm, x - h * v2)) / (2 * h)
        np.testing.assert_allclose(Hdot, Hdot2, atol=1e-6 * (1 + np.abs(Hdot).max()))
        # Psi_2 with the input equals d/dt Psi_1 + c_2 Psi_1
        P1dot = (eval_cascade(sm, x + h * v, 1) - eval_cascade(sm, x - h * v, 1)) / (2 * h)
        np.testing.assert_allclose(eval_psi_r(sm, x, u), P1dot + casc.c_alpha[1] * eval_cascade(sm, x, 1),
                                   atol=1e-5 * (1 + np.abs(P1dot).max()))


def test_dbl_int_psi1_at_rest(builtin):
    sm = builtin("dbl_int_ho").safety
    x = np.array([1.5, -0.3, 0.0, 0.0, -2.0, 1.0, 0.0, 0.0])
    np.testing.assert_allclose(eval_cascade(sm, x, 1), sm.top().c_alpha[0] * eval_H(sm, x), atol=1e-14)


@given(st.floats(0, 1), st.lists(st.floats(-1, 1), min_size=8, max_size=8))
def test_psi_affine_in_u(theta, vals):
    sm = _coupled().safety
    x = np.array([1.5, -0.4, 0.2, 2.1])
    u1, u2 = np.array(vals[:4]), np.array(vals[4:])
    lhs = eval_psi(sm, x, theta * u1 + (1 - theta) * u2)
    rhs = theta * eval_psi(sm, x, u1) + (1 - theta) * eval_psi(sm, x, u2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


_CACHE = {}


def _coupled():
    from mcbf.scenarios import load
    if "c" not in _CACHE:
        _CACHE["c"] = load("coupled_2x2")
    return _CACHE["c"]
