import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lq_sweep.errors import PreconditionViolated, SingularMatrix
from lq_sweep.hamiltonian import fundamental_direct, trajectory_symplectic_max
from lq_sweep.problem import LqProblem, TimeMatrix
from lq_sweep.zakhar_itkin import (
    PsiWvState,
    blocks_from_factors,
    direct_state_size,
    factor_block_trajectory,
    integrate_psi_w_v,
    reduced_state_size,
    stationary_block_trajectory,
    stationary_blocks,
    stationary_w1,
)

from conftest import p1_problem
from suite import KINDS, random_problem

C1, S1, E = np.cosh(1.0), np.sinh(1.0), np.e
W1_P2 = S1 / E


def test_p2_factors(p2):
    f = integrate_psi_w_v(p2, p2.grid(2000))
    s0, s1 = f[0], f[-1]
    assert np.array_equal(s0.psi, [[1.0]]) and s0.w[0, 0] == 0.0 and s0.v[0, 0] == 0.0
    assert abs(s1.psi[0, 0] - 1 / E) <= 1e-10
    assert abs(s1.w[0, 0] - W1_P2) <= 1e-8
    assert np.all(f.states[:, 2] == 0.0)
    assert f.state_size == 3


def test_decoupled_factors():
    a = np.array([[0.0, 1.0], [-2.0, -0.3]])
    p = LqProblem(F=a, G=np.zeros((2, 1)), R=np.zeros((2, 2)), C=[[1.0]],
                  Phi1=np.eye(2), Phi2=np.eye(2), q=[0.0, 0.0], t0=0.0, tau=1.0)
    f = integrate_psi_w_v(p, p.grid(500))
    assert np.all(f.states[:, 2:] == 0.0)
    from lq_sweep.numerics import mat_expm
    np.testing.assert_allclose(f[-1].psi, mat_expm(a), atol=1e-10)


def test_blocks_from_factors_examples(p1):
    e = np.eye(2)
    b = blocks_from_factors(PsiWvState(0.0, e, 0 * e, 0 * e))
    np.testing.assert_array_equal(b.as_matrix(), np.eye(4))
    b = blocks_from_factors(PsiWvState(1.0, np.array([[1 / E]]), np.array([[W1_P2]]), np.array([[0.0]])))
    np.testing.assert_allclose([b.phi11[0, 0], b.phi12[0, 0], b.phi21[0, 0], b.phi22[0, 0]],
                               [1 / E, -S1, 0.0, E], atol=1e-8)
    b = blocks_from_factors(integrate_psi_w_v(p1, p1.grid(2000))[-1])
    np.testing.assert_allclose(b.as_matrix(), [[C1, -S1], [-S1, C1]], atol=1e-6)


def test_blocks_from_factors_singular_psi():
    z = np.zeros((2, 2))
    with pytest.raises(SingularMatrix):
        blocks_from_factors(PsiWvState(0.0, z, z, z))


@given(st.integers(0, 2**32 - 1), st.sampled_from(KINDS))
@settings(max_examples=8, deadline=None)
def test_factor_flow_matches_direct(seed, kind):
    p = random_problem(np.random.default_rng(seed), kind)
    grid = p.grid(2000)
    f = integrate_psi_w_v(p, grid)
    n = p.n
    w, v = f.states[:, n:2 * n], f.states[:, 2 * n:]
    assert np.max(np.abs(w - np.swapaxes(w, 1, 2))) <= 1e-8
    assert np.max(np.abs(v - np.swapaxes(v, 1, 2))) <= 1e-8
    fac = factor_block_trajectory(p, grid)
    assert np.max(np.abs(fac.phi - fundamental_direct(p, grid).phi)) <= 1e-6
    assert trajectory_symplectic_max(fac) <= 1e-6


def test_stationary_p2(p2):
    assert stationary_w1(p2)[0, 0] == pytest.approx(-0.5)
    b = stationary_blocks(p2, 1.0)
    np.testing.assert_allclose([b.phi11[0, 0], b.phi12[0, 0], b.phi21[0, 0], b.phi22[0, 0]],
                               [1 / E, -S1, 0.0, E], atol=1e-12)
    np.testing.assert_allclose(stationary_blocks(p2, 0.0).as_matrix(), np.eye(2), atol=1e-15)


def test_stationary_preconditions(p1):
    with pytest.raises(PreconditionViolated):
        stationary_blocks(p1, 0.5)
    tv = p1_problem(R=[[0.0]], F=TimeMatrix.sampled([0.0, 1.0], [[[-1.0]], [[-2.0]]]))
    with pytest.raises(PreconditionViolated):
        stationary_blocks(tv, 0.5)
    with pytest.raises(SingularMatrix):
        stationary_blocks(p1_problem(R=[[0.0]]), 0.5)


def test_stationary_trajectory_matches_direct(rng):
    for _ in range(5):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, n + 1))
        f = rng.normal(size=(n, n)) - 1.5 * np.eye(n) * np.sqrt(n)
        p = LqProblem(F=f, G=rng.normal(size=(n, m)), R=np.zeros((n, n)), C=np.eye(m),
                      Phi1=np.eye(n), Phi2=np.eye(n), q=np.zeros(n), t0=0.0, tau=1.0)
        grid = p.grid(2000)
        np.testing.assert_allclose(stationary_block_trajectory(p, grid).phi,
                                   fundamental_direct(p, grid).phi, atol=1e-8)


def test_state_sizes(p2):
    assert reduced_state_size(4) == 48 and direct_state_size(4) == 64
    assert integrate_psi_w_v(p2, p2.grid(10)).state_size == reduced_state_size(1)
