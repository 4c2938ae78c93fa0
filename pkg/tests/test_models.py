import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schedmpc.errors import InsufficientTokens, InvalidModel, NotInTerminalSet
from schedmpc.models import (
    ActuatorParams,
    TokenBucketInput,
    TokenBucketParams,
    TokenBucketState,
    act_omega,
    act_pi,
    act_stage_cost,
    act_step,
    tb_stage_cost,
    tb_step,
    tb_storage,
    tb_terminal_controller,
    tb_terminal_membership,
)
from schedmpc.polytope import Polytope


@pytest.fixture(scope="module")
def paper_net():
    """4-state plant with the g=1, c=8, b=22 network (bucket arithmetic only)."""
    return TokenBucketParams(
        A=np.eye(4) * 0.5, B=np.eye(4)[:, :2], Q=10 * np.eye(4), R=np.eye(2),
        g=1, c=8, b=22, X_p=Polytope.box([2.0] * 4), U_p=Polytope.box([3.0] * 2),
    )


def _state(p, x=None, u=None, beta=0):
    return TokenBucketState(
        x_p=np.zeros(p.n_p) if x is None else x,
        u_s=np.zeros(p.m_p) if u is None else u,
        beta=beta,
    )


class TestTbStep:
    def test_full_bucket_transmission(self, paper_net):
        s = _state(paper_net, beta=22)
        out = tb_step(s, TokenBucketInput(u_c=np.zeros(2), gamma=1), paper_net)
        assert out.beta == 15  # min(22 + 1 - 8, 22)

    def test_saturation(self, paper_net):
        s = _state(paper_net, beta=22)
        out = tb_step(s, TokenBucketInput(u_c=np.zeros(2), gamma=0), paper_net)
        assert out.beta == 22

    def test_insufficient_tokens(self, paper_net):
        s = _state(paper_net, beta=5)
        with pytest.raises(InsufficientTokens):
            tb_step(s, TokenBucketInput(u_c=np.zeros(2), gamma=1), paper_net)

    def test_threshold_transmission_allowed(self, paper_net):
        # beta = c - g = 7 supports a transmission: successor level is 0
        s = _state(paper_net, beta=7)
        out = tb_step(s, TokenBucketInput(u_c=np.zeros(2), gamma=1), paper_net)
        assert out.beta == 0

    def test_hold_dynamics(self, paper_net):
        s = _state(paper_net, x=np.ones(4), u=np.array([1.0, -1.0]), beta=3)
        out = tb_step(s, TokenBucketInput(u_c=np.array([9.9, 9.9]), gamma=0), paper_net)
        np.testing.assert_allclose(out.u_s, s.u_s)
        np.testing.assert_allclose(out.x_p, paper_net.A @ s.x_p + paper_net.B @ s.u_s)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 6), st.integers(0, 8))
    def test_bucket_stays_in_range_exhaustively(self, g, c_extra, b_extra):
        # every (g, c, b) meeting the parameter invariants, all beta, both gammas
        c = g + c_extra
        b = c + b_extra
        p = TokenBucketParams(A=[[0.5]], B=[[1.0]], Q=[[1.0]], R=[[1.0]],
                              g=g, c=c, b=b, X_p=Polytope.box([1.0]), U_p=Polytope.box([1.0]))
        for beta in range(b + 1):
            for gamma in (0, 1):
                s = _state(p, beta=beta)
                u = TokenBucketInput(u_c=np.zeros(1), gamma=gamma)
                if gamma == 1 and not p.tx_feasible(beta):
                    with pytest.raises(InsufficientTokens):
                        tb_step(s, u, p)
                    continue
                out = tb_step(s, u, p)
                assert 0 <= out.beta <= b


class TestTbStageCost:
    def test_transmission_masks_held_input(self, paper_net):
        s = _state(paper_net, u=np.array([5.0, 5.0]), beta=22)
        u = TokenBucketInput(u_c=np.zeros(2), gamma=1)
        assert tb_stage_cost(s, u, paper_net) == 0.0

    def test_hold_cost(self, paper_net):
        v = np.array([1.0, 2.0])
        s = _state(paper_net, u=v)
        u = TokenBucketInput(u_c=np.zeros(2), gamma=0)
        assert tb_stage_cost(s, u, paper_net) == pytest.approx(v @ v)

    def test_state_cost_with_paper_weights(self, paper_net):
        s = _state(paper_net, x=np.eye(4)[0])
        u = TokenBucketInput(u_c=np.zeros(2), gamma=0)
        assert tb_stage_cost(s, u, paper_net) == pytest.approx(10.0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_nonnegative_and_zero_characterization(self, seed):
        rng = np.random.default_rng(seed)
        p = TokenBucketParams(A=[[0.7]], B=[[1.0]], Q=[[2.0]], R=[[3.0]],
                              g=1, c=2, b=4, X_p=Polytope.box([5.0]), U_p=Polytope.box([5.0]))
        s = _state(p, x=rng.normal(size=1), u=rng.normal(size=1), beta=4)
        u = TokenBucketInput(u_c=rng.normal(size=1), gamma=int(rng.integers(0, 2)))
        cost = tb_stage_cost(s, u, p)
        assert cost >= 0.0
        eff = u.u_c if u.gamma else s.u_s
        if cost == 0.0:
            assert np.allclose(s.x_p, 0) and np.allclose(eff, 0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_dissipation_inequality(self, seed):
        # stage + storage - storage(next) >= 0 with storage ||u_s||_R^2,
        # equality only at x_p = 0, u_s = 0
        rng = np.random.default_rng(seed)
        p = TokenBucketParams(A=[[0.7]], B=[[0.5]], Q=[[2.0]], R=[[3.0]],
                              g=2, c=3, b=6, X_p=Polytope.box([9.0]), U_p=Polytope.box([9.0]))
        gamma = int(rng.integers(0, 2))
        beta = int(rng.integers(p.c - p.g if gamma else 0, p.b + 1))
        s = _state(p, x=rng.normal(size=1), u=rng.normal(size=1), beta=beta)
        u = TokenBucketInput(u_c=rng.normal(size=1), gamma=gamma)
        nxt = tb_step(s, u, p)
        slack = tb_stage_cost(s, u, p) + tb_storage(s, p) - tb_storage(nxt, p)
        assert slack >= -1e-12
        if slack < 1e-12:
            assert np.allclose(s.x_p, 0, atol=1e-9) and np.allclose(s.u_s, 0, atol=1e-9)


class TestTerminalRegions:
    def test_origin_branch(self, scalar_tb):
        p, cert = scalar_tb
        ing = cert.ingredients
        # M = 2, c = 2, g = 1: tau_0 = 1, tau_1 = 0
        s = _state(p, beta=0)
        assert tb_terminal_membership(s, 0, ing, p)

    def test_z_branch_at_threshold(self, paper_net, scalar_tb):
        p, cert = scalar_tb
        ing = cert.ingredients
        s = _state(p, x=0.05 * np.ones(1), u=np.zeros(1), beta=1)
        assert tb_terminal_membership(s, 0, ing, p)

    def test_empty_origin_branch_for_phase_one(self, scalar_tb):
        # tau_1 = 0: the interval [0, -1] is empty, only the Z branch exists
        p, cert = scalar_tb
        ing = cert.ingredients
        s = _state(p, beta=0)
        assert tb_terminal_membership(s, 1, ing, p)  # origin is inside Z_1
        outside = _state(p, x=np.array([1.99]), beta=0)
        member = tb_terminal_membership(outside, 1, ing, p)
        assert member == cert.ingredients.regions.family[1].contains(outside.z, tol=1e-9)

    def test_controller_branches(self, scalar_tb):
        p, cert = scalar_tb
        ing = cert.ingredients
        # phase >= 1: always hold
        s = _state(p, beta=2)
        u = tb_terminal_controller(s, 1, ing, p)
        assert u.gamma == 0 and np.all(u.u_c == 0)
        # phase 0, origin branch (beta < tau_0 = 1)
        u = tb_terminal_controller(_state(p, beta=0), 0, ing, p)
        assert u.gamma == 0
        # phase 0, Z branch: transmit the gain action
        s = _state(p, x=np.array([0.1]), beta=4)
        u = tb_terminal_controller(s, 0, ing, p)
        assert u.gamma == 1
        np.testing.assert_allclose(u.u_c, ing.gain @ s.z)

    def test_controller_outside_raises(self, scalar_tb):
        p, cert = scalar_tb
        with pytest.raises(NotInTerminalSet):
            tb_terminal_controller(_state(p, x=np.array([5.0]), beta=4), 0, cert.ingredients, p)

    def test_paper_network_membership_branches(self, tb41_setup, tb41_cert):
        # g = 1, c = 8: tau_0 = 7, tau_j = j - 1 for j >= 1
        p = tb41_setup.params
        ing = tb41_cert.ingredients
        origin = _state(p, beta=6)
        assert tb_terminal_membership(origin, 0, ing, p)          # S_0' branch
        assert tb_terminal_membership(_state(p, beta=7), 0, ing, p)  # S_0'' branch
        assert tb_terminal_membership(_state(p, beta=0), 1, ing, p)  # empty S_1' interval
        # at the transmission branch the controller fires the gain action
        s = _state(p, beta=22)
        u = tb_terminal_controller(s, 0, ing, p)
        assert u.gamma == 1
        np.testing.assert_allclose(u.u_c, ing.gain @ s.z)
        # held phases never transmit
        u = tb_terminal_controller(_state(p, beta=22), 3, ing, p)
        assert u.gamma == 0 and np.all(u.u_c == 0)

    def _region_samples(self, Z, rng, count=8):
        pts = [np.zeros(Z.dim)]
        for _ in range(count):
            d = rng.normal(size=Z.dim)
            s = Z.support(d / np.linalg.norm(d))
            grads = Z.rows @ (d / np.linalg.norm(d))
            t = 1.0 / np.max(grads[grads > 0])
            for frac in (0.5, 0.999):
                pts.append(frac * t * (d / np.linalg.norm(d)))
        return pts

    def test_periodic_invariance_of_terminal_pairs(self, scalar_tb, rng):
        # f(S_j, kappa_j) lands in S_{j+1 mod M}: exhaustive over beta,
        # near-boundary samples over the region sets
        p, cert = scalar_tb
        ing = cert.ingredients
        fam = ing.regions.family
        for j in range(p.M):
            tau = p.threshold(j)
            for beta in range(p.b + 1):
                zs = [np.zeros(p.n_z)] if beta < tau else self._region_samples(fam[j], rng)
                for z in zs:
                    s = TokenBucketState(x_p=z[:p.n_p], u_s=z[p.n_p:], beta=beta)
                    if not tb_terminal_membership(s, j, ing, p):
                        continue
                    u = tb_terminal_controller(s, j, ing, p)
                    nxt = tb_step(s, u, p)
                    assert tb_terminal_membership(nxt, (j + 1) % p.M, ing, p, tol=1e-7), \
                        f"phase {j}, beta {beta}: successor left S_{(j + 1) % p.M}"


@pytest.fixture(scope="module")
def act_params():
    return ActuatorParams(A=0.5 * np.eye(2), B=np.eye(2), Q=np.eye(2),
                          R_blocks=(np.eye(1), 2 * np.eye(1)), widths=(1, 1),
                          base_schedule=(0, 1))


class TestActSelectors:
    def test_unit_widths(self):
        np.testing.assert_array_equal(act_omega(1, (1, 1, 1, 1)),
                                      np.diag([0.0, 1.0, 0.0, 0.0]))
        np.testing.assert_array_equal(act_pi(1, (1, 1, 1, 1)), [[0.0, 1.0, 0.0, 0.0]])

    def test_wide_actuator(self):
        np.testing.assert_array_equal(act_omega(0, (2, 1)), np.diag([1.0, 1.0, 0.0]))

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            act_omega(2, (1, 1))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 3), min_size=1, max_size=4), st.data())
    def test_selector_algebra(self, widths, data):
        widths = tuple(widths)
        sigma = data.draw(st.integers(0, len(widths) - 1))
        omega = act_omega(sigma, widths)
        pi = act_pi(sigma, widths)
        np.testing.assert_allclose(omega, pi.T @ pi)
        np.testing.assert_allclose(pi @ pi.T, np.eye(widths[sigma]))
        np.testing.assert_allclose(omega @ omega, omega)  # idempotent projector


class TestActDynamics:
    def test_unselected_inputs_inert(self, act_params):
        x = np.array([1.0, -1.0])
        a = act_step(x, np.array([0.3, 123.0]), 0, act_params)
        b = act_step(x, np.array([0.3, -55.0]), 0, act_params)
        np.testing.assert_allclose(a, b)

    def test_zero_input_cost(self, act_params):
        x = np.array([1.0, 2.0])
        assert act_stage_cost(x, np.zeros(2), 1, act_params) == pytest.approx(x @ x)

    def test_scalar_arithmetic(self):
        p = ActuatorParams(A=[[1.0]], B=[[1.0]], Q=[[1.0]], R_blocks=([[1.0]],),
                           widths=(1,), base_schedule=(0,))
        assert act_step([1.0], [-0.5], 0, p) == pytest.approx([0.5])
        assert act_stage_cost([1.0], [-0.5], 0, p) == pytest.approx(1.25)

    def test_cost_matches_reduced_form(self, act_params, rng):
        for _ in range(20):
            x = rng.normal(size=2)
            u = rng.normal(size=2)
            sigma = int(rng.integers(0, 2))
            v = act_pi(sigma, act_params.widths) @ u
            expected = x @ act_params.Q @ x + v @ act_params.R_blocks[sigma] @ v
            assert act_stage_cost(x, u, sigma, act_params) == pytest.approx(expected)

    def test_zero_width_rejected(self):
        with pytest.raises(InvalidModel):
            ActuatorParams(A=np.eye(2), B=np.eye(2), Q=np.eye(2),
                           R_blocks=(np.eye(2), np.eye(0)), widths=(2, 0),
                           base_schedule=(0, 1))


class TestParamValidation:
    def test_network_integer_ordering(self):
        with pytest.raises(InvalidModel):
            TokenBucketParams(A=[[1.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]],
                              g=2, c=1, b=5, X_p=Polytope.box([1.0]), U_p=Polytope.box([1.0]))

    def test_period_round_up(self, paper_net):
        assert paper_net.M == 8
        p = TokenBucketParams(A=[[1.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]],
                              g=2, c=3, b=5, X_p=Polytope.box([1.0]), U_p=Polytope.box([1.0]))
        assert p.M == 2

    def test_indefinite_cost_rejected(self):
        with pytest.raises(InvalidModel):
            TokenBucketParams(A=[[1.0]], B=[[1.0]], Q=[[0.0]], R=[[1.0]],
                              g=1, c=1, b=1, X_p=Polytope.box([1.0]), U_p=Polytope.box([1.0]))
