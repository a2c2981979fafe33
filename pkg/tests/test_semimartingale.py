from dataclasses import replace

import numpy as np
import pytest

from jumpito.calculus import FunctionJet, PNormJet
from jumpito.drivers import JumpStream, MarkSpace, TimeGrid, WienerBundle
from jumpito.errors import DomainError, PreconditionError
from jumpito.semimartingale import (
    TERM_NAMES,
    DriverFD,
    FDSetup,
    build_path_fd,
    clipping_study,
    energy_gap,
    energy_identity_stat,
    eval_ito_fd,
    refinement_residuals,
)


def _no_noise(tg, R=0):
    return WienerBundle(np.zeros((tg.n_steps, R)))


def pure_jump_drivers(M):
    def h(t, z):
        return np.where(z[0] < 2, (0.5 + t) * np.linspace(-1, 1, M) + 0.3 * z[0], 0.0)

    def hbar(t, z):
        return np.full(M, -0.7) if z[0] == 2 else np.zeros(M)

    return DriverFD(M, h=h, hbar=hbar)


class TestBuild:
    def test_zero_drivers_constant_path(self):
        tg = TimeGrid.uniform(1.0, 8)
        js = JumpStream.from_atoms([0.3], [[0.0]], tg)
        path = build_path_fd(DriverFD(2), js, _no_noise(js.grid), [1.0, -2.0])
        assert np.all(path.X == np.array([1.0, -2.0]))
        tb = eval_ito_fd(path, 3.0)
        assert all(v == 0.0 for v in tb.terms.values()) and tb.residual == 0.0

    def test_constant_drift(self):
        tg = TimeGrid.uniform(2.0, 16)
        js = JumpStream.from_atoms([], [], tg)
        path = build_path_fd(DriverFD(1, f=lambda t: np.array([0.75])), js, _no_noise(tg), [0.5])
        assert path.X[-1, 0] == pytest.approx(0.5 + 0.75 * 2.0, abs=1e-14)

    def test_single_raw_jump(self):
        tg = TimeGrid.uniform(1.0, 4)
        js = JumpStream.from_atoms([0.3], [[0.0]], tg)
        a = np.array([0.25, -1.0])
        path = build_path_fd(DriverFD(2, hbar=lambda t, z: a), js, _no_noise(js.grid), [1.0, 1.0])
        after = path.grid.points >= 0.3
        np.testing.assert_array_equal(path.X[after], np.tile([1.25, 0.0], (after.sum(), 1)))
        np.testing.assert_array_equal(path.X[~after], np.ones((np.sum(~after), 2)))
        k = path.jumps.grid_index[0]
        np.testing.assert_array_equal(path.X_minus[k], [1.0, 1.0])

    def test_orthogonality_violation_names_point(self):
        tg = TimeGrid.uniform(1.0, 4)
        js = JumpStream.from_atoms([0.5], [[0.0]], tg)
        bad = DriverFD(1, h=lambda t, z: np.ones(1), hbar=lambda t, z: np.ones(1))
        with pytest.raises(PreconditionError, match=r"t=.*z="):
            build_path_fd(bad, js, _no_noise(js.grid), [0.0], ms=MarkSpace.finite_set(1, 1.0))

    def test_left_limits(self):
        setup = FDSetup(pure_jump_drivers(2), np.array([0.2, 0.1]), MarkSpace.finite_set(3, 4.0), n_steps=8, seed=4)
        path = setup.simulate(0)
        assert len(path.jumps) > 0
        idx = path.jumps.grid_index
        np.testing.assert_array_equal(path.atom_pre, path.X_minus[idx])
        np.testing.assert_array_equal(path.X[idx] - path.X_minus[idx],
                                      path.samples.atom_h + path.samples.atom_hbar)
        no_atom = np.setdiff1d(np.arange(path.grid.points.size), idx)
        np.testing.assert_array_equal(path.X[no_atom], path.X_minus[no_atom])


class TestEvaluation:
    def test_term_names(self):
        path = FDSetup(DriverFD(1), np.zeros(1), MarkSpace.finite_set(1, 0.0), n_steps=4).simulate(0)
        assert tuple(eval_ito_fd(path, 2.0).terms) == TERM_NAMES

    def test_off_grid_time(self):
        path = FDSetup(DriverFD(1), np.zeros(1), MarkSpace.finite_set(1, 0.0), n_steps=4).simulate(0)
        with pytest.raises(DomainError):
            eval_ito_fd(path, 2.0, t=0.3)

    def test_p2_constant_jump_telescoping(self):
        # h = c with an active compensator: each atom contributes c^2 to the remainder
        c, lam = 0.4, 1.5
        tg = TimeGrid.uniform(1.0, 8)
        js = JumpStream.from_atoms([0.2, 0.45, 0.9], [[0.0]] * 3, tg)
        ms = MarkSpace.finite_set(1, lam)
        path = build_path_fd(DriverFD(1, h=lambda t, z: np.array([c])), js, _no_noise(js.grid), [0.3], ms=ms)
        tb = eval_ito_fd(path, 2.0)
        assert tb.terms["remainder_jump_term"] == pytest.approx(3 * c**2, rel=1e-14)
        pre = path.atom_pre[:, 0]
        Xk, dt = path.X[:-1, 0], path.grid.steps
        H = c * lam
        expected = np.sum(2 * pre * c) - np.sum(2 * Xk * H * dt - H**2 * dt**2)
        assert tb.terms["compensated_jump_term"] == pytest.approx(expected, rel=1e-13)
        assert abs(tb.residual) <= 1e-13

    @pytest.mark.parametrize("p", [2.0, 2.5, 3.0, 4.0, 6.0])
    @pytest.mark.parametrize("M", [1, 2, 3])
    def test_pure_jump_exact(self, p, M):
        setup = FDSetup(pure_jump_drivers(M), np.linspace(0.5, -0.5, M), MarkSpace.finite_set(3, 2.0),
                        n_steps=16, seed=1)
        for i in range(10):
            tb = eval_ito_fd(setup.simulate(i), p)
            assert abs(tb.residual) <= 1e-10 * (1 + abs(tb.lhs))

    @pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
    def test_jet_and_power_evaluators_agree(self, p):
        drivers = DriverFD(2, 1, f=lambda t: np.array([0.3, -0.1]), g=lambda t: np.array([[0.5], [0.2 * t]]),
                           h=lambda t, z: np.array([0.2, z[0]]))
        setup = FDSetup(drivers, np.array([0.4, 0.0]), MarkSpace.box([[0, 1]], 2.0, 4), n_steps=32, seed=3)
        path = setup.simulate(0)
        a, b = eval_ito_fd(path, p), eval_ito_fd(path, PNormJet(p))
        assert a.lhs == b.lhs
        for name in TERM_NAMES:
            assert a.terms[name] == pytest.approx(b.terms[name], rel=1e-12, abs=1e-13)

    def test_generic_jet_pure_jump(self):
        jet = FunctionJet(lambda x: np.sum(np.cos(x), axis=-1), lambda x: -np.sin(x),
                          lambda x: -np.cos(x)[..., None] * np.eye(x.shape[-1]))
        setup = FDSetup(pure_jump_drivers(2), np.array([0.1, 0.2]), MarkSpace.finite_set(3, 3.0), n_steps=8)
        for i in range(5):
            tb = eval_ito_fd(setup.simulate(i), jet)
            assert abs(tb.residual) <= 1e-10

    def test_diffusion_refinement_rate(self):
        drivers = DriverFD(
            2, 2,
            f=lambda t: np.array([0.5 * np.cos(t), -0.3]),
            g=lambda t: np.array([[1.0, 0.3], [0.2, 0.8]]) * (1 + 0.5 * np.sin(3 * t)),
            h=lambda t, z: np.array([0.4 * z[0], -0.2]) if z[0] < 2 else np.zeros(2),
            hbar=lambda t, z: np.array([0.3, 0.1]) if z[0] == 2 else np.zeros(2),
        )
        setup = FDSetup(drivers, np.array([0.5, -0.3]), MarkSpace.finite_set(3, 2.0), seed=2)
        levels = [2**k for k in range(5, 9)]
        med = np.median(refinement_residuals(setup, levels, 100, 2.0), axis=0)
        assert np.all(np.diff(med) < 0)
        slope = -np.polyfit(np.log2(levels), np.log2(med), 1)[0]
        assert 0.25 <= slope <= 1.0  # close to order one half in dt


class TestEnergy:
    def test_zero_drivers_gap_is_zero(self):
        setup = FDSetup(DriverFD(2), np.array([1.0, 2.0]), MarkSpace.finite_set(1, 0.0), n_steps=4)
        assert energy_gap(setup.simulate(0)) == 0.0

    def test_compensated_poisson_variance(self):
        setup = FDSetup(DriverFD(1, h=lambda t, z: np.ones(1)), np.zeros(1), MarkSpace.finite_set(1, 1.0),
                        n_steps=16, seed=8)
        mean, se = energy_identity_stat(setup, 4000)
        assert abs(mean) <= 3 * se

    def test_wiener_isometry(self):
        setup = FDSetup(DriverFD(1, 1, g=lambda t: np.ones((1, 1))), np.zeros(1), MarkSpace.finite_set(1, 0.0),
                        n_steps=8, seed=9)
        mean, se = energy_identity_stat(setup, 4000)
        assert abs(mean) <= 3 * se


def test_clipping_study_is_stable_for_pure_jumps():
    setup = FDSetup(pure_jump_drivers(2), np.array([0.3, 0.3]), MarkSpace.finite_set(3, 2.0), n_steps=8, seed=5)
    res = clipping_study(setup, 0, [0.1, 0.5, 10.0], 4.0)
    assert np.all(np.abs(res) <= 1e-12)
    plain = eval_ito_fd(setup.simulate(0), 4.0)
    big = replace(setup, drivers=setup.drivers)  # same drivers, unclipped
    assert plain.lhs == eval_ito_fd(big.simulate(0), 4.0).lhs


def test_randomized_drivers_are_per_path():
    def factory(rng):
        c = rng.uniform(-1, 1)
        return DriverFD(1, f=lambda t: np.array([c]))

    setup = FDSetup(factory, np.zeros(1), MarkSpace.finite_set(1, 0.0), n_steps=4, seed=1)
    a, b = setup.simulate(0), setup.simulate(1)
    assert a.X[-1, 0] != b.X[-1, 0]
    assert setup.simulate(0).X[-1, 0] == a.X[-1, 0]


def test_coupled_refinement_shares_jumps():
    setup = FDSetup(pure_jump_drivers(1), np.zeros(1), MarkSpace.finite_set(3, 3.0), seed=6)
    coarse, fine = setup.simulate_refined(0, [8, 32])
    np.testing.assert_array_equal(coarse.jumps.times, fine.jumps.times)
    assert fine.grid.is_refinement_of(coarse.grid)
