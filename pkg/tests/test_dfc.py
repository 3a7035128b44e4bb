import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import dfclrr.dfc as dfc_mod
from dfclrr.dfc import column_project, dfc_lrr, partition_columns, sample_size_bound
from dfclrr.errors import NumericalDivergence, ParameterError, ZeroMatrixError
from dfclrr.linalg import principal_angles
from dfclrr.solver import LrrProblem, SolverOptions, solve_lrr
from dfclrr.synth import SynthConfig, gen_dataset
from dfclrr.theory import check_recovery


@pytest.fixture(scope="module")
def phase_instance():
    return gen_dataset(SynthConfig(k=3, m=300, r=5, n_s=100, gamma=0.05, seed=3))


class TestPartition:
    def test_equal_blocks(self):
        plan = partition_columns(6, 3, seed=0)
        assert plan.sizes() == [2, 2, 2]
        assert sorted(np.concatenate(plan.blocks).tolist()) == list(range(6))

    def test_single_block(self):
        plan = partition_columns(7, 1, seed=0)
        assert sorted(plan.blocks[0].tolist()) == list(range(7))

    def test_remainder_goes_to_first_blocks(self):
        assert partition_columns(10, 4, seed=1).sizes() == [3, 3, 2, 2]

    def test_t_exceeds_n(self):
        with pytest.raises(ParameterError):
            partition_columns(3, 4)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 500), st.data())
    def test_partition_properties(self, n, data):
        t = data.draw(st.integers(1, n))
        seed = data.draw(st.integers(0, 2**32))
        plan = partition_columns(n, t, seed)
        allidx = np.concatenate(plan.blocks)
        assert np.array_equal(np.sort(allidx), np.arange(n))
        sizes = plan.sizes()
        assert max(sizes) - min(sizes) <= 1
        again = partition_columns(n, t, seed)
        assert all(np.array_equal(a, b) for a, b in zip(plan.blocks, again.blocks))


class TestColumnProject:
    def test_single_block_reconstruction(self):
        b = np.random.default_rng(0).standard_normal((6, 4))
        basis, coeff = column_project([b])
        np.testing.assert_allclose(basis @ coeff, b, atol=1e-10)

    def test_shared_column_space(self):
        rng = np.random.default_rng(1)
        anchor = rng.standard_normal((20, 3)) @ rng.standard_normal((3, 8))
        blocks = [anchor] + [anchor @ rng.standard_normal((8, 5)) for _ in range(3)]
        basis, coeff = column_project(blocks)
        full = np.hstack(blocks)
        assert np.linalg.norm(basis @ coeff - full) / np.linalg.norm(full) <= 1e-8
        assert np.max(np.abs(basis.T @ basis - np.eye(basis.shape[1]))) <= 1e-8

    def test_orthogonal_block(self):
        e = np.eye(4)
        basis, coeff = column_project([e[:, :2], e[:, 2:]])
        np.testing.assert_allclose(coeff[:, 2:], 0, atol=1e-15)

    def test_degenerate_anchor(self):
        with pytest.raises(ZeroMatrixError, match="degenerate anchor"):
            column_project([np.zeros((3, 2)), np.ones((3, 2))])

    def test_order_scatters_columns(self):
        rng = np.random.default_rng(2)
        full = rng.standard_normal((5, 2)) @ rng.standard_normal((2, 6))
        order = [np.array([4, 0, 2]), np.array([1, 5, 3])]
        basis, coeff = column_project([full[:, o] for o in order], order=order)
        np.testing.assert_allclose(basis @ coeff, full, atol=1e-10)


class TestDfcLrr:
    def test_t1_matches_full_lrr(self):
        ds = gen_dataset(SynthConfig(k=2, m=60, r=3, n_s=40, gamma=0.1, seed=4))
        m = ds.m_matrix
        full = solve_lrr(LrrProblem(m, m, 0.2))
        res = dfc_lrr(m, 1, 0.2, seed=9)
        assert np.max(principal_angles(res.z_hat.basis, full.z)) <= 1e-6

    def test_phase_instance_t4(self, phase_instance):
        ds = phase_instance
        m = ds.m_matrix
        full = solve_lrr(LrrProblem(m, m, 0.2))
        res = dfc_lrr(m, 4, 0.2, seed=0)
        ok_full = check_recovery(full.z, ds.l0(), ds.outlier_support, full.s).success
        ok_dfc = check_recovery(res.z_hat, ds.l0(), ds.outlier_support, res.s).success
        assert ok_full and ok_dfc
        assert np.max(np.abs(res.z_hat.basis.T @ res.z_hat.basis - np.eye(res.z_hat.basis.shape[1]))) <= 1e-8
        assert res.z_hat.coeff.shape[1] == m.shape[1]

    def test_parallelism_bit_identical(self, phase_instance):
        m = phase_instance.m_matrix
        a = dfc_lrr(m, 4, 0.2, seed=5, parallelism=1)
        b = dfc_lrr(m, 4, 0.2, seed=5, parallelism=8)
        assert np.array_equal(a.z_hat.basis, b.z_hat.basis)
        assert np.array_equal(a.z_hat.coeff, b.z_hat.coeff)
        assert np.array_equal(a.s, b.s)

    def test_block_lambda_scaling(self):
        m = np.random.default_rng(0).standard_normal((10, 12))
        res = dfc_lrr(m, 3, 0.2, SolverOptions(max_iters=30), seed=0)
        np.testing.assert_allclose(res.block_lambdas, [0.2 * math.sqrt(12 / 4)] * 3)
        res = dfc_lrr(m, 3, 0.2, SolverOptions(max_iters=30), seed=0, scale_lambda=False)
        assert res.block_lambdas == [0.2] * 3

    def test_non_converged_blocks_flagged(self):
        m = gen_dataset(SynthConfig(k=2, m=30, r=3, n_s=20, gamma=0.1, seed=1)).m_matrix
        res = dfc_lrr(m, 2, 0.2, SolverOptions(max_iters=3), seed=0)
        assert not res.converged
        assert res.diagnostics()["converged"] is False

    def test_divergence_carries_block(self, monkeypatch):
        m = gen_dataset(SynthConfig(k=2, m=30, r=3, n_s=20, gamma=0.1, seed=1)).m_matrix
        plan = partition_columns(m.shape[1], 3, 7)
        real = dfc_mod.solve_lrr

        def flaky(problem, opts, dictionary=None):
            if np.array_equal(problem.observation, m[:, plan.blocks[2]]):
                raise NumericalDivergence("boom")
            return real(problem, opts, dictionary=dictionary)

        monkeypatch.setattr(dfc_mod, "solve_lrr", flaky)
        with pytest.raises(NumericalDivergence) as err:
            dfc_lrr(m, 3, 0.2, seed=7)
        assert err.value.block == 2

    def test_reported_time_convention(self):
        m = np.random.default_rng(0).standard_normal((10, 12))
        res = dfc_lrr(m, 3, 0.2, SolverOptions(max_iters=30), seed=0)
        w = res.wall_times
        assert res.reported_time() == pytest.approx(w["setup"] + max(w["blocks"]) + w["combine"])

    def test_invalid_inputs(self):
        m = np.ones((3, 4))
        with pytest.raises(ParameterError):
            dfc_lrr(m, 5, 0.2)
        with pytest.raises(ParameterError):
            dfc_lrr(m, 2, 0.0)


class TestSampleSizeBound:
    def test_unit_case(self):
        # c r mu = 1, gap 1, 4n/delta = e
        assert sample_size_bound(r=1, mu=0.5, n=1, delta=4 / math.e, gamma=0.0, gamma_star=1.0, c=2.0) == 1

    def test_halving_gap_quadruples(self):
        a = 2 * 5 * 3 * math.log(4 * 1000 / 0.1) / 0.2**2
        b = 2 * 5 * 3 * math.log(4 * 1000 / 0.1) / 0.1**2
        assert b == pytest.approx(4 * a)
        assert sample_size_bound(5, 3, 1000, 0.1, 0.05, 0.25, 2) == math.ceil(a)
        assert sample_size_bound(5, 3, 1000, 0.1, 0.15, 0.25, 2) == math.ceil(b)

    def test_arithmetic(self):
        expect = math.ceil(20 * math.log(40000) / 0.04)
        assert sample_size_bound(5, 2, 1000, 0.1, 0.05, 0.25, 2) == expect

    def test_gamma_at_or_above_critical(self):
        with pytest.raises(ParameterError):
            sample_size_bound(5, 2, 1000, 0.1, 0.25, 0.25, 2)

    def test_c_must_exceed_one(self):
        with pytest.raises(ParameterError):
            sample_size_bound(5, 2, 1000, 0.1, 0.0, 0.25, 1.0)
