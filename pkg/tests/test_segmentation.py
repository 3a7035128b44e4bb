import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import dfclrr.segmentation as seg
from dfclrr.dfc import FactoredMatrix
from dfclrr.errors import ContractViolation, ParameterError, ZeroMatrixError
from dfclrr.linalg import principal_angles
from dfclrr.segmentation import (
    Labeling,
    affinity_from_z,
    kmeans,
    segment,
    segmentation_accuracy,
    spectral_embed,
)
from dfclrr.solver import LrrProblem, default_lambda_practical, solve_lrr
from dfclrr.synth import SynthConfig, gen_dataset
from oracles import brute_force_majority


class TestAffinity:
    def test_projector(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((12, 3)) @ rng.standard_normal((3, 12))
        a = affinity_from_z(z, 3)
        assert np.array_equal(a, a.T)
        assert np.linalg.norm(a @ a - a) <= 1e-10
        ev = np.linalg.eigvalsh(a)
        assert np.all(np.minimum(np.abs(ev), np.abs(ev - 1)) <= 1e-6)

    def test_rank_one(self):
        u = np.array([1.0, 2.0, 2.0]) / 3
        a = affinity_from_z(np.outer(u, [1.0, -1.0, 0.5]), 1)
        np.testing.assert_allclose(a, np.outer(u, u), atol=1e-14)

    def test_block_diagonal(self):
        ds = gen_dataset(SynthConfig(k=3, m=30, r=2, n_s=10, seed=0))
        _, s, vt = np.linalg.svd(ds.m_matrix, full_matrices=False)
        v = vt[:6].T
        a = affinity_from_z(v @ v.T)
        lab = ds.column_labels()
        assert np.abs(a[lab[:, None] != lab[None, :]]).sum() <= 1e-8

    def test_factored_input(self):
        rng = np.random.default_rng(1)
        q, _ = np.linalg.qr(rng.standard_normal((10, 3)))
        f = FactoredMatrix(q, rng.standard_normal((3, 10)))
        np.testing.assert_allclose(affinity_from_z(f), affinity_from_z(f.dense()), atol=1e-10)

    def test_zero(self):
        with pytest.raises(ZeroMatrixError):
            affinity_from_z(np.zeros((3, 3)))


class TestSpectralEmbed:
    def test_identity_rows_unit(self):
        emb = spectral_embed(np.eye(4), 4)
        np.testing.assert_allclose(np.linalg.norm(emb, axis=1), 1.0)

    def test_projector_range(self):
        q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((9, 3)))
        emb = spectral_embed(q @ q.T, 3)
        assert np.max(principal_angles(emb, q)) <= 1e-8

    def test_two_blocks(self):
        a = np.zeros((6, 6))
        a[:3, :3] = 1 / 3
        a[3:, 3:] = 1 / 3
        emb = spectral_embed(a, 2)
        assert np.allclose(emb[:3], emb[0]) and np.allclose(emb[3:], emb[3])
        assert not np.allclose(emb[0], emb[3])

    def test_asymmetric(self):
        with pytest.raises(ContractViolation):
            spectral_embed(np.array([[1.0, 0.5], [0.0, 1.0]]), 1)


class TestKmeans:
    def test_distinct_points(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 5.0]])
        lab, wcss = kmeans(pts, 3, seed=0)
        assert sorted(lab.labels.tolist()) == [0, 1, 2] and wcss == 0

    def test_blobs(self):
        rng = np.random.default_rng(0)
        truth = np.repeat([0, 1], 30)
        pts = rng.standard_normal((60, 2)) * 0.1
        pts[truth == 1] += 10.0
        lab, _ = kmeans(pts, 2, seed=3)
        assert segmentation_accuracy(lab, truth).accuracy == 1.0

    def test_duplicates_share_label(self):
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((10, 2))
        pts = np.vstack([pts, pts])
        lab, _ = kmeans(pts, 3, seed=0)
        assert np.array_equal(lab.labels[:10], lab.labels[10:])

    def test_too_few_distinct(self):
        with pytest.raises(ParameterError):
            kmeans(np.ones((5, 2)), 2)

    def test_deterministic_and_thread_independent(self):
        pts = np.random.default_rng(2).standard_normal((50, 3))
        a, wa = kmeans(pts, 4, seed=7)
        b, wb = kmeans(pts, 4, seed=7, threads=4)
        assert np.array_equal(a.labels, b.labels) and wa == wb

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 6))
    def test_wcss_monotone(self, seed, k):
        pts = np.random.default_rng(seed).standard_normal((40, 2))
        hist = []
        seg._lloyd(pts, k, np.random.default_rng(seed), 100, history=hist)
        assert all(b <= a * (1 + 1e-12) + 1e-12 for a, b in zip(hist, hist[1:]))


class TestAccuracy:
    def test_relabelled_truth(self):
        truth = np.array([0, 0, 1, 1, 2, 2])
        assert segmentation_accuracy(np.array([2, 2, 0, 0, 1, 1]), truth).accuracy == 1.0

    def test_single_cluster(self):
        rep = segmentation_accuracy(np.zeros(6, dtype=int), np.array([0, 0, 0, 1, 1, 1]))
        assert rep.accuracy == 0.5 and rep.overall_accuracy == 0.5
        assert rep.cluster_to_class == {0: 0}

    def test_per_class_versus_overall(self):
        # class sizes 4 and 2, one cluster -> per-class mean 0.5, overall 4/6
        rep = segmentation_accuracy(np.zeros(6, dtype=int), np.array([0, 0, 0, 0, 1, 1]))
        assert rep.accuracy == 0.5
        assert rep.overall_accuracy == pytest.approx(4 / 6)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_brute_force_oracle(self, seed):
        rng = np.random.default_rng(seed)
        truth = rng.integers(0, 3, 30)
        pred = rng.integers(0, 3, 30)
        rep = segmentation_accuracy(pred, truth)
        mapping, overall = brute_force_majority(pred, truth)
        assert rep.cluster_to_class == mapping
        assert rep.overall_accuracy == pytest.approx(overall, abs=1e-12)
        correct = np.array([mapping[c] for c in pred]) == truth
        per_class = np.mean([correct[truth == c].mean() for c in np.unique(truth)])
        assert rep.accuracy == pytest.approx(per_class, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.permutations([0, 1, 2, 3]))
    def test_relabeling_invariance(self, seed, perm):
        rng = np.random.default_rng(seed)
        truth = rng.integers(0, 3, 25)
        pred = rng.integers(0, 4, 25)
        a = segmentation_accuracy(pred, truth)
        b = segmentation_accuracy(np.asarray(perm)[pred], truth)
        assert a.accuracy == b.accuracy and a.overall_accuracy == b.overall_accuracy

    def test_errors(self):
        with pytest.raises(ParameterError):
            segmentation_accuracy(np.array([], dtype=int), np.array([], dtype=int))
        with pytest.raises(ParameterError):
            segmentation_accuracy(np.zeros(3, dtype=int), np.zeros(4, dtype=int))

    def test_labeling_range(self):
        with pytest.raises(ParameterError):
            Labeling(np.array([0, 3]), 3)


class TestPipeline:
    @pytest.mark.parametrize("seed", [0, 1])
    def test_ideal_case(self, seed):
        ds = gen_dataset(SynthConfig(k=3, m=150, r=5, n_s=50, gamma=0.0, seed=seed))
        m = ds.m_matrix
        sol = solve_lrr(LrrProblem(m, m, default_lambda_practical(*m.shape)))
        lab = segment(sol.z, 3, seed=0)
        assert segmentation_accuracy(lab, ds.column_labels()).accuracy == 1.0

    def test_default_embedding_handles_degenerate_spectrum(self):
        ds = gen_dataset(SynthConfig(k=3, m=60, r=3, n_s=20, seed=4))
        _, _, vt = np.linalg.svd(ds.m_matrix, full_matrices=False)
        v = vt[:9].T
        a = affinity_from_z(v @ v.T)
        # eigenvalue 1 has multiplicity 9, so the raw top-3 eigenvectors are
        # an arbitrary slice of the range and do not identify the subspaces
        top = np.sort(np.linalg.eigvalsh(a))[::-1][:9]
        np.testing.assert_allclose(top, 1.0, atol=1e-10)
        lab = segment(v @ v.T, 3, seed=0)
        assert segmentation_accuracy(lab, ds.column_labels()).accuracy == 1.0
