import numpy as np
import pytest

from cglab import (
    EmbeddingSet,
    ProbeBank,
    TrainingSupport,
    canonicalize,
    compositional_accuracy,
    effective_rank,
    enumerate_tuples,
    generate_factorized,
    generate_separable_nonfactorized,
    hard_margin_svm,
    make_space,
    min_dim_construction,
    orthogonality,
    predictions,
    projected_whitened_r2,
    recover_by_averaging,
    sample_support,
)
from cglab.cli import dominant_noise_embeddings
from cglab.concept_space import FullGrid


class TestProjectedWhitenedR2:
    def test_perfectly_additive_scores_one(self):
        eset, factors = generate_factorized(make_space([3, 4]), d=8,
                                            orthogonal=False, seed=0)
        result = projected_whitened_r2(eset, factors)
        assert abs(result.r2 - 1.0) <= 1e-9
        assert result.pipeline["whitened"]

    def test_counterexample_below_point_nine(self):
        eset, witness = generate_separable_nonfactorized(8, seed=0)
        assert (predictions(witness, eset.data) == eset.labels).all()
        result = projected_whitened_r2(eset, recover_by_averaging(eset),
                                       probes=witness)
        assert result.r2 < 0.9

    def test_whitening_lowers_dominant_noise_score(self):
        eset = dominant_noise_embeddings(seed=0)
        factors = recover_by_averaging(eset)
        whitened = projected_whitened_r2(eset, factors).r2
        raw = projected_whitened_r2(eset, factors, whiten=False).r2
        assert whitened < raw

    def test_constant_shift_invariance(self):
        eset, _ = generate_factorized(make_space([2, 3]), d=5,
                                      orthogonal=False, seed=1)
        rng = np.random.default_rng(2)
        noisy = EmbeddingSet(eset.space,
                             eset.data + 0.2 * rng.standard_normal(
                                 eset.data.shape),
                             eset.labels)
        base = projected_whitened_r2(noisy, recover_by_averaging(noisy)).r2
        shifted = EmbeddingSet(noisy.space, noisy.data + 42.0, noisy.labels)
        moved = projected_whitened_r2(shifted,
                                      recover_by_averaging(shifted)).r2
        assert abs(base - moved) < 1e-9

    def test_r2_one_iff_tiny_residual(self):
        eset, factors = generate_factorized(make_space([2, 2]), d=4,
                                            orthogonal=True, seed=3)
        result = projected_whitened_r2(eset, factors)
        assert result.numerator_ss < 1e-12 * result.denominator_ss

    def test_zero_variance_rejected(self):
        space = make_space([2, 2])
        labels = np.asarray(list(enumerate_tuples(space)))
        eset = EmbeddingSet(space, np.ones((4, 3)), labels)
        factors = canonicalize(space, [np.zeros((2, 3))] * 2,
                               offset=np.ones(3))
        with pytest.raises(ValueError):
            projected_whitened_r2(eset, factors, whiten=False)

    def test_projection_order_flag(self):
        eset, factors = generate_factorized(make_space([2, 2]), d=4,
                                            orthogonal=True, seed=4)
        _, witness = min_dim_construction(2, 2)
        # both orders run and record their pipelines
        a = projected_whitened_r2(eset, factors,
                                  whiten_before_projection=False)
        b = projected_whitened_r2(eset, factors,
                                  whiten_before_projection=True)
        assert a.pipeline["order"] == "project_then_whiten"
        assert b.pipeline["order"] == "whiten_then_project"


class TestOrthogonality:
    def test_binary_within_is_one(self):
        _, factors = generate_factorized(make_space([2, 2, 2]), d=6,
                                         orthogonal=False, seed=0)
        report = orthogonality(factors)
        assert np.abs(report.within - 1.0).max() < 1e-12

    def test_orthogonal_generator_across_vanishes(self):
        _, factors = generate_factorized(make_space([3, 4, 2]), d=10,
                                         orthogonal=True, seed=1)
        report = orthogonality(factors)
        off = report.across[~np.eye(3, dtype=bool)]
        assert off.max() <= 1e-8

    def test_random_directions_match_expected_cosine(self):
        # mean |cos| of independent unit directions in R^d is ~sqrt(2/(pi d))
        rng = np.random.default_rng(2)
        factors = canonicalize(
            make_space([32, 32]),
            [rng.standard_normal((32, 512)), rng.standard_normal((32, 512))])
        report = orthogonality(factors)
        assert abs(report.across[0, 1] - np.sqrt(2 / (np.pi * 512))) < 0.01

    def test_scale_invariance(self):
        _, factors = generate_factorized(make_space([3, 3]), d=6,
                                         orthogonal=False, seed=3)
        scaled = canonicalize(factors.space,
                              [7.5 * block for block in factors.factors])
        a = orthogonality(factors)
        b = orthogonality(scaled)
        assert np.abs(a.across - b.across).max() < 1e-12

    def test_symmetry_and_range(self):
        _, factors = generate_factorized(make_space([3, 4]), d=5,
                                         orthogonal=False, seed=4)
        report = orthogonality(factors)
        assert (report.across == report.across.T).all()
        assert (report.across >= 0).all() and (report.across <= 1).all()
        assert np.allclose(np.diag(report.across), report.within)

    def test_zero_direction_excluded_with_count(self):
        space = make_space([3, 2])
        blocks = [np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]]),
                  np.array([[0.0, 1.0], [0.0, -1.0]])]
        factors = canonicalize(space, blocks)
        report = orthogonality(factors)
        assert report.excluded_zero_directions == 1

    def test_all_zero_concept_rejected(self):
        space = make_space([2, 2])
        factors = canonicalize(space, [np.zeros((2, 3)),
                                       np.array([[1.0, 0, 0], [-1, 0, 0]])])
        with pytest.raises(ValueError):
            orthogonality(factors)


class TestEffectiveRank:
    def test_collinear_factors_rank_one(self):
        space = make_space([5, 2])
        direction = np.array([1.0, 2.0, 3.0])
        block = np.arange(5)[:, None] * direction
        factors = canonicalize(space, [block, np.ones((2, 3))
                                       * [[1.0, 0, 0], [-1, 0, 0]]])
        rank, curve = effective_rank(factors, 0)
        assert rank == 1
        assert curve[0] > 0.95

    def test_planar_circle_rank_two(self):
        space = make_space([12, 2])
        angles = np.linspace(0, 2 * np.pi, 12, endpoint=False)
        block = np.zeros((12, 5))
        block[:, 0] = np.cos(angles)
        block[:, 1] = np.sin(angles)
        factors = canonicalize(space, [block,
                                       np.array([[1.0, 0, 0, 0, 0],
                                                 [-1.0, 0, 0, 0, 0]])])
        rank, _ = effective_rank(factors, 0)
        assert rank == 2

    def test_random_square_gaussian_range(self):
        # oracle: Monte-Carlo over seeds puts the 95% cut at 5..7 components
        # for a row-centered 10x10 standard normal block
        space = make_space([10, 2])
        ranks = set()
        for seed in range(10):
            rng = np.random.default_rng(seed)
            factors = canonicalize(space, [rng.standard_normal((10, 10)),
                                           rng.standard_normal((2, 10))])
            rank, _ = effective_rank(factors, 0)
            ranks.add(rank)
        assert ranks <= {5, 6, 7}

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(1)
        space = make_space([6, 2])
        factors = canonicalize(space, [rng.standard_normal((6, 8)),
                                       rng.standard_normal((2, 8))])
        thresholds = np.linspace(0.1, 1.0, 10)
        ranks = [effective_rank(factors, 0, t)[0] for t in thresholds]
        assert (np.diff(ranks) >= 0).all()

    def test_zero_block_rank_zero(self):
        space = make_space([3, 2])
        factors = canonicalize(space, [np.zeros((3, 4)),
                                       np.array([[1.0, 0, 0, 0],
                                                 [-1.0, 0, 0, 0]])])
        rank, curve = effective_rank(factors, 0)
        assert rank == 0 and curve.size == 0


class TestCompositionalAccuracy:
    def test_axis_grid_is_exact(self):
        eset, bank = min_dim_construction(3, 6)
        heldout = sample_support(eset.space, FullGrid(), 0)
        per_concept, mean = compositional_accuracy(bank, eset, heldout)
        assert (per_concept == 1.0).all() and mean == 1.0

    def test_random_probes_chance_level(self):
        rng = np.random.default_rng(0)
        space = make_space([2])
        labels = rng.integers(0, 2, size=(4000, 1))
        eset = EmbeddingSet(space, rng.standard_normal((4000, 8)), labels)
        bank = ProbeBank(space, [rng.standard_normal((2, 8))],
                         [rng.standard_normal(2)])
        heldout = TrainingSupport(space, ((0,), (1,)))
        _, mean = compositional_accuracy(bank, eset, heldout)
        assert abs(mean - 0.5) < 0.05

    def test_svm_readouts_transfer_from_cross_support(self):
        eset, factors = generate_factorized(make_space([2] * 4), d=6,
                                            orthogonal=True, seed=5)
        from cglab import cross_dataset

        support = cross_dataset(eset.space, (0, 0, 0, 0))
        rows = [eset.space.tuple_index(t) for t in support.tuples]
        weights, biases = [], []
        for i in range(4):
            member = eset.labels[rows][:, i] == 1
            sol = hard_margin_svm(eset.data[rows][member],
                                  eset.data[rows][~member])
            weights.append(np.vstack([np.zeros_like(sol.w), sol.w]))
            biases.append(np.array([0.0, sol.b]))
        bank = ProbeBank(eset.space, weights, biases)
        heldout = sample_support(eset.space, FullGrid(), 0)
        per_concept, mean = compositional_accuracy(bank, eset, heldout)
        assert mean == 1.0

    def test_bias_shift_invariance(self):
        eset, bank = min_dim_construction(2, 4)
        shifted = ProbeBank(eset.space, bank.weights,
                            [b + 5.0 for b in bank.biases])
        heldout = sample_support(eset.space, FullGrid(), 0)
        a = compositional_accuracy(bank, eset, heldout)
        b = compositional_accuracy(shifted, eset, heldout)
        assert a[1] == b[1]

    def test_empty_heldout_rejected(self):
        eset, bank = min_dim_construction(2, 3)
        space = make_space([3, 3])
        with pytest.raises(ValueError):
            compositional_accuracy(bank, eset,
                                   TrainingSupport(space, ()))
