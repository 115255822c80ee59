import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mrlcluster.core import EmbeddingMatrix, LabeledPair, SimilarityLabel
from mrlcluster.errors import (
    EmptyGrid,
    MismatchedDocumentSets,
    SingleClass,
    TooFewSeeds,
    ZeroVariance,
)
from mrlcluster.metrics import (
    auroc,
    auroc_at_levels,
    pair_prefix_cosines,
    pairwise_prf,
    pearson,
    relational_similarity,
    tune_lambda,
)

from generators import separable_pairs_matrix
from oracles import (
    auroc_pairs,
    pairwise_prf_enumerated,
    pearson_direct,
    relational_similarity_loops,
)

VD = SimilarityLabel.VERY_DISSIMILAR
SD = SimilarityLabel.SOMEWHAT_DISSIMILAR
SS = SimilarityLabel.SOMEWHAT_SIMILAR
VS = SimilarityLabel.VERY_SIMILAR


def matrix_from(rows, ids=None):
    rows = np.asarray(rows, dtype=np.float64)
    ids = ids or tuple(f"d{i}" for i in range(rows.shape[0]))
    return EmbeddingMatrix(data=rows, ids=ids)


def pair_rows(cosine, dim=8):
    """Two unit rows whose full-dimension cosine is exactly `cosine`."""
    angle = math.acos(cosine)
    a = np.zeros(dim)
    a[0] = 1.0
    b = np.zeros(dim)
    b[0] = math.cos(angle)
    b[1] = math.sin(angle)
    return a, b


class TestPearson:
    def test_identity(self):
        xs = [1.0, 2.0, 5.0, -3.0]
        assert pearson(xs, xs) == pytest.approx(1.0, abs=1e-12)

    def test_negation(self):
        xs = [1.0, 2.0, 5.0, -3.0]
        assert pearson(xs, [-x for x in xs]) == pytest.approx(-1.0, abs=1e-12)

    def test_fixture_matches_direct_formula(self):
        xs = [1.0, 2.0, 3.0, 4.0]
        ys = [1.1, 1.9, 3.2, 3.8]
        assert pearson(xs, ys) == pytest.approx(pearson_direct(xs, ys), abs=1e-12)

    def test_affine_transforms(self):
        rng = np.random.default_rng(1)
        xs = rng.standard_normal(50)
        assert pearson(xs, 3.5 * xs + 2.0) == pytest.approx(1.0, abs=1e-12)
        assert pearson(xs, -0.2 * xs + 7.0) == pytest.approx(-1.0, abs=1e-12)

    def test_zero_variance(self):
        with pytest.raises(ZeroVariance):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_random_agreement_with_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            xs = rng.standard_normal(20)
            ys = rng.standard_normal(20)
            assert pearson(xs, ys) == pytest.approx(
                pearson_direct(list(xs), list(ys)), abs=1e-12
            )


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0

    def test_all_ties_give_half(self):
        assert auroc([0.5] * 6, [1, 0, 1, 0, 1, 0]) == 0.5

    def test_mixed_scores_match_brute_force(self):
        scores = [0.1, 0.4, 0.4, 0.8, 0.3, 0.4]
        labels = [0, 1, 0, 1, 0, 1]
        assert auroc(scores, labels) == auroc_pairs(scores, labels)

    def test_random_instances_match_brute_force_exactly(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(4, 30))
            scores = np.round(rng.standard_normal(n), 1)  # induce ties
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert auroc(scores, labels) == auroc_pairs(list(scores), list(labels))

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(4)
        scores = rng.standard_normal(30)
        labels = rng.integers(0, 2, size=30)
        labels[0], labels[1] = 0, 1
        base = auroc(scores, labels)
        assert auroc(np.exp(scores), labels) == base
        assert auroc(3.0 * scores + 1.0, labels) == base

    def test_complement_identity(self):
        rng = np.random.default_rng(5)
        scores = np.round(rng.standard_normal(40), 1)
        labels = rng.integers(0, 2, size=40)
        labels[0], labels[1] = 0, 1
        assert auroc(scores, labels) + auroc(scores, 1 - labels) == 1.0

    def test_single_class_raises(self):
        with pytest.raises(SingleClass):
            auroc([0.1, 0.2], [1, 1])


class TestAurocAtLevels:
    def test_perfect_ordering_gives_ones(self):
        rows, pairs = [], []
        bands = {VD: 0.05, SD: 0.35, SS: 0.65, VS: 0.95}
        for label, cosine in bands.items():
            for k in range(3):
                a, b = pair_rows(cosine + 0.01 * k)
                rows.extend([a, b])
                pairs.append(
                    LabeledPair(f"d{len(rows) - 2}", f"d{len(rows) - 1}", label=label)
                )
        matrix = matrix_from(rows)
        result = auroc_at_levels(pairs, matrix, matrix.d)
        assert result == {"SD": 1.0, "SS": 1.0, "VS": 1.0}

    def test_shuffled_labels_sit_near_half(self):
        rng = np.random.default_rng(6)
        n_rows, n_pairs = 200, 2000
        matrix = matrix_from(rng.standard_normal((n_rows, 8)))
        pairs = []
        for _ in range(n_pairs):
            a, b = rng.choice(n_rows, size=2, replace=False)
            label = SimilarityLabel(int(rng.integers(0, 4)))
            pairs.append(LabeledPair(f"d{a}", f"d{b}", label=label))
        result = auroc_at_levels(pairs, matrix, 8)
        for cut in ("SD", "SS", "VS"):
            assert 0.45 <= result[cut] <= 0.55

    def test_degenerate_cut_is_undefined(self):
        rows, pairs = [], []
        for k, label in enumerate((SD, SS, SS)):
            a, b = pair_rows(0.2 + 0.3 * k)
            rows.extend([a, b])
            pairs.append(LabeledPair(f"d{2 * k}", f"d{2 * k + 1}", label=label))
        matrix = matrix_from(rows)
        result = auroc_at_levels(pairs, matrix, 8)
        assert result["VS"] is None  # no pair reaches the VS cut
        assert result["SS"] is not None
        assert result["SD"] is None  # every pair is at least SD: single class


class TestPairwisePrf:
    def test_identical_partitions(self):
        partition = [{"a", "b"}, {"c"}, {"d", "e", "f"}]
        assert pairwise_prf(partition, partition) == (1.0, 1.0, 1.0)

    def test_all_singletons_against_one_pair(self):
        predicted = [{"a"}, {"b"}]
        gold = [{"a", "b"}]
        assert pairwise_prf(predicted, gold) == (0.0, 0.0, 0.0)

    def test_worked_example(self):
        predicted = [{"a", "b"}, {"c", "d"}, {"e", "f"}]
        gold = [{"a", "b", "c"}, {"d", "e", "f"}]
        p, r, f1 = pairwise_prf(predicted, gold)
        assert (p, r, f1) == (pytest.approx(2 / 3), pytest.approx(1 / 3), pytest.approx(4 / 9))

    def test_swap_exchanges_precision_and_recall(self):
        predicted = [{"a", "b"}, {"c", "d"}, {"e", "f"}]
        gold = [{"a", "b", "c"}, {"d", "e", "f"}]
        p1, r1, _ = pairwise_prf(predicted, gold)
        p2, r2, _ = pairwise_prf(gold, predicted)
        assert (p1, r1) == (r2, p2)

    def test_matches_enumeration_on_random_partitions(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            n = int(rng.integers(1, 13))
            docs = [f"x{i}" for i in range(n)]
            pred_labels = rng.integers(0, max(1, int(rng.integers(1, 6))), size=n)
            gold_labels = rng.integers(0, max(1, int(rng.integers(1, 6))), size=n)

            def group(labels):
                out = {}
                for doc, lab in zip(docs, labels):
                    out.setdefault(int(lab), set()).add(doc)
                return list(out.values())

            pred, gold = group(pred_labels), group(gold_labels)
            assert pairwise_prf(pred, gold) == pytest.approx(
                pairwise_prf_enumerated(pred, gold)
            )

    def test_mismatched_documents_raise(self):
        with pytest.raises(MismatchedDocumentSets):
            pairwise_prf([{"a", "b"}], [{"a", "c"}])

    def test_overlapping_clusters_rejected(self):
        with pytest.raises(ValueError, match="overlapping"):
            pairwise_prf([{"a", "b"}, {"b"}], [{"a"}, {"b"}])


class TestRelationalSimilarity:
    def test_self_similarity_is_one(self):
        rng = np.random.default_rng(8)
        x = matrix_from(rng.standard_normal((6, 8)))
        assert relational_similarity(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_transform_invariance(self):
        rng = np.random.default_rng(9)
        data = rng.standard_normal((10, 8))
        q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
        x = matrix_from(data)
        y = matrix_from(data @ q.T)
        assert relational_similarity(x, y) == pytest.approx(1.0, abs=1e-9)

    def test_small_instance_matches_double_loop_oracle(self):
        rng = np.random.default_rng(10)
        a = rng.standard_normal((5, 8))
        b = rng.standard_normal((5, 8))
        got = relational_similarity(matrix_from(a), matrix_from(b))
        assert got == pytest.approx(relational_similarity_loops(a, b), abs=1e-12)

    def test_too_few_rows(self):
        rng = np.random.default_rng(11)
        x = matrix_from(rng.standard_normal((2, 4)))
        with pytest.raises(TooFewSeeds):
            relational_similarity(x, x)

    def test_row_count_mismatch(self):
        rng = np.random.default_rng(12)
        x = matrix_from(rng.standard_normal((4, 4)))
        y = matrix_from(rng.standard_normal((5, 4)))
        with pytest.raises(ValueError, match="row-aligned"):
            relational_similarity(x, y)


class TestTuneLambda:
    def test_separable_fixture_reaches_perfect_f1(self):
        matrix, pairs = separable_pairs_matrix(np.random.default_rng(13))
        scores = pair_prefix_cosines(matrix, pairs, matrix.d)
        positives = np.array([p.label == VS for p in pairs])
        max_neg = scores[~positives].max()
        min_pos = scores[positives].min()
        assert max_neg < 0.2 and min_pos > 0.8  # generator-verified margins
        lam, f1 = tune_lambda(matrix, pairs, matrix.d, 3, (0.0, 0.95, 0.05))
        assert f1 == 1.0
        assert max_neg <= lam < min_pos

    def test_all_positive_returns_smallest_threshold(self):
        matrix, pairs = separable_pairs_matrix(np.random.default_rng(14))
        only_pos = [p for p in pairs if p.label == VS]
        lam, f1 = tune_lambda(matrix, only_pos, matrix.d, 3, (-1.0, 1.0, 0.25))
        assert f1 == 1.0
        assert lam == -1.0

    def test_gapped_grid_reports_honest_best(self):
        # the grid stops well below the separating band, so perfect F1 is
        # out of reach and the best reachable value must be reported as-is
        matrix, pairs = separable_pairs_matrix(np.random.default_rng(15))
        grid = (-0.5, -0.1, 0.1)
        lam, f1 = tune_lambda(matrix, pairs, matrix.d, 3, grid)
        scores = pair_prefix_cosines(matrix, pairs, matrix.d)
        positives = np.array([p.label == VS for p in pairs])

        def f1_at(threshold):
            pred = scores > threshold
            tp = int(np.sum(pred & positives))
            fp = int(np.sum(pred & ~positives))
            fn = int(np.sum(~pred & positives))
            return 2 * tp / (2 * tp + fp + fn) if tp else 0.0

        candidates = [-0.5, -0.4, -0.3, -0.2, -0.1]
        assert f1 < 1.0
        assert f1 == pytest.approx(max(f1_at(c) for c in candidates), abs=1e-12)
        assert f1 == pytest.approx(f1_at(lam), abs=1e-12)

    def test_returned_f1_is_self_consistent(self):
        matrix, pairs = separable_pairs_matrix(np.random.default_rng(16))
        lam, f1 = tune_lambda(matrix, pairs, matrix.d, 3, (0.0, 0.95, 0.05))
        # re-evaluating the returned threshold alone must reproduce its F1 exactly
        lam_again, f1_again = tune_lambda(matrix, pairs, matrix.d, 3, (lam, lam, 1.0))
        assert (lam_again, f1_again) == (lam, f1)
        # and an independently coded F1 agrees to numerical precision
        scores = pair_prefix_cosines(matrix, pairs, matrix.d)
        positives = np.array([p.label == VS for p in pairs])
        pred = scores > lam
        tp = int(np.sum(pred & positives))
        fp = int(np.sum(pred & ~positives))
        fn = int(np.sum(~pred & positives))
        recomputed = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        assert recomputed == pytest.approx(f1, abs=1e-12)

    def test_empty_grid(self):
        matrix, pairs = separable_pairs_matrix(np.random.default_rng(17))
        with pytest.raises(EmptyGrid):
            tune_lambda(matrix, pairs, matrix.d, 3, (0.5, 0.4, 0.05))

    def test_no_positives_raises_single_class(self):
        matrix, pairs = separable_pairs_matrix(np.random.default_rng(18))
        only_neg = [p for p in pairs if p.label == VD]
        with pytest.raises(SingleClass):
            tune_lambda(matrix, only_neg, matrix.d, 3, (0.0, 1.0, 0.1))


class TestPropertyBased:
    """Spec invariants checked over hypothesis-generated inputs."""

    @given(labels=st.lists(st.integers(min_value=0, max_value=5), min_size=1, max_size=20))
    def test_prf_of_partition_with_itself_is_perfect(self, labels):
        partition = {}
        for doc, lab in enumerate(labels):
            partition.setdefault(lab, set()).add(f"doc{doc}")
        clusters = list(partition.values())
        assert pairwise_prf(clusters, clusters) == (1.0, 1.0, 1.0)

    # score and coefficient grids are coarse enough that affine maps stay
    # strictly order-preserving in float64 (ties stay ties, gaps stay gaps)
    grid_floats = st.integers(min_value=-50_000_000, max_value=50_000_000).map(
        lambda n: n / 1e6
    )

    @given(
        scores=st.lists(grid_floats, min_size=2, max_size=30),
        data=st.data(),
    )
    def test_auroc_monotone_transform_invariance(self, scores, data):
        labels = data.draw(
            st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores))
        )
        if 0 not in labels or 1 not in labels:
            labels = labels[:-2] + [0, 1]
        base = auroc(scores, labels)
        shifted = auroc([3.0 * s + 7.0 for s in scores], labels)
        assert shifted == base

    @given(
        xs=st.lists(grid_floats, min_size=2, max_size=30),
        a=st.integers(min_value=1, max_value=500).map(lambda n: n / 10),
        b=grid_floats,
    )
    def test_pearson_affine_property(self, xs, a, b):
        if max(xs) == min(xs):
            xs = xs[:-1] + [max(xs) + 1.0]
        assert pearson(xs, [a * x + b for x in xs]) == pytest.approx(1.0, abs=1e-9)
        assert pearson(xs, [-a * x + b for x in xs]) == pytest.approx(-1.0, abs=1e-9)
