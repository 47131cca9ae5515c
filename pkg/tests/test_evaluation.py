import numpy as np
import pytest

from oracles import brute_force_eer
from spoofbench.errors import DataError, MissingSeedCoverageError, SingleClassError
from spoofbench.evaluation import (
    ScoreRecord,
    compute_eer,
    far_frr_at,
    pool_and_summarize,
    read_scores,
    write_scores,
)


def random_instance(rng, max_n=200, with_ties=True):
    n_bona = int(rng.integers(1, max_n // 2 + 1))
    n_spoof = int(rng.integers(1, max_n // 2 + 1))
    labels = np.concatenate([np.ones(n_bona, int), np.zeros(n_spoof, int)])
    if with_ties and rng.random() < 0.5:
        # quantized scores force plenty of ties, within and across classes
        scores = rng.integers(-3, 4, size=labels.size).astype(float)
    else:
        shift = float(rng.normal(0.0, 2.0))
        scores = rng.normal(0.0, 1.0, size=labels.size)
        scores[labels == 1] += shift
    return scores, labels


class TestComputeEer:
    def test_perfect_separation(self):
        eer, _ = compute_eer([2.0, 3.0, 0.0, 1.0], [1, 1, 0, 0])
        assert eer == 0.0

    def test_identical_distributions(self):
        eer, _ = compute_eer([0.0, 1.0, 0.0, 1.0], [1, 1, 0, 0])
        assert eer == 0.5

    def test_one_error_each_side(self):
        # crossing with one bonafide below and one spoof above the threshold
        scores = [0.8, 0.6, 0.4, 0.7, 0.3, 0.1]
        labels = [1, 1, 1, 0, 0, 0]
        eer, _ = compute_eer(scores, labels)
        assert eer == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_single_class_rejected(self):
        with pytest.raises(SingleClassError):
            compute_eer([1.0, 2.0], [1, 1])

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            compute_eer([np.nan, 1.0], [1, 0])

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(1234)
        for _ in range(300):
            scores, labels = random_instance(rng, max_n=60)
            eer, thr = compute_eer(scores, labels)
            oracle_eer, oracle_thr = brute_force_eer(scores, labels)
            assert abs(eer - oracle_eer) < 1e-12
            assert abs(thr - oracle_thr) < 1e-9

    def test_monotone_transform_invariance_exact(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            scores, labels = random_instance(rng, max_n=50)
            eer, _ = compute_eer(scores, labels)
            transformed = np.exp(0.5 * scores) + 3.0  # strictly increasing
            eer2, _ = compute_eer(transformed, labels)
            assert eer == eer2

    def test_label_swap_score_negate_symmetry_exact(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            scores, labels = random_instance(rng, max_n=50)
            eer, _ = compute_eer(scores, labels)
            eer2, _ = compute_eer(-scores, 1 - labels)
            assert eer == eer2

    def test_bounds(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            scores, labels = random_instance(rng, max_n=40)
            eer, _ = compute_eer(scores, labels)
            assert 0.0 <= eer <= 1.0

    def test_batch_permutation_irrelevant(self):
        rng = np.random.default_rng(10)
        scores, labels = random_instance(rng)
        perm = rng.permutation(len(scores))
        assert compute_eer(scores, labels)[0] == compute_eer(scores[perm], labels[perm])[0]


def test_far_frr_at_threshold():
    scores = np.array([0.9, 0.8, 0.2, 0.1])
    labels = np.array([1, 1, 0, 0])
    far, frr = far_frr_at(scores, labels, 0.5)
    assert far == 0.0 and frr == 0.0
    far, frr = far_frr_at(scores, labels, 0.85)
    assert far == 0.0 and frr == 0.5


def _records(system, dataset, seed, scores, labels, **extra):
    return [
        ScoreRecord(
            utt_id=f"{dataset}_{i}",
            score=float(s),
            label="bonafide" if l == 1 else "spoof",
            dataset_name=dataset,
            seed=seed,
            system_id=system,
            **extra,
        )
        for i, (s, l) in enumerate(zip(scores, labels))
    ]


class TestPoolAndSummarize:
    def test_single_dataset_single_seed(self):
        recs = _records("sys", "dsA", 2, [2.0, 3.0, 0.0, 1.0], [1, 1, 0, 0])
        report = pool_and_summarize(recs)["sys"]
        assert report.per_dataset["dsA"]["mean"] == 0.0
        assert report.per_dataset["dsA"]["std"] == 0.0
        assert report.per_dataset["dsA"]["n_seeds"] == 1
        assert report.macro_avg_eer == 0.0

    def test_macro_average_is_mean_of_dataset_means(self):
        # dsA: EER 0, dsB: identical distributions -> 0.5
        recs = _records("sys", "dsA", 2, [2.0, 3.0, 0.0, 1.0], [1, 1, 0, 0])
        recs += _records("sys", "dsB", 2, [0.0, 1.0, 0.0, 1.0], [1, 1, 0, 0])
        report = pool_and_summarize(recs)["sys"]
        assert report.macro_avg_eer == pytest.approx(0.25)

    def test_seed_std_unbiased(self):
        recs = _records("sys", "dsA", 2, [2.0, 3.0, 0.0, 1.0], [1, 1, 0, 0])
        recs += _records("sys", "dsA", 42, [0.0, 1.0, 0.0, 1.0], [1, 1, 0, 0])
        summary = pool_and_summarize(recs)["sys"].per_dataset["dsA"]
        assert summary["mean"] == pytest.approx(0.25)
        assert summary["std"] == pytest.approx(np.std([0.0, 0.5], ddof=1))
        assert summary["n_seeds"] == 2

    def test_pooled_differs_from_mean_of_eers(self):
        # constructed counterexample: each set alone is perfectly separated,
        # but their score ranges interleave once concatenated
        a = _records("sys", "dsA", 2, [2.0, 3.0, 0.0, 1.0], [1, 1, 0, 0])
        b = _records("sys", "dsB", 2, [6.0, 7.0, 4.0, 5.0], [1, 1, 0, 0])
        report = pool_and_summarize(a + b)["sys"]
        mean_of_eers = np.mean([
            report.per_dataset["dsA"]["mean"], report.per_dataset["dsB"]["mean"],
        ])
        pooled = report.pooled["all"]["mean"]
        assert mean_of_eers == 0.0
        scores = [r.score for r in a + b]
        labels = [1 if r.label == "bonafide" else 0 for r in a + b]
        assert pooled == compute_eer(scores, labels)[0]
        assert pooled > 0.0

    def test_missing_seed_coverage(self):
        recs = _records("sys", "dsA", 2, [2.0, 3.0, 0.0, 1.0], [1, 1, 0, 0])
        recs += _records("sys", "dsA", 42, [2.0, 3.0, 0.0, 1.0], [1, 1, 0, 0])
        recs += _records("sys", "dsB", 2, [2.0, 3.0, 0.0, 1.0], [1, 1, 0, 0])
        with pytest.raises(MissingSeedCoverageError):
            pool_and_summarize(recs)


def test_score_file_round_trip_and_determinism(tmp_path):
    recs = _records("sys", "dsA", 2, [0.25, -1.5, 0.125], [1, 0, 1],
                    gender="F", language="en", pesq=3.25, nisqa_mos=None)
    path_a, path_b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_scores(path_a, recs)
    write_scores(path_b, recs)
    assert path_a.read_bytes() == path_b.read_bytes()
    back = read_scores(path_a)
    assert back == recs
