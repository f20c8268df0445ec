import numpy as np
import pytest

from perceptimetric import bootstrap, pairwise_significance
from perceptimetric.errors import DegenerateDataError

from test_probit import make_response


def mean_accuracy(responses):
    return float(np.mean([1.0 if r.correct else 0.0 for r in responses]))


def agreement_metric(responses, deltas):
    # mean sign agreement between a model's deltas and response correctness
    return float(np.mean([
        deltas[r.triplet_id] * (1.0 if r.correct else -1.0) for r in responses
    ]))


def two_group_responses(rng, n_participants=6, n_trials=30):
    responses = []
    for pid in range(n_participants):
        for t in range(n_trials):
            responses.append(make_response(
                f"p{pid:02d}", f"t{t}", correct=bool(rng.uniform() < 0.7),
                trial=t + 1))
    return responses


class TestBootstrap:
    def test_single_participant_degenerate_interval(self):
        responses = [make_response("p0", f"t{i}", correct=(i % 3 != 0), trial=i + 1)
                     for i in range(12)]
        report = bootstrap(mean_accuracy, responses, n=50, seed=9)
        assert report.ci_low == report.ci_high == report.point_estimate
        assert report.n_missing == 0

    def test_same_seed_bit_identical(self):
        rng = np.random.default_rng(1)
        responses = two_group_responses(rng)
        a = bootstrap(mean_accuracy, responses, n=200, seed=77)
        b = bootstrap(mean_accuracy, responses, n=200, seed=77)
        assert np.array_equal(a.bootstrap_values, b.bootstrap_values)
        assert (a.ci_low, a.ci_high) == (b.ci_low, b.ci_high)

    def test_different_seed_differs(self):
        rng = np.random.default_rng(2)
        responses = two_group_responses(rng)
        a = bootstrap(mean_accuracy, responses, n=200, seed=77)
        b = bootstrap(mean_accuracy, responses, n=200, seed=78)
        assert not np.array_equal(a.bootstrap_values, b.bootstrap_values)

    def test_thread_count_invariance(self):
        rng = np.random.default_rng(3)
        responses = two_group_responses(rng)
        serial = bootstrap(mean_accuracy, responses, n=300, seed=5, threads=1)
        threaded = bootstrap(mean_accuracy, responses, n=300, seed=5, threads=4)
        assert np.array_equal(serial.bootstrap_values, threaded.bootstrap_values)

    def test_replicate_count_recorded(self):
        rng = np.random.default_rng(4)
        responses = two_group_responses(rng, n_participants=3)
        report = bootstrap(mean_accuracy, responses, n=123, seed=1)
        assert report.bootstrap_values.shape == (123,)
        assert report.seed == 1

    def test_degenerate_replicates_counted_missing(self):
        responses = [make_response("p0", "t0", correct=True),
                     make_response("p1", "t0", correct=False)]

        def fragile(rs):
            if len({r.participant_id for r in rs}) < 2:
                raise DegenerateDataError("one participant only")
            return mean_accuracy(rs)

        report = bootstrap(fragile, responses, n=400, seed=21)
        # resampling 2 participants collides about half the time
        assert 100 < report.n_missing < 300
        finite = report.bootstrap_values[np.isfinite(report.bootstrap_values)]
        assert finite.size == 400 - report.n_missing

    def test_point_estimate_on_original_data(self):
        rng = np.random.default_rng(6)
        responses = two_group_responses(rng)
        report = bootstrap(mean_accuracy, responses, n=10, seed=0)
        assert report.point_estimate == mean_accuracy(responses)

    def test_interval_covers_truth_smoke(self):
        master = np.random.default_rng(2024)
        covered = 0
        for _ in range(30):
            rng = np.random.default_rng(master.integers(0, 2**63))
            responses = []
            for pid in range(10):
                for t in range(60):
                    responses.append(make_response(
                        f"p{pid}", f"t{t}", correct=bool(rng.uniform() < 0.75),
                        trial=t + 1))
            report = bootstrap(mean_accuracy, responses, n=400,
                               seed=int(master.integers(0, 2**63)))
            if report.ci_low <= 0.75 <= report.ci_high:
                covered += 1
        assert covered >= 22  # weak smoke bound; the acceptance suite is strict

    def test_bad_replicate_count(self):
        with pytest.raises(ValueError):
            bootstrap(mean_accuracy, [make_response("p0", "t0")], n=0, seed=0)


class TestPairwiseSignificance:
    def test_identical_models_not_significant(self):
        rng = np.random.default_rng(8)
        responses = two_group_responses(rng)
        deltas = {f"t{t}": float(rng.normal()) for t in range(30)}
        result = pairwise_significance(agreement_metric, responses, deltas,
                                       dict(deltas), n=100, seed=3)
        assert result.difference == 0.0
        assert np.all(result.bootstrap_values == 0.0)
        assert not result.significant

    def test_opposed_models_significant(self):
        responses = []
        for pid in range(20):
            for t in range(40):
                responses.append(make_response(
                    f"p{pid:02d}", f"t{t}", correct=(t < 20), trial=t + 1))
        deltas_a = {f"t{t}": (1.0 if t < 20 else -1.0) for t in range(40)}
        deltas_b = {t: -v for t, v in deltas_a.items()}
        result = pairwise_significance(agreement_metric, responses, deltas_a,
                                       deltas_b, n=200, seed=13)
        assert result.significant
        assert result.ci_low > 0

    def test_swap_negates_and_preserves_flag(self):
        rng = np.random.default_rng(10)
        responses = two_group_responses(rng, n_participants=8)
        deltas_a = {f"t{t}": float(rng.normal(loc=0.2)) for t in range(30)}
        deltas_b = {f"t{t}": float(rng.normal(loc=-0.1)) for t in range(30)}
        ab = pairwise_significance(agreement_metric, responses, deltas_a, deltas_b,
                                   n=300, seed=17)
        ba = pairwise_significance(agreement_metric, responses, deltas_b, deltas_a,
                                   n=300, seed=17)
        assert ba.difference == -ab.difference
        assert np.array_equal(ba.bootstrap_values, -ab.bootstrap_values)
        assert ab.significant == ba.significant
        assert ba.ci_low == pytest.approx(-ab.ci_high, abs=1e-12)

    def test_thread_count_invariance(self):
        rng = np.random.default_rng(12)
        responses = two_group_responses(rng, n_participants=5)
        deltas_a = {f"t{t}": float(rng.normal()) for t in range(30)}
        deltas_b = {f"t{t}": float(rng.normal()) for t in range(30)}
        serial = pairwise_significance(agreement_metric, responses, deltas_a,
                                       deltas_b, n=150, seed=19, threads=1)
        threaded = pairwise_significance(agreement_metric, responses, deltas_a,
                                         deltas_b, n=150, seed=19, threads=3)
        assert np.array_equal(serial.bootstrap_values, threaded.bootstrap_values)
