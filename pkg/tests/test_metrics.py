import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omasgan.errors import ContractError
from omasgan.metrics import (
    auprc,
    auroc,
    evaluate_scores,
    mode_coverage,
    score_histogram,
    threshold_metrics,
)
from omasgan.data import mixture_centers


def pairwise_auroc(scores, labels):
    """O(n^2) oracle: fraction of (anomaly, normal) pairs ordered correctly."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    wins = 0.0
    for a in s[y]:
        for b in s[~y]:
            wins += 1.0 if a > b else 0.5 if a == b else 0.0
    return wins / (y.sum() * (~y).sum())


def sweep_auprc(scores, labels):
    """Threshold sweep oracle, one threshold per distinct score, high to low."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    total, prev_recall = 0.0, 0.0
    for t in sorted(set(s.tolist()), reverse=True):
        pred = s >= t
        tp = int(np.sum(pred & y))
        precision = tp / int(pred.sum())
        recall = tp / int(y.sum())
        total += (recall - prev_recall) * precision
        prev_recall = recall
    return total


class TestAuroc:
    def test_examples(self):
        assert auroc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
        assert auroc([0.9, 0.3, 0.4, 0.1], [1, 1, 0, 0]) == 0.75
        assert auroc([0.5] * 6, [1, 0, 1, 0, 0, 0]) == 0.5

    def test_single_class(self):
        with pytest.raises(ContractError):
            auroc([0.1, 0.2], [1, 1])

    @settings(max_examples=200, deadline=None)
    @given(data=st.data())
    def test_matches_pairwise_oracle(self, data):
        n = data.draw(st.integers(2, 120))
        tie_heavy = data.draw(st.booleans())
        elems = st.integers(0, 5).map(float) if tie_heavy else st.floats(-1e3, 1e3)
        scores = data.draw(st.lists(elems, min_size=n, max_size=n))
        labels = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
        if all(labels) or not any(labels):
            labels[0] = not labels[0]
        assert auroc(scores, labels) == pairwise_auroc(scores, labels)

    def test_monotone_invariance(self):
        rng = np.random.default_rng(0)
        s = rng.normal(size=300)
        y = rng.random(300) < 0.3
        assert auroc(s, y) == auroc(np.exp(3 * s) + 7, y)

    def test_negation_complements(self):
        rng = np.random.default_rng(1)
        s = rng.normal(size=200)
        y = rng.random(200) < 0.4
        assert auroc(s, y) + auroc(-s, y) == pytest.approx(1.0, abs=1e-15)


class TestAuprc:
    def test_perfect(self):
        assert auprc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_all_ties_is_prevalence(self):
        y = [1, 0, 0, 1, 0]
        assert auprc([0.3] * 5, y) == pytest.approx(sweep_auprc([0.3] * 5, y), abs=1e-15)
        assert auprc([0.3] * 5, y) == pytest.approx(0.4)

    def test_single_anomaly_last(self):
        s = np.arange(10, 0, -1.0)
        y = np.zeros(10, bool)
        y[-1] = True
        assert auprc(s, y) == pytest.approx(sweep_auprc(s, y), abs=1e-12)
        assert auprc(s, y) == pytest.approx(0.1)

    def test_no_anomalies(self):
        with pytest.raises(ContractError):
            auprc([0.1, 0.2], [0, 0])

    @settings(max_examples=100, deadline=None)
    @given(data=st.data())
    def test_matches_sweep_oracle(self, data):
        n = data.draw(st.integers(1, 80))
        scores = data.draw(st.lists(st.integers(0, 9).map(float), min_size=n, max_size=n))
        labels = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
        labels[0] = True
        assert abs(auprc(scores, labels) - sweep_auprc(scores, labels)) < 1e-12


class TestThreshold:
    def test_perfect(self):
        m = threshold_metrics([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0], 0.5)
        assert (m.f1, m.precision, m.recall, m.accuracy) == (1.0, 1.0, 1.0, 1.0)

    def test_everything_flagged(self):
        m = threshold_metrics([0.9, 0.8, 0.1, 0.2, 0.3], [1, 0, 0, 0, 0], -1.0)
        assert m.recall == 1.0 and m.accuracy == pytest.approx(0.2)

    def test_hand_confusion_matrix(self):
        # scores >= 0.5 flagged: idx 0,2,3 -> TP=2 (0,3), FP=1 (2); FN=1 (4); TN=2 (1,5)
        s = [0.7, 0.2, 0.5, 0.9, 0.4, 0.1]
        y = [1, 0, 0, 1, 1, 0]
        m = threshold_metrics(s, y, 0.5)
        assert m.precision == pytest.approx(2 / 3)
        assert m.recall == pytest.approx(2 / 3)
        assert m.f1 == pytest.approx(2 / 3)
        assert m.accuracy == pytest.approx(4 / 6)

    def test_undefined_precision_flag(self):
        m = threshold_metrics([0.1, 0.2], [1, 0], 5.0)
        assert m.precision == 0.0 and m.precision_undefined

    def test_non_finite_tau(self):
        with pytest.raises(ContractError):
            threshold_metrics([0.1], [1], float("nan"))


class TestHistogram:
    def test_edges_convention(self):
        h = score_histogram([0.0, 0.5, 1.0], None, 2, (0.0, 1.0))
        assert h.counts.tolist() == [1, 2]

    def test_counts_sum_and_classes(self):
        rng = np.random.default_rng(0)
        s = rng.random(100)
        y = rng.random(100) < 0.3
        h = score_histogram(s, y, 7, (0, 1))
        assert h.counts.sum() == 100
        assert h.anomaly.sum() == y.sum()

    def test_clipping(self):
        h = score_histogram([-1.0, 0.5, 3.0], None, 2, (0.0, 1.0))
        assert h.counts.tolist() == [1, 2] and h.clipped == 2

    def test_bad_range(self):
        with pytest.raises(ContractError):
            score_histogram([0.1], None, 2, (1.0, 1.0))
        with pytest.raises(ContractError):
            score_histogram([0.1], None, 0, (0.0, 1.0))


class TestModeCoverage:
    def test_exact_centres(self):
        c = mixture_centers(8, 5.0)
        assert mode_coverage(np.repeat(c, 10, axis=0), c, 0.2) == 8
        assert mode_coverage(np.repeat(c[:1], 80, axis=0), c, 0.2) == 1

    def test_matches_nearest_centre_tally(self):
        rng = np.random.default_rng(2)
        c = mixture_centers(8, 5.0)
        weights = rng.dirichlet(np.ones(8) * 0.3)
        lab = rng.choice(8, size=3000, p=weights)
        x = c[lab] + rng.normal(scale=0.4, size=(3000, 2))
        tally = np.zeros(8)
        for p in x:
            d = [np.hypot(*(p - ci)) for ci in c]
            k = int(np.argmin(d))
            if d[k] <= 0.6:
                tally[k] += 1
        assert mode_coverage(x, c, 0.2, 0.02) == int(np.sum(tally / 3000 >= 0.02))


def test_report_serialisation(tmp_path):
    rep = evaluate_scores([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0], 0.5, bins=4)
    assert rep.auroc == 1.0
    rep.write_csv(tmp_path / "m.csv")
    rep.write_json(tmp_path / "m.json")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "metric,value"
    data = json.loads((tmp_path / "m.json").read_text())
    assert data["auroc"] == 1.0 and sum(data["histogram"]["normal"]) == 2
