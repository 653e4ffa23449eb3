import numpy as np
import pytest

from qfan.backtest import default_levels
from qfan.loss import QuantileLevels, pinball
from qfan.metrics import (EvaluationReport, IntervalSet, QuantileFan, ace,
                          crossover_count, evaluate, interval_score,
                          intervals_from_fan, picp, quantile_score,
                          report_csv_header, report_csv_row)


def random_instance(rng, n=None, m=18):
    n = n if n is not None else int(rng.integers(2, 51))
    levels = default_levels() if m == 18 else QuantileLevels(
        tuple(np.sort(rng.uniform(0.01, 0.99, m))))
    fan = QuantileFan(values=rng.normal(size=(n, m)), levels=levels)
    y = rng.normal(size=n)
    return y, fan


# --- scalar-loop oracles -----------------------------------------------------

def oracle_qs(y, fan):
    total = 0.0
    taus = fan.levels.as_array()
    for t in range(len(y)):
        for j in range(len(taus)):
            u = y[t] - fan.values[t, j]
            total += taus[j] * u if u >= 0 else (taus[j] - 1.0) * u
    return total / (len(y) * len(taus))


def oracle_picp(y, iv):
    out = []
    for i in range(len(iv.betas)):
        hits = 0
        for t in range(len(y)):
            if iv.lower[t, i] <= y[t] <= iv.upper[t, i]:
                hits += 1
        out.append(hits / len(y))
    return np.array(out)


def oracle_ace(p, betas):
    return sum(abs(100.0 * p[i] - 100.0 * (1 - betas[i])) for i in range(len(betas)))


def oracle_is(y, iv):
    total = 0.0
    n, k = iv.lower.shape
    for t in range(n):
        for i in range(k):
            l, u, b = iv.lower[t, i], iv.upper[t, i], iv.betas[i]
            term = u - l
            if y[t] < l:
                term += (2.0 / b) * (l - y[t])
            if y[t] > u:
                term += (2.0 / b) * (y[t] - u)
            total += term
    return 2.0 * total / (n * 2 * k)


def oracle_crossovers(fan):
    count = 0
    for t in range(fan.values.shape[0]):
        for j in range(fan.values.shape[1] - 1):
            if fan.values[t, j] > fan.values[t, j + 1]:
                count += 1
    return count


class TestQuantileScore:
    def test_perfect_fan_is_zero(self):
        levels = QuantileLevels((0.25, 0.75))
        y = np.array([0.1, 0.9])
        fan = QuantileFan(values=np.tile(y[:, None], (1, 2)), levels=levels)
        assert quantile_score(y, fan) == 0.0

    def test_single_cell(self):
        fan = QuantileFan(values=np.array([[0.4]]), levels=QuantileLevels((0.1,)))
        assert quantile_score(np.array([0.5]), fan) == pytest.approx(0.01, abs=1e-15)

    def test_raw_sum_flag(self):
        rng = np.random.default_rng(0)
        y, fan = random_instance(rng, n=10)
        assert quantile_score(y, fan, average=False) == pytest.approx(
            quantile_score(y, fan) * y.size * len(fan.levels), rel=1e-12)

    def test_length_mismatch(self):
        fan = QuantileFan(values=np.zeros((2, 1)), levels=QuantileLevels((0.5,)))
        with pytest.raises(ValueError):
            quantile_score(np.zeros(3), fan)


class TestIntervalsFromFan:
    def test_default_level_pairing(self):
        levels = default_levels()
        fan = QuantileFan(values=np.tile(levels.as_array(), (3, 1)), levels=levels)
        iv = intervals_from_fan(fan)
        np.testing.assert_allclose(iv.betas, np.arange(9, 0, -1) / 10.0, atol=1e-12)
        # innermost pair is the 10% interval (0.45, 0.55)
        assert iv.lower[0, 0] == pytest.approx(0.45)
        assert iv.upper[0, 0] == pytest.approx(0.55)
        # outermost pair is the 90% interval (0.05, 0.95)
        assert iv.lower[0, -1] == pytest.approx(0.05)
        assert iv.upper[0, -1] == pytest.approx(0.95)

    def test_rejects_asymmetric(self):
        fan = QuantileFan(values=np.zeros((1, 2)), levels=QuantileLevels((0.2, 0.7)))
        with pytest.raises(ValueError, match="symmetric"):
            intervals_from_fan(fan)

    def test_rejects_odd_count(self):
        fan = QuantileFan(values=np.zeros((1, 3)),
                          levels=QuantileLevels((0.25, 0.5, 0.75)))
        with pytest.raises(ValueError, match="even"):
            intervals_from_fan(fan)


class TestPicp:
    def test_all_inside(self):
        iv = IntervalSet(lower=np.zeros((4, 1)), upper=np.ones((4, 1)),
                         betas=np.array([0.5]))
        np.testing.assert_array_equal(picp(np.full(4, 0.5), iv), [1.0])

    def test_three_of_four(self):
        iv = IntervalSet(lower=np.zeros((4, 1)), upper=np.ones((4, 1)),
                         betas=np.array([0.5]))
        np.testing.assert_array_equal(picp(np.array([0.5, 0.2, 1.5, 1.0]), iv), [0.75])

    def test_inclusive_bounds(self):
        iv = IntervalSet(lower=np.zeros((2, 1)), upper=np.ones((2, 1)),
                         betas=np.array([0.5]))
        np.testing.assert_array_equal(picp(np.array([0.0, 1.0]), iv), [1.0])

    def test_widening_never_decreases(self):
        rng = np.random.default_rng(1)
        y, fan = random_instance(rng, n=30)
        iv = intervals_from_fan(fan)
        wide = IntervalSet(lower=iv.lower - 0.1, upper=iv.upper + 0.1, betas=iv.betas)
        assert np.all(picp(y, wide) >= picp(y, iv))


class TestAce:
    def test_exact_coverage_is_zero(self):
        betas = np.array([0.9, 0.5, 0.1])
        assert ace(1.0 - betas, betas) == 0.0

    def test_single_level(self):
        assert ace(np.array([0.85]), np.array([0.10])) == pytest.approx(5.0)

    def test_alternating_errors_sum(self):
        betas = np.arange(9, 0, -1) / 10.0
        p = 1.0 - betas + 0.01 * np.where(np.arange(9) % 2 == 0, 1.0, -1.0)
        assert ace(p, betas) == pytest.approx(9.0, abs=1e-9)


class TestIntervalScore:
    def test_width_only(self):
        iv = IntervalSet(lower=np.array([[0.2]]), upper=np.array([[0.8]]),
                         betas=np.array([0.1]))
        assert interval_score(np.array([0.5]), iv) == pytest.approx(0.6, abs=1e-15)

    def test_miss_penalty(self):
        iv = IntervalSet(lower=np.array([[0.2]]), upper=np.array([[0.8]]),
                         betas=np.array([0.1]))
        assert interval_score(np.array([0.9]), iv) == pytest.approx(2.6, abs=1e-12)

    def test_negate_flag(self):
        iv = IntervalSet(lower=np.array([[0.2]]), upper=np.array([[0.8]]),
                         betas=np.array([0.1]))
        y = np.array([0.5])
        assert interval_score(y, iv, negate_for_report=True) == -interval_score(y, iv)

    def test_narrowing_covering_interval_improves(self):
        y = np.array([0.5])
        wide = IntervalSet(lower=np.array([[0.1]]), upper=np.array([[0.9]]),
                           betas=np.array([0.2]))
        narrow = IntervalSet(lower=np.array([[0.3]]), upper=np.array([[0.7]]),
                             betas=np.array([0.2]))
        assert interval_score(y, narrow) < interval_score(y, wide)

    def test_exiting_interval_increases(self):
        iv = IntervalSet(lower=np.array([[0.2]]), upper=np.array([[0.8]]),
                         betas=np.array([0.2]))
        assert interval_score(np.array([0.9]), iv) > interval_score(np.array([0.7]), iv)


class TestCrossoverCount:
    def test_monotone_fan(self):
        levels = QuantileLevels((0.25, 0.5, 0.75))
        fan = QuantileFan(values=np.array([[0.1, 0.2, 0.3]]), levels=levels)
        assert crossover_count(fan) == 0

    def test_single_inversion(self):
        levels = QuantileLevels((0.25, 0.5, 0.75))
        fan = QuantileFan(values=np.array([[0.3, 0.2, 0.4]]), levels=levels)
        assert crossover_count(fan) == 1

    def test_ties_do_not_count(self):
        levels = QuantileLevels((0.25, 0.75))
        fan = QuantileFan(values=np.array([[0.3, 0.3]]), levels=levels)
        assert crossover_count(fan) == 0


class TestOracleEquivalence:
    def test_all_metrics_match_loops(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            y, fan = random_instance(rng)
            iv = intervals_from_fan(fan)
            assert quantile_score(y, fan) == pytest.approx(oracle_qs(y, fan), abs=1e-12)
            np.testing.assert_allclose(picp(y, iv), oracle_picp(y, iv), atol=1e-12)
            assert ace(picp(y, iv), iv.betas) == pytest.approx(
                oracle_ace(oracle_picp(y, iv), iv.betas), abs=1e-12)
            assert interval_score(y, iv) == pytest.approx(oracle_is(y, iv), abs=1e-12)
            assert crossover_count(fan) == oracle_crossovers(fan)


class TestEvaluateAndCsv:
    def test_evaluate_report_fields(self):
        rng = np.random.default_rng(5)
        y, fan = random_instance(rng, n=20)
        report = evaluate(y, fan)
        assert report.n_obs == 20
        assert report.picp.shape == (9,)
        assert 0 <= report.crossovers <= 20 * 17
        assert report.qs >= 0.0

    def test_csv_row_layout(self):
        rng = np.random.default_rng(6)
        y, fan = random_instance(rng, n=10)
        report = evaluate(y, fan)
        header = report_csv_header(report.betas)
        row = report_csv_row(report, "uniform", "1", "2013-06")
        assert header.split(",")[:7] == ["model", "zone", "month", "qs", "ace",
                                         "interval_score", "crossovers"]
        assert header.split(",")[7] == "picp_10"
        assert header.split(",")[-1] == "picp_90"
        cells = row.split(",")
        assert cells[:3] == ["uniform", "1", "2013-06"]
        assert len(cells) == len(header.split(","))
        assert float(cells[3]) == pytest.approx(report.qs, rel=0, abs=0)

    def test_report_rejects_bad_picp(self):
        with pytest.raises(ValueError):
            EvaluationReport(qs=0.1, picp=np.array([1.2]), ace=0.0,
                             interval_score=0.0, crossovers=0, n_obs=1)
