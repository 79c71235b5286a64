"""Oracle abstraction, noise models, constants, and call accounting."""

import numpy as np
import pytest

from zoconex import (
    NoiseModel,
    OracleLedger,
    ProblemSpec,
    SmoothnessConstants,
    StochasticOracle,
    aggregate_constants,
    draw_noisy_pair,
    ledger_expected_calls,
)
from zoconex.geometry import Box
from zoconex.streams import StreamSet

# small enough that its square underflows to exactly 0.0, standing in for
# the boundary case of a vanishing constant while staying strictly positive
TINY = 1e-300


def constants(L, M, sigma=None, sigma_f=None):
    k = len(L)
    return SmoothnessConstants(
        L=np.asarray(L, dtype=float),
        M=np.asarray(M, dtype=float),
        sigma=np.asarray(sigma if sigma is not None else [TINY] * k, dtype=float),
        sigma_f=np.asarray(sigma_f if sigma_f is not None else [TINY] * k, dtype=float),
    )


class TestAggregateConstants:
    def test_three_four_five(self):
        c = constants(L=[1, 1, 1], M=[5, 3, 4])
        m_f, _ = aggregate_constants(c)
        assert m_f == 5.0  # objective entry M_0 = 5 is excluded

    def test_single_nonzero_entry(self):
        c = constants(L=[1, 2, TINY, TINY], M=[1, 1, 1, 1])
        _, l_f = aggregate_constants(c)
        assert l_f == 2.0

    def test_sqrt_of_count(self):
        c = constants(L=[1] * 5, M=[1] * 5)
        m_f, l_f = aggregate_constants(c)
        assert m_f == 2.0 and l_f == 2.0

    def test_unconstrained_returns_zero(self):
        c = constants(L=[3.0], M=[4.0])
        assert aggregate_constants(c) == (0.0, 0.0)


class TestNoiseModel:
    def test_student_t_needs_finite_variance(self):
        with pytest.raises(ValueError):
            NoiseModel("student_t", dof=2.0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            NoiseModel("laplace")

    def test_common_pair_shares_the_draw(self):
        model = NoiseModel("gaussian", sigma=0.5, common=True)
        rng = np.random.default_rng(0)
        a, b = model.draw_pair(rng)
        assert a == b

    def test_independent_pair_differs(self):
        model = NoiseModel("gaussian", sigma=0.5)
        rng = np.random.default_rng(0)
        a, b = model.draw_pair(rng)
        assert a != b

    def test_zero_mean_draws(self):
        rng = np.random.default_rng(7)
        for model in (
            NoiseModel("gaussian", sigma=1.0),
            NoiseModel("student_t", dof=5.0, scale=1.0),
        ):
            draws = np.array([model.draw(rng) for _ in range(20000)])
            assert abs(draws.mean()) < 5 * draws.std() / np.sqrt(draws.size)

    def test_value_std_bound_strictly_positive(self):
        assert NoiseModel("none").value_std_bound() > 0
        assert NoiseModel("gaussian", sigma=0.1).value_std_bound() == 0.1
        st = NoiseModel("student_t", dof=5.0, scale=2.0)
        assert np.isclose(st.value_std_bound(), 2.0 * np.sqrt(5.0 / 3.0))


class TestDrawNoisyPair:
    def test_noiseless_linear(self):
        oracle = StochasticOracle(lambda x: x[0], NoiseModel("none"))
        rng = np.random.default_rng(0)
        shifted, base = draw_noisy_pair(oracle, np.array([0.0]), np.array([1.0]), rng)
        assert (shifted, base) == (1.0, 0.0)

    def test_common_noise_cancels_in_differences(self):
        f = lambda x: 3.0 * x[0] + 1.0
        oracle = StochasticOracle(f, NoiseModel("gaussian", sigma=0.1, common=True))
        rng = np.random.default_rng(5)
        x, xs = np.array([0.25]), np.array([0.75])
        shifted, base = draw_noisy_pair(oracle, x, xs, rng)
        assert shifted - base == f(xs) - f(x)

    def test_dimension_mismatch(self):
        oracle = StochasticOracle(lambda x: 0.0, NoiseModel("none"))
        with pytest.raises(ValueError):
            draw_noisy_pair(oracle, np.zeros(2), np.zeros(3), np.random.default_rng(0))

    def test_monte_carlo_unbiasedness(self):
        # sample mean of the first returned value tracks f(x_shifted)
        f = lambda x: x[0] ** 2 - x[0]
        oracle = StochasticOracle(f, NoiseModel("gaussian", sigma=0.3))
        rng = np.random.default_rng(11)
        x, xs = np.array([0.2]), np.array([0.9])
        vals = np.array([draw_noisy_pair(oracle, x, xs, rng)[0] for _ in range(10**4)])
        stderr = vals.std(ddof=1) / np.sqrt(vals.size)
        assert abs(vals.mean() - f(xs)) <= 3 * stderr

    def test_ledger_charged_two_per_pair(self):
        oracle = StochasticOracle(lambda x: 0.0, NoiseModel("none"))
        ledger = OracleLedger(1)
        oracle.attach(ledger, 0)
        rng = np.random.default_rng(0)
        for _ in range(3):
            draw_noisy_pair(oracle, np.zeros(1), np.ones(1), rng)
        assert ledger.counts == [6] and ledger.total == 6

    def test_no_noise_is_deterministic(self):
        oracle = StochasticOracle(lambda x: x[0] * 2, NoiseModel("none"))
        rng = np.random.default_rng(0)
        first = draw_noisy_pair(oracle, np.zeros(1), np.ones(1), rng)
        second = draw_noisy_pair(oracle, np.zeros(1), np.ones(1), rng)
        assert first == second

    def test_gaussian_mean_convergence_bound(self):
        # |mean - f(x)| <= 4 sigma / sqrt(N) at N = 1e5
        sigma = 0.5
        oracle = StochasticOracle(lambda x: 1.25, NoiseModel("gaussian", sigma=sigma))
        rng = np.random.default_rng(3)
        n_draws = 10**5
        draws = sigma * rng.standard_normal(n_draws) + 1.25
        assert abs(draws.mean() - 1.25) <= 4 * sigma / np.sqrt(n_draws)
        del oracle


class TestLedgerExpectedCalls:
    @pytest.mark.parametrize("m,T,expected", [(1, 10, 66), (0, 5, 12), (3, 1, 28)])
    def test_hand_counts(self, m, T, expected):
        assert ledger_expected_calls(m, T) == expected

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            ledger_expected_calls(-1, 10)
        with pytest.raises(ValueError):
            ledger_expected_calls(2, 0)


class TestLedger:
    def test_counters_never_decrease(self):
        ledger = OracleLedger(2)
        ledger.charge(0, 4)
        with pytest.raises(ValueError):
            ledger.charge(0, -1)
        assert ledger.total == sum(ledger.counts) == 4


class TestProblemSpec:
    def _problem(self, m=1):
        oracles = [
            StochasticOracle(lambda x: float(np.sum(x)), NoiseModel("none"))
            for _ in range(m + 1)
        ]
        return ProblemSpec(
            dimension=2,
            constraint_count=m,
            oracles=oracles,
            domain=Box([-1, -1], [1, 1]),
            constants=constants(L=[1.0] * (m + 1), M=[1.0] * (m + 1)),
        )

    def test_oracle_count_enforced(self):
        with pytest.raises(ValueError):
            ProblemSpec(
                dimension=2,
                constraint_count=2,
                oracles=[StochasticOracle(lambda x: 0.0, NoiseModel("none"))],
                domain=Box([-1, -1], [1, 1]),
                constants=constants(L=[1, 1, 1], M=[1, 1, 1]),
            )

    def test_constants_must_be_positive(self):
        with pytest.raises(ValueError):
            constants(L=[1.0, 0.0], M=[1.0, 1.0])

    def test_clone_gets_fresh_ledger(self):
        problem = self._problem()
        rng = np.random.default_rng(0)
        draw_noisy_pair(problem.oracles[0], np.zeros(2), np.ones(2), rng)
        clone = problem.clone()
        assert problem.ledger.total == 2
        assert clone.ledger.total == 0
        draw_noisy_pair(clone.oracles[1], np.zeros(2), np.ones(2), rng)
        assert clone.ledger.total == 2 and problem.ledger.total == 2


class TestStreams:
    def test_streams_replay_independently(self):
        a = StreamSet(123)
        b = StreamSet(123)
        # consume xi(0) heavily on one set; u(1) must be unaffected
        a.xi(0).standard_normal(1000)
        assert np.array_equal(a.u(1).standard_normal(5), b.u(1).standard_normal(5))

    def test_distinct_kinds_are_independent_streams(self):
        s = StreamSet(9)
        assert not np.array_equal(
            s.xi(0).standard_normal(8), StreamSet(9).xi_bar(0).standard_normal(8)
        )

    def test_child_sets_disjoint(self):
        s = StreamSet(4)
        c1 = s.child(1)
        c2 = s.child(2)
        assert not np.array_equal(
            c1.xi(0).standard_normal(8), c2.xi(0).standard_normal(8)
        )

    def test_cached_stream_continues(self):
        s = StreamSet(4)
        first = s.xi(0).standard_normal(4)
        second = s.xi(0).standard_normal(4)
        fresh = StreamSet(4).xi(0).standard_normal(8)
        assert np.array_equal(np.concatenate([first, second]), fresh)
