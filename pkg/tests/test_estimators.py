import numpy as np
import pytest
from hypothesis import given, strategies as st

from latentroute.errors import UnknownTokenizerError
from latentroute.estimators import (
    LatencyProfile,
    ModelPricing,
    TokenCounts,
    VerbosityTable,
    calibrate_latency,
    calibrate_verbosity,
    complexity_score,
    count_input_tokens,
    estimate_cost,
    estimate_latency,
    estimate_output_length,
    get_tokenizer,
)
from latentroute.irt import ItemParams


class TestCost:
    def test_free_model_costs_nothing(self):
        assert estimate_cost(ModelPricing(0.0, 0.0), TokenCounts(100, 50)) == 0.0

    def test_hand_computed_tariff(self):
        cost = estimate_cost(ModelPricing(2e-6, 6e-6), TokenCounts(100, 50))
        assert cost == pytest.approx(5e-4, abs=1e-15)

    def test_zero_tokens_cost_nothing(self):
        assert estimate_cost(ModelPricing(2e-6, 6e-6), TokenCounts(0, 0)) == 0.0

    @given(
        st.floats(0, 1e-3), st.floats(0, 1e-3),
        st.integers(0, 10_000), st.integers(0, 10_000),
        st.integers(0, 10_000), st.integers(0, 10_000),
    )
    def test_linearity_in_tokens(self, pin, pout, a_in, a_out, b_in, b_out):
        pricing = ModelPricing(pin, pout)
        combined = estimate_cost(pricing, TokenCounts(a_in + b_in, a_out + b_out))
        split = estimate_cost(pricing, TokenCounts(a_in, a_out)) + estimate_cost(
            pricing, TokenCounts(b_in, b_out)
        )
        assert combined == pytest.approx(split, rel=1e-12, abs=1e-18)

    def test_negative_price_rejected(self):
        with pytest.raises(ValueError):
            ModelPricing(-1e-6, 0.0)


class TestTokenizers:
    def test_empty_string_counts_zero(self):
        assert count_input_tokens(get_tokenizer("whitespace"), "") == 0
        assert count_input_tokens(get_tokenizer("chars4"), "") == 0

    def test_whitespace_reference(self):
        assert count_input_tokens(get_tokenizer("whitespace"), "a b c") == 3

    def test_chars4_ceiling(self):
        # 13 characters -> ceil(13 / 4) = 4
        assert count_input_tokens(get_tokenizer("chars4"), "hello, world!") == 4

    def test_unknown_tokenizer_id(self):
        with pytest.raises(UnknownTokenizerError):
            get_tokenizer("nope")


class TestComplexityScore:
    def test_zero_alpha(self):
        assert complexity_score(ItemParams("i", np.zeros(3), np.array([1.0, 2, 3]))) == 0.0

    def test_hand_computed_inner_product(self):
        item = ItemParams("i", np.array([1.0, 2.0]), np.array([3.0, -1.0]))
        assert complexity_score(item) == pytest.approx(1.0)

    def test_zero_difficulty(self):
        assert complexity_score(ItemParams("i", np.array([1.0, 2.0]), np.zeros(2))) == 0.0


class TestVerbosity:
    def test_single_bin_equals_global_mean(self):
        records = [("a", 1.0, 10.0), ("b", 2.0, 30.0), ("c", 3.0, 50.0)]
        table = calibrate_verbosity(records, K=1)
        assert table.mean_lengths == [pytest.approx(30.0)]
        assert table.global_mean == pytest.approx(30.0)

    def test_two_bin_median_split(self):
        records = [("a", 1.0, 10.0), ("b", 2.0, 10.0), ("c", 3.0, 100.0), ("d", 4.0, 100.0)]
        table = calibrate_verbosity(records, K=2)
        assert table.mean_lengths == [pytest.approx(10.0), pytest.approx(100.0)]
        assert table.bin_edges[1] == pytest.approx(2.5)

    def test_constant_lengths_everywhere(self):
        records = [(f"i{k}", float(k), 42.0) for k in range(10)]
        table = calibrate_verbosity(records, K=3)
        assert all(m == pytest.approx(42.0) for m in table.mean_lengths)

    def test_equal_frequency_populations(self, rng):
        scores = rng.normal(size=23)
        records = [(f"i{k}", float(s), float(rng.uniform(10, 100))) for k, s in enumerate(scores)]
        K = 5
        table = calibrate_verbosity(records, K=K)
        counts = np.zeros(K, dtype=int)
        inner = np.asarray(table.bin_edges[1:-1])
        for _, s, _ in records:
            counts[int(np.searchsorted(inner, s, side="right"))] += 1
        assert counts.max() - counts.min() <= 1

    def test_too_few_records_names_minimum(self):
        with pytest.raises(ValueError, match="4"):
            calibrate_verbosity([("a", 1.0, 5.0), ("b", 2.0, 6.0)], K=4)

    def test_needs_two_distinct_scores(self):
        with pytest.raises(ValueError, match="distinct"):
            calibrate_verbosity([("a", 1.0, 5.0), ("b", 1.0, 6.0)], K=1)


class TestOutputLengthLookup:
    @pytest.fixture()
    def two_bin_table(self):
        return calibrate_verbosity(
            [("a", 1.0, 10.0), ("b", 2.0, 10.0), ("c", 3.0, 100.0), ("d", 4.0, 100.0)], K=2
        )

    def test_lookup_inside_second_bin(self, two_bin_table):
        assert estimate_output_length(two_bin_table, 3.3) == pytest.approx(100.0)

    def test_score_below_all_edges_clamps_to_first_bin(self, two_bin_table):
        assert estimate_output_length(two_bin_table, -99.0) == pytest.approx(10.0)

    def test_score_above_all_edges_clamps_to_last_bin(self, two_bin_table):
        assert estimate_output_length(two_bin_table, 99.0) == pytest.approx(100.0)

    def test_single_bin_table_always_global_mean(self):
        table = calibrate_verbosity([("a", 1.0, 10.0), ("b", 2.0, 30.0)], K=1)
        for s in (-5.0, 0.0, 1.5, 7.0):
            assert estimate_output_length(table, s) == pytest.approx(20.0)

    def test_monotone_when_bin_means_monotone(self, rng):
        # true length increasing in score -> lookup non-decreasing in score
        scores = np.sort(rng.uniform(-3, 3, size=60))
        records = [(f"i{k}", float(s), float(200 + 40 * s)) for k, s in enumerate(scores)]
        table = calibrate_verbosity(records, K=6)
        lookups = [estimate_output_length(table, s) for s in np.linspace(-4, 4, 100)]
        assert all(b >= a for a, b in zip(lookups, lookups[1:]))

    def test_round_trip_json(self, two_bin_table):
        back = VerbosityTable.from_json(two_bin_table.to_json())
        assert back.bin_edges == pytest.approx(two_bin_table.bin_edges)
        assert back.mean_lengths == pytest.approx(two_bin_table.mean_lengths)


class TestLatency:
    def test_exact_linear_data(self):
        measurements = [(float(l), 0.5 + 0.01 * l) for l in (10, 50, 100, 400)]
        prof = calibrate_latency(measurements)
        assert prof.ttft == pytest.approx(0.5, abs=1e-9)
        assert prof.tpot == pytest.approx(0.01, abs=1e-12)
        assert prof.residual_rms == pytest.approx(0.0, abs=1e-9)

    def test_two_point_line(self):
        prof = calibrate_latency([(100.0, 1.5), (200.0, 2.5)])
        assert prof.ttft == pytest.approx(0.5, abs=1e-9)
        assert prof.tpot == pytest.approx(0.01, abs=1e-12)

    def test_negative_slope_clamps_and_flags(self):
        prof = calibrate_latency([(100.0, 2.0), (200.0, 1.0)])
        assert prof.tpot == 0.0
        assert prof.residual_rms > 0.0

    def test_degenerate_design_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            calibrate_latency([(100.0, 1.0), (100.0, 2.0)])

    def test_estimate_at_zero_length_is_ttft(self):
        assert estimate_latency(LatencyProfile(0.7, 0.02), 0.0) == pytest.approx(0.7)

    def test_hand_computed_estimate(self):
        assert estimate_latency(LatencyProfile(0.5, 0.01), 100.0) == pytest.approx(1.5)

    def test_zero_tpot_ignores_length(self):
        prof = LatencyProfile(0.4, 0.0)
        assert estimate_latency(prof, 10_000.0) == pytest.approx(0.4)

    @given(st.floats(0, 10), st.floats(0, 1), st.floats(0, 1e4), st.floats(0, 1e4))
    def test_affine_and_non_decreasing(self, ttft, tpot, l1, l2):
        prof = LatencyProfile(ttft, tpot)
        lo, hi = min(l1, l2), max(l1, l2)
        assert estimate_latency(prof, hi) >= estimate_latency(prof, lo)
        mid = 0.5 * (lo + hi)
        interp = 0.5 * (estimate_latency(prof, lo) + estimate_latency(prof, hi))
        assert estimate_latency(prof, mid) == pytest.approx(interp, rel=1e-9, abs=1e-9)
