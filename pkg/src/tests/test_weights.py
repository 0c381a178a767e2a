from fractions import Fraction

import pytest

from riskfuzz.weights import (
    PreferenceRanking,
    RankingError,
    WeightVector,
    aggregate_rankings,
    fishburn_weights,
    rank_weights,
    weights_for,
)


class TestPreferenceRanking:
    def test_parse_groups_and_ties(self):
        ranking = PreferenceRanking.parse("K1 > K2 ~ K3")
        assert ranking.groups == (("K1",), ("K2", "K3"))
        assert ranking.group_index("K3") == 2

    def test_parse_unicode_symbols(self):
        assert PreferenceRanking.parse("A ≻ B ≈ C").groups == (("A",), ("B", "C"))

    def test_round_trips_through_str(self):
        assert str(PreferenceRanking.parse("U1 ~ U2 > U3")) == "U1 ~ U2 > U3"

    def test_duplicate_item(self):
        with pytest.raises(RankingError, match="more than once"):
            PreferenceRanking.parse("A > B ~ A")

    def test_empty_group(self):
        with pytest.raises(RankingError, match="Empty group"):
            PreferenceRanking.parse("A > > B")

    def test_unranked_item(self):
        with pytest.raises(RankingError, match="not ranked"):
            PreferenceRanking.strict(["A", "B"]).group_index("C")


class TestWeights:
    def test_fishburn(self):
        weights = fishburn_weights(PreferenceRanking.parse("K1 > K2 ~ K3"))
        assert weights["K1"] == Fraction(1, 2)
        assert weights["K2"] == weights["K3"] == Fraction(1, 4)

    def test_fishburn_strict_order(self):
        weights = fishburn_weights(PreferenceRanking.strict(["A", "B", "C"]))
        assert [weights[k] for k in "ABC"] == [Fraction(1, 2), Fraction(1, 3), Fraction(1, 6)]

    def test_rank_scheme_favours_later_groups(self):
        weights = rank_weights(PreferenceRanking.parse("K1 > K2 ~ K3"))
        assert weights["K1"] == Fraction(1, 5)
        assert weights["K2"] == Fraction(2, 5)

    def test_weights_sum_to_one_exactly(self):
        weights = weights_for(PreferenceRanking.parse("N4 > N7 ~ N8 > N1"), "fishburn")
        assert sum(w for _, w in weights.items()) == 1

    def test_unknown_scheme(self):
        with pytest.raises(RankingError, match="Unknown weight scheme"):
            weights_for(PreferenceRanking.strict(["A"]), "entropy")

    def test_weight_vector_rejects_bad_sum(self):
        with pytest.raises(RankingError, match="sum to 1"):
            WeightVector({"A": Fraction(1, 2), "B": Fraction(1, 3)})


class TestAggregateRankings:
    def test_three_experts(self):
        rankings = [
            PreferenceRanking.parse("U1 ~ U2 > U3"),
            PreferenceRanking.parse("U1 > U2 > U3"),
            PreferenceRanking.parse("U1 ~ U3 > U2"),
        ]
        # mean group indices U1 1, U2 5/3, U3 2
        assert str(aggregate_rankings(rankings)) == "U1 > U2 ~ U3"

    def test_tight_tolerance_splits_groups(self):
        rankings = [
            PreferenceRanking.parse("U1 ~ U2 > U3"),
            PreferenceRanking.parse("U1 > U2 > U3"),
            PreferenceRanking.parse("U1 ~ U3 > U2"),
        ]
        assert str(aggregate_rankings(rankings, tie_tolerance=0.1)) == "U1 > U2 > U3"

    def test_different_items(self):
        with pytest.raises(RankingError, match="different items"):
            aggregate_rankings([PreferenceRanking.parse("A > B"), PreferenceRanking.parse("A > C")])

    def test_no_rankings(self):
        with pytest.raises(RankingError):
            aggregate_rankings([])
