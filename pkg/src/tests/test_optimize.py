import pytest

from riskfuzz import fuzzy
from riskfuzz.errors import InfeasibleError, ModelError
from riskfuzz.linguistic import recognize
from riskfuzz.ncm import CognitiveModel, Edge, Node, convolve
from riskfuzz.optimize import (
    Measure,
    NcmEffectEvaluator,
    NoFeasibleMeasureSetError,
    NoFeasiblePlacementError,
    Requirement,
    SearchTooLargeError,
    TableEffectEvaluator,
    TaskRequirement,
    assign_team,
    candidate_task_index,
    competency_level,
    integral_competence,
    score_test,
    select_measures,
    task_index_from_similarities,
)
from riskfuzz.weights import PreferenceRanking
from shared.modelfile import fixture_path, load


@pytest.fixture(scope="module")
def competency():
    return load(fixture_path("competency.yaml")).objects["competency"]


@pytest.fixture(scope="module")
def team():
    return load(fixture_path("team.yaml")).objects


@pytest.fixture(scope="module")
def measures():
    return load(fixture_path("measures.yaml")).objects["problem"]


def team_indices(team) -> dict[tuple[str, str], float]:
    return {
        (candidate, task.task): task_index_from_similarities(team["similarities"][candidate][task.task], task)
        for candidate in team["candidates"]
        for task in team["tasks"]
    }


# ---------------------------------------------------------------------------
# Competency scoring
# ---------------------------------------------------------------------------


class TestQualificationTests:
    @pytest.mark.parametrize(
        "test_id, expected",
        [
            ("T1", {"D": "С", "R": "В", "QT": "С"}),
            ("T2", {"D": "НС", "R": "В", "QT": "НС"}),
            ("T3", {"D": "В", "R": "ВС", "QT": "ВС"}),
        ],
    )
    def test_scores(self, competency, l5, test_id, expected):
        [(_, difficulty, results)] = [t for t in competency.tests["K1"] if t[0] == test_id]
        recognitions = score_test(difficulty, results).recognize(l5)
        assert {k: r.best_label for k, r in recognitions.items()} == expected

    def test_best_test_is_the_competency_level(self, competency, l5):
        totals = [score_test(d, r).total for _, d, r in competency.tests["K1"]]
        assert recognize(competency_level(totals), l5).best_label == "ВС"

    def test_weights_must_sum_to_one(self, l5):
        with pytest.raises(ModelError, match="weights sum to 0.9"):
            score_test([(l5.etalon("С"), 0.5), (l5.etalon("С"), 0.4)], [(l5.etalon("В"), 1.0)])

    def test_no_scores(self):
        with pytest.raises(ModelError):
            competency_level([])


class TestIntegralCompetence:
    def test_ranked_levels(self, competency, l5):
        totals = [score_test(d, r).total for _, d, r in competency.tests["K1"]]
        levels = {"K1": competency_level(totals), **competency.integral_levels}
        value = integral_competence(levels, competency.integral_ranking())
        recognition = recognize(value, l5)
        assert recognition.best_label == "С"
        assert recognition.runner_up[0] == "ВС"

    def test_missing_level(self, l5):
        with pytest.raises(ModelError, match="No level for competencies K2"):
            integral_competence({"K1": l5.etalon("С")}, PreferenceRanking.parse("K1 > K2"))


# ---------------------------------------------------------------------------
# Team assignment
# ---------------------------------------------------------------------------


class TestTaskIndex:
    def test_candidate_indices(self, team):
        indices = team_indices(team)
        assert indices[("1", "Z1")] == pytest.approx(0.936)
        assert indices[("1", "Z2")] == pytest.approx(0.9133, abs=1e-4)
        assert indices[("2", "Z3")] == pytest.approx(0.8404)
        assert indices[("4", "Z3")] == pytest.approx(0.9802)

    def test_below_threshold_disqualifies(self, team):
        indices = team_indices(team)
        # K6 at 0.74 and K3 at 0.79
        assert indices[("1", "Z3")] == 0.0
        assert indices[("4", "Z1")] == 0.0

    def test_missing_competency_counts_as_zero(self, caplog):
        task = TaskRequirement("Z", (Requirement("K1", "С", 0.5), Requirement("K9", "С", 0.5)), threshold=0.0)
        assert task_index_from_similarities({"K1": 1.0}, task) == pytest.approx(0.5)
        assert "K9" in caplog.text

    def test_index_from_fuzzy_profile(self, l5):
        task = TaskRequirement("Z", (Requirement("K1", "С", 1.0),))
        assert candidate_task_index({"K1": l5.etalon("С")}, task, l5) == pytest.approx(1.0)
        assert candidate_task_index({"K1": l5.etalon("В")}, task, l5) == 0.0

    def test_requirement_weights(self):
        with pytest.raises(ModelError, match="task Z"):
            TaskRequirement("Z", (Requirement("K1", "С", 0.5),))


class TestAssignTeam:
    def test_best_variant(self, team):
        tasks = [t.task for t in team["tasks"]]
        assignment = assign_team(team["candidates"], tasks, team_indices(team))
        assert assignment.variants == 24
        assert assignment.best.variant == 8
        assert assignment.best.candidates == ("2", "1", "4")
        assert assignment.best.score == pytest.approx(2.7675, abs=1e-4)

    def test_surviving_variants(self, team):
        tasks = [t.task for t in team["tasks"]]
        assignment = assign_team(team["candidates"], tasks, team_indices(team))
        ranked = [(p.variant, p.candidates) for p in assignment.table]
        assert ranked == [
            (8, ("2", "1", "4")),
            (6, ("1", "4", "3")),
            (7, ("2", "1", "3")),
            (5, ("1", "4", "2")),
            (12, ("2", "4", "3")),
        ]
        assert [p.score for p in assignment.table] == pytest.approx(
            [2.7675, 2.7228, 2.6841, 2.6664, 2.6608], abs=1e-4
        )

    def test_no_feasible_placement(self):
        with pytest.raises(NoFeasiblePlacementError):
            assign_team(["a", "b"], ["x"], {("a", "x"): 0.0})

    def test_not_enough_candidates(self):
        with pytest.raises(ModelError, match="cannot staff"):
            assign_team(["a"], ["x", "y"], {})

    def test_search_limit(self, team):
        with pytest.raises(SearchTooLargeError):
            assign_team(team["candidates"], ["Z1", "Z2", "Z3"], {}, max_placements=10)


# ---------------------------------------------------------------------------
# Countermeasure portfolios
# ---------------------------------------------------------------------------


class TestSelectMeasures:
    def test_best_ratio_within_budget(self, measures):
        selection = select_measures(measures.measures, measures.evaluator, measures.conflicts, budget=80)
        assert selection.best.members == ("Z13",)
        assert selection.best.ratio == pytest.approx(0.015)

    def test_most_effective_without_budget(self, measures):
        selection = select_measures(measures.measures, measures.evaluator, measures.conflicts)
        assert selection.best.members == ("Z7", "Z27")
        assert selection.best.effectiveness == pytest.approx(0.8)
        assert selection.best.tco == 70

    def test_table_lists_every_subset(self, measures):
        selection = select_measures(measures.measures, measures.evaluator, measures.conflicts)
        rows = {s.mask: s for s in selection.table}
        assert sorted(rows) == list(range(1, 8))
        assert [m for m, s in rows.items() if not s.feasible] == [3, 7]
        assert rows[3].reason == "conflict Z7/Z13"
        assert {m: rows[m].effectiveness for m in (1, 2, 4, 5, 6)} == pytest.approx(
            {1: 0.65, 2: 0.45, 4: 0.25, 5: 0.8, 6: 0.65}
        )

    def test_budget_too_small(self, measures):
        with pytest.raises(NoFeasibleMeasureSetError) as excinfo:
            select_measures(measures.measures, measures.evaluator, measures.conflicts, budget=10)
        assert isinstance(excinfo.value, InfeasibleError)

    def test_unknown_conflict_member(self, measures):
        with pytest.raises(ModelError, match="unknown measures: Z99"):
            select_measures(measures.measures, measures.evaluator, [("Z7", "Z99")])

    def test_measure_limit(self, measures):
        with pytest.raises(SearchTooLargeError):
            select_measures(measures.measures, measures.evaluator, max_measures=2)

    def test_measure_costs(self):
        assert Measure("Z", 1.0, 2.0, 3.0).tco == 6.0
        with pytest.raises(ModelError, match="nonnegative"):
            Measure("Z", -1.0, 2.0)


class TestEffectEvaluators:
    def test_table_lookup(self):
        evaluator = TableEffectEvaluator({"K": 0.25, "A": 0.75}, {frozenset({"Z"}): {"K": 1.0, "A": 0.0}})
        assert evaluator(frozenset({"Z"})) == pytest.approx(0.25)
        with pytest.raises(ModelError, match="No effectiveness data"):
            evaluator(frozenset({"Y"}))

    def test_cognitive_model_lookup(self, l5):
        nodes = {
            "S": Node("S", 0, convolution="additive"),
            "M": Node("M", 1),
            "X": Node("X", 1, value=l5.etalon("С")),
        }
        model = CognitiveModel(nodes=nodes, edges=(Edge("M", "S", 0.5), Edge("X", "S", 0.5)), scale=l5)
        evaluator = NcmEffectEvaluator(model, {"Z": "M"}, {"K": "S"}, {"K": 1.0})
        switched_on = evaluator(frozenset({"Z"}))
        switched_off = evaluator(frozenset())
        assert switched_on > switched_off
        expected = convolve("additive", [(l5.etalon("В"), 0.5), (l5.etalon("С"), 0.5)])
        assert switched_on == pytest.approx(fuzzy.centroid(expected), abs=1e-3)

    def test_unknown_node(self, l5):
        nodes = {"S": Node("S", 0), "X": Node("X", 1, value=l5.etalon("С"))}
        model = CognitiveModel(nodes=nodes, edges=(Edge("X", "S", 1.0),), scale=l5)
        with pytest.raises(ModelError, match="Unknown node M"):
            NcmEffectEvaluator(model, {"Z": "M"}, {"K": "S"}, {"K": 1.0})
