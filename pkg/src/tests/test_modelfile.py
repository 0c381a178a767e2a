import textwrap

import pytest

from riskfuzz.errors import ModelError
from shared.modelfile import (
    FIXTURES_DIR,
    ModelLoadError,
    fixture_path,
    load,
    load_document,
    parse_document,
)
from shared.models import MODES

TWO_LEAF_MODEL = """\
version: 1
mode: evaluate
model:
  nodes:
    - {id: R, level: 0}
    - {id: A, level: 1, value: С}
    - {id: B, level: 1, value: [0.3, 0.4, 0.5]}
  edges:
    - {from: A, to: R, weight: 1/2}
    - {from: B, to: R, weight: {weight}}
"""


def write_model(tmp_path, text: str, name: str = "model.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text), encoding="utf-8")
    return path


class TestParseDocument:
    def test_empty_file(self):
        with pytest.raises(ModelLoadError, match="m.yaml: empty model file"):
            parse_document("", "m.yaml")

    def test_invalid_yaml_names_the_line(self):
        with pytest.raises(ModelLoadError, match=r"m.yaml:\d+: invalid YAML"):
            parse_document("version: 1\nmode: [evaluate\nname: x\n", "m.yaml")

    def test_top_level_must_be_mapping(self):
        with pytest.raises(ModelLoadError, match="mapping at the top level"):
            parse_document("- 1\n- 2\n", "m.yaml")

    def test_schema_error_points_at_the_field(self):
        text = "version: 1\nmode: channels\nscale:\n  levels: 4\nchannels: {low: 1, high: 2, profitability: 1}\n"
        with pytest.raises(ModelLoadError, match=r"^m.yaml:4: scale.levels: "):
            parse_document(text, "m.yaml")

    def test_mode_needs_its_section(self):
        with pytest.raises(ModelLoadError, match="needs a 'model' section"):
            parse_document("version: 1\nmode: evaluate\n", "m.yaml")

    def test_unknown_version(self):
        with pytest.raises(ModelLoadError, match="version"):
            parse_document("version: 2\nmode: place\nperimeter: {points: [0], probabilities: [1]}\n")

    def test_fraction_strings_become_numbers(self):
        document = parse_document(TWO_LEAF_MODEL.replace("{weight}", "1/2"))
        assert document.model.edges[0].weight == 0.5


class TestLoad:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelLoadError, match="Model file not found"):
            load_document(tmp_path / "absent.yaml")

    def test_builds_cognitive_model(self, tmp_path):
        loaded = load(write_model(tmp_path, TWO_LEAF_MODEL.replace("{weight}", "0.5")))
        model = loaded.objects["model"]
        assert loaded.mode == "evaluate"
        assert model.root == "R"
        assert model.nodes["B"].value.abscissas == pytest.approx((0.3, 0.4, 0.4, 0.5))

    def test_weight_sum_is_checked_on_build(self, tmp_path):
        path = write_model(tmp_path, TWO_LEAF_MODEL.replace("{weight}", "0.4"))
        with pytest.raises(ModelLoadError, match="model: .*sum to 0.9") as excinfo:
            load(path)
        assert str(path) in excinfo.value.detail
        assert isinstance(excinfo.value, ModelError)

    def test_ladder_and_scale_overrides(self, tmp_path):
        path = write_model(tmp_path, TWO_LEAF_MODEL.replace("{weight}", "0.5"))
        loaded = load(path, ladder="0,0.5,1", scale="L7")
        assert loaded.ladder.levels == (0.0, 0.5, 1.0)
        assert len(loaded.scale.labels) == 7

    def test_bad_ladder(self, tmp_path):
        path = write_model(tmp_path, TWO_LEAF_MODEL.replace("{weight}", "0.5"))
        with pytest.raises(ModelLoadError, match="ladder"):
            load(path, ladder="0,0.7,0.5,1")

    def test_university_catalog(self):
        loaded = load(fixture_path("university.yaml"))
        catalog = loaded.document.dynamics.catalog
        assert (len(catalog.threats), len(catalog.vulnerabilities), len(catalog.measures)) == (64, 64, 31)
        assert {a.id for a in loaded.objects["dynamics"].assets} == {"DEK", "BUH"}

    @pytest.mark.parametrize("path", sorted(FIXTURES_DIR.glob("*.yaml")), ids=lambda p: p.stem)
    def test_every_fixture_loads(self, path):
        loaded = load(path)
        assert loaded.mode in MODES
        assert loaded.objects

    def test_expert_rankings_must_cover_the_same_competencies(self, tmp_path):
        text = fixture_path("competency.yaml").read_text(encoding="utf-8")
        path = write_model(tmp_path, text.replace('ranking: "K3 > K1 ~ K2"', 'ranking: ["K3 > K1 ~ K2", "K3 > K1"]'))
        with pytest.raises(ModelLoadError, match="competency: Rankings cover different items"):
            load(path)

    def test_single_expert_ranking_is_used_as_is(self):
        problem = load(fixture_path("competency.yaml")).objects["competency"]
        assert len(problem.integral_rankings) == 1
        assert problem.integral_ranking() is problem.integral_rankings[0]
