# -*- coding: utf-8 -*-
import json

import numpy as np
import pytest

from src.errors import RunIoError, SchemaError, ScenarioSyntaxError, ValidationError
from src.flow import Integrator
from src.scenario import ExperimentKind, load_scenario, parse_scenario, parse_sheaf, sheaf_to_dict
from src.sheaf import coboundary, four_agent_sheaf

from .conftest import SCENARIO_DIR, random_sheaf


def document(**overrides) -> dict:
    doc = {
        "schema": 1,
        "name": "edge",
        "sheaf": {"constant": 1, "n_vertices": 2, "edges": [[0, 1]]},
        "opinions": {"x0": [0.0, 1.0]},
        "experiment": {"kind": "diffuse"},
    }
    doc.update(overrides)
    return doc


def parse(doc: dict):
    return parse_scenario(json.dumps(doc))


@pytest.mark.parametrize("path", sorted(SCENARIO_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_bundled_scenarios_load(path):
    scenario = load_scenario(path)
    assert scenario.name == path.stem
    assert scenario.source == path


def test_four_agent_file_matches_builder():
    scenario = load_scenario(SCENARIO_DIR / "four_agents.json")
    np.testing.assert_array_equal(coboundary(scenario.sheaf).dense(), coboundary(four_agent_sheaf()).dense())
    assert scenario.experiment.kind is ExperimentKind.COHOMOLOGY
    assert scenario.experiment.relative == (0,)


def test_sheaf_dict_round_trip(rng):
    for _ in range(5):
        sheaf = random_sheaf(rng)
        again = parse_sheaf(json.loads(json.dumps(sheaf_to_dict(sheaf))))
        np.testing.assert_array_equal(coboundary(again).dense(), coboundary(sheaf).dense())


def test_flow_and_defaults():
    scenario = parse(document(experiment={"kind": "diffuse",
                                          "flow": {"integrator": "rk4", "step": 0.01, "record_every": 5}}))
    assert scenario.experiment.flow.integrator is Integrator.RK4
    assert scenario.experiment.flow.record_every == 5
    assert scenario.seed == 0


def test_scalar_gamma_is_broadcast():
    scenario = parse(document(experiment={"kind": "reluctant", "gamma": 0.5}))
    assert scenario.experiment.gamma == (0.5, 0.5)


def test_joint_alpha_overrides_flow():
    scenario = parse(document(experiment={"kind": "joint", "beta": 2.0, "alpha": 3.0}))
    assert scenario.experiment.flow.alpha == 3.0
    assert scenario.experiment.beta == 2.0


def test_name_falls_back_to_file_stem(tmp_path):
    doc = document()
    del doc["name"]
    path = tmp_path / "nameless.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    assert load_scenario(path).name == "nameless"


class TestErrors:
    def test_not_json(self):
        with pytest.raises(ScenarioSyntaxError):
            parse_scenario("{\"schema\": 1,")

    def test_not_utf8(self):
        with pytest.raises(ScenarioSyntaxError):
            parse_scenario(b"\xff\xfe{}")

    def test_schema_version(self):
        with pytest.raises(SchemaError) as info:
            parse(document(schema=2))
        assert info.value.path == "$.schema"

    def test_block_data_length(self):
        sheaf = sheaf_to_dict(four_agent_sheaf())
        sheaf["restrictions"][0]["data"] = [1.0, 2.0]
        with pytest.raises(SchemaError) as info:
            parse(document(sheaf=sheaf, opinions={"x0": [0.0] * 6}))
        assert info.value.path == "$.sheaf.restrictions[0].data"

    def test_block_shape_against_stalks(self):
        sheaf = sheaf_to_dict(four_agent_sheaf())
        sheaf["restrictions"][0]["shape"] = [1, 2]
        sheaf["restrictions"][0]["data"] = [1.0, 2.0]
        with pytest.raises(ValidationError) as info:
            parse(document(sheaf=sheaf, opinions={"x0": [0.0] * 6}))
        assert info.value.path == "$.sheaf.restrictions[0].shape"

    def test_missing_opinions(self):
        doc = document()
        del doc["opinions"]
        with pytest.raises(SchemaError):
            parse(doc)

    def test_opinion_length(self):
        with pytest.raises(ValidationError):
            parse(document(opinions={"x0": [1.0]}))

    def test_vertex_out_of_range(self):
        with pytest.raises(ValidationError) as info:
            parse(document(experiment={"kind": "stubborn", "U": [0, 5]}))
        assert info.value.path == "$.experiment.U[1]"

    def test_unknown_kind(self):
        with pytest.raises(SchemaError) as info:
            parse(document(experiment={"kind": "teleport"}))
        assert info.value.path == "$.experiment.kind"

    def test_bad_flow(self):
        with pytest.raises(ValidationError) as info:
            parse(document(experiment={"kind": "diffuse", "flow": {"alpha": -1.0}}))
        assert info.value.path == "$.experiment.flow"

    def test_self_loop(self):
        doc = document(sheaf={"constant": 1, "n_vertices": 2, "edges": [[1, 1]]})
        with pytest.raises(ValidationError):
            parse(doc)

    def test_boolean_is_not_a_number(self):
        with pytest.raises(SchemaError):
            parse(document(opinions={"x0": [True, 1.0]}))

    def test_cutset_edge_range(self):
        with pytest.raises(ValidationError):
            parse(document(experiment={"kind": "signed", "E_minus": [1]}))

    def test_missing_file(self, tmp_path):
        with pytest.raises(RunIoError):
            load_scenario(tmp_path / "absent.json")
