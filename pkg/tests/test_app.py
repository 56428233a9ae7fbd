# -*- coding: utf-8 -*-
import json
import shutil

import pytest

from src.app import EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK, build_parser, main
from src.config import config
from src.runner import SUMMARY_FILE

from .conftest import SCENARIO_DIR


@pytest.fixture(autouse=True)
def keep_rank_tol(monkeypatch):
    """--tol writes into the global config"""
    monkeypatch.setattr(config, 'rank_tol', config.rank_tol)


def test_validate(capsys):
    assert main(['validate', str(SCENARIO_DIR / "four_agents.json"), '--quiet']) == EXIT_OK
    assert capsys.readouterr().out.startswith("ok: four_agents (cohomology)")


def test_cohomology_prints_report(capsys):
    assert main(['cohomology', str(SCENARIO_DIR / "four_agents.json"), '--quiet']) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report['h0_dim'] == 1
    assert report['rank_delta'] == 5
    assert report['spectrum']['kernel_dim'] == 1


def test_cohomology_with_output(tmp_path, capsys):
    code = main(['cohomology', str(SCENARIO_DIR / "polite_company.json"), '--out', str(tmp_path), '--quiet'])
    assert code == EXIT_OK
    assert json.loads(capsys.readouterr().out)['h0_dim'] == 1
    with open(tmp_path / SUMMARY_FILE, encoding="utf-8") as f:
        assert json.load(f)['experiment']['kind'] == "cohomology"


def test_run_logs_to_stderr(tmp_path, capsys):
    assert main(['run', str(SCENARIO_DIR / "stubborn_path.json"), '--out', str(tmp_path)]) == EXIT_OK
    err = capsys.readouterr().err
    assert "[STUBBORN]" in err and "[RUNNER]" in err
    assert (tmp_path / SUMMARY_FILE).exists()


def test_quiet(tmp_path, capsys):
    main(['run', str(SCENARIO_DIR / "stubborn_path.json"), '--out', str(tmp_path), '--quiet'])
    assert capsys.readouterr().err == ""


def test_invalid_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": 1, "sheaf": {"n_vertices": 2, "edges": [[0, 0]], "constant": 1}, '
                   '"experiment": {"kind": "cohomology"}}', encoding="utf-8")
    assert main(['validate', str(bad)]) == EXIT_INVALID
    assert "$.sheaf.edges" in capsys.readouterr().err


def test_not_converged_exit_code(tmp_path):
    doc = json.loads((SCENARIO_DIR / "polite_company.json").read_text(encoding="utf-8"))
    doc['experiment']['flow']['t_max'] = 0.1
    path = tmp_path / "short.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    assert main(['run', str(path), '--out', str(tmp_path / "out"), '--quiet']) == EXIT_NOT_CONVERGED


def test_signed_divergence_exits_ok(tmp_path):
    assert main(['run', str(SCENARIO_DIR / "signed_path.json"), '--out', str(tmp_path), '--quiet']) == EXIT_OK


def test_batch_reports_worst_code(tmp_path):
    source = tmp_path / "in"
    source.mkdir()
    shutil.copy(SCENARIO_DIR / "reluctant_edge.json", source)
    (source / "broken.json").write_text("[]", encoding="utf-8")
    assert main(['run', '--batch', str(source), '--out', str(tmp_path / "out"), '--quiet']) == EXIT_INVALID
    assert (tmp_path / "out" / "reluctant_edge" / SUMMARY_FILE).exists()


def test_tol_option(tmp_path):
    main(['validate', str(SCENARIO_DIR / "four_agents.json"), '--tol', '1e-8', '--quiet'])
    assert config.rank_tol == 1e-8


def test_parser_errors():
    parser = build_parser()
    with pytest.raises(SystemExit):
        parser.parse_args(['run', '--tol'])
    with pytest.raises(SystemExit):
        main(['run', '--quiet'])
    with pytest.raises(SystemExit):
        main(['validate', 'x.json', '--tol', '-1'])


def test_seed_is_shared_by_all_commands(tmp_path, capsys):
    path = str(SCENARIO_DIR / "four_agents.json")
    assert main(['validate', path, '--seed', '11', '--quiet']) == EXIT_OK
    assert capsys.readouterr().out.rstrip().endswith("seed 11")
    assert main(['cohomology', path, '--seed', '11', '--out', str(tmp_path), '--quiet']) == EXIT_OK
    with open(tmp_path / SUMMARY_FILE, encoding="utf-8") as f:
        assert json.load(f)['seed'] == 11


def test_joint_scenario_exits_ok(tmp_path):
    path = str(SCENARIO_DIR / "joint_learn_to_lie.json")
    assert main(['run', path, '--out', str(tmp_path), '--quiet']) == EXIT_OK
    with open(tmp_path / SUMMARY_FILE, encoding="utf-8") as f:
        assert json.load(f)['converged'] is True
