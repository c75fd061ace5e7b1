import json

import pytest

from bkaudit.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main


def test_reproduce_pass_and_fail(capsys):
    assert main(["reproduce", "hier:cart"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.splitlines()[-1] == "result: PASS"
    assert main(["reproduce", "transdim:cart"]) == EXIT_FAIL
    assert capsys.readouterr().out.splitlines()[-1] == "result: FAIL"


def test_unknown_case(capsys):
    assert main(["reproduce", "nosuch"]) == EXIT_USAGE
    assert "unknown case" in capsys.readouterr().err


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["reproduce", "hier:cart", "--format", "xml"]) == EXIT_USAGE


@pytest.mark.parametrize("fmt", ["text", "json", "csv"])
def test_formats(fmt, capsys):
    main(["reproduce", "hier:cart", "--format", fmt])
    out = capsys.readouterr().out
    if fmt == "json":
        assert json.loads(out)["scenario"] == "hier:cart"
    elif fmt == "csv":
        assert out.splitlines()[0] == "name,observed,expected,delta,tol,status"
    else:
        assert out.startswith("scenario: hier:cart")


def test_time_flag(capsys):
    main(["reproduce", "hier:cart", "--time"])
    assert "wall_time:" in capsys.readouterr().out


def test_list_and_export_then_run_matches_reproduce(tmp_path, capsys):
    assert main(["list", "--export", str(tmp_path)]) == EXIT_OK
    listing = capsys.readouterr().out.splitlines()
    assert len(listing) >= 13
    path = tmp_path / "transdim_cart.json"
    assert path.exists()
    code_run = main(["run", str(path), "--format", "json"])
    a = capsys.readouterr().out
    code_rep = main(["reproduce", "transdim:cart", "--format", "json"])
    b = capsys.readouterr().out
    assert a == b
    assert code_run == code_rep == EXIT_FAIL


def test_run_malformed_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "schema": 1,\n  oops\n}')
    assert main(["run", str(p)]) == EXIT_USAGE
    assert "line 3 column" in capsys.readouterr().err


def test_run_missing_file(tmp_path):
    assert main(["run", str(tmp_path / "none.json")]) == EXIT_USAGE


def test_monte_carlo_without_seed(tmp_path, capsys):
    main(["list", "--export", str(tmp_path)])
    capsys.readouterr()
    p = tmp_path / "hier_cart.json"
    d = json.loads(p.read_text())
    d["quad"] = {"engine": "monte_carlo"}
    d["seed"] = None
    p.write_text(json.dumps(d))
    assert main(["run", str(p)]) == EXIT_USAGE


def test_profile_rows(capsys):
    assert main(["profile", "hier:tan", "sigma", "0.5..2.5", "5"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "param,value,err_est"
    assert len(lines) == 6
    assert main(["profile", "hier:tan", "sigma", "0.5..2.5", "1"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2 and lines[1].startswith("0.5,")


def test_profile_errors(capsys):
    assert main(["profile", "hier:tan", "nosuch", "0.5..2.5", "5"]) == EXIT_USAGE
    assert main(["profile", "hier:tan", "sigma", "0.5-2.5", "5"]) == EXIT_USAGE
    assert main(["profile", "hier:square", "sigma", "1.4..1.6", "3"]) == EXIT_FAIL
    assert "SingularEvidence" in capsys.readouterr().err


@pytest.mark.parametrize("value", ["0", "abc", "-2"])
def test_bad_audit_threads(monkeypatch, value):
    monkeypatch.setenv("AUDIT_THREADS", value)
    assert main(["reproduce", "hier:cart"]) == EXIT_USAGE


def test_good_audit_threads(monkeypatch):
    monkeypatch.setenv("AUDIT_THREADS", "2")
    assert main(["reproduce", "hier:cart"]) == EXIT_OK
