import json
import math

import pytest

from relaxals.trace import ResidualTrace


def sample():
    tr = ResidualTrace()
    tr.append(0, 1.0, 1.0)
    tr.append(1, 0.1, 1.0)
    tr.append(2, 1e-3, 1.5, 0.25)
    tr.converged = True
    return tr


def test_append_ordering():
    tr = ResidualTrace()
    with pytest.raises(ValueError):
        tr.append(1, 1.0, 1.0)
    tr.append(0, 1.0, 1.0)
    with pytest.raises(ValueError):
        tr.append(0, 1.0, 1.0)


def test_queries():
    tr = sample()
    assert tr.errors == [1.0, 0.1, 1e-3]
    assert tr.omegas == [1.0, 1.0, 1.5]
    assert tr.err_at(1) == 0.1
    assert tr.iterations_to(0.05) == 2
    assert tr.iterations_to(1e-9) is None
    with pytest.raises(KeyError):
        tr.err_at(7)


def test_csv_schema_and_roundtrip():
    text = sample().to_csv()
    lines = text.splitlines()
    assert lines[0] == "iter,err,omega_used,beta_sq_est"
    assert lines[1] == "0,1.0,1.0,"
    assert lines[3].endswith(",0.25")
    back = ResidualTrace.from_csv(text)
    assert back.entries == sample().entries


def test_json_explicit_nulls():
    doc = json.loads(sample().to_json(experiment="x"))
    assert doc["converged"] is True and doc["experiment"] == "x"
    assert doc["trace"][0] == {"iter": 0, "err": 1.0, "omega_used": 1.0, "beta_sq_est": None}
    assert doc["trace"][2]["beta_sq_est"] == 0.25


def test_json_nonfinite_err_becomes_null():
    tr = ResidualTrace()
    tr.append(0, math.inf, 1.0)
    assert json.loads(tr.to_json())["trace"][0]["err"] is None
