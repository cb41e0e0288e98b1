import pytest

from rkhsflr.config import parse_config_file, resolve
from rkhsflr.errors import ConfigError


def write(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_parse_config_file_basics(tmp_path):
    path = write(
        tmp_path,
        """
        # comment line
        order = 3

        lambda = 0.5
        input= data.csv
        model =model.json
        """,
    )
    values = parse_config_file(path)
    assert values == {
        "order": "3",
        "lambda": "0.5",
        "input": "data.csv",
        "model": "model.json",
    }


def test_parse_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config_file(str(tmp_path / "absent.cfg"))
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_file(write(tmp_path, "no equals sign"))
    with pytest.raises(ConfigError, match="empty key"):
        parse_config_file(write(tmp_path, "= 3"))
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_file(write(tmp_path, "order = 2\norder = 3"))


def test_resolve_precedence_flag_over_file_over_default():
    file_values = {"order": "3", "input": "a.csv", "model": "m.json"}
    flag_values = {"order": "4"}
    config, sources = resolve("fit", file_values, flag_values)
    assert config["order"] == 4
    assert sources["order"] == {"source": "flag", "file_value": 3, "flag_value": 4}
    assert sources["input"]["source"] == "file"
    assert config["lambda"] == "auto"
    assert sources["lambda"]["source"] == "default"
    assert config["lambda_points"] == 60


def test_resolve_none_flags_do_not_override():
    config, sources = resolve(
        "fit",
        {"input": "a.csv", "model": "m.json"},
        {"order": None},
    )
    assert config["order"] == 2
    assert sources["order"]["source"] == "default"


def test_resolve_type_and_range_errors():
    base = {"input": "a.csv", "model": "m.json"}
    with pytest.raises(ConfigError, match="not an integer"):
        resolve("fit", {**base, "order": "two"}, {})
    with pytest.raises(ConfigError, match="'order'"):
        resolve("fit", {**base, "order": "5"}, {})
    with pytest.raises(ConfigError, match="must exceed"):
        resolve("fit", {**base, "lambda": "0"}, {})
    with pytest.raises(ConfigError, match="'auto' or a number"):
        resolve("fit", {**base, "lambda": "soon"}, {})
    with pytest.raises(ConfigError, match="unknown config key"):
        resolve("fit", {**base, "bogus": "1"}, {})
    with pytest.raises(ConfigError, match="unknown flag key"):
        resolve("fit", base, {"bogus": "1"})
    with pytest.raises(ConfigError, match="unknown command"):
        resolve("train", {}, {})


def test_resolve_required_keys():
    with pytest.raises(ConfigError, match="missing required key 'model'"):
        resolve("fit", {"input": "a.csv"}, {})
    config, _ = resolve("fit", {"input": "a.csv"}, {"model": "m.json"})
    assert config["model"] == "m.json"


def test_resolve_bool_parsing():
    base = {"input": "a.csv", "model": "m.json"}
    for text, expected in (("true", True), ("No", False), ("1", True), ("off", False)):
        config, _ = resolve("fit", {**base, "refine": text}, {})
        assert config["refine"] is expected
    with pytest.raises(ConfigError, match="not a boolean"):
        resolve("fit", {**base, "refine": "maybe"}, {})


def test_resolve_choice_validation():
    with pytest.raises(ConfigError, match="not one of"):
        resolve("simulate", {"spacing": "far", "out": "r.csv"}, {})
    config, _ = resolve("simulate", {"spacing": "close", "out": "r.csv"}, {})
    assert config["spacing"] == "close"


def test_fixed_lambda_conflicts_with_search_keys():
    base = {"input": "a.csv", "model": "m.json", "lambda": "0.1"}
    with pytest.raises(ConfigError, match="conflicts with search keys"):
        resolve("fit", {**base, "lambda_points": "30"}, {})
    # a fixed lambda with untouched search keys is fine
    config, _ = resolve("fit", base, {})
    assert config["lambda"] == 0.1


def test_lambda_window_ordering():
    base = {"input": "a.csv", "model": "m.json"}
    with pytest.raises(ConfigError, match="below lambda_max"):
        resolve("fit", {**base, "lambda_min": "1.0", "lambda_max": "0.5"}, {})


def test_simulate_defaults():
    config, sources = resolve("simulate", {"out": "r.csv"}, {})
    assert config["spacing"] == "well"
    assert config["nu"] == 2.0
    assert config["sigma"] == 0.5
    assert config["n"] == 100
    assert config["reps"] == 200
    assert config["seed"] == 0
    assert config["grid_points"] == 201
    assert config["lambda_min"] == 1e-8
    assert all(
        record["source"] == ("file" if key == "out" else "default")
        for key, record in sources.items()
    )
