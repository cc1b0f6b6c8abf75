import pytest

from mixedelast.config import ConfigError, load_config, parse_config, parse_value


@pytest.mark.parametrize("text,value", [("1e-9", 1e-9), ("25", 25), ("true", True), ("Off", False),
                                        ("2,4,8", [2, 4, 8]), ("L1N11R1", "L1N11R1"),
                                        ("24, 32", [24, 32])])
def test_parse_value(text, value):
    assert parse_value(text) == value


def test_parse_config(tmp_path):
    text = """
    # solver
    newton.tol_abs = 1e-9   # absolute
    newton.line_search = false
    continuation.steps = 20
    mu = 80.194
    lambda = 400889.8
    """
    p = tmp_path / "run.cfg"
    p.write_text(text)
    cfg = load_config(p)
    assert cfg == {"newton.tol_abs": 1e-9, "newton.line_search": False, "continuation.steps": 20,
                   "mu": 80.194, "lambda": 400889.8}


def test_errors():
    with pytest.raises(ConfigError):
        parse_config("no equals sign")
    with pytest.raises(ConfigError):
        parse_config("typo.key = 1")
    with pytest.raises(ConfigError):
        parse_config(" = 1")
    assert parse_config("typo.key = 1", strict=False) == {"typo.key": 1}
