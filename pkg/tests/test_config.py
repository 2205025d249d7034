import pytest

from m3r.config import RunConfig, parse_kv
from m3r.errors import ConfigError


def test_parse_comments_and_whitespace():
    assert parse_kv("# header\n a = 1 \n\nb=x # trailing\n") == {"a": "1", "b": "x"}


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match="cfg:2:"):
        parse_kv("a=1\nnot a pair\n", "cfg")
    with pytest.raises(ConfigError, match="cfg:1: unknown key"):
        parse_kv("zzz=1\n", "cfg", allowed={"a"})


def test_layering(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("epochs = 7\nthreshold = 5\n")
    cfg = RunConfig.build(f, {"threshold": 2.5, "lr": None})
    assert cfg["epochs"] == 7 and cfg["threshold"] == 2.5 and cfg["lr"] == 1e-3
    assert cfg["batch_size"] == 64


def test_bad_type(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("epochs = many\n")
    with pytest.raises(ConfigError, match="epochs"):
        RunConfig.build(f)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.build(tmp_path / "absent.cfg")
