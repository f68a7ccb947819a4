import pytest

from latentroute.config import apply_env_overrides, load_config, parse_config


def test_flat_keys_and_types():
    cfg = parse_config(
        """
        name = "router"
        threads = 4
        rate = 0.25
        verbose = true
        quiet = false
        """
    )
    assert cfg == {"name": "router", "threads": 4, "rate": 0.25,
                   "verbose": True, "quiet": False}


def test_sections_prefix_keys():
    cfg = parse_config("[world]\nseed = 7\n[pool]\nsize = 6\n")
    assert cfg == {"world.seed": 7, "pool.size": 6}


def test_comments_and_blanks_ignored():
    cfg = parse_config("# header\n\nseed = 1  # trailing\n")
    assert cfg == {"seed": 1}


def test_bad_line_raises_with_number():
    with pytest.raises(ValueError, match="line 2"):
        parse_config("a = 1\nnot a pair\n")


def test_env_override_wins():
    cfg = apply_env_overrides(
        {"world.seed": 1, "pool.size": 6},
        environ={"LATENTROUTE_WORLD__SEED": "42", "UNRELATED": "x"},
    )
    assert cfg["world.seed"] == 42
    assert cfg["pool.size"] == 6


def test_load_config_applies_env(tmp_path):
    path = tmp_path / "scenario.toml"
    path.write_text("[policy]\nname = \"max-acc\"\n")
    cfg = load_config(path, environ={"LATENTROUTE_POLICY__NAME": '"min-cost"'})
    assert cfg["policy.name"] == "min-cost"
