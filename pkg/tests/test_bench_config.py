"""Scenario config: precedence layers, policy grammar, file parsing."""

import pytest

from sctplab.bench.config import (
    ConfigError, DEFAULT_DROP_LIST, SCENARIO_PRESETS, ScenarioConfig,
    build_config, parse_config_file, parse_sack_policy, to_assoc_config,
)


# ---------------------------------------------------------------------------
# precedence: defaults < scenario preset < file < flags

def test_defaults_alone():
    cfg = build_config()
    assert cfg.scenario == "bulk_12k"
    assert cfg.protocol == "sctp"
    assert cfg.msg_bytes == 12288          # bulk preset fills the zero default
    assert cfg.byte_target == 64 << 20
    assert cfg.seed == 7


def test_preset_fills_scenario_fields():
    cfg = build_config(flag_overrides={"scenario": "small_128b"})
    assert cfg.msg_bytes == 128
    assert cfg.byte_target == 1 << 20


def test_file_overrides_preset(tmp_path):
    p = tmp_path / "bench.cfg"
    p.write_text("scenario = bulk_12k\nmsg_bytes = 4096\nseed = 21\n")
    cfg = build_config(str(p))
    assert cfg.msg_bytes == 4096            # file beats preset
    assert cfg.byte_target == 64 << 20      # preset still fills the rest
    assert cfg.seed == 21


def test_flags_override_file(tmp_path):
    p = tmp_path / "bench.cfg"
    p.write_text("msg_bytes = 4096\nseed = 21\n")
    cfg = build_config(str(p), {"seed": 99, "msg_bytes": None})
    assert cfg.seed == 99                   # flag beats file
    assert cfg.msg_bytes == 4096            # None flags do not override


def test_scenario_flag_picks_the_preset_even_with_file(tmp_path):
    p = tmp_path / "bench.cfg"
    p.write_text("scenario = bulk_12k\n")
    cfg = build_config(str(p), {"scenario": "small_128b"})
    assert cfg.scenario == "small_128b"
    assert cfg.msg_bytes == 128


def test_every_scenario_has_a_runnable_preset():
    for name in SCENARIO_PRESETS:
        cfg = build_config(flag_overrides={"scenario": name})
        assert cfg.scenario == name


# ---------------------------------------------------------------------------
# sack policy grammar

def test_policy_per_packet():
    assert parse_sack_policy("per-packet")[0] == "every_packet"


def test_policy_per_k_carries_k():
    mode, k, _ = parse_sack_policy("per-k:7")
    assert (mode, k) == ("every_k", 7)


def test_policy_lk_double():
    assert parse_sack_policy("lk-double")[0] == "lk_double"


def test_policy_delayed_carries_ms():
    mode, _, ms = parse_sack_policy("delayed:40")
    assert (mode, ms) == ("delayed", 40.0)


@pytest.mark.parametrize("bad", ["per-k:0", "per-k:-3", "delayed:0",
                                 "delayed:-5", "nonsense", "per_packet"])
def test_policy_rejects_garbage(bad):
    with pytest.raises(ConfigError):
        parse_sack_policy(bad)


# ---------------------------------------------------------------------------
# config file parsing

def test_file_comments_and_blanks(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# a comment\n\nseed = 3   # trailing\n\n")
    assert parse_config_file(str(p)) == {"seed": 3}


def test_file_unknown_key(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("nonsense = 1\n")
    with pytest.raises(ConfigError, match="nonsense"):
        parse_config_file(str(p))


def test_file_missing_equals(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("just a line\n")
    with pytest.raises(ConfigError, match="key=value"):
        parse_config_file(str(p))


def test_file_bad_number(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("seed = banana\n")
    with pytest.raises(ConfigError, match="seed"):
        parse_config_file(str(p))


def test_file_drop_list_parses_floats(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("drop_list = 0, 0.005, 0.1\n")
    assert parse_config_file(str(p))["drop_list"] == (0.0, 0.005, 0.1)


def test_file_bool_spellings(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("gbn = yes\nno_delay = off\n")
    kv = parse_config_file(str(p))
    assert kv == {"gbn": True, "no_delay": False}


# ---------------------------------------------------------------------------
# validation

def test_validate_unknown_scenario():
    with pytest.raises(ConfigError, match="scenario"):
        build_config(flag_overrides={"scenario": "warp_drive"})


def test_validate_unknown_protocol():
    with pytest.raises(ConfigError, match="protocol"):
        build_config(flag_overrides={"protocol": "udp"})


def test_validate_bad_mode_list():
    with pytest.raises(ConfigError, match="modes"):
        build_config(flag_overrides={"scenario": "loss_sweep",
                                     "modes": ("sctp_sack", "carrier_pigeon")})


def test_validate_bad_drop():
    with pytest.raises(ConfigError):
        build_config(flag_overrides={"drop_prob": 1.5})


def test_validate_bad_policy_at_build_time():
    with pytest.raises(ConfigError):
        build_config(flag_overrides={"sack_policy": "per-k:0"})


# ---------------------------------------------------------------------------
# association config mapping

def test_assoc_config_carries_transport_options():
    cfg = build_config(flag_overrides={"sack_policy": "per-k:3", "gbn": True,
                                       "rwnd": 65536, "streams": 4})
    acfg = to_assoc_config(cfg)
    assert acfg.sack_policy == "every_k"
    assert acfg.sack_k == 3
    assert acfg.gbn is True
    assert acfg.rwnd == 65536
    assert acfg.n_streams == 4


def test_default_drop_list_is_the_paper_ladder():
    assert DEFAULT_DROP_LIST == (0.0, 0.005, 0.01, 0.025, 0.05, 0.1)


def test_dataclass_has_a_default_for_every_field():
    cfg = ScenarioConfig()
    assert cfg.scenario and cfg.protocol
