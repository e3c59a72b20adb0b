"""Scenario configuration: defaults, per-scenario presets, a flat key=value
config file, and CLI flag overrides, applied in that order."""

from dataclasses import dataclass, fields

from ..assoc import AssocConfig

SCENARIOS = ("bulk_12k", "small_128b", "multistream", "scaling",
             "loss_sweep", "failover")
PROTOCOLS = ("tcp", "sctp")
COPY_MODES = ("legacy", "optimized")
LOCK_MODELS = ("coarse", "fine")
SWEEP_MODES = ("tcp", "sctp_sack", "sctp_gbn")

MTU = 1500
DEFAULT_DROP_LIST = (0.0, 0.005, 0.01, 0.025, 0.05, 0.1)


class ConfigError(ValueError):
    """Bad scenario configuration; the message names the offending field."""


@dataclass
class ScenarioConfig:
    """Everything a benchmark run needs. A zero means "let the scenario
    pick its documented default" for sizes and byte targets."""

    scenario: str = "bulk_12k"
    protocol: str = "sctp"
    # transport options
    sack_policy: str = "per-k:7"    # per-packet | lk-double | per-k:<k> | delayed:<ms>
    gbn: bool = False
    no_delay: bool = False
    copy_mode: str = "legacy"
    mbs: int = 4
    checksum: bool = False
    lock_model: str = "coarse"
    # link profile
    bandwidth_bps: int = 1_000_000_000
    rtt_us: float = 102.0
    drop_prob: float = 0.0
    drop_list: tuple = ()           # sweep points; empty = DEFAULT_DROP_LIST
    queue_capacity: int = 256
    # workload
    msg_bytes: int = 0              # 0 = scenario default
    msg_count: int = 0              # 0 = derive from byte_target
    byte_target: int = 0            # 0 = scenario default
    rwnd: int = 131072
    streams: int = 1
    assocs: int = 1                 # associations (sctp) or connections (tcp)
    seed: int = 7
    duration_ms: float = 0.0        # 0 = run to the byte target
    # scenario extras, settable from the config file
    kill_ms: float = 50.0           # failover: stop the primary path here
    revive_ms: float = 200.0        # failover: bring it back (0 = never)
    hb_interval_ms: float = -1.0    # -1 = scenario default, 0 = disabled
    rto_initial_ms: float = 200.0
    cpu_budget: float = 0.0         # units/s; 0 = scenario default (off)
    sweep_seeds: int = 5
    modes: tuple = SWEEP_MODES      # which stacks a loss sweep compares


# Applied on top of the dataclass defaults once the scenario is known,
# before the file and the flags get their turn.
SCENARIO_PRESETS = {
    "bulk_12k": {"msg_bytes": 12288, "byte_target": 64 << 20},
    "small_128b": {"msg_bytes": 128, "byte_target": 1 << 20},
    "multistream": {"msg_bytes": 2560, "byte_target": 16 << 20,
                    "sack_policy": "per-packet", "assocs": 4,
                    "no_delay": True},
    "scaling": {"msg_bytes": 12288, "byte_target": 8 << 20,
                "cpu_budget": 9.0e8, "assocs": 4},
    # Default sweep contrasts the two retransmission schemes in the
    # window-limited regime where their difference is visible; compare
    # against tcp with --rwnd 131072 --rtt-us 300 and modes=tcp,sctp_sack.
    "loss_sweep": {"msg_bytes": 12288, "byte_target": 12 << 20,
                   "rwnd": 12288, "modes": ("sctp_sack", "sctp_gbn")},
    "failover": {"msg_bytes": 12288, "byte_target": 48 << 20,
                 "hb_interval_ms": 50.0, "rto_initial_ms": 20.0},
}

HB_DEFAULT_MS = 500.0


def parse_sack_policy(text):
    """per-packet | lk-double | per-k:<k> | delayed:<ms> -> (mode, k, delay_ms)."""
    head, _, arg = text.partition(":")
    if head == "per-packet":
        return "every_packet", 7, 200.0
    if head == "lk-double":
        return "lk_double", 7, 200.0
    if head == "per-k":
        k = int(arg) if arg else 7
        if k < 1:
            raise ConfigError("sack_policy: per-k wants k >= 1, got %d" % k)
        return "every_k", k, 200.0
    if head == "delayed":
        ms = float(arg) if arg else 200.0
        if ms <= 0:
            raise ConfigError("sack_policy: delayed wants ms > 0, got %g" % ms)
        return "delayed", 7, ms
    raise ConfigError("sack_policy: unknown policy %r" % text)


def _coerce(name, kind, raw):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(float(raw)) if ("e" in raw or "." in raw) else int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            if not raw:
                return ()
            parts = [p.strip() for p in raw.split(",")]
            if name in ("drop_list",):
                return tuple(float(p) for p in parts)
            return tuple(parts)
        return raw
    except ValueError:
        raise ConfigError("%s: cannot parse %r" % (name, raw))


def parse_config_file(path):
    """Flat key=value lines; # starts a comment; unknown keys are errors."""
    kinds = {f.name: type(getattr(ScenarioConfig(), f.name))
             for f in fields(ScenarioConfig)}
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("%s:%d: expected key=value, got %r"
                                  % (path, lineno, line))
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in kinds:
                raise ConfigError("%s:%d: unknown key %r" % (path, lineno, key))
            out[key] = _coerce(key, kinds[key], value)
    return out


def build_config(file_path=None, flag_overrides=None):
    """defaults < scenario preset < config file < CLI flags."""
    file_kv = parse_config_file(file_path) if file_path else {}
    flags = {k: v for k, v in (flag_overrides or {}).items() if v is not None}
    scenario = flags.get("scenario", file_kv.get("scenario",
                                                 ScenarioConfig.scenario))
    base = {f.name: getattr(ScenarioConfig(), f.name)
            for f in fields(ScenarioConfig)}
    base["scenario"] = scenario
    base.update(SCENARIO_PRESETS.get(scenario, {}))
    base.update(file_kv)
    base.update(flags)
    cfg = ScenarioConfig(**base)
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig):
    if cfg.scenario not in SCENARIOS:
        raise ConfigError("scenario: %r is not one of %s"
                          % (cfg.scenario, ", ".join(SCENARIOS)))
    if cfg.protocol not in PROTOCOLS:
        raise ConfigError("protocol: %r is not one of %s"
                          % (cfg.protocol, ", ".join(PROTOCOLS)))
    if cfg.copy_mode not in COPY_MODES:
        raise ConfigError("copy_mode: %r is not one of %s"
                          % (cfg.copy_mode, ", ".join(COPY_MODES)))
    if cfg.lock_model not in LOCK_MODELS:
        raise ConfigError("lock_model: %r is not one of %s"
                          % (cfg.lock_model, ", ".join(LOCK_MODELS)))
    parse_sack_policy(cfg.sack_policy)
    if cfg.bandwidth_bps <= 0:
        raise ConfigError("bandwidth_bps: must be positive")
    if cfg.rtt_us < 0:
        raise ConfigError("rtt_us: must be non-negative")
    if not 0.0 <= cfg.drop_prob < 1.0:
        raise ConfigError("drop_prob: %g outside [0, 1)" % cfg.drop_prob)
    for p in cfg.drop_list:
        if not 0.0 <= p < 1.0:
            raise ConfigError("drop_list: %g outside [0, 1)" % p)
    if cfg.queue_capacity < 1:
        raise ConfigError("queue_capacity: must be >= 1")
    if cfg.msg_bytes < 0 or cfg.msg_count < 0 or cfg.byte_target < 0:
        raise ConfigError("sizes and counts must be non-negative")
    if cfg.rwnd < MTU:
        raise ConfigError("rwnd: %d is below one MTU (%d)" % (cfg.rwnd, MTU))
    if cfg.streams < 1:
        raise ConfigError("streams: must be >= 1")
    if cfg.assocs < 1:
        raise ConfigError("assocs: must be >= 1")
    if cfg.mbs < 1:
        raise ConfigError("mbs: must be >= 1")
    if cfg.seed < 0:
        raise ConfigError("seed: must be non-negative")
    if cfg.sweep_seeds < 1:
        raise ConfigError("sweep_seeds: must be >= 1")
    for m in cfg.modes:
        if m not in SWEEP_MODES:
            raise ConfigError("modes: %r is not one of %s"
                              % (m, ", ".join(SWEEP_MODES)))
    if cfg.duration_ms < 0 or cfg.kill_ms < 0 or cfg.revive_ms < 0:
        raise ConfigError("times must be non-negative")


def resolved_hb_ms(cfg: ScenarioConfig) -> float:
    if cfg.hb_interval_ms >= 0:
        return cfg.hb_interval_ms
    return HB_DEFAULT_MS


def to_assoc_config(cfg: ScenarioConfig, n_paths: int = 1,
                    n_streams: int = None) -> AssocConfig:
    mode, k, delay_ms = parse_sack_policy(cfg.sack_policy)
    return AssocConfig(
        mtu=MTU,
        rwnd=cfg.rwnd,
        n_streams=n_streams if n_streams is not None else cfg.streams,
        sack_policy=mode,
        sack_k=k,
        sack_delay_ms=delay_ms,
        gbn=cfg.gbn,
        no_delay=cfg.no_delay,
        copy_mode=cfg.copy_mode,
        rto_initial_ms=cfg.rto_initial_ms,
        hb_interval_ms=resolved_hb_ms(cfg),
        n_paths=n_paths,
        checksum=cfg.checksum,
        mbs=cfg.mbs,
    )
