"""Run configuration: dataclass, profiles, INI files, CLI overrides.

Precedence, lowest to highest: profile values, config-file values,
command-line flags.  Unknown sections or keys are rejected outright.
The "paper" profile pins the full-scale hyperparameters and refuses
overrides of the pinned keys; the "desk" profile is a small CPU-sized
variant whose values may be overridden freely.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError

# keys the paper profile does not allow to change
_PAPER_PINNED = {
    "emb_dim": 620, "enc_hidden": 500, "fc_dim": 1000, "latent_dim": 1000,
    "dec_hidden": 1000, "vocab_size": 50000, "init_range": 0.1,
    "lr": 0.0002, "batch_size": 256, "kmeans_k": 10, "beam_width": 3,
    "n_top": 1000,
}

PROFILES: dict[str, dict] = {
    "paper": dict(_PAPER_PINNED, k_trials=10, decode_k=10, min_response_chars=10),
    "desk": {
        "emb_dim": 32, "enc_hidden": 32, "fc_dim": 64, "latent_dim": 64,
        "dec_hidden": 64, "vocab_size": 2000, "init_range": 0.1,
        "lr": 0.001, "batch_size": 32, "kmeans_k": 3, "beam_width": 3,
        "n_top": 100, "k_trials": 3, "decode_k": 3, "min_response_chars": 0,
    },
}


@dataclass
class RunConfig:
    # run
    profile: str = "desk"
    seed: int = 0
    # model
    emb_dim: int = 32
    enc_hidden: int = 32
    fc_dim: int = 64
    latent_dim: int = 64
    dec_hidden: int = 64
    vocab_size: int = 2000
    init_range: float = 0.1
    max_len: int = 30
    min_response_chars: int = 0
    # train
    lr: float = 0.001
    batch_size: int = 32
    pretrain_infer_epochs: int = 5
    pretrain_gen_epochs: int = 1
    align_epochs: int = 1
    align_batches: int = 0  # per-epoch batch cap for the warmup; 0 = full pass
    rl_epochs: int = 10
    k_trials: int = 3
    kmeans_k: int = 3
    top_m: int = 10
    loss_mode: str = "min"
    reward_mode: str = ""  # derived from loss_mode when empty
    patience: int = 3
    reward_baseline: bool = False
    # decode
    n_top: int = 100
    decode_k: int = 3
    beam_width: int = 3
    # paths
    train_corpus: str = ""
    valid_corpus: str = ""
    test_corpus: str = ""
    vocab_path: str = ""
    stopwords_path: str = ""
    checkpoint_dir: str = ""
    output_dir: str = ""
    oracle_path: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "run": ("profile", "seed"),
    "model": ("emb_dim", "enc_hidden", "fc_dim", "latent_dim", "dec_hidden",
              "vocab_size", "init_range", "max_len", "min_response_chars"),
    "train": ("lr", "batch_size", "pretrain_infer_epochs", "pretrain_gen_epochs",
              "align_epochs", "align_batches", "rl_epochs", "k_trials",
              "kmeans_k", "top_m", "loss_mode", "reward_mode", "patience",
              "reward_baseline"),
    "decode": ("n_top", "decode_k", "beam_width"),
    "paths": ("train_corpus", "valid_corpus", "test_corpus", "vocab_path",
              "stopwords_path", "checkpoint_dir", "output_dir", "oracle_path"),
}
_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from exc


def read_config_file(path) -> dict:
    """INI file to a flat {field: value} dict, rejecting unknown names."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    out: dict = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        allowed = _SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"unknown config key {key!r} in section [{section}]")
            out[key] = _coerce(key, raw)
    return out


def build_config(config_path=None, profile: str | None = None,
                 overrides: dict | None = None) -> RunConfig:
    """Assemble the effective RunConfig (profile < file < explicit overrides)."""
    file_values = read_config_file(config_path) if config_path else {}
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    chosen = profile or overrides.get("profile") or file_values.get("profile", "desk")
    if chosen not in PROFILES:
        raise ConfigError(f"unknown profile {chosen!r}; expected paper or desk")

    values: dict = dict(PROFILES[chosen])
    values["profile"] = chosen
    values.update(file_values)
    values.update(overrides)
    values["profile"] = chosen

    if chosen == "paper":
        for key, pinned in _PAPER_PINNED.items():
            if values[key] != pinned:
                raise ConfigError(
                    f"profile paper pins {key}={pinned}; cannot set {values[key]}"
                )

    unknown = set(values) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if cfg.seed < 0:
        raise ConfigError(f"seed must be non-negative, got {cfg.seed}")
    for key in ("emb_dim", "enc_hidden", "fc_dim", "latent_dim", "dec_hidden",
                "vocab_size", "max_len", "batch_size", "k_trials", "kmeans_k",
                "top_m", "n_top", "decode_k", "beam_width"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key} must be positive, got {getattr(cfg, key)}")
    if cfg.latent_dim != 2 * cfg.enc_hidden:
        raise ConfigError(
            f"latent_dim must equal 2*enc_hidden for the attention dot products "
            f"(got {cfg.latent_dim} vs 2*{cfg.enc_hidden})"
        )
    if cfg.dec_hidden != 2 * cfg.enc_hidden:
        raise ConfigError(
            f"dec_hidden must equal 2*enc_hidden for the attention dot products "
            f"(got {cfg.dec_hidden} vs 2*{cfg.enc_hidden})"
        )
    if cfg.loss_mode not in ("avg", "min"):
        raise ConfigError(f"loss_mode must be avg or min, got {cfg.loss_mode!r}")
    derived = "avg" if cfg.loss_mode == "avg" else "max"
    if not cfg.reward_mode:
        cfg.reward_mode = derived
    elif cfg.reward_mode != derived:
        raise ConfigError(
            f"reward_mode {cfg.reward_mode!r} conflicts with loss_mode "
            f"{cfg.loss_mode!r}; the pairing is avg-avg / min-max"
        )
    if cfg.n_top < cfg.decode_k:
        raise ConfigError(f"n_top {cfg.n_top} must be >= decode_k {cfg.decode_k}")
    if cfg.lr <= 0:
        raise ConfigError(f"lr must be positive, got {cfg.lr}")
    for key in ("pretrain_infer_epochs", "pretrain_gen_epochs", "align_epochs",
                "align_batches", "rl_epochs"):
        if getattr(cfg, key) < 0:
            raise ConfigError(f"{key} must be non-negative, got {getattr(cfg, key)}")
