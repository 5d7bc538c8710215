"""Plain-text experiment configuration.

Format: `[section]` headers with `key = value` lines, `#` comments, and
comma-separated lists. Unknown sections or keys are errors (named with their
line number), as are type mismatches; omitted keys take the defaults below.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "DEFAULTS"]


class ConfigError(ValueError):
    """Raised for unreadable, unknown, or ill-typed configuration input."""


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


# section -> key -> (parser, default)
DEFAULTS: dict = {
    "experiment": {
        "id": (str, None),  # required
        "out_dir": (str, "results"),
        "seeds": (_ints, [1]),
    },
    "data": {
        "stream_length": (int, 3932),
        "env_start": (int, 1200),
        "env_end": (int, 1500),
        "damage_onset": (int, 3476),
        "episode_prob": (float, 0.06),
        "n_per_class": (int, 300),
        "test_per_class": (int, 200),
        "csv_path": (str, ""),
    },
    "active": {
        "batch_size": (int, 50),
        "budget_fraction": (float, 0.25),
        "strategy": (str, "split"),
        "init_size": (int, 100),
    },
    "semisup": {
        "labelled_fractions": (_floats, [round(0.05 * i, 2) for i in range(1, 21)]),
        "tol": (float, 1e-6),
        "max_iters": (int, 200),
    },
    "dp": {
        "alpha": (float, 10.0),
        "sweeps": (int, 2),
        "alarm_threshold": (int, 50),
        "init_size": (int, 100),
        "prior_scale": (float, 16.0),
    },
    "kbtl": {
        "subspace_dim": (int, 2),
        "margin": (float, 1.0),
        "max_iters": (int, 60),
        "noise_sd": (float, 0.03),
    },
    "gen": {
        "dataset": (str, "ae"),
    },
}

_EXPERIMENT_IDS = ("active", "semisup", "dp", "kbtl", "gen")


@dataclass
class ExperimentConfig:
    """Validated experiment settings with all defaults filled in."""

    experiment_id: str
    out_dir: str
    seeds: list[int]
    data: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return {
            "experiment": {
                "id": self.experiment_id,
                "out_dir": self.out_dir,
                "seeds": list(self.seeds),
            },
            "data": dict(self.data),
            self.experiment_id: dict(self.params),
        }


def _fill_defaults(values: dict) -> dict:
    filled = {}
    for section, keys in DEFAULTS.items():
        filled[section] = {}
        for key, (parser, default) in keys.items():
            if section in values and key in values[section]:
                filled[section][key] = values[section][key]
            else:
                filled[section][key] = default
    return filled


def config_from_values(values: dict) -> ExperimentConfig:
    """Build a validated config from a nested {section: {key: value}} dict."""
    filled = _fill_defaults(values)
    exp = filled["experiment"]
    if exp["id"] is None:
        raise ConfigError("missing required key 'id' in section [experiment]")
    if exp["id"] not in _EXPERIMENT_IDS:
        raise ConfigError(
            f"unknown experiment id '{exp['id']}' (choose from {_EXPERIMENT_IDS})"
        )
    if not exp["seeds"]:
        raise ConfigError("seeds must be non-empty")
    return ExperimentConfig(
        experiment_id=exp["id"],
        out_dir=exp["out_dir"],
        seeds=list(exp["seeds"]),
        data=filled["data"],
        params=filled[exp["id"]] if exp["id"] in filled else {},
    )


def parse_config(path) -> ExperimentConfig:
    """Parse and validate a config file; all errors carry line numbers."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None

    values: dict = {}
    section = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
            values.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"{path}:{lineno}: key outside of any [section]")
        key, _, text = line.partition("=")
        key = key.strip()
        text = text.strip()
        if key not in DEFAULTS[section]:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}' in [{section}]")
        parser, _ = DEFAULTS[section][key]
        try:
            values[section][key] = parser(text)
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: cannot parse '{text}' for key '{key}'"
            ) from None

    try:
        return config_from_values(values)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
