"""Run configuration: `key = value` files merged with command line flags.

Precedence is defaults < config file < flags. Unknown keys and out-of-range
values raise ConfigError naming the key; the resolver also reports where the
final value of every key came from so manifests can record overrides.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

_BOOL_TRUE = ("true", "yes", "1", "on")
_BOOL_FALSE = ("false", "no", "0", "off")


@dataclass(frozen=True)
class Field:
    name: str
    kind: str  # int, float, str, bool, choice, lambda
    default: object = None
    required: bool = False
    minimum: float | None = None
    maximum: float | None = None
    exclusive_minimum: float | None = None
    choices: tuple | None = None


def _parse_value(spec: Field, raw: object):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if spec.kind == "int":
        try:
            value = int(text)
        except ValueError:
            raise ConfigError(f"key {spec.name!r}: {text!r} is not an integer", key=spec.name)
    elif spec.kind == "float":
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"key {spec.name!r}: {text!r} is not a number", key=spec.name)
    elif spec.kind == "bool":
        lowered = text.lower()
        if lowered in _BOOL_TRUE:
            value = True
        elif lowered in _BOOL_FALSE:
            value = False
        else:
            raise ConfigError(f"key {spec.name!r}: {text!r} is not a boolean", key=spec.name)
    elif spec.kind == "lambda":
        if text == "auto":
            value = "auto"
        else:
            try:
                value = float(text)
            except ValueError:
                raise ConfigError(
                    f"key {spec.name!r}: expected 'auto' or a number, got {text!r}",
                    key=spec.name,
                )
    else:
        value = text
    return value


def _validate(spec: Field, value):
    if spec.kind == "choice" and value not in spec.choices:
        raise ConfigError(
            f"key {spec.name!r}: {value!r} is not one of {list(spec.choices)}",
            key=spec.name,
        )
    if spec.kind in ("int", "float") or (spec.kind == "lambda" and not isinstance(value, str)):
        if spec.minimum is not None and value < spec.minimum:
            raise ConfigError(
                f"key {spec.name!r}: {value} is below the minimum {spec.minimum}",
                key=spec.name,
            )
        if spec.maximum is not None and value > spec.maximum:
            raise ConfigError(
                f"key {spec.name!r}: {value} is above the maximum {spec.maximum}",
                key=spec.name,
            )
        if spec.exclusive_minimum is not None and value <= spec.exclusive_minimum:
            raise ConfigError(
                f"key {spec.name!r}: {value} must exceed {spec.exclusive_minimum}",
                key=spec.name,
            )
    return value


_SEARCH_FIELDS = (
    Field("lambda_min", "float", default=1e-12, exclusive_minimum=0.0),
    Field("lambda_max", "float", default=1e2, exclusive_minimum=0.0),
    Field("lambda_points", "int", default=60, minimum=2),
    Field("refine", "bool", default=True),
)

COMMAND_FIELDS = {
    "fit": (
        Field("input", "str", required=True),
        Field("model", "str", required=True),
        Field("order", "int", default=2, minimum=1, maximum=4),
        Field("lambda", "lambda", default="auto", exclusive_minimum=0.0),
    )
    + _SEARCH_FIELDS,
    "predict": (
        Field("model", "str", required=True),
        Field("input", "str", required=True),
        Field("output", "str", required=True),
    ),
    "simulate": (
        Field("spacing", "choice", default="well", choices=("well", "close")),
        Field("nu", "float", default=2.0, exclusive_minimum=1.0),
        Field("sigma", "float", default=0.5, minimum=0.0),
        Field("n", "int", default=100, minimum=2),
        Field("reps", "int", default=200, minimum=1),
        Field("seed", "int", default=0, minimum=0),
        Field("out", "str", required=True),
        Field("grid_points", "int", default=201, minimum=2),
        Field("series_terms", "int", default=50, minimum=1),
        Field("truth_decay", "float", default=2.0, exclusive_minimum=0.0),
        Field("order", "int", default=2, minimum=1, maximum=4),
        Field("lambda_min", "float", default=1e-8, exclusive_minimum=0.0),
        Field("lambda_max", "float", default=1e2, exclusive_minimum=0.0),
        Field("lambda_points", "int", default=60, minimum=2),
    ),
    "rates": (
        Field("in", "str", required=True),
        Field("out", "str", required=True),
    ),
    "eigen": (
        Field("kernel", "str", default="sobolev:2"),
        Field("grid", "int", default=401, minimum=2),
        Field("terms", "int", default=50, minimum=1),
        Field("output", "str", required=True),
    ),
    "diag": (
        Field("k", "str", default="sobolev:2"),
        Field("c", "str", default="brownian"),
        Field("grid", "int", default=401, minimum=2),
        Field("terms", "int", default=50, minimum=1),
        Field("output", "str", required=True),
    ),
    "figures": (
        Field("in", "str", required=True),
        Field("out", "str", required=True),
    ),
}


def parse_config_file(path: str) -> dict:
    """Parse `key = value` lines; blank lines and '#' comments are skipped."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}")
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {line_no}: empty key")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}", key=key)
        values[key] = raw.strip()
    return values


def resolve(command: str, file_values: dict, flag_values: dict):
    """Layer defaults, file values, and flags into one validated config.

    Returns (config, sources): config maps key to its final typed value,
    sources maps key to 'default', 'file', or 'flag', with the overridden
    file value kept alongside when a flag wins over the file.
    """
    if command not in COMMAND_FIELDS:
        raise ConfigError(f"unknown command {command!r}")
    specs = {spec.name: spec for spec in COMMAND_FIELDS[command]}
    for key in file_values:
        if key not in specs:
            raise ConfigError(f"unknown config key {key!r} for command {command!r}", key=key)
    for key in flag_values:
        if key not in specs:
            raise ConfigError(f"unknown flag key {key!r} for command {command!r}", key=key)
    config = {}
    sources = {}
    for name, spec in specs.items():
        source = "default"
        value = spec.default
        overridden_file_value = None
        if name in file_values:
            source = "file"
            value = _parse_value(spec, file_values[name])
        if name in flag_values and flag_values[name] is not None:
            if source == "file":
                overridden_file_value = value
            source = "flag"
            value = _parse_value(spec, flag_values[name])
        if value is None:
            if spec.required:
                raise ConfigError(f"missing required key {key_name(name)}", key=name)
        else:
            value = _validate(spec, value)
        config[name] = value
        record = {"source": source}
        if overridden_file_value is not None:
            record["file_value"] = overridden_file_value
            record["flag_value"] = value
        sources[name] = record
    _check_conflicts(command, config, sources)
    return config, sources


def key_name(name: str) -> str:
    return repr(name)


def _check_conflicts(command: str, config: dict, sources: dict) -> None:
    if command == "fit":
        fixed = config["lambda"] != "auto"
        search_touched = [
            key
            for key in ("lambda_min", "lambda_max", "lambda_points", "refine")
            if sources[key]["source"] != "default"
        ]
        if fixed and search_touched:
            raise ConfigError(
                "a fixed 'lambda' conflicts with search keys "
                f"{search_touched}; drop one side",
                key="lambda",
            )
    if "lambda_min" in config and "lambda_max" in config:
        if config["lambda_min"] >= config["lambda_max"]:
            raise ConfigError("lambda_min must be below lambda_max", key="lambda_min")
