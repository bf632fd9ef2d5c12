"""Run configuration: a flat table of ``section.key`` settings.

Files are line oriented::

    # comment
    sim.samples = 1263
    ablate.seeds = 0, 1, 2

Every key can also be given on the command line as ``--section.key value``.
List-valued keys take comma-separated items; an empty value means "default".
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class Key:
    name: str
    kind: str  # int | float | bool | str | ints | strs
    default: object
    help: str


KEYS = (
    Key("sim.samples", "int", 1263, "number of recorded frames"),
    Key("sim.period", "float", 0.1, "sample period in seconds"),
    Key("sim.seed", "int", 0, "seed for trajectory wander, failures and read noise"),
    Key("sim.layout_seed", "int", 0, "seed for gauge placement jitter"),
    Key("sim.jitter", "bool", True, "jitter gauge position and orientation"),
    Key("sim.failed", "int", 20, "channels failed (rail-pinned) from the start"),
    Key("sim.noise_sigma", "float", 0.01, "read noise in volts"),
    Key("sim.gain", "float", 8.0, "bridge gain in volts per unit strain"),
    Key("sim.drift", "bool", False, "add linear pose drift to the recorded poses"),
    Key("sim.wander", "bool", True, "add slow off-axis wander to the motion plan"),
    Key("split.fraction", "float", 0.2, "test fraction"),
    Key("split.seed", "int", 0, "train/test split seed"),
    Key("targets.mode", "str", "standardized", "raw, radians_meters or standardized"),
    Key("inputs.min_scale", "float", 20.0, "floor on per-channel standardisation divisor (counts)"),
    Key("train.epochs", "int", 100, "training epochs"),
    Key("train.batch_size", "int", 32, "minibatch size"),
    Key("train.learning_rate", "float", 0.001, "Adam learning rate"),
    Key("train.seed", "int", 0, "minibatch shuffle seed"),
    Key("train.init_seed", "int", 0, "weight initialisation seed"),
    Key("ablate.trials", "int", 10, "independent ablation trials"),
    Key("ablate.seeds", "ints", (), "trial seeds (default 0 .. trials-1)"),
    Key("ablate.n_shuffles", "int", 10, "permutations per feature for importance"),
    Key("ablate.magnify", "float", 10.0, "error-bar magnification in the ablation chart"),
    Key("ablate.jobs", "int", 1, "parallel worker processes for trials"),
    Key("attribute.trials", "int", 5, "models trained per near-limit criterion"),
    Key("attribute.seeds", "ints", (), "trial seeds (default 0 .. trials-1)"),
    Key("attribute.n_permutations", "int", 200, "Monte-Carlo feature orderings per row"),
    Key("attribute.background", "int", 100, "background rows drawn from the training split"),
    Key("attribute.criteria", "strs", ("twist", "bend", "pushpull"), "near-limit criteria to analyse"),
)
KEY_INDEX = {k.name: k for k in KEYS}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_value(key, text):
    """Convert the textual value of ``key`` to its declared type."""
    spec = KEY_INDEX.get(key)
    if spec is None:
        raise ConfigError(f"unknown config key {key!r}")
    text = str(text).strip()
    try:
        if spec.kind == "int":
            return int(text)
        if spec.kind == "float":
            return float(text)
        if spec.kind == "bool":
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if spec.kind == "str":
            return text
        items = [t.strip() for t in text.split(",") if t.strip()]
        return tuple(int(t) for t in items) if spec.kind == "ints" else tuple(items)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


class Config:
    """Immutable mapping of every known key to a typed value."""

    def __init__(self, values=None):
        merged = {k.name: k.default for k in KEYS}
        for key, value in (values or {}).items():
            if key not in KEY_INDEX:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = parse_value(key, value) if isinstance(value, str) else value
        self._values = merged
        self._validate()

    def _validate(self):
        v = self._values
        positive = ["sim.samples", "sim.period", "train.epochs", "train.batch_size", "ablate.trials", "attribute.trials"]
        positive += ["ablate.n_shuffles", "attribute.n_permutations", "attribute.background"]
        for key in positive:
            if not v[key] > 0:
                raise ConfigError(f"{key} must be positive, got {v[key]}")
        for key in ("sim.noise_sigma", "train.learning_rate", "inputs.min_scale", "sim.failed"):
            if v[key] < 0:
                raise ConfigError(f"{key} must be non-negative, got {v[key]}")
        if not 0.0 < v["split.fraction"] < 1.0:
            raise ConfigError(f"split.fraction must lie in (0, 1), got {v['split.fraction']}")
        if v["targets.mode"] not in ("raw", "radians_meters", "standardized"):
            raise ConfigError(f"targets.mode must be raw, radians_meters or standardized, got {v['targets.mode']!r}")
        for c in v["attribute.criteria"]:
            if c not in ("twist", "bend", "pushpull"):
                raise ConfigError(f"unknown near-limit criterion {c!r}")
        for section in ("ablate", "attribute"):
            seeds = v[f"{section}.seeds"]
            if seeds and len(seeds) != v[f"{section}.trials"]:
                raise ConfigError(f"{section}.seeds lists {len(seeds)} seeds for {v[f'{section}.trials']} trials")
            if len(set(seeds)) != len(seeds):
                raise ConfigError(f"{section}.seeds contains duplicates")

    def __getitem__(self, key):
        return self._values[key]

    def trial_seeds(self, section):
        seeds = self[f"{section}.seeds"]
        return list(seeds) if seeds else list(range(self[f"{section}.trials"]))

    def replace(self, **updates):
        """Copy with ``section__key=value`` updates (double underscore for the dot)."""
        values = dict(self._values)
        for name, value in updates.items():
            values[name.replace("__", ".")] = value
        return Config(values)

    def merged(self, values):
        return Config({**self._values, **values})

    def as_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self._values.items()}

    def to_text(self):
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self._values.items())

    def __eq__(self, other):
        return isinstance(other, Config) and self._values == other._values


def parse_config_text(text, source="<config>"):
    """Parse ``section.key = value`` lines into a raw {key: str} dict."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEY_INDEX:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = parse_value(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return values


def load_config(path=None, overrides=None):
    """Defaults, then the file at ``path`` (if any), then ``overrides``."""
    values = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values.update(parse_config_text(text, str(path)))
    for key, value in (overrides or {}).items():
        values[key] = parse_value(key, value) if isinstance(value, str) else value
    return Config(values)
