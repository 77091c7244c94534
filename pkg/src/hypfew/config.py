"""Run configuration and its flat ``key: value`` text form."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields

from .errors import ConfigError
from .geometry import CurvatureSpace
from .protoloss import ClipConfig, GradientMode

SPACE_KINDS = ("euclidean", "poincare", "sphere")

# Fields that define the data and episode streams; they must agree across
# the entries of a comparison run.
DATA_FIELDS = (
    "d", "train_way", "train_shot", "train_queries", "test_way", "test_shot",
    "test_queries", "episodes", "lr", "lr_step", "lr_gamma", "branching", "depth",
    "input_dim", "hidden_dim", "node_scale", "noise_scale", "eval_episodes", "seed",
)
# Fields a comparison entry may set.
SPACE_FIELDS = ("space", "k", "r", "epsilon", "clip", "gradient_mode", "renormalize_prototypes",
                "midpoint_grad")


@dataclass
class RunConfig:
    space: str = "poincare"
    d: int = 128
    k: float = -0.05
    r: float = 1.0 / math.sqrt(0.006)
    epsilon: float = 1e-3
    clip: float | None = None
    gradient_mode: str = "euclidean"
    renormalize_prototypes: bool = True
    midpoint_grad: bool = False
    train_way: int = 5
    train_shot: int = 1
    train_queries: int = 15
    test_way: int = 5
    test_shot: int = 1
    test_queries: int = 15
    episodes: int = 200
    lr: float = 1e-3
    lr_step: int = 40
    lr_gamma: float = 0.8
    branching: int = 5
    depth: int = 2
    input_dim: int = 64
    hidden_dim: int = 64
    node_scale: float = 3.0
    noise_scale: float = 3.0
    rescale_eps: float = 1e-12
    eval_episodes: int = 1000
    seed: int = 0
    output: str = "report.txt"
    csv: str = "results.csv"

    def __post_init__(self):
        self.validate()

    # -- validation -------------------------------------------------------

    def validate(self):
        if self.space not in SPACE_KINDS:
            raise ConfigError(f"space must be one of {SPACE_KINDS}, got {self.space!r}", "space")
        if self.space == "poincare" and not self.k < 0:
            raise ConfigError("Poincaré ball needs k < 0", "k")
        if self.space == "sphere" and not self.r > 0:
            raise ConfigError("sphere needs r > 0", "r")
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon must lie in (0, 1)", "epsilon")
        if self.clip is not None:
            if self.space != "poincare":
                raise ConfigError("clip only applies to the Poincaré ball", "clip")
            if not (0 < self.clip < math.inf):
                raise ConfigError("clip must be finite and positive", "clip")
        if self.gradient_mode not in ("euclidean", "riemannian"):
            raise ConfigError("gradient_mode must be 'euclidean' or 'riemannian'", "gradient_mode")
        if self.gradient_mode == "riemannian" and self.space != "poincare":
            raise ConfigError("riemannian gradients only apply to the Poincaré ball", "gradient_mode")
        positive = ("d", "train_shot", "train_queries", "test_shot", "test_queries",
                    "lr_step", "depth", "input_dim", "hidden_dim", "eval_episodes")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1", name)
        for name in ("train_way", "test_way", "branching"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be >= 2", name)
        if self.episodes < 0:
            raise ConfigError("episodes must be >= 0", "episodes")
        for name in ("lr", "lr_gamma", "node_scale", "noise_scale"):
            value = getattr(self, name)
            if not (0 < value < math.inf):
                raise ConfigError(f"{name} must be finite and positive", name)
        if self.rescale_eps < 0:
            raise ConfigError("rescale_eps must be >= 0", "rescale_eps")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer", "seed")
        n_leaves = self.branching ** self.depth
        n_train, _, n_test = class_split(n_leaves)
        if n_train < self.train_way:
            raise ConfigError(f"only {n_train} training classes for {self.train_way}-way", "train_way")
        if n_test < self.test_way:
            raise ConfigError(f"only {n_test} test classes for {self.test_way}-way", "test_way")

    # -- derived objects --------------------------------------------------

    @property
    def curvature_space(self):
        if self.space == "poincare":
            return CurvatureSpace.poincare(self.k, self.epsilon)
        if self.space == "sphere":
            return CurvatureSpace.sphere(self.r)
        return CurvatureSpace.euclidean()

    @property
    def clip_config(self):
        return ClipConfig(self.clip)

    @property
    def mode(self):
        return GradientMode(self.gradient_mode)

    @property
    def param(self):
        """The curvature (ball), radius (sphere) or 0 (Euclidean)."""
        if self.space == "poincare":
            return self.k
        if self.space == "sphere":
            return self.r
        return 0.0

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    # -- text form --------------------------------------------------------

    def to_text(self):
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name}: {_format_value(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, base=None):
        return cls.from_mapping(parse_document(text), base)

    @classmethod
    def from_mapping(cls, mapping, base=None):
        values = dataclasses.asdict(base) if base is not None else {}
        values.update(_convert_mapping(mapping))
        return cls(**values)


def class_split(n_leaves):
    """(train, val, test) class counts; blocks of leaf indices in that order."""
    n_test = n_leaves // 5
    n_val = n_leaves // 5
    return n_leaves - n_val - n_test, n_val, n_test


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _field_types():
    return {f.name: f.type for f in fields(RunConfig)}


def _convert(name, raw):
    kind = _field_types()[name]
    text = raw.strip()
    try:
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "float | None":
            return None if text.lower() in ("none", "") else float(text)
        return text
    except ValueError:
        raise ConfigError(f"cannot parse {name}={text!r} as {kind}", name) from None


def _convert_mapping(mapping):
    known = _field_types()
    out = {}
    for key, raw in mapping.items():
        if key not in known:
            raise ConfigError(f"unknown configuration field {key!r}", key)
        out[key] = _convert(key, raw) if isinstance(raw, str) else raw
    return out


def parse_document(text):
    """Parse ``key: value`` lines; '#' starts a comment, blank lines are ignored."""
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ConfigError(f"line {lineno}: expected 'key: value'", None)
        key, value = line.split(":", 1)
        key = key.strip()
        if key in mapping:
            raise ConfigError(f"line {lineno}: duplicate field {key!r}", key)
        mapping[key] = value.strip()
    return mapping


def split_documents(text):
    """Split a multi-document file on lines consisting of '---'."""
    docs, current = [], []
    for line in text.splitlines():
        if line.strip() == "---":
            docs.append("\n".join(current))
            current = []
        else:
            current.append(line)
    docs.append("\n".join(current))
    return [d for d in docs if d.strip()]


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return RunConfig.from_text(fh.read())


def load_comparison(text):
    """Base document followed by one document per space entry.

    Entries may only set space fields; setting a data field to a value
    different from the base is a configuration error, since the comparison
    relies on identical episode streams.
    """
    docs = split_documents(text)
    if not docs:
        raise ConfigError("empty comparison configuration")
    base_map = parse_document(docs[0])
    base = RunConfig.from_mapping(base_map)
    entries = []
    for doc in docs[1:]:
        mapping = parse_document(doc)
        converted = _convert_mapping(mapping)
        for key, value in converted.items():
            if key not in SPACE_FIELDS and value != getattr(base, key):
                raise ConfigError(f"mismatched data settings: entry sets {key}={value!r}", key)
        entries.append(RunConfig.from_mapping(mapping, base))
    if len(entries) < 2:
        raise ConfigError("a comparison needs at least two space entries", "space")
    return base, entries
