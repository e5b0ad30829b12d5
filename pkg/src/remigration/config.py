"""Flat ``key=value`` configuration files with module-namespaced keys."""

from dataclasses import asdict, dataclass, field, fields


class ConfigError(ValueError):
    pass


def parse_kv(text):
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {n}: expected key=value")
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_kv(path):
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh.read())


def _coerce(kind, raw, key):
    if kind is bool or kind == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: not a boolean: {raw!r}")
    try:
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    return raw


@dataclass
class InputSettings:
    path: str = ""
    format: str = "jsonl"


@dataclass
class ImputerSettings:
    model: str = ""  # load this model instead of training one
    floor: float = 0.5
    epochs: int = 20
    hidden_units: int = 256
    learning_rate: float = 0.1
    batch_size: int = 32
    min_df: int = 2
    split_fraction: float = 0.8
    training_limit: int = 20000


@dataclass
class DisambiguatorSettings:
    country_threshold: int = 6
    publication_threshold: int = 292
    merge_threshold: float = 0.5


@dataclass
class GenderSettings:
    table: str = ""
    overrides: str = ""
    floor: float = 0.8


@dataclass
class MobilitySettings:
    evaluation_year: int = 2020


@dataclass
class DisciplineSettings:
    k: int = 30
    iters: int = 1000
    alpha: float = 0.0  # 0 means 50 / k
    beta: float = 0.01
    map: str = ""
    collocation_min_count: int = 5
    collocation_threshold: float = 3.0
    top_n: int = 20


@dataclass
class RateSettings:
    cohorts: str = "1998-2001,2002-2005,2006-2009"
    censor: str = "last_pub"
    period_start: int = 1996
    period_end: int = 2020
    max_age: int = 5
    max_years_since: int = 5


SECTIONS = {
    "input": InputSettings,
    "imputer": ImputerSettings,
    "disambiguator": DisambiguatorSettings,
    "gender": GenderSettings,
    "mobility": MobilitySettings,
    "disciplines": DisciplineSettings,
    "rates": RateSettings,
}


@dataclass
class PipelineConfig:
    seed: int
    output_dir: str
    input: InputSettings = field(default_factory=InputSettings)
    imputer: ImputerSettings = field(default_factory=ImputerSettings)
    disambiguator: DisambiguatorSettings = field(default_factory=DisambiguatorSettings)
    gender: GenderSettings = field(default_factory=GenderSettings)
    mobility: MobilitySettings = field(default_factory=MobilitySettings)
    disciplines: DisciplineSettings = field(default_factory=DisciplineSettings)
    rates: RateSettings = field(default_factory=RateSettings)

    @classmethod
    def from_mapping(cls, values):
        values = dict(values)
        if "seed" not in values:
            raise ConfigError("seed is mandatory")
        seed = _coerce(int, values.pop("seed"), "seed")
        output_dir = values.pop("output.dir", None) or values.pop("output_dir", None)
        if not output_dir:
            raise ConfigError("output.dir is mandatory")
        sections = {name: {} for name in SECTIONS}
        for key, raw in values.items():
            section, _, name = key.partition(".")
            if section not in SECTIONS:
                raise ConfigError(f"unknown config key {key!r}")
            kinds = {f.name: f.type for f in fields(SECTIONS[section])}
            if name not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            sections[section][name] = _coerce(kinds[name], raw, key)
        built = {name: SECTIONS[name](**kw) for name, kw in sections.items()}
        cfg = cls(seed=seed, output_dir=output_dir, **built)
        cfg.validate()
        return cfg

    @classmethod
    def read(cls, path):
        return cls.from_mapping(read_kv(path))

    def validate(self):
        if not self.input.path:
            raise ConfigError("input.path is mandatory")
        if self.input.format not in ("jsonl", "csv"):
            raise ConfigError(f"input.format must be jsonl or csv, not {self.input.format!r}")
        if self.rates.censor not in ("last_pub", "window_end"):
            raise ConfigError(f"rates.censor must be last_pub or window_end, not {self.rates.censor!r}")
        if self.disciplines.k < 2:
            raise ConfigError("disciplines.k must be at least 2")
        parse_cohorts(self.rates.cohorts)

    def to_flat(self):
        """Flat namespaced mapping; round-trips through ``from_mapping``."""
        out = {"seed": self.seed, "output.dir": self.output_dir}
        for name in SECTIONS:
            for key, value in asdict(getattr(self, name)).items():
                out[f"{name}.{key}"] = value
        return out


def parse_cohorts(text):
    from .rates import Cohort

    cohorts = []
    for part in text.split(","):
        part = part.strip()
        start, sep, end = part.partition("-")
        if not sep:
            raise ConfigError(f"bad cohort {part!r}; expected START-END")
        try:
            start, end = int(start), int(end)
        except ValueError:
            raise ConfigError(f"bad cohort {part!r}; expected START-END") from None
        if start > end:
            raise ConfigError(f"empty cohort {part!r}")
        cohorts.append(Cohort(part, start, end))
    return tuple(cohorts)
