"""
Run configuration for the rf2pose pipeline commands.

A run configuration is a set of named sections. On disk it is a flat
key-value text file::

    # comments start with a hash
    data.source = wifi
    diffusion.steps = 1000
    hpe.lambda = 0.5

Command-line overrides use the same ``section.key=value`` form and win over
the file. Stage hashes over the relevant sections are embedded in every
artifact so later stages can refuse artifacts produced under another
configuration.
"""
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Optional, Tuple

from . import settings
from ..core.errors import ConfigurationError, ParseError
from ..utils.helpers import stable_hash

MODEL_KINDS = ("ddpm", "ddim", "cgan")
CONDITION_MODES = ("skeleton", "joints")
SPLIT_MODES = ("random", "cross-subject", "cross-environment")
REFERENCES = ("synthesized", "ground_truth")

# Diffusion settings read only when sampling with DDIM
SAMPLER_KEYS = ("ddim_steps", "eta")

# Keys accepted in files and overrides that are not valid Python identifiers
KEY_ALIASES = {"hpe.lambda": "hpe.lam"}


@dataclass
class DataSection:
    source: str = "synthetic"
    root: str = settings.DATA_ROOT
    split_mode: str = "random"
    held_out: Tuple[str, ...] = ()
    split_seed: int = 0
    normalize: bool = True
    recenter: bool = False
    skeleton_file: str = ""


@dataclass
class ModelSection:
    kind: str = "ddpm"
    condition: str = "skeleton"
    embed_width: int = settings.EMBED_WIDTH
    time_width: int = settings.TIME_WIDTH
    filters: Tuple[int, ...] = settings.BACKBONE_FILTERS
    kernels: Tuple[int, ...] = settings.BACKBONE_KERNELS


@dataclass
class DiffusionSection:
    steps: int = settings.DIFFUSION_STEPS
    beta_min: float = settings.BETA_MIN
    beta_max: float = settings.BETA_MAX
    ddim_steps: int = settings.DDIM_STEPS
    eta: float = settings.DDIM_ETA
    lr: float = settings.DIFFUSION_LR


@dataclass
class GanSection:
    gen_lr: float = settings.GENERATOR_LR
    disc_lr: float = settings.DISCRIMINATOR_LR
    n_critic: int = settings.N_CRITIC
    gp_weight: float = settings.GRADIENT_PENALTY


@dataclass
class GenTrainSection:
    epochs: int = settings.GEN_EPOCHS
    batch_size: int = settings.GEN_BATCH_SIZE
    seed: int = 0


@dataclass
class CounterfactualSection:
    shared_noise: bool = True
    reference: str = "synthesized"
    seed: int = 0


@dataclass
class HpeSection:
    lam: float = settings.HPE_LAMBDA
    lr: float = settings.HPE_LR
    epochs: int = settings.HPE_EPOCHS
    batch_size: int = settings.HPE_BATCH_SIZE
    seed: int = 0
    encoder_filters: int = settings.ENCODER_FILTERS
    decoder_width: int = settings.DECODER_WIDTH
    decoder_pool: int = settings.DECODER_POOL
    decoder_hidden: int = settings.DECODER_HIDDEN
    decoder_only: bool = False


@dataclass
class ExperimentSection:
    repeats: int = 1
    lambda_sweep: Tuple[float, ...] = ()


@dataclass
class MetricsSection:
    pa_scale: bool = True


@dataclass
class PathsSection:
    output_dir: str = settings.OUTPUT_DIR


@dataclass
class RunConfig:
    """All settings of one pipeline run, grouped by section."""

    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    gan: GanSection = field(default_factory=GanSection)
    gen_train: GenTrainSection = field(default_factory=GenTrainSection)
    counterfactual: CounterfactualSection = field(default_factory=CounterfactualSection)
    hpe: HpeSection = field(default_factory=HpeSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def set_value(self, dotted_key: str, raw: str) -> None:
        """Set ``section.key`` from its text form, coercing to the field type."""
        dotted_key = KEY_ALIASES.get(dotted_key.strip(), dotted_key.strip())
        if "." not in dotted_key:
            raise ConfigurationError(f"Config key '{dotted_key}' needs a section prefix")
        section_name, key = dotted_key.split(".", 1)
        section = getattr(self, section_name, None)
        if section is None or not hasattr(section, "__dataclass_fields__"):
            raise ConfigurationError(f"Unknown config section '{section_name}'")
        if key not in section.__dataclass_fields__:
            raise ConfigurationError(f"Unknown config key '{dotted_key}'")
        default = getattr(type(section)(), key)
        setattr(section, key, _coerce(dotted_key, raw, default))

    def validate(self) -> "RunConfig":
        """Check every field against its allowed range; return self."""
        _check(self.data.source in settings.SOURCES, f"data.source must be one of {sorted(settings.SOURCES)}")
        _check(self.data.split_mode in SPLIT_MODES, f"data.split_mode must be one of {SPLIT_MODES}")
        _check(self.model.kind in MODEL_KINDS, f"model.kind must be one of {MODEL_KINDS}")
        _check(self.model.condition in CONDITION_MODES, f"model.condition must be one of {CONDITION_MODES}")
        _check(self.model.embed_width >= 1, "model.embed_width must be positive")
        _check(self.model.time_width >= 2 and self.model.time_width % 2 == 0,
               "model.time_width must be a positive even number")
        _check(len(self.model.filters) == len(self.model.kernels) and len(self.model.filters) > 0,
               "model.filters and model.kernels must have the same non-zero length")
        _check(all(k % 2 == 1 for k in self.model.kernels), "model.kernels must be odd")
        _check(self.diffusion.steps >= 1, "diffusion.steps must be at least 1")
        _check(0 < self.diffusion.beta_min < self.diffusion.beta_max < 1,
               "diffusion betas must satisfy 0 < beta_min < beta_max < 1")
        _check(1 <= self.diffusion.ddim_steps <= self.diffusion.steps,
               "diffusion.ddim_steps must lie in [1, diffusion.steps]")
        _check(self.diffusion.eta >= 0, "diffusion.eta must be non-negative")
        _check(self.gan.n_critic >= 1, "gan.n_critic must be at least 1")
        _check(self.gan.gp_weight >= 0, "gan.gp_weight must be non-negative")
        _check(self.counterfactual.reference in REFERENCES,
               f"counterfactual.reference must be one of {REFERENCES}")
        _check(self.hpe.lam >= 0, "hpe.lambda must be non-negative")
        _check(self.experiment.repeats >= 1, "experiment.repeats must be at least 1")
        _check(all(v >= 0 for v in self.experiment.lambda_sweep), "experiment.lambda_sweep values must be non-negative")
        for lr in (self.diffusion.lr, self.gan.gen_lr, self.gan.disc_lr, self.hpe.lr):
            _check(lr > 0, "learning rates must be positive")
        for epochs in (self.gen_train.epochs, self.hpe.epochs):
            _check(epochs >= 0, "epochs must be non-negative")
        for batch in (self.gen_train.batch_size, self.hpe.batch_size):
            _check(batch >= 1, "batch sizes must be positive")
        return self

    def generator_hash(self) -> str:
        """Hash of everything that shapes the generator checkpoint.

        ddpm and ddim sample from the same trained denoiser, so the sampler
        and its settings belong to the target hash instead.
        """
        data = asdict(self.data)
        data.pop("root")
        model = asdict(self.model)
        model["kind"] = self.generator_family()
        diffusion = asdict(self.diffusion)
        for key in SAMPLER_KEYS:
            diffusion.pop(key)
        return stable_hash({
            "data": data,
            "model": model,
            "diffusion": diffusion,
            "gan": asdict(self.gan),
            "gen_train": asdict(self.gen_train),
        })

    def generator_family(self) -> str:
        return "cgan" if self.model.kind == "cgan" else "ddpm"

    def sampler_settings(self) -> dict:
        sampler = {"kind": self.model.kind}
        if self.model.kind == "ddim":
            sampler.update({key: getattr(self.diffusion, key) for key in SAMPLER_KEYS})
        return sampler

    def targets_hash(self) -> str:
        """Hash of everything that shapes the regularization-target store."""
        return stable_hash({"generator": self.generator_hash(),
                            "sampler": self.sampler_settings(),
                            "counterfactual": asdict(self.counterfactual)})

    def estimator_hash(self) -> str:
        """Hash of everything that shapes a trained pose estimator."""
        return stable_hash({"targets": self.targets_hash(), "hpe": asdict(self.hpe)})

    def to_text(self) -> str:
        """Serialize to the flat key-value file format."""
        lines = []
        for section_field in fields(self):
            section = getattr(self, section_field.name)
            for key, value in asdict(section).items():
                name = "lambda" if (section_field.name, key) == ("hpe", "lam") else key
                if isinstance(value, (tuple, list)):
                    value = ",".join(str(v) for v in value)
                elif isinstance(value, bool):
                    value = "true" if value else "false"
                lines.append(f"{section_field.name}.{name} = {value}")
        return "\n".join(lines) + "\n"


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigurationError(message)


def _coerce(key: str, raw: str, default: Any) -> Any:
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [item.strip() for item in raw.split(",") if item.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(item) for item in items)
            if key == "experiment.lambda_sweep":
                return tuple(float(item) for item in items)
            return tuple(items)
        return raw
    except ValueError:
        raise ConfigurationError(f"Invalid value for '{key}': {raw!r}") from None


def parse_override(text: str) -> Tuple[str, str]:
    """Split a ``section.key=value`` override into key and raw value."""
    if "=" not in text:
        raise ConfigurationError(f"Override '{text}' must look like section.key=value")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def load_run_config(path: Optional[str] = None,
                    overrides: Iterable[Tuple[str, str]] = ()) -> RunConfig:
    """
    Build a validated RunConfig from an optional file plus overrides.

    Args:
        path (str, optional): Flat key-value config file
        overrides (iterable): (``section.key``, raw value) pairs applied last

    Returns:
        RunConfig: The validated configuration
    """
    config = RunConfig()
    if path:
        config_path = Path(path)
        if not config_path.exists():
            raise ConfigurationError(f"Config file not found: {config_path}")
        for line_number, line in enumerate(config_path.read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(config_path, f"line {line_number}: expected 'section.key = value'")
            key, value = line.split("=", 1)
            config.set_value(key, value)
    for key, value in overrides:
        config.set_value(key, value)
    return config.validate()
