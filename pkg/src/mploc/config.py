"""Experiment configuration files.

A config is a YAML mapping::

    master_seed: 7
    output_dir: runs
    parallelism: 1
    model:
      n: 1
      d: 1
      g: 10.0
      r: 6.0
      r0: 1
      u_amp: 1.0
      disorder: {kind: uniform, M: 1.0, rho: 1.0}
    schedule:
      mode: toy          # or strict
      beta: auto
    experiment:
      radius: 4
      samples: 200

Schedule entries may be ``auto`` to use the derived value.
"""

from dataclasses import asdict, dataclass, field

import yaml

from .errors import ConfigError, MplocError
from .model import DisorderSpec, ModelParams
from .schedule import derive_schedule, toy_schedule
from .stochastics import content_hash

MODEL_KEYS = {"n", "d", "g", "r", "r0", "u_amp", "M1", "diagonal_hopping", "disorder"}
DISORDER_KEYS = {"kind", "M", "rho"}
SCHEDULE_KEYS = {"mode", "N", "d", "rho", "p0", "eps_slack", "L0", "k_max", "beta",
                 "tau", "r", "tau_margin", "global_r"}
TOP_KEYS = {"model", "schedule", "experiment", "output_dir", "master_seed", "parallelism"}


@dataclass
class ExperimentConfig:
    model: dict
    schedule: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    output_dir: str = "runs"
    master_seed: int = 0
    parallelism: int = 1

    def to_dict(self):
        return asdict(self)

    def dump(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def hash(self):
        return content_hash(self.to_dict())

    def model_params(self):
        m = dict(self.model)
        dis = dict(m.pop("disorder", {}) or {})
        dis["seed"] = self.master_seed
        return ModelParams(**m, disorder=DisorderSpec(**dis))

    def build_schedule(self):
        """Strict or toy schedule from the ``schedule`` block."""
        s = {k: v for k, v in self.schedule.items() if v != "auto" and k != "global_r"}
        mode = s.pop("mode", "toy")
        N = s.pop("N", self.model.get("n", 1))
        d = s.pop("d", self.model.get("d", 1))
        rho = s.pop("rho", (self.model.get("disorder") or {}).get("rho", 1.0))
        M = (self.model.get("disorder") or {}).get("M", 1.0)
        if mode == "strict":
            p0 = s.pop("p0", 20 * N * d)
            for k in ("beta", "tau", "r", "tau_margin"):
                if k in s:
                    raise ConfigError(f"schedule.{k} cannot be overridden in strict mode")
            return derive_schedule(N, d, rho, p0, M=M, **s)
        if mode == "toy":
            return toy_schedule(N, d, rho=rho, M=M, **s)
        raise ConfigError(f"schedule.mode must be strict or toy, got {mode!r}")

    @property
    def global_r(self):
        v = self.schedule.get("global_r")
        return None if v in (None, "auto") else float(v)


def _check_keys(block, allowed, where):
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a mapping")
    extra = set(block) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def parse_config(text, source="<config>"):
    """Parse and validate config text.

    Raises
    ------
    ConfigError
        With the line number for YAML syntax errors.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"{where}: {getattr(exc, 'problem', None) or exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    _check_keys(data, TOP_KEYS, "config")
    if "model" not in data:
        raise ConfigError(f"{source}: missing 'model' block")
    _check_keys(data["model"], MODEL_KEYS, "model")
    _check_keys(data["model"].get("disorder") or {}, DISORDER_KEYS, "model.disorder")
    _check_keys(data.get("schedule") or {}, SCHEDULE_KEYS, "schedule")
    if not isinstance(data.get("experiment") or {}, dict):
        raise ConfigError(f"{source}: experiment must be a mapping")
    cfg = ExperimentConfig(
        model=data["model"],
        schedule=data.get("schedule") or {},
        experiment=data.get("experiment") or {},
        output_dir=str(data.get("output_dir", "runs")),
        master_seed=int(data.get("master_seed", 0)),
        parallelism=int(data.get("parallelism", 1)),
    )
    try:
        cfg.model_params()
        cfg.build_schedule()
    except ConfigError:
        raise
    except (TypeError, ValueError, MplocError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, str(path))
