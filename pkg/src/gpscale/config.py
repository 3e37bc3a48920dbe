"""Experiment configuration: one serializable record of everything a
sweep needs, loadable from a flat-key TOML file and hashable for
provenance headers.

The hash covers every field that can change a result; the output
directory is deliberately excluded so moving results does not change
their headers.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import InvalidArgumentError
from .kernels import FBM, BrownianMotion, IntegratedFBM, Matern, OrnsteinUhlenbeck
from .partitions import equispaced, quasi_uniform_random
from .sampling import DEFAULT_MAX_CHOLESKY, process_from_spec

__all__ = [
    "ExperimentConfig",
    "load_config",
    "config_from_mapping",
    "config_hash",
    "kernel_from_spec",
    "partition_for",
    "process_for",
]

PROCESS_KINDS = ("bm", "ou", "fbm", "ifbm", "iifbm", "sinestep", "maternmix")
PROCESS_PARAM_KEYS = ("hurst", "lam", "refinement", "nu", "rho", "terms")
PARTITION_KINDS = ("equispaced", "quasi_uniform")
SAMPLERS = ("cholesky", "circulant")
STATISTICS = ("median", "mean")

# accepted flat-key spellings in TOML files
FIELD_ALIASES = {"partition": "partition_kind"}


def validate_estimator(name):
    if name in ("ml", "cv", "icv", "qv"):
        return name
    if name.startswith("lpo:"):
        try:
            p = int(name.split(":", 1)[1])
        except ValueError:
            raise InvalidArgumentError(f"bad LPO estimator spec {name!r}") from None
        if p < 1:
            raise InvalidArgumentError(f"LPO order must be >= 1, got {p}")
        return name
    raise InvalidArgumentError(
        f"unknown estimator {name!r}; expected ml, cv, icv, qv or lpo:p"
    )


@dataclass(frozen=True)
class ExperimentConfig:
    process: str = "bm"
    process_params: dict = field(default_factory=dict)
    kernel: str = "bm"
    estimators: tuple = ("cv", "ml")
    partition_kind: str = "equispaced"
    c_qu: float = 2.0
    partition_seed: int = 0
    domain_length: float = 1.0
    n_grid: tuple = (64, 128, 256, 512, 1024, 2048, 4096)
    m: int = 100
    seed: int = 20260816
    out_dir: str = "out"
    statistic: str = "median"
    drop_smallest: int = 1
    grid_depth: int = 4
    icv_boundary: int = 1
    sampler: str = "cholesky"
    max_cholesky: int = DEFAULT_MAX_CHOLESKY
    jitter: float = 0.0

    def __post_init__(self):
        # frozen dataclass: normalized fields go through object.__setattr__
        object.__setattr__(self, "process", str(self.process).lower())
        if self.process not in PROCESS_KINDS:
            raise InvalidArgumentError(f"unknown process {self.process!r}")
        for key in self.process_params:
            if key not in PROCESS_PARAM_KEYS:
                raise InvalidArgumentError(f"unknown process parameter {key!r}")
        object.__setattr__(
            self, "estimators", tuple(validate_estimator(str(e).lower()) for e in self.estimators)
        )
        if not self.estimators:
            raise InvalidArgumentError("estimator list is empty")
        if self.partition_kind not in PARTITION_KINDS:
            raise InvalidArgumentError(f"unknown partition kind {self.partition_kind!r}")
        if self.statistic not in STATISTICS:
            raise InvalidArgumentError(f"statistic must be one of {STATISTICS}")
        if self.sampler not in SAMPLERS:
            raise InvalidArgumentError(f"sampler must be one of {SAMPLERS}")
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise InvalidArgumentError("n_grid must hold positive integers")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise InvalidArgumentError("n_grid must be strictly increasing")
        if self.m < 1:
            raise InvalidArgumentError("replication count m must be >= 1")
        if self.c_qu < 1.0:
            raise InvalidArgumentError("c_qu must be >= 1")
        if self.domain_length <= 0.0:
            raise InvalidArgumentError("domain_length must be positive")
        if self.drop_smallest < 0:
            raise InvalidArgumentError("drop_smallest must be >= 0")
        if self.grid_depth < 1:
            raise InvalidArgumentError("grid_depth must be >= 1")
        if self.icv_boundary < 1:
            raise InvalidArgumentError("icv_boundary must be >= 1")
        if self.jitter < 0.0:
            raise InvalidArgumentError("jitter must be >= 0")

    def replace(self, **updates):
        data = asdict(self)
        data.update(updates)
        return ExperimentConfig(**data)


def config_from_mapping(raw):
    """Build a config from a flat key/value mapping (e.g. parsed TOML).

    Process parameters (hurst, lam, nu, ...) may be given as top-level
    keys; unknown keys are rejected rather than ignored.
    """
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs = {}
    params = {}
    for key, value in raw.items():
        key = FIELD_ALIASES.get(key, key)
        if key in PROCESS_PARAM_KEYS:
            params[key] = value
        elif key == "process_params":
            params.update(value)
        elif key in known:
            kwargs[key] = value
        else:
            raise InvalidArgumentError(f"unknown config key {key!r}")
    if params:
        kwargs["process_params"] = params
    return ExperimentConfig(**kwargs)


def load_config(path):
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise InvalidArgumentError(f"bad TOML in {path}: {exc}") from None
    return config_from_mapping(raw)


def config_hash(config):
    """12-hex-digit digest of every result-relevant field."""
    data = asdict(config)
    data.pop("out_dir")
    payload = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def kernel_from_spec(spec):
    """Parse colon-separated kernel specs: bm, fbm:H, ifbm:H, ou:LAM,
    matern:NU or matern:NU:RHO."""
    parts = str(spec).lower().split(":")
    name, args = parts[0], parts[1:]
    try:
        if name == "bm" and not args:
            return BrownianMotion()
        if name == "fbm" and len(args) == 1:
            return FBM(float(args[0]))
        if name == "ifbm" and len(args) == 1:
            return IntegratedFBM(float(args[0]))
        if name == "ou" and len(args) == 1:
            return OrnsteinUhlenbeck(float(args[0]))
        if name == "matern" and len(args) in (1, 2):
            rho = float(args[1]) if len(args) == 2 else 1.0
            return Matern(float(args[0]), rho)
    except ValueError:
        raise InvalidArgumentError(f"bad kernel spec {spec!r}") from None
    raise InvalidArgumentError(f"bad kernel spec {spec!r}")


def partition_for(config, n):
    if config.partition_kind == "equispaced":
        return equispaced(n, config.domain_length)
    return quasi_uniform_random(n, config.domain_length, config.c_qu, config.partition_seed)


def process_for(config):
    return process_from_spec(config.process, **config.process_params)
