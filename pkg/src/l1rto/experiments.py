"""Experiment configuration and problem assembly for the CLI.

Three problems are supported: 1-D box-kernel deconvolution with a total
variation prior (``deconv_tv``) or a Haar-Besov prior (``deconv_besov``), and
the 2-D elliptic coefficient problem with a tensorized Besov prior
(``elliptic_besov2d``). Physical parameters have no defaults. Setting
``"prior": "gaussian"`` swaps the l1 prior for a standard normal one, which
makes the RTO proposal exact and is mainly useful as a sanity check.
"""
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import fem, models
from .errors import ConfigError
from .lsq import LsqOptions
from .priors import L1Prior
from .transforms import IdentityTransform

PROBLEMS = ("deconv_tv", "deconv_besov", "elliptic_besov2d")
# spawn key for measurement noise, kept clear of the sampler's streams 0..n_samps
DATA_STREAM = 2 ** 62
MAX_SEED = 2 ** 64 - 1


def _pow2(k):
    return k >= 2 and k & (k - 1) == 0


@dataclass
class ExperimentConfig:
    problem: str
    n: int
    sigma_obs: float
    lam: float | None
    m: int | None = None
    s: float = 1.0
    n_samps: int = 1000
    seed: int = 0
    parallelism: int = 1
    truth: str = "default"
    bump_width: float = fem.BUMP_WIDTH
    fine_side: int = 128
    weights: str = "exact"
    prior: str = "l1"
    data: str = "discrete"
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        for name in ("n", "n_samps", "seed", "parallelism", "fine_side"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer")
        if self.m is not None and (isinstance(self.m, bool) or not isinstance(self.m, (int, np.integer))):
            raise ConfigError("m must be an integer")
        if not (math.isfinite(self.sigma_obs) and self.sigma_obs >= 0):
            raise ConfigError("sigma_obs must be finite and non-negative")
        if self.prior not in ("l1", "gaussian"):
            raise ConfigError("prior must be 'l1' or 'gaussian'")
        if self.lam is None:
            if self.prior == "l1":
                raise ConfigError("lambda is required for the l1 prior")
        elif not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigError("lambda must be positive")
        if self.n_samps < 1 or self.parallelism < 1:
            raise ConfigError("n_samps and parallelism must be at least 1")
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.weights not in ("exact", "corrected"):
            raise ConfigError("weights must be 'exact' or 'corrected'")
        try:
            LsqOptions(**self.solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad solver options: {exc}") from exc
        if self.problem == "deconv_tv":
            if self.n < 2:
                raise ConfigError("deconv_tv needs n >= 2")
        elif self.problem == "deconv_besov":
            if not _pow2(self.n):
                raise ConfigError(f"deconv_besov needs n a power of 2, got {self.n}")
        else:
            side = math.isqrt(self.n)
            if side * side != self.n or not _pow2(side):
                raise ConfigError(f"elliptic_besov2d needs n = (2^l)^2, got {self.n}")
            if self.m not in (None, self.n):
                raise ConfigError("elliptic_besov2d observes every node, so m must equal n")
            if not self.bump_width > 0 or self.fine_side < 2:
                raise ConfigError("bump_width must be positive and fine_side >= 2")
        if self.problem != "elliptic_besov2d":
            if self.m is None or self.m < 1:
                raise ConfigError("deconvolution problems need m >= 1")
        if self.data not in ("discrete", "continuum"):
            raise ConfigError("data must be 'discrete' or 'continuum'")
        if self.data == "continuum" and (self.problem == "elliptic_besov2d" or self._truth_kind() not in models.TRUTH_PIECES):
            raise ConfigError("continuum data needs a deconvolution problem with a built-in truth")
        if self.problem != "deconv_tv" and not self.s > 0:
            raise ConfigError("Besov order s must be positive")

    def _truth_kind(self):
        if self.truth == "default":
            return "square_pulse" if self.problem == "deconv_tv" else "two_level"
        return self.truth

    @property
    def side(self):
        return math.isqrt(self.n)

    @property
    def n_obs(self):
        return self.n if self.problem == "elliptic_besov2d" else self.m

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        required = ("problem", "n", "sigma_obs") + (() if data.get("prior") == "gaussian" else ("lambda",))
        missing = [k for k in required if k not in data]
        if missing:
            raise ConfigError(f"config is missing required keys: {', '.join(missing)}")
        data["lam"] = data.pop("lambda", None)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for k in ("sigma_obs", "lam", "s", "bump_width"):
            if k in data and not (k == "lam" and data[k] is None):
                if isinstance(data[k], bool) or not isinstance(data[k], (int, float)):
                    raise ConfigError(f"{k} must be a number")
                data[k] = float(data[k])
        return cls(**data)

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    def lsq_options(self):
        return LsqOptions(**self.solver)


def build_model(cfg):
    if cfg.problem == "elliptic_besov2d":
        return fem.EllipticModel(cfg.side, cfg.sigma_obs, cfg.bump_width)
    return models.ConvolutionModel(cfg.n, cfg.m, cfg.sigma_obs)


def build_prior(cfg):
    if cfg.problem == "deconv_tv":
        return L1Prior.tv(cfg.n, cfg.lam)
    if cfg.problem == "deconv_besov":
        return L1Prior.besov1d(cfg.n, cfg.lam, cfg.s)
    return L1Prior.besov2d(cfg.n, cfg.lam, cfg.s)


def build_transform(cfg):
    """Reference-to-parameter map for the configured prior."""
    if cfg.prior == "gaussian":
        return IdentityTransform(cfg.n)
    return build_prior(cfg).transform()


def build_truth(cfg):
    if cfg.problem == "elliptic_besov2d":
        if cfg.truth == "default":
            return fem.default_truth(cfg.side)
        return read_grid_csv(cfg.truth, cfg.side)
    kind = cfg._truth_kind()
    if kind in models.TRUTH_PIECES:
        return models.make_truth(kind, cfg.n)
    return models.make_truth("file", cfg.n, kind)


def synthesize(cfg, model, truth):
    if cfg.problem == "elliptic_besov2d":
        return fem.synthesize_data(model, truth, cfg.seed, cfg.fine_side, stream_id=DATA_STREAM)
    if cfg.data == "continuum":
        return models.generate_continuum_data(cfg._truth_kind(), cfg.m, cfg.sigma_obs, cfg.seed, stream_id=DATA_STREAM)
    return models.generate_data(model, truth, cfg.seed, stream_id=DATA_STREAM)


def read_grid_csv(path, side):
    """``side x side`` grid CSV (row ``j`` holds ``y = j h``) as a nodal vector."""
    try:
        X = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError:
        X = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
    if X.shape != (side, side):
        raise ConfigError(f"truth grid {path} has shape {X.shape}, expected ({side}, {side})")
    return X.ravel()


def write_grid_csv(path, values, side):
    X = np.asarray(values, dtype=float).reshape(side, side)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(f"x{i}" for i in range(side)) + "\n")
        for row in X:
            fh.write(",".join("%.17g" % v for v in row) + "\n")
