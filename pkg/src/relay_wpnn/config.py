"""Experiment and training configuration, config-file parsing and config hashing.

Config files are INI documents. Every value is addressed by a flat ``section.key``
name, for example::

    [model]
    scheme = relay_nonlinear
    snr_db = -20
    m = 16

    [train]
    epochs = 30
    seed = 1
"""

import configparser
import dataclasses
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field

from relay_wpnn.linalg import DEFAULT_RIDGE, ConfigurationError

SPEED_OF_LIGHT = 299_792_458.0


class Scheme(str, enum.Enum):
    RELAY_NONLINEAR = "relay_nonlinear"
    RELAY_LINEAR = "relay_linear"
    RELAY_NO_CP = "relay_no_cp"
    NO_OTA_NONLINEAR = "no_ota_nonlinear"
    NO_OTA_LINEAR = "no_ota_linear"

    @property
    def over_the_air(self):
        return self in (Scheme.RELAY_NONLINEAR, Scheme.RELAY_LINEAR, Scheme.RELAY_NO_CP)

    @property
    def nonlinear(self):
        return self not in (Scheme.RELAY_LINEAR, Scheme.NO_OTA_LINEAR)

    @property
    def channel_processing(self):
        return self in (Scheme.RELAY_NONLINEAR, Scheme.RELAY_LINEAR)

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ConfigurationError(f"unknown scheme {value!r}; expected one of: {names}") from None


@dataclass(frozen=True)
class RappParams:
    p: float = 2.0
    x_sat: float = 1.0

    def __post_init__(self):
        if not (self.p > 0 and self.x_sat > 0):
            raise ConfigurationError(f"Rapp parameters must be positive, got p={self.p}, x_sat={self.x_sat}")


@dataclass(frozen=True)
class StackGeometry:
    """Physical placement of the antenna arrays and metasurface layers (all in meters)."""

    carrier_hz: float = 2.2e9
    antenna_gap_wavelengths: float = 10.0
    layer_gap_wavelengths: float = 2.0
    element_spacing_wavelengths: float = 0.5
    element_area_wavelengths2: float = 0.25

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigurationError(f"geometry.{f.name} must be strictly positive")

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def antenna_to_first_layer(self):
        return self.antenna_gap_wavelengths * self.wavelength

    @property
    def inter_layer(self):
        return self.layer_gap_wavelengths * self.wavelength

    @property
    def element_spacing(self):
        return self.element_spacing_wavelengths * self.wavelength

    @property
    def element_area(self):
        return self.element_area_wavelengths2 * self.wavelength**2


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: Scheme = Scheme.RELAY_NONLINEAR
    n_t: int = 14
    n_s: int = 14
    n_r: int = 14
    m: int = 16
    layers: int = 1
    channels: int = 1
    height: int = 28
    width: int = 28
    num_classes: int = 10
    snr_db: float = 0.0
    normalize_power: bool = True
    pa: RappParams = field(default_factory=RappParams)
    activation: RappParams = field(default_factory=RappParams)
    ridge: float = DEFAULT_RIDGE
    # False: G_r is N_s x N_s fading followed by a near-field W_1^r (M x N_s).
    # True: G_r is M x N_s fading straight onto the first receive layer, no W_1^r.
    rx_fading_to_surface: bool = False
    geometry: StackGeometry = field(default_factory=StackGeometry)

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        for name in ("n_t", "n_s", "n_r", "m", "layers", "channels", "height", "width", "num_classes"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise ConfigurationError(f"model.{name} must be a positive integer, got {value!r}")
        if self.ridge < 0:
            raise ConfigurationError("model.ridge must be nonnegative")

    @property
    def pixels(self):
        return self.channels * self.height * self.width

    @property
    def k(self):
        """Columns of every signal matrix, C*H*W / (2 N_t) rounded up.

        When 2 N_t does not divide the pixel count the flattened image is zero-padded.
        """
        return -(-self.pixels // (2 * self.n_t))

    @property
    def padding(self):
        return 2 * self.n_t * self.k - self.pixels

    @property
    def sigma2(self):
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def relay_input_dim(self):
        """Row count of the signal the relay gain matrix Z multiplies."""
        return self.m if self.scheme.channel_processing else self.n_s

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    epochs: int = 30
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    channel_policy: str = "fixed"
    eval_draws: int = 10
    eval_chunk: int = 2000

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs < 0 or self.eval_draws <= 0 or self.lr <= 0:
            raise ConfigurationError("train.batch_size, train.eval_draws and train.lr must be positive")
        if self.channel_policy not in ("fixed", "per_batch"):
            raise ConfigurationError(f"unknown train.channel_policy {self.channel_policy!r}")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


# -- flat key schema -------------------------------------------------------------

_MODEL_KEYS = {
    "scheme": str, "n_t": int, "n_s": int, "n_r": int, "m": int, "layers": int,
    "channels": int, "height": int, "width": int, "num_classes": int, "snr_db": float,
    "normalize_power": bool, "ridge": float, "rx_fading_to_surface": bool,
}
_RAPP_KEYS = {"p": float, "x_sat": float}
_GEOMETRY_KEYS = {f.name: float for f in dataclasses.fields(StackGeometry)}
_TRAIN_KEYS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}

SCHEMA = {
    **{f"model.{k}": t for k, t in _MODEL_KEYS.items()},
    **{f"pa.{k}": t for k, t in _RAPP_KEYS.items()},
    **{f"activation.{k}": t for k, t in _RAPP_KEYS.items()},
    **{f"geometry.{k}": t for k, t in _GEOMETRY_KEYS.items()},
    **{f"train.{k}": t for k, t in _TRAIN_KEYS.items()},
}


def _convert(key, raw, kind):
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"{key}: expected a boolean, got {raw!r}")
    try:
        value = kind(raw)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: expected {kind.__name__}, got {raw!r}") from None
    if kind is float and not math.isfinite(value):
        raise ConfigurationError(f"{key}: value must be finite")
    return value


def build_configs(flat):
    """Turn a ``{"section.key": value}`` mapping into ``(ExperimentConfig, TrainConfig)``."""
    unknown = sorted(set(flat) - set(SCHEMA))
    if unknown:
        raise ConfigurationError("unknown config keys: " + ", ".join(unknown))
    values = {key: _convert(key, raw, SCHEMA[key]) for key, raw in flat.items()}

    def section(name):
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in values.items() if k.startswith(prefix)}

    model = section("model")
    exp = ExperimentConfig(
        **model,
        pa=RappParams(**section("pa")),
        activation=RappParams(**section("activation")),
        geometry=StackGeometry(**section("geometry")),
    )
    return exp, TrainConfig(**section("train"))


def read_config_file(path):
    parser = configparser.ConfigParser(interpolation=None)
    with open(path, encoding="utf-8") as fh:
        try:
            parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed config file {path}: {exc}") from None
    flat = {}
    for sect in parser.sections():
        for key, value in parser.items(sect):
            flat[f"{sect}.{key}"] = value
    return flat


def flatten(exp, train=None):
    """Inverse of :func:`build_configs`; every resolved value under its flat key."""
    flat = {}
    for key in _MODEL_KEYS:
        value = getattr(exp, key)
        flat[f"model.{key}"] = value.value if isinstance(value, Scheme) else value
    for key in _RAPP_KEYS:
        flat[f"pa.{key}"] = getattr(exp.pa, key)
        flat[f"activation.{key}"] = getattr(exp.activation, key)
    for key in _GEOMETRY_KEYS:
        flat[f"geometry.{key}"] = getattr(exp.geometry, key)
    if train is not None:
        for key in _TRAIN_KEYS:
            flat[f"train.{key}"] = getattr(train, key)
    return flat


def write_config_file(path, exp, train=None):
    parser = configparser.ConfigParser(interpolation=None)
    for key, value in flatten(exp, train).items():
        sect, name = key.split(".", 1)
        if not parser.has_section(sect):
            parser.add_section(sect)
        parser.set(sect, name, repr(value) if isinstance(value, float) else str(value))
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def config_hash(exp, train):
    """Short stable digest of the fully resolved configuration (seed included)."""
    text = json.dumps(flatten(exp, train), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
