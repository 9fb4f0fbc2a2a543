"""Scenario configuration: nested YAML sections with dotted-key overrides."""

import copy
from dataclasses import dataclass

import numpy as np
import yaml

from .aero import WagnerCoefficients, assemble_system, build_strips, elliptic_chord
from .control import ControllerConfig
from .vehicle import AerobatParams, GuardParams

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "sim": {
        "dt_plant": 1.0e-4,
        "control_rate": 500.0,
        "duration": 10.0,
        "seed": 0,
        "sensor_noise_std": 0.0,
        "gravity": 9.8,
        "enable_thrusters": True,
        "enable_aero": True,
        "enable_bands": True,
        "output_dir": None,
        "log_strips": True,
        "compiled": True,
    },
    "initial": {
        "guard_position": [0.05, 0.0, 0.0],
        "guard_euler": [0.0872664626, 0.0, 0.0],
        "guard_velocity": [0.0, 0.0, 0.0],
        "guard_omega": [0.0, 0.0, 0.0],
        "aerobat_at_equilibrium": True,
        "aerobat_offset": [0.0, 0.0, 0.0],
    },
    "gait": {
        "frequency": 5.0,
        "proximal_amplitude": 0.6108652382,
        "distal_amplitude": 0.7853981634,
        "fold_phase": 1.5707963268,
        "proximal_mean": 0.0,
        "distal_mean": 0.7853981634,
    },
    "guard": {
        "mass": 0.10,
        "inertia": [4.0e-4, 4.0e-4, 7.0e-4],
        "arm_x": 0.15,
        "arm_y": 0.15,
        "arm_z": 0.20,
        "f_max": 0.6,
        "f_min": 0.0,
        "yaw_thrusters_vertical": True,
        "band_anchors": [[0.03, 0.02, 0.0], [0.03, -0.02, 0.0], [-0.03, 0.02, 0.0], [-0.03, -0.02, 0.0]],
    },
    "aerobat": {
        "torso_mass": 0.030,
        "torso_inertia": [6.3e-6, 1.8e-5, 2.0e-5],
        "proximal_mass": 0.003,
        "distal_mass": 0.002,
        "shoulder_offset": 0.02,
        "proximal_length": 0.07,
        "distal_length": 0.08,
        "band_stiffness": 8.0,
        "band_damping": 0.05,
        "band_rest_length": 0.0,
        "band_attach": [[0.03, 0.02, 0.0], [0.03, -0.02, 0.0], [-0.03, 0.02, 0.0], [-0.03, -0.02, 0.0]],
        "flap_limits": [-1.2, 1.2],
        "fold_limits": [-0.2, 1.8],
    },
    "aero": {
        "strips": 8,
        "fourier_order": None,
        "root_chord": 0.08,
        "rho": 1.225,
        "cd0": 0.1,
        "cd90": 2.0,
        "e_variant": "autonomous",
        "wagner": {
            "psi1": 0.165,
            "psi2": 0.335,
            "eps1": 0.0455,
            "eps2": 0.3,
            "form": "jones",
            "time_scale": 2.0,
        },
    },
    "observer": {
        "omega0": 10.0,
        "ceiling": 1.0,
    },
    "controller": {
        "kp_pos": 4.0,
        "kd_pos": 4.0,
        "kp_att": 100.0,
        "kd_att": 20.0,
        "setpoint": [0.0, 0.0, 0.0],
        "yaw_setpoint": 0.0,
        "max_tilt": 0.35,
    },
    "acceptance": {
        "window": 5.0,
        "rms_position_max": 0.01,
        "max_attitude_deg": 3.0,
        "max_saturation_fraction": 0.2,
    },
}


def _flat_keys(d, prefix=""):
    keys = []
    for k, v in d.items():
        path = f"{prefix}{k}"
        if isinstance(v, dict):
            keys.extend(_flat_keys(v, path + "."))
        else:
            keys.append(path)
    return keys


def valid_keys():
    return _flat_keys(DEFAULTS)


def _merge(base, update, prefix=""):
    for k, v in update.items():
        path = f"{prefix}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {path!r}; valid keys: {', '.join(valid_keys())}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {path!r} must be a section")
            _merge(base[k], v, path + ".")
        else:
            base[k] = v


def parse_override(text):
    """``"observer.omega0=20"`` -> ``("observer.omega0", 20)``."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if key not in valid_keys():
        raise ConfigError(f"unknown override key {key!r}; valid keys: {', '.join(valid_keys())}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value of override {key!r}: {exc}") from exc
    if isinstance(value, str):
        # YAML 1.1 reads exponent forms without a dot ("1e12") as strings
        try:
            value = float(value)
        except ValueError:
            pass
    return key, value


def apply_overrides(data, overrides):
    data = copy.deepcopy(data)
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        if key not in valid_keys():
            raise ConfigError(f"unknown override key {key!r}; valid keys: {', '.join(valid_keys())}")
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node[p]
        node[parts[-1]] = value
    return data


@dataclass
class GaitParams:
    frequency: float
    proximal_amplitude: float
    distal_amplitude: float
    fold_phase: float
    proximal_mean: float
    distal_mean: float

    def __post_init__(self):
        if not self.frequency > 0.0:
            raise ConfigError("gait frequency must be positive")


def _diag_or_matrix(x):
    a = np.asarray(x, dtype=float)
    return np.diag(a) if a.ndim == 1 else a


@dataclass
class SimConfig:
    """Validated scenario configuration (a nested dict plus typed builders)."""

    data: dict

    def __post_init__(self):
        self.validate()

    @classmethod
    def default(cls, overrides=()):
        return cls(apply_overrides(copy.deepcopy(DEFAULTS), overrides))

    @classmethod
    def from_dict(cls, raw, overrides=()):
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        version = raw.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        data = copy.deepcopy(DEFAULTS)
        _merge(data, raw)
        return cls(apply_overrides(data, overrides))

    @classmethod
    def load(cls, path, overrides=()):
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, overrides)

    def with_overrides(self, overrides):
        return SimConfig(apply_overrides(self.data, overrides))

    def get(self, dotted):
        node = self.data
        for p in dotted.split("."):
            node = node[p]
        return node

    def dump(self):
        return yaml.safe_dump(self.data, sort_keys=False)

    # -- typed views -------------------------------------------------------

    @property
    def sim(self):
        return self.data["sim"]

    @property
    def dt_plant(self):
        return float(self.sim["dt_plant"])

    @property
    def control_period(self):
        return 1.0 / float(self.sim["control_rate"])

    @property
    def substeps(self):
        return int(round(self.control_period / self.dt_plant))

    @property
    def n_ticks(self):
        return int(round(float(self.sim["duration"]) / self.control_period))

    def validate(self):
        try:
            dt = self.dt_plant
            if not dt > 0:
                raise ConfigError("sim.dt_plant must be positive")
            if not float(self.sim["control_rate"]) > 0:
                raise ConfigError("sim.control_rate must be positive")
            ratio = self.control_period / dt
            if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
                raise ConfigError("sim.dt_plant must divide the control period")
            dur = float(self.sim["duration"])
            if dur < 0 or abs(dur / self.control_period - round(dur / self.control_period)) > 1e-6:
                raise ConfigError("sim.duration must be a non-negative multiple of the control period")
            self.guard_params()
            ap = self.aerobat_params()
            g = self.gait_params()
            lo, hi = ap.flap_limits
            if not (lo <= g.proximal_mean - abs(g.proximal_amplitude)
                    and g.proximal_mean + abs(g.proximal_amplitude) <= hi):
                raise ConfigError("proximal gait exceeds flap_limits")
            lo, hi = ap.fold_limits
            if not (lo <= g.distal_mean - abs(g.distal_amplitude)
                    and g.distal_mean + abs(g.distal_amplitude) <= hi):
                raise ConfigError("distal gait exceeds fold_limits")
            self.wagner()
            self.controller_config()
            if not float(self.get("observer.omega0")) > 0:
                raise ConfigError("observer.omega0 must be positive")
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    def guard_params(self):
        g = dict(self.data["guard"])
        g["inertia"] = _diag_or_matrix(g["inertia"])
        g["band_anchors"] = np.asarray(g["band_anchors"], float)
        return GuardParams(**g)

    def aerobat_params(self):
        a = dict(self.data["aerobat"])
        a["torso_inertia"] = _diag_or_matrix(a["torso_inertia"])
        a["band_attach"] = np.asarray(a["band_attach"], float)
        a["flap_limits"] = tuple(a["flap_limits"])
        a["fold_limits"] = tuple(a["fold_limits"])
        return AerobatParams(**a)

    def gait_params(self):
        return GaitParams(**{k: float(v) for k, v in self.data["gait"].items()})

    def wagner(self):
        return WagnerCoefficients(**self.data["aero"]["wagner"])

    def strip_geometry(self):
        ap = self.aerobat_params()
        l = ap.semi_span
        return build_strips(int(self.get("aero.strips")), l, elliptic_chord(float(self.get("aero.root_chord")), l))

    def aero_system(self):
        n = self.get("aero.fourier_order")
        return assemble_system(self.strip_geometry(), self.wagner(),
                               n=None if n is None else int(n), e_variant=self.get("aero.e_variant"))

    def controller_config(self):
        return ControllerConfig(**self.data["controller"])
