"""Experiment configuration: INI file plus ``section.key=value`` overrides.

Every key has a declared type and default; unknown sections or keys are
rejected so that typos cannot silently fall back to defaults.
"""
from __future__ import annotations

import configparser
import copy
import hashlib
import json

from .errors import ConfigurationError
from .functionals import FDLParams
from .noise import NoiseSpec
from .spectral import DEFAULT_PAD, DomainSpec, build_basis
from .stochastic import RunSpec


def _bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s):
    t = s.strip().lower()
    return None if t in ("", "none", "auto") else float(t)


def _floats(s):
    return [float(x) for x in s.replace(",", " ").split()]


def _ints(s):
    return [int(x) for x in s.replace(",", " ").split()]


SCHEMA = {
    "domain": {
        "kind": (str, "torus"),
        "dimension": (int, 1),
        "mass_squared": (float, 1.0),
        "N": (int, 16),
        "pad": (int, DEFAULT_PAD),
    },
    "noise": {
        "profile": (str, "inverse_sq"),
        "K": (int, 4),
        "amplitude": (float, 1.0),
        "values": (_floats, []),
    },
    "run": {
        "alpha": (float, 0.2),
        "alphas": (_floats, [0.4, 0.2, 0.1]),
        "dt": (float, 0.02),
        "T": (float, 400.0),
        "burn_in": (_opt_float, None),
        "thin": (_opt_float, None),
        "chains": (int, 64),
        "block": (int, 32),
        "scheme": (str, "lie"),
        "epsilon_l2": (float, 0.1),
        "seed": (int, 20240601),
        "checkpoint": (_bool, False),
    },
    "experiment": {
        "p_list": (_ints, [1, 2, 3]),
        "y0_radius": (float, 1.0),
        "every": (int, 10),
        "oracle_cases": (int, 100),
        "exp_T": (float, 20.0),
        "exp_ensemble": (int, 2000),
        "ito_alpha": (float, 0.3),
        "ito_T": (float, 2.0),
        "ito_dt": (float, 0.08),
        "ito_ensemble": (int, 1024),
        "ito_modes": (int, 3),
        "bump_centers": (_floats, []),
        "bump_widths": (_floats, []),
        "tail_a": (float, 2.0),
        "bins": (int, 32),
        "coupling_alphas": (_floats, [0.4, 0.2, 0.1, 0.05]),
        "coupling_T": (float, 1.5),
        "coupling_dt": (float, 0.01),
        "coupling_R": (float, 2.0),
        "coupling_r": (float, 3.0),
        "coupling_states": (int, 6),
        "coupling_ensemble": (int, 64),
        "ball_quantile": (float, 0.3),
        "ergodic_samples": (int, 2000),
        "horizon": (float, 40.0),
        "correlation_T": (float, 20.0),
        "ergodic_dt": (float, 0.02),
        "drift_T": (float, 100.0),
        "drift_dt": (float, 0.05),
        "drift_tol": (float, 1e-6),
        "return_delta": (float, 0.5),
        "selftest_states": (int, 10000),
    },
}


class ExperimentConfig:
    """Typed configuration values, ``cfg["section"]["key"]``."""

    def __init__(self, values=None):
        self.values = {sec: {k: copy.deepcopy(d) for k, (_, d) in keys.items()}
                       for sec, keys in SCHEMA.items()}
        for sec, keys in (values or {}).items():
            for k, v in keys.items():
                self._check_key(sec, k)
                self.values[sec][k] = v

    def __getitem__(self, section):
        return self.values[section]

    @staticmethod
    def _check_key(section, key):
        if section not in SCHEMA:
            raise ConfigurationError(f"unknown config section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigurationError(f"unknown config key {section}.{key}")

    def set(self, section, key, text):
        self._check_key(section, key)
        parse = SCHEMA[section][key][0]
        try:
            self.values[section][key] = parse(text)
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {section}.{key}: {text!r} ({exc})") from None

    def set_override(self, assignment):
        """Apply ``section.key=value``."""
        if "=" not in assignment or "." not in assignment.split("=", 1)[0]:
            raise ConfigurationError(f"override must look like section.key=value, got {assignment!r}")
        lhs, rhs = assignment.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        self.set(section, key.strip(), rhs.strip())

    @classmethod
    def from_file(cls, path):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        cfg = cls()
        for section in parser.sections():
            for key, text in parser.items(section):
                cfg.set(section, key, text)
        return cfg

    def to_dict(self):
        return copy.deepcopy(self.values)

    def content_hash(self, extra=None):
        """Git-style blob sha1 of the canonical JSON of the inputs."""
        blob = json.dumps({"config": self.values, **(extra or {})}, sort_keys=True).encode("utf-8")
        return hashlib.sha1(b"blob %d\0" % len(blob) + blob).hexdigest()

    # builders

    def domain(self):
        d = self["domain"]
        return DomainSpec(d["kind"], d["dimension"], d["mass_squared"])

    def basis(self):
        d = self["domain"]
        return build_basis(self.domain(), d["N"], pad=d["pad"])

    def noise(self, basis):
        n = self["noise"]
        return NoiseSpec.from_preset(n["profile"], basis, K=n["K"], amplitude=n["amplitude"],
                                     values=n["values"] or None)

    def params(self, alpha=None):
        r = self["run"]
        try:
            return FDLParams(r["alpha"] if alpha is None else alpha, r["epsilon_l2"])
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    def run_spec(self):
        r = self["run"]
        return RunSpec(T=r["T"], dt=r["dt"], burn_in=r["burn_in"], thin=r["thin"],
                       chains=r["chains"], scheme=r["scheme"], block=r["block"])
