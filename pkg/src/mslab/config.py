"""Run configuration: INI files with bracketed sections, validated before any compute.

Grammar (``#`` and ``;`` start comments, lists are whitespace separated)::

    [domain]       dim = 1|2, bounds = lo hi [lo hi]
    [interface]    variant = point|circle, x0 = ... | center = cx cy, radius = r
    [input]        preset = <name>, then the preset's parameters
    [solver]       N = cells per axis, tol, max_iter, jacobi = true|false
    [calibration]  beta, lambda_rule = default|minimal, and optional
                   lam, eps, gamma, gamma1, D, enforce, n_x, n_z
    [scan]         beta_min, beta_max, iters
    [scaling]      betas = b1 b2 ..., N
    [evolution]    delta, T, snapshot_every
    [output]       directory, emit_fields = true|false

Command-line flags override file values.  Errors carry the file name and
the line of the offending key (or section header).
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .data import make_input
from .geometry import Domain, GeometryError, make_interface

PRESET_KEYS = {
    "constant": {"value"},
    "cosine_mode": {"amplitude", "mode", "offset"},
    "jump_constant": {"inner", "outer"},
    "jump_plus_smooth": {"inner", "outer", "amplitude", "mode"},
    "radial_jump": {"inner", "outer", "amplitude"},
}

SCHEMA = {
    "domain": {"dim", "bounds"},
    "interface": {"variant", "x0", "center", "radius"},
    "input": {"preset"} | set().union(*PRESET_KEYS.values()),
    "solver": {"n", "tol", "max_iter", "jacobi"},
    "calibration": {"beta", "lambda_rule", "lam", "eps", "gamma", "gamma1", "d", "enforce", "n_x", "n_z"},
    "scan": {"beta_min", "beta_max", "iters"},
    "scaling": {"betas", "n"},
    "evolution": {"delta", "t", "snapshot_every"},
    "output": {"directory", "emit_fields"},
}
REQUIRED = ("domain", "interface", "input")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    path: str
    sections: dict
    lines: dict = field(default_factory=dict)

    def where(self, section, key=None) -> str:
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        return f"{self.path}:{line}" if line else self.path

    def error(self, section, key, msg) -> ConfigError:
        name = f"[{section}] {key}" if key else f"[{section}]"
        return ConfigError(f"{self.where(section, key)}: {name}: {msg}")

    def raw(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def get_float(self, section, key, default=None, positive=False) -> Optional[float]:
        v = self.raw(section, key)
        if v is None or v == "":
            return default
        try:
            out = float(v)
        except ValueError:
            raise self.error(section, key, f"expected a number, got {v!r}") from None
        if positive and not out > 0:
            raise self.error(section, key, "must be positive")
        return out

    def get_int(self, section, key, default=None) -> Optional[int]:
        v = self.raw(section, key)
        if v is None or v == "":
            return default
        try:
            return int(v)
        except ValueError:
            raise self.error(section, key, f"expected an integer, got {v!r}") from None

    def get_bool(self, section, key, default=False) -> bool:
        v = self.raw(section, key)
        if v is None or v == "":
            return default
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise self.error(section, key, f"expected true or false, got {v!r}")

    def get_floats(self, section, key, default=None):
        v = self.raw(section, key)
        if v is None or v == "":
            return default
        try:
            return [float(t) for t in v.replace(",", " ").split()]
        except ValueError:
            raise self.error(section, key, f"expected numbers, got {v!r}") from None

    def set(self, section, key, value):
        self.sections.setdefault(section, {})[key] = str(value)

    def to_ini(self) -> str:
        out = []
        for sec in SCHEMA:
            if sec not in self.sections:
                continue
            out.append(f"[{sec}]")
            for k in sorted(self.sections[sec]):
                out.append(f"{k} = {self.sections[sec][k]}")
            out.append("")
        return "\n".join(out)

    # typed views

    def domain(self) -> Domain:
        dim = self.get_int("domain", "dim")
        if dim not in (1, 2):
            raise self.error("domain", "dim", "must be 1 or 2")
        b = self.get_floats("domain", "bounds")
        if b is None or len(b) != 2 * dim:
            raise self.error("domain", "bounds", f"expected {2 * dim} numbers")
        try:
            return Domain(tuple((b[2 * j], b[2 * j + 1]) for j in range(dim)))
        except (ValueError, GeometryError) as e:
            raise self.error("domain", "bounds", str(e)) from None

    def interface(self, domain=None):
        domain = domain or self.domain()
        variant = self.raw("interface", "variant")
        try:
            if variant == "point":
                if domain.dim != 1:
                    raise self.error("interface", "variant", "a point interface needs dim = 1")
                return make_interface(domain, "point", x0=self.get_float("interface", "x0", 0.0))
            if variant == "circle":
                if domain.dim != 2:
                    raise self.error("interface", "variant", "a circle interface needs dim = 2")
                c = self.get_floats("interface", "center", [0.0, 0.0])
                if len(c) != 2:
                    raise self.error("interface", "center", "expected two numbers")
                r = self.get_float("interface", "radius", positive=True)
                if r is None:
                    raise self.error("interface", "radius", "missing")
                return make_interface(domain, "circle", center=tuple(c), radius=r)
        except (ValueError, GeometryError) as e:
            if isinstance(e, ConfigError):
                raise
            raise self.error("interface", None, str(e)) from None
        raise self.error("interface", "variant", f"expected point or circle, got {variant!r}")

    def datum(self):
        domain = self.domain()
        interface = self.interface(domain)
        preset = self.raw("input", "preset")
        if preset not in PRESET_KEYS:
            raise self.error("input", "preset", f"unknown preset {preset!r}")
        params = {}
        for k in PRESET_KEYS[preset]:
            if k == "mode":
                m = self.get_int("input", k)
                if m is not None:
                    params[k] = m
            else:
                v = self.get_float("input", k)
                if v is not None:
                    params[k] = v
        extra = set(self.sections.get("input", {})) - PRESET_KEYS[preset] - {"preset"}
        if extra:
            k = sorted(extra)[0]
            raise self.error("input", k, f"not a parameter of preset {preset!r}")
        if preset == "radial_jump" and domain.dim != 2:
            raise self.error("input", "preset", "radial_jump needs dim = 2")
        try:
            return make_input(preset, domain, interface, **params)
        except (ValueError, TypeError) as e:
            raise self.error("input", "preset", str(e)) from None

    def cells(self):
        dim = self.get_int("domain", "dim")
        n = self.get_int("solver", "n", 512 if dim == 1 else 128)
        if n < 8:
            raise self.error("solver", "n", "at least 8 cells per axis are required")
        return (n,) * dim

    def solver_kw(self) -> dict:
        kw = {"tol": self.get_float("solver", "tol", 1e-10, positive=True),
              "jacobi": self.get_bool("solver", "jacobi")}
        mi = self.get_int("solver", "max_iter")
        if mi is not None:
            kw["max_iter"] = mi
        return kw

    def validate(self):
        """Schema and referential checks; raises ConfigError on the first problem."""
        for sec in REQUIRED:
            if sec not in self.sections:
                raise ConfigError(f"{self.path}: missing section [{sec}]")
        self.datum()
        self.cells()
        self.solver_kw()
        for sec, key in (("calibration", "beta"), ("evolution", "delta"), ("evolution", "t"),
                         ("scan", "beta_min"), ("scan", "beta_max")):
            self.get_float(sec, key, positive=True)
        rule = self.raw("calibration", "lambda_rule", "default")
        if rule not in ("default", "minimal"):
            raise self.error("calibration", "lambda_rule", "expected default or minimal")
        for key in ("lam", "eps", "gamma", "gamma1", "d"):
            self.get_float("calibration", key, positive=True)
        self.get_bool("calibration", "enforce")
        self.get_bool("output", "emit_fields")
        self.get_floats("scaling", "betas")
        return self


_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_map(text: str) -> dict:
    lines = {}
    sec = None
    for no, line in enumerate(text.splitlines(), 1):
        m = _SECTION.match(line)
        if m:
            sec = m.group(1).strip().lower()
            lines[(sec, None)] = no
            continue
        m = _KEY.match(line)
        if m and sec is not None:
            lines[(sec, m.group(1).strip().lower())] = no
    return lines


def parse_config(text: str, path: str = "<string>") -> RunConfig:
    """Parse and schema-check an INI text (unknown sections and keys are errors)."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=path)
    except configparser.Error as e:
        raise ConfigError(" ".join(str(e).split())) from None
    lines = _line_map(text)
    sections = {}
    for sec in cp.sections():
        key = sec.strip().lower()
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lines.get((key, None), '?')}: unknown section [{sec}]")
        sections[key] = {}
        for k, v in cp.items(sec):
            if k not in SCHEMA[key]:
                raise ConfigError(f"{path}:{lines.get((key, k), '?')}: [{key}] unknown key {k!r}")
            sections[key][k] = v.strip()
    return RunConfig(path, sections, lines)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
    return parse_config(text, str(path))
