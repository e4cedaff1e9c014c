"""Run configuration: INI-style text with sections and key = value lines.

Keys placed before any section header belong to [experiment].  Vectors are
written as three numbers separated by spaces or commas.

    [profile]     radius, amplitude
    [physics]     m, I
    [grid]        N, L, K
    [experiment]  v, omega, eps, T, dt, seed, record_every, resolutions,
                  scheme, k0, window, sweep, values
"""

import configparser
import hashlib
import re
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .errors import ConfigError, NotInSigmaError

_SECTIONS = {
    "profile": ("radius", "amplitude"),
    "physics": ("m", "I"),
    "grid": ("N", "L", "K"),
    "experiment": ("v", "omega", "eps", "T", "dt", "seed", "record_every", "resolutions",
                   "scheme", "k0", "window", "sweep", "values"),
}
_VECTORS = ("v", "omega")
_INTS = ("N", "seed", "record_every")
_OPTIONAL = ("amplitude", "dt", "window")
_SWEEPS = ("v", "omega", "eps")
_SCHEMES = ("rkmk4", "rk4")


@dataclass(frozen=True)
class RunConfig:
    radius: float = 1.0
    amplitude: float = None
    m: float = 1.0
    I: float = 1.0
    N: int = 64
    L: float = 16.0
    K: float = 4.0
    v: tuple = (0.0, 0.0, 0.0)
    omega: tuple = (0.0, 0.0, 0.0)
    eps: float = 1e-3
    T: float = 20.0
    dt: float = None
    seed: int = 0
    record_every: int = 10
    resolutions: tuple = (24, 32)
    scheme: str = "rkmk4"
    k0: float = 2.0
    window: float = None
    sweep: str = "v"
    values: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)

    @property
    def velocity(self):
        return np.array(self.v, dtype=float)

    @property
    def spin(self):
        return np.array(self.omega, dtype=float)

    def with_seed(self, seed):
        return validate(replace(self, seed=int(seed)))

    def profile(self):
        from .profile import make_bump_profile
        return make_bump_profile(self.radius, self.amplitude)

    def grid(self, N=None):
        from .spectral import SpectralGrid
        return SpectralGrid(self.L, self.N if N is None else N)

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def _fmt(x):
    if x is None:
        return "none"
    if isinstance(x, tuple):
        return " ".join(_fmt(e) for e in x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit(cfg):
    """Canonical text form: every key, fixed section and key order."""
    lines = []
    for sec, keys in _SECTIONS.items():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {_fmt(getattr(cfg, k))}" for k in keys)
        lines.append("")
    return "\n".join(lines)


def config_hash(cfg):
    return hashlib.sha256(emit(cfg).encode()).hexdigest()


def _line_of(text, key, offset):
    pat = re.compile(rf"^\s*{re.escape(key)}\s*[=:]", re.M)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 - offset if m else None


def _convert(key, raw):
    raw = raw.strip()
    if key in _OPTIONAL and raw.lower() == "none":
        return None
    if key in ("scheme", "sweep"):
        return raw
    parts = [p for p in re.split(r"[,\s]+", raw) if p]
    if key in _VECTORS:
        if len(parts) != 3:
            raise ValueError("expected three components")
        return tuple(float(p) for p in parts)
    if key == "resolutions":
        return tuple(int(p) for p in parts)
    if key == "values":
        return tuple(float(p) for p in parts)
    if len(parts) != 1:
        raise ValueError("expected a single value")
    return int(parts[0]) if key in _INTS else float(parts[0])


def parse_text(text, source="<string>"):
    offset = 0
    if not re.match(r"\s*\[", text):
        text = "[experiment]\n" + text
        offset = 1
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        where = f" at line {line - offset}" if line else ""
        raise ConfigError(f"{source}: parse error{where}: {exc.message.splitlines()[0]}") from None
    values = {}
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{sec}] at line {_line_of(text, '[' + sec, offset)}")
        for key, raw in cp.items(sec):
            if key not in _SECTIONS[sec]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{sec}] at line "
                                  f"{_line_of(text, key, offset)}")
            try:
                values[key] = _convert(key, raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for '{key}' at line "
                                  f"{_line_of(text, key, offset)}: {exc}") from None
    return validate(RunConfig(**values))


def parse_config(path):
    """Read, default-fill and validate a config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_text(text, source=str(path))


def validate(cfg):
    """Check every invariant before dispatch; raises ConfigError naming it."""
    from .dynamics import cfl_limit
    from .soliton import validate_sigma

    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    for f in fields(cfg):
        x = getattr(cfg, f.name)
        if isinstance(x, float):
            need(np.isfinite(x), f"{f.name} must be finite")
    need(cfg.m > 0, "m must be positive")
    need(cfg.I > 0, "I must be positive")
    need(cfg.radius > 0, "radius must be positive")
    need(cfg.amplitude is None or cfg.amplitude > 0, "amplitude must be positive")
    need(cfg.N >= 8 and cfg.N % 2 == 0, "N must be an even integer >= 8")
    need(cfg.L > 0, "L must be positive")
    need(cfg.radius < cfg.L, "the charge support must fit in the box (radius < L)")
    need(cfg.K > 0, "K must be positive")
    need(cfg.eps >= 0, "eps must be nonnegative")
    need(cfg.T > 0, "T must be positive")
    need(cfg.record_every >= 1, "record_every must be >= 1")
    need(cfg.seed >= 0, "seed must be a nonnegative integer")
    need(cfg.k0 > 0, "k0 must be positive")
    need(cfg.window is None or cfg.window > 0, "window must be positive")
    need(all(n >= 8 and n % 2 == 0 for n in cfg.resolutions), "resolutions must be even integers >= 8")
    need(cfg.scheme in _SCHEMES, f"scheme must be one of {_SCHEMES}")
    need(cfg.sweep in _SWEEPS, f"sweep must be one of {_SWEEPS}")
    need(len(cfg.values) > 0, "values must not be empty")
    speed = float(np.linalg.norm(cfg.velocity))
    if speed >= 1:
        raise ConfigError(f"superluminal velocity: |v| = {speed:.6g} >= 1")
    try:
        validate_sigma(cfg.velocity, cfg.spin)
    except NotInSigmaError as exc:
        raise ConfigError(f"(v, omega) not admissible: {exc}") from None
    if cfg.sweep == "v":
        need(all(0 <= s < 1 for s in cfg.values), "swept speeds must lie in [0, 1)")
    if cfg.sweep == "eps":
        need(all(e >= 0 for e in cfg.values), "swept eps must be nonnegative")
    if cfg.dt is not None:
        need(cfg.dt > 0, "dt must be positive")
        limit = cfl_limit(cfg.grid(), speed)
        need(cfg.dt <= limit * (1 + 1e-12), f"dt = {cfg.dt} violates the CFL bound {limit:.6g}")
    return cfg
