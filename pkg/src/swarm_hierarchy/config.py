"""Plain-text configuration files.

Format: ``key = value`` lines grouped under ``[section]`` headers (lines
before the first header belong to ``[params]``).  Recognised sections:

``[params]``   ModelParams fields (a, tau, sigma, diff, radius, eps, dim, k);
               ``temp`` may replace ``diff`` (diff = temp / sigma).
``[run]``      run controls shared by the subcommands (t_end, dt, cells,
               n_particles, seeds, ic, snapshot_every, ...).
``[sweep]``    ``name`` and comma-separated ``values``.
``[options]``  free scenario options; numbers are parsed, the rest kept as text.

The environment variable ``SWARM_HIERARCHY_OUT`` sets the default output root.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field
from typing import Any, Optional

from .coeffs import ModelParams
from .errors import ParameterError

OUT_ENV = "SWARM_HIERARCHY_OUT"
_PARAM_KEYS = ("a", "tau", "sigma", "diff", "radius", "eps", "dim", "k")


def parse_value(text: str) -> Any:
    """int, float, bool, comma list or the stripped string."""
    t = text.strip()
    if "," in t:
        return tuple(parse_value(p) for p in t.split(",") if p.strip())
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("inf", "infinity"):
        return math.inf
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


@dataclass
class Config:
    params: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    source: Optional[str] = None

    def model_params(self, **overrides) -> ModelParams:
        kw = {**self.params, **overrides}
        temp = kw.pop("temp", None)
        unknown = set(kw) - set(_PARAM_KEYS)
        if unknown:
            raise ParameterError(f"unknown [params] keys: {sorted(unknown)}")
        if "dim" in kw:
            kw["dim"] = int(kw["dim"])
        if temp is not None:
            if "diff" in kw:
                raise ParameterError("give either temp or diff, not both")
            return ModelParams.from_temperature(float(temp), **kw)
        return ModelParams(**kw)

    def get(self, key: str, default: Any = None) -> Any:
        return self.run.get(key, default)


def loads(text: str, source: Optional[str] = None) -> Config:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    body = text
    if not body.lstrip().startswith("["):
        body = "[params]\n" + body
    try:
        cp.read_string(body, source=source or "<config>")
    except configparser.Error as exc:
        raise ParameterError(f"bad config: {exc}") from exc
    cfg = Config(source=source)
    known = {"params": cfg.params, "run": cfg.run, "sweep": cfg.sweep, "options": cfg.options}
    for sec in cp.sections():
        if sec not in known:
            raise ParameterError(f"unknown config section [{sec}]")
        for k, v in cp.items(sec):
            known[sec][k] = parse_value(v)
    return cfg


def load(path: Optional[str]) -> Config:
    if path is None:
        return Config()
    try:
        with open(path) as fh:
            return loads(fh.read(), source=path)
    except OSError as exc:
        raise ParameterError(f"cannot read config {path!r}: {exc}") from exc


def default_out_dir(explicit: Optional[str] = None) -> str:
    return explicit or os.environ.get(OUT_ENV) or "swarm_out"
