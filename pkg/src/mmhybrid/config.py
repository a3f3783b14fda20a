"""Experiment configuration files.

A config is an INI file with these sections (keys in brackets are optional)::

    [experiment]
    name = fig3a
    [description = one line shown by ``mmhybrid list``]
    schemes = OSF+Stat+SLNR, TSF+AdpCB+SLNR
    snr_db = -10:20:5            ; a:b:step (inclusive) or a comma list
    [trials = 1000]
    [seed = 0]

    [scenario]
    kind = uniform-iid-aods      ; or non-overlapped-vcr, fully-overlapped-vcr,
                                 ;    partial-overlap-vcr
    n_antennas = 64
    n_users = 4
    n_paths = 2
    [overlap = 0.5]              ; partial-overlap-vcr only

    [feedback]
    b_total = 6
    [split = sweep-optimal]      ; or fixed, dof-scaled
    [b_rf = 5]                   ; fixed and dof-scaled
    [b_bb = 1]                   ; fixed
    [dof_target = 1]             ; dof-scaled
    [rf_codebook = uniform-angle]
    [refine_codebook = yes]

    [rate_splitting]             ; whole section optional
    [private = slnr]             ; or sbf
    [t_mode = closed-form]       ; or line-search
    [t_step = 0.01]              ; grid of the RS-TSF exhaustive split search

    [sweep]                      ; optional: one experiment per value
    parameter = n_antennas       ; n_antennas, n_users, n_paths or b_total
    values = 16, 32, 64, 128

Errors are reported as :class:`ConfigError` with the file and line.
"""

import configparser
import dataclasses
import math
import re
from importlib import resources

import numpy as np

from .channel import ScenarioSpec
from .evaluation import ExperimentConfig

SECTIONS = {
    "experiment": {"name", "description", "schemes", "snr_db", "trials", "seed"},
    "scenario": {"kind", "n_antennas", "n_users", "n_paths", "overlap"},
    "feedback": {"b_total", "split", "b_rf", "b_bb", "dof_target", "rf_codebook",
                 "refine_codebook"},
    "rate_splitting": {"private", "t_mode", "t_step"},
    "sweep": {"parameter", "values"},
}
REQUIRED = {
    "experiment": ("name", "schemes", "snr_db"),
    "scenario": ("kind", "n_antennas", "n_users", "n_paths"),
    "feedback": ("b_total",),
}
SWEEP_PARAMETERS = ("n_antennas", "n_users", "n_paths", "b_total")


class ConfigError(ValueError):
    def __init__(self, message, path="<string>", line=None):
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


def parse_snr_grid(text):
    """``"a:b:step"`` (inclusive of ``b``) or ``"x, y, z"`` -> tuple of floats."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"SNR range must be a:b:step, got {text!r}")
        a, b, step = (float(p) for p in parts)
        if step <= 0 or b < a:
            raise ValueError(f"SNR range needs step > 0 and b >= a, got {text!r}")
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        return tuple(float(np.round(a + i * step, 10)) for i in range(n))
    vals = tuple(float(v) for v in text.split(",") if v.strip())
    if not vals:
        raise ValueError("empty SNR grid")
    return vals


def _line_index(text):
    """``(section, key) -> line number`` and ``section -> line number``."""
    index = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index[section] = no
            continue
        m = re.match(r"([^=:;#\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            index[(section, m.group(1).strip().lower())] = no
    return index


class _Reader:
    """Typed access to a parsed config that remembers where values came from."""

    def __init__(self, parser, lines, path):
        self.parser = parser
        self.lines = lines
        self.path = path

    def error(self, message, section, key=None):
        line = self.lines.get((section, key)) if key else self.lines.get(section)
        return ConfigError(message, self.path, line)

    def has(self, section, key):
        return self.parser.has_option(section, key)

    def get(self, section, key, convert=str, default=None):
        if not self.has(section, key):
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return convert(raw)
        except ValueError as exc:
            raise self.error(f"bad value for {section}.{key}: {exc}", section, key) from None


def _to_int(text):
    return int(text)


def _to_bool(text):
    low = text.lower()
    if low in ("1", "yes", "true", "on"):
        return True
    if low in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"expected yes/no, got {text!r}")


def _to_list(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _check_structure(rd):
    for section in rd.parser.sections():
        if section not in SECTIONS:
            raise rd.error(f"unknown section [{section}]; expected one of "
                           f"{sorted(SECTIONS)}", section)
        for key in rd.parser.options(section):
            if key not in SECTIONS[section]:
                raise rd.error(f"unknown key {key!r} in [{section}]", section, key)
    for section, keys in REQUIRED.items():
        if not rd.parser.has_section(section):
            raise ConfigError(f"missing section [{section}]", rd.path)
        for key in keys:
            if not rd.has(section, key):
                raise rd.error(f"missing required key {key!r} in [{section}]", section)


def _build(rd):
    _check_structure(rd)
    exp = dict(
        name=rd.get("experiment", "name"),
        description=rd.get("experiment", "description", default=""),
        schemes=rd.get("experiment", "schemes", _to_list),
        snr_db=rd.get("experiment", "snr_db", parse_snr_grid),
        trials=rd.get("experiment", "trials", _to_int, 1000),
        seed=rd.get("experiment", "seed", _to_int, 0),
        b_total=rd.get("feedback", "b_total", _to_int),
        split=rd.get("feedback", "split", default="sweep-optimal"),
        b_rf=rd.get("feedback", "b_rf", _to_int),
        b_bb=rd.get("feedback", "b_bb", _to_int),
        dof_target=rd.get("feedback", "dof_target", _to_int, 1),
        rf_codebook=rd.get("feedback", "rf_codebook", default="uniform-angle"),
        refine_codebook=rd.get("feedback", "refine_codebook", _to_bool, True),
        rs_precoder=rd.get("rate_splitting", "private", default="slnr"),
        t_mode=rd.get("rate_splitting", "t_mode", default="closed-form"),
        t_step=rd.get("rate_splitting", "t_step", float, 0.01),
    )
    scen = dict(
        kind=rd.get("scenario", "kind"),
        n_antennas=rd.get("scenario", "n_antennas", _to_int),
        n_users=rd.get("scenario", "n_users", _to_int),
        n_paths=rd.get("scenario", "n_paths", _to_int),
        overlap=rd.get("scenario", "overlap", float, 0.0),
    )
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", exp["name"] or ""):
        raise rd.error("name may only contain letters, digits, '_', '.' and '-'",
                       "experiment", "name")

    variants = [(exp["name"], {})]
    if rd.parser.has_section("sweep"):
        param = rd.get("sweep", "parameter")
        if param not in SWEEP_PARAMETERS:
            raise rd.error(f"sweep parameter must be one of {SWEEP_PARAMETERS}",
                           "sweep", "parameter")
        values = rd.get("sweep", "values", lambda s: tuple(int(v) for v in _to_list(s)))
        if not values:
            raise rd.error("sweep needs at least one value", "sweep", "values")
        variants = [(f"{exp['name']}_{param}{v}", {param: v}) for v in values]

    out = []
    for name, change in variants:
        s = dict(scen, seed=exp["seed"])
        e = dict(exp, name=name)
        for key, val in change.items():
            (s if key in s else e)[key] = val
        try:
            spec = ScenarioSpec(**s)
        except ValueError as exc:
            raise rd.error(f"{name}: {exc}", "scenario") from None
        try:
            out.append(ExperimentConfig(scenario=spec, **e))
        except ValueError as exc:
            key = _guess_key(str(exc))
            section = next((sec for sec, keys in SECTIONS.items() if key in keys),
                           "experiment")
            raise rd.error(f"{name}: {exc}", section, key) from None
    return out


# validation messages of ExperimentConfig -> the config key to point at
_ERROR_KEYS = (
    ("unknown scheme", "schemes"),
    ("at least one scheme", "schemes"),
    ("inconsistent split", "b_bb"),
    ("split needs", "split"),
    ("split must", "split"),
    ("trials", "trials"),
    ("rs_precoder", "private"),
    ("t_mode", "t_mode"),
    ("t_step", "t_step"),
    ("b_total", "b_total"),
)


def _guess_key(message):
    return next((key for frag, key in _ERROR_KEYS if frag in message), None)


def loads(text, path="<string>"):
    """Parse config text into a list of :class:`ExperimentConfig`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"),
                                       interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], path, line) from None
    return _build(_Reader(parser, _line_index(text), path))


def load(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return loads(text, path)


def bundled_names():
    root = resources.files("mmhybrid") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def bundled_text(name):
    root = resources.files("mmhybrid") / "configs"
    return (root / f"{name}.ini").read_text(encoding="utf-8")


def resolve(name_or_path):
    """Load a config from a path, or a bundled config by name (``fig3a``)."""
    if name_or_path in bundled_names():
        return loads(bundled_text(name_or_path), f"<bundled>/{name_or_path}.ini")
    return load(name_or_path)


def describe(configs):
    """One-line description of a resolved config list."""
    first = configs[0]
    return first.description or first.name


def to_dict(cfg):
    d = dataclasses.asdict(cfg)
    d["schemes"] = list(cfg.schemes)
    d["snr_db"] = list(cfg.snr_db)
    return d


def from_dict(d):
    d = dict(d)
    d["scenario"] = ScenarioSpec(**d["scenario"])
    d["schemes"] = tuple(d["schemes"])
    d["snr_db"] = tuple(d["snr_db"])
    return ExperimentConfig(**d)
