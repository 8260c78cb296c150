"""Sectioned ``key = value`` configuration files.

Example::

    [grid]
    d = 1
    n = 1024
    L = 40.0

    [model]
    sigma = 1
    epsilon = 1
    scheme = cutoff        # none | cutoff | plateau | rational-sat
    h = 0.25
    profile = smooth-compact
    dispersion = laplacian # laplacian | rational | arctan

    [time]
    dt = 0.001
    T = 1.0

    [datum]
    kind = gaussian

    [diagnostics]
    every = 10
    norms = 0.5, 2

Unknown sections or keys are errors.  ``#`` starts a comment.  The optional
``[study]`` section carries settings for the studies run from the CLI.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .grid import make_grid
from .integrator import InitialDatum, SimulationConfig
from .operators import CutoffProfile, DispersionSymbol, GuardError, ModelParams, SaturationScheme


class ConfigError(ValueError):
    def __init__(self, problems: list[tuple[int | None, str]]):
        self.problems = problems
        lines = [f"line {ln}: {msg}" if ln else msg for ln, msg in problems]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _boolish(text: str) -> bool | None:
    low = text.lower()
    if low == "auto":
        return None
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off/auto, got {text!r}")


# key -> (parser, default); default None with required=True marks mandatory keys
SCHEMA: dict[str, dict[str, tuple]] = {
    "grid": {
        "d": (int, 1),
        "n": (int, None),
        "L": (float, None),
    },
    "model": {
        "sigma": (int, 1),
        "epsilon": (int, 1),
        "scheme": (str, "none"),
        "h": (float, None),
        "profile": (str, "smooth-compact"),
        "dispersion": (str, "laplacian"),
        "dispersion_h": (float, None),
    },
    "time": {
        "dt": (float, None),
        "T": (float, None),
        "splitting": (str, "strang"),
    },
    "datum": {
        "kind": (str, "gaussian"),
        "amplitude": (float, 1.0),
        "width": (float, 1.0),
        "center": (_floats, ()),
        "wave_vector": (_floats, ()),
        "h_c": (float, 0.1),
        "s": (float, 1.0),
        "seed": (int, 0),
        "delta": (float, 0.1),
        "mode": (_ints, ()),
        "path": (str, ""),
    },
    "diagnostics": {
        "every": (int, 1),
        "norms": (_floats, ()),
        "boundary_guard": (_boolish, None),
        "blowup_factor": (float, 1e3),
    },
    "study": {
        "h_list": (_floats, ()),
        "norms": (_floats, (0.0, 1.0)),
        "perturbation": (float, 1e-3),
        "sample_times": (_floats, ()),
        "amplitudes": (_floats, ()),
        "saturation_h": (float, 0.5),
        "s": (float, 0.3),
        "k": (float, 1.0),
        "t": (float, 1.0),
        "h_cut": (float, 0.25),
    },
}
REQUIRED = {("grid", "n"), ("grid", "L"), ("time", "dt"), ("time", "T")}


@dataclass(frozen=True)
class StudySettings:
    h_list: tuple[float, ...] = ()
    norms: tuple[float, ...] = (0.0, 1.0)
    perturbation: float = 1e-3
    sample_times: tuple[float, ...] = ()
    amplitudes: tuple[float, ...] = ()
    saturation_h: float = 0.5
    s: float = 0.3
    k: float = 1.0
    t: float = 1.0
    h_cut: float = 0.25


@dataclass
class Document:
    config: SimulationConfig
    study: StudySettings = field(default_factory=StudySettings)
    raw: dict = field(default_factory=dict)


def _tokenize(text: str):
    """Yield (line number, section, key, value) and collect syntax problems."""
    problems: list[tuple[int | None, str]] = []
    entries: dict[str, dict[str, tuple[int, str]]] = {}
    section = None
    for ln, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("[") and body.endswith("]"):
            section = body[1:-1].strip()
            if section not in SCHEMA:
                problems.append((ln, f"unknown section [{section}]"))
            elif section in entries:
                problems.append((ln, f"section [{section}] repeated"))
            entries.setdefault(section, {})
            continue
        if "=" not in body:
            problems.append((ln, f"expected 'key = value', got {body!r}"))
            continue
        if section is None:
            problems.append((ln, "key outside of any section"))
            continue
        key, value = (part.strip() for part in body.split("=", 1))
        if section in SCHEMA and key not in SCHEMA[section]:
            problems.append((ln, f"unknown key {key!r} in [{section}]"))
            continue
        if key in entries[section]:
            problems.append((ln, f"key {key!r} repeated in [{section}]"))
            continue
        entries[section][key] = (ln, value)
    return entries, problems


def parse_document(text: str) -> Document:
    entries, problems = _tokenize(text)
    values: dict[str, dict] = {}
    lines: dict[tuple[str, str], int] = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (parse, default) in keys.items():
            if key in entries.get(section, {}):
                ln, raw = entries[section][key]
                lines[(section, key)] = ln
                try:
                    values[section][key] = parse(raw)
                except ValueError as exc:
                    problems.append((ln, f"[{section}] {key}: cannot parse {raw!r} ({exc})"))
            elif (section, key) in REQUIRED:
                problems.append((None, f"missing mandatory key {key!r} in [{section}]"))
            else:
                values[section][key] = default
    if problems:
        raise ConfigError(problems)

    def at(section, key):
        return lines.get((section, key))

    def build(fn, section, key, *args, **kw):
        try:
            return fn(*args, **kw)
        except GuardError as exc:
            problems.append((at(section, key), str(exc)))
        except (ValueError, TypeError) as exc:
            problems.append((at(section, key), f"[{section}] {key}: {exc}"))
        return None

    g, m, t, dm, dg, st = (values[k] for k in ("grid", "model", "time", "datum", "diagnostics", "study"))
    grid = build(make_grid, "grid", "n", g["d"], g["n"], g["L"])

    if m["sigma"] < 1:
        problems.append((at("model", "sigma"), f"sigma must be an integer >= 1, got {m['sigma']}"))
    profile = build(CutoffProfile, "model", "profile", m["profile"])
    scheme = None
    if profile is not None:
        scheme = build(SaturationScheme, "model", "scheme", m["scheme"], m["h"], profile)
    disp_h = m["dispersion_h"] if m["dispersion_h"] is not None else m["h"]
    disp = build(DispersionSymbol, "model", "dispersion", m["dispersion"],
                 disp_h if m["dispersion"] != "laplacian" else None)
    params = None
    if scheme is not None and disp is not None and m["sigma"] >= 1:
        params = build(ModelParams, "model", "epsilon", m["sigma"], m["epsilon"], scheme, disp)
    if params is not None and grid is not None:
        build(params.scheme.check, "model", "h", grid)

    datum = build(InitialDatum, "datum", "kind", **dm)
    config = None
    if None not in (grid, params, datum):
        config = build(SimulationConfig, "time", "dt", grid, params, t["dt"], t["T"], datum,
                       diagnostics_every=dg["every"], splitting=t["splitting"], norms=dg["norms"],
                       boundary_guard=dg["boundary_guard"], blowup_factor=dg["blowup_factor"])
    if problems:
        raise ConfigError(problems)
    return Document(config, StudySettings(**st), values)


def parse_config(text: str) -> SimulationConfig:
    return parse_document(text).config


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "on" if v else "off"
    if v is None:
        return "auto"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def emit_config(config: SimulationConfig, study: StudySettings | None = None) -> str:
    """Canonical text for ``config``: fixed section/key order, every key written."""
    p = config.params
    sch, disp, dm = p.scheme, p.dispersion, config.datum
    sections = {
        "grid": {"d": config.grid.d, "n": config.grid.n, "L": float(config.grid.L)},
        "model": {
            "sigma": p.sigma, "epsilon": p.epsilon, "scheme": sch.kind,
            "profile": sch.profile.kind, "dispersion": disp.kind,
        },
        "time": {"dt": float(config.dt), "T": float(config.T), "splitting": config.splitting},
        "datum": {
            "kind": dm.kind, "amplitude": float(dm.amplitude), "width": float(dm.width),
            "center": tuple(float(c) for c in dm.center),
            "wave_vector": tuple(float(c) for c in dm.wave_vector),
            "h_c": float(dm.h_c), "s": float(dm.s), "seed": dm.seed, "delta": float(dm.delta),
            "mode": tuple(dm.mode), "path": dm.path,
        },
        "diagnostics": {
            "every": config.diagnostics_every, "norms": tuple(float(s) for s in config.norms),
            "boundary_guard": config.boundary_guard, "blowup_factor": float(config.blowup_factor),
        },
    }
    if sch.h is not None:
        sections["model"]["h"] = float(sch.h)
    if disp.h is not None:
        sections["model"]["dispersion_h"] = float(disp.h)
    if study is not None:
        sections["study"] = {k: (tuple(float(x) for x in v) if isinstance(v, tuple) else float(v))
                             for k, v in vars(study).items()}
    out = []
    for name, keys in sections.items():
        out.append(f"[{name}]")
        order = [k for k in SCHEMA[name] if k in keys]
        for key in order:
            val = keys[key]
            if val == () or val == "":
                continue
            out.append(f"{key} = {_fmt(val)}")
        out.append("")
    return "\n".join(out)


def canonical_bytes(text: str) -> bytes:
    """Byte-level normalisation: LF line ends, comments and blank runs removed."""
    lines = []
    for line in text.replace("\r\n", "\n").replace("\r", "\n").split("\n"):
        body = line.split("#", 1)[0].strip()
        if body.startswith("["):
            lines.append(body.replace(" ", ""))
        elif "=" in body:
            k, v = body.split("=", 1)
            lines.append(f"{k.strip()} = {v.strip()}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def digest(text: str) -> str:
    return hashlib.sha256(canonical_bytes(text)).hexdigest()
