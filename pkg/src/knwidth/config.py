"""Experiment configuration: INI parsing, boundary presets and stage hashes.

Example file::

    [geometry]
    kind = obstacle_channel     ; step, obstacle_channel, or a path to .msh/.polymesh
    h = 0.02

    [boundary]
    preset = mixed_dn           ; or list tags explicitly: inlet = neumann, ...

    [physics]
    nu = 1
    form = sym_grad

    [parameters]
    N = 100
    n_values = 1-100            ; ranges and comma lists; default 1..N

    [constants]
    restarts = 20
    c_coer =                    ; both set -> skip the estimation
    c_cont =

    [solver]
    tol = 1e-10

    [fit]
    tau = 1e-8
    exponents = 1/3, 1/2, 1

    [run]
    seed = 0
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .mesh import Mesh

__all__ = ["ConfigError", "ExperimentConfig", "PRESETS", "expand_preset", "load_config",
           "parse_config", "parse_n_values"]


class ConfigError(ValueError):
    pass


PRESETS = {
    "step": {
        "dirichlet": {"inlet": "dirichlet", "outlet": "dirichlet", "wall": "dirichlet",
                      "step_vertical": "dirichlet", "step_horizontal": "dirichlet"},
        "mixed_dn": {"inlet": "neumann", "outlet": "neumann", "wall": "dirichlet",
                     "step_vertical": "dirichlet", "step_horizontal": "dirichlet"},
        "mixed_slip": {"inlet": "neumann", "outlet": "neumann", "wall": "slip",
                       "step_vertical": "dirichlet", "step_horizontal": "slip"},
    },
    "obstacle_channel": {
        "dirichlet": {"inlet": "dirichlet", "outlet": "dirichlet", "wall": "dirichlet",
                      "obstacle": "dirichlet"},
        "mixed_dn": {"inlet": "neumann", "outlet": "neumann", "wall": "dirichlet",
                     "obstacle": "dirichlet"},
        "mixed_slip": {"inlet": "neumann", "outlet": "neumann", "wall": "slip",
                       "obstacle": "dirichlet"},
    },
}

FORMS = ("sym_grad", "grad_grad")
KINDS = ("dirichlet", "neumann", "slip")


def expand_preset(geometry: str, preset: str, mesh: Mesh | None = None) -> dict[str, str]:
    """Tag -> kind map of a named preset.

    Imported meshes have no fixed tag vocabulary, so only ``dirichlet``
    expands for them (every tag of ``mesh``).
    """
    if geometry in PRESETS:
        try:
            return dict(PRESETS[geometry][preset])
        except KeyError:
            raise ConfigError(f"unknown boundary preset {preset!r}") from None
    if preset != "dirichlet":
        raise ConfigError(f"preset {preset!r} is only defined for built-in geometries; "
                          "list the tags explicitly")
    if mesh is None:
        raise ConfigError("expanding a preset for an imported mesh needs the mesh")
    return {t: "dirichlet" for t in mesh.segment_tags}


def parse_n_values(text: str, N: int) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return tuple(range(1, N + 1))
    out = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise ConfigError(f"bad n_values entry {part!r}") from None
    vals = tuple(sorted(set(out)))
    if not vals or vals[0] < 1 or vals[-1] > N:
        raise ConfigError(f"n_values must lie in [1, {N}]")
    return vals


def _parse_exponent(s: str) -> float:
    try:
        return float(Fraction(s.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"bad exponent {s!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: str = "obstacle_channel"
    h: float = 0.02
    bc_preset: str | None = "dirichlet"
    bc_tags: tuple = ()  # explicit (tag, kind) pairs; used when bc_preset is None
    nu: float = 1.0
    N: int = 100
    n_values: tuple = ()
    form: str = "sym_grad"
    c_coer: float | None = None
    c_cont: float | None = None
    restarts: int = 20
    cont_iters: int = 200
    seed: int = 0
    eig_tol: float = 1e-10
    newton_tol: float = 1e-10
    max_iters: int = 25
    workers: int = 2
    tau: float = 1e-8
    slope_factor: float = 3.0
    exponents: tuple = (1 / 3, 1 / 2, 1.0)

    def __post_init__(self):
        if not self.n_values:
            object.__setattr__(self, "n_values", tuple(range(1, self.N + 1)))
        self.validate()

    def validate(self):
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if not self.nu > 0:
            raise ConfigError("nu must be positive")
        if not self.h > 0:
            raise ConfigError("h must be positive")
        if self.form not in FORMS:
            raise ConfigError(f"form must be one of {FORMS}")
        if (self.c_coer is None) != (self.c_cont is None):
            raise ConfigError("constants override needs both c_coer and c_cont")
        if self.c_coer is not None and not (self.c_coer > 0 and self.c_cont > 0):
            raise ConfigError("override constants must be positive")
        if self.bc_preset is None and not self.bc_tags:
            raise ConfigError("no boundary preset and no tag assignments")
        for tag, kind in self.bc_tags:
            if kind not in KINDS:
                raise ConfigError(f"tag {tag!r}: unknown boundary kind {kind!r}")
        if min(self.n_values) < 1 or max(self.n_values) > self.N:
            raise ConfigError(f"n_values must lie in [1, {self.N}]")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")

    @property
    def builtin(self) -> bool:
        return self.geometry in PRESETS

    @property
    def overridden(self) -> bool:
        return self.c_coer is not None

    def boundary_kinds(self, mesh: Mesh | None = None) -> dict[str, str]:
        if self.bc_preset is not None:
            return expand_preset(self.geometry, self.bc_preset, mesh)
        return dict(self.bc_tags)

    def replace(self, **changes) -> "ExperimentConfig":
        if "N" in changes and "n_values" not in changes:
            changes["n_values"] = ()
        return dataclasses.replace(self, **changes)

    def canonical(self) -> str:
        return "\n".join(f"{f.name}={getattr(self, f.name)!r}" for f in dataclasses.fields(self))

    def _digest(self, names) -> str:
        text = "\n".join(f"{n}={getattr(self, n)!r}" for n in names)
        if "geometry" in names and not self.builtin:
            p = Path(self.geometry)
            if p.exists():
                text += "\nmesh_sha=" + hashlib.sha256(p.read_bytes()).hexdigest()
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def stage_hash(self, stage: str) -> str:
        """Hash of the fields a stage's output depends on."""
        mesh = ("geometry", "h")
        bc = mesh + ("bc_preset", "bc_tags")
        deps = {
            "mesh": mesh,
            "eigs": mesh + ("N", "eig_tol", "seed"),
            "constants": bc + ("c_coer", "c_cont", "restarts", "cont_iters", "seed"),
        }
        deps["snapshots"] = tuple(dict.fromkeys(deps["eigs"] + deps["constants"]
                                                + ("nu", "form", "newton_tol", "max_iters")))
        deps["pod"] = deps["snapshots"] + ("n_values",)
        deps["fit"] = deps["pod"] + ("tau", "slope_factor", "exponents")
        if stage not in deps:
            raise KeyError(stage)
        return self._digest(deps[stage])


_KNOWN = {
    "geometry": {"kind", "h"},
    "boundary": None,  # preset plus arbitrary tag keys
    "physics": {"nu", "form"},
    "parameters": {"n", "n_values"},
    "constants": {"restarts", "iters", "c_coer", "c_cont"},
    "solver": {"tol", "max_iters", "workers", "eig_tol"},
    "fit": {"tau", "slope_factor", "exponents"},
    "run": {"seed"},
}


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # boundary tag names are case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    sections = {}
    for sec in cp.sections():
        if sec not in _KNOWN:
            raise ConfigError(f"unknown section [{sec}]")
        allowed = _KNOWN[sec]
        items = dict(cp[sec])
        if allowed is not None:
            items = {k.lower(): v for k, v in items.items()}
            for key in items:
                if key not in allowed:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]")
        sections[sec] = items

    def get(sec, key, conv, default):
        raw = sections.get(sec, {}).get(key, "").strip()
        if raw == "":
            return default
        try:
            return conv(raw)
        except ValueError:
            raise ConfigError(f"[{sec}] {key} = {raw!r} is not a valid {conv.__name__}") from None

    kw = {}
    geom = get("geometry", "kind", str, "obstacle_channel")
    if geom not in PRESETS and base_dir is not None and not Path(geom).is_absolute():
        geom = str((base_dir / geom).resolve())
    kw["geometry"] = geom
    kw["h"] = get("geometry", "h", float, 0.02)
    if "boundary" in sections:
        tags = {k: v.strip() for k, v in sections["boundary"].items() if k != "preset"}
        preset = get("boundary", "preset", str, None)
        if tags and preset:
            raise ConfigError("[boundary] mixes a preset with explicit tags")
        kw["bc_preset"] = preset
        kw["bc_tags"] = tuple(sorted(tags.items()))
        if preset is None and not tags:
            kw["bc_preset"] = "dirichlet"
    kw["nu"] = get("physics", "nu", float, 1.0)
    kw["form"] = get("physics", "form", str, "sym_grad")
    N = get("parameters", "n", int, 100)
    kw["N"] = N
    kw["n_values"] = parse_n_values(get("parameters", "n_values", str, ""), N)
    kw["restarts"] = get("constants", "restarts", int, 20)
    kw["cont_iters"] = get("constants", "iters", int, 200)
    kw["c_coer"] = get("constants", "c_coer", float, None)
    kw["c_cont"] = get("constants", "c_cont", float, None)
    kw["newton_tol"] = get("solver", "tol", float, 1e-10)
    kw["eig_tol"] = get("solver", "eig_tol", float, 1e-10)
    kw["max_iters"] = get("solver", "max_iters", int, 25)
    kw["workers"] = get("solver", "workers", int, 2)
    kw["tau"] = get("fit", "tau", float, 1e-8)
    kw["slope_factor"] = get("fit", "slope_factor", float, 3.0)
    exps = get("fit", "exponents", str, None)
    if exps is not None:
        kw["exponents"] = tuple(_parse_exponent(s) for s in exps.split(",") if s.strip())
    kw["seed"] = get("run", "seed", int, 0)
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)
