"""Staged experiment driver with an on-disk cache keyed by per-stage config hashes.

Stages run in order mesh, eigs, constants, snapshots, pod, fit, plot.  A stage
whose hash matches the manifest and whose files are present is loaded
instead of recomputed.  Written files contain no timings, so serial re-runs
are byte-identical.
"""
from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .constants import ConstantsReport, compute_constants
from .decay import DecayFit, compare_models
from .eigen import EigenPair, build_forcing_set, dirichlet_eigs
from .fem import DofMap, assemble_h1_gram, assemble_l2_gram_pressure, build_dofmap
from .mesh import BoundarySpec, Mesh, dump_polymesh, generate_obstacle_channel, generate_step_domain, \
    import_msh, load_polymesh
from .plot import emit_plot
from .pod import SnapshotSet, knw_curve
from .solver import solve_snapshot_set
from .store import read_csv, read_store, write_csv, write_store

__all__ = ["Pipeline", "ExperimentReport", "StageError", "run_pipeline", "STAGES", "build_mesh"]

log = logging.getLogger(__name__)

STAGES = ("mesh", "eigs", "constants", "snapshots", "pod", "fit", "plot")

_FILES = {
    "mesh": ("mesh.txt",),
    "eigs": ("eigs.pods", "eigs.csv"),
    "constants": ("constants.csv",),
    "snapshots": ("snapshots.pods",),
    "pod": ("pod.pods", "knw_curve.csv"),
    "fit": ("fit_report.txt",),
    "plot": ("decay.svg",),
}
_HASH_OF = {"plot": "fit"}
MANIFEST = "manifest.json"


class StageError(RuntimeError):
    """A stage failed; earlier stages stay persisted in the output directory."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    out: Path
    mesh: Mesh | None = None
    constants: ConstantsReport | None = None
    curve: dict | None = None
    fits: dict = field(default_factory=dict)  # series -> ranked list of DecayFit
    max_u_norm: float | None = None
    cache_hits: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def primary_fit(self, series: str = "eps_u", a: float = 1 / 3) -> DecayFit:
        for f in self.fits[series]:
            if abs(f.a - a) < 1e-12:
                return f
        raise KeyError(f"no fit with exponent {a} for {series}")


def build_mesh(config: ExperimentConfig) -> Mesh:
    if config.geometry == "step":
        return generate_step_domain(config.h)
    if config.geometry == "obstacle_channel":
        return generate_obstacle_channel(config.h)
    path = Path(config.geometry)
    text = path.read_text()
    if text.startswith("POLYMESH"):
        return load_polymesh(text)
    return import_msh(text)


class Pipeline:
    def __init__(self, config: ExperimentConfig, out, serial: bool = True):
        self.config = config
        self.out = Path(out)
        self.serial = serial
        self.out.mkdir(parents=True, exist_ok=True)
        self.report = ExperimentReport(config, self.out)
        self._manifest = self._read_manifest()
        self._mesh = None
        self._dofmaps = {}
        self._eigs = None
        self._constants = None
        self._snapshots = None
        self._curve = None
        self._fits = None

    # -- cache bookkeeping -------------------------------------------------
    def _read_manifest(self) -> dict:
        p = self.out / MANIFEST
        if not p.exists():
            return {}
        try:
            return json.loads(p.read_text())
        except (OSError, ValueError):
            return {}

    def _hash(self, stage):
        return self.config.stage_hash(_HASH_OF.get(stage, stage))

    def _cached(self, stage) -> bool:
        return (self._manifest.get(stage) == self._hash(stage)
                and all((self.out / f).exists() for f in _FILES[stage]))

    def _mark(self, stage):
        self._manifest[stage] = self._hash(stage)
        (self.out / MANIFEST).write_text(json.dumps(self._manifest, indent=1, sort_keys=True) + "\n")

    def _stage(self, stage, load, compute):
        t = time.perf_counter()
        try:
            if self._cached(stage):
                try:
                    value = load()
                    self.report.cache_hits.append(stage)
                    log.info("stage %s: cache hit", stage)
                    return value
                except (OSError, ValueError, KeyError) as exc:
                    log.warning("stage %s: cache unreadable (%s); recomputing", stage, exc)
            self._manifest.pop(stage, None)
            value = compute()
            self._mark(stage)
            return value
        except (ConfigError, StageError):
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc
        finally:
            self.report.timings[stage] = time.perf_counter() - t

    def dofmap(self, boundary: bool = True) -> DofMap:
        """Velocity dofmap with the configured boundary kinds, or all-Dirichlet."""
        mesh = self.mesh()
        if boundary not in self._dofmaps:
            kinds = (self.config.boundary_kinds(mesh) if boundary
                     else {t: "dirichlet" for t in mesh.segment_tags})
            missing = set(mesh.segment_tags) - set(kinds)
            if missing:
                raise ConfigError(f"boundary tags without a kind: {sorted(missing)}")
            self._dofmaps[boundary] = build_dofmap(mesh, BoundarySpec(kinds))
        return self._dofmaps[boundary]

    # -- stages ----------------------------------------------------------
    def mesh(self) -> Mesh:
        if self._mesh is None:
            path = self.out / "mesh.txt"

            def compute():
                m = build_mesh(self.config)
                path.write_text(dump_polymesh(m))
                return m

            self._mesh = self._stage("mesh", lambda: load_polymesh(path.read_text()), compute)
            self.report.mesh = self._mesh
        return self._mesh

    def eigs(self) -> list[EigenPair]:
        if self._eigs is None:
            d = self.dofmap(boundary=False)
            store, table = self.out / "eigs.pods", self.out / "eigs.csv"

            def load():
                s = read_store(store)
                lam, vec = s["lambda"].ravel(), s["vectors"]
                return [EigenPair(float(l), vec[:, k]) for k, l in enumerate(lam)]

            def compute():
                pairs = dirichlet_eigs(d, self.config.N, tol=self.config.eig_tol, seed=self.config.seed)
                write_store(store, {"lambda": np.array([p.lam for p in pairs]),
                                    "vectors": np.column_stack([p.vector for p in pairs])})
                write_csv(table, ["k", "lambda_k"], [(k + 1, p.lam) for k, p in enumerate(pairs)])
                return pairs

            self._eigs = self._stage("eigs", load, compute)
        return self._eigs

    def constants(self) -> ConstantsReport:
        if self._constants is None:
            cfg = self.config
            path = self.out / "constants.csv"

            def load():
                _, rows = read_csv(path)
                vals = {r[0]: r[1] for r in rows}
                return ConstantsReport(float(vals["c_coer"]), float(vals["c_cont"]),
                                       int(float(vals["c_cont_restarts"])),
                                       vals["estimated"] == "1")

            def compute():
                if cfg.overridden:
                    rep = ConstantsReport(cfg.c_coer, cfg.c_cont, 0, estimated=False)
                else:
                    rep = compute_constants(self.dofmap(), restarts=cfg.restarts,
                                            iters=cfg.cont_iters, seed=cfg.seed)
                write_csv(path, ["name", "value"], [
                    ("c_coer", rep.c_coer), ("c_cont", rep.c_cont),
                    ("c_cont_restarts", rep.c_cont_restarts),
                    ("estimated", int(rep.estimated)),
                ])
                return rep

            self._constants = self._stage("constants", load, compute)
            self.report.constants = self._constants
        return self._constants

    def snapshots(self) -> SnapshotSet:
        if self._snapshots is None:
            cfg = self.config
            eigs = self.eigs()
            rep = self.constants()
            d = self.dofmap()
            path = self.out / "snapshots.pods"

            def grams():
                return assemble_h1_gram(d, "velocity"), assemble_l2_gram_pressure(d)

            def load():
                s = read_store(path)
                Gu, Gp = grams()
                return SnapshotSet(s["M_u"], s["M_p"], Gu, Gp, s["indices"].ravel().astype(int))

            def compute():
                fs = build_forcing_set(eigs, d, rep.threshold(cfg.nu))
                snaps, _ = solve_snapshot_set(d, cfg.nu, fs, tol=cfg.newton_tol, form=cfg.form,
                                              serial=self.serial, workers=cfg.workers,
                                              max_iters=cfg.max_iters)
                write_store(path, {"M_u": snaps.M_u, "M_p": snaps.M_p,
                                   "indices": snaps.indices.astype(float),
                                   "forcing_norms": fs.norms, "forcing_scales": fs.scales})
                return snaps

            self._snapshots = self._stage("snapshots", load, compute)
            S = self._snapshots
            self.report.max_u_norm = float(np.sqrt(np.max(np.einsum("ij,ij->j", S.M_u, S.G_u @ S.M_u))))
        return self._snapshots

    def pod(self) -> dict:
        if self._curve is None:
            snaps = self.snapshots()
            path, table = self.out / "pod.pods", self.out / "knw_curve.csv"

            def load():
                s = read_store(path)
                return {"n": s["n"].ravel().astype(int), "eps_u": s["eps_u"].ravel(),
                        "eps_p": s["eps_p"].ravel()}

            def compute():
                n_values = [n for n in self.config.n_values if n <= snaps.N]
                if len(n_values) < len(self.config.n_values):
                    warnings.warn(f"only {snaps.N} snapshots converged; n values above it dropped",
                                  stacklevel=2)
                curve = knw_curve(snaps, n_values)
                write_store(path, {"n": curve["n"].astype(float), "eps_u": curve["eps_u"],
                                   "eps_p": curve["eps_p"]})
                write_csv(table, ["n", "eps_u", "eps_p"],
                          [(int(n), float(u), float(p))
                           for n, u, p in zip(curve["n"], curve["eps_u"], curve["eps_p"])])
                return curve

            self._curve = self._stage("pod", load, compute)
            self.report.curve = self._curve
        return self._curve

    def _fit_all(self, curve) -> dict:
        cfg = self.config
        fits = {}
        for series in ("eps_u", "eps_p"):
            pts = list(zip(curve["n"], curve[series]))
            fits[series] = compare_models(pts, cfg.exponents, tau=cfg.tau, slope_factor=cfg.slope_factor)
        return fits

    def fit(self) -> dict:
        if self._fits is None:
            curve = self.pod()
            path = self.out / "fit_report.txt"

            def compute():
                fits = self._fit_all(curve)
                path.write_text(self._report_text(fits))
                return fits

            # fits are cheap and fully determined by the stored curve
            self._fits = self._stage("fit", lambda: self._fit_all(curve), compute)
            self.report.fits = self._fits
        return self._fits

    def plot(self) -> str:
        fits = self.fit()
        curve = self.pod()
        path = self.out / "decay.svg"

        def compute():
            primary = []
            for series, ranked in fits.items():
                primary += [(series, f) for f in ranked if abs(f.a - self.config.exponents[0]) < 1e-12]
            svg = emit_plot(curve, primary)
            path.write_text(svg)
            return svg

        return self._stage("plot", path.read_text, compute)

    def run(self) -> ExperimentReport:
        self.mesh()
        self.constants()
        self.eigs()
        self.snapshots()
        self.pod()
        self.fit()
        self.plot()
        return self.report

    def _report_text(self, fits) -> str:
        cfg, rep, mesh = self.config, self.constants(), self.mesh()
        lines = [
            f"config_hash = {cfg.config_hash()}",
            f"geometry = {cfg.geometry}",
            f"h = {cfg.h!r}",
            f"vertices = {mesh.n_vertices}",
            f"triangles = {mesh.n_triangles}",
            f"boundary = {', '.join(f'{t}:{k}' for t, k in sorted(cfg.boundary_kinds(mesh).items()))}",
            f"nu = {cfg.nu!r}",
            f"N = {cfg.N}",
            f"snapshots = {self.snapshots().N}",
            f"form = {cfg.form}",
            "",
            rep.as_text(cfg.nu).rstrip(),
            f"max_u_norm = {self.report.max_u_norm:.17g}",
            "",
        ]
        for series, ranked in fits.items():
            lines.append(f"[{series}] ranked by R2")
            lines += ["  " + f.as_text() for f in ranked]
        return "\n".join(lines) + "\n"


def run_pipeline(config: ExperimentConfig, out, serial: bool = True) -> ExperimentReport:
    return Pipeline(config, out, serial=serial).run()
