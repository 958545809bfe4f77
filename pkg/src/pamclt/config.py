"""Experiment configuration: one INI file describes one reproducible run.

Sections: [model], [grid], [ensemble], [verify].  A manifest written next
to the outputs repeats the resolved configuration and adds a [provenance]
section (tool version, config hash, per-file data checksums), and is itself
a loadable configuration, so manifests round-trip into identical runs.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .harness import GridFamily, HarnessError
from .kernels import CovarianceModel, ModelError

_MODEL_KINDS = ("riesz", "gaussian", "cauchy", "white", "tabulated")


class ConfigError(ValueError):
    """Configuration failed validation; carries per-field diagnostics."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = "\n".join(f"  {path}: {msg}" for path, msg in self.problems)
        super().__init__(f"invalid configuration:\n{lines}")


@dataclass(frozen=True)
class VerifySettings:
    limits: bool = True
    slope_tol: float = 0.15
    normality: bool = True
    skew_max: float = 0.2
    kurt_max: float = 0.3
    ks_max: float = 0.05


@dataclass(frozen=True)
class RunConfig:
    model: CovarianceModel
    family: GridFamily
    times: tuple
    replicas: int
    master_seed: int
    verify: VerifySettings = field(default_factory=VerifySettings)

    def canonical_text(self) -> str:
        """Normalized INI rendering; the basis of the config hash."""
        cp = configparser.ConfigParser()
        m = self.model
        model = {"kind": m.kind, "dim": str(m.dim)}
        if m.beta is not None:
            model["beta"] = repr(m.beta)
        if m.kind == "tabulated":
            model["radii"] = ",".join(repr(x) for x in m.table_radii)
            model["density"] = ",".join(repr(x) for x in m.table_density)
            model["rajchman"] = str(m.rajchman).lower()
        cp["model"] = model
        grid = {
            "h": repr(self.family.h),
            "dt": repr(self.family.dt),
            "horizon": repr(self.family.horizon),
            "n_list": ",".join(repr(x) for x in self.family.n_list),
        }
        if self.family.ray_period is not None:
            grid["ray_period"] = repr(self.family.ray_period)
        cp["grid"] = grid
        cp["ensemble"] = {
            "replicas": str(self.replicas),
            "seed": str(self.master_seed),
            "times": ",".join(repr(x) for x in self.times),
        }
        v = self.verify
        cp["verify"] = {
            "limits": str(v.limits).lower(),
            "slope_tol": repr(v.slope_tol),
            "normality": str(v.normality).lower(),
            "skew_max": repr(v.skew_max),
            "kurt_max": repr(v.kurt_max),
            "ks_max": repr(v.ks_max),
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def _parse_floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def load_config(path, seed_override: Optional[int] = None) -> RunConfig:
    """Parse and validate a config file, collecting every problem found."""
    cp = configparser.ConfigParser()
    read = cp.read(str(path))
    if not read:
        raise ConfigError([("file", f"cannot read {path}")])
    problems: list[tuple[str, str]] = []

    def take(section, key, conv, default=None, required=False):
        if not cp.has_option(section, key):
            if required:
                problems.append((f"{section}.{key}", "missing required field"))
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except Exception as exc:
            problems.append((f"{section}.{key}", f"bad value {raw!r}: {exc}"))
            return default

    for sec in ("model", "grid", "ensemble"):
        if not cp.has_section(sec):
            problems.append((sec, "missing section"))
    if problems:
        raise ConfigError(problems)

    kind = take("model", "kind", str, required=True)
    dim = take("model", "dim", int, required=True)
    beta = take("model", "beta", float)
    rajchman = take("model", "rajchman", lambda s: s.lower() == "true", default=False)
    model = None
    if kind not in _MODEL_KINDS:
        problems.append(("model.kind", f"unknown kind {kind!r}; expected one of {_MODEL_KINDS}"))
    elif dim is not None:
        try:
            if kind == "riesz":
                model = CovarianceModel.riesz(beta if beta is not None else -1.0, dim)
            elif kind == "gaussian":
                model = CovarianceModel.gaussian(dim)
            elif kind == "cauchy":
                model = CovarianceModel.cauchy()
            elif kind == "white":
                model = CovarianceModel.white()
            else:
                # tabulated data arrives either as a CSV path or inline
                # (manifests store the resolved samples inline)
                if cp.has_option("model", "radii") and cp.has_option("model", "density"):
                    radii = take("model", "radii", _parse_floats)
                    density = take("model", "density", _parse_floats)
                    model = CovarianceModel.tabulated(radii, density, dim, rajchman)
                else:
                    table = take("model", "table", str, required=True)
                    if table is not None:
                        radii, density = _read_table(Path(path).parent / table)
                        model = CovarianceModel.tabulated(radii, density, dim, rajchman)
        except (ModelError, OSError, ValueError) as exc:
            problems.append(("model", str(exc)))

    h = take("grid", "h", float, required=True)
    dt = take("grid", "dt", float, required=True)
    horizon = take("grid", "horizon", float, required=True)
    n_list = take("grid", "n_list", _parse_floats, required=True)
    ray_period = take("grid", "ray_period", float)
    family = None
    if None not in (h, dt, horizon, n_list):
        try:
            family = GridFamily(dim=dim, h=h, dt=dt, horizon=horizon,
                                n_list=tuple(n_list), ray_period=ray_period)
        except HarnessError as exc:
            problems.append(("grid", str(exc)))

    replicas = take("ensemble", "replicas", int, required=True)
    seed = take("ensemble", "seed", int, required=True)
    times = take("ensemble", "times", _parse_floats, required=True)
    if seed_override is not None:
        seed = seed_override
    if replicas is not None and replicas < 1:
        problems.append(("ensemble.replicas", "must be >= 1"))
    if times is not None:
        for t in times:
            if t <= 0:
                problems.append(("ensemble.times", f"time {t} not positive"))
            elif horizon is not None and t > horizon * (1 + 1e-12):
                problems.append(("ensemble.times", f"time {t} beyond horizon {horizon}"))
            elif dt is not None and abs(t / dt - round(t / dt)) > 1e-9:
                problems.append(("ensemble.times", f"time {t} is not a multiple of dt"))

    vs = VerifySettings(
        limits=take("verify", "limits", lambda s: s.lower() == "true", default=True),
        slope_tol=take("verify", "slope_tol", float, default=0.15),
        normality=take("verify", "normality", lambda s: s.lower() == "true", default=True),
        skew_max=take("verify", "skew_max", float, default=0.2),
        kurt_max=take("verify", "kurt_max", float, default=0.3),
        ks_max=take("verify", "ks_max", float, default=0.05),
    ) if cp.has_section("verify") else VerifySettings()

    if problems or model is None or family is None:
        if not problems:
            problems.append(("config", "incomplete configuration"))
        raise ConfigError(problems)
    return RunConfig(
        model=model,
        family=family,
        times=tuple(times),
        replicas=replicas,
        master_seed=seed,
        verify=vs,
    )


def _read_table(path) -> tuple:
    """Two-column CSV (radius, density), strictly increasing radii."""
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    if rows.shape[1] != 2:
        raise ValueError(f"expected two columns in {path}")
    return rows[:, 0].tolist(), rows[:, 1].tolist()


def write_manifest(path, config: RunConfig, checksums: dict) -> None:
    text = config.canonical_text()
    cp = configparser.ConfigParser()
    cp.read_string(text)
    prov = {"version": __version__, "config_hash": config.config_hash()}
    for name, digest in checksums.items():
        prov[f"sha256_{name}"] = digest
    cp["provenance"] = prov
    with open(path, "w") as fh:
        cp.write(fh)


def read_manifest_checksums(path) -> dict:
    cp = configparser.ConfigParser()
    if not cp.read(str(path)) or not cp.has_section("provenance"):
        return {}
    return {
        k[len("sha256_"):]: v
        for k, v in cp.items("provenance")
        if k.startswith("sha256_")
    }
