"""Scenario configuration for the command-line runner.

A scenario is a JSON object with ``"schema_version": 1``.  Unknown keys are
rejected at every level, so a misspelled tolerance fails loudly instead of
silently falling back to its default.  Schema (all sections but ``model``
optional)::

    model:        {kind, dim, params, seed}
    perturbation: {kind, strength, seed, k, sites, width}
    coupling:     {kind, c, scale, seed}
    window:       [lo, hi]                     spectral window of H
    window1:      [lo, hi] | null              window of H1 (default: widened)
    schedules:    {time: {t_max, step, abel_rate}, epsilon: {points}}
    smoothness:   {G, eps_min, len_min, t_window, probe_count, spread_tol}
    acdiag:       {G, grid: [lo, hi, points], bound}
    wave:         {method, sign}
    tolerances:   {kr_tol, exact_tol, conv_tol, fit_tol, range_tol}
    outputs:      {dir, csv, json}

``G`` is ``{"kind": "identity"}``, ``{"kind": "position_cutoff", "sites": [...],
"normalize": "hs" | null}`` or ``{"kind": "cutoff_product", "sites": [...], "n": 8,
"family": "hard" | "ramp" | "density", "eps": ...}`` (position cutoff times
``omega_n(H)``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import MeshResolutionError, ValidationError
from .models import ModelSpec, build_coupling, build_operator, build_perturbation, position_cutoff
from .operator_core import HermitianOperator, SpectralResolution, spectral_decompose
from .smoothness import SPACING_FACTOR, cutoff_operator

SCHEMA_VERSION = 1
BUNDLED = ("kr_rank1",)

_SECTIONS = {
    "schema_version", "model", "perturbation", "coupling", "window", "window1",
    "schedules", "smoothness", "acdiag", "wave", "tolerances", "outputs",
}
_KEYS = {
    "model": {"kind", "dim", "params", "seed"},
    "perturbation": {"kind", "strength", "seed", "k", "sites", "width"},
    "coupling": {"kind", "c", "scale", "seed"},
    "schedules": {"time", "epsilon"},
    "time": {"t_max", "step", "abel_rate"},
    "epsilon": {"points"},
    "smoothness": {"G", "eps_min", "len_min", "t_window", "probe_count", "spread_tol"},
    "acdiag": {"G", "grid", "bound"},
    "wave": {"method", "sign"},
    "tolerances": {"kr_tol", "exact_tol", "conv_tol", "fit_tol", "range_tol"},
    "outputs": {"dir", "csv", "json"},
    "G": {"kind", "sites", "normalize", "n", "family", "eps"},
}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ValidationError(f"{where} must be an object")
    extra = sorted(set(obj) - allowed)
    if extra:
        raise ValidationError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _window(v, where):
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ValidationError(f"{where} must be [lo, hi]")
    lo, hi = float(v[0]), float(v[1])
    if not lo < hi:
        raise ValidationError(f"{where} must satisfy lo < hi")
    return lo, hi


@dataclass(frozen=True)
class ScenarioConfig:
    model: ModelSpec
    perturbation: dict = field(default_factory=dict)
    coupling: dict = field(default_factory=lambda: {"kind": "identity"})
    window: tuple = (1.0, 3.0)
    window1: tuple | None = None
    time_schedule: dict = field(default_factory=dict)
    eps_points: tuple | None = None
    smoothness: dict = field(default_factory=dict)
    acdiag: dict = field(default_factory=dict)
    wave: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict, seed: int | None = None) -> "ScenarioConfig":
        _check_keys(doc, _SECTIONS, "config")
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError(f"schema_version must be {SCHEMA_VERSION}")
        if "model" not in doc:
            raise ValidationError("config needs a model section")
        m = doc["model"]
        _check_keys(m, _KEYS["model"], "model")
        model = ModelSpec(
            kind=m.get("kind", "path_laplacian"),
            dim=int(m.get("dim", 0)),
            params=dict(m.get("params", {})),
            seed=int(m.get("seed", 0) if seed is None else seed),
        )
        pert = dict(doc.get("perturbation") or {})
        _check_keys(pert, _KEYS["perturbation"], "perturbation")
        coup = dict(doc.get("coupling") or {"kind": "identity"})
        _check_keys(coup, _KEYS["coupling"], "coupling")
        if seed is not None:
            pert["seed"] = seed
            coup["seed"] = seed
        sched = doc.get("schedules") or {}
        _check_keys(sched, _KEYS["schedules"], "schedules")
        tsched = dict(sched.get("time") or {})
        _check_keys(tsched, _KEYS["time"], "schedules.time")
        esched = sched.get("epsilon") or {}
        _check_keys(esched, _KEYS["epsilon"], "schedules.epsilon")
        eps = tuple(float(x) for x in esched["points"]) if "points" in esched else None
        sections = {}
        for name in ("smoothness", "acdiag", "wave", "tolerances", "outputs"):
            sec = dict(doc.get(name) or {})
            _check_keys(sec, _KEYS[name], name)
            if "G" in sec:
                _check_keys(sec["G"], _KEYS["G"], f"{name}.G")
            sections[name] = sec
        return cls(
            model=model,
            perturbation=pert,
            coupling=coup,
            window=_window(doc.get("window", (1.0, 3.0)), "window"),
            window1=None if doc.get("window1") is None else _window(doc["window1"], "window1"),
            time_schedule=tsched,
            eps_points=eps,
            **sections,
        )

    @classmethod
    def load(cls, path, seed: int | None = None) -> "ScenarioConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"unreadable config {path}: {exc.strerror}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc, seed)


@dataclass(frozen=True, eq=False)
class BuiltScenario:
    config: ScenarioConfig
    H: HermitianOperator
    V: HermitianOperator
    J: np.ndarray
    S: SpectralResolution


def build(cfg: ScenarioConfig) -> BuiltScenario:
    """Construct ``H``, ``V`` and ``J`` and run every cheap validation.

    Raises
    ------
    ValidationError
        On invalid specs or a window outside the spectrum of ``H``.
    MeshResolutionError
        If a configured ``eps`` is finer than three times the spacing of ``H``.
    """
    H = build_operator(cfg.model)
    S = spectral_decompose(H)
    lo, hi = cfg.window
    if lo < S.eigenvalues[0] or hi > S.eigenvalues[-1]:
        raise ValidationError(
            f"window outside spectral band [{S.eigenvalues[0]:.6g}, {S.eigenvalues[-1]:.6g}]"
        )
    n = H.dim
    p = cfg.perturbation
    if p:
        V = build_perturbation(p.get("kind", "rank_k"), n, float(p.get("strength", 0.0)),
                               int(p.get("seed", 0)), k=int(p.get("k", 1)), sites=p.get("sites"),
                               width=float(p.get("width", 2.0)))
    else:
        V = HermitianOperator(np.zeros((n, n)))
    c = cfg.coupling
    J = build_coupling(c.get("kind", "identity"), n, S=S, window=cfg.window, c=c.get("c", 0.0),
                       seed=int(c.get("seed", 0)), scale=float(c.get("scale", 1.0)))
    spacing = S.max_spacing(S.eigenvalues[0], S.eigenvalues[-1])
    if cfg.eps_points is not None and min(cfg.eps_points) < SPACING_FACTOR * spacing:
        raise MeshResolutionError(
            f"under-resolved mesh: eps={min(cfg.eps_points):g} below {SPACING_FACTOR:g} x spacing {spacing:g}"
        )
    return BuiltScenario(cfg, H, V, J, S)


def build_G(spec: dict, S: SpectralResolution) -> np.ndarray:
    """Operator ``G`` from a ``G`` config block."""
    kind = spec.get("kind", "position_cutoff")
    n = S.dim
    if kind == "identity":
        return np.eye(n, dtype=np.complex128)
    sites = spec.get("sites", [n // 2])
    P = position_cutoff(n, sites, spec.get("normalize"))
    if kind == "position_cutoff":
        return P
    if kind == "cutoff_product":
        W = cutoff_operator(S, int(spec.get("n", 8)), spec.get("family", "hard"),
                            P=P, eps=spec.get("eps"))
        return P @ W.matrix
    raise ValidationError(f"unknown G kind {kind!r}")


def bundled_scenario(name: str = "kr_rank1") -> Path:
    """Path of a scenario file shipped with the package."""
    if name not in BUNDLED:
        raise ValidationError(f"unknown bundled scenario {name!r}")
    return Path(str(resources.files("scatterkit") / "scenarios" / f"{name}.json"))
