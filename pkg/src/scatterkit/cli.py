"""Command-line scenario runner.

``scatterkit <spectrum|smoothness|acdiag|wave|verify-kr> --config FILE [--out DIR] [--seed N] [--threads N]``

Exit status: 0 when every requested check passes, 1 when a check fails, 2 on
invalid input (bad config, window outside the band, under-resolved mesh, I/O).
Reports contain no timestamps, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import tolerances as tol
from .config import BuiltScenario, ScenarioConfig, build, build_G
from .errors import ScatterkitError
from .io import density_histogram, emit_plotdata, write_json, write_text
from .operator_core import BorelSet, HermitianOperator, maxnorm, opnorm, spectral_projection
from .smoothness import RegularizationParams, ac_modulus, gamma_estimates
from .wave_ops import (
    KRConfig,
    Schedule,
    ScatteringPair,
    default_lambda_grid,
    resolve_kr_params,
    stationary_wave,
    time_dependent_wave,
    verify_kato_rosenblum,
    weak_wave,
)

SUBCOMMANDS = ("spectrum", "smoothness", "acdiag", "wave", "verify-kr")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scatterkit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"scatterkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="scenario JSON file")
        s.add_argument("--out", default=None, help="output directory (default: outputs.dir or '.')")
        s.add_argument("--seed", type=int, default=None, help="override every seed in the config")
        s.add_argument("--threads", type=int, default=None,
                       help="worker threads (fallback: SCATTERKIT_THREADS, then 1)")
        if name == "wave":
            s.add_argument("--method", choices=("time", "weak", "stationary"), default=None)
            s.add_argument("--sign", choices=("plus", "minus"), default=None)
    return p


def _threads(arg) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("SCATTERKIT_THREADS", "")
    return max(1, int(env)) if env.strip().isdigit() else 1


class _Outputs:
    def __init__(self, cfg: ScenarioConfig, out):
        self.dir = Path(out or cfg.outputs.get("dir", "."))
        self.csv = bool(cfg.outputs.get("csv", True))
        self.json = bool(cfg.outputs.get("json", True))
        self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.dir / name


def _tolerances(cfg: ScenarioConfig) -> dict:
    t = tol.defaults()
    t.update({k: float(v) for k, v in cfg.tolerances.items()})
    return t


def _params(cfg: ScenarioConfig, sc: BuiltScenario) -> RegularizationParams:
    sm = cfg.smoothness
    eps = float(sm.get("eps_min", 0.3))
    return RegularizationParams.checked(
        sc.S,
        eps_min=eps,
        len_min=float(sm.get("len_min", eps)),
        lambda_window=cfg.window,
        t_window=sm.get("t_window"),
        probe_count=int(sm.get("probe_count", 16)),
        seed=int(cfg.model.seed),
    )


def _run_spectrum(cfg, sc, out, tols) -> bool:
    S = sc.S
    recon = maxnorm(S.reconstruct() - sc.H.matrix)
    ok = recon <= tols["recon_tol"] * max(1.0, S.norm)
    if out.csv:
        emit_plotdata(S, "spectrum", out.path("spectrum.csv"))
        bins = max(4, S.dim // 8)
        emit_plotdata(density_histogram(S, S.eigenvalues[0], S.eigenvalues[-1], bins), "density",
                      out.path("density.csv"))
    if out.json:
        write_json(out.path("spectrum.json"), {
            "dim": S.dim,
            "min": float(S.eigenvalues[0]),
            "max": float(S.eigenvalues[-1]),
            "sweeps": int(S.sweeps),
            "reconstruction_residual": recon,
            "passed": bool(ok),
            "tolerances": tols,
        })
    return ok


def _run_smoothness(cfg, sc, out, tols) -> bool:
    params = _params(cfg, sc)
    G = build_G(cfg.smoothness.get("G", {"kind": "position_cutoff"}), sc.S)
    rep = gamma_estimates(G, sc.S, params)
    spread_tol = float(cfg.smoothness.get("spread_tol", tols["smooth_spread_tol"]))
    ok = all(np.isfinite(rep.gamma)) and rep.spread <= spread_tol
    if out.csv:
        write_text(out.path("smoothness.csv"), rep.csv_text())
    if out.json:
        doc = rep.as_dict()
        doc.update({"spread_tol": spread_tol, "passed": bool(ok), "tolerances": tols})
        write_json(out.path("smoothness.json"), doc)
    return ok


def _run_acdiag(cfg, sc, out, tols) -> bool:
    ac = cfg.acdiag
    lo, hi = cfg.window
    grid_spec = ac.get("grid", [lo, hi, 16])
    grid = np.linspace(float(grid_spec[0]), float(grid_spec[1]), int(grid_spec[2]))
    if "G" in ac:
        M = build_G(ac["G"], sc.S).conj().T
    else:
        M = spectral_projection(sc.S, BorelSet.interval(lo, hi))
    rep = ac_modulus(M, sc.S, grid, float(ac.get("bound", np.inf)))
    if out.csv:
        write_text(out.path("acdiag.csv"), rep.csv_text())
    if out.json:
        doc = rep.as_dict()
        doc["tolerances"] = tols
        write_json(out.path("acdiag.json"), doc)
    return rep.lipschitz_flag


def _kr_config(cfg: ScenarioConfig, sc: BuiltScenario, threads: int) -> KRConfig:
    ts = cfg.time_schedule
    t = cfg.tolerances
    kw = {k: float(t[k]) for k in ("kr_tol", "exact_tol", "conv_tol", "fit_tol", "range_tol") if k in t}
    return KRConfig(
        window=cfg.window,
        window1=cfg.window1,
        J=sc.J,
        abel_rate=ts.get("abel_rate"),
        t_max=ts.get("t_max"),
        t_step=float(ts.get("step", 10.0)),
        eps_schedule=cfg.eps_points,
        threads=threads,
        **kw,
    )


def _run_wave(cfg, sc, out, tols, method, sign, threads) -> bool:
    kc = _kr_config(cfg, sc, threads)
    H1 = HermitianOperator(sc.H.matrix + sc.V.matrix)
    # same windows and schedules as verify-kr
    prm = resolve_kr_params(sc.H, H1, kc)
    pair = ScatteringPair.band(sc.H, H1, prm["window"], prm["window1"], J=sc.J, snap=False)
    if method == "stationary":
        es = Schedule.epsilon(prm["eps_schedule"])
        res = stationary_wave(pair, sign, default_lambda_grid(pair, min(es.points)), es, kc.fit_tol)
    else:
        ts = Schedule.time(prm["t_max"], prm["t_step"], prm["abel_rate"])
        fn = time_dependent_wave if method == "time" else weak_wave
        res = fn(pair, sign, ts, kc.conv_tol)
    W = res.W
    support = opnorm(W - W @ pair.P.matrix)
    support1 = opnorm(pair.P1.matrix @ W - W)
    ok = res.converged and support <= kc.kr_tol and (method != "stationary" or support1 <= kc.kr_tol)
    stem = f"wave_{method}_{sign}"
    if out.csv:
        kind = "stationary" if method == "stationary" else "residual"
        emit_plotdata(res, kind, out.path(f"{stem}.csv"))
    if out.json:
        write_json(out.path(f"{stem}.json"), {
            "method": res.method,
            "sign": res.sign,
            "converged": res.converged,
            "flags": list(res.flags),
            "norm": opnorm(W),
            "support_residual": support,
            "range_support_residual": support1,
            "residual_trail": [float(x) for x in res.residual_trail],
            "params": {"window": list(prm["window"]), "window1": list(prm["window1"]),
                       "abel_rate": prm["abel_rate"], "t_max": prm["t_max"],
                       "eps_schedule": list(prm["eps_schedule"])},
            "passed": bool(ok),
            "tolerances": tols,
        })
    return ok


def _run_verify(cfg, sc, out, tols, threads) -> bool:
    rep = verify_kato_rosenblum(sc.H, sc.V.matrix, _kr_config(cfg, sc, threads))
    if out.json:
        write_text(out.path("kr_report.json"), rep.to_json())
    if out.csv:
        write_text(out.path("kr_trails.csv"), rep.csv_text())
    return rep.kr_verified


def run_scenario(command: str, config, out=None, seed=None, threads=None, method=None,
                 sign=None) -> int:
    """Run one subcommand and return its exit status."""
    try:
        cfg = config if isinstance(config, ScenarioConfig) else ScenarioConfig.load(config, seed)
        sc = build(cfg)
        outs = _Outputs(cfg, out)
        tols = _tolerances(cfg)
        n_threads = _threads(threads)
        if command == "spectrum":
            ok = _run_spectrum(cfg, sc, outs, tols)
        elif command == "smoothness":
            ok = _run_smoothness(cfg, sc, outs, tols)
        elif command == "acdiag":
            ok = _run_acdiag(cfg, sc, outs, tols)
        elif command == "wave":
            m = method or cfg.wave.get("method", "time")
            s = sign or cfg.wave.get("sign", "plus")
            ok = _run_wave(cfg, sc, outs, tols, m, s, n_threads)
        elif command == "verify-kr":
            ok = _run_verify(cfg, sc, outs, tols, n_threads)
        else:
            raise ScatterkitError(f"unknown subcommand {command!r}")
    except ScatterkitError as exc:
        print(f"scatterkit: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"scatterkit: I/O error: {exc}", file=sys.stderr)
        return 2
    print(f"scatterkit {command}: {'pass' if ok else 'FAIL'}")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    return run_scenario(args.command, args.config, args.out, args.seed, args.threads,
                        getattr(args, "method", None), getattr(args, "sign", None))


if __name__ == "__main__":
    sys.exit(main())
