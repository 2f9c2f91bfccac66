"""Command line: ``chordarc run cfg.json`` and ``chordarc sharpness cfg.json``.

Exit codes: 0 all bands met, 2 band violated, 3 configuration error,
4 infeasible level, 5 quadrature budget exceeded.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import verify as V
from .approximant import ApproximantError, build_level, choose_C1
from .extension import ExtensionError, PseudoharmonicExtension
from .geometry import BUILTIN_CURVES, CurveError, load_curve
from .modulus import builtin_boundary, modulus_from_config, tabulated_boundary, verify_regularity
from .quadrature import OctreeBudgetError

log = logging.getLogger("chordarc")

EXIT_OK, EXIT_BAND, EXIT_CONFIG, EXIT_LEVEL, EXIT_BUDGET = 0, 2, 3, 4, 5

# the pipeline trades g1 ray count for speed; see README
PIPELINE_EXTENSION = {"n_max": 10, "ray_degree": 7, "dist_ray_degree": 21}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    curve: object = "segment"
    modulus: dict = field(default_factory=lambda: {"family": "power", "alpha": 0.5})
    boundary: dict = field(default_factory=lambda: {"builtin": "abs_sqrt"})
    levels: list = field(default_factory=lambda: [3, 4, 5])
    theta: float = 0.4
    samples: dict = field(default_factory=dict)
    seed: int = 0
    extension: dict = field(default_factory=dict)
    output: str = "out"
    noise_ratio: float = 0.05
    harmonic_tol: float = 1e-3
    max_cells: int = 400_000
    sharpness: dict = field(default_factory=dict)

    def sample(self, key: str, default: int) -> int:
        return int(self.samples.get(key, default))


_KNOWN = set(ExperimentConfig.__dataclass_fields__)


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = ExperimentConfig(**raw)
    if not isinstance(cfg.levels, list) or not cfg.levels or not all(isinstance(n, int) for n in cfg.levels):
        raise ConfigError("levels must be a nonempty list of integers")
    if min(cfg.levels) < 3:
        raise ConfigError("levels must be >= 3")
    if not 0.0 < float(cfg.theta) <= 1.0:
        raise ConfigError("theta must lie in (0, 1]")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def make_curve(spec):
    if isinstance(spec, str):
        spec = {"builtin": spec}
    if not isinstance(spec, dict):
        raise ConfigError("curve must be a builtin name or an object")
    if "path" in spec:
        return load_curve(spec["path"])
    name = spec.get("builtin")
    if name not in BUILTIN_CURVES:
        raise ConfigError(f"unknown builtin curve {name!r}; choose from {sorted(BUILTIN_CURVES)}")
    kw = {k: v for k, v in spec.items() if k != "builtin"}
    return BUILTIN_CURVES[name](**kw)


def make_boundary(curve, spec: dict):
    if "tabulated" in spec:
        tab = spec["tabulated"]
        return tabulated_boundary(curve, tab["s"], tab["f"])
    name = spec.get("builtin")
    kw = {k: v for k, v in spec.items() if k != "builtin"}
    return builtin_boundary(curve, name, **kw)


def _setup(cfg: ExperimentConfig):
    try:
        curve = make_curve(cfg.curve)
        modulus = modulus_from_config(cfg.modulus)
        bd = make_boundary(curve, cfg.boundary)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad config entry: {exc}") from None
    except CurveError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return curve, modulus, bd


def run_experiment(cfg: ExperimentConfig) -> tuple[V.DecayReport, dict]:
    """Build and verify every level; returns the report and the approximant summaries."""
    curve, modulus, bd = _setup(cfg)
    ext_kw = dict(PIPELINE_EXTENSION)
    ext_kw.update(cfg.extension)
    try:
        ext = PseudoharmonicExtension(curve, bd, modulus, **ext_kw)
    except TypeError as exc:
        raise ConfigError(f"bad extension settings: {exc}") from None
    alphas = V.alpha_decay(ext, cfg.levels, samples=cfg.sample("alpha", 100), rng=np.random.default_rng(cfg.seed))
    report = V.DecayReport(meta={"seed": cfg.seed, "theta": cfg.theta, "levels": cfg.levels,
                                 "curve": cfg.curve, "modulus": modulus.params(), "boundary": cfg.boundary,
                                 "extension": ext_kw, "band_ratio": V.BAND_RATIO,
                                 "noise_ratio": cfg.noise_ratio, "harmonic_tol": cfg.harmonic_tol})
    summaries = {}
    for n, alpha in zip(cfg.levels, alphas):
        t0 = time.perf_counter()
        rng = np.random.default_rng([cfg.seed, n])
        approx = build_level(ext, n, theta=cfg.theta, C1=choose_C1(curve, n), max_cells=cfg.max_cells)
        delta = approx.delta
        w = float(modulus(delta))
        E = V.sup_error(approx, bd, cfg.sample("curve", 200))
        G = V.shell_gradient(approx, delta, cfg.sample("shell", 200), rng)
        H = V.harmonicity_residual(approx, cfg.sample("harmonic", 200), rng)
        rec = V.DecayRecord(n=n, delta=delta, E=E, G=G, E_ratio=E / w, G_ratio=G * delta / w,
                            harmonicity=H, alpha=alpha, gamma_max=float(np.abs(approx.gammas).max()),
                            runtime=time.perf_counter() - t0)
        report.records.append(rec)
        summaries[n] = approx.summary()
        log.info("level %d: E/w=%.3f G*d/w=%.3f harm=%.2e (%.1fs)", n, rec.E_ratio, rec.G_ratio, H, rec.runtime)
    return report, summaries


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out or cfg.output)
        report, summaries = run_experiment(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ApproximantError, ExtensionError) as exc:
        print(f"infeasible level: {exc}", file=sys.stderr)
        return EXIT_LEVEL
    except OctreeBudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    passed = report.passed(cfg.noise_ratio, cfg.harmonic_tol)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "decay.csv")
    data = json.loads(report.to_json())
    data["approximants"] = {str(k): v for k, v in summaries.items()}
    (out / "decay.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(report.to_csv(), end="")
    print("bands:", {k: round(v, 4) for k, v in report.bands().items()}, "passed:", passed)
    return EXIT_OK if passed else EXIT_BAND


def run_sharpness(cfg: ExperimentConfig) -> V.SharpnessReport:
    _, modulus, _ = _setup(cfg)
    reg = verify_regularity(modulus)
    if not reg.ok:
        raise ConfigError(f"modulus fails the regularity conditions: {reg.diagnostic}")
    sh = cfg.sharpness
    if "deltas" in sh or "lambdas" in sh:
        deltas, lams = np.asarray(sh["deltas"], float), np.asarray(sh["lambdas"], float)
    else:
        deltas, lams = V.default_sharpness_sequences(int(sh.get("count", 6)), sh.get("constant_lambda"))
    try:
        return V.sharpness_harness(modulus, deltas, lams, C1p=float(sh.get("C1p", 1.0)),
                                   C2p=float(sh.get("C2p", 1.0)), kappa=float(sh.get("kappa", 3.0)))
    except V.VerifyError as exc:
        raise ConfigError(str(exc)) from None


def cmd_sharpness(args) -> int:
    try:
        cfg = load_config(args.config)
        rep = run_sharpness(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    text = rep.to_csv(out / "sharpness.csv")
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chordarc", description="Harmonic approximation experiments on chord-arc curves.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="build approximants per level and write decay.csv / decay.json")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sharpness", help="write sharpness.csv for the configured modulus")
    s.add_argument("config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sharpness)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
