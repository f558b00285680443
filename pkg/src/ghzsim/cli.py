"""
Command-line front end.

Commands
--------
``simulate``   measures at one parameter point
``sweep``      CSV of measures over a parameter grid
``influence``  relative image ranges and correlation coefficients of a regime
``validate``   self-checks of a netlist (ideal heralding, signs, oracle, post-selection)

A JSON config file (``--config``) may hold any option under its long name
with dashes replaced by underscores; command-line flags win over file values.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .analysis import (DEFAULT_COVERAGE, REGIMES, InfluenceGrids, even_axis, format_percent,
                       influence_report, load_regimes, simplified_loss, sweep)
from .cache import BranchCache, default_cache_dir
from .circuit import canonical_ghz_netlist, load_netlist, oracle_equivalence, validate_netlist
from .errors import CalibrationError, ConfigurationError, ParameterError
from .herald import ACCEPTANCE_MODES, IDEAL_SUCCESS
from .mixture import PARAM_NAMES, MixtureModel, Params

POINT_FLAGS = ("ovl", "g2", "p_prep", "p_ops", "p_det")


@dataclass
class RunConfig:
    """All options of one invocation, after merging the config file and flags."""

    netlist: str = "canonical"
    regime: Optional[str] = None
    regimes_file: Optional[str] = None
    ovl: Optional[float] = None
    g2: Optional[float] = None
    p_prep: Optional[float] = None
    p_ops: Optional[float] = None
    p_det: Optional[float] = None
    simplified_loss: bool = False
    p_l: Optional[float] = None
    ideal: bool = False
    coverage: float = DEFAULT_COVERAGE
    grid: Optional[str] = None
    coarse: bool = False
    out: Optional[str] = None
    cache: Optional[str] = None
    no_cache: bool = False
    threads: int = 1
    seed: int = 0
    acceptance: str = "coincidence"
    samples: int = 100

    def validate(self) -> None:
        """Raise :class:`ConfigurationError` listing every invalid field."""
        problems = []
        for name in POINT_FLAGS + ("p_l",):
            x = getattr(self, name)
            if x is not None and (math.isnan(x) or not 0.0 <= x <= 1.0):
                problems.append(f"{name}: {x} is not a probability in [0, 1]")
        if not 0.0 < self.coverage <= 1.0:
            problems.append(f"coverage: {self.coverage} must lie in (0, 1]")
        if self.acceptance not in ACCEPTANCE_MODES:
            problems.append(f"acceptance: {self.acceptance!r} not in {ACCEPTANCE_MODES}")
        if self.threads < 1:
            problems.append("threads: must be at least 1")
        if self.regime is not None and self.regime not in self.regimes():
            problems.append(f"regime: unknown {self.regime!r} (known: {sorted(self.regimes())})")
        if self.simplified_loss and any(getattr(self, n) is not None for n in ("p_prep", "p_ops", "p_det")):
            problems.append("simplified-loss: conflicts with explicit per-type loss values")
        if self.p_l is not None and not self.simplified_loss:
            problems.append("p-l: only meaningful with --simplified-loss")
        if problems:
            raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(problems))

    def regimes(self):
        return load_regimes(self.regimes_file) if self.regimes_file else REGIMES

    def regime_obj(self):
        if self.regime is None:
            raise ConfigurationError("regime: required for this command")
        return self.regimes()[self.regime]

    def point(self) -> Params:
        """
        The parameter point: ``--ideal``, a regime (defaults, optionally with
        ``--simplified-loss --p-l`` and individual overrides) or all five
        explicit values.
        """
        if self.ideal:
            if self.regime is not None or any(getattr(self, n) is not None for n in POINT_FLAGS):
                raise ConfigurationError("ideal: cannot be combined with a regime or parameters")
            return Params.ideal()
        if self.regime is None:
            missing = [n for n in POINT_FLAGS if getattr(self, n) is None]
            if self.simplified_loss:
                raise ConfigurationError("simplified-loss: needs a regime for the loss ranges")
            if missing:
                raise ConfigurationError(
                    "parameters: give a regime or all of " + ", ".join(POINT_FLAGS)
                    + f" (missing {', '.join(missing)})")
            return Params(*(getattr(self, n) for n in POINT_FLAGS))
        r = self.regime_obj()
        vals = {n: r[n].default for n in PARAM_NAMES}
        if self.simplified_loss:
            p_l = self.p_l if self.p_l is not None else r.default_p_l()
            vals.update(zip(("p_prep", "p_ops", "p_det"), simplified_loss(p_l, r)))
        for n in POINT_FLAGS:
            if getattr(self, n) is not None:
                vals[n] = getattr(self, n)
        return Params(*(vals[n] for n in PARAM_NAMES))


# ---------------------------------------------------------------------------
# helpers

def _netlist(cfg: RunConfig):
    if cfg.netlist in (None, "canonical"):
        return canonical_ghz_netlist()
    return load_netlist(cfg.netlist)


def _cache(cfg: RunConfig):
    if cfg.no_cache:
        return None
    return BranchCache(cfg.cache if cfg.cache else default_cache_dir())


def _model(cfg: RunConfig, netlist=None) -> MixtureModel:
    return MixtureModel(netlist if netlist is not None else _netlist(cfg), cfg.acceptance,
                        cache=_cache(cfg), workers=cfg.threads)


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ConfigurationError(f"out: cannot write {path!r} ({exc.strerror})") from exc


def parse_axis(token: str, r, param: str) -> np.ndarray:
    """
    One axis spec:

    ``N``             N evenly spaced values over the regime range
    ``@STEP``         regime range in steps of STEP
    ``LO..HI/N``      N evenly spaced values in [LO, HI]
    ``LO..HI@STEP``   LO, LO + STEP, ... up to HI
    ``A|B|C``         explicit values
    ``default``       the regime default
    """
    token = token.strip()
    try:
        if token == "default":
            return np.array([r.default_p_l() if param == "p_L" else r[param].default])
        if token.isdigit():
            if param == "ovl":
                lo, hi = r.bounds(param)
                return np.linspace(lo, hi, int(token)) if int(token) > 1 else np.array([lo])
            return even_axis(r, param, int(token))
        if token.startswith("@"):
            lo, hi = r.bounds(param)
            return _stepped(lo, hi, float(token[1:]))
        if ".." in token:
            lo_s, rest = token.split("..", 1)
            if "/" in rest:
                hi_s, n_s = rest.split("/", 1)
                return np.linspace(float(lo_s), float(hi_s), int(n_s))
            if "@" in rest:
                hi_s, st = rest.split("@", 1)
                return _stepped(float(lo_s), float(hi_s), float(st))
            raise ValueError("range needs /N or @STEP")
        return np.array([float(x) for x in token.split("|")])
    except ValueError as exc:
        raise ConfigurationError(f"grid: bad spec {token!r} for axis {param!r} ({exc})") from exc


def _stepped(lo: float, hi: float, step: float) -> np.ndarray:
    if not step > 0:
        raise ValueError("step must be positive")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 12)


def parse_grid(spec: Optional[str], r) -> Dict[str, np.ndarray]:
    """``axis:spec,axis:spec,...`` (axis names ovl, g2, p_L, p_prep, p_ops, p_det)."""
    axes: Dict[str, np.ndarray] = {}
    if not spec:
        return axes
    for part in spec.split(","):
        if ":" not in part:
            raise ConfigurationError(f"grid: expected axis:spec, got {part!r}")
        name, token = part.split(":", 1)
        name = name.strip()
        if name not in PARAM_NAMES + ("p_L",):
            raise ConfigurationError(f"grid: unknown axis {name!r}")
        axes[name] = parse_axis(token, r, name)
    return axes


def parse_influence_grid(spec: Optional[str], coarse: bool) -> InfluenceGrids:
    """``key=value,...`` over the fields of :class:`InfluenceGrids`."""
    base = InfluenceGrids.coarse() if coarse else InfluenceGrids()
    if not spec:
        return base
    vals = asdict(base)
    for part in spec.split(","):
        key, _, value = part.partition("=")
        key = key.strip()
        if key not in vals:
            raise ConfigurationError(f"grid: unknown influence grid key {key!r}; known {sorted(vals)}")
        try:
            vals[key] = type(vals[key])(value)
        except ValueError as exc:
            raise ConfigurationError(f"grid: bad value for {key!r}: {value!r}") from exc
    return InfluenceGrids(**vals)


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: RunConfig) -> int:
    params = cfg.point()
    model = _model(cfg)
    t0 = time.perf_counter()
    res = model.evaluate(params, cfg.coverage)
    wall = time.perf_counter() - t0
    n_branches = sum(len(list(model._components(k, j))) for k, j in res.classes)
    report = {
        "params": {n: getattr(params, n) for n in PARAM_NAMES},
        "coverage": cfg.coverage,
        "acceptance": cfg.acceptance,
        "fidelity": res.fidelity if res.fidelity_defined else None,
        "success": res.success,
        "success_normalized": res.success_normalized,
        "covered_mass": res.covered_mass,
        "classes": [list(c) for c in res.classes],
        "branches": n_branches,
    }
    lines = [
        f"fidelity             {format_percent(res.fidelity)} %",
        f"success              {format_percent(res.success)} %",
        f"success (normalized) {format_percent(res.success_normalized)} %  (ideal {format_percent(IDEAL_SUCCESS)} % = 100 %)",
        f"covered mass         {format_percent(res.covered_mass)} %",
        f"branches             {n_branches} in {len(res.classes)} classes",
        f"wall time            {wall:.3f} s",
    ]
    print("\n".join(lines))
    if cfg.out:
        _write(cfg.out, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    r = cfg.regime_obj()
    axes = parse_grid(cfg.grid, r)
    simplified = cfg.simplified_loss or "p_L" in axes
    if simplified and cfg.p_l is not None and "p_L" not in axes:
        axes["p_L"] = np.array([cfg.p_l])
    for n in POINT_FLAGS:
        if getattr(cfg, n) is not None:
            if n in axes:
                raise ConfigurationError(f"{n}: given both as a flag and as a grid axis")
            axes[n] = np.array([getattr(cfg, n)])
    grid = sweep(r, axes, coverage=cfg.coverage, simplified=simplified, model=_model(cfg),
                 check_range=False)
    _write(cfg.out, grid.to_csv())
    return 0


def influence_tables(report) -> tuple:
    """CSV and aligned text rendering of an influence report (percent, 4 significant digits)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["entry", "fidelity_percent", "success_percent"])
    rows = report.rows()
    for label, f, s in rows:
        w.writerow([label, format_percent(f), format_percent(s)])
    text = [f"Influence of the error parameters, regime {report.regime}",
            f"{'':22s}{'Fidelity':>12s}{'Success':>12s}"]
    for label, f, s in rows:
        text.append(f"{label + ' (%)':22s}{format_percent(f):>12s}{format_percent(s):>12s}")
    text.append(f"minimum covered mass: {format_percent(report.min_covered_mass)} %")
    text.append("grids: " + ", ".join(f"{k} {'x'.join(map(str, v))}"
                                      for k, v in report.grid_shapes.items()))
    return buf.getvalue(), "\n".join(text) + "\n"


def cmd_influence(cfg: RunConfig) -> int:
    r = cfg.regime_obj()
    grids = parse_influence_grid(cfg.grid, cfg.coarse)
    report = influence_report(r, grids=grids, coverage=cfg.coverage, model=_model(cfg))
    csv_text, text = influence_tables(report)
    sys.stdout.write(text)
    if cfg.out:
        _write(cfg.out, csv_text)
        _write(str(Path(cfg.out).with_suffix(".txt")), text)
    return 0


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def run_checks(netlist, samples: int = 100, seed: int = 0,
               acceptance: str = "coincidence", cache=None) -> List[Check]:
    """Structural, calibration, oracle and post-selection checks of a netlist."""
    checks: List[Check] = []
    viol = validate_netlist(netlist)
    checks.append(Check("netlist structure", not viol,
                        "; ".join(f"element {v.index}: {v.message}" for v in viol) or "ok"))
    if viol:
        return checks
    try:
        model = MixtureModel(netlist, acceptance, cache=cache)
    except CalibrationError as exc:
        detail = "; ".join(f"pattern {''.join('HV'[b] for b in p)}: F(+)={d['+1']:.6g} F(-)={d['-1']:.6g}"
                           for p, d in sorted(exc.diagnostics.items()))
        checks.append(Check("ideal fidelity per pattern", False, f"{exc}: {detail}"))
        return checks
    signs = " ".join(f"{''.join('HV'[b] for b in p)}:{'+' if e > 0 else '-'}"
                     for p, e in sorted(model.signs.items()))
    checks.append(Check("ideal fidelity per pattern", True, f"sign table {signs}"))
    ideal = model.evaluate(Params.ideal(), 1.0)
    ok = abs(ideal.success - IDEAL_SUCCESS) <= 1e-9 and abs(ideal.fidelity - 1.0) <= 1e-9
    checks.append(Check("ideal success 1/32", ok,
                        f"success {ideal.success:.12g}, fidelity {ideal.fidelity:.12g}"))
    rep = oracle_equivalence(netlist, samples, seed)
    checks.append(Check("stepper vs permanent oracle", rep.max_deviation <= 1e-9,
                        f"{rep.n_configs} configs, {rep.n_amplitudes} amplitudes, "
                        f"max deviation {rep.max_deviation:.3g}"))
    worst = 0.0
    for pl in np.linspace(0.0, 0.2, 5):
        for pd in np.linspace(0.0, 0.2, 5):
            f = model.evaluate(Params(1.0, 0.0, pl, pl / 5, pd), 1.0).fidelity
            worst = max(worst, abs(f - 1.0))
    checks.append(Check("fidelity 1 under loss without two-photon emission", worst <= 1e-9,
                        f"max |F-1| = {worst:.3g} over a 5x5 loss grid"))
    worst = 0.0
    for g2 in (0.005, 0.01, 0.02):
        f = model.evaluate(Params(1.0, g2, 0.0, 0.0, 0.0), 0.999, max_doubles=2).fidelity
        worst = max(worst, abs(f - 1.0))
    checks.append(Check("fidelity 1 with two-photon emission but no loss", worst <= 1e-9,
                        f"max |F-1| = {worst:.3g} for g2 in 0.5%, 1%, 2%"))
    return checks


def cmd_validate(cfg: RunConfig) -> int:
    checks = run_checks(_netlist(cfg), cfg.samples, cfg.seed, cfg.acceptance, _cache(cfg))
    lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}" for c in checks]
    failed = sum(not c.passed for c in checks)
    lines.append(f"{len(checks) - failed}/{len(checks)} checks passed")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if cfg.out:
        _write(cfg.out, text)
    return 1 if failed else 0


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "influence": cmd_influence,
            "validate": cmd_validate}


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--config", help="JSON file with option values (flags win)")
    g.add_argument("--netlist", help='netlist JSON file or "canonical" (default)')
    g.add_argument("--regime", help="parameter regime: " + ", ".join(sorted(REGIMES)))
    g.add_argument("--regimes-file", help="JSON file with custom regime definitions")
    for flag, text in (("ovl", "pairwise photon overlap"),
                       ("g2", "two-photon emission probability per source"),
                       ("p-prep", "loss probability at each preparation site"),
                       ("p-ops", "loss probability at each waveplate/PBS site"),
                       ("p-det", "loss probability at each detection site")):
        g.add_argument(f"--{flag}", type=float, help=text + " (overrides the regime default)")
    g.add_argument("--simplified-loss", action="store_true", default=None,
                   help="interpolate all loss types between regime min and max with --p-l")
    g.add_argument("--p-l", type=float, help="simplified loss coefficient in [0, 1]")
    g.add_argument("--ideal", action="store_true", default=None, help="error-free point")
    g.add_argument("--coverage", type=float, help=f"mixture mass to simulate (default {DEFAULT_COVERAGE})")
    g.add_argument("--grid", help="sweep: axis:spec,...; influence: key=value,...")
    g.add_argument("--coarse", action="store_true", default=None,
                   help="influence: at most 21 values per axis")
    g.add_argument("--out", help="output file")
    g.add_argument("--cache", help="class-table cache directory (default: $GHZSIM_CACHE_DIR "
                                   "or ~/.cache/ghzsim)")
    g.add_argument("--no-cache", action="store_true", default=None, help="disable the cache")
    g.add_argument("--threads", type=int, help="worker processes for table computation")
    g.add_argument("--seed", type=int, help="random seed (oracle sampling in validate)")
    g.add_argument("--samples", type=int, help="validate: oracle configurations")
    g.add_argument("--acceptance", choices=ACCEPTANCE_MODES)

    p = argparse.ArgumentParser(prog="ghzsim", description=__doc__.split("\n\n")[0].strip(),
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="measures at one parameter point")
    sub.add_parser("sweep", parents=[common], help="CSV of measures over a grid")
    sub.add_parser("influence", parents=[common], help="relative image ranges and correlations")
    sub.add_parser("validate", parents=[common], help="self-checks of a netlist")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    values = {}
    if ns.config:
        try:
            data = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"config: cannot read {ns.config!r} ({exc})") from exc
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"config: unknown keys {sorted(unknown)}")
        values.update(data)
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        return COMMANDS[ns.command](cfg)
    except (ConfigurationError, ParameterError) as exc:
        print(f"ghzsim {ns.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
