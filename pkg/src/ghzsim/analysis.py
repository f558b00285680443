"""
Parameter regimes, the simplified loss model, measure grids and the two
influence metrics.

Influence metrics
-----------------
For a parameter ``p`` and a measure ``m`` (fidelity or normalized success):

relative image range
    ``Delta(p, m) = (max - min of m along p, all other parameters at their
    defaults) / (max - min of m over the whole parameter regime)``. Extrema are
    taken over the discretization grid.
correlation coefficient
    ``Corr(p, m) = Cov(p, m) / sqrt(Var(p) Var(m))`` with every grid point
    weighted equally (uniform distribution over the discretized regime). For
    ``g2`` and the loss parameters the orientation ``1 - p`` is used, so that a
    positive value means "smaller error, larger measure".

Simplified loss model
---------------------
A single knob ``p_L`` in ``[0, 1]`` interpolates every loss type between its
regime minimum and maximum, ``p_T = p_L * max_T + (1 - p_L) * min_T``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .circuit import Netlist, canonical_ghz_netlist, run
from .errors import ConfigurationError, ParameterError
from .herald import branch_measures, mixture_measures
from .mixture import PARAM_NAMES, MixtureModel, Params, PointResult
from .sources import build_input_state, enumerate_events, gram_coefficients

LOSS_NAMES = ("p_prep", "p_ops", "p_det")
SIMPLIFIED_AXES = ("ovl", "g2", "p_L")
FULL_AXES = PARAM_NAMES
MEASURES = ("fidelity", "success_normalized")
CSV_COLUMNS = ("ovl", "g2", "p_prep", "p_ops", "p_det", "p_L",
               "fidelity", "success", "success_normalized", "covered_mass")
DEFAULT_COVERAGE = 0.98
OVERLAP_STEP = 0.0025
AXIS_POINTS = 201

# orientation used for the correlation coefficient of each parameter
ORIENTATION = {"ovl": "p", "g2": "1-p", "p_L": "1-p",
               "p_prep": "1-p", "p_ops": "1-p", "p_det": "1-p"}


# ---------------------------------------------------------------------------
# Regimes

@dataclass(frozen=True)
class ParamRange:
    min: float
    max: float
    default: float

    def __post_init__(self):
        vals = (self.min, self.default, self.max)
        if any(math.isnan(x) or not 0.0 <= x <= 1.0 for x in vals):
            raise ConfigurationError(f"range values must lie in [0, 1]: {vals}")
        if not self.min <= self.default <= self.max:
            raise ConfigurationError(f"need min <= default <= max: {vals}")


@dataclass(frozen=True)
class Regime:
    """Per-parameter ``(min, max, default)`` for ovl, g2 and the three loss types."""

    name: str
    ranges: Mapping[str, ParamRange]

    def __post_init__(self):
        missing = set(PARAM_NAMES) - set(self.ranges)
        extra = set(self.ranges) - set(PARAM_NAMES)
        if missing or extra:
            raise ConfigurationError(
                f"regime {self.name!r}: missing {sorted(missing)}, unknown {sorted(extra)}")

    def __getitem__(self, param: str) -> ParamRange:
        return self.ranges[param]

    def default_params(self) -> Params:
        return Params(*(self.ranges[p].default for p in PARAM_NAMES))

    def default_p_l(self) -> float:
        """The ``p_L`` that best reproduces the default losses (exact when they are midpoints)."""
        vals = []
        for name in LOSS_NAMES:
            r = self.ranges[name]
            if r.max > r.min:
                vals.append((r.default - r.min) / (r.max - r.min))
        return float(np.mean(vals)) if vals else 0.5

    def defaults(self, simplified: bool) -> Dict[str, float]:
        if simplified:
            return {"ovl": self["ovl"].default, "g2": self["g2"].default, "p_L": self.default_p_l()}
        return {p: self.ranges[p].default for p in PARAM_NAMES}

    def bounds(self, param: str) -> Tuple[float, float]:
        if param == "p_L":
            return (0.0, 1.0)
        r = self.ranges[param]
        return (r.min, r.max)

    def to_dict(self) -> dict:
        return {p: {"min": r.min, "max": r.max, "default": r.default}
                for p, r in self.ranges.items()}

    @classmethod
    def from_dict(cls, name: str, data: Mapping) -> "Regime":
        try:
            ranges = {p: ParamRange(float(d["min"]), float(d["max"]), float(d["default"]))
                      for p, d in data.items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"regime {name!r}: malformed range entry ({exc})") from exc
        return cls(name, ranges)


def load_regimes(path: Union[str, Path, None] = None) -> Dict[str, Regime]:
    """Regimes from a JSON file ``{name: {param: {min, max, default}}}`` (default: shipped data)."""
    if path is None:
        text = resources.files("ghzsim").joinpath("data/regimes.json").read_text()
    else:
        text = Path(path).read_text()
    data = json.loads(text)
    return {name: Regime.from_dict(name, d) for name, d in data.items()}


REGIMES: Dict[str, Regime] = load_regimes()


def get_regime(r: Union[str, Regime]) -> Regime:
    if isinstance(r, Regime):
        return r
    try:
        return REGIMES[r]
    except KeyError:
        raise ConfigurationError(f"unknown regime {r!r}; known: {sorted(REGIMES)}") from None


def simplified_loss(p_l: float, r: Union[str, Regime]) -> Tuple[float, float, float]:
    """Per-type loss probabilities ``p_L * max + (1 - p_L) * min``."""
    if math.isnan(p_l) or not 0.0 <= p_l <= 1.0:
        raise ParameterError(f"p_L must lie in [0, 1], got {p_l!r}")
    r = get_regime(r)
    return tuple(p_l * r[n].max + (1.0 - p_l) * r[n].min for n in LOSS_NAMES)


def simplified_params(ovl: float, g2: float, p_l: float, r: Union[str, Regime]) -> Params:
    return Params(ovl, g2, *simplified_loss(p_l, r))


# ---------------------------------------------------------------------------
# Point evaluation

_MODELS: Dict[tuple, MixtureModel] = {}


def get_model(netlist: Optional[Netlist] = None, acceptance: str = "coincidence",
              cache=None) -> MixtureModel:
    """Shared :class:`MixtureModel` per (netlist, acceptance) so class tables are reused."""
    netlist = netlist if netlist is not None else canonical_ghz_netlist()
    key = (netlist.content_hash(), acceptance)
    model = _MODELS.get(key)
    if model is None:
        model = MixtureModel(netlist, acceptance, cache=cache)
        _MODELS[key] = model
    elif cache is not None and model.cache is None:
        model.cache = cache
    return model


def as_params(params, regime: Union[str, Regime, None] = None) -> Params:
    """
    Accept :class:`Params`, a 5-tuple, a simplified ``(ovl, g2, p_L)`` with a
    regime, or a mapping with either set of names (as from :meth:`Regime.defaults`).
    """
    if isinstance(params, Params):
        return params
    if isinstance(params, Mapping):
        names = SIMPLIFIED_AXES if "p_L" in params else FULL_AXES
        missing = [n for n in names if n not in params]
        if missing or len(params) != len(names):
            raise ParameterError(f"expected the keys {names}, got {sorted(params)}")
        params = tuple(params[n] for n in names)
    vals = tuple(float(x) for x in params)
    if len(vals) == 5:
        return Params(*vals)
    if len(vals) == 3:
        if regime is None:
            raise ParameterError("simplified parameters (ovl, g2, p_L) need a regime")
        return simplified_params(*vals, regime)
    raise ParameterError(f"expected 5 parameters or (ovl, g2, p_L), got {len(vals)} values")


def evaluate_point(params, netlist: Optional[Netlist] = None, coverage: float = DEFAULT_COVERAGE,
                   regime: Union[str, Regime, None] = None, model: Optional[MixtureModel] = None,
                   acceptance: str = "coincidence") -> PointResult:
    """
    Fidelity, success and covered mass at one parameter point.

    ``params`` is a :class:`Params`, a 5-tuple ``(ovl, g2, p_prep, p_ops,
    p_det)`` or a simplified triple ``(ovl, g2, p_L)`` (requires ``regime``).
    """
    p = as_params(params, regime)
    model = model if model is not None else get_model(netlist, acceptance)
    return model.evaluate(p, coverage)


def evaluate_point_events(params, netlist: Optional[Netlist] = None,
                          coverage: float = DEFAULT_COVERAGE,
                          regime: Union[str, Regime, None] = None,
                          acceptance: str = "coincidence",
                          max_events: Optional[int] = None) -> PointResult:
    """
    Reference route: enumerate events (emission pattern and triggered loss
    sites) by probability, build the coherent partially distinguishable input
    of each event, run it through the netlist with the sparse Fock stepper and
    fold the branches.

    Much slower than :func:`evaluate_point`; the two routes truncate the
    mixture differently and agree only as both coverages approach 1.
    """
    p = as_params(params, regime)
    netlist = netlist if netlist is not None else canonical_ghz_netlist()
    model = get_model(netlist, acceptance)
    probs = {s.site_id: dict(zip(("Prep", "Ops", "Det"), p.losses))[s.category]
             for s in netlist.loss_sites}
    events = enumerate_events(p.g2, probs, coverage, max_events=max_events)
    gram = gram_coefficients(p.ovl, len(netlist.sources))
    branches = []
    for ev in events:
        state = run(netlist, build_input_state(ev.emission, gram, netlist.sources), ev.losses)
        branches.append((ev.probability, branch_measures(state, netlist, model.signs, acceptance)))
    mm = mixture_measures(branches, events.covered_mass)
    return PointResult(mm.fidelity, mm.success, mm.success_normalized, mm.covered_mass, ())


# ---------------------------------------------------------------------------
# Grids

@dataclass
class MeasureGrid:
    """
    Measures on the Cartesian product of ``axes``.

    ``axes`` maps parameter names to sorted 1-d arrays, either the simplified
    triple ``(ovl, g2, p_L)`` or the full five parameters. Simplified grids
    carry ``loss_points`` (per ``p_L`` value, the three loss probabilities).
    Every measure array has shape ``tuple(len(a) for a in axes.values())``.
    """

    axes: Dict[str, np.ndarray]
    fidelity: np.ndarray
    success: np.ndarray
    success_normalized: np.ndarray
    covered_mass: np.ndarray
    loss_points: Optional[np.ndarray] = None
    regime: Optional[str] = None

    def __post_init__(self):
        names = tuple(self.axes)
        if names not in (SIMPLIFIED_AXES, FULL_AXES):
            raise ConfigurationError(f"grid axes must be {SIMPLIFIED_AXES} or {FULL_AXES}, got {names}")
        self.axes = {k: np.asarray(v, dtype=float) for k, v in self.axes.items()}
        for k, a in self.axes.items():
            if a.ndim != 1 or a.size == 0 or np.any(np.diff(a) <= 0):
                raise ConfigurationError(f"axis {k!r} must be a non-empty strictly increasing list")
        for m in ("fidelity", "success", "success_normalized", "covered_mass"):
            arr = np.asarray(getattr(self, m), dtype=float)
            if arr.shape != self.shape:
                raise ConfigurationError(f"{m} has shape {arr.shape}, expected {self.shape}")
            setattr(self, m, arr)
        if self.simplified:
            lp = np.asarray(self.loss_points, dtype=float)
            if lp.shape != (self.shape[2], 3):
                raise ConfigurationError("simplified grids need one loss triple per p_L value")
            self.loss_points = lp

    @property
    def simplified(self) -> bool:
        return tuple(self.axes) == SIMPLIFIED_AXES

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(a.size for a in self.axes.values())

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def measure(self, name: str) -> np.ndarray:
        if name not in ("fidelity", "success", "success_normalized", "covered_mass"):
            raise ConfigurationError(f"unknown measure {name!r}")
        return getattr(self, name)

    def coordinate(self, param: str) -> np.ndarray:
        """Values of ``param`` broadcast to the grid shape."""
        names = list(self.axes)
        if param not in names:
            raise ConfigurationError(f"grid has no axis {param!r}")
        ax = names.index(param)
        shape = [1] * len(names)
        shape[ax] = -1
        return np.broadcast_to(self.axes[param].reshape(shape), self.shape)

    def line(self, param: str, at: Mapping[str, float], measure: str) -> np.ndarray:
        """Measure along ``param`` with every other axis fixed at ``at``."""
        idx = []
        for name, a in self.axes.items():
            if name == param:
                idx.append(slice(None))
                continue
            hit = np.nonzero(a == at[name])[0]
            if hit.size == 0:
                raise ConfigurationError(f"axis {name!r} does not contain {at[name]!r}")
            idx.append(int(hit[0]))
        return self.measure(measure)[tuple(idx)]

    def params_at(self, index: Tuple[int, ...]) -> Params:
        vals = {n: float(a[i]) for (n, a), i in zip(self.axes.items(), index)}
        if self.simplified:
            return Params(vals["ovl"], vals["g2"], *(float(x) for x in self.loss_points[index[2]]))
        return Params(*(vals[n] for n in FULL_AXES))

    # -- CSV ---------------------------------------------------------------
    def rows(self) -> Iterable[dict]:
        """One row per grid point, lexicographic in the axes."""
        for index in np.ndindex(*self.shape):
            p = self.params_at(index)
            row = {"ovl": p.ovl, "g2": p.g2, "p_prep": p.p_prep, "p_ops": p.p_ops,
                   "p_det": p.p_det,
                   "p_L": float(self.axes["p_L"][index[2]]) if self.simplified else None}
            for m in ("fidelity", "success", "success_normalized", "covered_mass"):
                row[m] = float(self.measure(m)[index])
            yield row

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow(["" if row[c] is None else repr(row[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def write_csv(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str, regime: Optional[str] = None) -> "MeasureGrid":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ConfigurationError(f"unexpected CSV header {reader.fieldnames}")
        rows = list(reader)
        if not rows:
            raise ConfigurationError("CSV holds no data rows")
        simplified = rows[0]["p_L"] != ""
        names = SIMPLIFIED_AXES if simplified else FULL_AXES
        axes = {n: np.array(sorted({float(r[n]) for r in rows})) for n in names}
        shape = tuple(a.size for a in axes.values())
        if len(rows) != int(np.prod(shape)):
            raise ConfigurationError("CSV rows do not form a complete grid")
        data = {m: np.empty(shape) for m in ("fidelity", "success", "success_normalized",
                                             "covered_mass")}
        loss_points = np.full((axes["p_L"].size, 3), np.nan) if simplified else None
        for r in rows:
            index = tuple(int(np.searchsorted(axes[n], float(r[n]))) for n in names)
            for m in data:
                data[m][index] = float(r[m])
            if simplified:
                loss_points[index[2]] = [float(r[n]) for n in LOSS_NAMES]
        return cls(axes, loss_points=loss_points, regime=regime, **data)

    @classmethod
    def read_csv(cls, path: Union[str, Path], regime: Optional[str] = None) -> "MeasureGrid":
        return cls.from_csv(Path(path).read_text(), regime)


def overlap_axis(r: Union[str, Regime], step: float = OVERLAP_STEP) -> np.ndarray:
    """Overlap values from the regime minimum in ``step`` increments up to the maximum."""
    r = get_regime(r)
    lo, hi = r["ovl"].min, r["ovl"].max
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 12)


def even_axis(r: Union[str, Regime], param: str, count: int = AXIS_POINTS) -> np.ndarray:
    """``count`` evenly spaced values across the regime range of ``param`` (``p_L``: [0, 1])."""
    lo, hi = get_regime(r).bounds(param)
    if count < 1:
        raise ParameterError("axis needs at least one value")
    if count == 1 or hi == lo:
        return np.array([lo])
    return np.linspace(lo, hi, count)


def paper_axes(r: Union[str, Regime], simplified: bool = True, ovl_step: float = OVERLAP_STEP,
               count: int = AXIS_POINTS, loss_count: Optional[int] = None) -> Dict[str, np.ndarray]:
    """Overlap in fixed steps, every other axis with ``count`` (or ``loss_count``) values."""
    r = get_regime(r)
    loss_count = count if loss_count is None else loss_count
    axes = {"ovl": overlap_axis(r, ovl_step), "g2": even_axis(r, "g2", count)}
    if simplified:
        axes["p_L"] = even_axis(r, "p_L", loss_count)
    else:
        for n in LOSS_NAMES:
            axes[n] = even_axis(r, n, loss_count)
    return axes


def _axis_values(values) -> np.ndarray:
    a = np.unique(np.asarray(values, dtype=float).reshape(-1))
    if a.size == 0:
        raise ParameterError("empty axis")
    return a


def sweep(r: Union[str, Regime], axes: Mapping[str, Sequence[float]],
          netlist: Optional[Netlist] = None, coverage: float = DEFAULT_COVERAGE,
          simplified: Optional[bool] = None, model: Optional[MixtureModel] = None,
          acceptance: str = "coincidence", check_range: bool = True) -> MeasureGrid:
    """
    Evaluate a Cartesian grid.

    ``axes`` maps parameter names to value lists; parameters not given are
    fixed at the regime default. ``simplified`` selects the ``(ovl, g2, p_L)``
    parameterization (default: whenever ``p_L`` is among the axes).

    Every class table is simulated once and recombined for all points: the
    overlap and g2 values only enter through the class weights and the loss
    probabilities through the exactly summed loss polynomials.
    """
    r = get_regime(r)
    if simplified is None:
        simplified = "p_L" in axes
    names = SIMPLIFIED_AXES if simplified else FULL_AXES
    unknown = set(axes) - set(names)
    if unknown:
        raise ConfigurationError(f"axes {sorted(unknown)} not valid for this parameterization")
    defaults = r.defaults(simplified)
    grid_axes = {n: _axis_values(axes[n]) if n in axes else np.array([defaults[n]]) for n in names}
    for n, a in grid_axes.items():
        if np.any(a < 0) or np.any(a > 1):
            raise ParameterError(f"axis {n!r} leaves [0, 1]")
        lo, hi = r.bounds(n)
        if check_range and (a[0] < lo - 1e-12 or a[-1] > hi + 1e-12):
            raise ParameterError(f"axis {n!r} leaves the regime range [{lo}, {hi}]")
    model = model if model is not None else get_model(netlist, acceptance)

    if simplified:
        loss_points = np.array([simplified_loss(float(x), r) for x in grid_axes["p_L"]])
        losses = loss_points
    else:
        loss_points = None
        mesh = np.meshgrid(grid_axes["p_prep"], grid_axes["p_ops"], grid_axes["p_det"],
                           indexing="ij")
        losses = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    out = model.evaluate_grid(grid_axes["ovl"], grid_axes["g2"], losses, coverage)
    shape = tuple(a.size for a in grid_axes.values())
    data = {k: np.ascontiguousarray(v).reshape(shape) for k, v in out.items()}
    return MeasureGrid(grid_axes, loss_points=loss_points, regime=r.name, **data)


# ---------------------------------------------------------------------------
# Influence metrics

def _range(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if np.any(np.isnan(values)):
        return math.nan
    return float(values.max() - values.min())


def relative_image_range(grid: MeasureGrid, r: Union[str, Regime], param: str, measure: str,
                         line: Optional[np.ndarray] = None) -> float:
    """
    ``Delta(param, measure)``: spread along the default slice over the spread on the grid.

    ``line`` supplies the measure along the default slice when it is not part
    of ``grid`` (e.g. a default value between grid nodes); its values also
    enter the global extrema. Returns NaN when the measure is constant over
    the grid (undefined).
    """
    r = get_regime(r)
    if line is None:
        line = grid.line(param, r.defaults(grid.simplified), measure)
    line = np.asarray(line, dtype=float)
    allv = np.concatenate([grid.measure(measure).reshape(-1), line])
    den = _range(allv)
    if not den > 0:
        return math.nan
    return _range(line) / den


def correlation_coefficient(grid: MeasureGrid, param: str, measure: str,
                            orient: str = "p") -> float:
    """
    Uniform-weight Pearson correlation of ``param`` (or ``1 - param``) with
    ``measure`` over every grid point. NaN when either variance vanishes.
    """
    if orient not in ("p", "1-p"):
        raise ConfigurationError(f"orientation must be 'p' or '1-p', got {orient!r}")
    x = grid.coordinate(param).reshape(-1).astype(float)
    y = grid.measure(measure).reshape(-1).astype(float)
    return _pearson(x, y, -1.0 if orient == "1-p" else 1.0)


def _pearson(x: np.ndarray, y: np.ndarray, sign: float = 1.0) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(np.mean(xc * xc))
    vy = float(np.mean(yc * yc))
    if not (vx > 0 and vy > 0):
        return math.nan
    c = float(np.mean(xc * yc)) / math.sqrt(vx * vy)
    c = min(1.0, max(-1.0, c))
    # the 1 - p orientation negates the covariance and leaves both variances alone
    return sign * c


@dataclass(frozen=True)
class InfluenceGrids:
    """Discretization used by :func:`influence_report`."""

    ovl_step: float = OVERLAP_STEP
    count: int = AXIS_POINTS          # g2 and p_L values in the simplified grid
    line_count: int = AXIS_POINTS     # values along each default slice
    full_ovl_step: float = OVERLAP_STEP
    full_count: int = 11              # g2 values in the full five-parameter grid
    full_loss_count: int = 11         # values per loss type in the full grid

    @classmethod
    def coarse(cls) -> "InfluenceGrids":
        """At most 21 values per axis for quick runs."""
        return cls(ovl_step=OVERLAP_STEP, count=21, line_count=21, full_count=5,
                   full_loss_count=5)


@dataclass
class InfluenceReport:
    """
    ``delta[(param, measure)]`` and ``corr[(param, measure)]`` (oriented per
    :data:`ORIENTATION`); measures are ``"fidelity"`` and ``"success"`` (the
    normalized success probability). NaN marks an undefined entry.
    """

    regime: str
    delta: Dict[Tuple[str, str], float]
    corr: Dict[Tuple[str, str], float]
    min_covered_mass: float
    grid_shapes: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    ROWS = (("corr", "ovl", "Corr(ovl,.)"), ("corr", "g2", "Corr(1-g2,.)"),
            ("corr", "p_L", "Corr(1-p_L,.)"), ("delta", "ovl", "Delta(ovl,.)"),
            ("delta", "g2", "Delta(g2,.)"), ("delta", "p_L", "Delta(p_L,.)"),
            ("delta", "p_prep", "Delta(p_L.Prep,.)"), ("delta", "p_ops", "Delta(p_L.Ops,.)"),
            ("delta", "p_det", "Delta(p_L.Det,.)"))

    def rows(self) -> List[Tuple[str, float, float]]:
        """``(label, fidelity value, success value)`` in table order."""
        out = []
        for kind, param, label in self.ROWS:
            src = self.delta if kind == "delta" else self.corr
            out.append((label, src.get((param, "fidelity"), math.nan),
                        src.get((param, "success"), math.nan)))
        return out


def _measure_key(m: str) -> str:
    return "success_normalized" if m == "success" else m


def influence_report(r: Union[str, Regime], netlist: Optional[Netlist] = None,
                     grids: Optional[InfluenceGrids] = None,
                     coverage: float = DEFAULT_COVERAGE, model: Optional[MixtureModel] = None,
                     acceptance: str = "coincidence",
                     include_loss_types: bool = True) -> InfluenceReport:
    """
    All Delta and Corr entries of a regime.

    * Corr and the Delta of ``ovl``, ``g2``, ``p_L`` use the simplified
      three-parameter grid.
    * Delta of each loss type uses the full five-parameter model: the slice
      varies that loss type with everything else at its default, the
      denominator is the spread over the full grid.
    """
    r = get_regime(r)
    grids = grids if grids is not None else InfluenceGrids()
    model = model if model is not None else get_model(netlist, acceptance)
    delta: Dict[Tuple[str, str], float] = {}
    corr: Dict[Tuple[str, str], float] = {}
    shapes = {}

    g = sweep(r, paper_axes(r, True, grids.ovl_step, grids.count), coverage=coverage, model=model)
    shapes["simplified"] = g.shape
    min_cov = float(g.covered_mass.min())
    d = r.defaults(True)
    for param in SIMPLIFIED_AXES:
        axis = overlap_axis(r, grids.ovl_step) if param == "ovl" else even_axis(r, param, grids.line_count)
        axes = {k: [v] for k, v in d.items()}
        axes[param] = axis
        line = sweep(r, axes, coverage=coverage, model=model, simplified=True)
        min_cov = min(min_cov, float(line.covered_mass.min()))
        flat_line = {m: line.measure(_measure_key(m)).reshape(-1) for m in ("fidelity", "success")}
        for m in ("fidelity", "success"):
            delta[(param, m)] = relative_image_range(g, r, param, _measure_key(m), flat_line[m])
            corr[(param, m)] = correlation_coefficient(g, param, _measure_key(m), ORIENTATION[param])

    if include_loss_types:
        full = sweep(r, paper_axes(r, False, grids.full_ovl_step, grids.full_count,
                                   grids.full_loss_count), coverage=coverage, model=model)
        shapes["full"] = full.shape
        min_cov = min(min_cov, float(full.covered_mass.min()))
        d = r.defaults(False)
        for param in LOSS_NAMES:
            axes = {k: [v] for k, v in d.items()}
            axes[param] = even_axis(r, param, grids.line_count)
            line = sweep(r, axes, coverage=coverage, model=model, simplified=False)
            for m in ("fidelity", "success"):
                delta[(param, m)] = relative_image_range(
                    full, r, param, _measure_key(m), line.measure(_measure_key(m)).reshape(-1))
    return InfluenceReport(r.name, delta, corr, min_cov, shapes)


# ---------------------------------------------------------------------------
# Regime extremes

@dataclass(frozen=True)
class RegimeExtremes:
    """Minimum/maximum of fidelity and normalized success over the regime."""

    fidelity: Tuple[float, float]
    success: Tuple[float, float]
    method: str  # "corners" or "grid"


def regime_extremes(r: Union[str, Regime], simplified: bool = False,
                    coverage: float = DEFAULT_COVERAGE, model: Optional[MixtureModel] = None,
                    netlist: Optional[Netlist] = None, grid_count: Optional[int] = None,
                    acceptance: str = "coincidence") -> RegimeExtremes:
    """
    Extremes from the corners of the parameter box (``grid_count=None``) or
    from a full grid with ``grid_count`` values per non-overlap axis.
    """
    r = get_regime(r)
    model = model if model is not None else get_model(netlist, acceptance)
    names = SIMPLIFIED_AXES if simplified else FULL_AXES
    if grid_count is None:
        axes = {n: list(r.bounds(n)) for n in names}
        method = "corners"
    else:
        axes = paper_axes(r, simplified, count=grid_count)
        method = "grid"
    g = sweep(r, axes, coverage=coverage, model=model, simplified=simplified)
    f, s = g.fidelity, g.success_normalized
    return RegimeExtremes((float(f.min()), float(f.max())), (float(s.min()), float(s.max())), method)


def format_percent(x: float) -> str:
    """A probability as a percentage with 4 significant digits (``"undefined"`` for NaN)."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "undefined"
    return f"{100.0 * x:.4g}"
