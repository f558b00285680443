"""
The full source/overlap/loss mixture, evaluated from reusable tables.

Every source emits one photon (probability ``1 - g2``) or two photons
(``g2``); every photon's internal state is split into a shared and a private
part (see :func:`ghzsim.sources.overlap_components`). The mixture is grouped
into classes ``(k, j)``: ``k`` two-photon sources and ``j`` photons in private
internal modes. All events of one class carry the same probability per unit
multiplicity,

    q(k, j) = g2^k (1 - g2)^(6 - k) * v^(n - j) (1 - v)^j,   n = 6 + k,

and the class holds ``C(6, k) * C(n, j)`` such units. For each class the
engine returns the accepted mass and GHZ numerator summed over all loss
patterns as a polynomial in the per-category loss probabilities, so a class
table is computed once and reused for every overlap, g2 and loss value.

Truncation: classes are taken in order of decreasing ``q`` (ties by ``(k, j)``)
until the covered probability reaches ``coverage``. Loss patterns are never
truncated; they are summed exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .circuit import Netlist, canonical_ghz_netlist
from .engine import (branch_point, branch_polynomial, compile_netlist, loss_weight_vectors,
                     site_probabilities)
from .errors import ParameterError
from .herald import IDEAL_SUCCESS, BranchMeasures, derive_sign_table, mixture_measures
from .sources import N_SOURCES, emission_patterns, overlap_components

ENGINE_VERSION = 1
N_K = N_SOURCES + 1
N_J = 2 * N_SOURCES + 1
MAX_SIMULATED_DOUBLES = 3
PARAM_NAMES = ("ovl", "g2", "p_prep", "p_ops", "p_det")


@dataclass(frozen=True)
class Params:
    """Overlap, two-photon probability and the three per-site loss probabilities."""

    ovl: float
    g2: float
    p_prep: float
    p_ops: float
    p_det: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            x = getattr(self, name)
            if not 0.0 <= x <= 1.0 or math.isnan(x):
                raise ParameterError(f"{name} must lie in [0, 1], got {x!r}")
        if self.g2 >= 1.0:
            raise ParameterError("g2 must be below 1")

    @property
    def losses(self) -> Tuple[float, float, float]:
        return (self.p_prep, self.p_ops, self.p_det)

    def as_tuple(self) -> Tuple[float, ...]:
        return tuple(getattr(self, n) for n in PARAM_NAMES)

    @classmethod
    def ideal(cls) -> "Params":
        return cls(1.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PointResult:
    fidelity: float
    success: float
    success_normalized: float
    covered_mass: float
    classes: Tuple[Tuple[int, int], ...]

    @property
    def fidelity_defined(self) -> bool:
        return not math.isnan(self.fidelity)


def _class_arrays():
    k = np.arange(N_K)[:, None]
    j = np.arange(N_J)[None, :]
    n = N_SOURCES + k
    valid = j <= n
    count = np.array([[math.comb(N_SOURCES, kk) * math.comb(N_SOURCES + kk, jj)
                       if jj <= N_SOURCES + kk else 0 for jj in range(N_J)] for kk in range(N_K)],
                     dtype=float)
    return k, j, n, valid, count


_K, _J, _N, _VALID, _COUNT = _class_arrays()
_ORDER_KEY = np.arange(N_K * N_J)


def class_probabilities(v, g2):
    """
    Per-unit probability ``q`` and total class mass for arrays of ``v``/``g2``.

    Returns two arrays of shape ``broadcast(v, g2).shape + (N_K, N_J)``.
    """
    v = np.asarray(v, dtype=float)[..., None, None]
    g2 = np.asarray(g2, dtype=float)[..., None, None]
    shared = np.where(_VALID, _N - _J, 0)
    q = (g2 ** _K) * (1.0 - g2) ** (N_SOURCES - _K) * v ** shared * (1.0 - v) ** _J
    q = np.where(_VALID, q, 0.0)
    return q, q * _COUNT


def select_classes(q: np.ndarray, mass: np.ndarray, coverage: float,
                   max_doubles: Optional[int] = None):
    """
    Boolean inclusion mask over classes and the covered mass.

    Classes are visited by decreasing ``q`` (ties by class index) and included
    while the mass collected before them is below ``coverage``. ``coverage=1``
    includes every class of positive mass.
    """
    if not 0.0 < coverage <= 1.0:
        raise ParameterError(f"coverage must lie in (0, 1], got {coverage!r}")
    shape = q.shape[:-2]
    qf = q.reshape(-1, N_K * N_J)
    mf = mass.reshape(-1, N_K * N_J).copy()
    if max_doubles is not None:
        allowed = (_K <= max_doubles).repeat(N_J, axis=1).reshape(-1)
        qf = np.where(allowed, qf, 0.0)
        mf = np.where(allowed, mf, 0.0)
    order = np.lexsort((np.broadcast_to(_ORDER_KEY, qf.shape), -qf), axis=-1)
    m_sorted = np.take_along_axis(mf, order, axis=-1)
    before = np.cumsum(m_sorted, axis=-1) - m_sorted
    inc_sorted = (m_sorted > 0) & ((before < coverage) | (coverage >= 1.0))
    inc = np.zeros_like(inc_sorted)
    np.put_along_axis(inc, order, inc_sorted, axis=-1)
    covered = (mf * inc).sum(axis=-1)
    return inc.reshape(shape + (N_K, N_J)), covered.reshape(shape)


class MixtureModel:
    """
    Class tables for one netlist and acceptance rule, computed lazily.

    Parameters
    ----------
    netlist:
        Circuit to simulate (default: the canonical GHZ netlist).
    acceptance:
        ``"coincidence"`` or ``"herald"`` (see :mod:`ghzsim.herald`).
    cache:
        Optional object with ``get(key) -> ndarray | None`` and
        ``put(key, ndarray)`` used to persist class tables.
    progress:
        Optional callback ``progress(k, j, n_components)`` called before a
        class is simulated.
    workers:
        Number of processes used to simulate the components of a class. The
        component tables are summed in a fixed order, so the result does not
        depend on this number.
    """

    def __init__(self, netlist: Optional[Netlist] = None, acceptance: str = "coincidence",
                 cache=None, progress: Optional[Callable[[int, int, int], None]] = None,
                 workers: int = 1):
        self.netlist = netlist if netlist is not None else canonical_ghz_netlist()
        self.acceptance = acceptance
        self.signs = derive_sign_table(self.netlist, acceptance)
        self.compiled = compile_netlist(self.netlist, acceptance)
        self.cache = cache
        self.progress = progress
        self._tables: Dict[Tuple[int, int], np.ndarray] = {}
        self._sign_map = dict(self.signs.items())
        self.components_simulated = 0
        self.workers = max(1, int(workers))

    @property
    def category_sizes(self) -> Tuple[int, int, int]:
        return self.compiled.category_sizes

    def cache_key(self, k: int, j: int) -> str:
        signs = "".join("+" if self._sign_map[p] > 0 else "-" for p in sorted(self._sign_map))
        return (f"v{ENGINE_VERSION}-{self.netlist.content_hash()[:20]}-{self.acceptance}"
                f"-{signs}-k{k}-j{j}")

    def _components(self, k: int, j: int):
        for e in emission_patterns(k):
            for comp in overlap_components(e):
                if comp.n_private == j:
                    yield comp

    def class_table(self, k: int, j: int) -> np.ndarray:
        """Summed polynomial table ``T[kp, ko, kd, (success, numerator)]`` of class ``(k, j)``."""
        key = (k, j)
        if key in self._tables:
            return self._tables[key]
        if k > MAX_SIMULATED_DOUBLES:
            raise ParameterError(
                f"classes with more than {MAX_SIMULATED_DOUBLES} two-photon sources are not "
                "simulated; lower the coverage or limit max_doubles")
        table = self.cache.get(self.cache_key(k, j)) if self.cache is not None else None
        if table is None:
            comps = list(self._components(k, j))
            if self.progress is not None:
                self.progress(k, j, len(comps))
            table = None
            for comp, t in zip(comps, self._component_tables(comps)):
                t = comp.multiplicity * t
                table = t if table is None else table + t
                self.components_simulated += 1
            if table is None:
                table = np.zeros(tuple(s + 1 for s in self.category_sizes) + (2,))
            if self.cache is not None:
                self.cache.put(self.cache_key(k, j), table)
        self._tables[key] = table
        return table

    def _component_tables(self, comps):
        photons = [comp.photons(self.netlist.sources) for comp in comps]
        if self.workers == 1 or len(comps) < 2:
            for ph in photons:
                yield branch_polynomial(self.compiled, [ph], [1.0], self._sign_map)
            return
        with ProcessPoolExecutor(self.workers, initializer=_init_worker,
                                 initargs=(self.compiled, self._sign_map)) as pool:
            yield from pool.map(_worker_table, photons)

    # -- evaluation ----------------------------------------------------------
    def evaluate(self, params: Params, coverage: float = 0.98,
                 max_doubles: Optional[int] = None) -> PointResult:
        """
        Measures at one parameter point from the (cached) class tables.

        Uses the same reduction as :meth:`evaluate_grid`, so a one-point grid
        reproduces this result bit for bit.
        """
        q, mass = class_probabilities(params.ovl, params.g2)
        inc, _ = select_classes(q, mass, coverage, max_doubles)
        classes = tuple((int(k), int(j)) for k, j in zip(*np.nonzero(inc)))
        out = self.evaluate_grid([params.ovl], [params.g2], np.array([params.losses]),
                                 coverage, max_doubles)
        return PointResult(float(out["fidelity"].item()), float(out["success"].item()),
                           float(out["success_normalized"].item()),
                           float(out["covered_mass"].item()), classes)

    def evaluate_direct(self, params: Params, coverage: float = 0.98,
                        max_doubles: Optional[int] = None) -> PointResult:
        """
        Same quantity without the tables: each component is re-simulated with
        numeric branch weights and folded with :func:`mixture_measures`.
        """
        q, mass = class_probabilities(params.ovl, params.g2)
        inc, covered = select_classes(q, mass, coverage, max_doubles)
        classes = tuple((int(k), int(j)) for k, j in zip(*np.nonzero(inc)))
        probs = site_probabilities(self.compiled, params.losses)
        branches = []
        for k, j in classes:
            for comp in self._components(k, j):
                s, n = branch_point(self.compiled, [comp.photons(self.netlist.sources)], [1.0],
                                    self._sign_map, probs)
                branches.append((q[k, j] * comp.multiplicity, BranchMeasures(float(s), float(n))))
        mm = mixture_measures(branches, float(covered))
        return PointResult(mm.fidelity, mm.success, mm.success_normalized, mm.covered_mass, classes)

    def evaluate_grid(self, ovl: Sequence[float], g2: Sequence[float],
                      losses: np.ndarray, coverage: float = 0.98,
                      max_doubles: Optional[int] = None) -> Dict[str, np.ndarray]:
        """
        Vectorized evaluation on ``ovl x g2 x loss_points``.

        ``losses`` has shape ``(L, 3)`` (prep, ops, det per point). Returns
        arrays of shape ``(len(ovl), len(g2), L)``.
        """
        ovl = np.asarray(ovl, dtype=float)
        g2 = np.asarray(g2, dtype=float)
        losses = np.asarray(losses, dtype=float).reshape(-1, 3)
        q, mass = class_probabilities(ovl[:, None], g2[None, :])
        inc, covered = select_classes(q, mass, coverage, max_doubles)
        used = np.argwhere(inc.any(axis=(0, 1)))
        used = [(int(k), int(j)) for k, j in used]
        stack = np.stack([self.class_table(k, j) for k, j in used])  # (C, P, O, D, 2)
        wp = np.stack([loss_weight_vectors(self.category_sizes, lp)[0] for lp in losses])
        wo = np.stack([loss_weight_vectors(self.category_sizes, lp)[1] for lp in losses])
        wd = np.stack([loss_weight_vectors(self.category_sizes, lp)[2] for lp in losses])
        per_loss = np.einsum("cpode,lp,lo,ld->lce", stack, wp, wo, wd, optimize=True)  # (L, C, 2)
        w = np.stack([np.where(inc[:, :, k, j], q[:, :, k, j], 0.0) for k, j in used], axis=-1)
        acc = np.einsum("vgc,lce->vgle", w, per_loss, optimize=True)
        s = acc[..., 0]
        with np.errstate(invalid="ignore", divide="ignore"):
            fid = np.where(s > 0, acc[..., 1] / np.where(s > 0, s, 1.0), np.nan)
        cov = np.broadcast_to(covered[:, :, None], s.shape)
        success = s / cov
        return {"fidelity": fid, "success": success,
                "success_normalized": success / IDEAL_SUCCESS, "covered_mass": np.array(cov)}


_WORKER_STATE = {}


def _init_worker(compiled, signs):
    _WORKER_STATE["args"] = (compiled, signs)


def _worker_table(photons):
    compiled, signs = _WORKER_STATE["args"]
    return branch_polynomial(compiled, [photons], [1.0], signs)
