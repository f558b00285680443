"""
Photon sources: partially distinguishable inputs, two-photon emission and the
probability-ordered event space of the source/loss mixture.

Two descriptions of partial distinguishability are provided and cross-checked
in the tests:

* :func:`gram_coefficients` / :func:`build_input_state` expand the six
  internal wavefunctions over an orthonormal basis (Cholesky factor of the
  uniform Gram matrix) and build one coherent input superposition.
* :func:`overlap_components` writes every wavefunction as
  ``sqrt(v) e + sqrt(1 - v) f_i`` with a shared mode ``e`` and private modes
  ``f_i``. This reproduces the same pairwise overlap ``v``. Because the number
  of photons in each private mode is conserved by the circuit and traced out at
  the end, the heralded state is an exact incoherent mixture of basis inputs
  with weights ``v**(n - j) * (1 - v)**j`` (``j`` private photons). The
  component results are independent of ``v``, which is what makes overlap
  sweeps cheap.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ParameterError
from .fock import H, ModeKey, PureState, make_basis_state

N_SOURCES = 6


def _check_probability(name: str, p: float, upper_open: bool = False) -> None:
    if not (0.0 <= p <= 1.0) or (upper_open and p >= 1.0) or math.isnan(p):
        bound = "[0, 1)" if upper_open else "[0, 1]"
        raise ParameterError(f"{name} must lie in {bound}, got {p!r}")


# ---------------------------------------------------------------------------
# Gram expansion


@dataclass(frozen=True)
class GramCoefficients:
    """Lower-triangular rows ``c[i][j]`` (``j <= i``) of the internal wavefunctions."""

    n: int
    rows: Tuple[Tuple[float, ...], ...]

    def as_array(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for i, row in enumerate(self.rows):
            out[i, :len(row)] = row
        return out


def gram_coefficients(v: float, n: int = N_SOURCES) -> GramCoefficients:
    """
    Cholesky rows of the ``n x n`` Gram matrix with unit diagonal and uniform
    off-diagonal overlap ``v``.

    The factor is computed in closed form by Gram-Schmidt on equal-overlap
    vectors, so ``v = 1`` (singular Gram matrix) is handled exactly: every row
    becomes ``e_0``.
    """
    _check_probability("overlap", v)
    if n < 1:
        raise ParameterError("need at least one photon")
    rows: List[List[float]] = []
    # L[i][j] = v / d_j * ... : for a uniform Gram matrix every row below the
    # diagonal shares the same entry in column j.
    diag: List[float] = []
    col: List[float] = []  # common below-diagonal value of each column
    for i in range(n):
        row = [col[j] for j in range(i)]
        rem = 1.0 - math.fsum(x * x for x in row)
        d = math.sqrt(max(rem, 0.0))
        row.append(d)
        rows.append(row)
        diag.append(d)
        if d > 0:
            col.append((v - math.fsum(x * x for x in row[:i])) / d)
        else:
            col.append(0.0)
    return GramCoefficients(n, tuple(tuple(r) for r in rows))


@dataclass(frozen=True)
class EmissionEvent:
    """Photons emitted per source, each entry 1 or 2."""

    m: Tuple[int, ...]

    def __post_init__(self):
        if any(x not in (1, 2) for x in self.m):
            raise ParameterError(f"emission numbers must be 1 or 2, got {self.m}")

    @property
    def n_photons(self) -> int:
        return sum(self.m)

    @property
    def n_doubles(self) -> int:
        return sum(1 for x in self.m if x == 2)

    @classmethod
    def single(cls, n: int = N_SOURCES) -> "EmissionEvent":
        return cls((1,) * n)


def build_input_state(e: EmissionEvent, g: GramCoefficients, sources: Sequence[str]) -> PureState:
    """
    ``prod_i (A_i^dag)^{m_i} / sqrt(m_i!) |vac>`` with
    ``A_i^dag = sum_j c[i][j] a^dag_{source_i, H, j}``, expanded into the
    sparse Fock basis.
    """
    if g.n != len(e.m) or len(sources) != len(e.m):
        raise ParameterError("Gram rows, emission vector and source list must have equal length")
    # product representation: coefficient per sorted photon list
    terms: Dict[Tuple[ModeKey, ...], float] = {(): 1.0}
    for i, (ch, m) in enumerate(zip(sources, e.m)):
        opts = [(ModeKey(ch, H, j), c) for j, c in enumerate(g.rows[i]) if c != 0.0]
        new: Dict[Tuple[ModeKey, ...], float] = {}
        for photons, amp in terms.items():
            for combo in itertools.product(opts, repeat=m):
                key = tuple(sorted(photons + tuple(p for p, _ in combo)))
                new[key] = new.get(key, 0.0) + amp * math.prod(c for _, c in combo)
        norm = 1.0 / math.sqrt(math.factorial(m))
        terms = {k: a * norm for k, a in new.items()}
    out = PureState()
    for photons, amp in terms.items():
        # (a^dag)^n |vac> = sqrt(n!) |n>
        fact = math.prod(math.factorial(len(list(grp))) for _, grp in itertools.groupby(photons))
        out = out + make_basis_state(photons).scaled(amp * math.sqrt(fact))
    return out


# ---------------------------------------------------------------------------
# Shared + private decomposition


@dataclass(frozen=True)
class OverlapComponent:
    """
    One basis input of the overlap mixture.

    ``labels[i]`` lists the internal indices of source ``i``'s photons
    (0 = shared mode, 1.. = private modes numbered in source order).
    """

    labels: Tuple[Tuple[int, ...], ...]
    n_private: int
    multiplicity: int

    @property
    def n_photons(self) -> int:
        return sum(len(x) for x in self.labels)

    def weight(self, v: float) -> float:
        return self.multiplicity * v ** (self.n_photons - self.n_private) * (1.0 - v) ** self.n_private

    def photons(self, sources: Sequence[str]) -> Tuple[ModeKey, ...]:
        return tuple(ModeKey(ch, H, d) for ch, ds in zip(sources, self.labels) for d in ds)


def overlap_components(e: EmissionEvent) -> List[OverlapComponent]:
    """All components of the overlap mixture for one emission vector; weights sum to 1."""
    per_source = []
    for m in e.m:
        if m == 1:
            per_source.append([((False,), 1), ((True,), 1)])
        else:
            per_source.append([((False, False), 1), ((False, True), 2), ((True, True), 1)])
    out = []
    for choice in itertools.product(*per_source):
        labels, nxt, j, mult = [], 1, 0, 1
        for private, k in choice:
            if any(private):
                labels.append(tuple(nxt if p else 0 for p in private))
                nxt += 1
            else:
                labels.append(tuple(0 for _ in private))
            j += sum(private)
            mult *= k
        out.append(OverlapComponent(tuple(labels), j, mult))
    return out


# ---------------------------------------------------------------------------
# Event space


@dataclass(frozen=True)
class Event:
    emission: EmissionEvent
    losses: FrozenSet[str]
    probability: float

    def encoding(self) -> Tuple[Tuple[int, ...], Tuple[str, ...]]:
        return (self.emission.m, tuple(sorted(self.losses)))


def event_probability(e: Event, g2: float, site_probs: Mapping[str, float]) -> float:
    """Closed-form Bernoulli product over sources and loss sites."""
    p = 1.0
    for m in e.emission.m:
        p *= g2 if m == 2 else 1.0 - g2
    unknown = set(e.losses) - set(site_probs)
    if unknown:
        raise ParameterError(f"event triggers unknown sites {sorted(unknown)}")
    for site, q in site_probs.items():
        p *= q if site in e.losses else 1.0 - q
    return p


@dataclass(frozen=True)
class EventList:
    events: Tuple[Event, ...]
    covered_mass: float

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)


_TIE_RTOL = 1e-12


def enumerate_events(g2: float, site_probs: Mapping[str, float], coverage: float,
                     n_sources: int = N_SOURCES, max_events: Optional[int] = None) -> EventList:
    """
    Highest-probability events first, until the cumulative mass reaches
    ``coverage``.

    Every source and every loss site is an independent Bernoulli variable.
    Starting from the most likely joint configuration, configurations are
    produced in non-increasing probability with a best-first search over
    "flip" subsets (variables sorted by flip ratio; successors append the next
    variable or advance the last one), so only the emitted prefix is ever
    materialized. Equal probabilities (relative 1e-12) are ordered by the
    event encoding.
    """
    _check_probability("g2", g2, upper_open=True)
    if not 0.0 < coverage <= 1.0 or math.isnan(coverage):
        raise ParameterError(f"coverage must lie in (0, 1], got {coverage!r}")
    for site, q in site_probs.items():
        _check_probability(f"loss probability of {site}", q, upper_open=True)

    # variable: (likely value, flip ratio); likely value True = double / triggered
    variables = []
    for i in range(n_sources):
        variables.append(("src", i, g2 > 0.5, min(g2, 1 - g2) / max(g2, 1 - g2)))
    for site in sorted(site_probs):
        q = site_probs[site]
        variables.append(("site", site, q > 0.5, min(q, 1 - q) / max(q, 1 - q)))
    base = (max(g2, 1 - g2) ** n_sources) * math.prod(max(q, 1 - q) for q in site_probs.values())
    flippable = sorted((v for v in variables if v[3] > 0), key=lambda v: -v[3])
    fixed = [v for v in variables if v[3] == 0]

    def make(flips: Tuple[int, ...], prob: float) -> Event:
        state = {(v[0], v[1]): v[2] for v in fixed}
        state.update({(v[0], v[1]): v[2] for v in flippable})
        for k in flips:
            v = flippable[k]
            state[(v[0], v[1])] = not v[2]
        m = tuple(2 if state[("src", i)] else 1 for i in range(n_sources))
        losses = frozenset(s for s in site_probs if state[("site", s)])
        return Event(EmissionEvent(m), losses, prob)

    heap = [(-base, ())]
    out: List[Event] = []
    mass = 0.0
    nflip = len(flippable)
    while heap and mass < coverage:
        top = -heap[0][0]
        batch = []
        while heap and -heap[0][0] >= top * (1 - _TIE_RTOL):
            negp, flips = heapq.heappop(heap)
            p = -negp
            batch.append(make(flips, p))
            last = flips[-1] if flips else -1
            if last + 1 < nflip:
                r = flippable[last + 1][3]
                heapq.heappush(heap, (-(p * r), flips + (last + 1,)))
                if flips:
                    r_old = flippable[last][3]
                    heapq.heappush(heap, (-(p / r_old * r), flips[:-1] + (last + 1,)))
        batch.sort(key=Event.encoding)
        for ev in batch:
            out.append(ev)
            mass += ev.probability
            if mass >= coverage:
                break
        if max_events is not None and len(out) > max_events:
            raise ParameterError(f"more than {max_events} events needed for coverage {coverage}")
    return EventList(tuple(out), math.fsum(e.probability for e in out))


def doubles_distribution(g2: float, n_sources: int = N_SOURCES) -> np.ndarray:
    """Probability of ``k`` double emissions, ``k = 0..n_sources``."""
    k = np.arange(n_sources + 1)
    comb = np.array([math.comb(n_sources, int(i)) for i in k], dtype=float)
    return comb * g2 ** k * (1.0 - g2) ** (n_sources - k)


def doubles_cutoff(g2: float, coverage: float, n_sources: int = N_SOURCES) -> int:
    """Smallest ``K`` with ``P(#doubles <= K) >= coverage``."""
    _check_probability("g2", g2, upper_open=True)
    if not 0.0 < coverage <= 1.0:
        raise ParameterError(f"coverage must lie in (0, 1], got {coverage!r}")
    if coverage >= 1.0:
        return n_sources if g2 > 0 else 0
    cum = np.cumsum(doubles_distribution(g2, n_sources))
    return int(np.argmax(cum >= coverage * (1 - 1e-15)))


def emission_patterns(n_doubles: int, n_sources: int = N_SOURCES) -> List[EmissionEvent]:
    """Every emission vector with exactly ``n_doubles`` two-photon sources."""
    out = []
    for where in itertools.combinations(range(n_sources), n_doubles):
        out.append(EmissionEvent(tuple(2 if i in where else 1 for i in range(n_sources))))
    return out
