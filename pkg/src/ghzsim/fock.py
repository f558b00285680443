"""
Sparse second-quantized states over (channel, polarization, internal index) modes.

A :class:`PureState` maps canonical occupation-number basis states to complex
amplitudes. All mode transformations used by the GHZ circuit are provided as
pure functions: polarization rotations, polarizing beamsplitters and the
single-photon loss map into a dedicated loss channel.

This is the reference (dictionary based) implementation. It favours clarity
over speed; the vectorized branch engine in :mod:`ghzsim.engine` is checked
against it.
"""

from __future__ import annotations

import math
from collections import defaultdict
from functools import lru_cache
from itertools import product
from types import MappingProxyType
from typing import Collection, Dict, Iterable, Iterator, Mapping, NamedTuple, Optional, Tuple

from .errors import ConfigurationError, InvariantViolation

H = 0
V = 1
POLARIZATIONS = (H, V)

# Twelve photons at most (six sources, up to two photons each).
MAX_PHOTONS = 12
MAX_DIST_INDEX = MAX_PHOTONS - 1


class ModeKey(NamedTuple):
    """One bosonic mode: spatial channel, polarization (H=0, V=1), internal index."""

    channel: str
    polarization: int
    dist_index: int = 0


def _check_mode(mode: ModeKey) -> None:
    if mode.polarization not in POLARIZATIONS:
        raise ConfigurationError(f"polarization must be H(0) or V(1), got {mode.polarization!r}")
    if not 0 <= mode.dist_index <= MAX_DIST_INDEX:
        raise ConfigurationError(
            f"dist_index must lie in [0, {MAX_DIST_INDEX}], got {mode.dist_index!r}")


class FockBasisState(tuple):
    """
    Canonical occupation list ``((ModeKey, count), ...)``.

    Keys are strictly increasing and every count is positive, so two equal
    physical basis states always compare (and hash) equal.
    """

    __slots__ = ()

    def __new__(cls, occupations: Iterable[Tuple[ModeKey, int]] = ()):
        counts: Dict[ModeKey, int] = defaultdict(int)
        for mode, count in occupations:
            mode = ModeKey(*mode)
            _check_mode(mode)
            if count < 0:
                raise ConfigurationError(f"negative occupation for {mode}")
            counts[mode] += count
        items = tuple(sorted((m, c) for m, c in counts.items() if c > 0))
        if sum(c for _, c in items) > MAX_PHOTONS:
            raise ConfigurationError(f"more than {MAX_PHOTONS} photons in one basis state")
        return tuple.__new__(cls, items)

    @classmethod
    def _trusted(cls, items) -> "FockBasisState":
        # items must already be canonical
        return tuple.__new__(cls, items)

    @classmethod
    def from_photons(cls, photons: Iterable[ModeKey]) -> "FockBasisState":
        return cls((ModeKey(*p), 1) for p in photons)

    @property
    def photon_number(self) -> int:
        return sum(c for _, c in self)

    def count(self, mode) -> int:  # type: ignore[override]
        for m, c in self:
            if m == mode:
                return c
        return 0

    def channel_count(self, channel: str) -> int:
        return sum(c for m, c in self if m.channel == channel)

    def channels(self) -> set:
        return {m.channel for m, _ in self}

    def photons(self) -> Tuple[ModeKey, ...]:
        """Expanded multiset of occupied modes, in canonical order."""
        return tuple(m for m, c in self for _ in range(c))

    def __repr__(self) -> str:
        body = ", ".join(f"{c}@{m.channel}{'HV'[m.polarization]}{m.dist_index}" for m, c in self)
        return f"|{body}>"


VACUUM = FockBasisState()


class PureState:
    """
    Immutable sparse superposition of :class:`FockBasisState` with complex amplitudes.

    Amplitudes that are exactly zero are never stored. ``prune`` optionally
    drops entries with ``abs(amplitude) < prune`` (default 0, i.e. exact only).
    """

    __slots__ = ("_amps",)

    def __init__(self, amplitudes: Mapping[FockBasisState, complex] = None, prune: float = 0.0):
        amps = {}
        for key, amp in (amplitudes or {}).items():
            amp = complex(amp)
            if amp == 0 or abs(amp) < prune:
                continue
            if not isinstance(key, FockBasisState):
                key = FockBasisState(key)
            amps[key] = amp
        self._amps = amps

    @classmethod
    def _wrap(cls, amps: Dict[FockBasisState, complex], prune: float = 0.0) -> "PureState":
        out = cls.__new__(cls)
        out._amps = {k: a for k, a in amps.items() if a != 0 and abs(a) >= prune}
        return out

    @property
    def amplitudes(self) -> Mapping[FockBasisState, complex]:
        return MappingProxyType(self._amps)

    def __len__(self) -> int:
        return len(self._amps)

    def __iter__(self) -> Iterator[FockBasisState]:
        return iter(self._amps)

    def items(self):
        return self._amps.items()

    def amplitude(self, key: FockBasisState) -> complex:
        return self._amps.get(key, 0j)

    def norm_squared(self) -> float:
        return math.fsum(abs(a) ** 2 for a in self._amps.values())

    def scaled(self, factor: complex) -> "PureState":
        return PureState._wrap({k: a * factor for k, a in self._amps.items()})

    def __add__(self, other: "PureState") -> "PureState":
        out = dict(self._amps)
        for k, a in other.items():
            out[k] = out.get(k, 0j) + a
        return PureState._wrap(out)

    def __repr__(self) -> str:
        terms = sorted(self._amps.items(), key=lambda kv: -abs(kv[1]))[:4]
        body = " + ".join(f"({a:.4g}){k!r}" for k, a in terms)
        more = "" if len(self._amps) <= 4 else f" + ... ({len(self._amps)} terms)"
        return f"PureState({body}{more})"


def make_basis_state(photons: Iterable[ModeKey] = ()) -> PureState:
    """
    Normalized basis state with one photon per listed mode.

    Repeated modes give higher occupations; the state corresponds to
    ``prod (a^dag)^n / sqrt(n!) |vac>``, so the amplitude is always 1.
    """
    photons = [ModeKey(*p) for p in photons]
    if len(photons) > MAX_PHOTONS:
        raise ConfigurationError(f"at most {MAX_PHOTONS} photons, got {len(photons)}")
    return PureState._wrap({FockBasisState.from_photons(photons): 1.0 + 0j})


def _check_channel(channel: str, channels: Optional[Collection[str]]) -> None:
    if channels is not None and channel not in channels:
        raise ConfigurationError(f"unknown channel {channel!r}")


@lru_cache(maxsize=None)
def rotation_amplitudes(n_h: int, n_v: int, angle: float) -> Tuple[Tuple[int, float], ...]:
    """
    Two-mode rotation of ``|n_h, n_v>`` as ``((h_out, amplitude), ...)``.

    Uses ``a_H -> cos a_H + sin a_V`` and ``a_V -> -sin a_H + cos a_V``.
    """
    c, s = math.cos(angle), math.sin(angle)
    n = n_h + n_v
    acc = [0.0] * (n + 1)
    for i in range(n_h + 1):
        ti = math.comb(n_h, i) * c ** i * s ** (n_h - i)
        for j in range(n_v + 1):
            tj = math.comb(n_v, j) * (-s) ** j * c ** (n_v - j)
            acc[i + j] += ti * tj
    norm = math.sqrt(math.factorial(n_h) * math.factorial(n_v))
    return tuple(
        (h, acc[h] * math.sqrt(math.factorial(h) * math.factorial(n - h)) / norm)
        for h in range(n + 1) if acc[h] != 0.0)


def apply_polarization_rotation(state: PureState, channel: str, angle: float,
                                channels: Optional[Collection[str]] = None) -> PureState:
    """Rotate the polarization of every photon in ``channel`` by ``angle`` radians."""
    _check_channel(channel, channels)
    if not math.isfinite(angle):
        raise ConfigurationError("rotation angle must be finite")
    out: Dict[FockBasisState, complex] = defaultdict(complex)
    for key, amp in state.items():
        rest = []
        groups: Dict[int, list] = {}
        for mode, count in key:
            if mode.channel == channel:
                groups.setdefault(mode.dist_index, [0, 0])[mode.polarization] += count
            else:
                rest.append((mode, count))
        if not groups:
            out[key] += amp
            continue
        options = []
        for d, (n_h, n_v) in sorted(groups.items()):
            n = n_h + n_v
            opts = []
            for h, coeff in rotation_amplitudes(n_h, n_v, angle):
                occ = []
                if h:
                    occ.append((ModeKey(channel, H, d), h))
                if n - h:
                    occ.append((ModeKey(channel, V, d), n - h))
                opts.append((occ, coeff))
            options.append(opts)
        for combo in product(*options):
            a = amp
            occ = list(rest)
            for part, coeff in combo:
                a *= coeff
                occ.extend(part)
            out[FockBasisState._trusted(tuple(sorted(occ)))] += a
    return PureState._wrap(out)


def apply_pbs(state: PureState, in1: str, in2: str, out1: str, out2: str,
              channels: Optional[Collection[str]] = None) -> PureState:
    """
    Polarizing beamsplitter: H is transmitted (in1->out1, in2->out2), V swaps
    arms (in1->out2, in2->out1). A pure mode relabeling, so no phases appear.
    """
    for ch in (in1, in2, out1, out2):
        _check_channel(ch, channels)
    if in1 == in2 or out1 == out2:
        raise ConfigurationError("PBS needs two distinct input and two distinct output channels")
    route = {(in1, H): out1, (in2, H): out2, (in1, V): out2, (in2, V): out1}
    out: Dict[FockBasisState, complex] = {}
    for key, amp in state.items():
        occ: Dict[ModeKey, int] = defaultdict(int)
        for mode, count in key:
            target = route.get((mode.channel, mode.polarization))
            if target is not None:
                mode = ModeKey(target, mode.polarization, mode.dist_index)
            occ[mode] += count
        new = FockBasisState._trusted(tuple(sorted(occ.items())))
        out[new] = out.get(new, 0j) + amp
    return PureState._wrap(out)


def apply_loss(state: PureState, channel: str, loss_channel: str,
               channels: Optional[Collection[str]] = None) -> PureState:
    """
    Move one photon from ``channel`` into the fresh ``loss_channel``.

    Each occupied mode ``(channel, s, d)`` with ``n`` photons out of ``N`` in
    the channel contributes a branch with amplitude factor ``sqrt(n / N)``.
    Basis states with an empty channel are left unchanged.
    """
    _check_channel(channel, channels)
    out: Dict[FockBasisState, complex] = defaultdict(complex)
    for key, amp in state.items():
        total = 0
        for mode, count in key:
            if mode.channel == loss_channel:
                raise InvariantViolation(f"loss channel {loss_channel!r} is already occupied")
            if mode.channel == channel:
                total += count
        if total == 0:
            out[key] += amp
            continue
        for mode, count in key:
            if mode.channel != channel:
                continue
            occ = {m: c for m, c in key}
            occ[mode] -= 1
            if occ[mode] == 0:
                del occ[mode]
            lost = ModeKey(loss_channel, mode.polarization, mode.dist_index)
            occ[lost] = occ.get(lost, 0) + 1
            new = FockBasisState._trusted(tuple(sorted(occ.items())))
            out[new] += amp * math.sqrt(count / total)
    return PureState._wrap(out)


def inner_product(a: PureState, b: PureState) -> complex:
    """Hermitian inner product ``<a|b>``."""
    if len(a) > len(b):
        return inner_product(b, a).conjugate()
    return sum((amp.conjugate() * b.amplitude(k) for k, amp in a.items()), 0j)
