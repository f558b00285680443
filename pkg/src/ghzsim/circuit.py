"""
Netlist model of the heralded GHZ circuit, the element-by-element stepper and
a permanent-based amplitude oracle used for cross-validation.

Netlist file schema (JSON)::

    {
      "channels": ["c0", ...],
      "elements": [
        {"type": "wp", "channel": "c0", "angle_deg": 45.0},
        {"type": "pbs", "in": ["c0", "c1"], "out": ["a1", "x0"]},
        {"type": "loss", "site": "prep:c0", "channel": "c0", "category": "Prep"},
        {"type": "det", "id": "D1", "channel": "d1"}
      ],
      "sources": ["c0", ..., "c5"],
      "outputs": ["x0", "x3", "x5"]
    }
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from .errors import ConfigurationError
from .fock import (H, V, FockBasisState, ModeKey, PureState, apply_loss, apply_pbs,
                   apply_polarization_rotation, make_basis_state)

LOSS_CATEGORIES = ("Prep", "Ops", "Det")


@dataclass(frozen=True)
class Waveplate:
    channel: str
    angle: float  # radians


@dataclass(frozen=True)
class PBS:
    in1: str
    in2: str
    out1: str
    out2: str


@dataclass(frozen=True)
class LossSite:
    site_id: str
    channel: str
    category: str


@dataclass(frozen=True)
class Detector:
    detector_id: str
    channel: str


Element = Union[Waveplate, PBS, LossSite, Detector]


def element_channels(el: Element) -> Tuple[str, ...]:
    if isinstance(el, PBS):
        return (el.in1, el.in2, el.out1, el.out2)
    return (el.channel,)


def loss_channel_name(site_id: str) -> str:
    return f"loss[{site_id}]"


@dataclass(frozen=True)
class Netlist:
    channels: Tuple[str, ...]
    elements: Tuple[Element, ...]
    sources: Tuple[str, ...]
    outputs: Tuple[str, ...]
    name: str = field(default="netlist", compare=False)

    @property
    def detectors(self) -> Tuple[Detector, ...]:
        return tuple(el for el in self.elements if isinstance(el, Detector))

    @property
    def detector_ids(self) -> Tuple[str, ...]:
        return tuple(d.detector_id for d in self.detectors)

    @property
    def loss_sites(self) -> Tuple[LossSite, ...]:
        return tuple(el for el in self.elements if isinstance(el, LossSite))

    @property
    def site_ids(self) -> Tuple[str, ...]:
        return tuple(s.site_id for s in self.loss_sites)

    def sites_by_category(self) -> Dict[str, Tuple[str, ...]]:
        out = {c: [] for c in LOSS_CATEGORIES}
        for s in self.loss_sites:
            out.setdefault(s.category, []).append(s.site_id)
        return {c: tuple(v) for c, v in out.items()}

    def all_channels(self) -> Tuple[str, ...]:
        """Declared channels followed by one dedicated loss channel per site."""
        return self.channels + tuple(loss_channel_name(s) for s in self.site_ids)

    def to_dict(self) -> dict:
        return netlist_to_dict(self)

    def content_hash(self) -> str:
        blob = json.dumps(netlist_to_dict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Canonical circuit

_Q = math.pi / 4


def canonical_ghz_netlist(output_detection_loss: bool = True) -> Netlist:
    """
    Six single photons fused pairwise into three Bell pairs, then two further
    fusions herald a three-photon GHZ state on ``x0, x3, x5``.

    Loss sites: ``Prep`` at each source, ``Ops`` after every waveplate and on
    every PBS output arm, ``Det`` right before each detection. With
    ``output_detection_loss`` (default) the three output photons also carry a
    ``Det`` site, since the coincidence post-selection detects them as well.
    """
    sources = ("c0", "c1", "c2", "c3", "c4", "c5")
    fused = ("a1", "x0", "x3", "b1", "x5", "cl")
    channels = sources + fused + ("a2", "d1", "d2", "d3")
    els: List[Element] = []

    def wp(ch):
        els.append(Waveplate(ch, _Q))
        els.append(LossSite(f"ops:wp:{ch}", ch, "Ops"))

    def pbs(i1, i2, o1, o2):
        els.append(PBS(i1, i2, o1, o2))
        els.append(LossSite(f"ops:pbs:{o1}", o1, "Ops"))
        els.append(LossSite(f"ops:pbs:{o2}", o2, "Ops"))

    for ch in sources:
        els.append(LossSite(f"prep:{ch}", ch, "Prep"))
    for ch in sources:
        wp(ch)
    pbs("c0", "c1", "a1", "x0")
    pbs("c2", "c3", "x3", "b1")
    pbs("c4", "c5", "x5", "cl")
    for ch in fused:
        wp(ch)
    pbs("a1", "b1", "a2", "d1")
    wp("d1")
    pbs("a2", "cl", "d3", "d2")
    wp("d2")
    wp("d3")
    for ch in ("d1", "d2", "d3"):
        els.append(LossSite(f"det:{ch}", ch, "Det"))
    if output_detection_loss:
        for ch in ("x0", "x3", "x5"):
            els.append(LossSite(f"det:{ch}", ch, "Det"))
    for i, ch in enumerate(("d1", "d2", "d3"), start=1):
        els.append(Detector(f"D{i}", ch))
    name = "canonical-ghz" if output_detection_loss else "canonical-ghz-herald-det"
    return Netlist(channels, tuple(els), sources, ("x0", "x3", "x5"), name=name)


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    index: Optional[int]
    message: str

    def __str__(self):
        where = "netlist" if self.index is None else f"element {self.index}"
        return f"{where}: {self.message}"


def validate_netlist(n: Netlist, require_ghz_shape: bool = True) -> List[Violation]:
    """Return every invariant violation (an empty list means the netlist is ok)."""
    out: List[Violation] = []
    declared = set(n.channels)
    if len(declared) != len(n.channels):
        out.append(Violation(None, "duplicate channel declaration"))
    for ch in n.sources + n.outputs:
        if ch not in declared:
            out.append(Violation(None, f"undeclared channel {ch!r}"))
    if require_ghz_shape:
        if len(n.sources) != 6:
            out.append(Violation(None, f"expected 6 source channels, got {len(n.sources)}"))
        if len(n.outputs) != 3:
            out.append(Violation(None, f"expected 3 output channels, got {len(n.outputs)}"))
        if len(n.detectors) != 3:
            out.append(Violation(None, f"expected 3 detectors, got {len(n.detectors)}"))

    seen_sites, seen_dets = set(), set()
    live = set(n.sources)
    detected: Dict[str, int] = {}
    for i, el in enumerate(n.elements):
        chans = element_channels(el)
        for ch in chans:
            if ch not in declared:
                out.append(Violation(i, f"undeclared channel {ch!r}"))
            if ch in detected:
                out.append(Violation(i, f"detector not terminal: channel {ch!r} used after "
                                        f"detector at element {detected[ch]}"))
        if isinstance(el, PBS):
            if el.in1 == el.in2 or el.out1 == el.out2:
                out.append(Violation(i, "PBS needs distinct input and distinct output channels"))
            if el.in1 not in live and el.in2 not in live:
                out.append(Violation(i, "PBS has no photon-carrying input"))
            live -= {el.in1, el.in2}
            live |= {el.out1, el.out2}
            continue
        if el.channel not in live:
            out.append(Violation(i, f"element acts on channel {el.channel!r} that carries no photons"))
        if isinstance(el, LossSite):
            if el.site_id in seen_sites:
                out.append(Violation(i, f"duplicate loss site id {el.site_id!r}"))
            if el.category not in LOSS_CATEGORIES:
                out.append(Violation(i, f"unknown loss category {el.category!r}"))
            seen_sites.add(el.site_id)
        elif isinstance(el, Detector):
            if el.detector_id in seen_dets:
                out.append(Violation(i, f"duplicate detector id {el.detector_id!r}"))
            seen_dets.add(el.detector_id)
            detected[el.channel] = i
        elif isinstance(el, Waveplate):
            if not math.isfinite(el.angle):
                out.append(Violation(i, "waveplate angle must be finite"))
    for ch in n.outputs:
        if ch not in live:
            out.append(Violation(None, f"output channel {ch!r} carries no photons at the end"))
        if ch in detected:
            out.append(Violation(None, f"output channel {ch!r} is also detected"))
    return out


# ---------------------------------------------------------------------------
# Stepper


def run(n: Netlist, state: PureState, triggered_losses: Iterable[str] = (),
        prune: float = 0.0) -> PureState:
    """
    Apply the netlist elements in order.

    Loss sites act only when their id is in ``triggered_losses``; each uses its
    own loss channel. Detectors leave the state untouched (heralding is done
    afterwards on the final state).
    """
    triggered = frozenset(triggered_losses)
    unknown = triggered - set(n.site_ids)
    if unknown:
        raise ConfigurationError(f"unknown loss sites: {sorted(unknown)}")
    allowed = set(n.sources)
    for key in state:
        for mode, _ in key:
            if mode.channel not in allowed:
                raise ConfigurationError(f"input photon outside the source channels: {mode}")
    chans = set(n.all_channels())
    for el in n.elements:
        if isinstance(el, Waveplate):
            state = apply_polarization_rotation(state, el.channel, el.angle, chans)
        elif isinstance(el, PBS):
            state = apply_pbs(state, el.in1, el.in2, el.out1, el.out2, chans)
        elif isinstance(el, LossSite):
            if el.site_id in triggered:
                state = apply_loss(state, el.channel, loss_channel_name(el.site_id), chans)
        if prune:
            state = PureState._wrap(dict(state.items()), prune=prune)
    return state


# ---------------------------------------------------------------------------
# Permanent oracle


@dataclass(frozen=True)
class ModeUnitary:
    """Single-photon transfer matrix over ``(channel, polarization)`` modes."""

    modes: Tuple[Tuple[str, int], ...]
    matrix: np.ndarray

    def index(self, channel: str, pol: int) -> int:
        return self.modes.index((channel, pol))


def lossless_mode_unitary(n: Netlist) -> ModeUnitary:
    """
    Compose the waveplates and PBSs (ignoring loss sites and detectors) into
    ``U`` with ``a_j^dag -> sum_i U[i, j] a_i^dag``, the same for every
    internal index.
    """
    modes = tuple((ch, p) for ch in n.channels for p in (H, V))
    idx = {m: i for i, m in enumerate(modes)}
    U = np.eye(len(modes), dtype=complex)
    for el in n.elements:
        step = np.eye(len(modes), dtype=complex)
        if isinstance(el, Waveplate):
            c, s = math.cos(el.angle), math.sin(el.angle)
            h, v = idx[(el.channel, H)], idx[(el.channel, V)]
            step[h, h], step[v, h] = c, s
            step[h, v], step[v, v] = -s, c
        elif isinstance(el, PBS):
            route = {(el.in1, H): (el.out1, H), (el.in2, H): (el.out2, H),
                     (el.in1, V): (el.out2, V), (el.in2, V): (el.out1, V)}
            step = np.zeros_like(step)
            targets = {dst for dst in route.values()}
            sources = set(route)
            for m, i in idx.items():
                if m in route:
                    step[idx[route[m]], i] = 1
                elif m not in targets:
                    step[i, i] = 1
            # modes that are PBS outputs but not inputs are overwritten; keep
            # the map a permutation by sending them to the freed input modes
            freed = [idx[m] for m in sources if m not in targets]
            taken = [idx[m] for m in targets if m not in sources]
            for src, dst in zip(sorted(taken), sorted(freed)):
                step[dst, src] = 1
        else:
            continue
        U = step @ U
    return ModeUnitary(modes, U)


def permanent(a: np.ndarray) -> complex:
    """Ryser's formula with Gray-code subset iteration, O(2^n n)."""
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("permanent needs a square matrix")
    if n == 0:
        return 1.0 + 0j
    if n == 1:
        return complex(a[0, 0])
    if n == 2:
        return complex(a[0, 0] * a[1, 1] + a[0, 1] * a[1, 0])
    row_sums = np.zeros(n, dtype=complex)
    total = 0j
    gray = 0
    for k in range(1, 1 << n):
        # column flipped between consecutive Gray codes
        j = (k & -k).bit_length() - 1
        gray ^= 1 << j
        if gray >> j & 1:
            row_sums += a[:, j]
        else:
            row_sums -= a[:, j]
        sign = -1 if bin(gray).count("1") & 1 else 1
        total += sign * np.prod(row_sums)
    return (-1) ** n * total


def oracle_amplitude(U: ModeUnitary, input_config: FockBasisState,
                     output_config: FockBasisState) -> complex:
    """
    ``<output| U |input>`` evaluated per internal-index sector as
    ``perm(U_sub) / sqrt(prod n_in! prod n_out!)``. Mismatched photon numbers
    (total or per sector) give zero.
    """
    def sectors(cfg):
        out: Dict[int, List[Tuple[int, int]]] = {}
        for mode, count in cfg:
            out.setdefault(mode.dist_index, []).append((U.index(mode.channel, mode.polarization), count))
        return out

    sin, sout = sectors(input_config), sectors(output_config)
    if set(sin) != set(sout):
        return 0j
    amp = 1.0 + 0j
    for d, ins in sin.items():
        outs = sout[d]
        if sum(c for _, c in ins) != sum(c for _, c in outs):
            return 0j
        cols = [i for i, c in ins for _ in range(c)]
        rows = [i for i, c in outs for _ in range(c)]
        norm = math.prod(math.factorial(c) for _, c in ins) * math.prod(math.factorial(c) for _, c in outs)
        amp *= permanent(U.matrix[np.ix_(rows, cols)]) / math.sqrt(norm)
    return amp


@dataclass(frozen=True)
class OracleReport:
    n_configs: int
    n_amplitudes: int
    max_deviation: float


def oracle_equivalence(n: Netlist, n_configs: int = 100, seed: int = 0,
                       max_dist_index: int = 2, max_outputs: int = 48,
                       max_photons: int = 4) -> OracleReport:
    """
    Compare stepper and permanent amplitudes on random lossless inputs.

    Each configuration puts one photon on a random non-empty subset (at most
    ``max_photons``) of the source channels with random polarization and internal index. Up to
    ``max_outputs`` output basis states of the stepper result (a seeded random
    sample) are compared with the oracle; since both maps are unitary and the
    stepper output is normalized, agreement on the sampled support plus the
    norm check leaves no room for missing amplitudes elsewhere.
    """
    rng = np.random.default_rng(seed)
    U = lossless_mode_unitary(n)
    worst, count = 0.0, 0
    srcs = list(n.sources)
    for _ in range(n_configs):
        k = int(rng.integers(1, min(max_photons, len(srcs)) + 1))
        chosen = rng.choice(len(srcs), size=k, replace=False)
        photons = [ModeKey(srcs[i], int(rng.integers(2)), int(rng.integers(max_dist_index + 1)))
                   for i in sorted(chosen)]
        inp = make_basis_state(photons)
        in_key = next(iter(inp))
        out = run(n, inp)
        worst = max(worst, abs(out.norm_squared() - 1.0))
        items = list(out.items())
        if len(items) > max_outputs:
            pick = rng.choice(len(items), size=max_outputs, replace=False)
            items = [items[i] for i in sorted(pick)]
        for key, amp in items:
            worst = max(worst, abs(amp - oracle_amplitude(U, in_key, key)))
            count += 1
    return OracleReport(n_configs, count, float(worst))


# ---------------------------------------------------------------------------
# File format


def netlist_to_dict(n: Netlist) -> dict:
    els = []
    for el in n.elements:
        if isinstance(el, Waveplate):
            els.append({"type": "wp", "channel": el.channel, "angle_deg": math.degrees(el.angle)})
        elif isinstance(el, PBS):
            els.append({"type": "pbs", "in": [el.in1, el.in2], "out": [el.out1, el.out2]})
        elif isinstance(el, LossSite):
            els.append({"type": "loss", "site": el.site_id, "channel": el.channel, "category": el.category})
        elif isinstance(el, Detector):
            els.append({"type": "det", "id": el.detector_id, "channel": el.channel})
    return {"channels": list(n.channels), "elements": els,
            "sources": list(n.sources), "outputs": list(n.outputs)}


def netlist_from_dict(data: dict, name: str = "netlist") -> Netlist:
    try:
        els: List[Element] = []
        for raw in data["elements"]:
            kind = raw["type"]
            if kind == "wp":
                els.append(Waveplate(raw["channel"], math.radians(float(raw["angle_deg"]))))
            elif kind == "pbs":
                (i1, i2), (o1, o2) = raw["in"], raw["out"]
                els.append(PBS(i1, i2, o1, o2))
            elif kind == "loss":
                els.append(LossSite(raw["site"], raw["channel"], raw["category"]))
            elif kind == "det":
                els.append(Detector(raw["id"], raw["channel"]))
            else:
                raise ConfigurationError(f"unknown element type {kind!r}")
        return Netlist(tuple(data["channels"]), tuple(els), tuple(data["sources"]),
                       tuple(data["outputs"]), name=name)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"malformed netlist: {exc}") from exc


def load_netlist(path: Union[str, Path]) -> Netlist:
    path = Path(path)
    with open(path) as fh:
        return netlist_from_dict(json.load(fh), name=path.stem)


def dump_netlist(n: Netlist, path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        json.dump(netlist_to_dict(n), fh, indent=2)
        fh.write("\n")
