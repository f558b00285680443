"""
Post-selection on the detector pattern, outcome-dependent GHZ targets and the
mixture formulas for fidelity and success probability.

Two acceptance rules are supported:

``"coincidence"`` (default)
    every detector *and* every output channel holds exactly one photon, i.e.
    the heralded state is conditioned on a six-fold coincidence including the
    detection of the three GHZ photons.
``"herald"``
    only the three detectors are required to see one photon each; the output
    channels are unconstrained.

With the coincidence rule a lost or surplus photon always shows up as a wrong
photon number somewhere, so at perfect overlap the fidelity of the accepted
state is 1 for any loss or two-photon-emission rate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Tuple

from .circuit import Netlist, run
from .errors import CalibrationError, ConfigurationError
from .fock import H, V, FockBasisState, ModeKey, PureState, make_basis_state

ACCEPTANCE_MODES = ("coincidence", "herald")
IDEAL_SUCCESS = 1.0 / 32.0

Pattern = Tuple[int, ...]


@dataclass(frozen=True)
class DetectionOutcome:
    """Per-detector ``(n_H, n_V)`` photon counts, in netlist detector order."""

    counts: Tuple[Tuple[int, int], ...]

    @property
    def accepted(self) -> bool:
        return all(h + v == 1 for h, v in self.counts)

    @property
    def pattern(self) -> Pattern:
        """Polarization per detector (0 = H, 1 = V); only meaningful when accepted."""
        return tuple(1 if v else 0 for _, v in self.counts)


@dataclass(frozen=True)
class SignTable:
    signs: Mapping[Pattern, int]

    def __getitem__(self, pattern: Pattern) -> int:
        return self.signs[pattern]

    def __len__(self):
        return len(self.signs)

    def get(self, pattern: Pattern, default=None):
        return self.signs.get(pattern, default)

    def items(self):
        return self.signs.items()

    def flipped(self, pattern: Pattern) -> "SignTable":
        out = dict(self.signs)
        out[pattern] = -out[pattern]
        return SignTable(out)


@dataclass(frozen=True)
class BranchMeasures:
    success: float
    fidelity_numerator: float


@dataclass(frozen=True)
class MixtureMeasures:
    fidelity: float  # NaN when no accepted mass (undefined)
    success: float
    success_normalized: float
    covered_mass: float

    @property
    def fidelity_defined(self) -> bool:
        return not math.isnan(self.fidelity)


def _check_mode(acceptance: str) -> None:
    if acceptance not in ACCEPTANCE_MODES:
        raise ConfigurationError(f"unknown acceptance mode {acceptance!r}")


def _channel_counts(key: FockBasisState, channel: str) -> Tuple[int, int]:
    h = v = 0
    for mode, c in key:
        if mode.channel == channel:
            if mode.polarization == H:
                h += c
            else:
                v += c
    return h, v


def classify(state: PureState, netlist: Netlist,
             acceptance: str = "coincidence") -> Dict[DetectionOutcome, PureState]:
    """
    Group amplitudes by detector outcome and keep the accepted ones.

    Under ``"coincidence"`` basis states whose output channels do not hold
    exactly one photon each are discarded as well.
    """
    _check_mode(acceptance)
    dets = [d.channel for d in netlist.detectors]
    groups: Dict[DetectionOutcome, Dict[FockBasisState, complex]] = {}
    for key, amp in state.items():
        outcome = DetectionOutcome(tuple(_channel_counts(key, ch) for ch in dets))
        if not outcome.accepted:
            continue
        if acceptance == "coincidence" and any(key.channel_count(ch) != 1 for ch in netlist.outputs):
            continue
        groups.setdefault(outcome, {})[key] = amp
    return {k: PureState._wrap(v) for k, v in groups.items()}


def _ghz_groups(accepted: PureState, netlist: Netlist):
    """
    Split accepted amplitudes by environment.

    Returns ``{(pattern, environment): [a_HHH, a_VVV]}`` where the environment
    is the basis state with output polarizations erased.
    """
    outs = set(netlist.outputs)
    dets = [d.channel for d in netlist.detectors]
    groups: Dict[tuple, List[complex]] = {}
    for key, amp in accepted.items():
        if any(key.channel_count(ch) != 1 for ch in netlist.outputs):
            continue
        out_pols = {m.polarization for m, _ in key if m.channel in outs}
        if len(out_pols) != 1:
            continue
        pol = out_pols.pop()
        env = tuple((m._replace(polarization=H) if m.channel in outs else m, c) for m, c in key)
        pattern = tuple(1 if _channel_counts(key, ch)[1] else 0 for ch in dets)
        slot = groups.setdefault((pattern, env), [0j, 0j])
        slot[pol] += amp
    return groups


def branch_measures(state: PureState, netlist: Netlist, signs: SignTable,
                    acceptance: str = "coincidence") -> BranchMeasures:
    """
    Accepted mass and unnormalized GHZ overlap of one pure branch.

    The numerator is ``sum_E |a_H(E) + eps a_V(E)|^2 / 2`` over environments
    ``E`` (detector, loss and internal-index content), which is the overlap of
    the outcome-corrected GHZ state with the accepted state traced over
    everything but the output polarizations.
    """
    accepted = classify(state, netlist, acceptance)
    success = math.fsum(s.norm_squared() for s in accepted.values())
    numer = []
    for sub in accepted.values():
        for (pattern, _), (a_h, a_v) in _ghz_groups(sub, netlist).items():
            numer.append(abs(a_h + signs[pattern] * a_v) ** 2 / 2.0)
    return BranchMeasures(success, math.fsum(numer))


def ideal_input(netlist: Netlist) -> PureState:
    return make_basis_state(ModeKey(ch, H, 0) for ch in netlist.sources)


def pattern_fidelities(state: PureState, netlist: Netlist, signs: Mapping[Pattern, int],
                       acceptance: str = "coincidence") -> Dict[Pattern, float]:
    """Post-selected fidelity per accepted detector pattern."""
    out = {}
    for outcome, sub in classify(state, netlist, acceptance).items():
        mass = sub.norm_squared()
        groups = _ghz_groups(sub, netlist)
        numer = math.fsum(abs(a_h + signs.get(p, 1) * a_v) ** 2 / 2.0
                          for (p, _), (a_h, a_v) in groups.items())
        out[outcome.pattern] = numer / mass if mass else math.nan
    return out


def derive_sign_table(netlist: Netlist, acceptance: str = "coincidence",
                      tol: float = 1e-9) -> SignTable:
    """
    Run the ideal circuit once and pick, per accepted pattern, the GHZ sign
    that gives fidelity 1.

    Raises
    ------
    CalibrationError
        if some pattern reaches fidelity 1 with neither sign (the netlist or
        the conventions are broken); ``diagnostics`` holds the per-pattern
        fidelities of both signs.
    """
    out = run(netlist, ideal_input(netlist))
    n_det = len(netlist.detectors)
    patterns = list(itertools.product((H, V), repeat=n_det))
    plus = pattern_fidelities(out, netlist, {p: 1 for p in patterns}, acceptance)
    minus = pattern_fidelities(out, netlist, {p: -1 for p in patterns}, acceptance)
    signs, diag, bad = {}, {}, False
    for p in patterns:
        fp, fm = plus.get(p, math.nan), minus.get(p, math.nan)
        diag[p] = {"+1": fp, "-1": fm}
        best = max((fp, 1), (fm, -1), key=lambda t: -math.inf if math.isnan(t[0]) else t[0])
        if math.isnan(best[0]) or abs(best[0] - 1.0) > tol:
            bad = True
        signs[p] = best[1]
    if bad:
        raise CalibrationError("ideal circuit does not herald a GHZ state for every pattern", diag)
    return SignTable(signs)


def mixture_measures(branches: Iterable[Tuple[float, BranchMeasures]],
                     covered_mass: float) -> MixtureMeasures:
    """
    Combine weighted branches (``(probability, measures)``) in the given order.

    ``success`` is conditioned on the covered mass, the fidelity is the ratio
    of the summed numerators and successes.
    """
    if not covered_mass > 0:
        raise ConfigurationError("covered mass must be positive")
    s_terms, n_terms = [], []
    for p, m in branches:
        s_terms.append(p * m.success)
        n_terms.append(p * m.fidelity_numerator)
    s = math.fsum(s_terms)
    nsum = math.fsum(n_terms)
    fid = nsum / s if s > 0 else math.nan
    success = s / covered_mass
    return MixtureMeasures(fid, success, success / IDEAL_SUCCESS, covered_mass)
