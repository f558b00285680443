import math
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghzsim.circuit import PBS, Netlist, Waveplate, canonical_ghz_netlist, run
from ghzsim.errors import ParameterError
from ghzsim.fock import H, ModeKey, make_basis_state
from ghzsim.sources import (EmissionEvent, Event, build_input_state, doubles_cutoff,
                            doubles_distribution, emission_patterns, enumerate_events,
                            event_probability, gram_coefficients, overlap_components)


def uniform_gram(v, n):
    return np.full((n, n), v) + (1 - v) * np.eye(n)


# -- Gram rows ---------------------------------------------------------------------

@pytest.mark.parametrize("v", [0.0, 0.3, 0.8825, 0.94, 0.99, 0.999])
@pytest.mark.parametrize("n", [1, 2, 6])
def test_gram_rows_match_numpy_cholesky(v, n):
    ours = gram_coefficients(v, n).as_array()
    ref = np.linalg.cholesky(uniform_gram(v, n))
    assert np.max(np.abs(ours - ref)) <= 1e-12


@given(st.floats(0, 1), st.integers(1, 8))
@settings(max_examples=80, deadline=None)
def test_gram_rows_reproduce_overlaps(v, n):
    c = gram_coefficients(v, n).as_array()
    assert np.max(np.abs(c @ c.T - uniform_gram(v, n))) <= 1e-12


def test_gram_perfect_overlap_is_exact():
    c = gram_coefficients(1.0, 6).as_array()
    assert np.array_equal(c[:, 0], np.ones(6))
    assert np.count_nonzero(c[:, 1:]) == 0


@pytest.mark.parametrize("v", [-0.1, 1.1, float("nan")])
def test_gram_rejects_bad_overlap(v):
    with pytest.raises(ParameterError):
        gram_coefficients(v)


def test_input_state_single_photons_normalized():
    s = build_input_state(EmissionEvent.single(), gram_coefficients(0.9), [f"c{i}" for i in range(6)])
    assert s.norm_squared() == pytest.approx(1.0, abs=1e-12)


def test_input_state_double_emission_same_mode():
    # a double emission puts both photons of a source into the same internal mode
    s = build_input_state(EmissionEvent((2,)), gram_coefficients(0.5, 1), ["a"])
    (key,) = list(s)
    assert key.count(ModeKey("a", H, 0)) == 2
    assert s.norm_squared() == pytest.approx(1.0)


# -- overlap components --------------------------------------------------------------

@pytest.mark.parametrize("m", [(1,) * 6, (2, 1, 1, 1, 1, 1), (2, 1, 2, 1, 1, 1), (2,) * 3 + (1,) * 3])
def test_component_weights_sum_to_one(m):
    comps = overlap_components(EmissionEvent(m))
    for v in (0.0, 0.37, 0.94, 1.0):
        assert math.fsum(c.weight(v) for c in comps) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_component_multiplicities_are_binomial(k):
    e = emission_patterns(k)[0]
    n = e.n_photons
    per_j = defaultdict(int)
    for c in overlap_components(e):
        per_j[c.n_private] += c.multiplicity
    assert dict(per_j) == {j: math.comb(n, j) for j in range(n + 1)}


def test_private_labels_numbered_in_source_order():
    comps = overlap_components(EmissionEvent((1, 2, 1)))
    c = next(c for c in comps if c.labels == ((1,), (0, 2), (3,)))
    assert c.n_private == 3 and c.multiplicity == 2


def _fusion_netlist(n_sources=2):
    srcs = ("a", "b")[:n_sources]
    els = [Waveplate(ch, math.pi / 4) for ch in srcs]
    els.append(PBS("a", "b", "c", "d"))
    els += [Waveplate("c", math.pi / 8), Waveplate("d", -math.pi / 8)]
    return Netlist(("a", "b", "c", "d"), tuple(els), srcs, ("c", "d"))


def _detection_distribution(state):
    """Probabilities of (channel, polarization) counts, internal index traced out."""
    out = defaultdict(float)
    for key, amp in state.items():
        counts = defaultdict(int)
        for mode, c in key:
            counts[(mode.channel, mode.polarization)] += c
        out[tuple(sorted(counts.items()))] += abs(amp) ** 2
    return out


@pytest.mark.parametrize("m", [(1, 1), (2, 1), (2, 2)])
@pytest.mark.parametrize("v", [0.2, 0.75, 0.97])
def test_component_mixture_equals_coherent_input(m, v):
    """The shared+private mixture reproduces the detection statistics of the Gram input."""
    n = _fusion_netlist()
    e = EmissionEvent(m)
    coherent = _detection_distribution(run(n, build_input_state(e, gram_coefficients(v, 2), n.sources)))
    mixed = defaultdict(float)
    for comp in overlap_components(e):
        d = _detection_distribution(run(n, make_basis_state(comp.photons(n.sources))))
        for k, p in d.items():
            mixed[k] += comp.weight(v) * p
    keys = set(coherent) | set(mixed)
    assert max(abs(coherent[k] - mixed[k]) for k in keys) <= 1e-12


# -- event space ----------------------------------------------------------------------

SITES = {"s1": 0.1, "s2": 0.05, "s3": 0.2}


def test_enumeration_closure_at_full_coverage():
    ev = enumerate_events(0.1, SITES, 1.0)
    assert len(ev) == 2 ** 6 * 2 ** 3
    assert abs(ev.covered_mass - 1.0) <= 1e-12
    assert len({e.encoding() for e in ev}) == len(ev)


def test_enumeration_order_and_probabilities():
    ev = enumerate_events(0.02, SITES, 0.99)
    probs = [e.probability for e in ev]
    assert all(a >= b * (1 - 1e-12) for a, b in zip(probs, probs[1:]))
    for e in ev:
        assert e.probability == pytest.approx(event_probability(e, 0.02, SITES), rel=1e-12)
    assert ev.covered_mass >= 0.99


def test_enumeration_is_minimal_prefix():
    ev = enumerate_events(0.02, SITES, 0.9)
    assert ev.covered_mass - ev.events[-1].probability < 0.9


@given(st.floats(0, 0.4), st.floats(0.5, 0.999))
@settings(max_examples=30, deadline=None)
def test_enumeration_prefix_matches_brute_force(g2, coverage):
    sites = {"s1": 0.15, "s2": 0.05}
    ev = enumerate_events(g2, sites, coverage)
    allp = sorted((e.probability for e in enumerate_events(g2, sites, 1.0)), reverse=True)
    k = len(ev)
    assert math.fsum(allp[:k]) == pytest.approx(ev.covered_mass, rel=1e-12)


def test_enumeration_ties_are_deterministic():
    a = enumerate_events(0.5, {"x": 0.5}, 0.6)
    b = enumerate_events(0.5, {"x": 0.5}, 0.6)
    assert [e.encoding() for e in a] == [e.encoding() for e in b]


def test_enumeration_canonical_sites_scale():
    n = canonical_ghz_netlist()
    probs = {s.site_id: {"Prep": 0.1, "Ops": 0.015, "Det": 0.1}[s.category] for s in n.loss_sites}
    ev = enumerate_events(0.015, probs, 0.5)
    assert ev.covered_mass >= 0.5
    assert ev.events[0].losses == frozenset() and ev.events[0].emission == EmissionEvent.single()


@pytest.mark.parametrize("bad", [dict(g2=1.0), dict(g2=-0.1), dict(coverage=0.0), dict(coverage=1.5)])
def test_enumeration_rejects_bad_parameters(bad):
    kw = dict(g2=0.1, site_probs=SITES, coverage=0.9)
    kw.update(bad)
    with pytest.raises(ParameterError):
        enumerate_events(**kw)


def test_enumeration_max_events_guard():
    with pytest.raises(ParameterError):
        enumerate_events(0.3, SITES, 0.999, max_events=5)


def test_doubles_distribution_and_cutoff():
    d = doubles_distribution(0.02)
    assert d.sum() == pytest.approx(1.0, abs=1e-15)
    assert doubles_cutoff(0.0, 0.999) == 0
    assert doubles_cutoff(0.02, 0.98) == 1
    assert doubles_cutoff(0.02, 0.999) == 2
    assert len(emission_patterns(2)) == 15


def test_event_probability_unknown_site():
    e = Event(EmissionEvent.single(), frozenset({"zz"}), 0.0)
    with pytest.raises(ParameterError):
        event_probability(e, 0.1, SITES)
