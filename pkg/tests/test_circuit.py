import dataclasses
import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghzsim.circuit import (PBS, Detector, LossSite, Netlist, Waveplate, canonical_ghz_netlist,
                            dump_netlist, load_netlist, lossless_mode_unitary, netlist_from_dict,
                            oracle_amplitude, oracle_equivalence, permanent, run, validate_netlist)
from ghzsim.errors import ConfigurationError
from ghzsim.fock import H, V, FockBasisState, ModeKey, make_basis_state


def brute_permanent(a):
    n = a.shape[0]
    return sum(math.prod(a[i, s[i]] for i in range(n)) for s in itertools.permutations(range(n)))


def with_elements(n: Netlist, elements) -> Netlist:
    return dataclasses.replace(n, elements=tuple(elements))


@pytest.fixture(scope="module")
def canon():
    return canonical_ghz_netlist()


# -- canonical netlist -----------------------------------------------------------

def test_canonical_netlist_is_valid(canon):
    assert validate_netlist(canon) == []


def test_canonical_shape(canon):
    assert canon.sources == ("c0", "c1", "c2", "c3", "c4", "c5")
    assert canon.outputs == ("x0", "x3", "x5")
    assert canon.detector_ids == ("D1", "D2", "D3")
    cats = canon.sites_by_category()
    assert len(cats["Prep"]) == 6
    assert len(cats["Det"]) == 6          # three detectors plus the three outputs
    assert len(cats["Ops"]) == 25          # 12 waveplates + 13 PBS output arms
    assert sum(isinstance(e, PBS) for e in canon.elements) == 5


def test_output_detection_loss_flag():
    n = canonical_ghz_netlist(output_detection_loss=False)
    assert len(n.sites_by_category()["Det"]) == 3
    assert validate_netlist(n) == []
    assert n.content_hash() != canonical_ghz_netlist().content_hash()


def test_json_round_trip(canon, tmp_path):
    path = tmp_path / "n.json"
    dump_netlist(canon, path)
    back = load_netlist(path)
    assert back == canon
    assert back.content_hash() == canon.content_hash()


def test_shipped_netlist_file_matches_builder(canon):
    from importlib import resources
    text = resources.files("ghzsim").joinpath("data/canonical_netlist.json").read_text()
    assert netlist_from_dict(json.loads(text)).content_hash() == canon.content_hash()


def test_content_hash_sensitive_to_angles(canon):
    els = list(canon.elements)
    i = next(k for k, e in enumerate(els) if isinstance(e, Waveplate))
    els[i] = Waveplate(els[i].channel, els[i].angle + 1e-3)
    assert with_elements(canon, els).content_hash() != canon.content_hash()


@pytest.mark.parametrize("raw", [
    {"channels": ["a"], "elements": [{"type": "mirror", "channel": "a"}], "sources": ["a"], "outputs": []},
    {"channels": ["a"], "elements": [{"type": "wp", "channel": "a"}], "sources": ["a"], "outputs": []},
    {"elements": [], "sources": [], "outputs": []},
])
def test_malformed_netlist_files(raw):
    with pytest.raises(ConfigurationError):
        netlist_from_dict(raw)


# -- validation ------------------------------------------------------------------

def _messages(n):
    return " | ".join(v.message for v in validate_netlist(n))


def test_undeclared_channel(canon):
    els = list(canon.elements) + [Waveplate("nowhere", 0.1)]
    assert "undeclared channel 'nowhere'" in _messages(with_elements(canon, els))


def test_detector_must_be_terminal(canon):
    els = list(canon.elements) + [Waveplate("d1", 0.1)]
    assert "detector not terminal" in _messages(with_elements(canon, els))


def test_duplicate_site_and_detector_ids(canon):
    els = list(canon.elements)
    els.insert(len(els) - 3, LossSite("prep:c0", "d1", "Det"))
    els.append(Detector("D1", "x0"))
    msg = _messages(with_elements(canon, els))
    assert "duplicate loss site id 'prep:c0'" in msg
    assert "duplicate detector id 'D1'" in msg


def test_unknown_loss_category(canon):
    els = list(canon.elements)
    els.insert(0, LossSite("extra", "c0", "Transport"))
    assert "unknown loss category" in _messages(with_elements(canon, els))


def test_element_on_dead_channel(canon):
    els = [Waveplate("x0", 0.1)] + list(canon.elements)
    assert "carries no photons" in _messages(with_elements(canon, els))


def test_shape_requirements(canon):
    n = dataclasses.replace(canon, outputs=("x0", "x3"))
    assert "expected 3 output channels" in _messages(n)
    assert not any("expected" in v.message for v in validate_netlist(n, require_ghz_shape=False))


# -- permanent oracle ----------------------------------------------------------------

@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_ryser_matches_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    assert abs(permanent(a) - brute_permanent(a)) <= 1e-9 * max(1.0, abs(brute_permanent(a)))


def test_permanent_known_values():
    assert permanent(np.ones((4, 4))) == pytest.approx(24)
    assert permanent(np.eye(5)) == pytest.approx(1)
    assert permanent(np.zeros((0, 0))) == 1


def test_hong_ou_mandel_with_permanent():
    # balanced beamsplitter: the coincidence amplitude is the permanent, which vanishes
    b = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    assert abs(permanent(b)) < 1e-15
    # both photons in one output: perm / sqrt(2!) per output
    assert abs(permanent(b[[0, 0]][:, [0, 1]]) / math.sqrt(2)) == pytest.approx(math.sqrt(0.5))


def test_lossless_unitary_is_unitary(canon):
    U = lossless_mode_unitary(canon).matrix
    assert np.allclose(U.conj().T @ U, np.eye(U.shape[0]), atol=1e-12)


def test_stepper_matches_oracle_two_photon_interference(canon):
    U = lossless_mode_unitary(canon)
    inp = make_basis_state([ModeKey("c1", H, 0), ModeKey("c2", V, 0)])
    out = run(canon, inp)
    in_key = next(iter(inp))
    for key, amp in out.items():
        assert abs(amp - oracle_amplitude(U, in_key, key)) <= 1e-12


def test_oracle_distinguishable_sectors_factorize(canon):
    U = lossless_mode_unitary(canon)
    inp = FockBasisState.from_photons([ModeKey("c0", H, 0), ModeKey("c1", H, 1)])
    out = run(canon, make_basis_state(inp.photons()))
    total = sum(abs(oracle_amplitude(U, inp, k)) ** 2 for k in out)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_oracle_zero_for_mismatched_numbers(canon):
    U = lossless_mode_unitary(canon)
    a = FockBasisState.from_photons([ModeKey("c0", H, 0)])
    b = FockBasisState.from_photons([ModeKey("x0", H, 1)])
    assert oracle_amplitude(U, a, b) == 0


@pytest.mark.parametrize("seed", [0, 1])
def test_oracle_equivalence_random_configs(canon, seed):
    rep = oracle_equivalence(canon, n_configs=100, seed=seed)
    assert rep.n_configs >= 100
    assert rep.max_deviation <= 1e-9


# -- stepper -------------------------------------------------------------------------

def test_run_rejects_unknown_loss_site(canon):
    with pytest.raises(ConfigurationError):
        run(canon, make_basis_state([ModeKey("c0", H, 0)]), ["nope"])


def test_run_rejects_photon_outside_sources(canon):
    with pytest.raises(ConfigurationError):
        run(canon, make_basis_state([ModeKey("x0", H, 0)]))


def test_triggered_loss_preserves_norm(canon):
    inp = make_basis_state([ModeKey(c, H, 0) for c in canon.sources[:3]])
    out = run(canon, inp, ["prep:c0", "det:d1"])
    assert out.norm_squared() == pytest.approx(1.0, abs=1e-12)
    lost = [k for k in out if k.channel_count("loss[prep:c0]") == 1]
    assert sum(abs(out.amplitude(k)) ** 2 for k in lost) == pytest.approx(1.0, abs=1e-12)
