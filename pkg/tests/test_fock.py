import cmath
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghzsim.errors import ConfigurationError, InvariantViolation
from ghzsim.fock import (H, MAX_DIST_INDEX, V, FockBasisState, ModeKey, PureState,
                         apply_loss, apply_pbs, apply_polarization_rotation, inner_product,
                         make_basis_state, rotation_amplitudes)

CHANNELS = ("a", "b", "c", "d")


def basis(*photons):
    return make_basis_state([ModeKey(*p) for p in photons])


def key(*photons):
    return FockBasisState.from_photons([ModeKey(*p) for p in photons])


# -- strategies --------------------------------------------------------------

photon = st.tuples(st.sampled_from(CHANNELS[:2]), st.sampled_from((H, V)), st.integers(0, 2))


@st.composite
def states(draw):
    """Random normalized superpositions of up to three basis states with 1-3 photons."""
    n_terms = draw(st.integers(1, 3))
    out = PureState()
    for _ in range(n_terms):
        ph = draw(st.lists(photon, min_size=1, max_size=3))
        re = draw(st.floats(-1, 1))
        im = draw(st.floats(-1, 1))
        out = out + basis(*ph).scaled(complex(re, im))
    norm = out.norm_squared()
    if norm < 1e-6:
        out = basis(*draw(st.lists(photon, min_size=1, max_size=3)))
        norm = 1.0
    return out.scaled(1 / math.sqrt(norm))


# -- basis states --------------------------------------------------------------

def test_basis_state_is_canonical():
    a = key(("a", H, 0), ("b", V, 1), ("a", H, 0))
    b = key(("b", V, 1), ("a", H, 0), ("a", H, 0))
    assert a == b and hash(a) == hash(b)
    assert a.count(ModeKey("a", H, 0)) == 2
    assert a.photon_number == 3


def test_make_basis_state_normalization():
    # (a^dag)^2 |0> / sqrt(2!) has unit amplitude on |2>
    s = basis(("a", H, 0), ("a", H, 0))
    assert s.norm_squared() == pytest.approx(1.0)
    assert s.amplitude(key(("a", H, 0), ("a", H, 0))) == pytest.approx(1.0)


@pytest.mark.parametrize("bad", [ModeKey("a", 2, 0), ModeKey("a", H, MAX_DIST_INDEX + 1),
                                 ModeKey("a", H, -1)])
def test_invalid_modes_rejected(bad):
    with pytest.raises(ConfigurationError):
        FockBasisState([(bad, 1)])


def test_too_many_photons_rejected():
    with pytest.raises(ConfigurationError):
        make_basis_state([ModeKey("a", H, 0)] * 13)


# -- waveplate ---------------------------------------------------------------

def test_rotation_single_photon_convention():
    t = math.pi / 4
    out = apply_polarization_rotation(basis(("a", H, 0)), "a", t)
    assert out.amplitude(key(("a", H, 0))) == pytest.approx(math.cos(t))
    assert out.amplitude(key(("a", V, 0))) == pytest.approx(math.sin(t))
    out = apply_polarization_rotation(basis(("a", V, 0)), "a", t)
    assert out.amplitude(key(("a", H, 0))) == pytest.approx(-math.sin(t))
    assert out.amplitude(key(("a", V, 0))) == pytest.approx(math.cos(t))


def test_rotation_two_photons_45_degrees():
    # |2H> -> (|2H> + sqrt2 |HV> + |2V>) / 2
    out = apply_polarization_rotation(basis(("a", H, 0), ("a", H, 0)), "a", math.pi / 4)
    assert out.amplitude(key(("a", H, 0), ("a", H, 0))) == pytest.approx(0.5)
    assert out.amplitude(key(("a", H, 0), ("a", V, 0))) == pytest.approx(math.sqrt(0.5))
    assert out.amplitude(key(("a", V, 0), ("a", V, 0))) == pytest.approx(0.5)


@pytest.mark.parametrize("n_h,n_v", [(0, 0), (1, 0), (0, 1), (2, 1), (3, 2)])
@pytest.mark.parametrize("angle", [0.0, 0.3, math.pi / 4, 2.0])
def test_rotation_amplitudes_are_normalized(n_h, n_v, angle):
    amps = rotation_amplitudes(n_h, n_v, angle)
    assert sum(a * a for _, a in amps) == pytest.approx(1.0, abs=1e-12)


def test_rotation_leaves_other_channels_and_indices_untouched():
    s = basis(("a", H, 1), ("b", V, 0))
    out = apply_polarization_rotation(s, "b", math.pi / 2)
    assert out.amplitude(key(("a", H, 1), ("b", H, 0))) == pytest.approx(-1.0)


def test_rotation_unknown_channel():
    with pytest.raises(ConfigurationError):
        apply_polarization_rotation(basis(("a", H, 0)), "zz", 0.1, CHANNELS)


@given(states(), st.floats(-7, 7))
@settings(max_examples=60, deadline=None)
def test_rotation_preserves_norm(psi, angle):
    out = apply_polarization_rotation(psi, "a", angle, CHANNELS)
    assert abs(out.norm_squared() - 1.0) <= 1e-12


@given(states(), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=40, deadline=None)
def test_rotations_compose(psi, a, b):
    one = apply_polarization_rotation(apply_polarization_rotation(psi, "a", a), "a", b)
    two = apply_polarization_rotation(psi, "a", a + b)
    assert abs(inner_product(one, two) - 1.0) <= 1e-9


# -- PBS -----------------------------------------------------------------------

@pytest.mark.parametrize("inp,expected", [
    (("a", H, 0), ("c", H, 0)),   # H transmits in1 -> out1
    (("b", H, 0), ("d", H, 0)),   # H transmits in2 -> out2
    (("a", V, 0), ("d", V, 0)),   # V reflects in1 -> out2
    (("b", V, 2), ("c", V, 2)),   # V reflects in2 -> out1
])
def test_pbs_routing(inp, expected):
    out = apply_pbs(basis(inp), "a", "b", "c", "d")
    assert out.amplitude(key(expected)) == pytest.approx(1.0)


def test_pbs_bunching_normalization():
    # |H>_a |V>_b both go to c: one H and one V in c
    out = apply_pbs(basis(("a", H, 0), ("b", V, 0)), "a", "b", "c", "d")
    assert out.amplitude(key(("c", H, 0), ("c", V, 0))) == pytest.approx(1.0)
    # two V in a -> two V in d, amplitude 1
    out = apply_pbs(basis(("a", V, 0), ("a", V, 0)), "a", "b", "c", "d")
    assert out.amplitude(key(("d", V, 0), ("d", V, 0))) == pytest.approx(1.0)


def test_pbs_rejects_degenerate_ports():
    with pytest.raises(ConfigurationError):
        apply_pbs(basis(("a", H, 0)), "a", "a", "c", "d")


@given(states())
@settings(max_examples=60, deadline=None)
def test_pbs_preserves_norm(psi):
    out = apply_pbs(psi, "a", "b", "c", "d", CHANNELS)
    assert abs(out.norm_squared() - 1.0) <= 1e-12


# -- loss ----------------------------------------------------------------------

def test_loss_amplitudes():
    s = basis(("a", H, 0), ("a", H, 0), ("a", V, 1))
    out = apply_loss(s, "a", "L")
    lost_h = key(("a", H, 0), ("a", V, 1), ("L", H, 0))
    lost_v = key(("a", H, 0), ("a", H, 0), ("L", V, 1))
    assert out.amplitude(lost_h) == pytest.approx(math.sqrt(2 / 3))
    assert out.amplitude(lost_v) == pytest.approx(math.sqrt(1 / 3))


def test_loss_on_empty_channel_is_identity():
    s = basis(("b", H, 0))
    out = apply_loss(s, "a", "L")
    assert out.amplitude(key(("b", H, 0))) == pytest.approx(1.0)
    assert len(out) == 1


def test_loss_channel_must_be_fresh():
    s = basis(("a", H, 0), ("L", H, 0))
    with pytest.raises(InvariantViolation):
        apply_loss(s, "a", "L")


@given(states())
@settings(max_examples=60, deadline=None)
def test_loss_preserves_norm(psi):
    out = apply_loss(psi, "a", "L", CHANNELS + ("L",))
    assert abs(out.norm_squared() - 1.0) <= 1e-12


# -- inner product -------------------------------------------------------------

@given(states(), states())
@settings(max_examples=60, deadline=None)
def test_inner_product_hermitian(a, b):
    assert cmath.isclose(inner_product(a, b), inner_product(b, a).conjugate(), abs_tol=1e-12)
    aa = inner_product(a, a)
    assert abs(aa.imag) <= 1e-15 and aa.real >= 0


def test_orthogonal_basis_states():
    assert inner_product(basis(("a", H, 0)), basis(("a", H, 1))) == 0
    assert inner_product(basis(("a", H, 0)), basis(("a", H, 0))) == pytest.approx(1.0)


def test_states_are_immutable_values():
    s = basis(("a", H, 0))
    t = s.scaled(2.0)
    assert s.norm_squared() == pytest.approx(1.0)
    assert t.norm_squared() == pytest.approx(4.0)
    with pytest.raises(TypeError):
        s.amplitudes[key(("a", H, 0))] = 0  # read-only view
