
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghzsim.cache import BranchCache
from ghzsim.engine import branch_point, site_probabilities
from ghzsim.errors import ParameterError
from ghzsim.mixture import (N_J, N_K, MixtureModel, Params, class_probabilities,
                            select_classes)
from ghzsim.sources import EmissionEvent, build_input_state, gram_coefficients


@pytest.fixture(scope="module")
def model():
    return MixtureModel()


@given(st.floats(0, 1), st.floats(0, 0.99))
@settings(max_examples=60, deadline=None)
def test_class_masses_sum_to_one(v, g2):
    q, mass = class_probabilities(v, g2)
    assert q.shape == (N_K, N_J)
    assert abs(mass.sum() - 1.0) <= 1e-12


def test_select_classes_prefix_by_probability():
    q, mass = class_probabilities(0.94, 0.0025)
    inc, covered = select_classes(q, mass, 0.98)
    assert covered >= 0.98
    # every excluded class with positive mass is no more likely than every included one
    assert q[inc].min() >= q[~inc & (mass > 0)].max()
    # dropping the least likely included class falls below the coverage
    assert covered - mass[inc][np.argmin(q[inc])] < 0.98


def test_select_classes_full_coverage_takes_everything():
    q, mass = class_probabilities(0.9, 0.1)
    inc, covered = select_classes(q, mass, 1.0)
    assert covered == pytest.approx(1.0, abs=1e-12)
    assert inc.sum() == np.count_nonzero(mass)


def test_select_classes_vectorized_matches_scalar():
    v = np.array([0.9, 0.99])[:, None]
    g = np.array([0.0, 0.02])[None, :]
    q, mass = class_probabilities(v, g)
    inc, cov = select_classes(q, mass, 0.99)
    for a in range(2):
        for b in range(2):
            q1, m1 = class_probabilities(v[a, 0], g[0, b])
            i1, c1 = select_classes(q1, m1, 0.99)
            assert np.array_equal(i1, inc[a, b]) and c1 == cov[a, b]


@pytest.mark.parametrize("cov", [0.0, 1.5])
def test_select_classes_rejects_bad_coverage(cov):
    q, mass = class_probabilities(0.9, 0.1)
    with pytest.raises(ParameterError):
        select_classes(q, mass, cov)


@pytest.mark.parametrize("kw", [dict(ovl=1.2), dict(g2=1.0), dict(p_ops=-0.1), dict(p_det=float("nan"))])
def test_params_validation(kw):
    base = dict(ovl=0.9, g2=0.01, p_prep=0.1, p_ops=0.01, p_det=0.1)
    base.update(kw)
    with pytest.raises(ParameterError):
        Params(**base)


def test_ideal_point(model):
    r = model.evaluate(Params.ideal(), 1.0)
    assert r.success == pytest.approx(1 / 32, abs=1e-12)
    assert r.fidelity == pytest.approx(1.0, abs=1e-12)
    assert r.success_normalized == pytest.approx(1.0, abs=1e-12)
    assert r.classes == ((0, 0),)


@pytest.mark.parametrize("params", [
    Params(0.99, 0.015, 0.1, 0.015, 0.1),
    Params(0.94, 0.0025, 0.07, 0.015, 0.1),
    Params(0.9, 0.02, 0.15, 0.02, 0.05),
])
def test_table_reuse_equals_direct_recomputation(model, params):
    via_tables = model.evaluate(params, 0.98, max_doubles=1)
    direct = model.evaluate_direct(params, 0.98, max_doubles=1)
    assert via_tables.classes == direct.classes
    assert abs(via_tables.fidelity - direct.fidelity) <= 1e-9
    assert abs(via_tables.success - direct.success) <= 1e-9


@pytest.mark.parametrize("v,losses", [(0.9, (0.0, 0.0, 0.0)), (0.6, (0.1, 0.02, 0.05))])
def test_mixture_equals_coherent_gram_input(model, v, losses):
    """Single photons: the overlap mixture reproduces the coherent Cholesky input exactly."""
    cn = model.compiled
    st_ = build_input_state(EmissionEvent.single(), gram_coefficients(v), model.netlist.sources)
    configs = [k.photons() for k, _ in st_.items()]
    amps = [a for _, a in st_.items()]
    s, num = branch_point(cn, configs, amps, model._sign_map, site_probabilities(cn, losses))
    r = model.evaluate(Params(v, 0.0, *losses), 1.0)
    assert abs(num / s - r.fidelity) <= 1e-9
    assert abs(s - r.success) <= 1e-9


def test_success_does_not_depend_on_overlap_without_doubles(model):
    a = model.evaluate(Params(0.7, 0.0, 0.1, 0.01, 0.1), 1.0)
    b = model.evaluate(Params(0.99, 0.0, 0.1, 0.01, 0.1), 1.0)
    assert a.success == pytest.approx(b.success, rel=1e-12)


def test_grid_matches_points(model):
    ovl, g2 = [0.95, 0.99], [0.0, 0.01]
    losses = np.array([[0.1, 0.015, 0.1], [0.05, 0.01, 0.15]])
    out = model.evaluate_grid(ovl, g2, losses, 0.98, max_doubles=1)
    for a, v in enumerate(ovl):
        for b, g in enumerate(g2):
            for c, lp in enumerate(losses):
                r = model.evaluate(Params(v, g, *lp), 0.98, max_doubles=1)
                assert abs(out["fidelity"][a, b, c] - r.fidelity) <= 1e-12
                assert abs(out["success_normalized"][a, b, c] - r.success_normalized) <= 1e-12


def test_cache_is_transparent(tmp_path):
    params = Params(0.95, 0.01, 0.1, 0.015, 0.1)
    cold = MixtureModel(cache=BranchCache(tmp_path)).evaluate(params, 0.98, max_doubles=1)
    warm_cache = BranchCache(tmp_path)
    warm = MixtureModel(cache=warm_cache).evaluate(params, 0.98, max_doubles=1)
    assert warm_cache.hits > 0 and warm_cache.misses == 0
    assert cold == warm  # bit-identical


def test_cache_key_depends_on_netlist(model):
    from ghzsim.circuit import canonical_ghz_netlist
    other = MixtureModel(canonical_ghz_netlist(output_detection_loss=False))
    assert other.cache_key(0, 0) != model.cache_key(0, 0)
    assert "coincidence" in model.cache_key(1, 2)


def test_worker_processes_give_identical_tables():
    a = MixtureModel(workers=1).class_table(0, 1)
    b = MixtureModel(workers=2).class_table(0, 1)
    assert np.array_equal(a, b)


def test_too_many_doubles_rejected(model):
    with pytest.raises(ParameterError):
        model.class_table(4, 0)
