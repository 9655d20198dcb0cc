"""Windows, truncated operators, models, and functional calculus."""

import math

import numpy as np
import pytest
import scipy.linalg

from conehull import (
    ConeSpec,
    ModelSpec,
    SiteWindow,
    SlabWindow,
    SpectralSpec,
    TruncatedOperator,
    build_model,
    conditional_expectation,
    cone_window,
    diagonal_operator,
    identity_operator,
    position_derivation,
    spectral_function,
    torus_window,
    translation,
    two_band_symbol,
)


def random_operator(window, rng, hermitian=False):
    m = rng.standard_normal((window.dim, window.dim))
    m = m + 1j * rng.standard_normal((window.dim, window.dim))
    if hermitian:
        m = 0.5 * (m + m.conj().T)
    return TruncatedOperator(window, m, hermitian=hermitian)


# ---------------------------------------------------------------------------
# windows


def test_cone_window_five_by_five(axis_spec):
    w = cone_window(axis_spec, SlabWindow(L=4.0, t=2.0, core_margin=0.0))
    assert w.n_sites == 25
    assert w.dim == 25
    assert bool(w.core_mask.all())
    rows = w.sites[:, 1]
    cols = w.sites[:, 0]
    assert rows.min() == 0 and rows.max() == 4
    assert cols.min() == -2 and cols.max() == 2


def test_cone_window_buffer(axis_spec):
    w = cone_window(axis_spec, SlabWindow(L=2.0, t=1.0, core_margin=2.0))
    assert w.n_sites == 35  # slab rows 0..4, columns -3..3
    core = w.sites[w.core_mask]
    assert core[:, 1].max() == 2
    assert np.abs(core[:, 0]).max() == 1
    # the cut at the cone boundary itself needs no buffer
    assert 0 in set(core[:, 1])


def test_torus_window():
    w = torus_window((3, 4), bands=2)
    assert w.n_sites == 12
    assert w.dim == 24
    assert w.torus == (3, 4)
    assert bool(w.core_mask.all())
    with pytest.raises(ValueError, match="positive"):
        torus_window((0, 4))


def test_window_compatibility(axis_spec):
    a = torus_window((3, 3), bands=2)
    b = torus_window((3, 3), bands=2)
    c = torus_window((3, 3), bands=1)
    assert a.compatible(b)
    assert not a.compatible(c)
    with pytest.raises(ValueError, match="different windows"):
        identity_operator(a) @ identity_operator(c)


def test_window_validation(axis_spec):
    with pytest.raises(ValueError, match="bands"):
        torus_window((3, 3), bands=0)
    with pytest.raises(ValueError, match="core_mask"):
        SiteWindow(
            spec=axis_spec,
            sites=np.zeros((2, 2), dtype=np.int64),
            bands=1,
            core_mask=np.ones(3, dtype=bool),
        )


# ---------------------------------------------------------------------------
# translations


def test_translation_zero_is_identity(axis_spec):
    w = cone_window(axis_spec, SlabWindow(L=4.0, t=2.0, core_margin=0.0))
    v0 = translation(w, (0, 0))
    assert v0.hermitian
    assert (v0.matrix != identity_operator(w).matrix).nnz == 0


def test_translation_twenty_nonzeros(axis_spec):
    w = cone_window(axis_spec, SlabWindow(L=4.0, t=2.0, core_margin=0.0))
    v = translation(w, (0, 1))
    assert v.matrix.nnz == 20


def test_translation_partial_isometry(axis_spec):
    w = cone_window(axis_spec, SlabWindow(L=4.0, t=2.0, core_margin=0.0))
    v = translation(w, (0, 1))
    p = (v.adjoint() @ v).dense()
    diag = np.real(np.diag(p))
    assert np.array_equal(np.unique(diag), np.asarray([0.0, 1.0]))
    assert np.abs(p - np.diag(diag)).max() == 0.0


def test_translation_requires_semigroup_member(axis_spec):
    w = cone_window(axis_spec, SlabWindow(L=4.0, t=2.0, core_margin=0.0))
    with pytest.raises(ValueError, match="not in the cone semigroup"):
        translation(w, (0, -1))


def test_translation_torus_unitary_semigroup():
    w = torus_window((4, 5), bands=2)
    va = translation(w, (1, 2))
    vb = translation(w, (2, 4))
    assert ((va.adjoint() @ va).matrix != identity_operator(w).matrix).nnz == 0
    vc = translation(w, (3, 6))  # wraps around both axes
    assert ((va @ vb).matrix != vc.matrix).nnz == 0


def test_translation_semigroup_law_on_interior(axis_spec):
    w = cone_window(axis_spec, SlabWindow(L=6.0, t=4.0, core_margin=0.0))
    la, lb = np.asarray([1, 2]), np.asarray([-1, 1])
    prod = (translation(w, la) @ translation(w, lb)).dense()
    whole = translation(w, la + lb).dense()
    # rows whose intermediate site n + la lies inside the window
    mid_rows, _ = w.translate_indices(la)
    assert np.array_equal(prod[mid_rows], whole[mid_rows])
    # elsewhere the product vanishes while the one-step shift may not
    others = np.setdiff1d(np.arange(w.dim), mid_rows)
    assert np.abs(prod[others]).max() == 0.0


# ---------------------------------------------------------------------------
# derivations


def test_derivation_kills_diagonals(rng):
    w = torus_window((4, 4), bands=2)
    a = diagonal_operator(w, rng.standard_normal(w.n_sites))
    d = position_derivation(a, (1.3, -0.4))
    assert d.norm_max_entry() == 0.0


def test_derivation_scales_translations():
    w = torus_window((6, 6), bands=1)
    v = translation(w, (0, 1))
    d = position_derivation(v, (3.0, -2.0))
    # i (w . (n - m)) with n - m = -l, minimal image on the torus
    assert np.array_equal(np.unique(d.matrix.data), np.asarray([2.0j]))
    assert (d.matrix != 2.0j * v.matrix).nnz == 0


def test_derivation_direction_scaling(rng):
    w = torus_window((5, 5), bands=2)
    a = random_operator(w, rng)
    lhs = position_derivation(a, (7.5, -5.0))
    rhs = 2.5 * position_derivation(a, (3.0, -2.0))
    assert np.abs(lhs.dense() - rhs.dense()).max() <= 1e-13

    v = translation(w, (0, 1))
    exact = position_derivation(v, (7.5, -5.0))
    scaled = 2.5 * position_derivation(v, (3.0, -2.0))
    assert np.abs((exact.matrix - scaled.matrix).toarray()).max() == 0.0


def test_derivation_additive(rng):
    w = torus_window((4, 4), bands=1)
    a = random_operator(w, rng)
    b = random_operator(w, rng)
    lhs = position_derivation(a + b, (1.0, 2.0))
    rhs = position_derivation(a, (1.0, 2.0)) + position_derivation(b, (1.0, 2.0))
    assert np.abs(lhs.dense() - rhs.dense()).max() <= 1e-13


def test_derivation_leibniz(axis_spec, rng):
    w = cone_window(axis_spec, SlabWindow(L=5.0, t=3.0, core_margin=0.0))
    a = random_operator(w, rng)
    b = random_operator(w, rng)
    dw = (0.6, 1.1)
    lhs = position_derivation(a @ b, dw).dense()
    rhs = (position_derivation(a, dw) @ b + a @ position_derivation(b, dw)).dense()
    scale = max(np.abs(lhs).max(), 1.0)
    assert np.abs(lhs - rhs).max() / scale <= 1e-12


def test_derivation_direction_shape(rng):
    w = torus_window((3, 3), bands=1)
    a = random_operator(w, rng)
    with pytest.raises(ValueError, match="shape"):
        position_derivation(a, (1.0, 2.0, 3.0))


# ---------------------------------------------------------------------------
# conditional expectation


def test_expectation_fixes_diagonals(rng):
    w = torus_window((4, 4), bands=2)
    a = diagonal_operator(w, rng.standard_normal(w.dim))
    e = conditional_expectation(a)
    assert ((e.matrix - a.matrix) != 0).nnz == 0


def test_expectation_kills_translations():
    w = torus_window((4, 4), bands=2)
    v = translation(w, (0, 1))
    assert conditional_expectation(v).norm_max_entry() == 0.0


def test_expectation_keeps_band_blocks(rng):
    w = torus_window((3, 3), bands=2)
    a = random_operator(w, rng)
    e = conditional_expectation(a).dense()
    ad = a.dense()
    for s in range(w.n_sites):
        sl = slice(2 * s, 2 * s + 2)
        assert np.array_equal(e[sl, sl], ad[sl, sl])
    mask = np.kron(np.eye(w.n_sites, dtype=bool), np.ones((2, 2), dtype=bool))
    assert np.abs(e[~mask]).max() == 0.0


def test_expectation_idempotent_adjoint_unital(rng):
    w = torus_window((4, 4), bands=2)
    a = random_operator(w, rng)
    e = conditional_expectation(a)
    ee = conditional_expectation(e)
    assert np.abs(ee.dense() - e.dense()).max() == 0.0
    lhs = conditional_expectation(a).adjoint().dense()
    rhs = conditional_expectation(a.adjoint()).dense()
    assert np.array_equal(lhs, rhs)
    one = identity_operator(w)
    assert ((conditional_expectation(one).matrix != one.matrix).nnz) == 0


def test_expectation_contractive_and_positive(rng):
    w = torus_window((4, 4), bands=2)
    for _ in range(5):
        a = random_operator(w, rng)
        na = scipy.linalg.norm(a.dense(), 2)
        ne = scipy.linalg.norm(conditional_expectation(a).dense(), 2)
        assert ne <= na + 1e-10
    b = random_operator(w, rng)
    pos = b.adjoint() @ b
    evals = np.linalg.eigvalsh(conditional_expectation(pos).dense())
    assert evals.min() >= -1e-10


# ---------------------------------------------------------------------------
# operator container


def test_operator_shape_and_hermitian_validation(rng):
    w = torus_window((3, 3), bands=1)
    with pytest.raises(ValueError, match="does not match window"):
        TruncatedOperator(w, np.zeros((4, 4)))
    m = rng.standard_normal((w.dim, w.dim))
    with pytest.raises(ValueError, match="hermitian flag"):
        TruncatedOperator(w, m + np.triu(np.ones_like(m)), hermitian=True)


def test_operator_triplet_export():
    w = torus_window((2, 2), bands=1)
    v = translation(w, (1, 0))
    trip = v.to_triplets()
    assert trip.shape == (4, 4)
    rows = trip[:, 0]
    assert np.array_equal(rows, np.sort(rows))
    rebuilt = np.zeros((w.dim, w.dim), dtype=np.complex128)
    rebuilt[trip[:, 0].astype(int), trip[:, 1].astype(int)] = trip[:, 2] + 1j * trip[:, 3]
    assert np.array_equal(rebuilt, v.dense())


def test_scalar_product_rejects_operator(rng):
    w = torus_window((2, 2), bands=1)
    a = random_operator(w, rng)
    with pytest.raises(TypeError, match="@"):
        a * a


# ---------------------------------------------------------------------------
# the shipped model


def test_model_hermitian_and_gapped():
    w = torus_window((16, 16), bands=2)
    h = build_model(w, ModelSpec("two_band_chern", {"m": 4.0}))
    assert h.hermitian
    assert h._adjoint_deviation() <= 1e-14
    evals = np.linalg.eigvalsh(h.dense())
    gap = evals[evals > 0].min() - evals[evals <= 0].max()
    assert gap >= 1.0


def test_model_matches_momentum_symbol():
    S = 8
    w = torus_window((S, S), bands=2)
    h = build_model(w, ModelSpec("two_band_chern", {"m": 1.0})).dense()
    for k1 in range(S):
        for k2 in range(S):
            k = (2 * math.pi * k1 / S, 2 * math.pi * k2 / S)
            wave = np.exp(1j * (w.sites @ np.asarray(k)))
            for band in range(2):
                phi = np.zeros(2, dtype=np.complex128)
                phi[band] = 1.0
                psi = (wave[:, None] * phi[None, :]).ravel()
                got = h @ psi
                want = (wave[:, None] * (two_band_symbol(1.0, k) @ phi)[None, :]).ravel()
                assert np.abs(got - want).max() <= 1e-12


def test_model_validation():
    w = torus_window((4, 4), bands=2)
    with pytest.raises(ValueError, match="unknown model"):
        build_model(w, ModelSpec("three_band_mystery"))
    w1 = torus_window((4, 4), bands=1)
    with pytest.raises(ValueError, match="2 bands"):
        build_model(w1, ModelSpec("two_band_chern", {"m": 1.0}))


def test_model_spec_round_trip():
    m = ModelSpec.from_dict({"name": "two_band_chern", "m": 2.5})
    assert m.params == {"m": 2.5}
    assert m.to_dict() == {"name": "two_band_chern", "m": 2.5}
    with pytest.raises(ValueError, match="name"):
        ModelSpec.from_dict({"m": 1.0})


# ---------------------------------------------------------------------------
# spectral functions


def test_fermi_projection_single_site():
    w = torus_window((1, 1), bands=2)
    h = TruncatedOperator(w, np.diag([1.0, -1.0]).astype(complex), hermitian=True)
    p = spectral_function(h, SpectralSpec(kind="fermi_step", fermi=0.0))
    assert np.abs(p.dense() - np.diag([0.0, 1.0])).max() <= 1e-14


def test_fermi_projection_property(rng):
    w = torus_window((4, 4), bands=2)
    a = random_operator(w, rng, hermitian=True)
    p = spectral_function(a, SpectralSpec(kind="fermi_step", fermi=0.1)).dense()
    assert np.abs(p @ p - p).max() <= 1e-10
    assert np.abs(p - p.conj().T).max() <= 1e-14


def test_exp_edge_identity_inside_gap():
    w = torus_window((8, 8), bands=2)
    h = build_model(w, ModelSpec("two_band_chern", {"m": 4.0}))
    u = spectral_function(h, SpectralSpec(kind="exp_edge", fermi=0.0, delta=0.5))
    assert np.abs(u.dense() - np.eye(w.dim)).max() <= 1e-10


def test_exp_edge_unitary_on_half_plane(axis_spec):
    w = cone_window(axis_spec, SlabWindow(L=12.0, t=12.0, core_margin=0.0), bands=2)
    h = build_model(w, ModelSpec("two_band_chern", {"m": 1.0}))
    u = spectral_function(h, SpectralSpec(kind="exp_edge", fermi=0.0, delta=1.8))
    dev = np.abs((u.adjoint() @ u).dense() - np.eye(w.dim)).max()
    assert dev <= 1e-10


def test_spectral_function_requires_hermitian(rng):
    w = torus_window((3, 3), bands=1)
    a = random_operator(w, rng)
    with pytest.raises(ValueError, match="hermitian"):
        spectral_function(a, SpectralSpec(kind="fermi_step"))


def test_spectral_spec_validation():
    with pytest.raises(ValueError, match="unknown spectral function"):
        SpectralSpec(kind="bump")
    with pytest.raises(ValueError, match="delta"):
        SpectralSpec(kind="exp_edge", fermi=0.0)


def test_chebyshev_matches_dense():
    w = torus_window((5, 5), bands=2)
    a = random_operator(w, np.random.default_rng(7), hermitian=True)
    ev = np.linalg.eigvalsh(a.dense())
    iv = (ev[0] - 0.1, ev[-1] + 0.1)
    for profile in ("smoothstep", "tanh"):
        g = SpectralSpec(kind="smooth_switch", fermi=0.0, delta=1.0, profile=profile)
        dense = spectral_function(a, g, method="dense").dense()
        default = spectral_function(a, g, method="chebyshev", interval=iv).dense()
        # the default degree targets order-of-magnitude accuracy only; the
        # smoothstep profile is C^1, so its coefficients decay algebraically
        assert np.abs(dense - default).max() <= 1e-3
    g = SpectralSpec(kind="smooth_switch", fermi=0.0, delta=1.0, profile="tanh")
    dense = spectral_function(a, g, method="dense").dense()
    sharp = spectral_function(a, g, method="chebyshev", interval=iv, degree=3000).dense()
    assert np.abs(dense - sharp).max() <= 1e-8


def test_chebyshev_guard_rails(rng):
    w = torus_window((4, 4), bands=1)
    a = random_operator(w, rng, hermitian=True)
    g = SpectralSpec(kind="smooth_switch", fermi=0.0, delta=1.0)
    with pytest.raises(ValueError, match="enclosing spectral interval"):
        spectral_function(a, g, method="chebyshev")
    with pytest.raises(ValueError, match="violated"):
        spectral_function(a, g, method="chebyshev", interval=(-0.1, 0.1))
    with pytest.raises(ValueError, match="dense route"):
        spectral_function(
            a,
            SpectralSpec(kind="exp_edge", fermi=0.0, delta=0.5),
            method="chebyshev",
        )


def test_edge_unitary_decay_envelope(axis_spec, capsys):
    """Record how fast u - 1 decays away from every window cut.

    The threshold is measured, not assumed: the loose gate below only
    pins the order of magnitude that later pairing runs rely on.
    """
    w = cone_window(axis_spec, SlabWindow(L=26.0, t=16.0, core_margin=0.0), bands=2)
    h = build_model(w, ModelSpec("two_band_chern", {"m": 1.0}))
    u = spectral_function(h, SpectralSpec(kind="exp_edge", fermi=0.0, delta=1.8))
    um1 = u.dense() - np.eye(w.dim)

    rows = w.sites[:, 1]
    cols = w.sites[:, 0]
    profile = {}
    for rho in (4, 8, 12):
        interior = (rows >= rho) & (rows <= 26 - rho) & (np.abs(cols) <= 16 - rho)
        dof = np.repeat(interior, 2)
        block = um1[np.ix_(dof, dof)]
        profile[rho] = float(np.abs(block).max())
    print("edge unitary interior decay:", profile)
    assert profile[12] < profile[4]
    assert profile[12] <= 1e-3
