import numpy as np
import pytest

from msrelay.network import CascadeState, Topology, compute_cascades, draw_channels, equal_allocation, sum_rate
from msrelay.optimizer import (
    GroupForms,
    SolverOptions,
    allocation_step,
    alternate,
    equal_power_baseline,
    group_forms,
    normalize_receiver,
    rank_one_allocation,
    receiver_step,
)
from msrelay.validation import random_network, scalar_network

from conftest import crandn

SCALAR_SR = 0.5 * np.log2(4.0 / 3.0)
DEFAULT = Topology((1, 4, 4, 2))


def pencil_state(phi, z):
    return CascadeState(f=[], b=[], c_to_end=[], phi=np.asarray(phi, complex), z=np.asarray(z, complex))


def quotients(probes, num, den):
    n = np.einsum("ij,jk,ik->i", probes.conj(), num, probes).real
    d = np.einsum("ij,jk,ik->i", probes.conj(), den, probes).real
    return n / d


def same_direction(u, v, tol):
    return abs(abs(np.vdot(u, v)) - np.linalg.norm(u) * np.linalg.norm(v)) <= tol * np.linalg.norm(u) * np.linalg.norm(v)


def test_solver_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(eig_method="lanczos")
    with pytest.raises(ValueError):
        SolverOptions(outer_tol=0)
    with pytest.raises(ValueError):
        SolverOptions(max_outer_iter=0)


# receiver step -------------------------------------------------------------------


@pytest.mark.parametrize("method", ["qr", "power"])
def test_receiver_scalar(method):
    topo, ch = scalar_network()
    cs = compute_cascades(topo, ch, equal_allocation(topo))
    w = receiver_step(cs, SolverOptions(method))
    assert w.shape == (1,) and w[0] == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("method", ["qr", "power"])
def test_receiver_rank_one_identity_noise(rng, method):
    c = crandn(rng, 3)
    w = receiver_step(pencil_state(np.outer(c, c.conj()), np.eye(3)), SolverOptions(method))
    assert same_direction(w, c, 1e-10)


@pytest.mark.parametrize("method", ["qr", "power"])
def test_receiver_maximality(rng, method):
    topo, ch, alloc = random_network(rng, m_choices=(3,))
    cs = compute_cascades(topo, ch, alloc)
    w = receiver_step(cs, SolverOptions(method))
    probes = crandn(rng, 1000, topo.sizes[-1])
    best = quotients(w[None, :], cs.phi, cs.z)[0]
    assert np.all(quotients(probes, cs.phi, cs.z) <= best * (1 + 1e-9))


# normalisation -------------------------------------------------------------------


def test_normalize_receiver_properties(rng):
    topo, ch, alloc = random_network(rng, m_choices=(3,))
    cs = compute_cascades(topo, ch, alloc)
    w = crandn(rng, topo.sizes[-1])
    for i in (1, 2):
        t = sum(c @ c.conj().T for c in cs.c_to_end[i + 1 :])
        w_i = normalize_receiver(w, cs, i)
        assert np.vdot(w_i, t @ w_i).real == pytest.approx(1.0, abs=1e-12)
        ratio = w_i / w
        assert np.allclose(ratio, ratio[0]) and ratio[0].imag == 0 and ratio[0].real > 0
        assert np.allclose(normalize_receiver(w_i, cs, i), w_i, atol=1e-14)


def test_normalize_receiver_zero():
    topo, ch = scalar_network()
    cs = compute_cascades(topo, ch, equal_allocation(topo))
    with pytest.raises(ZeroDivisionError):
        normalize_receiver(np.zeros(1), cs, 1)


# group forms ----------------------------------------------------------------------


def test_group_forms_scalar():
    topo, ch = scalar_network()
    alloc = equal_allocation(topo)
    cs = compute_cascades(topo, ch, alloc)
    w = normalize_receiver(np.ones(1), cs, 1)
    forms = group_forms(topo, ch, alloc, cs, w, 1)
    assert forms.m_mat[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert forms.psi_mat[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert forms.t_scalar == pytest.approx(1.0)
    assert forms.n_mat[0, 0] == pytest.approx(1.5, abs=1e-15)
    assert (alloc.group(1).conj() @ forms.m_mat @ alloc.group(1)).real == pytest.approx(cs.phi[0, 0].real)


def test_group_form_identities_random(rng):
    worst = 0.0
    for _ in range(100):
        topo, ch, alloc = random_network(rng, m_choices=(2, 3), max_size=4)
        cs = compute_cascades(topo, ch, alloc)
        w = crandn(rng, topo.sizes[-1])  # any receiver, not only the optimal one
        for i in range(1, topo.m):
            w_i = normalize_receiver(w, cs, i)
            forms = group_forms(topo, ch, alloc, cs, w_i, i)
            a = alloc.group(i)
            sig = np.vdot(w_i, cs.phi @ w_i).real
            noi = np.vdot(w_i, cs.z @ w_i).real
            worst = max(
                worst,
                abs(np.vdot(a, forms.m_mat @ a).real - sig) / sig,
                abs(np.vdot(a, forms.psi_mat @ a).real + forms.t_scalar - noi) / noi,
            )
            assert forms.t_scalar == pytest.approx(1.0, abs=1e-12)
            for mat in (forms.m_mat, forms.psi_mat, forms.n_mat):
                assert np.allclose(mat, mat.conj().T)
            ev = np.linalg.eigvalsh(forms.m_mat)
            assert ev[0] >= -1e-12 * ev[-1]
            if ev.size > 1:
                assert ev[-2] <= 1e-10 * ev[-1]
            assert np.linalg.eigvalsh(forms.psi_mat)[0] >= -1e-12
            assert np.linalg.eigvalsh(forms.n_mat)[0] > 0
    assert worst <= 1e-9


def test_group_forms_rejects_bad_index(rng):
    topo, ch, alloc = random_network(rng, m_choices=(2,))
    cs = compute_cascades(topo, ch, alloc)
    w = np.ones(topo.sizes[-1])
    with pytest.raises(ValueError):
        group_forms(topo, ch, alloc, cs, w, 0)
    with pytest.raises(ValueError):
        group_forms(topo, ch, alloc, cs, w, topo.m)


def test_constraint_quotient_matches_true_quotient(rng):
    # on the budget sphere the N_i quotient equals the frozen-F sum-rate quotient
    topo = Topology((1, 3, 3, 2), (2.0, 0.5), 1.0, 0.3)
    ch = draw_channels(topo, rng)
    alloc = equal_allocation(topo)
    cs = compute_cascades(topo, ch, alloc)
    w = receiver_step(cs)
    for i in (1, 2):
        w_i = normalize_receiver(w, cs, i)
        forms = group_forms(topo, ch, alloc, cs, w_i, i)
        a = alloc.group(i)
        q_forms = np.vdot(a, forms.m_mat @ a).real / np.vdot(a, forms.n_mat @ a).real
        q_true = np.vdot(w, cs.phi @ w).real / np.vdot(w, cs.z @ w).real
        assert q_forms == pytest.approx(q_true, rel=1e-12)


# allocation step -------------------------------------------------------------------


def _forms_for(rng, topo=DEFAULT):
    topo = topo.with_snr_db(10)
    ch = draw_channels(topo, rng)
    alloc = equal_allocation(topo)
    cs = compute_cascades(topo, ch, alloc)
    w = receiver_step(cs)
    return topo, [group_forms(topo, ch, alloc, cs, normalize_receiver(w, cs, i), i) for i in (1, 2)]


@pytest.mark.parametrize("method", ["qr", "power"])
def test_allocation_identity_noise(rng, method):
    g = crandn(rng, 4)
    forms = GroupForms(np.outer(g, g.conj()), np.zeros((4, 4)), 1.0, np.eye(4))
    a = allocation_step(forms, DEFAULT, 1, SolverOptions(method))
    assert same_direction(a, g, 1e-10)
    assert np.vdot(a, a).real == pytest.approx(DEFAULT.budget(1) / DEFAULT.sizes[2], abs=1e-12)


@pytest.mark.parametrize("method", ["qr", "power"])
def test_allocation_meets_budget_and_maximizes(rng, method):
    for _ in range(5):
        topo, forms_list = _forms_for(rng)
        for i, forms in enumerate(forms_list, start=1):
            a = allocation_step(forms, topo, i, SolverOptions(method))
            target = topo.budget(i) / topo.sizes[i + 1]
            assert np.vdot(a, a).real == pytest.approx(target, abs=1e-12)
            probes = crandn(rng, 1000, a.size)
            probes *= np.sqrt(target) / np.linalg.norm(probes, axis=1, keepdims=True)
            best = quotients(a[None, :], forms.m_mat, forms.n_mat)[0]
            assert np.all(quotients(probes, forms.m_mat, forms.n_mat) <= best * (1 + 1e-9))


def test_rank_one_shortcut_agrees(rng):
    for _ in range(20):
        topo, forms_list = _forms_for(rng)
        for i, forms in enumerate(forms_list, start=1):
            for method in ("qr", "power"):
                a = allocation_step(forms, topo, i, SolverOptions(method))
                b = rank_one_allocation(forms, topo, i)
                # both carry the phase convention, so compare directly
                assert np.abs(a - b).max() <= 1e-8 * np.linalg.norm(b)


def test_rank_one_shortcut_same_sum_rate(rng):
    topo = DEFAULT.with_snr_db(10)
    ch = draw_channels(topo, rng)
    alloc = equal_allocation(topo)
    cs = compute_cascades(topo, ch, alloc)
    w = receiver_step(cs)
    forms = group_forms(topo, ch, alloc, cs, normalize_receiver(w, cs, 1), 1)
    rates = []
    for a in (allocation_step(forms, topo, 1), rank_one_allocation(forms, topo, 1)):
        cs_new = compute_cascades(topo, ch, alloc.replace(1, a))
        rates.append(sum_rate(topo, cs_new, receiver_step(cs_new)))
    assert abs(rates[0] - rates[1]) <= 1e-8


# alternating loop --------------------------------------------------------------------


@pytest.mark.parametrize("method", ["qr", "power"])
def test_alternate_scalar(method):
    topo, ch = scalar_network()
    sol = alternate(topo, ch, SolverOptions(method))
    assert sol.sum_rate == pytest.approx(SCALAR_SR, abs=1e-12)
    assert sol.outer_iterations == 1 and sol.converged
    assert len(sol.trace) == sol.outer_iterations


def test_alternate_invariants(rng):
    for _ in range(10):
        topo, ch, _ = random_network(rng, m_choices=(2, 3, 4), max_size=4)
        sol = alternate(topo, ch)
        for p, budget in zip(sol.alloc.powers(topo), topo.power_budgets):
            assert abs(p - budget) <= 1e-9 * budget
        assert len(sol.trace) == sol.outer_iterations
        assert sol.receiver_violations(1e-10) == 0
        assert all(after >= before - 1e-10 for before, after in sol.receiver_checks)
        cs = compute_cascades(topo, ch, sol.alloc)
        assert sum_rate(topo, cs, sol.w) == pytest.approx(sol.sum_rate, rel=1e-12)
        if sol.converged:
            assert len(sol.trace) < 2 or abs(sol.trace[-1] - sol.trace[-2]) < 1e-8


def test_alternate_records_trace_only_when_asked(rng):
    topo = DEFAULT.with_snr_db(5)
    ch = draw_channels(topo, rng)
    sol = alternate(topo, ch, SolverOptions(record_trace=False, max_outer_iter=3))
    assert sol.trace == [] and sol.outer_iterations <= 3


def test_alternate_iteration_cap(rng):
    topo = DEFAULT.with_snr_db(10)
    ch = draw_channels(topo, rng)
    sol = alternate(topo, ch, SolverOptions(outer_tol=1e-300, max_outer_iter=4))
    assert sol.outer_iterations == 4 and not sol.converged and len(sol.trace) == 4


def test_alternate_deterministic():
    topo = DEFAULT.with_snr_db(10)
    results = []
    for _ in range(2):
        ch = draw_channels(topo, np.random.default_rng(123))
        results.append(alternate(topo, ch))
    a, b = results
    assert a.sum_rate == b.sum_rate and a.trace == b.trace
    assert np.array_equal(a.w, b.w)
    assert all(np.array_equal(x, y) for x, y in zip(a.alloc.a, b.alloc.a))


def test_alternate_beats_baseline_mostly():
    topo = DEFAULT.with_snr_db(10)
    wins = 0
    for seed in range(40):
        ch = draw_channels(topo, np.random.default_rng(seed))
        wins += alternate(topo, ch).sum_rate >= equal_power_baseline(topo, ch).sum_rate - 1e-9
    assert wins >= 38


# baseline --------------------------------------------------------------------------


def test_baseline_frozen_allocation(rng):
    topo = Topology((1, 3, 4, 2), (2.0, 3.0), 1.0, 0.1)
    ch = draw_channels(topo, rng)
    sol = equal_power_baseline(topo, ch)
    init = equal_allocation(topo)
    assert all(np.array_equal(x, y) for x, y in zip(sol.alloc.a, init.a))
    assert np.allclose(sol.alloc.powers(topo), topo.power_budgets, rtol=1e-15)
    assert sol.alloc.a[0][0] == pytest.approx(np.sqrt(2.0 / 12))


def test_baseline_equals_proposed_on_scalar():
    topo, ch = scalar_network()
    assert equal_power_baseline(topo, ch).sum_rate == pytest.approx(alternate(topo, ch).sum_rate, abs=1e-15)


def test_baseline_receiver_is_optimal(rng):
    topo = DEFAULT.with_snr_db(0)
    ch = draw_channels(topo, rng)
    sol = equal_power_baseline(topo, ch)
    cs = compute_cascades(topo, ch, sol.alloc)
    probes = crandn(rng, 500, 2)
    best = quotients(sol.w[None, :], cs.phi, cs.z)[0]
    assert np.all(quotients(probes, cs.phi, cs.z) <= best * (1 + 1e-9))


def test_z_inverse_phi_gain_matches_closed_form(rng):
    # rank-one Phi: the optimal quotient is c^H Z^-1 c
    topo = DEFAULT.with_snr_db(10)
    ch = draw_channels(topo, rng)
    cs = compute_cascades(topo, ch, equal_allocation(topo))
    c = cs.c_to_end[0][:, 0]
    expected = np.vdot(c, np.linalg.solve(cs.z, c)).real
    w = receiver_step(cs)
    assert quotients(w[None, :], cs.phi, cs.z)[0] == pytest.approx(expected, rel=1e-12)
