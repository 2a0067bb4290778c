"""Built-in oracle checks run by ``msrelay validate``."""

from dataclasses import dataclass

import numpy as np

from .linalg import hermitian
from .network import (
    PACKET_LENGTH,
    Allocation,
    ChannelSet,
    Topology,
    compute_cascades,
    compute_normalizers,
    draw_channels,
    equal_allocation,
    propagate_symbols,
    qpsk_source,
    sum_rate,
)
from .optimizer import SolverOptions, alternate, group_forms, normalize_receiver, receiver_step

SCALAR_SR = 0.5 * np.log2(4.0 / 3.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def scalar_network():
    """2-hop chain with unit channels, unit variances and unit budget."""
    topo = Topology((1, 1, 1), (1.0,), 1.0, 1.0)
    one = np.ones((1, 1), dtype=complex)
    return topo, ChannelSet(one, (), one)


def random_network(rng, m_choices=(2, 3), max_size=4, snr_db=None):
    m = int(rng.choice(m_choices))
    sizes = [1] + [int(rng.integers(1, max_size + 1)) for _ in range(m)]
    budgets = rng.uniform(0.5, 4.0, size=m - 1)
    sigma_n2 = 10 ** (-snr_db / 10) if snr_db is not None else float(rng.uniform(0.05, 2.0))
    topo = Topology(sizes, budgets, 1.0, sigma_n2)
    ch = draw_channels(topo, rng)
    a = tuple(rng.standard_normal(n) + 1j * rng.standard_normal(n) for n in sizes[1:-1])
    return topo, ch, Allocation(a)


def output_covariances(topo, ch, alloc, f_list):
    """``E[y_i y_i^H]`` re-derived from a given list of ``F_i``."""
    covs = []
    rx = topo.sigma_s2 * ch.h_s @ hermitian(ch.h_s) + topo.sigma_n2 * np.eye(topo.sizes[1])
    for i in range(1, topo.m):
        if i > 1:
            g = ch.hop(i - 1) * alloc.group(i - 1)[None, :]
            rx = g @ covs[-1] @ hermitian(g) + topo.sigma_n2 * np.eye(topo.sizes[i])
        F = f_list[i - 1]
        covs.append(F @ rx @ hermitian(F))
    return covs


def check_scalar():
    topo, ch = scalar_network()
    cascade = compute_cascades(topo, ch, equal_allocation(topo))
    analytic = sum_rate(topo, cascade, np.ones(1))
    solved = alternate(topo, ch).sum_rate
    err = max(abs(analytic - SCALAR_SR), abs(solved - SCALAR_SR))
    return CheckResult("scalar-closed-form", bool(err <= 1e-9), f"SR analytic={analytic:.6f} solver={solved:.6f} expected={SCALAR_SR:.6f}")


def check_normalization(seed=11, networks=50, fault=None):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(networks):
        topo, ch, alloc = random_network(rng, m_choices=(2, 3, 4), max_size=5)
        f_list, _ = compute_normalizers(topo, ch, alloc)
        if fault == "normalization":
            f_list = [1.01 * f for f in f_list]
        for cov in output_covariances(topo, ch, alloc, f_list):
            worst = max(worst, float(np.abs(cov.diagonal() - 1.0).max()))
    return CheckResult("normalization-analytic", worst <= 1e-10, f"max |diag E[yy^H] - 1| = {worst:.2e}")


def check_normalization_mc(seed=12, n_symbols=100_000):
    rng = np.random.default_rng(seed)
    topo = Topology((1, 4, 4, 2), None, 1.0, 0.1)
    ch = draw_channels(topo, rng)
    alloc = equal_allocation(topo)
    s = qpsk_source(n_symbols, topo.sigma_s2, rng)
    _, ys = propagate_symbols(topo, ch, alloc, s, rng, return_intermediates=True)
    worst = max(float(np.abs(np.mean(np.abs(y) ** 2, axis=1) - 1.0).max()) for y in ys)
    return CheckResult("normalization-monte-carlo", worst <= 0.02, f"max relative deviation {worst:.4f} over {n_symbols} symbols")


def check_cascade_equivalence(seed=13, networks=30):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(networks):
        topo, ch, alloc = random_network(rng, m_choices=(2, 3, 4), max_size=5)
        s = qpsk_source(PACKET_LENGTH, topo.sigma_s2, rng)
        d = propagate_symbols(topo, ch, alloc, s, rng=None)
        ref = compute_cascades(topo, ch, alloc).c_to_end[0] @ s
        worst = max(worst, float(np.abs(d - ref).max() / max(1.0, np.abs(ref).max())))
    return CheckResult("cascade-equivalence", worst <= 1e-10, f"max deviation {worst:.2e}")


def check_group_identities(seed=14, networks=100):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(networks):
        topo, ch, alloc = random_network(rng)
        cascade = compute_cascades(topo, ch, alloc)
        w = receiver_step(cascade)
        for i in range(1, topo.m):
            w_i = normalize_receiver(w, cascade, i)
            forms = group_forms(topo, ch, alloc, cascade, w_i, i)
            a = alloc.group(i)
            sig = np.vdot(w_i, cascade.phi @ w_i).real
            noi = np.vdot(w_i, cascade.z @ w_i).real
            sig_f = np.vdot(a, forms.m_mat @ a).real
            noi_f = np.vdot(a, forms.psi_mat @ a).real + forms.t_scalar
            worst = max(worst, abs(sig_f - sig) / abs(sig), abs(noi_f - noi) / abs(noi))
    return CheckResult("quadratic-form-identities", bool(worst <= 1e-9), f"max relative error {worst:.2e}")


def check_eig_agreement(seed=15, trials=10):
    rng = np.random.default_rng(seed)
    topo = Topology((1, 4, 4, 2)).with_snr_db(10)
    worst = 0.0
    for _ in range(trials):
        ch = draw_channels(topo, rng)
        qr = alternate(topo, ch, SolverOptions("qr")).sum_rate
        pw = alternate(topo, ch, SolverOptions("power")).sum_rate
        worst = max(worst, abs(qr - pw) / abs(qr))
    return CheckResult("qr-vs-power", worst <= 1e-6, f"max relative SR gap {worst:.2e}")


def run_checks(fault=None):
    """Run every oracle; ``fault="normalization"`` perturbs ``F_i`` by 1%."""
    return [
        check_scalar(),
        check_normalization(fault=fault),
        check_normalization_mc(),
        check_cascade_equivalence(),
        check_group_identities(),
        check_eig_agreement(),
    ]
