"""Joint max-sum-rate receiver and relay power allocation.

Each outer iteration first sets the receiver ``w`` to the dominant
eigenvector of ``inv(Z) Phi``.  Then, group by group, the sum-rate quotient
is rewritten as a quotient in ``a_i`` alone,

    (a_i^H M_i a_i) / (a_i^H N_i a_i),

whose dominant eigenvector (rescaled onto the group budget) becomes the new
``a_i``.  Normalisers and cascades are rebuilt after every group update so
later groups see the new allocation.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import fix_phase, generalized_dominant, hermitian, solve_hermitian_pd
from .network import compute_cascades, equal_allocation, sum_rate

__all__ = [
    "SolverOptions",
    "MsrSolution",
    "GroupForms",
    "receiver_step",
    "normalize_receiver",
    "group_forms",
    "allocation_step",
    "rank_one_allocation",
    "alternate",
    "equal_power_baseline",
]


@dataclass(frozen=True)
class SolverOptions:
    eig_method: str = "qr"
    outer_tol: float = 1e-8
    max_outer_iter: int = 50
    record_trace: bool = True

    def __post_init__(self):
        if self.eig_method not in ("qr", "power"):
            raise ValueError(f"eig_method must be 'qr' or 'power', got {self.eig_method!r}")
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        if int(self.max_outer_iter) < 1:
            raise ValueError("max_outer_iter must be >= 1")


@dataclass
class MsrSolution:
    """Result of one solve.

    ``receiver_checks`` holds ``(before, after)`` sum-rate pairs around each
    receiver update that had a previous receiver to compare against.
    """

    w: np.ndarray
    alloc: object
    sum_rate: float
    outer_iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    receiver_checks: list = field(default_factory=list)

    def receiver_violations(self, tol=1e-10):
        return sum(1 for before, after in self.receiver_checks if after < before - tol)


@dataclass
class GroupForms:
    """Quadratic forms of the sum-rate quotient in terms of ``a_i``.

    ``m_mat`` is the signal form, ``psi_mat`` the form collecting noise
    injected up to and including group ``i``, ``t_scalar`` the remaining
    noise ``w_i^H T_i w_i`` and ``n_mat = psi_mat + (N_{i+1}/P_Ti) t I``.
    """

    m_mat: np.ndarray
    psi_mat: np.ndarray
    t_scalar: float
    n_mat: np.ndarray


def receiver_step(cascade, opts=None):
    """Unit-norm dominant eigenvector of ``inv(Z) Phi``."""
    opts = opts or SolverOptions()
    return generalized_dominant(cascade.phi, cascade.z, method=opts.eig_method).vector


def _tail_noise(cascade, i):
    # T_i = sum_{k=i+1}^{m} C_{k,m-1} C_{k,m-1}^H
    return sum(c @ hermitian(c) for c in cascade.c_to_end[i + 1 :])


def normalize_receiver(w, cascade, i):
    """Scale ``w`` so that ``w^H T_i w = 1``."""
    w = np.asarray(w, dtype=complex)
    t = np.vdot(w, _tail_noise(cascade, i) @ w).real
    if not t > 0:
        raise ZeroDivisionError(f"w^H T_{i} w = {t:.3e} is not positive")
    return w / np.sqrt(t)


def group_forms(topo, ch, alloc, cascade, w, i):
    """Quadratic forms ``M_i``, ``Psi_i``, ``t_i`` and ``N_i`` for group ``i``.

    ``w`` should already be normalised for group ``i``.  At the allocation
    the cascade was built from,

        a_i^H M_i a_i              == w^H Phi w
        a_i^H Psi_i a_i + t_i      == w^H Z w
    """
    m = topo.m
    if not 1 <= i <= m - 1:
        raise ValueError(f"group index {i} outside 1..{m - 1}")
    w = np.asarray(w, dtype=complex)
    if w.shape != (topo.sizes[m],):
        raise ValueError(f"receiver has shape {w.shape}, expected ({topo.sizes[m]},)")
    # r = w^H C_{i+1,m-1} H_{i,i+1};  G = diag(r) F_i
    r = np.conj(w) @ cascade.c_to_end[i + 1] @ ch.hop(i)
    g = r * cascade.f[i - 1].diagonal()
    sig = cascade.c(0, i - 1)
    noise = sum(cascade.c(k, i - 1) @ hermitian(cascade.c(k, i - 1)) for k in range(1, i + 1))
    m_mat = np.conj(g[:, None] * (sig @ hermitian(sig)) * np.conj(g)[None, :])
    psi_mat = np.conj(g[:, None] * noise * np.conj(g)[None, :])
    m_mat = 0.5 * (m_mat + hermitian(m_mat))
    psi_mat = 0.5 * (psi_mat + hermitian(psi_mat))
    t = float(np.vdot(w, _tail_noise(cascade, i) @ w).real)
    n_mat = psi_mat + (topo.sizes[i + 1] / topo.budget(i)) * t * np.eye(topo.sizes[i])
    return GroupForms(m_mat, psi_mat, t, n_mat)


def _rescale(a, topo, i):
    target = topo.budget(i) / topo.sizes[i + 1]
    return fix_phase(a * np.sqrt(target / np.vdot(a, a).real))


def allocation_step(forms, topo, i, opts=None):
    """Dominant eigenvector of ``inv(N_i) M_i`` scaled to ``N_{i+1} a^H a = P_Ti``."""
    opts = opts or SolverOptions()
    res = generalized_dominant(forms.m_mat, forms.n_mat, method=opts.eig_method)
    return _rescale(res.vector, topo, i)


def rank_one_allocation(forms, topo, i):
    """Closed-form allocation ``inv(N_i) g`` for ``M_i = g g^H``."""
    diag = forms.m_mat.diagonal().real
    k = int(np.argmax(diag))
    if diag[k] <= 0:
        raise ValueError("signal form is zero; allocation direction undefined")
    g = forms.m_mat[:, k] / np.sqrt(diag[k])
    return _rescale(solve_hermitian_pd(forms.n_mat, g), topo, i)


def alternate(topo, ch, opts=None, init=None):
    """Alternating maximisation of the sum rate.

    Starts from the equal-power allocation unless ``init`` is given.  The
    recorded sum rate of an iteration uses the receiver that is optimal for
    the allocation at the end of that iteration.  Iteration stops once that
    value moves by less than ``opts.outer_tol`` from the previous one (the
    starting allocation counts as iteration zero).
    """
    opts = opts or SolverOptions()
    alloc = init if init is not None else equal_allocation(topo)
    cascade = compute_cascades(topo, ch, alloc)
    w = receiver_step(cascade, opts)
    trace, checks = [], []
    prev_sr = sum_rate(topo, cascade, w)
    converged = False
    it = 0
    for it in range(1, int(opts.max_outer_iter) + 1):
        for i in range(1, topo.m):
            w_i = normalize_receiver(w, cascade, i)
            forms = group_forms(topo, ch, alloc, cascade, w_i, i)
            alloc = alloc.replace(i, allocation_step(forms, topo, i, opts))
            cascade = compute_cascades(topo, ch, alloc)
        w_new = receiver_step(cascade, opts)
        before = sum_rate(topo, cascade, w)
        sr = sum_rate(topo, cascade, w_new)
        checks.append((before, sr))
        w = w_new
        trace.append(sr)
        if abs(sr - prev_sr) < opts.outer_tol:
            converged = True
            break
        prev_sr = sr
    if not opts.record_trace:
        trace = []
    return MsrSolution(w, alloc, sr, it, converged, trace, checks)


def equal_power_baseline(topo, ch, opts=None):
    """Equal-power allocation with the optimal receiver for it."""
    opts = opts or SolverOptions()
    alloc = equal_allocation(topo)
    cascade = compute_cascades(topo, ch, alloc)
    w = receiver_step(cascade, opts)
    sr = sum_rate(topo, cascade, w)
    return MsrSolution(w, alloc, sr, 1, True, [sr] if opts.record_trace else [])
