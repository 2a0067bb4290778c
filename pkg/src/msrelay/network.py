"""Multihop amplify-and-forward network model.

An m-hop network has one source group (size ``N_0``), ``m-1`` relay groups
(sizes ``N_1..N_{m-1}``) and one destination group (size ``N_m``).  With
``y_i = F_i x_i`` the normalised relay input and ``A_i = diag(a_i)`` the
relay gains, the received vector is

    d = C_{0,m-1} s + sum_{i=1}^{m-1} C_{i,m-1} v_i + v_d

where ``B_0 = H_s``, ``B_i = H_{i,i+1} A_i F_i`` and ``C_{i,m-1}`` is the
product ``B_{m-1} ... B_i`` (identity for ``i = m``).
"""

from dataclasses import dataclass, field
import hashlib

import numpy as np

from .linalg import hermitian, rayleigh_quotient

__all__ = [
    "Topology",
    "ChannelSet",
    "Allocation",
    "CascadeState",
    "draw_channels",
    "equal_allocation",
    "compute_normalizers",
    "compute_cascades",
    "sum_rate",
    "propagate_symbols",
    "qpsk_source",
    "PACKET_LENGTH",
]

PACKET_LENGTH = 1500


@dataclass(frozen=True)
class Topology:
    """Group sizes, per-group power budgets and signal/noise variances.

    ``sizes`` is ``[N_0, ..., N_m]``; ``power_budgets`` is
    ``[P_T1, ..., P_T(m-1)]``.  When omitted the budgets default to 1.
    """

    sizes: tuple
    power_budgets: tuple = None
    sigma_s2: float = 1.0
    sigma_n2: float = 1.0

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 3:
            raise ValueError(f"need at least one relay group, got sizes {list(sizes)}")
        if any(n < 1 for n in sizes):
            raise ValueError(f"all group sizes must be >= 1, got {list(sizes)}")
        if sizes[0] != 1:
            raise ValueError(f"exactly one source node is supported, got N_0={sizes[0]}")
        budgets = self.power_budgets
        if budgets is None:
            budgets = (1.0,) * (len(sizes) - 2)
        budgets = tuple(float(p) for p in budgets)
        if len(budgets) != len(sizes) - 2:
            raise ValueError(f"expected {len(sizes) - 2} power budgets, got {len(budgets)}")
        if not all(np.isfinite(p) and p > 0 for p in budgets):
            raise ValueError(f"power budgets must be positive, got {list(budgets)}")
        object.__setattr__(self, "power_budgets", budgets)
        for name in ("sigma_s2", "sigma_n2"):
            val = float(getattr(self, name))
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val}")
            object.__setattr__(self, name, val)

    @property
    def m(self):
        """Hop count."""
        return len(self.sizes) - 1

    def budget(self, i):
        return self.power_budgets[i - 1]

    def with_snr_db(self, snr_db):
        """Same topology with ``sigma_s2 = 1`` and ``sigma_n2 = 10**(-snr/10)``."""
        return Topology(self.sizes, self.power_budgets, 1.0, 10.0 ** (-float(snr_db) / 10.0))


@dataclass(frozen=True)
class ChannelSet:
    """One block-fading realisation of every hop.

    ``h_mid[k]`` is ``H_{k+1,k+2}`` (relay group ``k+1`` to ``k+2``).
    """

    h_s: np.ndarray
    h_mid: tuple
    h_d: np.ndarray

    def hop(self, i):
        """Channel leaving relay group ``i`` (``H_{i,i+1}``, or ``H_d`` for the last)."""
        if i == len(self.h_mid) + 1:
            return self.h_d
        return self.h_mid[i - 1]

    def checksum(self):
        h = hashlib.sha256()
        for mat in (self.h_s, *self.h_mid, self.h_d):
            h.update(np.ascontiguousarray(mat, dtype=complex).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class Allocation:
    """Relay amplification vectors ``a_1 .. a_{m-1}``."""

    a: tuple

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(np.asarray(v, dtype=complex) for v in self.a))

    def group(self, i):
        return self.a[i - 1]

    def replace(self, i, a_i):
        a = list(self.a)
        a[i - 1] = np.asarray(a_i, dtype=complex)
        return Allocation(tuple(a))

    def powers(self, topo):
        """``N_{i+1} * a_i^H a_i`` for each group."""
        return [topo.sizes[i + 1] * np.vdot(a, a).real for i, a in enumerate(self.a, start=1)]


@dataclass
class CascadeState:
    """Matrices derived from a channel set and an allocation.

    ``c_to_end[i]`` is ``C_{i,m-1}`` for ``i = 0..m``.  ``f[i-1]`` is
    ``F_i`` and ``y_cov[i-1]`` is ``E[y_i y_i^H]``.
    """

    f: list
    b: list
    c_to_end: list
    phi: np.ndarray
    z: np.ndarray
    y_cov: list = field(default_factory=list)

    def c(self, i, j):
        """``C_{i,j} = B_j ... B_i`` (identity when ``i > j``)."""
        if i > j:
            n = self.b[i].shape[1] if i < len(self.b) else self.b[-1].shape[0]
            return np.eye(n, dtype=complex)
        out = self.b[i]
        for k in range(i + 1, j + 1):
            out = self.b[k] @ out
        return out


def draw_channels(topo, rng):
    """Draw i.i.d. CN(0, 1) entries for every hop."""

    def cn(rows, cols):
        re = rng.standard_normal((rows, cols))
        im = rng.standard_normal((rows, cols))
        return (re + 1j * im) * np.sqrt(0.5)

    n = topo.sizes
    m = topo.m
    h_s = cn(n[1], n[0])
    h_mid = tuple(cn(n[i], n[i - 1]) for i in range(2, m))
    h_d = cn(n[m], n[m - 1])
    return ChannelSet(h_s, h_mid, h_d)


def equal_allocation(topo):
    """``A_i = sqrt(P_Ti / (N_i N_{i+1})) I``, which meets each budget exactly."""
    n = topo.sizes
    return Allocation(
        tuple(
            np.full(n[i], np.sqrt(topo.budget(i) / (n[i] * n[i + 1])), dtype=complex)
            for i in range(1, topo.m)
        )
    )


def _check_alloc(topo, alloc):
    if len(alloc.a) != topo.m - 1:
        raise ValueError(f"allocation has {len(alloc.a)} groups, topology needs {topo.m - 1}")
    for i, a in enumerate(alloc.a, start=1):
        if a.shape != (topo.sizes[i],):
            raise ValueError(f"a_{i} has shape {a.shape}, expected ({topo.sizes[i]},)")


def compute_normalizers(topo, ch, alloc):
    """Forward recursion for ``F_i`` and ``E[y_i y_i^H]``, ``i = 1..m-1``."""
    _check_alloc(topo, alloc)
    f_list, y_cov = [], []
    rx = topo.sigma_s2 * (ch.h_s @ hermitian(ch.h_s))
    for i in range(1, topo.m):
        if i > 1:
            h = ch.hop(i - 1)
            a = alloc.group(i - 1)
            g = h * a[np.newaxis, :]
            rx = g @ y_cov[-1] @ hermitian(g)
        rx = rx + topo.sigma_n2 * np.eye(rx.shape[0])
        power = rx.diagonal().real
        assert np.all(power > 0), "received power must be positive"
        f_diag = 1.0 / np.sqrt(power)
        F = np.diag(f_diag).astype(complex)
        f_list.append(F)
        y_cov.append(f_diag[:, np.newaxis] * rx * f_diag[np.newaxis, :])
    return f_list, y_cov


def compute_cascades(topo, ch, alloc):
    """Build ``F_i``, ``B_k``, ``C_{i,m-1}``, ``Phi`` and ``Z``."""
    f_list, y_cov = compute_normalizers(topo, ch, alloc)
    m = topo.m
    b = [np.asarray(ch.h_s, dtype=complex)]
    for i in range(1, m):
        f_diag = f_list[i - 1].diagonal()
        b.append(ch.hop(i) * (alloc.group(i) * f_diag)[np.newaxis, :])
    n_dest = topo.sizes[m]
    c_to_end = [None] * (m + 1)
    c_to_end[m] = np.eye(n_dest, dtype=complex)
    for i in range(m - 1, -1, -1):
        c_to_end[i] = c_to_end[i + 1] @ b[i]
    c0 = c_to_end[0]
    phi = c0 @ hermitian(c0)
    z = sum(c @ hermitian(c) for c in c_to_end[1:])
    phi = 0.5 * (phi + hermitian(phi))
    z = 0.5 * (z + hermitian(z))
    return CascadeState(f_list, b, c_to_end, phi, z, y_cov)


def sum_rate(topo, cascade, w):
    """End-to-end rate ``(1/m) log2(1 + (sigma_s2/sigma_n2) * quotient)`` in bit/s/Hz."""
    w = np.asarray(w, dtype=complex)
    if not np.any(w):
        raise ValueError("receiver vector must be non-zero")
    q = rayleigh_quotient(w, cascade.phi, cascade.z)
    return float(np.log2(1.0 + topo.sigma_s2 / topo.sigma_n2 * max(q, 0.0)) / topo.m)


def propagate_symbols(topo, ch, alloc, s, rng=None, return_intermediates=False):
    """Push source symbols through every phase of the relay chain.

    ``s`` has shape ``(N_0,)`` or ``(N_0, n_symbols)``.  Each phase adds
    fresh CN(0, sigma_n2) noise drawn from ``rng``; ``rng=None`` disables
    noise.  ``F_i`` comes from the analytic recursion.  With
    ``return_intermediates`` the relay outputs ``y_1..y_{m-1}`` are
    returned as well.
    """
    f_list, _ = compute_normalizers(topo, ch, alloc)
    s = np.asarray(s, dtype=complex)
    vector_in = s.ndim == 1
    if vector_in:
        s = s[:, np.newaxis]
    if s.shape[0] != topo.sizes[0]:
        raise ValueError(f"source block has {s.shape[0]} rows, expected {topo.sizes[0]}")

    def noise(rows):
        if rng is None:
            return 0.0
        shape = (rows, s.shape[1])
        return np.sqrt(topo.sigma_n2 / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    ys = []
    x = ch.h_s @ s + noise(topo.sizes[1])
    for i in range(1, topo.m):
        y = f_list[i - 1].diagonal()[:, np.newaxis] * x
        ys.append(y)
        x = ch.hop(i) @ (alloc.group(i)[:, np.newaxis] * y) + noise(topo.sizes[i + 1])
    d = x
    if vector_in:
        d = d[:, 0]
        ys = [y[:, 0] for y in ys]
    if return_intermediates:
        return d, ys
    return d


def qpsk_source(n_symbols=PACKET_LENGTH, sigma_s2=1.0, rng=None, n_sources=1):
    """Uniform QPSK symbols with ``E|s|^2 = sigma_s2``, shape ``(n_sources, n_symbols)``."""
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    bits = rng.integers(0, 2, size=(2, n_sources, n_symbols))
    amp = np.sqrt(sigma_s2 / 2)
    return amp * ((1 - 2 * bits[0]) + 1j * (1 - 2 * bits[1]))
