"""Hot numeric kernels.

Two implementations of each kernel live here: a numba ``@njit`` version and a
plain numpy version.  The numba path is used when numba imports and the
environment variable ``TWOMODECAT_DISABLE_NUMBA`` is unset or ``0``.  Both
paths are importable regardless, so tests and the benchmark can compare them.

Dense products that BLAS already does well (eigendecompositions, dense
matmuls) stay in numpy on both paths.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def numba_enabled() -> bool:
    return HAVE_NUMBA and os.environ.get("TWOMODECAT_DISABLE_NUMBA", "0") in ("", "0")


# ---------------------------------------------------------------- Lindblad RHS
#
# Generator in "effective Hamiltonian" form:
#   d rho/dt = G rho + rho G^dag + sum_j 2 g_j C_j rho C_j^dag
# with G = -iH - sum_j g_j C_j^dag C_j.  G and the C_j are passed in CSR form
# (numba) or as dense arrays (numpy).


@njit(cache=True)
def _csr_dot(data, indices, start, stop, x, out):
    # out = A @ x for CSR rows indptr[start:stop+1] laid out contiguously
    n = x.shape[0]
    m = x.shape[1]
    for i in range(n):
        for j in range(m):
            out[i, j] = 0.0
        for p in range(start[i], stop[i]):
            v = data[p]
            k = indices[p]
            for j in range(m):
                out[i, j] += v * x[k, j]


@njit(cache=True)
def _adjoint_into(x, out):
    n = x.shape[0]
    for i in range(n):
        for j in range(n):
            out[i, j] = np.conj(x[j, i])


@njit(cache=True)
def _rhs_numba(rho, g_data, g_ind, g_ptr, j_data, j_ind, j_ptr, rates, out, w1, w2, w3):
    n = rho.shape[0]
    _csr_dot(g_data, g_ind, g_ptr[:-1], g_ptr[1:], rho, out)
    _adjoint_into(rho, w1)
    _csr_dot(g_data, g_ind, g_ptr[:-1], g_ptr[1:], w1, w2)
    for i in range(n):
        for j in range(n):
            out[i, j] += np.conj(w2[j, i])
    for c in range(rates.shape[0]):
        s = j_ptr[c, :-1]
        e = j_ptr[c, 1:]
        _csr_dot(j_data, j_ind, s, e, rho, w1)  # C rho
        _adjoint_into(w1, w2)  # rho^dag C^dag
        _csr_dot(j_data, j_ind, s, e, w2, w3)  # C rho^dag C^dag = (C rho C^dag)^dag
        r = 2.0 * rates[c]
        for i in range(n):
            for j in range(n):
                out[i, j] += r * np.conj(w3[j, i])


@njit(cache=True)
def _rk4_numba(rho, dt, n_steps, g_data, g_ind, g_ptr, j_data, j_ind, j_ptr, rates):
    n = rho.shape[0]
    k1 = np.empty((n, n), np.complex128)
    k2 = np.empty_like(k1)
    k3 = np.empty_like(k1)
    k4 = np.empty_like(k1)
    tmp = np.empty_like(k1)
    w1 = np.empty_like(k1)
    w2 = np.empty_like(k1)
    w3 = np.empty_like(k1)
    y = rho.copy()
    h2 = 0.5 * dt
    for _ in range(n_steps):
        _rhs_numba(y, g_data, g_ind, g_ptr, j_data, j_ind, j_ptr, rates, k1, w1, w2, w3)
        for i in range(n):
            for j in range(n):
                tmp[i, j] = y[i, j] + h2 * k1[i, j]
        _rhs_numba(tmp, g_data, g_ind, g_ptr, j_data, j_ind, j_ptr, rates, k2, w1, w2, w3)
        for i in range(n):
            for j in range(n):
                tmp[i, j] = y[i, j] + h2 * k2[i, j]
        _rhs_numba(tmp, g_data, g_ind, g_ptr, j_data, j_ind, j_ptr, rates, k3, w1, w2, w3)
        for i in range(n):
            for j in range(n):
                tmp[i, j] = y[i, j] + dt * k3[i, j]
        _rhs_numba(tmp, g_data, g_ind, g_ptr, j_data, j_ind, j_ptr, rates, k4, w1, w2, w3)
        for i in range(n):
            for j in range(n):
                y[i, j] += dt / 6.0 * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
    return y


def _rhs_numpy(rho, G, jumps, rates):
    out = G @ rho
    out += rho @ G.conj().T
    for C, g in zip(jumps, rates):
        out += 2.0 * g * (C @ rho @ C.conj().T)
    return out


def _rk4_numpy(rho, dt, n_steps, G, jumps, rates):
    y = np.array(rho, complex)
    for _ in range(n_steps):
        k1 = _rhs_numpy(y, G, jumps, rates)
        k2 = _rhs_numpy(y + 0.5 * dt * k1, G, jumps, rates)
        k3 = _rhs_numpy(y + 0.5 * dt * k2, G, jumps, rates)
        k4 = _rhs_numpy(y + dt * k3, G, jumps, rates)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def _to_csr(m):
    # small hand-rolled CSR so the numba path does not depend on scipy.sparse
    m = np.asarray(m, complex)
    rows, cols = np.nonzero(m)
    data = m[rows, cols]
    ptr = np.zeros(m.shape[0] + 1, np.int64)
    np.add.at(ptr, rows + 1, 1)
    return data.astype(np.complex128), cols.astype(np.int64), np.cumsum(ptr)


class LindbladKernel:
    """Precompiled generator ``G rho + rho G^dag + sum 2 g C rho C^dag``.

    Built from dense matrices; keeps both a dense copy (numpy path) and CSR
    arrays (numba path).
    """

    def __init__(self, G, jumps, rates, use_numba: bool | None = None):
        self.G = np.ascontiguousarray(G, complex)
        self.jumps = [np.ascontiguousarray(C, complex) for C in jumps]
        self.rates = np.asarray(rates, float).reshape(-1)
        if len(self.jumps) != self.rates.size:
            raise ValueError("one rate per jump operator")
        self.use_numba = numba_enabled() if use_numba is None else (use_numba and HAVE_NUMBA)
        self.dim = self.G.shape[0]
        self.g_csr = _to_csr(self.G)
        if self.jumps:
            self.j_data, self.j_ind, self.j_ptr = _stack_csr(self.jumps)
        else:
            self.j_data = np.zeros(1, np.complex128)
            self.j_ind = np.zeros(1, np.int64)
            self.j_ptr = np.zeros((0, self.dim + 1), np.int64)

    def rhs(self, rho):
        rho = np.ascontiguousarray(rho, complex)
        if not self.use_numba:
            return _rhs_numpy(rho, self.G, self.jumps, self.rates)
        n = rho.shape[0]
        out = np.empty((n, n), complex)
        w = [np.empty((n, n), complex) for _ in range(3)]
        _rhs_numba(rho, *self.g_csr, self.j_data, self.j_ind, self.j_ptr, self.rates, out, *w)
        return out

    def rk4(self, rho, dt: float, n_steps: int):
        rho = np.ascontiguousarray(rho, complex)
        if n_steps <= 0:
            return rho.copy()
        if not self.use_numba:
            return _rk4_numpy(rho, dt, n_steps, self.G, self.jumps, self.rates)
        return _rk4_numba(rho, float(dt), int(n_steps), *self.g_csr, self.j_data, self.j_ind, self.j_ptr, self.rates)


# ---------------------------------------------------------------- amplitude damping


def damping_table(cutoff: int, eta: float) -> np.ndarray:
    """E[k, m] = sqrt(binom(m+k, k) eta^m (1-eta)^k): Kraus weight for losing k photons from m+k."""
    from scipy.special import comb

    n = cutoff + 1
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    table = np.sqrt(comb(m + k, k) * float(eta) ** m * (1.0 - float(eta)) ** k)
    table[m + k > cutoff] = 0.0
    return table


@njit(cache=True)
def _damp_numba(rho, na, nb, ta, tb):
    # mode A then mode B; rho indexed (ia*nb + ib, ja*nb + jb)
    tmp = np.zeros_like(rho)
    for ia in range(na):
        for ja in range(na):
            kmax = na - max(ia, ja)
            for k in range(kmax):
                w = ta[k, ia] * ta[k, ja]
                if w == 0.0:
                    continue
                ra = (ia + k) * nb
                ca = (ja + k) * nb
                ro = ia * nb
                co = ja * nb
                for ib in range(nb):
                    for jb in range(nb):
                        tmp[ro + ib, co + jb] += w * rho[ra + ib, ca + jb]
    out = np.zeros_like(rho)
    for ib in range(nb):
        for jb in range(nb):
            kmax = nb - max(ib, jb)
            for k in range(kmax):
                w = tb[k, ib] * tb[k, jb]
                if w == 0.0:
                    continue
                for ia in range(na):
                    for ja in range(na):
                        out[ia * nb + ib, ja * nb + jb] += w * tmp[ia * nb + ib + k, ja * nb + jb + k]
    return out


def _kraus_from_table(table):
    n = table.shape[0]
    E = np.zeros((n, n, n))
    for k in range(n):
        for m in range(n - k):
            E[k, m, m + k] = table[k, m]
    return E


def _damp_numpy(rho, na, nb, ta, tb):
    r4 = rho.reshape(na, nb, na, nb)
    Ea = _kraus_from_table(ta)
    Eb = _kraus_from_table(tb)
    r4 = np.einsum("kim,mbnc,kjn->ibjc", Ea, r4, Ea, optimize=True)
    r4 = np.einsum("kim,ambn,kjn->aibj", Eb, r4, Eb, optimize=True)
    return r4.reshape(na * nb, na * nb)


def amplitude_damp(rho, cutoff_a: int, cutoff_b: int, eta_a: float, eta_b: float, use_numba: bool | None = None):
    """Exact two-mode amplitude damping with survival probabilities eta_a, eta_b."""
    if use_numba is None:
        use_numba = numba_enabled()
    ta = damping_table(cutoff_a, eta_a)
    tb = damping_table(cutoff_b, eta_b)
    rho = np.ascontiguousarray(rho, complex)
    if use_numba and HAVE_NUMBA:
        return _damp_numba(rho, cutoff_a + 1, cutoff_b + 1, ta, tb)
    return _damp_numpy(rho, cutoff_a + 1, cutoff_b + 1, ta, tb)


# ---------------------------------------------------------------- Kraus channel
#
# Transit Kraus operators conserve a charge (total or differential photon
# number), so each one is block sparse: a few percent of the entries of a dense
# matrix.  The numba path exploits that with CSR products; the numpy path uses
# dense BLAS matmuls.


@njit(cache=True)
def _kraus_numba(rho, data, ind, ptr):
    n = rho.shape[0]
    out = np.zeros((n, n), np.complex128)
    w1 = np.empty((n, n), np.complex128)
    w2 = np.empty((n, n), np.complex128)
    w3 = np.empty((n, n), np.complex128)
    for c in range(ptr.shape[0]):
        s = ptr[c, :-1]
        e = ptr[c, 1:]
        _csr_dot(data, ind, s, e, rho, w1)  # K rho
        _adjoint_into(w1, w2)  # rho^dag K^dag
        _csr_dot(data, ind, s, e, w2, w3)  # (K rho K^dag)^dag
        for i in range(n):
            for j in range(n):
                out[i, j] += np.conj(w3[j, i])
    return out


def _kraus_numpy(rho, kraus):
    out = np.zeros_like(rho)
    for K in kraus:
        out += (K @ rho) @ K.conj().T
    return out


def _stack_csr(mats):
    datas, inds, ptrs = [], [], []
    offset = 0
    for M in mats:
        d, i, p = _to_csr(M)
        datas.append(d)
        inds.append(i)
        ptrs.append(p + offset)
        offset += d.size
    # pad by one so numba never sees a zero-length array
    data = np.concatenate(datas + [np.zeros(1, np.complex128)])
    ind = np.concatenate(inds + [np.zeros(1, np.int64)])
    return data, ind, np.stack(ptrs)


class KrausChannel:
    """rho -> sum_j K_j rho K_j^dag with both a dense and a CSR copy of the K_j."""

    def __init__(self, kraus, use_numba: bool | None = None):
        self.kraus = np.ascontiguousarray(kraus, complex)
        if self.kraus.ndim != 3 or self.kraus.shape[1] != self.kraus.shape[2]:
            raise ValueError("expected a stack of square Kraus matrices")
        self.use_numba = numba_enabled() if use_numba is None else (use_numba and HAVE_NUMBA)
        self.csr = _stack_csr(self.kraus) if self.use_numba else None

    @property
    def density(self) -> float:
        return float(np.count_nonzero(self.kraus)) / self.kraus.size

    def apply(self, rho):
        rho = np.ascontiguousarray(rho, complex)
        if self.use_numba:
            return _kraus_numba(rho, *self.csr)
        return _kraus_numpy(rho, self.kraus)


def apply_kraus(rho, kraus, use_numba: bool | None = None):
    """sum_j K_j rho K_j^dag for a stack of Kraus operators."""
    return KrausChannel(kraus, use_numba).apply(rho)
