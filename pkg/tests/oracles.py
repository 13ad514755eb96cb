"""Independent brute-force oracles used to pin expected values in the tests.

Everything here deliberately avoids the library's transfer-matrix code paths:
subset functions are evaluated by explicit loops over matrices, channels act
on dense 2^n x 2^n arrays, and purities come from dense partial traces.
"""

from __future__ import annotations

import numpy as np

PAULI = {
    0: np.eye(2, dtype=complex),
    1: np.array([[0, 1], [1, 0]], dtype=complex),
    2: np.array([[0, -1j], [1j, 0]], dtype=complex),
    3: np.array([[1, 0], [0, -1]], dtype=complex),
}


def naive_subset_eval(tensors, boundary, mask):
    """Tr(B * prod T_i^{b_i}) by an explicit left-to-right loop."""
    prod = np.eye(tensors[0].shape[1]) if boundary is None else np.array(boundary, dtype=float)
    for i, t in enumerate(tensors):
        prod = prod @ t[(mask >> i) & 1]
    return float(np.trace(prod))


def dense_subset_vector(mps):
    """All 2^n components of a SubsetMPS via the naive evaluator."""
    n = mps.n
    return np.array(
        [naive_subset_eval(mps.tensors, mps.boundary, m) for m in range(1 << n)]
    )


def apply_two_site_gate_dense(vec, n, op, i, j):
    """Apply a 4x4 operator on binary labels (i, j) to a dense 2^n subset vector.

    Operator index convention matches the library: 2*b_i + b_j.
    """
    out = np.zeros_like(vec)
    op = np.asarray(op, dtype=float)
    for mask in range(1 << n):
        bi, bj = (mask >> i) & 1, (mask >> j) & 1
        row = 2 * bi + bj
        base = mask & ~(1 << i) & ~(1 << j)
        for col in range(4):
            src = base | ((col >> 1) << i) | ((col & 1) << j)
            out[mask] += op[row, col] * vec[src]
    return out


def pauli_dense(labels):
    """Dense matrix of the Pauli string given by per-site labels (site 0 first).

    Site 0 is the least-significant qubit, matching bitmask conventions.
    """
    out = np.array([[1.0 + 0j]])
    for p in labels:
        out = np.kron(PAULI[p], out)
    return out


def pauli_string_dense(p):
    return p.sign * pauli_dense(p.labels())


def stabilizer_dense(state_or_gens):
    """Dense density matrix rho = prod_i (I + g_i) / 2 of a stabilizer state."""
    gens = state_or_gens.generators if hasattr(state_or_gens, "generators") else state_or_gens
    n = gens[0].n
    rho = np.eye(2**n, dtype=complex)
    for g in gens:
        rho = rho @ (np.eye(2**n) + pauli_string_dense(g)) / 2.0
    return rho


def dense_purity(rho, subset_mask, n):
    """Tr(rho_A^2) by dense partial trace over the complement of A."""
    rho_a = partial_trace(rho, subset_mask, n)
    return float(np.real(np.trace(rho_a @ rho_a)))


def partial_trace(rho, keep_mask, n):
    """Trace out all qubits not in keep_mask; site 0 is the least-significant."""
    keep = [i for i in range(n) if (keep_mask >> i) & 1]
    drop = [i for i in range(n) if not (keep_mask >> i) & 1]
    if not keep:
        return np.array([[np.trace(rho)]])
    # numpy kron in pauli_dense puts site 0 last, so site i sits at axis n-1-i
    t = rho.reshape([2] * (2 * n))
    perm_rows = [n - 1 - i for i in keep] + [n - 1 - i for i in drop]
    perm = perm_rows + [n + a for a in perm_rows]
    t = t.transpose(perm)
    k, d = len(keep), len(drop)
    t = t.reshape(2**k, 2**d, 2**k, 2**d)
    return np.einsum("abcb->ac", t)


def haar_state(dim, rng):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def page_purity(n, k):
    """Average subsystem purity of a Haar-random pure state of n qubits."""
    da, db = 2**k, 2 ** (n - k)
    return (da + db) / (da * db + 1)


def lambda_from_ef_table(w_table, n):
    """Pauli second moments lambda(s) = E[Tr(P sigma)^2] from the EF table.

    Moebius inversion of W_A = 2^{-|A|} sum_{s subset A} 3^{|s|} lambda(s).
    """
    g = np.array([2 ** bin(a).count("1") * w_table[a] for a in range(1 << n)])
    # subset Moebius: f(s) = sum_{A subset s} (-1)^{|s \ A|} g(A)
    f = g.copy()
    for i in range(n):
        bit = 1 << i
        for s in range(1 << n):
            if s & bit:
                f[s] = f[s] - f[s ^ bit]
    lam = np.empty(1 << n)
    for s in range(1 << n):
        lam[s] = f[s] / 3 ** bin(s).count("1")
    return lam


def dense_channel_apply(lam, rho, n):
    """Dense measurement channel M(rho) = 2^-n sum_P lambda(supp P) Tr(P rho) P."""
    out = np.zeros_like(rho, dtype=complex)
    for labels in _all_labels(n):
        p = pauli_dense(labels)
        supp = 0
        for i, l in enumerate(labels):
            if l:
                supp |= 1 << i
        out += lam[supp] * np.trace(p @ rho) * p
    return out / 2**n


def _all_labels(n):
    for idx in range(4**n):
        labels = []
        x = idx
        for _ in range(n):
            labels.append(x & 3)
            x >>= 2
        yield labels


def all_pauli_labels(n):
    return list(_all_labels(n))
