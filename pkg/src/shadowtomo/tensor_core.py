"""Minimal MPS machinery on periodic chains of binary- or Pauli-labeled sites.

Two tensor-train containers are provided:

* :class:`SubsetMPS` encodes a real function on subsets ``A`` of ``n`` sites,
  evaluated as ``Tr(B * prod_i T_i^[i in A])`` with a boundary matrix ``B``
  closing the ring.  It backs entanglement-feature states, operator
  entanglement features and reconstruction coefficients.
* :class:`PauliBasisMPS` does the same with four matrices per site, indexed by
  the Pauli label 0..3 (I, X, Y, Z), and encodes operator components in the
  Pauli basis.

All containers are value types, immutable by convention after construction
and safe to share across threads read-only; operations allocate fresh
outputs.  All evaluation is a plain ring trace of small dense matrices; no
canonical form is kept.  Truncation after a two-site update is a local SVD cut on the
updated bond only, which is the usual (non-optimal) choice on a ring.
"""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

__all__ = [
    "StructureError",
    "SubsetMPS",
    "PauliBasisMPS",
    "subset_mask",
    "mps_evaluate",
    "mps_overlap",
    "apply_two_site_operator_and_truncate",
    "pauli_mps_evaluate",
]


class StructureError(ValueError):
    """Raised on tensor shape/bond mismatches or non-finite entries."""


def _as_matrix(x, name):
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise StructureError(f"{name} must be a matrix, got shape {a.shape}")
    return a


def _check_finite(arr, context):
    if not np.all(np.isfinite(arr)):
        raise StructureError(f"non-finite entries in {context}")


def subset_mask(A, n: int) -> int:
    """Normalize a subset (bitmask int or iterable of site indices) to a bitmask."""
    if isinstance(A, (int, np.integer)):
        mask = int(A)
        if mask < 0 or mask >= (1 << n):
            raise StructureError(f"subset mask {mask} out of range for n={n}")
        return mask
    mask = 0
    for i in A:
        if not 0 <= i < n:
            raise StructureError(f"site {i} out of range for n={n}")
        mask |= 1 << i
    return mask


class SubsetMPS:
    """Periodic MPS over n two-valued sites, evaluating a subset function.

    Parameters
    ----------
    tensors:
        Per site, an array of shape ``(2, D_left, D_right)`` holding the two
        matrices ``T^0`` (site excluded) and ``T^1`` (site included).
    boundary:
        ``D x D`` matrix closing the ring at the cut before site 0, or None
        for the identity.
    unit_cell:
        Declared translation period (1 or 2) when the site tensors literally
        repeat with that period; None when no invariance is declared.
    """

    def __init__(self, tensors, boundary=None, unit_cell=None):
        self.tensors = [np.asarray(t, dtype=float) for t in tensors]
        self.n = len(self.tensors)
        if self.n == 0:
            raise StructureError("empty MPS")
        for i, t in enumerate(self.tensors):
            if t.ndim != 3 or t.shape[0] != 2:
                raise StructureError(f"site {i}: expected shape (2, Dl, Dr), got {t.shape}")
            nxt = self.tensors[(i + 1) % self.n]
            if t.shape[2] != nxt.shape[1]:
                raise StructureError(
                    f"bond mismatch between site {i} ({t.shape[2]}) and site "
                    f"{(i + 1) % self.n} ({nxt.shape[1]})"
                )
        d0 = self.tensors[0].shape[1]
        self.boundary = None if boundary is None else _as_matrix(boundary, "boundary")
        if self.boundary is not None and self.boundary.shape != (d0, d0):
            raise StructureError(
                f"boundary shape {self.boundary.shape} incompatible with first bond {d0}"
            )
        if unit_cell not in (None, 1, 2):
            raise StructureError("unit_cell must be 1, 2 or None")
        if unit_cell is not None and self.n % unit_cell:
            raise StructureError("unit_cell must divide the chain length")
        self.unit_cell = unit_cell
        for t in self.tensors:
            _check_finite(t, "SubsetMPS tensors")
        if self.boundary is not None:
            _check_finite(self.boundary, "SubsetMPS boundary")

    # -- constructors ------------------------------------------------------

    @classmethod
    def product(cls, n: int, value0: float = 1.0, value1: float = 1.0) -> "SubsetMPS":
        """Bond-1 product MPS with scalar site entries (all-ones by default)."""
        t = np.array([[[value0]], [[value1]]], dtype=float)
        return cls([t] * n, boundary=None, unit_cell=1)

    @classmethod
    def from_unit_cell(cls, n: int, cell_tensors, boundary=None) -> "SubsetMPS":
        """Lay out a 1- or 2-site unit cell around a ring of n sites."""
        cell = [np.asarray(t, dtype=float) for t in cell_tensors]
        if len(cell) not in (1, 2):
            raise StructureError("unit cell must hold 1 or 2 site tensors")
        if n % len(cell):
            raise StructureError(f"n={n} not divisible by unit cell {len(cell)}")
        tensors = [cell[i % len(cell)] for i in range(n)]
        return cls(tensors, boundary=boundary, unit_cell=len(cell))

    # -- queries -----------------------------------------------------------

    def bond_dims(self):
        return [t.shape[1] for t in self.tensors]

    def max_bond(self) -> int:
        return max(self.bond_dims())

    def evaluate(self, A) -> float:
        return mps_evaluate(self, A)

    def copy(self) -> "SubsetMPS":
        return SubsetMPS(
            [t.copy() for t in self.tensors],
            None if self.boundary is None else self.boundary.copy(),
            unit_cell=self.unit_cell,
        )


def mps_evaluate(m: SubsetMPS, A) -> float:
    """Evaluate the subset function: Tr(B * prod_i T_i^[i in A])."""
    mask = subset_mask(A, m.n)
    prod = m.boundary.copy() if m.boundary is not None else None
    for i in range(m.n):
        ti = m.tensors[i][(mask >> i) & 1]
        prod = ti.copy() if prod is None else prod @ ti
    val = float(np.trace(prod))
    if not np.isfinite(val):
        raise StructureError("non-finite evaluation")
    return val


def _site_weights(site_weight, n):
    if site_weight is None:
        return np.ones((n, 2))
    w = np.asarray(site_weight, dtype=float)
    if w.shape == (2,):
        w = np.tile(w, (n, 1))
    if w.shape != (n, 2):
        raise StructureError(f"site_weight must have shape (2,) or ({n}, 2)")
    return w


def mps_overlap(a: SubsetMPS, b: SubsetMPS, site_weight=None) -> float:
    """Weighted overlap sum_A w(A) a(A) b(A) as one transfer-matrix ring trace.

    ``w(A) = prod_i site_weight[i][A_i]`` with a per-site diagonal weight pair
    (identity when None).  Cost is linear in n; subsets are never enumerated.
    """
    if a.n != b.n:
        raise StructureError(f"length mismatch: {a.n} vs {b.n}")
    w = _site_weights(site_weight, a.n)
    ba = a.boundary if a.boundary is not None else np.eye(a.tensors[0].shape[1])
    bb = b.boundary if b.boundary is not None else np.eye(b.tensors[0].shape[1])
    prod = np.kron(ba, bb)
    for i in range(a.n):
        e = w[i, 0] * np.kron(a.tensors[i][0], b.tensors[i][0]) + w[i, 1] * np.kron(
            a.tensors[i][1], b.tensors[i][1]
        )
        prod = prod @ e
    val = float(np.trace(prod))
    if not np.isfinite(val):
        raise StructureError("non-finite overlap")
    return val


def apply_two_site_operator_and_truncate(
    m: SubsetMPS, op, site: int, max_bond: int, cutoff: float = 1e-12
):
    """Apply a two-site operator on (site, site+1 mod n) and recompress the bond.

    ``op`` is 4x4 on the joint binary labels with row/column index
    ``2*b_left + b_right``.  The updated bond is cut by SVD to at most
    ``max_bond`` states (singular values below ``cutoff`` relative to the
    largest are dropped as well).  Returns ``(new_mps, discarded)`` where
    ``discarded`` is the truncated fraction of the squared singular weight.

    When the pair wraps the ring seam, the boundary matrix is absorbed into
    the two-site block and the returned MPS carries an identity boundary.
    """
    op = np.asarray(op, dtype=float)
    if op.shape != (4, 4):
        raise StructureError(f"two-site operator must be 4x4, got {op.shape}")
    if max_bond < 1:
        raise StructureError("max_bond must be >= 1")
    n = m.n
    i = site % n
    j = (i + 1) % n
    if n < 2:
        raise StructureError("need at least two sites")
    wraps = j != i + 1  # pair crosses the boundary cut

    tl, tr = m.tensors[i], m.tensors[j]
    dl, dr = tl.shape[1], tr.shape[2]
    if wraps and m.boundary is not None:
        # Tr(B T_j ... T_i) = Tr(T_{j+1} ... [T_i B T_j]); fold B into the block.
        block = np.einsum("slk,km,tmr->stlr", tl, m.boundary, tr)
    else:
        block = np.einsum("slk,tkr->stlr", tl, tr)
    # block[s, t, l, r] -> theta[s', t', l, r] via the 4x4 operator
    theta = np.einsum("uv,vlr->ulr", op, block.reshape(4, dl, dr)).reshape(2, 2, dl, dr)
    theta = theta.transpose(2, 0, 1, 3).reshape(dl * 2, 2 * dr)

    u, s, vt = np.linalg.svd(theta, full_matrices=False)
    total = float(np.sum(s**2))
    if total == 0.0:
        keep = 1
        discarded = 0.0
    else:
        keep = int(np.sum(s > cutoff * s[0]))
        keep = max(1, min(keep, max_bond, len(s)))
        discarded = float(np.sum(s[keep:] ** 2) / total)
    root = np.sqrt(s[:keep])
    new_l = (u[:, :keep] * root).reshape(dl, 2, keep).transpose(1, 0, 2)
    new_r = (root[:, None] * vt[:keep]).reshape(keep, 2, dr).transpose(1, 0, 2)

    tensors = [t.copy() for t in m.tensors]
    tensors[i] = np.ascontiguousarray(new_l)
    tensors[j] = np.ascontiguousarray(new_r)
    boundary = m.boundary
    if wraps:
        boundary = None
    elif boundary is not None:
        boundary = boundary.copy()
    out = SubsetMPS(tensors, boundary=boundary, unit_cell=None)
    _check_finite(theta, "two-site update")
    return out, discarded


class PauliBasisMPS:
    """Periodic MPS over n four-valued sites (Pauli labels 0..3 = I, X, Y, Z).

    Site tensors have shape ``(4, D_left, D_right)`` and may be complex; the
    encoded components of Hermitian operators evaluate to real scalars.
    """

    def __init__(self, tensors, boundary=None):
        self.tensors = [np.asarray(t) for t in tensors]
        self.n = len(self.tensors)
        if self.n == 0:
            raise StructureError("empty MPS")
        for i, t in enumerate(self.tensors):
            if t.ndim != 3 or t.shape[0] != 4:
                raise StructureError(f"site {i}: expected shape (4, Dl, Dr), got {t.shape}")
            nxt = self.tensors[(i + 1) % self.n]
            if t.shape[2] != nxt.shape[1]:
                raise StructureError(f"bond mismatch at site {i}")
        d0 = self.tensors[0].shape[1]
        self.boundary = None
        if boundary is not None:
            self.boundary = np.asarray(boundary)
            if self.boundary.shape != (d0, d0):
                raise StructureError("boundary incompatible with first bond")
        for t in self.tensors:
            _check_finite(np.abs(t), "PauliBasisMPS tensors")

    def bond_dims(self):
        return [t.shape[1] for t in self.tensors]

    def max_bond(self) -> int:
        return max(self.bond_dims())

    def evaluate(self, labels) -> float:
        return pauli_mps_evaluate(self, labels)


def ring_environments(boundary, mats):
    """Trace of a matrix ring and the environment of every site.

    Returns (trace, envs) for Tr(boundary * prod_i mats_i); envs[i] is the
    derivative of the trace with respect to mats[i], i.e. the transposed
    product of all remaining factors.
    """
    n = len(mats)
    prefix = [None] * (n + 1)
    prefix[0] = boundary
    for i in range(n):
        prefix[i + 1] = prefix[i] @ mats[i]
    suffix = [None] * (n + 1)
    suffix[n] = np.eye(mats[-1].shape[1])
    for i in range(n - 1, -1, -1):
        suffix[i] = mats[i] @ suffix[i + 1]
    envs = [(suffix[i + 1] @ prefix[i]).T for i in range(n)]
    return float(np.trace(prefix[n])), envs


def pauli_mps_evaluate(m: PauliBasisMPS, labels) -> float:
    """Return the component at the Pauli string given by per-site labels 0..3."""
    labels = list(labels)
    if len(labels) != m.n:
        raise StructureError(f"label length {len(labels)} != n={m.n}")
    prod = m.boundary.copy() if m.boundary is not None else None
    for i, p in enumerate(labels):
        if not 0 <= p <= 3:
            raise StructureError(f"bad Pauli label {p}")
        ti = m.tensors[i][p]
        prod = ti.copy() if prod is None else prod @ ti
    val = complex(np.trace(prod))
    if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
        raise StructureError(f"Pauli component not real: {val}")
    if not np.isfinite(val.real):
        raise StructureError("non-finite Pauli component")
    return float(val.real)
