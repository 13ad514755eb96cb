"""Locally-scrambled shadow norms and the optimal-depth scan.

For a traceless operator the squared norm is the ring overlap
``sum_A 2^{|A|-n} r_A (W_O)_A`` between the reconstruction coefficients and
the operator's entanglement feature.  For a Pauli string the same quantity
collapses to an EF-only expression

    ||P||^2 = (-3)^k / sum_{B <= supp P} (-2)^{|B|} W_B,

whose denominator is one weighted ring contraction of the EF MPS; this path
needs no solved r and is preferred for depth scans.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .ef_dynamics import EFState, evolve_snapshot_ef
from .reconstruction import IncompleteEnsembleError, ReconstructionMPS, solve_r
from .stabilizer import CircuitSpec, PauliString
from .tensor_core import StructureError, SubsetMPS, mps_overlap, subset_mask

__all__ = [
    "OperatorEF",
    "DepthScanResult",
    "shadow_norm_general",
    "pauli_shadow_norm_from_ef",
    "depth_scan",
    "fit_optimal_depth",
]


class OperatorEF:
    """Entanglement feature |W_O> of an operator, as a SubsetMPS.

    For a Pauli string of support S the site matrices have bond one:
    W^0 = 4 off the support (0 on it), W^1 = 2 everywhere, which reproduces
    (W_P)_A = [S <= A] 2^{2n-|A|}.  Sums of distinct Pauli strings add their
    features with squared coefficients (cross terms vanish), realized as a
    direct-sum MPS with the coefficient weights on the boundary.
    """

    def __init__(self, mps: SubsetMPS, label: str = "operator"):
        self.mps = mps
        self.n = mps.n
        self.label = label

    @classmethod
    def from_pauli_support(cls, n: int, support) -> "OperatorEF":
        mask = subset_mask(support, n)
        if mask == 0:
            raise StructureError("traceless operators only: identity support rejected")
        tensors = []
        for i in range(n):
            t = np.empty((2, 1, 1))
            t[0, 0, 0] = 0.0 if (mask >> i) & 1 else 4.0
            t[1, 0, 0] = 2.0
            tensors.append(t)
        return cls(SubsetMPS(tensors), label=f"pauli-support-{mask:#x}")

    @classmethod
    def from_pauli(cls, pauli: PauliString) -> "OperatorEF":
        return cls.from_pauli_support(pauli.n, pauli.support_mask)

    @classmethod
    def from_pauli_terms(cls, n: int, terms) -> "OperatorEF":
        """terms: iterable of (coefficient, PauliString or support mask)."""
        supports = []
        weights = []
        for coef, term in terms:
            mask = term.support_mask if isinstance(term, PauliString) else subset_mask(term, n)
            if mask == 0:
                raise StructureError("traceless operators only: identity term rejected")
            supports.append(mask)
            weights.append(float(coef) ** 2)
        k = len(supports)
        if k == 0:
            raise StructureError("empty operator")
        tensors = []
        for i in range(n):
            t = np.zeros((2, k, k))
            for j, mask in enumerate(supports):
                t[0, j, j] = 0.0 if (mask >> i) & 1 else 4.0
                t[1, j, j] = 2.0
            tensors.append(t)
        return cls(SubsetMPS(tensors, boundary=np.diag(weights)), label="pauli-sum")


def shadow_norm_general(r: ReconstructionMPS, w_o: OperatorEF) -> float:
    """||O||^2 = sum_A 2^{|A|-n} r_A (W_O)_A as one weighted ring overlap."""
    if r.n != w_o.n:
        raise StructureError(f"n mismatch: r has {r.n}, operator has {w_o.n}")
    return mps_overlap(r.as_subset_mps(), w_o.mps, site_weight=(0.5, 1.0))


def pauli_shadow_norm_from_ef(ef: EFState, support) -> float:
    """Pauli shadow norm from the EF alone (no reconstruction solve needed).

    The subset sum over the support is evaluated by one ring contraction with
    per-site factor T^0 + (-2) T^1 on support sites, T^0 elsewhere; cost is
    linear in n for any support size.
    """
    mask = subset_mask(support, ef.n)
    k = mask.bit_count()
    mps = ef.mps
    prod = mps.boundary.copy() if mps.boundary is not None else None
    for i in range(ef.n):
        t = mps.tensors[i]
        m = t[0] - 2.0 * t[1] if (mask >> i) & 1 else t[0]
        prod = m.copy() if prod is None else prod @ m
    denom = float(np.trace(prod))
    signed = ((-1.0) ** k) * denom
    if signed <= 0.0:
        raise IncompleteEnsembleError(
            f"incomplete ensemble for this support (denominator {denom:g})"
        )
    return ((-3.0) ** k) / denom


@dataclass
class DepthScanResult:
    """Shadow norms of one operator weight across circuit depths."""

    k: int
    depths: list[int]
    norms: list[float]
    l_star: int
    fit_a: float = float("nan")
    fit_b: float = float("nan")

    def fitted_l_star(self) -> int:
        return int(round(self.fit_a * np.log(self.k) ** 2 + self.fit_b * np.log(self.k)))


def fit_optimal_depth(ks, l_stars) -> tuple[float, float]:
    """Least-squares fit L* ~ a (ln k)^2 + b (ln k)."""
    ks = np.asarray(ks, dtype=float)
    ls = np.asarray(l_stars, dtype=float)
    x = np.log(ks)
    design = np.stack([x**2, x], axis=1)
    coef, *_ = np.linalg.lstsq(design, ls, rcond=None)
    return float(coef[0]), float(coef[1])


def depth_scan(
    k_values,
    l_range,
    n: int,
    d_w: int | None = 2,
    d_r: int = 6,
    method: str = "ef",
    seed: int = 0,
    support_start: int = 0,
) -> list[DepthScanResult]:
    """Scan contiguous-support Pauli norms over circuit depth and locate L*.

    Supports start at ``support_start`` (unit-cell aligned by default) so the
    depth-1 staggering convention is fixed.  ``method="ef"`` uses the EF-only
    Pauli norm; ``method="general"`` solves r per depth and contracts the
    general overlap, skipping depths whose solve does not converge.
    """
    k_values = sorted(set(int(k) for k in k_values))
    depths = sorted(set(int(l) for l in l_range))
    if any(k < 1 or k > n for k in k_values):
        raise ValueError("operator weights must satisfy 1 <= k <= n")
    per_depth = {}
    for ell in depths:
        circuit = CircuitSpec(n, ell, seed=seed)
        ef = evolve_snapshot_ef(circuit, d_w=d_w)
        r = None
        if method == "general":
            if ell == 0:
                from .reconstruction import closed_form_r_pauli

                r = closed_form_r_pauli(n)
            else:
                r = solve_r(ef, d_r=d_r, seed=seed)
                if r.status != "solved":
                    warnings.warn(f"depth {ell}: r solve unconverged; depth skipped")
                    continue
        per_depth[ell] = (ef, r)

    results = []
    for k in k_values:
        support = [(support_start + j) % n for j in range(k)]
        ds, norms = [], []
        for ell, (ef, r) in per_depth.items():
            if method == "general":
                norm = shadow_norm_general(r, OperatorEF.from_pauli_support(n, support))
            else:
                norm = pauli_shadow_norm_from_ef(ef, support)
            ds.append(ell)
            norms.append(norm)
        l_star = ds[int(np.argmin(norms))]  # ties resolve to the smallest depth
        results.append(DepthScanResult(k, ds, norms, l_star))
    a, b = fit_optimal_depth([r.k for r in results], [r.l_star for r in results])
    for r in results:
        r.fit_a, r.fit_b = a, b
    return results
