"""Entanglement-feature dynamics of the snapshot ensemble.

The entanglement feature of a state ensemble packs the average purity of
every site subset into one vector; for the snapshot ensemble of a brick-wall
random circuit it starts from the all-ones product vector (projective
measurement of a product state) and each two-qubit gate acts as a fixed 4x4
transfer matrix on the two affected binary labels.  Any unitary two-design
has the same transfer matrix, so one matrix serves every gate.

Evolution is TEBD with a fixed bond-dimension cap.  For even n the brick wall
is two-site translation invariant, so a single unit cell is evolved and laid
out around the ring; odd n falls back to per-site updates with one idle site
per layer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .stabilizer import CircuitSpec
from .tensor_core import (
    StructureError,
    SubsetMPS,
    apply_two_site_operator_and_truncate,
    mps_evaluate,
    ring_environments,
)

__all__ = [
    "EFState",
    "GateEFTransfer",
    "ef_product_state",
    "haar_gate_ef_transfer",
    "evolve_snapshot_ef",
    "ef_component",
    "page_ef_state",
    "dump_ef_components",
]

#: Exact bond-dimension cap used when d_w is None ("untruncated" mode).
_EXACT_CAP = 4096


@dataclass(frozen=True)
class GateEFTransfer:
    """4x4 transfer matrix of one two-design gate on the two-site subset basis.

    Index convention matches the two-site updates in tensor_core:
    ``2*b_left + b_right``, i.e. (0, 1, 2, 3) = (neither, right, left, both).
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise StructureError("gate transfer must be 4x4")
        if not (np.allclose(m[0], [1, 0, 0, 0]) and np.allclose(m[3], [0, 0, 0, 1])):
            raise StructureError("gate transfer must fix the uniform components")
        if not np.allclose(m[1], m[2]):
            raise StructureError("gate transfer must be left-right symmetric")
        object.__setattr__(self, "matrix", m)


def haar_gate_ef_transfer() -> GateEFTransfer:
    """Transfer matrix of a uniform two-qubit Clifford (or any two-design) gate.

    Subset components with the gate block fully inside or fully outside the
    region are untouched; a cut through the block averages to 2/5 times the
    sum of the two uniform components (the one-qubit Page purity 4/5 when both
    are 1).  Validated against a Monte-Carlo purity average over sampled
    Clifford gates in the test suite.
    """
    m = np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.4, 0.0, 0.0, 0.4],
            [0.4, 0.0, 0.0, 0.4],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    return GateEFTransfer(m)


@dataclass
class EFState:
    """Entanglement-feature state |W> of a snapshot ensemble as a SubsetMPS."""

    mps: SubsetMPS
    depth: int
    d_w: int | None
    discarded_weight: float = 0.0

    @property
    def n(self) -> int:
        return self.mps.n

    def component(self, subset) -> float:
        return mps_evaluate(self.mps, subset)

    def validate_normalization(self, tol: float = 1e-8) -> None:
        full = (1 << self.n) - 1
        for a in (0, full):
            v = self.component(a)
            if abs(v - 1.0) > tol:
                raise StructureError(f"EF normalization violated: W({a:#x}) = {v}")


def ef_product_state(n: int) -> EFState:
    """EF of the pure-product snapshot ensemble: every component equals 1."""
    return EFState(SubsetMPS.product(n), depth=0, d_w=None)


def _svd_split(theta, left_shape, right_shape, max_bond, cutoff=1e-12):
    u, s, vt = np.linalg.svd(theta, full_matrices=False)
    total = float(np.sum(s**2))
    if total == 0.0:
        keep, discarded = 1, 0.0
    else:
        keep = max(1, min(int(np.sum(s > cutoff * s[0])), max_bond, len(s)))
        discarded = float(np.sum(s[keep:] ** 2) / total)
    root = np.sqrt(s[:keep])
    left = (u[:, :keep] * root).reshape(*left_shape, keep)
    right = (root[:, None] * vt[:keep]).reshape(keep, *right_shape)
    return left, right, discarded


def evolve_snapshot_ef(circuit: CircuitSpec, d_w: int | None = 2) -> EFState:
    """EF state of the snapshot ensemble of a brick-wall circuit, by TEBD.

    ``d_w=None`` disables truncation (exact up to machine rank cutoff).  The
    gate schedule mirrors the physical layers; every gate applies the same
    two-design transfer matrix.  For 0 < L < infinity and even n the result
    repeats a two-site unit cell.
    """
    cap = _EXACT_CAP if d_w is None else int(d_w)
    if cap < 1:
        raise StructureError("d_w must be >= 1")
    if circuit.depth == 0:
        return ef_product_state(circuit.n)
    gate = haar_gate_ef_transfer().matrix
    if circuit.n % 2 == 0:
        return _evolve_unit_cell(circuit, gate, cap, d_w)
    return _evolve_per_site(circuit, gate, cap, d_w)


def _apply_gate_exact(left, right, gate, max_rank):
    """One exact two-site update of the unit cell; the new bond keeps full rank."""
    dl, dr = left.shape[1], right.shape[2]
    theta = np.einsum("slk,tkr->stlr", left, right)
    theta = np.einsum("uv,vlr->ulr", gate, theta.reshape(4, dl, dr))
    theta = theta.reshape(2, 2, dl, dr).transpose(2, 0, 1, 3).reshape(dl * 2, 2 * dr)
    new_l, new_r, disc = _svd_split(theta, (dl, 2), (2, dr), max_rank)
    return new_l.transpose(1, 0, 2), new_r.transpose(1, 0, 2), theta, disc


def _psd_factor(rho):
    """rho = X^T X with X of full numerical row rank, plus the pseudo-inverse."""
    rho = 0.5 * (rho + rho.T)
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    top = max(float(w.max()), 1e-300)
    keep = w > 1e-14 * top
    x = (v[:, keep] * np.sqrt(w[keep])).T
    x_pinv = v[:, keep] / np.sqrt(w[keep])
    return x, x_pinv


def _env_gauged_split(theta, dl, dr, cap):
    """SVD cut of theta weighted by the dominant ring environments of its bond."""
    th4 = theta.reshape(dl, 2, 2, dr).transpose(1, 2, 0, 3)
    d = dl  # outer bond dimension (dl == dr for a closed uniform update)
    t = np.einsum("stlr,stmq->lmrq", th4, th4).reshape(d * d, d * d)
    wr, vr = np.linalg.eig(t)
    rho_r = np.real(vr[:, np.argmax(np.abs(wr))]).reshape(d, d)
    wl, vl = np.linalg.eig(t.T)
    rho_l = np.real(vl[:, np.argmax(np.abs(wl))]).reshape(d, d)
    if np.trace(rho_r) < 0:
        rho_r = -rho_r
    if np.trace(rho_l) < 0:
        rho_l = -rho_l
    x, x_pinv = _psd_factor(rho_l)
    y, y_pinv = _psd_factor(rho_r)
    eye2 = np.eye(2)
    weighted = np.kron(x, eye2) @ theta @ np.kron(eye2, y.T)
    u, s, vt = np.linalg.svd(weighted, full_matrices=False)
    k = max(1, min(cap, int(np.sum(s > 1e-12 * s[0])) if s[0] > 0 else 1))
    root = np.sqrt(s[:k])
    left = (np.kron(x_pinv, eye2) @ (u[:, :k] * root)).reshape(dl, 2, k).transpose(1, 0, 2)
    right = ((root[:, None] * vt[:k]) @ np.kron(eye2, y_pinv.T)).reshape(k, 2, dr)
    return left, right.transpose(1, 0, 2)


def _overlap_and_grads(cell_a, cell_b, other_a, other_b, n):
    """<psi, phi> on the n-ring and its gradients w.r.t. psi's cell tensors."""
    e_even = sum(np.kron(cell_a[s], other_a[s]) for s in range(2))
    e_odd = sum(np.kron(cell_b[s], other_b[s]) for s in range(2))
    mats = [e_even if i % 2 == 0 else e_odd for i in range(n)]
    val, envs = ring_environments(np.eye(mats[0].shape[0]), mats)
    ga = np.zeros_like(cell_a)
    gb = np.zeros_like(cell_b)
    da, db = cell_a.shape[1], cell_b.shape[1]
    oa, ob = other_a.shape[1], other_b.shape[1]
    for i in range(n):
        if i % 2 == 0:
            g4 = envs[i].reshape(da, oa, cell_a.shape[2], other_a.shape[2])
            for s in range(2):
                ga[s] += np.einsum("aubv,uv->ab", g4, other_a[s])
        else:
            g4 = envs[i].reshape(db, ob, cell_b.shape[2], other_b.shape[2])
            for s in range(2):
                gb[s] += np.einsum("aubv,uv->ab", g4, other_b[s])
    return val, ga, gb


def _refit_unit_cell(a0, b0, target_a, target_b, n, iters=300, lr=2e-2):
    """Adam refinement of a capped unit cell against the uncapped one.

    Minimizes the exact ring L2 distance |psi - phi|^2 over the 2^n subset
    components; gradients come from ring environments.  Deterministic (no
    noise), so EF evolution stays reproducible.
    """
    a, b = a0.copy(), b0.copy()
    phi2 = _overlap_and_grads(target_a, target_b, target_a, target_b, n)[0]
    params = [a, b]
    m_t = [np.zeros_like(p) for p in params]
    v_t = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    best = (a.copy(), b.copy())
    best_val = np.inf
    stall = 0
    for it in range(1, iters + 1):
        psi2, ga2, gb2 = _overlap_and_grads(a, b, a, b, n)
        cross, gax, gbx = _overlap_and_grads(a, b, target_a, target_b, n)
        dist = psi2 - 2.0 * cross + phi2
        if dist < best_val - 1e-14 * max(phi2, 1.0):
            best_val = dist
            best = (a.copy(), b.copy())
            stall = 0
        else:
            stall += 1
        if dist <= 1e-24 * max(phi2, 1.0) or stall > 60:
            break
        grads = [2.0 * (ga2 - gax), 2.0 * (gb2 - gbx)]
        for p, g, mm, vv in zip(params, grads, m_t, v_t):
            mm *= beta1
            mm += (1 - beta1) * g
            vv *= beta2
            vv += (1 - beta2) * g * g
            p -= lr * (mm / (1 - beta1**it)) / (np.sqrt(vv / (1 - beta2**it)) + eps)
    return best


def _evolve_unit_cell(circuit, gate, cap, d_w):
    n, depth = circuit.n, circuit.depth
    a = np.ones((2, 1, 1))
    b = np.ones((2, 1, 1))
    discarded = 0.0
    for layer in range(1, depth + 1):
        if layer % 2 == 1:
            a, b, theta, disc = _apply_gate_exact(a, b, gate, _EXACT_CAP)
            new_bond = a.shape[2]
        else:
            b, a, theta, disc = _apply_gate_exact(b, a, gate, _EXACT_CAP)
            new_bond = b.shape[2]
        discarded += disc * (n // 2)
        if new_bond > cap:
            # initial guess: environment-gauged SVD cut, then variational
            # recompression of the whole cell on the n-site ring
            dl = theta.shape[0] // 2
            dr = theta.shape[1] // 2
            left, right = _env_gauged_split(theta, dl, dr, cap)
            if layer % 2 == 1:
                guess_a, guess_b = left, right
            else:
                guess_b, guess_a = left, right
            a, b = _refit_unit_cell(guess_a, guess_b, a, b, n)
    mps = SubsetMPS.from_unit_cell(n, [np.ascontiguousarray(a), np.ascontiguousarray(b)])
    ef = EFState(mps, depth=depth, d_w=d_w, discarded_weight=discarded)
    if cap < _EXACT_CAP:
        _normalize_whole(ef)
    return ef


def _normalize_whole(ef: EFState) -> None:
    """Rescale so the empty-subset component (whole-system purity) is exactly 1."""
    w0 = ef.component(0)
    if w0 <= 0:
        raise StructureError(f"EF normalization impossible: W(empty) = {w0}")
    scale = w0 ** (-1.0 / ef.n)
    cells = [scale * ef.mps.tensors[i] for i in range(ef.mps.unit_cell or 1)]
    ef.mps = SubsetMPS.from_unit_cell(ef.n, cells)


def _evolve_per_site(circuit, gate, cap, d_w):
    mps = SubsetMPS.product(circuit.n)
    discarded = 0.0
    for layer in range(1, circuit.depth + 1):
        for i, _ in circuit.layer_pairs(layer):
            mps, disc = apply_two_site_operator_and_truncate(mps, gate, i, max_bond=cap)
            discarded += disc
    return EFState(mps, depth=circuit.depth, d_w=d_w, discarded_weight=discarded)


def ef_component(ef: EFState, subset) -> float:
    """Average snapshot purity in the given site subset (thin evaluate wrapper)."""
    return ef.component(subset)


def page_ef_state(n: int) -> EFState:
    """Deep-circuit (Haar) limit: W_A = (2^|A| + 2^(n-|A|)) / (2^n + 1)."""
    t0 = np.zeros((2, 2, 2))
    t0[0] = np.diag([1.0, 2.0])
    t0[1] = np.diag([2.0, 1.0])
    boundary = np.eye(2) / (2.0**n + 1.0)
    mps = SubsetMPS.from_unit_cell(n, [t0], boundary=boundary)
    return EFState(mps, depth=-1, d_w=None)


def dump_ef_components(ef: EFState, path) -> None:
    """CSV of (subset bitmask, W_A); diagnostic, limited to n <= 16."""
    if ef.n > 16:
        raise StructureError("component dump limited to n <= 16")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subset_mask", "w"])
        for mask in range(1 << ef.n):
            writer.writerow([mask, repr(ef.component(mask))])
