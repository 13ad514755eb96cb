"""Stabilizer-tableau simulation of the randomized-measurement protocol.

Pauli strings are held as pairs of bitmask integers (x, z) plus a phase
exponent mod 4 for the canonical Hermitian letters I, X, Y, Z; a string is
``i**phase * prod_j letter_j`` and physical (signed) strings keep the phase
even.  The tableau is the usual 2n-row form (destabilizers then stabilizers)
with two-qubit gates applied through a 16-entry conjugation table, so one
randomized-measurement sample costs a handful of numpy operations per gate.

Snapshot generation is embarrassingly parallel across sample indices: each
sample draws from an independent counter-based RNG stream keyed by
(seed, sample index), so any parallel schedule reproduces the serial run.
A depth-0 circuit applies one layer of uniform single-qubit Cliffords, which
realizes the random-Pauli-measurement limit; depth L >= 1 applies L brick-wall
layers of uniform two-qubit Cliffords (the brick-wall ensemble is already
invariant under local basis changes, so no extra layer is needed there).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .tensor_core import PauliBasisMPS

__all__ = [
    "PauliString",
    "StabilizerState",
    "CliffordGate1Q",
    "CliffordGate2Q",
    "CircuitSpec",
    "SnapshotRecord",
    "SnapshotStore",
    "SnapshotFormatError",
    "ExtentCapError",
    "sample_clifford_1q",
    "sample_clifford_2q",
    "run_protocol",
    "pauli_expectation",
    "stabilizer_to_pauli_mps",
    "subset_purity",
    "load_stabilizer_state",
    "save_stabilizer_state",
]

_LETTERS = "IXYZ"


class SnapshotFormatError(ValueError):
    """Malformed snapshot or stabilizer-state file."""


class ExtentCapError(ValueError):
    """Generator extent exceeds the configured cap (operator entanglement too large)."""


# ---------------------------------------------------------------------------
# bitmask Pauli arithmetic
# ---------------------------------------------------------------------------

def _gamma(x1: int, z1: int, x2: int, z2: int) -> int:
    """Phase exponent gamma with P(x1,z1) P(x2,z2) = i^gamma P(x1^x2, z1^z2)."""
    y1 = x1 & z1
    xo1 = x1 & ~z1
    zo1 = z1 & ~x1
    y2 = x2 & z2
    xo2 = x2 & ~z2
    zo2 = z2 & ~x2
    plus = (xo1 & y2).bit_count() + (y1 & zo2).bit_count() + (zo1 & xo2).bit_count()
    minus = (y1 & xo2).bit_count() + (zo1 & y2).bit_count() + (xo1 & zo2).bit_count()
    return (plus - minus) & 3


def _mul(x1, z1, p1, x2, z2, p2):
    return x1 ^ x2, z1 ^ z2, (p1 + p2 + _gamma(x1, z1, x2, z2)) & 3


def _anticommutes(x1, z1, x2, z2) -> bool:
    return bool(((x1 & z2).bit_count() + (z1 & x2).bit_count()) & 1)


def _letter(x_bit: int, z_bit: int) -> int:
    # (x, z) -> label 0..3 for I, X, Y, Z
    return (1, 3)[z_bit] if (x_bit ^ z_bit) else (0, 2)[z_bit]


class PauliString:
    """Hermitian n-qubit Pauli string with a +/-1 sign, bit-pair encoded."""

    __slots__ = ("n", "x", "z", "phase")

    def __init__(self, n: int, x: int = 0, z: int = 0, phase: int = 0):
        if phase % 2:
            raise ValueError("Hermitian Pauli strings carry sign +/-1 only")
        self.n = n
        self.x = x
        self.z = z
        self.phase = phase & 3

    @classmethod
    def from_label(cls, label: str, n: int | None = None) -> "PauliString":
        """Parse strings like ``+ZXZI``, ``-XX`` or ``ZZ`` (implicit +)."""
        s = label.strip()
        phase = 0
        if s[:1] in "+-":
            phase = 2 if s[0] == "-" else 0
            s = s[1:]
        if n is not None and len(s) != n:
            raise SnapshotFormatError(f"expected {n} letters, got {len(s)!r}")
        x = z = 0
        for i, ch in enumerate(s):
            if ch == "X":
                x |= 1 << i
            elif ch == "Z":
                z |= 1 << i
            elif ch == "Y":
                x |= 1 << i
                z |= 1 << i
            elif ch != "I":
                raise SnapshotFormatError(f"bad Pauli letter {ch!r} in {label!r}")
        return cls(len(s), x, z, phase)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n)

    @classmethod
    def single(cls, n: int, site: int, letter: str, sign: int = 1) -> "PauliString":
        p = cls.from_label("I" * site + letter + "I" * (n - site - 1))
        if sign == -1:
            p.phase = 2
        return p

    @classmethod
    def z_string(cls, n: int, k: int) -> "PauliString":
        """Contiguous Z^{(x)k} on sites 0..k-1."""
        return cls(n, 0, (1 << k) - 1, 0)

    @property
    def sign(self) -> int:
        return 1 if self.phase == 0 else -1

    @property
    def support_mask(self) -> int:
        return self.x | self.z

    def support(self) -> tuple[int, ...]:
        m = self.support_mask
        return tuple(i for i in range(self.n) if (m >> i) & 1)

    def weight(self) -> int:
        return self.support_mask.bit_count()

    def labels(self) -> list[int]:
        return [_letter((self.x >> i) & 1, (self.z >> i) & 1) for i in range(self.n)]

    def commutes_with(self, other: "PauliString") -> bool:
        return not _anticommutes(self.x, self.z, other.x, other.z)

    def __mul__(self, other: "PauliString") -> "PauliString":
        if self.n != other.n:
            raise ValueError("length mismatch")
        x, z, p = _mul(self.x, self.z, self.phase, other.x, other.z, other.phase)
        out = PauliString.__new__(PauliString)
        out.n, out.x, out.z, out.phase = self.n, x, z, p
        return out

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PauliString)
            and (self.n, self.x, self.z, self.phase)
            == (other.n, other.x, other.z, other.phase)
        )

    def __hash__(self):
        return hash((self.n, self.x, self.z, self.phase))

    def __str__(self) -> str:
        body = "".join(
            _LETTERS[_letter((self.x >> i) & 1, (self.z >> i) & 1)] for i in range(self.n)
        )
        return ("+" if self.phase == 0 else "-") + body

    def __repr__(self) -> str:
        return f"PauliString({str(self)!r})"


# ---------------------------------------------------------------------------
# Clifford gates via conjugation tables
# ---------------------------------------------------------------------------

def _symp4(u: int, v: int) -> int:
    # symplectic product on 4-bit patterns (xa, za, xb, zb) packed LSB-first
    xa, za, xb, zb = u & 1, (u >> 1) & 1, (u >> 2) & 1, (u >> 3) & 1
    xc, zc, xd, zd = v & 1, (v >> 1) & 1, (v >> 2) & 1, (v >> 3) & 1
    return (xa & zc) ^ (za & xc) ^ (xb & zd) ^ (zb & xd)


def _gamma4(u: int, v: int) -> int:
    x1 = (u & 1) | ((u >> 1) & 2)
    z1 = ((u >> 1) & 1) | ((u >> 2) & 2)
    x2 = (v & 1) | ((v >> 1) & 2)
    z2 = ((v >> 1) & 1) | ((v >> 2) & 2)
    return _gamma(x1, z1, x2, z2)


def _build_table(image_pat, image_ph):
    """Conjugation table over the 16 two-qubit patterns from the 4 basis images.

    image_pat/image_ph give C(X_a), C(Z_a), C(X_b), C(Z_b) as packed patterns
    with phases mod 4.  Uses C(P(u ^ e)) = i^{-gamma(u,e)} C(P(u)) C(P(e)).
    """
    npat = np.zeros(16, dtype=np.uint8)
    dph = np.zeros(16, dtype=np.uint8)
    basis = (1, 2, 4, 8)
    for u in range(1, 16):
        low = u & -u
        e = basis.index(low)
        rest = u ^ low
        if rest == 0:
            npat[u] = image_pat[e]
            dph[u] = image_ph[e] & 3
            continue
        # compose: P(u) = i^{-gamma(rest, low)} P(rest) P(low) is wrong way;
        # P(rest) P(low) = i^gamma P(u), so C(P(u)) = i^{-gamma} C(P(rest)) C(P(low))
        g = _gamma4(rest, low)
        pu, pl = int(npat[rest]), int(image_pat[e])
        gp = _gamma4(pu, pl)
        npat[u] = pu ^ pl
        dph[u] = (int(dph[rest]) + int(image_ph[e]) + gp - g) & 3
    return npat, dph


def _invert_table(npat, dph):
    inv_p = np.zeros(16, dtype=np.uint8)
    inv_d = np.zeros(16, dtype=np.uint8)
    for u in range(16):
        v = int(npat[u])
        inv_p[v] = u
        inv_d[v] = (-int(dph[u])) & 3
    return inv_p, inv_d


class CliffordGate2Q:
    """Two-qubit Clifford gate, stored by the images of X_a, Z_a, X_b, Z_b."""

    def __init__(self, images: list[PauliString], sites=None):
        if len(images) != 4 or any(p.n != 2 for p in images):
            raise ValueError("need 4 two-qubit images")
        self.images = list(images)
        self.sites = sites
        pat = [self._pack(p) for p in images]
        for i in range(4):
            for j in range(i + 1, 4):
                want = 1 if (i, j) in ((0, 1), (2, 3)) else 0
                if _symp4(pat[i], pat[j]) != want:
                    raise ValueError("images violate the symplectic condition")
        self._pat = pat
        self._table = _build_table(pat, [p.phase for p in images])

    @staticmethod
    def _pack(p: PauliString) -> int:
        return (p.x & 1) | ((p.z & 1) << 1) | (((p.x >> 1) & 1) << 2) | (((p.z >> 1) & 1) << 3)

    @staticmethod
    def _unpack(pat: int, phase: int) -> PauliString:
        x = (pat & 1) | (((pat >> 2) & 1) << 1)
        z = ((pat >> 1) & 1) | (((pat >> 3) & 1) << 1)
        return PauliString(2, x, z, phase)

    @property
    def table(self):
        return self._table

    def at(self, a: int, b: int) -> "CliffordGate2Q":
        g = CliffordGate2Q.__new__(CliffordGate2Q)
        g.images, g._pat, g._table = self.images, self._pat, self._table
        g.sites = (a, b)
        return g

    def inverse(self) -> "CliffordGate2Q":
        # The inverse conjugation is multiplicative too, so its table is the
        # inverted table; skip re-validation on this hot path.
        inv_p, inv_d = _invert_table(*self._table)
        g = CliffordGate2Q.__new__(CliffordGate2Q)
        g.images = [self._unpack(int(inv_p[pat]), int(inv_d[pat])) for pat in (1, 2, 4, 8)]
        g.sites = self.sites
        g._pat = [self._pack(p) for p in g.images]
        g._table = (inv_p, inv_d)
        return g

    def __repr__(self):
        return f"CliffordGate2Q({[str(p) for p in self.images]}, sites={self.sites})"


class CliffordGate1Q:
    """Single-qubit Clifford gate (images of X and Z)."""

    def __init__(self, image_x: PauliString, image_z: PauliString, site=None):
        if image_x.n != 1 or image_z.n != 1:
            raise ValueError("need single-qubit images")
        if image_x.commutes_with(image_z):
            raise ValueError("images of X and Z must anticommute")
        self.images = [image_x, image_z]
        self.site = site
        npat = np.zeros(4, dtype=np.uint8)
        dph = np.zeros(4, dtype=np.uint8)
        pats = [(p.x & 1) | ((p.z & 1) << 1) for p in self.images]
        phs = [p.phase for p in self.images]
        npat[1], dph[1] = pats[0], phs[0]
        npat[2], dph[2] = pats[1], phs[1]
        # Y = i X Z: C(P(3)) = i^{gamma(X-img, Z-img) - gamma(X, Z)} C(X)C(Z)
        g0 = _gamma(1, 0, 0, 1)  # gamma(X, Z) = 3
        x1, z1 = pats[0] & 1, pats[0] >> 1
        x2, z2 = pats[1] & 1, pats[1] >> 1
        gi = _gamma(x1, z1, x2, z2)
        npat[3] = pats[0] ^ pats[1]
        dph[3] = (phs[0] + phs[1] + gi - g0) & 3
        self._table = (npat, dph)

    @property
    def table(self):
        return self._table

    def at(self, site: int) -> "CliffordGate1Q":
        g = CliffordGate1Q.__new__(CliffordGate1Q)
        g.images, g._table, g.site = self.images, self._table, site
        return g

    def inverse(self) -> "CliffordGate1Q":
        npat, dph = self._table
        inv_p = np.zeros(4, dtype=np.uint8)
        inv_d = np.zeros(4, dtype=np.uint8)
        for u in range(4):
            v = int(npat[u])
            inv_p[v] = u
            inv_d[v] = (-int(dph[u])) & 3
        imgs = []
        for pat in (1, 2):
            q = int(inv_p[pat])
            imgs.append(PauliString(1, q & 1, (q >> 1) & 1, int(inv_d[pat])))
        return CliffordGate1Q(imgs[0], imgs[1], site=self.site)


def sample_clifford_2q(rng: np.random.Generator) -> CliffordGate2Q:
    """Draw a gate uniformly from the 11520-element two-qubit Clifford group.

    Symplectic images are drawn by rejection on the (anti)commutation
    constraints; signs are independent fair bits.
    """
    def rand_pat():
        return int(rng.integers(1, 16))

    vx1 = rand_pat()
    while True:
        vz1 = rand_pat()
        if _symp4(vx1, vz1) == 1:
            break
    while True:
        vx2 = rand_pat()
        if _symp4(vx2, vx1) == 0 and _symp4(vx2, vz1) == 0:
            break
    while True:
        vz2 = rand_pat()
        if (
            _symp4(vz2, vx1) == 0
            and _symp4(vz2, vz1) == 0
            and _symp4(vz2, vx2) == 1
        ):
            break
    signs = rng.integers(0, 2, size=4)
    images = [
        CliffordGate2Q._unpack(pat, 2 * int(s))
        for pat, s in zip((vx1, vz1, vx2, vz2), signs)
    ]
    return CliffordGate2Q(images)


def sample_clifford_1q(rng: np.random.Generator) -> CliffordGate1Q:
    """Draw a gate uniformly from the 24-element single-qubit Clifford group."""
    vx = int(rng.integers(1, 4))
    while True:
        vz = int(rng.integers(1, 4))
        if vz != vx:
            break
    sx, sz = rng.integers(0, 2, size=2)
    px = PauliString(1, vx & 1, (vx >> 1) & 1, 2 * int(sx))
    pz = PauliString(1, vz & 1, (vz >> 1) & 1, 2 * int(sz))
    return CliffordGate1Q(px, pz)


# ---------------------------------------------------------------------------
# stabilizer states (tableau with destabilizers)
# ---------------------------------------------------------------------------

class StabilizerState:
    """Pure n-qubit stabilizer state as a 2n-row tableau.

    Rows 0..n-1 are destabilizers, rows n..2n-1 the stabilizer generators.
    Bits are packed into uint64 masks (one word per row), which limits n to 64;
    that covers every tableau-simulated setup here (the MPS-only paths go
    further and do not touch tableaux).
    """

    def __init__(self, n: int, xs=None, zs=None, ph=None):
        if not 1 <= n <= 64:
            raise ValueError("tableau supports 1..64 qubits")
        self.n = n
        if xs is None:
            self.xs = np.zeros(2 * n, dtype=np.uint64)
            self.zs = np.zeros(2 * n, dtype=np.uint64)
            self.ph = np.zeros(2 * n, dtype=np.uint8)
            for i in range(n):
                self.xs[i] = np.uint64(1) << np.uint64(i)
                self.zs[n + i] = np.uint64(1) << np.uint64(i)
        else:
            self.xs = np.array(xs, dtype=np.uint64)
            self.zs = np.array(zs, dtype=np.uint64)
            self.ph = np.array(ph, dtype=np.uint8)

    # -- constructors ------------------------------------------------------

    @classmethod
    def computational_basis(cls, n: int, bits: int = 0) -> "StabilizerState":
        """|b> with stabilizers (-1)^{b_i} Z_i and destabilizers X_i."""
        s = cls(n)
        for i in range(n):
            if (bits >> i) & 1:
                s.ph[n + i] = 2
        return s

    @classmethod
    def from_generators(cls, gens: list[PauliString]) -> "StabilizerState":
        """Build a full tableau from n commuting independent signed generators."""
        n = gens[0].n
        if len(gens) != n:
            raise ValueError(f"need exactly {n} generators, got {len(gens)}")
        for g in gens:
            if g.n != n:
                raise ValueError("generator length mismatch")
            if g.phase % 2:
                raise ValueError("generator signs must be +/-1")
        for i in range(n):
            for j in range(i + 1, n):
                if not gens[i].commutes_with(gens[j]):
                    raise ValueError(f"generators {i} and {j} anticommute")
        rows = [g.x | (g.z << n) for g in gens]
        if _gf2_rank(rows) != n:
            raise ValueError("generators are not independent")
        destab = _symplectic_partners(rows, n)
        s = cls(n)
        for i in range(n):
            s.xs[n + i] = np.uint64(gens[i].x)
            s.zs[n + i] = np.uint64(gens[i].z)
            s.ph[n + i] = gens[i].phase
            s.xs[i] = np.uint64(destab[i] & ((1 << n) - 1))
            s.zs[i] = np.uint64(destab[i] >> n)
            s.ph[i] = 0
        return s

    def copy(self) -> "StabilizerState":
        return StabilizerState(self.n, self.xs, self.zs, self.ph)

    # -- queries -----------------------------------------------------------

    @property
    def generators(self) -> list[PauliString]:
        return [
            PauliString(self.n, int(self.xs[self.n + i]), int(self.zs[self.n + i]),
                        int(self.ph[self.n + i]))
            for i in range(self.n)
        ]

    def generator_rows(self) -> list[tuple[int, int, int]]:
        return [
            (int(self.xs[self.n + i]), int(self.zs[self.n + i]), int(self.ph[self.n + i]))
            for i in range(self.n)
        ]

    # -- evolution ---------------------------------------------------------

    def apply_gate(self, gate) -> None:
        if isinstance(gate, CliffordGate2Q):
            a, b = gate.sites
            npat, dph = gate.table
            ua, ub = np.uint64(a), np.uint64(b)
            one = np.uint64(1)
            xa = (self.xs >> ua) & one
            za = (self.zs >> ua) & one
            xb = (self.xs >> ub) & one
            zb = (self.zs >> ub) & one
            case = (xa | (za << one) | (xb << np.uint64(2)) | (zb << np.uint64(3))).astype(np.int64)
            new = npat[case].astype(np.uint64)
            clear = ~((one << ua) | (one << ub))
            self.xs = (self.xs & clear) | ((new & one) << ua) | (((new >> np.uint64(2)) & one) << ub)
            self.zs = (self.zs & clear) | (((new >> one) & one) << ua) | (((new >> np.uint64(3)) & one) << ub)
            self.ph = (self.ph + dph[case]) & 3
        elif isinstance(gate, CliffordGate1Q):
            q = np.uint64(gate.site)
            one = np.uint64(1)
            npat, dph = gate.table
            xq = (self.xs >> q) & one
            zq = (self.zs >> q) & one
            case = (xq | (zq << one)).astype(np.int64)
            new = npat[case].astype(np.uint64)
            clear = ~(one << q)
            self.xs = (self.xs & clear) | ((new & one) << q)
            self.zs = (self.zs & clear) | (((new >> one) & one) << q)
            self.ph = (self.ph + dph[case]) & 3
        else:
            raise TypeError(f"unknown gate type {type(gate)!r}")

    def measure(self, q: int, rng: np.random.Generator) -> int:
        """Measure Z_q with Born statistics, collapsing the tableau."""
        n = self.n
        uq, one = np.uint64(q), np.uint64(1)
        xq = ((self.xs >> uq) & one).astype(bool)
        stab_hits = np.nonzero(xq[n:])[0]
        if stab_hits.size:
            p = n + int(stab_hits[0])
            rows = np.nonzero(xq)[0]
            for r in rows:
                if int(r) != p:
                    self._rowmult(int(r), p)
            # pivot becomes the destabilizer, +/- Z_q the new stabilizer
            self.xs[p - n] = self.xs[p]
            self.zs[p - n] = self.zs[p]
            self.ph[p - n] = self.ph[p]
            outcome = int(rng.integers(0, 2))
            self.xs[p] = 0
            self.zs[p] = one << uq
            self.ph[p] = 2 * outcome
            return outcome
        # deterministic: accumulate stabilizers flagged by destabilizer x-bits
        ax = az = 0
        ap = 0
        for j in range(n):
            if xq[j]:
                sx, sz, sp = int(self.xs[n + j]), int(self.zs[n + j]), int(self.ph[n + j])
                ax, az, ap = _mul(ax, az, ap, sx, sz, sp)
        return 0 if ap == 0 else 1

    def measure_all(self, rng: np.random.Generator) -> int:
        """Measure every qubit left to right; returns outcomes as a bitmask."""
        bits = 0
        for q in range(self.n):
            bits |= self.measure(q, rng) << q
        return bits

    def _rowmult(self, h: int, i: int) -> None:
        xh, zh, ph = int(self.xs[h]), int(self.zs[h]), int(self.ph[h])
        xi, zi, pi = int(self.xs[i]), int(self.zs[i]), int(self.ph[i])
        x, z, p = _mul(xh, zh, ph, xi, zi, pi)
        self.xs[h] = np.uint64(x)
        self.zs[h] = np.uint64(z)
        self.ph[h] = p

    def expectation(self, pauli: PauliString) -> int:
        """<P> in {-1, 0, +1} via the destabilizer bookkeeping."""
        if pauli.n != self.n:
            raise ValueError("length mismatch")
        if pauli.support_mask == 0:
            return pauli.sign
        n = self.n
        px, pz = pauli.x, pauli.z
        for i in range(n):
            if _anticommutes(int(self.xs[n + i]), int(self.zs[n + i]), px, pz):
                return 0
        ax = az = ap = 0
        for j in range(n):
            if _anticommutes(int(self.xs[j]), int(self.zs[j]), px, pz):
                ax, az, ap = _mul(ax, az, ap, int(self.xs[n + j]), int(self.zs[n + j]),
                                  int(self.ph[n + j]))
        if ax != px or az != pz:
            raise AssertionError("tableau inconsistency in expectation")
        return 1 if (ap - pauli.phase) & 3 == 0 else -1


def _gf2_rank(rows: list[int]) -> int:
    rank = 0
    basis = []
    for r in rows:
        for b in basis:
            r = min(r, r ^ b)
        if r:
            basis.append(r)
            basis.sort(reverse=True)
            rank += 1
    return rank


def _symplectic_partners(stab_rows: list[int], n: int) -> list[int]:
    """Destabilizer bit-rows d_i with <d_i, g_j> = delta_ij and <d_i, d_j> = 0.

    Rows pack x | (z << n); the symplectic pairing of r=(x1|z1) and s=(x2|z2)
    is parity(x1&z2 ^ z1&x2).
    """
    mask = (1 << n) - 1

    def pair(r, s):
        return ((r & (s >> n)).bit_count() + ((r >> n) & s & mask).bit_count()) & 1

    # Solve <d_i, g_j> = delta_ij: one Gauss-Jordan pass with all n right-hand
    # sides carried as a bitmask.  Coefficient vector of constraint j is
    # J(g_j) = z_j | (x_j << n).
    reduced = []  # (pivot bit, coeff, rhs mask)
    for j, g in enumerate(stab_rows):
        c, r = ((g >> n) | ((g & mask) << n)), 1 << j
        for pb, pc, pr in reduced:
            if (c >> pb) & 1:
                c ^= pc
                r ^= pr
        if c == 0:
            raise ValueError("generators are not independent")
        pb = (c & -c).bit_length() - 1
        reduced = [
            (qb, qc ^ c, qr ^ r) if (qc >> pb) & 1 else (qb, qc, qr)
            for qb, qc, qr in reduced
        ]
        reduced.append((pb, c, r))
    destab = []
    for i in range(len(stab_rows)):
        d = 0
        for pb, _, pr in reduced:
            if (pr >> i) & 1:
                d |= 1 << pb
        destab.append(d)
    # pairwise symplectification: multiplying d_j by g_i fixes <d_i, d_j> = 1
    # without touching any <d, g> pairing (the g's commute among themselves).
    for j in range(len(destab)):
        for i in range(j):
            if pair(destab[i], destab[j]):
                destab[j] ^= stab_rows[i]
    return destab


def subset_purity(state: StabilizerState, subset) -> float:
    """Exact purity Tr(rho_A^2) of a pure stabilizer state, via GF(2) rank."""
    n = state.n
    if isinstance(subset, (int, np.integer)):
        mask = int(subset)
    else:
        mask = 0
        for i in subset:
            mask |= 1 << i
    comp = ((1 << n) - 1) ^ mask
    rows = []
    for i in range(n):
        x = int(state.xs[n + i]) & comp
        z = int(state.zs[n + i]) & comp
        rows.append(x | (z << n))
    r = _gf2_rank(rows)
    k = mask.bit_count()
    return 2.0 ** (n - r - k)


# ---------------------------------------------------------------------------
# circuit specification and the measurement protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CircuitSpec:
    """Brick-wall circuit: layer 1 couples (0,1),(2,3),...; layer 2 couples
    (1,2),(3,4),...,(n-1,0); periodic boundary.  Depth 0 stands for the
    random-Pauli-measurement limit (one layer of single-qubit Cliffords)."""

    n: int
    depth: int
    seed: int = 0
    periodic: bool = True

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two qubits")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")

    def layer_pairs(self, layer: int) -> list[tuple[int, int]]:
        """Gate site pairs of 1-based layer `layer`."""
        offset = (layer + 1) % 2  # layer 1, 3, ... start at site 0
        pairs = []
        a = offset
        while True:
            b = a + 1
            if b >= self.n:
                if b == self.n and offset == 1 and self.n % 2 == 0 and self.periodic:
                    pairs.append((self.n - 1, 0))
                break
            pairs.append((a, b))
            a += 2
        return pairs


@dataclass
class SnapshotRecord:
    """One snapshot state, stored as its n stabilizer generator rows."""

    index: int
    n: int
    rows: list[tuple[int, int, int]]  # (x, z, phase) per generator
    _basis: list | None = field(default=None, repr=False, compare=False)

    @property
    def generators(self) -> list[PauliString]:
        return [PauliString(self.n, x, z, p) for x, z, p in self.rows]

    def state(self) -> StabilizerState:
        return StabilizerState.from_generators(self.generators)

    def _reduced_basis(self):
        """Row-reduced signed generator basis, cached for repeated queries."""
        if self._basis is None:
            basis = []  # (pivot bit, bits2n, x, z, phase)
            for x, z, p in self.rows:
                bits = x | (z << self.n)
                cx, cz, cp = x, z, p
                for pb, pbits, bx, bz, bp in basis:
                    if (bits >> pb) & 1:
                        bits ^= pbits
                        cx, cz, cp = _mul(cx, cz, cp, bx, bz, bp)
                if bits:
                    pb = (bits & -bits).bit_length() - 1
                    basis.append((pb, bits, cx, cz, cp))
            self._basis = basis
        return self._basis

    def expectation(self, pauli: PauliString) -> int:
        if pauli.n != self.n:
            raise ValueError("length mismatch")
        if pauli.support_mask == 0:
            return pauli.sign
        for x, z, _ in self.rows:
            if _anticommutes(x, z, pauli.x, pauli.z):
                return 0
        target = pauli.x | (pauli.z << self.n)
        ax = az = ap = 0
        for pb, pbits, bx, bz, bp in self._reduced_basis():
            if (target >> pb) & 1:
                target ^= pbits
                ax, az, ap = _mul(ax, az, ap, bx, bz, bp)
        if target != 0 or ax != pauli.x or az != pauli.z:
            raise AssertionError("snapshot generators do not span the queried Pauli")
        return 1 if (ap - pauli.phase) & 3 == 0 else -1

    def max_generator_weight(self) -> int:
        return max((x | z).bit_count() for x, z, _ in self.rows)


class SnapshotStore:
    """Collection of snapshot records plus the circuit metadata that made them."""

    def __init__(self, n: int, depth: int, seed: int, state_label: str, records=None):
        self.n = n
        self.depth = depth
        self.seed = seed
        self.state_label = state_label
        self.records: list[SnapshotRecord] = list(records) if records else []

    def append(self, record: SnapshotRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def head(self, m: int) -> "SnapshotStore":
        """First m records (sample-index order), sharing the metadata."""
        return SnapshotStore(self.n, self.depth, self.seed, self.state_label,
                             self.records[:m])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(
                f"SHADOWSNAP v1 | n={self.n} L={self.depth} seed={self.seed} "
                f"state={self.state_label} samples={len(self.records)}\n"
            )
            for rec in self.records:
                gens = ";".join(str(PauliString(self.n, x, z, p)) for x, z, p in rec.rows)
                fh.write(f"{rec.index}: {gens}\n")

    @classmethod
    def load(cls, path) -> "SnapshotStore":
        with open(path) as fh:
            header = fh.readline().rstrip("\n")
            meta = _parse_snapshot_header(header)
            store = cls(meta["n"], meta["L"], meta["seed"], meta["state"])
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    idx_part, gen_part = line.split(":", 1)
                    index = int(idx_part)
                except ValueError as exc:
                    raise SnapshotFormatError(f"bad snapshot line {line!r}") from exc
                gens = gen_part.strip().split(";")
                if len(gens) != meta["n"]:
                    raise SnapshotFormatError(
                        f"snapshot {index}: expected {meta['n']} generators, got {len(gens)}"
                    )
                rows = []
                for g in gens:
                    g = g.strip()
                    if not g or g[0] not in "+-":
                        raise SnapshotFormatError(f"generator missing sign: {g!r}")
                    p = PauliString.from_label(g, n=meta["n"])
                    rows.append((p.x, p.z, p.phase))
                store.append(SnapshotRecord(index, meta["n"], rows))
        if len(store) != meta["samples"]:
            raise SnapshotFormatError(
                f"header promises {meta['samples']} snapshots, file holds {len(store)}"
            )
        return store

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.n}|{self.depth}|{self.seed}|{self.state_label}".encode())
        for rec in self.records:
            h.update(repr(rec.rows).encode())
        return h.hexdigest()[:16]


def _parse_snapshot_header(header: str) -> dict:
    if not header.startswith("SHADOWSNAP v1 |"):
        raise SnapshotFormatError(f"bad snapshot header {header!r}")
    meta = {}
    for tok in header.split("|", 1)[1].split():
        key, _, val = tok.partition("=")
        if not val:
            raise SnapshotFormatError(f"bad header token {tok!r}")
        meta[key] = val
    try:
        return {
            "n": int(meta["n"]),
            "L": int(meta["L"]),
            "seed": int(meta["seed"]),
            "state": meta["state"],
            "samples": int(meta["samples"]),
        }
    except (KeyError, ValueError) as exc:
        raise SnapshotFormatError(f"incomplete snapshot header {header!r}") from exc


def _sample_rng(seed: int, sample_index: int) -> np.random.Generator:
    """Counter-based stream: reproducible for any parallel schedule."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(sample_index,)))
    )


def _draw_circuit(spec: CircuitSpec, rng: np.random.Generator):
    gates = []
    if spec.depth == 0:
        for q in range(spec.n):
            gates.append(sample_clifford_1q(rng).at(q))
        return gates
    for layer in range(1, spec.depth + 1):
        for a, b in spec.layer_pairs(layer):
            gates.append(sample_clifford_2q(rng).at(a, b))
    return gates


def run_protocol(
    state: StabilizerState,
    circuit: CircuitSpec,
    samples: int,
    seed: int | None = None,
    state_label: str = "custom",
) -> SnapshotStore:
    """Run the randomized-measurement protocol and collect snapshot states.

    Per sample: draw fresh gates for every layer, evolve a copy of `state`,
    measure all qubits in the Z basis, then conjugate the outcome tableau
    {(-1)^{b_i} Z_i} backwards through the circuit to obtain the snapshot.
    """
    if state.n != circuit.n:
        raise ValueError(f"state has n={state.n}, circuit n={circuit.n}")
    root_seed = circuit.seed if seed is None else seed
    store = SnapshotStore(circuit.n, circuit.depth, root_seed, state_label)
    for m in range(samples):
        rng = _sample_rng(root_seed, m)
        gates = _draw_circuit(circuit, rng)
        work = state.copy()
        for g in gates:
            work.apply_gate(g)
        bits = work.measure_all(rng)
        snap = StabilizerState.computational_basis(circuit.n, bits)
        for g in reversed(gates):
            snap.apply_gate(g.inverse())
        store.append(SnapshotRecord(m, circuit.n, snap.generator_rows()))
    return store


def pauli_expectation(state, pauli: PauliString) -> int:
    """<P> in {-1, 0, +1} for a StabilizerState or SnapshotRecord."""
    return state.expectation(pauli)


# ---------------------------------------------------------------------------
# stabilizer state -> Pauli-basis MPS (generator fusion)
# ---------------------------------------------------------------------------

def _pauli_fusion_tensor() -> np.ndarray:
    """V[c, a, b] = i^gamma if letter_a letter_b = i^gamma letter_c, else 0."""
    bits = [(0, 0), (1, 0), (1, 1), (0, 1)]  # I, X, Y, Z -> (x, z)
    v = np.zeros((4, 4, 4), dtype=complex)
    for a, (xa, za) in enumerate(bits):
        for b, (xb, zb) in enumerate(bits):
            xc, zc = xa ^ xb, za ^ zb
            c = _letter(xc, zc)
            v[c, a, b] = 1j ** _gamma(xa, za, xb, zb)
    return v


_FUSION_V = _pauli_fusion_tensor()


def _extent(support_mask: int, n: int) -> tuple[int, int]:
    """Shortest contiguous arc (start, length) containing the support.

    Ties between equally long arcs are broken by the smaller start index.
    """
    sites = [i for i in range(n) if (support_mask >> i) & 1]
    if not sites:
        raise ValueError("identity generator has no extent")
    if len(sites) == n:
        return 0, n
    best = None
    k = len(sites)
    for t in range(k):
        # gap after sites[t] (cyclically): candidate arc starts after the gap
        cur, nxt = sites[t], sites[(t + 1) % k]
        gap = (nxt - cur - 1) % n
        length = n - gap
        start = nxt
        if best is None or length < best[1] or (length == best[1] and start < best[0]):
            best = (start, length)
    return best


def stabilizer_to_pauli_mps(state, extent_cap: int = 12) -> PauliBasisMPS:
    """Convert a pure stabilizer state into its Pauli-basis MPS.

    Components follow the integer convention rho = 2^-n sum_P c_P P with
    c_P in {-1, 0, +1}: the component of P equals the tableau expectation
    Tr(P rho).  Each generator contributes a bond-2 projector chain over its
    extent; overlapping chains are fused site by site along the physical leg
    with the Pauli fusion tensor, in ascending generator order.

    Raises ExtentCapError when any generator extent exceeds `extent_cap`
    (deep-circuit snapshots carry too much operator entanglement).
    """
    if isinstance(state, StabilizerState):
        rows = state.generator_rows()
        n = state.n
    elif isinstance(state, SnapshotRecord):
        rows = state.rows
        n = state.n
    else:
        rows = [(g.x, g.z, g.phase) for g in state]
        n = rows and state[0].n
    extents = []
    for gi, (x, z, p) in enumerate(rows):
        start, length = _extent(x | z, n)
        if length > extent_cap:
            raise ExtentCapError(
                f"generator {gi}: extent {length} exceeds cap {extent_cap}; "
                "operator entanglement too large"
            )
        extents.append((start, length))

    site_tensors = []
    for j in range(n):
        fused = np.zeros((4, 1, 1), dtype=complex)
        fused[0, 0, 0] = 1.0
        for gi, (x, z, p) in enumerate(rows):
            start, length = extents[gi]
            pos = (j - start) % n
            if pos >= length:
                continue
            letter = _letter((x >> j) & 1, (z >> j) & 1)
            first, last = pos == 0, pos == length - 1
            din = 1 if first else 2
            dout = 1 if last else 2
            chain = np.zeros((4, din, dout), dtype=complex)
            # exclusion branch carries the identity letter
            chain[0, 0, 0] = 1.0
            amp = (1j ** p) if first else 1.0
            chain[letter, din - 1, dout - 1] = amp
            fused = np.einsum("cab,aLR,bMS->cLMRS", _FUSION_V, fused, chain).reshape(
                4, fused.shape[1] * din, fused.shape[2] * dout
            )
        site_tensors.append(fused)
    return PauliBasisMPS(site_tensors)


# ---------------------------------------------------------------------------
# stabilizer-state files (custom prepared states)
# ---------------------------------------------------------------------------

def save_stabilizer_state(state: StabilizerState, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"STABSTATE v1 | n={state.n}\n")
        for g in state.generators:
            fh.write(str(g) + "\n")


def load_stabilizer_state(path) -> StabilizerState:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("STABSTATE v1 |"):
            raise SnapshotFormatError(f"bad state header {header!r}")
        try:
            n = int(header.split("n=", 1)[1])
        except (IndexError, ValueError) as exc:
            raise SnapshotFormatError(f"bad state header {header!r}") from exc
        gens = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line[0] not in "+-":
                raise SnapshotFormatError(f"generator missing sign: {line!r}")
            gens.append(PauliString.from_label(line, n=n))
    if len(gens) != n:
        raise SnapshotFormatError(f"expected {n} generators, got {len(gens)}")
    return StabilizerState.from_generators(gens)
