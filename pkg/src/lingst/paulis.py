"""Exact n-qubit Pauli group and stabilizer arithmetic in symplectic form.

A Pauli operator is stored as two bit-packed integers (x, z) plus an i-power:

    operator = i**phase * tensor_j sigma(x_j, z_j)

where sigma(0,0)=I, sigma(1,0)=X, sigma(1,1)=Y, sigma(0,1)=Z, and bit j of
x / z refers to qubit j.  With this convention a Hermitian Pauli always has
an even phase (sign +1 for phase 0, -1 for phase 2), and products such as
X*Z = -iY carry odd phases.  All phase arithmetic is exact mod 4; bit-packed
integers give word-parallel symplectic inner products via int.bit_count().
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

from .errors import DimensionError, PhaseError

_XZ_TO_CHAR = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_CHAR_TO_XZ = {v: k for k, v in _XZ_TO_CHAR.items()}
_PHASE_PREFIX = {0: "+", 1: "+i", 2: "-", 3: "-i"}


@dataclass(frozen=True, slots=True)
class PauliString:
    """Immutable n-qubit Pauli with exact phase tracking."""

    n: int
    x: int = 0
    z: int = 0
    phase: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise DimensionError(f"negative qubit count {self.n}")
        mask = (1 << self.n) - 1
        if self.x & ~mask or self.z & ~mask:
            raise DimensionError("x/z bits outside the declared qubit count")
        object.__setattr__(self, "phase", self.phase & 3)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0, 0)

    @classmethod
    def from_label(cls, label: str, n: int | None = None) -> "PauliString":
        """Parse e.g. "XIZY", "+XIZY", "-IZ", "+iXY".  Qubit 0 is the leftmost letter."""
        s = label.strip()
        phase = 0
        for prefix, ph in (("+i", 1), ("-i", 3), ("+", 0), ("-", 2)):
            if s.startswith(prefix):
                phase = ph
                s = s[len(prefix):]
                break
        if n is not None and len(s) != n:
            raise DimensionError(f"label {label!r} has {len(s)} qubits, expected {n}")
        x = z = 0
        for j, ch in enumerate(s):
            try:
                xj, zj = _CHAR_TO_XZ[ch]
            except KeyError:
                raise ValueError(f"invalid Pauli character {ch!r} in {label!r}") from None
            x |= xj << j
            z |= zj << j
        return cls(len(s), x, z, phase)

    def to_label(self, with_sign: bool = True) -> str:
        body = "".join(
            _XZ_TO_CHAR[(self.x >> j) & 1, (self.z >> j) & 1] for j in range(self.n)
        )
        return (_PHASE_PREFIX[self.phase] if with_sign else "") + body

    @property
    def weight(self) -> int:
        return (self.x | self.z).bit_count()

    @property
    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    @property
    def is_hermitian(self) -> bool:
        return self.phase % 2 == 0

    @property
    def sign(self) -> int:
        """+1 or -1 for a Hermitian Pauli."""
        if not self.is_hermitian:
            raise PhaseError(f"{self.to_label()} carries an odd i-power")
        return 1 if self.phase == 0 else -1

    @property
    def is_z_type(self) -> bool:
        """True when the operator is a tensor of I and Z only (any sign)."""
        return self.x == 0

    def unsigned(self) -> "PauliString":
        return PauliString(self.n, self.x, self.z, 0)

    def y_count(self) -> int:
        return (self.x & self.z).bit_count()

    def sort_key(self) -> str:
        """Canonical ordering key: lexicographic over per-qubit symbols, I<X<Y<Z."""
        return self.to_label(with_sign=False)

    def __mul__(self, other: "PauliString") -> "PauliString":
        return pauli_mul(self, other)

    def __repr__(self) -> str:  # pragma: no cover
        return f"PauliString({self.to_label()!r})"


def _mul_bits(xa: int, za: int, pa: int, xb: int, zb: int, pb: int):
    """Product of two canonical-form Paulis on raw bits; returns (x, z, phase mod 4)."""
    x = xa ^ xb
    z = za ^ zb
    phase = (
        pa
        + pb
        + (xa & za).bit_count()
        + (xb & zb).bit_count()
        - (x & z).bit_count()
        + 2 * (za & xb).bit_count()
    ) % 4
    return x, z, phase


def pauli_mul(a: PauliString, b: PauliString) -> PauliString:
    """Exact product a*b with phase tracked mod 4."""
    if a.n != b.n:
        raise DimensionError(f"qubit counts differ: {a.n} vs {b.n}")
    x, z, phase = _mul_bits(a.x, a.z, a.phase, b.x, b.z, b.phase)
    return PauliString(a.n, x, z, phase)


def commutes(a: PauliString, b: PauliString) -> bool:
    """True iff the symplectic inner product of a and b vanishes mod 2."""
    if a.n != b.n:
        raise DimensionError(f"qubit counts differ: {a.n} vs {b.n}")
    return ((a.x & b.z).bit_count() + (a.z & b.x).bit_count()) % 2 == 0


@dataclass(frozen=True, slots=True)
class CliffordTableau:
    """Clifford unitary U represented by the signed images U X_j U^dag, U Z_j U^dag."""

    n: int
    xout: tuple[PauliString, ...]
    zout: tuple[PauliString, ...]

    @classmethod
    def identity(cls, n: int) -> "CliffordTableau":
        xs = tuple(PauliString(n, 1 << j, 0, 0) for j in range(n))
        zs = tuple(PauliString(n, 0, 1 << j, 0) for j in range(n))
        return cls(n, xs, zs)

    def conjugate(self, p: PauliString) -> PauliString:
        """U p U^dag, phase-exact.

        Decomposes p = i^(phase + #Y) * prod_j X_j^{x_j} * prod_j Z_j^{z_j} and
        multiplies the stored images.
        """
        if p.n != self.n:
            raise DimensionError(f"qubit counts differ: {p.n} vs {self.n}")
        x = z = 0
        phase = (p.phase + p.y_count()) % 4
        rest = p.x
        while rest:
            j = (rest & -rest).bit_length() - 1
            img = self.xout[j]
            x, z, phase = _mul_bits(x, z, phase, img.x, img.z, img.phase)
            rest &= rest - 1
        rest = p.z
        while rest:
            j = (rest & -rest).bit_length() - 1
            img = self.zout[j]
            x, z, phase = _mul_bits(x, z, phase, img.x, img.z, img.phase)
            rest &= rest - 1
        return PauliString(self.n, x, z, phase)

    def compose(self, other: "CliffordTableau") -> "CliffordTableau":
        """Tableau of U_self @ U_other (conjugation applies other first)."""
        if other.n != self.n:
            raise DimensionError(f"qubit counts differ: {other.n} vs {self.n}")
        xs = tuple(self.conjugate(p) for p in other.xout)
        zs = tuple(self.conjugate(p) for p in other.zout)
        return CliffordTableau(self.n, xs, zs)

    def inverse(self) -> "CliffordTableau":
        """Tableau of U^dag via the symplectic inverse plus a sign fix-up."""
        n = self.n
        # Bit matrix M over GF(2): column j = (x|z<<n) bits of the j-th image,
        # columns ordered [X images..., Z images...].  M preserves the form
        # J = [[0,I],[I,0]], so M^-1 = J M^T J and the preimage of basis
        # vector e_t has bit r equal to M_{J(t), J(r)}.
        cols = [(p.x | (p.z << n)) for p in self.xout] + [
            (p.x | (p.z << n)) for p in self.zout
        ]
        mask = (1 << n) - 1

        def preimage_bits(t: int) -> int:
            jt = (t + n) % (2 * n)
            out = 0
            for r in range(2 * n):
                jr = (r + n) % (2 * n)
                out |= ((cols[jr] >> jt) & 1) << r
            return out

        xs = []
        zs = []
        for j in range(n):
            for is_z, store in ((0, xs), (1, zs)):
                v = preimage_bits(j + n if is_z else j)
                cand = PauliString(n, v & mask, v >> n, 0)
                # forward image of the candidate must be +-(X_j or Z_j)
                img = self.conjugate(cand)
                if img.x != (0 if is_z else 1 << j) or img.z != (
                    (1 << j) if is_z else 0
                ):
                    raise AssertionError("tableau is not symplectic")
                store.append(PauliString(n, cand.x, cand.z, (-img.phase) % 4))
        return CliffordTableau(n, tuple(xs), tuple(zs))


def conjugate(t: CliffordTableau, p: PauliString) -> PauliString:
    """U p U^dag for Hermitian p; the result's sign is gamma(U, p) when p is unsigned."""
    if not p.is_hermitian:
        raise PhaseError("conjugate expects a Hermitian Pauli")
    return t.conjugate(p)


@dataclass(frozen=True)
class StabilizerState:
    """Pure stabilizer state given by n sign-tracked commuting generators."""

    n: int
    gens: tuple[PauliString, ...]
    _echelon: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if len(self.gens) != self.n:
            raise DimensionError(f"need {self.n} generators, got {len(self.gens)}")
        object.__setattr__(self, "_echelon", self._build_echelon())

    @classmethod
    def zero(cls, n: int) -> "StabilizerState":
        """The all-zeros computational basis state, stabilized by +Z_j."""
        return cls(n, tuple(PauliString(n, 0, 1 << j, 0) for j in range(n)))

    def _build_echelon(self):
        # Row echelon over the 2n-bit symplectic vectors, keeping exact Pauli
        # products so that membership queries recover signs.
        n = self.n
        basis: list[tuple[int, PauliString]] = []  # (bits, product), sorted by pivot
        for g in self.gens:
            bits = g.x | (g.z << n)
            acc = g
            for pbits, pp in basis:
                pivot = 1 << (pbits.bit_length() - 1)
                if bits & pivot:
                    bits ^= pbits
                    acc = pauli_mul(acc, pp)
            if bits:
                basis.append((bits, acc))
                basis.sort(key=lambda t: -t[0].bit_length())
        return tuple(basis)

    def apply(self, t: CliffordTableau) -> "StabilizerState":
        """New state with every generator conjugated by t."""
        if t.n != self.n:
            raise DimensionError(f"qubit counts differ: {t.n} vs {self.n}")
        return StabilizerState(self.n, tuple(t.conjugate(g) for g in self.gens))

    def expectation(self, p: PauliString) -> int:
        """<psi|p|psi> in {-1, 0, +1}; equals stabilizer-group membership sign."""
        if p.n != self.n:
            raise DimensionError(f"qubit counts differ: {p.n} vs {self.n}")
        if not p.is_hermitian:
            raise PhaseError("expectation of a non-Hermitian Pauli is not a sign")
        if p.is_identity:
            return 1 if p.phase == 0 else -1
        n = self.n
        bits = p.x | (p.z << n)
        accx = accz = accp = 0
        for pbits, pp in self._echelon:
            pivot = 1 << (pbits.bit_length() - 1)
            if bits & pivot:
                bits ^= pbits
                accx, accz, accp = _mul_bits(accx, accz, accp, pp.x, pp.z, pp.phase)
        if bits:
            return 0
        return 1 if accp == p.phase else -1


def stabilizer_sign(state: StabilizerState, p: PauliString) -> int:
    """+1/-1 if +-p lies in the stabilizer group of state, else 0."""
    return state.expectation(p)


def apply_layer(state: StabilizerState, t: CliffordTableau) -> StabilizerState:
    return state.apply(t)


def pauli_product(factors: Iterable[PauliString]) -> PauliString:
    factors = list(factors)
    if not factors:
        raise ValueError("empty product")
    return reduce(pauli_mul, factors)


def all_paulis(n: int, include_identity: bool = False) -> Sequence[PauliString]:
    """All unsigned n-qubit Paulis, index-ordered by (x << n) | z."""
    out = []
    for idx in range(4**n):
        x = idx >> n
        z = idx & ((1 << n) - 1)
        if not include_identity and x == 0 and z == 0:
            continue
        out.append(PauliString(n, x, z, 0))
    return out
