"""
GF(2) Pauli-frame algebra.

Per-qubit corrections are tracked as exponent pairs (a, b) of X^a Z^b, either
as concrete bits (PauliMask) or as multilinear GF(2) polynomials in
party-tagged measurement-outcome variables (SymbolicMask / KeyPoly). Clifford
conjugation acts linearly on the 2n-bit exponent vector (CliffordTableau); a
T layer leaves exponents fixed but emits a pending phase-correction key per
touched qubit. Global phases are discarded throughout: masks are only ever
applied as physical corrections, where phases are unobservable.

Key update rules, pushed left-to-right through a gate:

    H:      (a, b) -> (b, a)
    P, P†:  (a, b) -> (a, a xor b)        (sign dropped)
    X, Z:   identity
    CNOT:   (a1, b1, a2, b2) -> (a1, b1 xor b2, a1 xor a2, b2)
    T:      mask unchanged, pending key g = a on each T-layer qubit
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .circuits import CLIFFORD_KINDS, Gate, GateKind, ValidationError


class Owner(Enum):
    ALICE = "alice"
    BOB = "bob"
    LOCAL = "local"


@dataclass(frozen=True)
class OutcomeVar:
    """A named measurement-outcome bit tagged with the party that knows it."""

    name: str
    owner: Owner = Owner.LOCAL


Monomial = frozenset  # frozenset[OutcomeVar]


def _mono_key(m: Monomial) -> tuple[str, ...]:
    return tuple(sorted(v.name for v in m))


@dataclass(frozen=True)
class KeyPoly:
    """Multilinear polynomial over GF(2) in outcome variables.

    Monomials are nonempty sets of distinct variables (x^2 = x); the empty
    monomial is the separate constant bit. Stored sets are canonical, so
    equality is syntactic.
    """

    monomials: frozenset = frozenset()
    constant: int = 0

    @staticmethod
    def zero() -> "KeyPoly":
        return KeyPoly()

    @staticmethod
    def one() -> "KeyPoly":
        return KeyPoly(constant=1)

    @staticmethod
    def of(var: OutcomeVar) -> "KeyPoly":
        return KeyPoly(frozenset({frozenset({var})}))

    @staticmethod
    def from_bit(bit: int) -> "KeyPoly":
        return KeyPoly(constant=bit & 1)

    @property
    def is_zero(self) -> bool:
        return not self.monomials and self.constant == 0

    @property
    def degree(self) -> int:
        return max((len(m) for m in self.monomials), default=0)

    def variables(self) -> set[OutcomeVar]:
        out: set[OutcomeVar] = set()
        for m in self.monomials:
            out |= m
        return out

    def __xor__(self, other: "KeyPoly") -> "KeyPoly":
        return KeyPoly(self.monomials ^ other.monomials, self.constant ^ other.constant)

    def __mul__(self, other: "KeyPoly") -> "KeyPoly":
        parity: dict[Monomial, int] = {}

        def flip(m: Monomial) -> None:
            parity[m] = parity.get(m, 0) ^ 1

        for m1 in self.monomials:
            for m2 in other.monomials:
                flip(m1 | m2)
        if other.constant:
            for m1 in self.monomials:
                flip(m1)
        if self.constant:
            for m2 in other.monomials:
                flip(m2)
        monos = frozenset(m for m, c in parity.items() if c)
        return KeyPoly(monos, self.constant & other.constant)

    def evaluate(self, assignment: Mapping[str, int]) -> int:
        return poly_eval(self, assignment)

    def __str__(self) -> str:
        if self.is_zero:
            return "0"
        parts = ["*".join(_mono_key(m)) for m in sorted(self.monomials, key=_mono_key)]
        if self.constant:
            parts.append("1")
        return " ^ ".join(parts)


def poly_eval(p: KeyPoly, assignment: Mapping[str, int]) -> int:
    """Evaluate at a bit assignment keyed by variable name."""
    acc = p.constant
    for m in p.monomials:
        term = 1
        for v in m:
            if v.name not in assignment:
                raise ValidationError(f"unbound outcome variable {v.name!r}")
            term &= assignment[v.name] & 1
        acc ^= term
    return acc


def cross_terms(p: KeyPoly) -> list[Monomial]:
    """Monomials of degree >= 2 whose variables span more than one owner."""
    out = [m for m in p.monomials if len(m) >= 2 and len({v.owner for v in m}) >= 2]
    return sorted(out, key=_mono_key)


@dataclass(frozen=True)
class PauliMask:
    """Concrete X/Z exponent bits per qubit; phases not represented."""

    a: tuple[int, ...]
    b: tuple[int, ...]

    @staticmethod
    def zero(n: int) -> "PauliMask":
        return PauliMask((0,) * n, (0,) * n)

    @property
    def n(self) -> int:
        return len(self.a)

    def __xor__(self, other: "PauliMask") -> "PauliMask":
        return PauliMask(tuple(x ^ y for x, y in zip(self.a, other.a)),
                         tuple(x ^ y for x, y in zip(self.b, other.b)))


@dataclass(frozen=True)
class SymbolicMask:
    """Per-qubit X/Z exponent polynomials."""

    a: tuple[KeyPoly, ...]
    b: tuple[KeyPoly, ...]

    @staticmethod
    def zero(n: int) -> "SymbolicMask":
        return SymbolicMask((KeyPoly.zero(),) * n, (KeyPoly.zero(),) * n)

    @property
    def n(self) -> int:
        return len(self.a)

    def evaluate(self, assignment: Mapping[str, int]) -> PauliMask:
        return PauliMask(tuple(poly_eval(k, assignment) for k in self.a),
                         tuple(poly_eval(k, assignment) for k in self.b))

    def xor_at(self, qubit: int, da: KeyPoly, db: KeyPoly) -> "SymbolicMask":
        a = list(self.a)
        b = list(self.b)
        a[qubit] = a[qubit] ^ da
        b[qubit] = b[qubit] ^ db
        return SymbolicMask(tuple(a), tuple(b))


class CliffordTableau:
    """GF(2)-linear action of a Clifford gate list on mask exponent vectors.

    Exponent vectors are laid out (a_0..a_{n-1}, b_0..b_{n-1}); column j of
    the matrix is the image of the X_j generator, column n+j of Z_j.
    """

    def __init__(self, n: int, matrix: np.ndarray):
        self.n = n
        self.matrix = matrix.astype(np.uint8)

    @staticmethod
    def identity(n: int) -> "CliffordTableau":
        return CliffordTableau(n, np.eye(2 * n, dtype=np.uint8))

    def image_of_x(self, j: int) -> PauliMask:
        col = self.matrix[:, j]
        return PauliMask(tuple(int(v) for v in col[: self.n]), tuple(int(v) for v in col[self.n:]))

    def image_of_z(self, j: int) -> PauliMask:
        col = self.matrix[:, self.n + j]
        return PauliMask(tuple(int(v) for v in col[: self.n]), tuple(int(v) for v in col[self.n:]))

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, CliffordTableau) and self.n == other.n
                and np.array_equal(self.matrix, other.matrix))

    def __matmul__(self, other: "CliffordTableau") -> "CliffordTableau":
        return CliffordTableau(self.n, (self.matrix @ other.matrix) % 2)


def _gate_matrix_gf2(g: Gate, n: int) -> np.ndarray:
    m = np.eye(2 * n, dtype=np.uint8)
    if g.kind is GateKind.H:
        (q,) = g.targets
        m[[q, n + q]] = m[[n + q, q]]
    elif g.kind in (GateKind.P, GateKind.PDG):
        (q,) = g.targets
        m[n + q, q] ^= 1
    elif g.kind is GateKind.CNOT:
        c, tgt = g.targets
        m[tgt, c] ^= 1
        m[n + c, n + tgt] ^= 1
    elif g.kind in (GateKind.X, GateKind.Z):
        pass
    else:
        raise ValidationError(f"non-Clifford gate {g.kind.value} in Clifford stage")
    return m


def tableau_from_stage(clifford: Iterable[Gate], n: int) -> CliffordTableau:
    """Compose per-gate update rules in gate order."""
    mat = np.eye(2 * n, dtype=np.uint8)
    for g in clifford:
        mat = (_gate_matrix_gf2(g, n) @ mat) % 2
    return CliffordTableau(n, mat)


def apply_tableau(tab: CliffordTableau, mask: PauliMask | SymbolicMask):
    """Apply the linear exponent map; coefficient-wise on symbolic masks."""
    if mask.n != tab.n:
        raise ValidationError(f"mask on {mask.n} qubits, tableau on {tab.n}")
    mat = tab.matrix
    if isinstance(mask, PauliMask):
        vec = np.array(mask.a + mask.b, dtype=np.uint8)
        out = (mat @ vec) % 2
        return PauliMask(tuple(int(v) for v in out[: tab.n]), tuple(int(v) for v in out[tab.n:]))
    polys = list(mask.a) + list(mask.b)
    out_polys = []
    for row in range(2 * tab.n):
        acc = KeyPoly.zero()
        for col in range(2 * tab.n):
            if mat[row, col]:
                acc = acc ^ polys[col]
        out_polys.append(acc)
    return SymbolicMask(tuple(out_polys[: tab.n]), tuple(out_polys[tab.n:]))


def commute_through_t_layer(mask: PauliMask | SymbolicMask, t_layer: Iterable[int]):
    """Push a mask through a T layer.

    The exponents are unchanged; each T-layer qubit acquires a pending
    phase-correction key equal to its current X exponent.
    """
    pending = {q: mask.a[q] for q in sorted(t_layer)}
    return mask, pending


def commute_through_pdag(mask: PauliMask | SymbolicMask, qubit: int,
                         condition: KeyPoly | int | None = None):
    """Push a mask through P (or P†, identical with phases dropped) on one qubit.

    Unconditional: b += a. With a condition c (bit or polynomial), the gate is
    applied only when c = 1, so b += a*c; a symbolic condition owned by the
    other party is what raises key degree and creates cross terms.
    """
    if isinstance(mask, PauliMask):
        if condition is None:
            c = 1
        elif isinstance(condition, KeyPoly):
            raise ValidationError("symbolic condition requires a symbolic mask")
        else:
            c = condition & 1
        b = list(mask.b)
        b[qubit] ^= mask.a[qubit] & c
        return PauliMask(mask.a, tuple(b))
    if condition is None:
        cond = KeyPoly.one()
    elif isinstance(condition, KeyPoly):
        cond = condition
    else:
        cond = KeyPoly.from_bit(condition)
    return mask.xor_at(qubit, KeyPoly.zero(), mask.a[qubit] * cond)
