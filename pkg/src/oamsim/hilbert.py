"""Mode bookkeeping and linear algebra over the polarization x OAM x path space.

Basis modes are enumerated path-major, then H before V, then OAM ascending.
States and operators are immutable numpy-backed values; comparisons that
should ignore an overall phase go through :func:`fidelity_up_to_global_phase`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

ATOL = 1e-12

#: OAM values carrying the four-dimensional qudit. Logical index k = l + 2.
LOGICAL_OAM = (-2, -1, 0, 1)
DEFAULT_WINDOW = (-6, 5)


class LeakageError(ValueError):
    """Amplitude would leave the truncated OAM window."""


class BasisMismatchError(ValueError):
    pass


class Polarization(str, Enum):
    H = "H"
    V = "V"


@dataclass(frozen=True, order=True)
class ModeLabel:
    polarization: Polarization
    oam: int
    path: int = 0

    def __str__(self) -> str:
        return f"{self.polarization.value}|{self.oam}>@{self.path}"


def logical_index(oam: int) -> int:
    return oam - LOGICAL_OAM[0]


def oam_of_logical(k: int) -> int:
    return k + LOGICAL_OAM[0]


@dataclass(frozen=True)
class BasisSpec:
    """Product space of an OAM window, ``paths`` ports and (optionally) polarization.

    Without polarization every mode carries ``H`` so that labels from a
    polarization-free basis embed directly into a polarized one.
    """

    oam_window: tuple[int, int] = DEFAULT_WINDOW
    paths: int = 1
    include_polarization: bool = True

    def __post_init__(self):
        lo, hi = self.oam_window
        object.__setattr__(self, "oam_window", (int(lo), int(hi)))
        if lo > hi:
            raise ValueError(f"empty OAM window {self.oam_window}")
        if self.paths < 1:
            raise ValueError("basis needs at least one path")

    @property
    def polarizations(self) -> tuple[Polarization, ...]:
        if self.include_polarization:
            return (Polarization.H, Polarization.V)
        return (Polarization.H,)

    @property
    def oam_values(self) -> range:
        return range(self.oam_window[0], self.oam_window[1] + 1)

    @cached_property
    def labels(self) -> tuple[ModeLabel, ...]:
        return tuple(
            ModeLabel(pol, ell, path)
            for path in range(self.paths)
            for pol in self.polarizations
            for ell in self.oam_values
        )

    @cached_property
    def index_map(self) -> dict[ModeLabel, int]:
        return {label: i for i, label in enumerate(self.labels)}

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label: ModeLabel) -> int:
        try:
            return self.index_map[label]
        except KeyError:
            raise LeakageError(f"mode {label} is outside basis {self}") from None

    def contains(self, label: ModeLabel) -> bool:
        return label in self.index_map

    def in_window(self, oam: int) -> bool:
        return self.oam_window[0] <= oam <= self.oam_window[1]

    def logical_modes(self, polarization: Polarization = Polarization.H, path: int = 0) -> list[ModeLabel]:
        return [ModeLabel(polarization, ell, path) for ell in LOGICAL_OAM]


#: The bare four-dimensional qudit: one path, no polarization.
LOGICAL_BASIS = BasisSpec(oam_window=(LOGICAL_OAM[0], LOGICAL_OAM[-1]), paths=1, include_polarization=False)


def enumerate_basis(spec: BasisSpec) -> list[ModeLabel]:
    return list(spec.labels)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PureState:
    basis: BasisSpec
    amplitudes: np.ndarray
    label: str = ""

    def __post_init__(self):
        amps = _frozen(self.amplitudes)
        if amps.shape != (self.basis.dim,):
            raise ValueError(f"expected {self.basis.dim} amplitudes, got shape {amps.shape}")
        object.__setattr__(self, "amplitudes", amps)
        if self.norm2 > 1 + 1e-9:
            raise ValueError(f"squared norm {self.norm2} exceeds 1")

    @classmethod
    def from_modes(cls, basis: BasisSpec, amplitudes: Mapping[ModeLabel, complex], label: str = "") -> "PureState":
        vec = np.zeros(basis.dim, dtype=complex)
        for mode, amp in amplitudes.items():
            vec[basis.index(mode)] += amp
        return cls(basis, vec, label)

    @classmethod
    def basis_state(cls, basis: BasisSpec, mode: ModeLabel, label: str = "") -> "PureState":
        return cls.from_modes(basis, {mode: 1.0}, label or f"|{mode.oam}>")

    @classmethod
    def from_oam(
        cls,
        coefficients: Sequence[complex],
        basis: BasisSpec = LOGICAL_BASIS,
        polarization: Polarization = Polarization.H,
        path: int = 0,
        label: str = "",
    ) -> "PureState":
        """State with ``coefficients`` on the logical OAM modes l = -2..1."""
        if len(coefficients) != len(LOGICAL_OAM):
            raise ValueError("need one coefficient per logical mode")
        modes = {ModeLabel(polarization, ell, path): c for ell, c in zip(LOGICAL_OAM, coefficients)}
        return cls.from_modes(basis, modes, label)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def is_normalized(self, tol: float = 1e-9) -> bool:
        return abs(self.norm2 - 1.0) <= tol

    def amplitude(self, mode: ModeLabel) -> complex:
        return complex(self.amplitudes[self.basis.index(mode)])

    def embed(self, basis: BasisSpec) -> "PureState":
        """Re-express in ``basis`` by label; fails if populated modes are missing."""
        if basis == self.basis:
            return self
        vec = np.zeros(basis.dim, dtype=complex)
        for mode, amp in zip(self.basis.labels, self.amplitudes):
            if abs(amp) <= ATOL:
                continue
            vec[basis.index(mode)] = amp
        return PureState(basis, vec, self.label)

    def restrict(self, modes: Sequence[ModeLabel]) -> np.ndarray:
        return np.array([self.amplitudes[self.basis.index(m)] for m in modes])

    def with_label(self, label: str) -> "PureState":
        return PureState(self.basis, self.amplitudes, label)

    def __repr__(self) -> str:
        return f"PureState({self.label or '?'}, dim={self.basis.dim})"


@dataclass(frozen=True, eq=False)
class OpticalOperator:
    """Dense matrix over a basis.

    ``leaky`` lists input columns whose physical image falls outside the OAM
    window; their matrix columns are a unitary completion only, so any state
    with amplitude there is rejected by :func:`apply`.
    """

    basis: BasisSpec
    matrix: np.ndarray
    lossless: bool = True
    leaky: frozenset[int] = field(default_factory=frozenset)
    name: str = ""

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(f"matrix shape {m.shape} does not match basis dim {self.basis.dim}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "leaky", frozenset(int(i) for i in self.leaky))
        if self.lossless:
            err = unitarity_error(m)
            if err > ATOL:
                raise ValueError(f"operator {self.name!r} tagged lossless but |M^dag M - I| = {err:.2e}")
        else:
            smax = np.linalg.norm(m, 2) if m.size else 0.0
            if smax > 1 + ATOL:
                raise ValueError(f"lossy operator {self.name!r} has singular value {smax} > 1")

    @classmethod
    def identity(cls, basis: BasisSpec) -> "OpticalOperator":
        return cls(basis, np.eye(basis.dim, dtype=complex), name="identity")

    def block(self, rows: Sequence[ModeLabel], cols: Sequence[ModeLabel] | None = None) -> np.ndarray:
        cols = rows if cols is None else cols
        ri = [self.basis.index(m) for m in rows]
        ci = [self.basis.index(m) for m in cols]
        return self.matrix[np.ix_(ri, ci)]

    @property
    def dagger(self) -> "OpticalOperator":
        return OpticalOperator(self.basis, self.matrix.conj().T, self.lossless, name=f"{self.name}^dag")

    def __repr__(self) -> str:
        kind = "unitary" if self.lossless else "lossy"
        return f"OpticalOperator({self.name or '?'}, dim={self.basis.dim}, {kind})"


def unitarity_error(matrix: np.ndarray) -> float:
    m = np.asarray(matrix)
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))) if m.size else 0.0


def embed_operator(
    matrix: np.ndarray,
    basis: BasisSpec,
    modes: Sequence[ModeLabel],
    name: str = "",
) -> OpticalOperator:
    """Operator acting as ``matrix`` on ``modes`` and as identity elsewhere."""
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (len(modes), len(modes)):
        raise ValueError("matrix size does not match number of modes")
    full = np.eye(basis.dim, dtype=complex)
    idx = [basis.index(m) for m in modes]
    full[np.ix_(idx, idx)] = matrix
    lossless = unitarity_error(matrix) <= ATOL
    return OpticalOperator(basis, full, lossless=lossless, name=name)


def _check_same_basis(*bases: BasisSpec) -> None:
    first = bases[0]
    for b in bases[1:]:
        if b != first:
            raise BasisMismatchError(f"basis mismatch: {first} vs {b}")


def apply(op: OpticalOperator, state: PureState) -> PureState:
    _check_same_basis(op.basis, state.basis)
    for j in op.leaky:
        if abs(state.amplitudes[j]) > ATOL:
            raise LeakageError(f"{op.name or 'operator'} maps populated mode {op.basis.labels[j]} out of window")
    return PureState(state.basis, op.matrix @ state.amplitudes, state.label)


def compose(ops: Sequence[OpticalOperator], name: str = "") -> OpticalOperator:
    """Compose operators given in application order (first applied first)."""
    if not ops:
        raise ValueError("compose needs at least one operator")
    _check_same_basis(*(op.basis for op in ops))
    acc = np.eye(ops[0].basis.dim, dtype=complex)
    leaky: set[int] = set()
    for op in ops:
        if op.leaky:
            rows = sorted(op.leaky)
            reaching = np.any(np.abs(acc[rows, :]) > ATOL, axis=0)
            leaky.update(np.flatnonzero(reaching).tolist())
        acc = op.matrix @ acc
    return OpticalOperator(
        ops[0].basis,
        acc,
        lossless=all(op.lossless for op in ops),
        leaky=frozenset(leaky),
        name=name or " -> ".join(op.name for op in ops if op.name),
    )


def fidelity_up_to_global_phase(U: OpticalOperator, V: OpticalOperator, subspace: Sequence[ModeLabel]) -> float:
    """|Tr(U^dag V)|^2 / d^2 over ``subspace``; 1 iff U = e^{i phi} V there."""
    _check_same_basis(U.basis, V.basis)
    if not subspace:
        raise ValueError("subspace must be non-empty")
    u = U.block(subspace)
    v = V.block(subspace)
    d = len(subspace)
    f = abs(np.trace(u.conj().T @ v)) ** 2 / d**2
    return float(min(max(f, 0.0), 1.0))


def project(state: PureState, analyzer: PureState) -> float:
    """Born probability |<analyzer|state>|^2."""
    _check_same_basis(state.basis, analyzer.basis)
    if not analyzer.is_normalized():
        raise ValueError(f"analyzer {analyzer.label!r} is not normalized (norm^2 = {analyzer.norm2})")
    return float(abs(np.vdot(analyzer.amplitudes, state.amplitudes)) ** 2)






def support(state: PureState, tol: float = ATOL) -> list[ModeLabel]:
    return [m for m, a in zip(state.basis.labels, state.amplitudes) if abs(a) > tol]

