"""Operator factories for the optical elements of the OAM gate setups.

Conventions:

* Dove prism at angle ``alpha``: ``|l> -> exp(2i l alpha) |-l>``; two prisms
  therefore leave ``l`` unchanged and imprint ``exp(2i l (alpha_1 - alpha_2))``.
* Dove prisms and mirrors do not touch polarization.
* ``HWP(theta) = R(theta) diag(1, -1) R(-theta)``, ``QWP(theta) = R(theta) diag(1, i) R(-theta)``.
* A PBS transmits H and reflects V between two ports. It never flips OAM;
  reflections that do are explicit :func:`mirror` stages.

OAM-changing elements are exact maps on the truncated window. Columns whose
image would leave the window are completed to keep the matrix unitary and
marked ``leaky``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Callable

import numpy as np

from .hilbert import (
    LOGICAL_OAM,
    BasisSpec,
    LeakageError,
    ModeLabel,
    OpticalOperator,
    Polarization,
    PureState,
    support,
)

TWO_PI = 2 * math.pi

DEFAULT_BASIS = BasisSpec(paths=2, include_polarization=True)


class ElementKind(str, Enum):
    SPP = "SPP"
    DOVE_PRISM = "DovePrism"
    MIRROR = "Mirror"
    HWP = "HWP"
    QWP = "QWP"
    PBS = "PBS"
    PHASE_SHIFTER = "PhaseShifter"
    SLM_PREP = "SLMPrep"
    SLM_PROJECT = "SLMProject"


_ANGLED = {ElementKind.DOVE_PRISM, ElementKind.HWP, ElementKind.QWP, ElementKind.PHASE_SHIFTER}


@dataclass(frozen=True)
class ElementSpec:
    """Serializable description of one element.

    ``value`` is the SPP step for SPP and an angle/phase in radians for
    DovePrism, HWP, QWP and PhaseShifter; it is unused otherwise.
    """

    kind: ElementKind
    path: int = 0
    value: float = 0.0
    path_b: int = 1
    label: str = ""

    def __post_init__(self):
        kind = ElementKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.path < 0:
            raise ValueError("path must be non-negative")
        if kind is ElementKind.SPP:
            if int(self.value) != self.value or self.value == 0:
                raise ValueError(f"SPP step must be a nonzero integer, got {self.value}")
            object.__setattr__(self, "value", int(self.value))
        elif kind in _ANGLED:
            object.__setattr__(self, "value", float(self.value) % TWO_PI)
        if kind is ElementKind.PBS and self.path_b == self.path:
            raise ValueError("PBS needs two distinct ports")

    @property
    def paths(self) -> tuple[int, ...]:
        if self.kind is ElementKind.PBS:
            return (self.path, self.path_b)
        return (self.path,)

    def describe(self) -> str:
        k = self.kind
        if k is ElementKind.SPP:
            body = f"SPP({self.value:+d})"
        elif k is ElementKind.PBS:
            body = f"PBS({self.path},{self.path_b})"
        elif k in _ANGLED:
            body = f"{k.value}({math.degrees(self.value):.4g} deg)"
        else:
            body = k.value
        where = "" if k is ElementKind.PBS else f"@{self.path}"
        return f"{self.label + ': ' if self.label else ''}{body}{where}"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["kind"] = self.kind.value
        if self.kind is not ElementKind.PBS:
            d.pop("path_b")
        if self.kind in (ElementKind.MIRROR, ElementKind.PBS):
            d.pop("value")
        if not self.label:
            d.pop("label")
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ElementSpec":
        return cls(**data)


def _oam_map(
    basis: BasisSpec,
    path: int,
    fn: Callable[[int], tuple[int, complex]],
    name: str,
) -> OpticalOperator:
    if path >= basis.paths:
        raise ValueError(f"{name}: port {path} missing from basis with {basis.paths} paths")
    m = np.zeros((basis.dim, basis.dim), dtype=complex)
    leaky: list[int] = []
    for label, j in basis.index_map.items():
        if label.path != path:
            m[j, j] = 1.0
    for pol in basis.polarizations:
        dangling = []
        reached = set()
        for ell in basis.oam_values:
            j = basis.index(ModeLabel(pol, ell, path))
            target, phase = fn(ell)
            if basis.in_window(target):
                m[basis.index(ModeLabel(pol, target, path)), j] = phase
                reached.add(target)
            else:
                dangling.append(j)
        unreached = [ell for ell in basis.oam_values if ell not in reached]
        for j, ell in zip(dangling, unreached):
            m[basis.index(ModeLabel(pol, ell, path)), j] = 1.0
        leaky.extend(dangling)
    return OpticalOperator(basis, m, leaky=frozenset(leaky), name=name)


def _polarization_map(basis: BasisSpec, path: int, jones: np.ndarray, name: str) -> OpticalOperator:
    if not basis.include_polarization:
        raise ValueError(f"{name} needs a basis with polarization")
    if path >= basis.paths:
        raise ValueError(f"{name}: port {path} missing from basis with {basis.paths} paths")
    m = np.eye(basis.dim, dtype=complex)
    for ell in basis.oam_values:
        idx = [basis.index(ModeLabel(pol, ell, path)) for pol in basis.polarizations]
        m[np.ix_(idx, idx)] = jones
    return OpticalOperator(basis, m, name=name)


def spp(k: int, path: int = 0, basis: BasisSpec = DEFAULT_BASIS) -> OpticalOperator:
    """Spiral phase plate adding ``k`` to the OAM on one port."""
    if k == 0 or int(k) != k:
        raise ValueError(f"SPP step must be a nonzero integer, got {k}")
    k = int(k)
    for ell in LOGICAL_OAM:
        if basis.in_window(ell) and not basis.in_window(ell + k):
            raise LeakageError(
                f"SPP({k:+d}) on path {path}: logical mode l={ell} -> {ell + k} leaves window {basis.oam_window}"
            )
    return _oam_map(basis, path, lambda ell: (ell + k, 1.0), f"SPP({k:+d})@{path}")


def dove_prism(alpha: float, path: int = 0, basis: BasisSpec = DEFAULT_BASIS) -> OpticalOperator:
    return _oam_map(
        basis,
        path,
        lambda ell: (-ell, np.exp(2j * ell * alpha)),
        f"DP({math.degrees(alpha):.4g} deg)@{path}",
    )


def mirror(path: int = 0, basis: BasisSpec = DEFAULT_BASIS) -> OpticalOperator:
    return _oam_map(basis, path, lambda ell: (-ell, 1.0), f"mirror@{path}")


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def hwp_jones(theta: float) -> np.ndarray:
    return rotation(theta) @ np.diag([1, -1]).astype(complex) @ rotation(-theta)


def qwp_jones(theta: float) -> np.ndarray:
    return rotation(theta) @ np.diag([1, 1j]) @ rotation(-theta)


def hwp(theta: float, path: int = 0, basis: BasisSpec = DEFAULT_BASIS) -> OpticalOperator:
    return _polarization_map(basis, path, hwp_jones(theta), f"HWP({math.degrees(theta):.4g} deg)@{path}")


def qwp(theta: float, path: int = 0, basis: BasisSpec = DEFAULT_BASIS) -> OpticalOperator:
    return _polarization_map(basis, path, qwp_jones(theta), f"QWP({math.degrees(theta):.4g} deg)@{path}")


def pbs(path_a: int = 0, path_b: int = 1, basis: BasisSpec = DEFAULT_BASIS) -> OpticalOperator:
    """Transmit H on each port, swap V between ``path_a`` and ``path_b``."""
    if not basis.include_polarization:
        raise ValueError("PBS needs a basis with polarization")
    if path_a == path_b:
        raise ValueError("PBS needs two distinct ports")
    for p in (path_a, path_b):
        if p >= basis.paths:
            raise ValueError(f"PBS: port {p} missing from basis with {basis.paths} paths")
    m = np.eye(basis.dim, dtype=complex)
    for ell in basis.oam_values:
        a = basis.index(ModeLabel(Polarization.V, ell, path_a))
        b = basis.index(ModeLabel(Polarization.V, ell, path_b))
        m[a, a] = m[b, b] = 0.0
        m[a, b] = m[b, a] = 1.0
    return OpticalOperator(basis, m, name=f"PBS({path_a},{path_b})")


def phase_shifter(phi: float, path: int = 0, basis: BasisSpec = DEFAULT_BASIS) -> OpticalOperator:
    if path >= basis.paths:
        raise ValueError(f"phase shifter: port {path} missing from basis with {basis.paths} paths")
    diag = np.array([np.exp(1j * phi) if m.path == path else 1.0 for m in basis.labels], dtype=complex)
    return OpticalOperator(basis, np.diag(diag), name=f"phase({phi:.4g})@{path}")


def _check_slm_state(state: PureState, role: str) -> None:
    if not state.is_normalized():
        raise ValueError(f"SLM {role} state must be normalized (norm^2 = {state.norm2})")
    occupied = support(state)
    if len({(m.polarization, m.path) for m in occupied}) > 1:
        raise ValueError(f"SLM {role} state must live on one path with fixed polarization")


def slm_prepare(target: PureState) -> PureState:
    """Ideal SLM1: the requested OAM state is synthesized exactly."""
    _check_slm_state(target, "preparation")
    return target


def slm_project(analyzer: PureState) -> PureState:
    """Ideal SLM2 plus single-mode fiber: returns the analyzer for :func:`hilbert.project`."""
    _check_slm_state(analyzer, "analyzer")
    return analyzer


def element_operator(spec: ElementSpec, basis: BasisSpec) -> OpticalOperator:
    for p in spec.paths:
        if p >= basis.paths:
            raise ValueError(f"{spec.describe()}: port {p} missing from basis with {basis.paths} paths")
    k = spec.kind
    if k is ElementKind.SPP:
        op = spp(int(spec.value), spec.path, basis)
    elif k is ElementKind.DOVE_PRISM:
        op = dove_prism(spec.value, spec.path, basis)
    elif k is ElementKind.MIRROR:
        op = mirror(spec.path, basis)
    elif k is ElementKind.HWP:
        op = hwp(spec.value, spec.path, basis)
    elif k is ElementKind.QWP:
        op = qwp(spec.value, spec.path, basis)
    elif k is ElementKind.PBS:
        op = pbs(spec.path, spec.path_b, basis)
    elif k is ElementKind.PHASE_SHIFTER:
        op = phase_shifter(spec.value, spec.path, basis)
    else:
        raise ValueError(f"{k.value} is a preparation/measurement device, not a circuit stage")
    return OpticalOperator(basis, op.matrix, op.lossless, op.leaky, spec.describe())
