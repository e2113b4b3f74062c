"""Composite devices and the cyclic-gate circuits built from elements.

Port layout for the single-qudit gates: the photon enters and leaves on port
0. Inside the parity sorter, odd OAM stays on port 0 (horizontal) and even OAM
leaves on port 1 (vertical, sign-flipped). Controlled circuits park the
vertical control component on port 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Any, Callable, Sequence, Union

import numpy as np

from .elements import ElementKind, ElementSpec, element_operator
from .hilbert import (
    ATOL,
    DEFAULT_WINDOW,
    BasisSpec,
    LeakageError,
    ModeLabel,
    OpticalOperator,
    Polarization,
)

SORTER_DP_ANGLE = math.pi / 4
# H -> D before the sorter; after the Sagnac this plate sends D (even l) to V
# and A (odd l) to H so the PBS reflects even and transmits odd.
SORTER_INPUT_HWP = math.pi / 8
SORTER_OUTPUT_HWP = 3 * math.pi / 8

ODD_PORT = 0
EVEN_PORT = 1
CONTROL_ARM_PORT = 2


def gate_basis(window: tuple[int, int] = DEFAULT_WINDOW, paths: int = 2) -> BasisSpec:
    return BasisSpec(oam_window=window, paths=paths, include_polarization=True)


Stage = Union[ElementSpec, "Circuit"]


@dataclass(frozen=True)
class Circuit:
    """Ordered stages on a shared basis.

    ``support`` is the input subspace the circuit is meant for; compiling
    checks that no amplitude launched from it leaves the OAM window.
    """

    name: str
    stages: tuple[Stage, ...]
    basis: BasisSpec
    support: tuple[ModeLabel, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "support", tuple(self.support))
        for stage in self.stages:
            if isinstance(stage, Circuit):
                if stage.basis != self.basis:
                    raise ValueError(f"nested circuit {stage.name!r} has a different basis")
            else:
                for p in stage.paths:
                    if p >= self.basis.paths:
                        raise ValueError(f"{stage.describe()}: port {p} missing from basis")
        for mode in self.support:
            self.basis.index(mode)

    def flatten(self) -> list[ElementSpec]:
        out: list[ElementSpec] = []
        for stage in self.stages:
            if isinstance(stage, Circuit):
                out.extend(stage.flatten())
            else:
                out.append(stage)
        return out

    def map_elements(self, fn: Callable[[ElementSpec], ElementSpec]) -> "Circuit":
        stages = tuple(s.map_elements(fn) if isinstance(s, Circuit) else fn(s) for s in self.stages)
        return replace(self, stages=stages)

    def paths_used(self) -> set[int]:
        return {p for s in self.flatten() for p in s.paths}

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "basis": {
                "oam_window": list(self.basis.oam_window),
                "paths": self.basis.paths,
                "include_polarization": self.basis.include_polarization,
            },
            "support": [[m.polarization.value, m.oam, m.path] for m in self.support],
            "stages": [s.to_dict() if isinstance(s, ElementSpec) else {"circuit": s.to_dict()} for s in self.stages],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Circuit":
        b = data["basis"]
        basis = BasisSpec(tuple(b["oam_window"]), int(b["paths"]), bool(b.get("include_polarization", True)))
        stages: list[Stage] = []
        for s in data["stages"]:
            stages.append(cls.from_dict(s["circuit"]) if "circuit" in s else ElementSpec.from_dict(s))
        support = tuple(ModeLabel(Polarization(p), int(ell), int(path)) for p, ell, path in data.get("support", []))
        return cls(data["name"], tuple(stages), basis, support)


def _spec(kind: ElementKind, path: int = 0, value: float = 0.0, label: str = "", path_b: int = 1) -> ElementSpec:
    return ElementSpec(kind, path=path, value=value, path_b=path_b, label=label)


def _sorter_stages(dp_angle: float) -> list[ElementSpec]:
    return [
        _spec(ElementKind.HWP, ODD_PORT, SORTER_INPUT_HWP, "sorter.hwp_in"),
        _spec(ElementKind.PBS, ODD_PORT, label="sorter.sagnac_pbs", path_b=EVEN_PORT),
        # unfolded Sagnac loop: the two circulation senses see the prism at +/- alpha
        _spec(ElementKind.DOVE_PRISM, ODD_PORT, dp_angle, "sorter.dp_cw"),
        _spec(ElementKind.MIRROR, ODD_PORT, label="sorter.loop_mirror_cw"),
        _spec(ElementKind.DOVE_PRISM, EVEN_PORT, -dp_angle, "sorter.dp_ccw"),
        _spec(ElementKind.MIRROR, EVEN_PORT, label="sorter.loop_mirror_ccw"),
        _spec(ElementKind.PBS, ODD_PORT, label="sorter.sagnac_pbs", path_b=EVEN_PORT),
        _spec(ElementKind.HWP, ODD_PORT, SORTER_OUTPUT_HWP, "sorter.hwp_out"),
        _spec(ElementKind.PBS, ODD_PORT, label="sorter.parity_pbs", path_b=EVEN_PORT),
        _spec(ElementKind.MIRROR, EVEN_PORT, label="sorter.even_reflection"),
    ]


def _logical_support(basis: BasisSpec) -> tuple[ModeLabel, ...]:
    return tuple(m for m in basis.logical_modes(Polarization.H, 0) if basis.contains(m))


def _require_ports(basis: BasisSpec, n: int, what: str) -> None:
    if not basis.include_polarization or basis.paths < n:
        raise ValueError(f"{what} needs a polarized basis with at least {n} ports")


def parity_sorter(basis: BasisSpec | None = None, dp_angle: float = SORTER_DP_ANGLE) -> Circuit:
    """H-polarized input on port 0; odd l exits port 0, even l exits port 1 as -l."""
    basis = basis or gate_basis()
    _require_ports(basis, 2, "parity sorter")
    return Circuit("parity_sorter", tuple(_sorter_stages(dp_angle)), basis, _logical_support(basis))


def parity_combiner(basis: BasisSpec | None = None, dp_angle: float = SORTER_DP_ANGLE) -> Circuit:
    """Sorter stages in reverse order. Every stage is an involution, so this is the sorter's inverse."""
    basis = basis or gate_basis()
    _require_ports(basis, 2, "parity combiner")
    stages = [replace(s, label=s.label.replace("sorter.", "combiner.")) for s in reversed(_sorter_stages(dp_angle))]
    return Circuit("parity_combiner", tuple(stages), basis)


def x_gate_circuit(basis: BasisSpec | None = None, dp_angle: float = SORTER_DP_ANGLE) -> Circuit:
    """SPP(+1), then flip the sign of even l: -2->-1, -1->0, 0->1, 1->2->-2."""
    basis = basis or gate_basis()
    stages: list[Stage] = [
        _spec(ElementKind.SPP, ODD_PORT, 1, "x.spp"),
        parity_sorter(basis, dp_angle),
        _spec(ElementKind.PHASE_SHIFTER, EVEN_PORT, 0.0, "x.even_arm_phase"),
        _spec(ElementKind.MIRROR, EVEN_PORT, label="x.even_arm_mirror"),
        parity_combiner(basis, dp_angle),
    ]
    return Circuit("X", tuple(stages), basis, _logical_support(basis))


def x2_gate_circuit(basis: BasisSpec | None = None, dp_angle: float = SORTER_DP_ANGLE) -> Circuit:
    """Even arm: l -> -l - 2; odd arm: l -> -l."""
    basis = basis or gate_basis()
    stages: list[Stage] = [
        parity_sorter(basis, dp_angle),
        _spec(ElementKind.MIRROR, EVEN_PORT, label="x2.even_arm_mirror"),
        _spec(ElementKind.SPP, EVEN_PORT, 2, "x2.even_arm_spp"),
        _spec(ElementKind.PHASE_SHIFTER, EVEN_PORT, 0.0, "x2.even_arm_phase"),
        _spec(ElementKind.MIRROR, ODD_PORT, label="x2.odd_arm_mirror"),
        parity_combiner(basis, dp_angle),
    ]
    return Circuit("X2", tuple(stages), basis, _logical_support(basis))


def xdag_gate_circuit(basis: BasisSpec | None = None, dp_angle: float = SORTER_DP_ANGLE) -> Circuit:
    basis = basis or gate_basis()
    stages: list[Stage] = [
        parity_sorter(basis, dp_angle),
        _spec(ElementKind.PHASE_SHIFTER, EVEN_PORT, 0.0, "xdag.even_arm_phase"),
        _spec(ElementKind.MIRROR, EVEN_PORT, label="xdag.even_arm_mirror"),
        parity_combiner(basis, dp_angle),
        _spec(ElementKind.SPP, ODD_PORT, -1, "xdag.spp"),
    ]
    return Circuit("Xdag", tuple(stages), basis, _logical_support(basis))


def z_gate_circuit(power: int = 1, basis: BasisSpec | None = None) -> Circuit:
    """Two Dove prisms at relative angle power*pi/4: l -> i^(power*l) l.

    A single prism also flips l, so the generalized Z needs the pair.
    """
    basis = basis or gate_basis()
    stages = (
        _spec(ElementKind.DOVE_PRISM, 0, power * math.pi / 4, "z.dp_1"),
        _spec(ElementKind.DOVE_PRISM, 0, 0.0, "z.dp_2"),
    )
    return Circuit(f"Z{power}" if power != 1 else "Z", stages, basis, _logical_support(basis))


GATE_BUILDERS: dict[str, Callable[..., Circuit]] = {
    "X": x_gate_circuit,
    "X2": x2_gate_circuit,
    "Xdag": xdag_gate_circuit,
}
GATE_POWERS = {"X": 1, "X2": 2, "Xdag": -1}


def controlled_circuit(
    inner: Circuit,
    target: np.ndarray | None = None,
    arm_phase: float = 0.0,
    control_port: int = CONTROL_ARM_PORT,
) -> Circuit:
    """PBS1 sends H through ``inner`` and V around it; PBS2 recombines.

    With ``target`` given, the V-arm phase is locked so the H block equals
    ``target`` exactly relative to the identity V block.
    """
    basis = inner.basis
    _require_ports(basis, control_port + 1, "controlled circuit")
    if control_port in inner.paths_used():
        raise ValueError(f"inner circuit {inner.name!r} uses the control arm port {control_port}")
    h_modes = basis.logical_modes(Polarization.H, 0)
    op = compile(inner)
    out_rows = [i for i, m in enumerate(basis.labels) if not (m.polarization is Polarization.H and m.path == 0)]
    cols = [basis.index(m) for m in h_modes]
    stray = float(np.max(np.abs(op.matrix[np.ix_(out_rows, cols)]))) if out_rows else 0.0
    if stray > 1e-9:
        raise ValueError(f"inner circuit {inner.name!r} touches polarization or path (stray amplitude {stray:.2e})")
    if target is not None:
        block = op.block(h_modes)
        overlap = np.trace(np.asarray(target).conj().T @ block)
        if abs(overlap) < 1e-9:
            raise ValueError("inner circuit is orthogonal to the requested target")
        arm_phase = float(np.angle(overlap))
    stages: list[Stage] = [
        _spec(ElementKind.PBS, 0, label="ctrl.pbs1", path_b=control_port),
        inner,
        _spec(ElementKind.PHASE_SHIFTER, control_port, arm_phase, "ctrl.v_arm_phase"),
        _spec(ElementKind.PBS, 0, label="ctrl.pbs2", path_b=control_port),
    ]
    sup = tuple(basis.logical_modes(Polarization.H, 0)) + tuple(basis.logical_modes(Polarization.V, 0))
    return Circuit(f"C{inner.name}", tuple(stages), basis, sup)


def controlled_gate_circuit(gate: str, window: tuple[int, int] = DEFAULT_WINDOW, dp_angle: float = SORTER_DP_ANGLE) -> Circuit:
    from .gates import x_power

    inner = GATE_BUILDERS[gate](gate_basis(window, paths=3), dp_angle)
    return controlled_circuit(inner, target=x_power(4, GATE_POWERS[gate]).matrix)


@lru_cache(maxsize=512)
def _compile_cached(circuit: Circuit, support: tuple[ModeLabel, ...]) -> OpticalOperator:
    basis = circuit.basis
    flat = circuit.flatten()
    # build every element first so eager factory checks (SPP) report before propagation
    ops = [element_operator(s, basis) for s in flat]
    acc = np.eye(basis.dim, dtype=complex)
    sidx = [basis.index(m) for m in support]
    leaky: set[int] = set()
    for spec, op in zip(flat, ops):
        if op.leaky:
            rows = sorted(op.leaky)
            reaching = np.any(np.abs(acc[rows, :]) > ATOL, axis=0)
            hit = [j for j in sidx if reaching[j]]
            if hit:
                raise LeakageError(
                    f"{circuit.name}: {spec.describe()} sends input {basis.labels[hit[0]]} outside window {basis.oam_window}"
                )
            leaky.update(np.flatnonzero(reaching).tolist())
        acc = op.matrix @ acc
    return OpticalOperator(basis, acc, lossless=True, leaky=frozenset(leaky), name=circuit.name)


def compile(circuit: Circuit, support: Sequence[ModeLabel] | None = None) -> OpticalOperator:
    """Flatten and compose all stages; leakage from ``support`` raises."""
    sup = circuit.support if support is None else tuple(support)
    return _compile_cached(circuit, tuple(sup))


def sorter_routing_error(
    basis: BasisSpec | None = None,
    dp_angle: float = SORTER_DP_ANGLE,
    oam_values: Sequence[int] | None = None,
) -> tuple[float, list[int]]:
    """Worst misrouted probability over ``oam_values`` and the offending l values.

    Even l must exit port 1 as -l, odd l port 0 as l (any polarization).
    Defaults to every l whose mirror image is inside the window.
    """
    basis = basis or gate_basis()
    if oam_values is None:
        oam_values = [ell for ell in basis.oam_values if basis.in_window(-ell)]
    inputs = tuple(ModeLabel(Polarization.H, ell, 0) for ell in oam_values)
    op = compile(parity_sorter(basis, dp_angle), support=inputs)
    worst = 0.0
    bad = []
    for ell in oam_values:
        col = op.matrix[:, basis.index(ModeLabel(Polarization.H, ell, 0))]
        port, out = (EVEN_PORT, -ell) if ell % 2 == 0 else (ODD_PORT, ell)
        good = sum(abs(col[basis.index(ModeLabel(p, out, port))]) ** 2 for p in basis.polarizations)
        err = 1.0 - good
        worst = max(worst, err)
        if err > 1e-12:
            bad.append(ell)
    return worst, bad


__all__ = [
    "Circuit",
    "compile",
    "controlled_circuit",
    "controlled_gate_circuit",
    "gate_basis",
    "parity_combiner",
    "parity_sorter",
    "sorter_routing_error",
    "x2_gate_circuit",
    "x_gate_circuit",
    "xdag_gate_circuit",
    "z_gate_circuit",
]
