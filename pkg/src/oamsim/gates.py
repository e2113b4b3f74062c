"""Ideal qudit gate targets, the x/y eigenbases, and conversion-efficiency tables."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .hilbert import (
    LOGICAL_BASIS,
    LOGICAL_OAM,
    BasisSpec,
    ModeLabel,
    OpticalOperator,
    Polarization,
    PureState,
    embed_operator,
    unitarity_error,
)

SCHEMA = "oamsim/1"


def omega(d: int) -> complex:
    return complex(np.exp(2j * np.pi / d))


@dataclass(frozen=True, eq=False)
class GateTarget:
    name: str
    matrix: np.ndarray
    d: int

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if unitarity_error(m) > 1e-12:
            raise ValueError(f"gate target {self.name} is not unitary")

    def __matmul__(self, other: "GateTarget") -> "GateTarget":
        return GateTarget(f"{self.name}{other.name}", self.matrix @ other.matrix, self.d)

    def embed(self, basis: BasisSpec, polarization: Polarization = Polarization.H, path: int = 0) -> OpticalOperator:
        """Act on the logical OAM modes of one (polarization, path); identity elsewhere."""
        if self.matrix.shape != (len(LOGICAL_OAM),) * 2:
            raise ValueError("only four-dimensional single-qudit targets embed on one sector")
        return embed_operator(self.matrix, basis, basis.logical_modes(polarization, path), self.name)


def _check_d(d: int) -> None:
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")


def pauli_x(d: int) -> GateTarget:
    """Cyclic shift |k> -> |k+1 mod d>."""
    _check_d(d)
    return GateTarget("X", np.roll(np.eye(d, dtype=complex), 1, axis=0), d)


def pauli_z(d: int) -> GateTarget:
    _check_d(d)
    w = omega(d)
    return GateTarget("Z", np.diag([w**k for k in range(d)]), d)


def x_power(d: int, n: int) -> GateTarget:
    _check_d(d)
    name = {1: "X", -1: "Xdag", 0: "I"}.get(n, f"X{n}")
    return GateTarget(name, np.roll(np.eye(d, dtype=complex), n % d, axis=0), d)


def z_power(d: int, n: int) -> GateTarget:
    _check_d(d)
    w = omega(d)
    return GateTarget(f"Z{n}", np.diag([w ** (k * n % d) for k in range(d)]), d)


def weyl(d: int, a: int, b: int) -> GateTarget:
    """X^a Z^b."""
    m = x_power(d, a).matrix @ z_power(d, b).matrix
    return GateTarget(f"W({a},{b})", m, d)


def controlled_target(U: GateTarget) -> GateTarget:
    """|H><H| (x) U + |V><V| (x) I with H ordered first.

    The written block matrix lists the identity first; the cyclic action on
    H is what the hardware does, and with H-first ordering that puts U in
    the top-left block.
    """
    d = U.matrix.shape[0]
    m = np.zeros((2 * d, 2 * d), dtype=complex)
    m[:d, :d] = U.matrix
    m[d:, d:] = np.eye(d)
    return GateTarget(f"C{U.name}", m, U.d)


def controlled_modes(basis: BasisSpec, path: int = 0) -> list[ModeLabel]:
    """Row/column order of :func:`controlled_target` inside ``basis``."""
    return basis.logical_modes(Polarization.H, path) + basis.logical_modes(Polarization.V, path)


def _oam_tag(ell: int) -> str:
    return f"{ell:+d}" if ell else "0"


def eigenbasis_state(
    kind: str,
    sign: int,
    l1: int,
    l2: int,
    basis: BasisSpec = LOGICAL_BASIS,
    polarization: Polarization = Polarization.H,
    path: int = 0,
) -> PureState:
    """(|l1> +/- |l2>)/sqrt2 for kind 'x', (|l1> +/- i|l2>)/sqrt2 for kind 'y'."""
    if kind not in ("x", "y"):
        raise ValueError(f"kind must be 'x' or 'y', got {kind!r}")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if l1 == l2:
        raise ValueError("eigenstate needs two distinct OAM values")
    for ell in (l1, l2):
        if ell not in LOGICAL_OAM:
            raise ValueError(f"OAM {ell} outside the logical window {LOGICAL_OAM}")
    c = sign * (1j if kind == "y" else 1)
    s = 1 / math.sqrt(2)
    label = f"{kind}{'+' if sign > 0 else '-'}({_oam_tag(l1)},{_oam_tag(l2)})"
    return PureState.from_modes(
        basis,
        {ModeLabel(polarization, l1, path): s, ModeLabel(polarization, l2, path): c * s},
        label,
    )


_PAIRINGS = {
    2: ("x", ((-2, -1), (0, 1))),
    3: ("y", ((-2, -1), (0, 1))),
    4: ("x", ((-2, 0), (-1, 1))),
    5: ("y", ((-2, 0), (-1, 1))),
    6: ("x", ((-2, 1), (-1, 0))),
    7: ("y", ((-2, 1), (-1, 0))),
}


def basis(n: int, space: BasisSpec = LOGICAL_BASIS, polarization: Polarization = Polarization.H, path: int = 0) -> list[PureState]:
    """Measurement basis B_n: n = 1 is computational, 2..7 the x/y superposition bases."""
    if n == 1:
        return [
            PureState.basis_state(space, ModeLabel(polarization, ell, path), f"|{ell}>")
            for ell in LOGICAL_OAM
        ]
    if n not in _PAIRINGS:
        raise ValueError(f"basis index must be in 1..7, got {n}")
    kind, pairs = _PAIRINGS[n]
    return [
        eigenbasis_state(kind, sign, l1, l2, space, polarization, path)
        for (l1, l2) in pairs
        for sign in (1, -1)
    ]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


@dataclass(frozen=True, eq=False)
class ConversionTable:
    """Row-normalized detection probabilities P(i, j).

    ``expected`` maps each input row to the output column a perfect gate
    would hit; ``counts`` keeps the raw coincidences when built from data.
    """

    input_labels: tuple[str, ...]
    output_labels: tuple[str, ...]
    P: np.ndarray
    expected: tuple[int, ...] | None = None
    counts: np.ndarray | None = None
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.shape != (len(self.input_labels), len(self.output_labels)):
            raise ValueError("probability matrix does not match labels")
        if np.any(P < -1e-12) or np.any(P > 1 + 1e-12):
            raise ValueError("probabilities must lie in [0, 1]")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "input_labels", tuple(self.input_labels))
        object.__setattr__(self, "output_labels", tuple(self.output_labels))
        if self.expected is not None:
            object.__setattr__(self, "expected", tuple(int(j) for j in self.expected))

    def row(self, label: str) -> dict[str, float]:
        i = self.input_labels.index(label)
        return dict(zip(self.output_labels, self.P[i]))

    def expected_probabilities(self) -> np.ndarray:
        if self.expected is None:
            raise ValueError("table has no expected-mode map")
        return np.array([self.P[i, j] for i, j in enumerate(self.expected)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["input_label", "output_label", "value"])
        for i, a in enumerate(self.input_labels):
            for j, b in enumerate(self.output_labels):
                w.writerow([a, b, _fmt(self.P[i, j])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConversionTable":
        rows = list(csv.DictReader(io.StringIO(text)))
        ins = list(dict.fromkeys(r["input_label"] for r in rows))
        outs = list(dict.fromkeys(r["output_label"] for r in rows))
        P = np.zeros((len(ins), len(outs)))
        for r in rows:
            P[ins.index(r["input_label"]), outs.index(r["output_label"])] = float(r["value"])
        return cls(tuple(ins), tuple(outs), P)

    def to_json(self) -> str:
        doc: dict[str, Any] = {
            "schema": SCHEMA,
            "type": "conversion_table",
            "input_labels": list(self.input_labels),
            "output_labels": list(self.output_labels),
            "probabilities": [[float(_fmt(p)) for p in row] for row in self.P],
        }
        if self.expected is not None:
            doc["expected"] = list(self.expected)
        if self.counts is not None:
            doc["counts"] = np.asarray(self.counts).astype(int).tolist()
        if self.meta:
            doc["meta"] = dict(self.meta)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ConversionTable":
        doc = json.loads(text)
        if doc.get("schema") != SCHEMA:
            raise ValueError(f"unsupported schema {doc.get('schema')!r}")
        counts = doc.get("counts")
        return cls(
            tuple(doc["input_labels"]),
            tuple(doc["output_labels"]),
            np.array(doc["probabilities"], dtype=float),
            tuple(doc["expected"]) if "expected" in doc else None,
            np.array(counts, dtype=np.int64) if counts is not None else None,
            doc.get("meta", {}),
        )


def probabilities_from_counts(counts: np.ndarray) -> np.ndarray:
    """P(i, j) = N_ij / sum_k N_ik."""
    N = np.asarray(counts, dtype=float)
    if np.any(N < 0):
        raise ValueError("counts must be non-negative")
    totals = N.sum(axis=1)
    if np.any(totals <= 0):
        bad = int(np.flatnonzero(totals <= 0)[0])
        raise ValueError(f"row {bad} has no counts")
    return N / totals[:, None]


def conversion_table(
    source: Any,
    input_basis: Sequence[PureState] | None = None,
    output_basis: Sequence[PureState] | None = None,
    expected: Sequence[int] | None = None,
) -> ConversionTable:
    """Conversion table from an operator (Born rule) or from a CountTable.

    For an operator, inputs and outputs are embedded into its basis and
    P(i, j) = |<out_j|U|in_i>|^2 is renormalized over the listed outputs.
    """
    if isinstance(source, OpticalOperator):
        if input_basis is None or output_basis is None:
            raise ValueError("operator tables need input and output bases")
        op = source
        ins = [s.embed(op.basis) for s in input_basis]
        outs = [s.embed(op.basis) for s in output_basis]
        A = np.array([o.amplitudes for o in outs]).conj() @ op.matrix @ np.array([s.amplitudes for s in ins]).T
        raw = np.abs(A.T) ** 2
        totals = raw.sum(axis=1)
        if np.any(totals <= 1e-15):
            raise ValueError("an input has no weight on the listed outputs")
        return ConversionTable(
            tuple(s.label for s in input_basis),
            tuple(s.label for s in output_basis),
            raw / totals[:, None],
            tuple(expected) if expected is not None else None,
        )
    counts = getattr(source, "counts", None)
    if counts is None:
        raise TypeError(f"cannot build a conversion table from {type(source).__name__}")
    return ConversionTable(
        tuple(source.input_labels),
        tuple(source.analyzer_labels),
        probabilities_from_counts(counts),
        tuple(expected) if expected is not None else getattr(source, "expected", None),
        np.asarray(counts),
    )


def summarize_efficiency(table: ConversionTable, expected_map: Sequence[int] | Mapping[str, str] | None = None) -> float:
    """Mean of P(i, expected(i)) over input rows."""
    if expected_map is None:
        return float(np.mean(table.expected_probabilities()))
    if isinstance(expected_map, Mapping):
        idx = [table.output_labels.index(expected_map[a]) for a in table.input_labels]
    else:
        idx = list(expected_map)
    if len(idx) != len(table.input_labels):
        raise ValueError("expected map must cover every input")
    return float(np.mean([table.P[i, j] for i, j in enumerate(idx)]))


def permutation_of(target: GateTarget) -> tuple[int, ...]:
    """Column index hit by each computational input, for permutation targets."""
    m = np.abs(target.matrix)
    return tuple(int(np.argmax(m[:, k])) for k in range(m.shape[1]))
