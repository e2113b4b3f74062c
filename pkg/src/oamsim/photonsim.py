"""Heralded-photon counting experiments on compiled circuits.

Detection model. After the (possibly perturbed) circuit, mode m keeps a
coherent fraction e_m = eta_l * s of its population, where eta_l is the
per-OAM coupling efficiency and s the SLM projection efficiency. The rest
is scattered uniformly over the logical OAM modes of the same polarization
and port. The channel preserves probability, so per-row normalized tables
only see it through crosstalk. Accidentals add a flat Poisson background
per analyzer setting.

Randomness: every draw comes from ``SeedSequence(seed, spawn_key=...)``
keyed by (stream, input) for drift and (stream, input, analyzer) for shot
noise, so results do not depend on evaluation order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import optimize

from . import gates
from .circuit import (
    GATE_BUILDERS,
    GATE_POWERS,
    Circuit,
    compile,
    controlled_gate_circuit,
    gate_basis,
)
from .elements import ElementKind, ElementSpec
from .gates import SCHEMA, ConversionTable, conversion_table
from .hilbert import LOGICAL_OAM, BasisSpec, ModeLabel, Polarization, PureState

LOGICAL_DIM = len(LOGICAL_OAM)


@dataclass(frozen=True)
class SourceSpec:
    """Heralded single-photon source; defaults are the reported lab settings."""

    pair_rate_per_mw: float = 9760.0
    pump_power: float = 6.0
    accidental_rate: float = 5.0
    coincidence_efficiency: float = 0.232
    integration_time: float = 1.0

    def __post_init__(self):
        for name in ("pair_rate_per_mw", "pump_power", "accidental_rate", "integration_time"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 <= self.coincidence_efficiency <= 1:
            raise ValueError("coincidence_efficiency must lie in [0, 1]")

    @property
    def signal_rate(self) -> float:
        return self.pair_rate_per_mw * self.pump_power * self.coincidence_efficiency

    def without_accidentals(self) -> "SourceSpec":
        return replace(self, accidental_rate=0.0)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class NoiseModel:
    coupling_efficiency: Mapping[int, float] = field(default_factory=dict)
    waveplate_angle_sigma: float = 0.0
    dp_angle_sigma: float = 0.0
    interferometer_phase_sigma: float = 0.0
    slm_projection_efficiency: float = 1.0

    def __post_init__(self):
        eta = {int(k): float(v) for k, v in dict(self.coupling_efficiency).items()}
        object.__setattr__(self, "coupling_efficiency", eta)
        for ell, v in eta.items():
            if not 0 <= v <= 1:
                raise ValueError(f"coupling efficiency for l={ell} must lie in [0, 1]")
        if not 0 <= self.slm_projection_efficiency <= 1:
            raise ValueError("slm_projection_efficiency must lie in [0, 1]")
        for name in ("waveplate_angle_sigma", "dp_angle_sigma", "interferometer_phase_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def __hash__(self):
        return hash((tuple(sorted(self.coupling_efficiency.items())), self.waveplate_angle_sigma,
                     self.dp_angle_sigma, self.interferometer_phase_sigma, self.slm_projection_efficiency))

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls()

    def eta(self, ell: int) -> float:
        return self.coupling_efficiency.get(ell, 1.0)

    @property
    def has_drift(self) -> bool:
        return self.waveplate_angle_sigma > 0 or self.dp_angle_sigma > 0 or self.interferometer_phase_sigma > 0

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["coupling_efficiency"] = {str(k): v for k, v in sorted(self.coupling_efficiency.items())}
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "NoiseModel":
        data = dict(data)
        data["coupling_efficiency"] = {int(k): float(v) for k, v in dict(data.get("coupling_efficiency", {})).items()}
        return cls(**data)


def parse_seed(seed: int | str) -> int:
    """Accept ints and decimal or 0x-prefixed hex strings."""
    if isinstance(seed, (int, np.integer)):
        value = int(seed)
    else:
        text = str(seed).strip().lower()
        value = int(text, 16) if text.startswith("0x") else int(text, 10)
    if value < 0:
        raise ValueError("seed must be non-negative")
    return value


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def perturb(circuit: Circuit, noise: NoiseModel, rng: np.random.Generator) -> Circuit:
    """Circuit with wave-plate, Dove-prism and arm-phase settings drawn around nominal."""
    if not noise.has_drift:
        return circuit

    def jitter(spec: ElementSpec) -> ElementSpec:
        if spec.kind in (ElementKind.HWP, ElementKind.QWP):
            sigma = noise.waveplate_angle_sigma
        elif spec.kind is ElementKind.DOVE_PRISM:
            sigma = noise.dp_angle_sigma
        elif spec.kind is ElementKind.PHASE_SHIFTER:
            sigma = noise.interferometer_phase_sigma
        else:
            return spec
        # always draw, so a zero sigma keeps later draws aligned with other settings
        delta = rng.normal(0.0, 1.0) * sigma
        return replace(spec, value=spec.value + delta)

    return circuit.map_elements(jitter)


def _efficiencies(basis: BasisSpec, noise: NoiseModel) -> np.ndarray:
    s = noise.slm_projection_efficiency
    return np.array([noise.eta(m.oam) * s for m in basis.labels])


def _scatter_weights(analyzer: PureState) -> dict[tuple[Polarization, int], float]:
    b = analyzer.basis
    out = {}
    for pol in b.polarizations:
        for path in range(b.paths):
            w = sum(abs(analyzer.amplitudes[b.index(ModeLabel(pol, ell, path))]) ** 2
                    for ell in LOGICAL_OAM if b.in_window(ell))
            out[(pol, path)] = w / LOGICAL_DIM
    return out


def detection_probability(output: PureState, analyzer: PureState, noise: NoiseModel) -> float:
    """Probability that ``output`` registers at ``analyzer`` through the detection channel."""
    if not analyzer.is_normalized():
        raise ValueError(f"analyzer {analyzer.label!r} is not normalized")
    basis = output.basis
    e = _efficiencies(basis, noise)
    psi = output.amplitudes
    coherent = abs(np.vdot(analyzer.amplitudes, np.sqrt(e) * psi)) ** 2
    lost = (1 - e) * np.abs(psi) ** 2
    if not np.any(lost > 0):
        return float(coherent)
    w = _scatter_weights(analyzer)
    scattered = sum(lost[i] * w[(m.polarization, m.path)] for i, m in enumerate(basis.labels) if lost[i] > 0)
    return float(coherent + scattered)


def _propagate(circuit: Circuit, state: PureState) -> PureState:
    op = compile(circuit)
    return PureState(circuit.basis, op.matrix @ state.embed(circuit.basis).amplitudes, state.label)


def expected_rate(
    circuit: Circuit,
    input: PureState,
    analyzer: PureState,
    source: SourceSpec | None = None,
    noise: NoiseModel | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean coincidence rate in Hz for one (input, analyzer) setting.

    ``rng`` draws one drift realization; without it the nominal settings are used.
    """
    source = source or SourceSpec()
    noise = noise or NoiseModel.ideal()
    if not input.is_normalized():
        raise ValueError("input state must be normalized")
    if rng is not None:
        circuit = perturb(circuit, noise, rng)
    out = _propagate(circuit, input)
    p = detection_probability(out, analyzer.embed(circuit.basis), noise)
    return source.signal_rate * p + source.accidental_rate


@dataclass(frozen=True, eq=False)
class CountTable:
    input_labels: tuple[str, ...]
    analyzer_labels: tuple[str, ...]
    counts: np.ndarray
    seed: int
    source: SourceSpec
    stream: int = 0
    expected: tuple[int, ...] | None = None

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if c.shape != (len(self.input_labels), len(self.analyzer_labels)):
            raise ValueError("count matrix does not match labels")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "input_labels", tuple(self.input_labels))
        object.__setattr__(self, "analyzer_labels", tuple(self.analyzer_labels))

    @property
    def rows(self) -> list[tuple[str, str, int]]:
        return [
            (a, b, int(self.counts[i, j]))
            for i, a in enumerate(self.input_labels)
            for j, b in enumerate(self.analyzer_labels)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["input_label", "output_label", "value"])
        for row in self.rows:
            w.writerow(row)
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "schema": SCHEMA,
            "type": "count_table",
            "input_labels": list(self.input_labels),
            "output_labels": list(self.analyzer_labels),
            "counts": self.counts.tolist(),
            "seed": hex(self.seed),
            "stream": self.stream,
            "source": self.source.to_dict(),
        }
        if self.expected is not None:
            doc["expected"] = list(self.expected)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CountTable":
        doc = json.loads(text)
        if doc.get("schema") != SCHEMA or doc.get("type") != "count_table":
            raise ValueError("not an oamsim count table")
        return cls(
            tuple(doc["input_labels"]),
            tuple(doc["output_labels"]),
            np.array(doc["counts"], dtype=np.int64),
            parse_seed(doc["seed"]),
            SourceSpec(**doc["source"]),
            int(doc.get("stream", 0)),
            tuple(doc["expected"]) if "expected" in doc else None,
        )


def mean_counts(
    circuit: Circuit,
    inputs: Sequence[PureState],
    analyzers: Sequence[PureState],
    source: SourceSpec,
    noise: NoiseModel,
    seed: int | None = None,
    stream: int = 0,
) -> np.ndarray:
    """Poisson means per cell; drift drawn per input when ``seed`` is given."""
    means = np.zeros((len(inputs), len(analyzers)))
    embedded = [a.embed(circuit.basis) for a in analyzers]
    for i, state in enumerate(inputs):
        run = circuit
        if seed is not None and noise.has_drift:
            run = perturb(circuit, noise, _rng(seed, stream, i))
        out = _propagate(run, state)
        for j, a in enumerate(embedded):
            p = detection_probability(out, a, noise)
            means[i, j] = (source.signal_rate * p + source.accidental_rate) * source.integration_time
    return means


def sample_counts(
    circuit: Circuit,
    inputs: Sequence[PureState],
    analyzers: Sequence[PureState],
    source: SourceSpec | None = None,
    noise: NoiseModel | None = None,
    seed: int | str = 0,
    stream: int = 0,
    expected: Sequence[int] | None = None,
) -> CountTable:
    source = source or SourceSpec()
    noise = noise or NoiseModel.ideal()
    seed = parse_seed(seed)
    means = mean_counts(circuit, inputs, analyzers, source, noise, seed, stream)
    counts = np.zeros(means.shape, dtype=np.int64)
    for i in range(means.shape[0]):
        for j in range(means.shape[1]):
            counts[i, j] = _rng(seed, stream, i, j).poisson(means[i, j])
    return CountTable(
        tuple(s.label for s in inputs),
        tuple(a.label for a in analyzers),
        counts,
        seed,
        source,
        stream,
        tuple(expected) if expected is not None else None,
    )


TABLE1_GATES = ("X", "X2", "Xdag")


def _table1_setup(gate: str, window: tuple[int, int] = (-6, 5)):
    circuit = GATE_BUILDERS[gate](gate_basis(window))
    b1 = gates.basis(1)
    expected = gates.permutation_of(gates.x_power(4, GATE_POWERS[gate]))
    return circuit, b1, expected


def run_table1_scenario(
    noise: NoiseModel | None = None,
    seed: int | str = 0,
    source: SourceSpec | None = None,
) -> tuple[ConversionTable, ConversionTable, ConversionTable]:
    """X, X^2, X^dag on computational inputs with computational analyzers."""
    tables = []
    for stream, gate in enumerate(TABLE1_GATES):
        circuit, b1, expected = _table1_setup(gate)
        ct = sample_counts(circuit, b1, b1, source, noise, seed, stream, expected)
        tables.append(_with_meta(conversion_table(ct), gate=gate, scenario="table1", seed=ct.seed))
    return tuple(tables)  # type: ignore[return-value]


def _with_meta(table: ConversionTable, **meta: Any) -> ConversionTable:
    return replace(table, meta={**dict(table.meta), **meta})


def _images(circuit: Circuit, states: Sequence[PureState]) -> list[PureState]:
    out = []
    for s in states:
        img = _propagate(circuit, s)
        vec = img.amplitudes / math.sqrt(img.norm2)
        out.append(PureState(circuit.basis, vec, f"U {s.label}"))
    return out


def run_bases_scenario(
    gate: Circuit | str,
    basis_index: int,
    noise: NoiseModel | None = None,
    seed: int | str = 0,
    source: SourceSpec | None = None,
    analyzers: str = "image",
) -> ConversionTable:
    """Superposition-basis inputs; analyzers are the ideal images (default) or the input basis itself."""
    if basis_index not in range(1, 8):
        raise ValueError(f"basis index must be in 1..7, got {basis_index}")
    circuit = GATE_BUILDERS[gate]() if isinstance(gate, str) else gate
    inputs = gates.basis(basis_index)
    if analyzers == "image":
        outs = _images(circuit, inputs)
        expected: tuple[int, ...] | None = tuple(range(len(inputs)))
    elif analyzers == "input":
        outs = list(inputs)
        expected = None
    else:
        raise ValueError(f"analyzers must be 'image' or 'input', got {analyzers!r}")
    ct = sample_counts(circuit, inputs, outs, source, noise, seed, stream=10 + basis_index, expected=expected)
    return _with_meta(conversion_table(ct), gate=circuit.name, scenario="bases", basis=basis_index, seed=ct.seed)


_CONTROL_STATES = {
    "H": {Polarization.H: 1.0},
    "V": {Polarization.V: 1.0},
    "D": {Polarization.H: 1 / math.sqrt(2), Polarization.V: 1 / math.sqrt(2)},
}


def controlled_inputs(control: str, basis: BasisSpec) -> list[PureState]:
    if control not in _CONTROL_STATES:
        raise ValueError(f"control polarization must be one of {sorted(_CONTROL_STATES)}, got {control!r}")
    amps = _CONTROL_STATES[control]
    states = []
    for ell in LOGICAL_OAM:
        modes = {ModeLabel(pol, ell, 0): a for pol, a in amps.items()}
        states.append(PureState.from_modes(basis, modes, f"{control}|{ell}>"))
    return states


def run_controlled_scenario(
    inner: str,
    control_pol: str,
    noise: NoiseModel | None = None,
    seed: int | str = 0,
    source: SourceSpec | None = None,
) -> ConversionTable:
    """Controlled X^n with computational targets.

    For H and V control the analyzers are the computational modes in that
    polarization; for diagonal control they are the ideal hybrid images
    (|H> X^n|k> + |V>|k>)/sqrt2.
    """
    circuit = controlled_gate_circuit(inner)
    basis = circuit.basis
    inputs = controlled_inputs(control_pol, basis)
    if control_pol in ("H", "V"):
        pol = Polarization(control_pol)
        outs = [
            PureState.basis_state(basis, ModeLabel(pol, ell, 0), f"{control_pol}|{ell}>") for ell in LOGICAL_OAM
        ]
        if control_pol == "H":
            expected = gates.permutation_of(gates.x_power(4, GATE_POWERS[inner]))
        else:
            expected = tuple(range(LOGICAL_DIM))
    else:
        outs = _images(circuit, inputs)
        expected = tuple(range(LOGICAL_DIM))
    stream = 100 + 10 * TABLE1_GATES.index(inner) + "HVD".index(control_pol)
    ct = sample_counts(circuit, inputs, outs, source, noise, seed, stream, expected)
    return _with_meta(
        conversion_table(ct), gate=circuit.name, scenario="controlled", control=control_pol, seed=ct.seed
    )


def expected_table1_averages(noise: NoiseModel, source: SourceSpec | None = None) -> np.ndarray:
    """Average expected-mode efficiency per gate from Poisson means (no sampling)."""
    source = source or SourceSpec()
    out = []
    for gate in TABLE1_GATES:
        circuit, b1, expected = _table1_setup(gate)
        P = gates.probabilities_from_counts(mean_counts(circuit, b1, b1, source, noise))
        out.append(np.mean([P[i, j] for i, j in enumerate(expected)]))
    return np.array(out)


def fit_uniform_coupling(target: float, source: SourceSpec | None = None, gate: str = "X") -> NoiseModel:
    """Single coupling efficiency for all logical modes matching ``target`` average efficiency."""
    source = source or SourceSpec()
    k = TABLE1_GATES.index(gate)

    def model(eta: float) -> NoiseModel:
        return NoiseModel(coupling_efficiency={ell: eta for ell in LOGICAL_OAM})

    def gap(eta: float) -> float:
        return float(expected_table1_averages(model(eta), source)[k] - target)

    lo, hi = gap(0.0), gap(1.0)
    if target > 1 or hi < 0:
        raise ValueError(f"target {target} exceeds the lossless efficiency {hi + target:.6f}")
    if lo > 0:
        raise ValueError(f"target {target} is below the fully scattered floor {lo + target:.6f}")
    if hi == 0:
        return model(1.0)
    eta = optimize.brentq(gap, 0.0, 1.0, xtol=1e-14, rtol=1e-14)
    return model(eta)


def calibrate_noise(
    target_averages: Sequence[float],
    source: SourceSpec | None = None,
    base: NoiseModel | None = None,
    fit_slm: bool = True,
    tol: float = 1e-9,
    max_sweeps: int = 200,
) -> NoiseModel:
    """Coordinate descent on (s, eta_-2 .. eta_1) to match the X, X^2, X^dag averages.

    Computational-basis averages depend on the couplings only through their
    mean, so the fit is under-determined: the SLM efficiency absorbs the
    common loss first and the per-mode couplings stay at their start values
    unless ``fit_slm`` is off. Drift sigmas of ``base`` are carried over
    untouched and not part of the fit.
    """
    targets = np.asarray(target_averages, dtype=float)
    if targets.shape != (3,):
        raise ValueError("need three target averages (X, X^2, X^dag)")
    if np.any(targets <= 0) or np.any(targets > 1):
        raise ValueError(f"target averages must lie in (0, 1], got {targets.tolist()}")
    source = source or SourceSpec()
    base = base or NoiseModel.ideal()
    nominal = replace(base, waveplate_angle_sigma=0.0, dp_angle_sigma=0.0, interferometer_phase_sigma=0.0)

    params = {"slm": nominal.slm_projection_efficiency}
    params.update({ell: nominal.eta(ell) for ell in LOGICAL_OAM})
    coords: list[Any] = (["slm"] if fit_slm else []) + list(LOGICAL_OAM)

    def build(p: Mapping[Any, float]) -> NoiseModel:
        return replace(
            nominal,
            coupling_efficiency={**nominal.coupling_efficiency, **{ell: p[ell] for ell in LOGICAL_OAM}},
            slm_projection_efficiency=p["slm"],
        )

    def loss(p: Mapping[Any, float]) -> float:
        return float(np.sum((expected_table1_averages(build(p), source) - targets) ** 2))

    current = loss(params)
    for _ in range(max_sweeps):
        before = current
        for c in coords:
            def f(x: float, c=c) -> float:
                return loss({**params, c: x})

            res = optimize.minimize_scalar(f, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12})
            if res.fun < current:
                params[c] = float(res.x)
                current = float(res.fun)
        if before - current < tol:
            break
    fitted = build(params)
    return replace(
        fitted,
        waveplate_angle_sigma=base.waveplate_angle_sigma,
        dp_angle_sigma=base.dp_angle_sigma,
        interferometer_phase_sigma=base.interferometer_phase_sigma,
    )


REPORTED_AVERAGES = (0.9366, 0.9347, 0.9289)
