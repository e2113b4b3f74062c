"""X gate in the seven measurement bases, compared with the 4x4 oracle.

Writes one CSV per basis (image analyzers) into --out and prints the mean
expected-mode probability and the worst deviation from the oracle.
"""

import argparse
from pathlib import Path

import numpy as np

from oamsim import gates
from oamsim.circuit import x_gate_circuit
from oamsim.photonsim import REPORTED_AVERAGES, NoiseModel, calibrate_noise, run_bases_scenario


def oracle(n):
    b = gates.basis(n)
    x = gates.pauli_x(4).matrix
    return np.array([[abs(np.vdot(a.amplitudes, x @ s.amplitudes)) ** 2 for a in b] for s in b])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/bases")
    ap.add_argument("--calibrated", action="store_true", help="use the loss model fitted to the lab averages")
    args = ap.parse_args()

    noise = calibrate_noise(REPORTED_AVERAGES) if args.calibrated else NoiseModel.ideal()
    circuit = x_gate_circuit()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"{'basis':6s} {'mean P(expected)':>17s} {'max |P - oracle|':>17s}")
    for n in range(1, 8):
        img = run_bases_scenario(circuit, n, noise, args.seed)
        raw = run_bases_scenario(circuit, n, noise, args.seed, analyzers="input")
        (out / f"B{n}_X.csv").write_text(img.to_csv())
        dev = np.max(np.abs(raw.P - oracle(n)))
        print(f"B{n:<5d} {gates.summarize_efficiency(img):17.5f} {dev:17.5f}")


if __name__ == "__main__":
    main()
