import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oamsim.elements import (
    ElementKind,
    ElementSpec,
    dove_prism,
    element_operator,
    hwp,
    mirror,
    pbs,
    phase_shifter,
    qwp,
    slm_prepare,
    slm_project,
    spp,
)
from oamsim.hilbert import (
    BasisSpec,
    LeakageError,
    ModeLabel,
    Polarization,
    PureState,
    apply,
    compose,
    project,
    unitarity_error,
)
from oamsim.gates import eigenbasis_state

H, V = Polarization.H, Polarization.V
B = BasisSpec((-6, 5), paths=2)
angles = st.floats(0, 2 * math.pi, exclude_max=True)


def ket(ell, pol=H, path=0, basis=B):
    return PureState.basis_state(basis, ModeLabel(pol, ell, path))


def amp(state, ell, pol=H, path=0):
    return state.amplitude(ModeLabel(pol, ell, path))


def test_spp_shifts():
    assert amp(apply(spp(1), ket(0)), 1) == 1
    assert amp(apply(spp(2), ket(-2)), 0) == 1
    m = compose([spp(1), spp(-1)]).matrix
    assert np.max(np.abs(m - np.eye(B.dim))) < 1e-12


def test_spp_only_touches_its_path():
    out = apply(spp(1, path=0), ket(0, path=1))
    assert amp(out, 0, path=1) == 1


def test_spp_rejects_zero_and_leaky_logical():
    with pytest.raises(ValueError):
        spp(0)
    with pytest.raises(LeakageError):
        spp(2, basis=BasisSpec((-2, 1), 1))


def test_dove_prism_examples():
    assert amp(apply(dove_prism(0.0), ket(3)), -3) == 1
    out = apply(dove_prism(math.pi / 4), ket(1))
    # l = 1, alpha = pi/4: exp(2i * 1 * pi/4) = i
    assert amp(out, -1) == pytest.approx(1j, abs=1e-15)


@given(angles, angles)
def test_dove_prism_pair_is_diagonal_phase(a1, a2):
    m = compose([dove_prism(a1), dove_prism(a2)]).matrix
    interior = [ell for ell in range(-5, 6)]
    ref = None
    for ell in interior:
        i = B.index(ModeLabel(H, ell, 0))
        ratio = m[i, i] / np.exp(2j * ell * (a1 - a2))
        ref = ratio if ref is None else ref
        assert abs(ratio - ref) < 1e-12
        assert abs(abs(m[i, i]) - 1) < 1e-12


def test_dove_pair_at_quarter_turn_gives_parity_phase():
    # the two Sagnac senses see +/- 45 deg: relative angle pi/2 -> (-1)^l
    m = compose([dove_prism(math.pi / 4), dove_prism(-math.pi / 4)]).matrix
    for ell in range(-5, 6):
        i = B.index(ModeLabel(H, ell, 0))
        assert m[i, i] == pytest.approx((-1) ** ell, abs=1e-12)


def test_mirror():
    assert amp(apply(mirror(), ket(0)), 0) == 1
    assert amp(apply(mirror(), ket(2)), -2) == 1
    assert np.max(np.abs(compose([mirror(), mirror()]).matrix - np.eye(B.dim))) < 1e-12


def test_mirror_edge_mode_is_leaky():
    assert B.index(ModeLabel(H, -6, 0)) in mirror().leaky
    with pytest.raises(LeakageError):
        apply(mirror(), ket(-6))


def test_wave_plates():
    out = apply(hwp(0.0), ket(0, V))
    assert amp(out, 0, V) == pytest.approx(-1)
    d = apply(hwp(math.pi / 8), ket(0))
    assert amp(d, 0, H) == pytest.approx(1 / math.sqrt(2))
    assert amp(d, 0, V) == pytest.approx(1 / math.sqrt(2))
    c = apply(qwp(math.pi / 4), ket(0))
    # R(45) diag(1, i) R(-45) (1, 0) = ((1 + i)/2, (1 - i)/2)
    assert amp(c, 0, H) == pytest.approx((1 + 1j) / 2)
    assert amp(c, 0, V) == pytest.approx((1 - 1j) / 2)
    assert project(c, ket(0)) == pytest.approx(0.5)


@given(angles)
def test_hwp_squares_to_identity(theta):
    m = compose([hwp(theta), hwp(theta)]).matrix
    assert np.max(np.abs(m - m[0, 0] * np.eye(B.dim))) < 1e-12


def test_pbs_routing():
    assert amp(apply(pbs(0, 1), ket(0, H)), 0, H, 0) == 1
    assert amp(apply(pbs(0, 1), ket(0, V)), 0, V, 1) == 1
    d = apply(hwp(math.pi / 8), ket(1))
    out = apply(pbs(0, 1), d)
    assert abs(amp(out, 1, H, 0)) ** 2 == pytest.approx(0.5)
    assert abs(amp(out, 1, V, 1)) ** 2 == pytest.approx(0.5)
    assert out.norm2 == pytest.approx(1.0)
    assert np.max(np.abs(compose([pbs(), pbs()]).matrix - np.eye(B.dim))) < 1e-12


def test_pbs_needs_ports():
    with pytest.raises(ValueError):
        pbs(0, 1, BasisSpec((-2, 1), paths=1))
    with pytest.raises(ValueError):
        pbs(0, 0)


def test_wave_plate_needs_polarization():
    with pytest.raises(ValueError):
        hwp(0.1, basis=BasisSpec((-2, 1), 1, include_polarization=False))


@settings(max_examples=60)
@given(angles, angles, st.integers(-3, 3).filter(bool))
def test_disjoint_paths_commute(theta, alpha, k):
    b3 = BasisSpec((-6, 5), paths=3)
    on0 = [hwp(theta, 0, b3), dove_prism(alpha, 0, b3), spp(k, 0, b3), mirror(0, b3)]
    on2 = [qwp(theta, 2, b3), dove_prism(alpha, 2, b3), phase_shifter(alpha, 2, b3), spp(k, 2, b3)]
    for a in on0:
        for b in on2:
            assert np.max(np.abs(a.matrix @ b.matrix - b.matrix @ a.matrix)) < 1e-12


def test_slm_prepare_and_project():
    assert amp(slm_prepare(PureState.from_oam([1, 0, 0, 0])), -2) == 1
    assert amp(slm_prepare(PureState.from_oam([0, 0, 1, 0])), 0) == 1
    with pytest.raises(ValueError):
        slm_prepare(PureState.from_oam([0.5, 0, 0, 0]))
    # brute-force 4x4 oracle: X |x+_{-2,0}> = (|-1> + |+1>)/sqrt2
    x = np.zeros((4, 4))
    for k in range(4):
        x[(k + 1) % 4, k] = 1
    psi = x @ (np.array([1, 0, 1, 0]) / math.sqrt(2))
    a = eigenbasis_state("x", 1, 0, 1)
    oracle = abs(np.vdot(a.amplitudes, psi)) ** 2
    state = PureState(a.basis, psi)
    assert project(state, slm_project(a)) == pytest.approx(oracle, abs=1e-15)
    assert oracle == pytest.approx(0.25)


def test_spec_serialization_round_trip():
    specs = [
        ElementSpec(ElementKind.SPP, 1, 2, label="spp"),
        ElementSpec(ElementKind.DOVE_PRISM, 0, -math.pi / 4),
        ElementSpec(ElementKind.PBS, 0, path_b=2),
        ElementSpec(ElementKind.MIRROR, 1),
    ]
    for s in specs:
        assert ElementSpec.from_dict(s.to_dict()) == s
    assert specs[1].value == pytest.approx(7 * math.pi / 4)


def test_spec_validation():
    with pytest.raises(ValueError):
        ElementSpec(ElementKind.SPP, value=0)
    with pytest.raises(ValueError):
        ElementSpec(ElementKind.SPP, value=1.5)
    with pytest.raises(ValueError):
        ElementSpec("Laser")
    with pytest.raises(ValueError):
        element_operator(ElementSpec(ElementKind.SLM_PREP), B)


element_specs = st.one_of(
    st.builds(lambda k, p: ElementSpec(ElementKind.SPP, p, k), st.integers(-3, 3).filter(bool), st.integers(0, 1)),
    st.builds(lambda a, p: ElementSpec(ElementKind.DOVE_PRISM, p, a), angles, st.integers(0, 1)),
    st.builds(lambda a, p: ElementSpec(ElementKind.HWP, p, a), angles, st.integers(0, 1)),
    st.builds(lambda a, p: ElementSpec(ElementKind.QWP, p, a), angles, st.integers(0, 1)),
    st.builds(lambda a, p: ElementSpec(ElementKind.PHASE_SHIFTER, p, a), angles, st.integers(0, 1)),
    st.builds(lambda p: ElementSpec(ElementKind.MIRROR, p), st.integers(0, 1)),
    st.just(ElementSpec(ElementKind.PBS, 0, path_b=1)),
)


@settings(max_examples=200)
@given(element_specs)
def test_every_element_unitary(spec):
    assert unitarity_error(element_operator(spec, B).matrix) < 1e-12
