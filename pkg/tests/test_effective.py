import math

import numpy as np
import pytest

from embedded_jc.effective import build_effective, exchange_coupling, extract_frequency, validate_effective
from embedded_jc.hamiltonian import build_hamiltonian
from embedded_jc.hilbert import SpaceTruncation, enumerate_basis
from embedded_jc.params import Ensemble, SystemParams, dispersive_resonance, from_collective


def dispersive(delta, G=0.1, **kw):
    return from_collective(g_c=1.0, G=G, N_s=10**6, delta=delta, Delta=dispersive_resonance(delta, 1.0), **kw)


def test_exchange_coupling_arithmetic():
    p = from_collective(G=0.1, delta=10.0, Delta=10.1)
    info, _ = build_effective(p)
    assert info.g_eff == pytest.approx(0.1 / 10.1, rel=1e-12)
    assert info.g_eff == pytest.approx(9.901e-3, rel=1e-4)
    assert exchange_coupling(p) == info.g_eff
    assert info.g_eff_per_spin == pytest.approx(info.g_eff / 1e3)
    assert info.transmon_shift == pytest.approx(-0.1)
    assert info.validity_ratios["g_c_over_delta"] == pytest.approx(0.1)


def test_zero_spin_coupling_gives_no_exchange():
    p = from_collective(G=0.0, delta=10.0, Delta=10.1)
    _, H = build_effective(p)
    m = H.toarray()
    assert np.count_nonzero(m - np.diag(np.diag(m))) == 0


def test_zero_detuning_rejected():
    with pytest.raises(ValueError):
        build_effective(from_collective(G=0.1, delta=0.0, Delta=1.0))
    with pytest.raises(ValueError):
        build_effective(from_collective(G=0.1, delta=10.0, Delta=0.0))


@pytest.mark.parametrize("stark", [True, False])
def test_detuning_sign_flip(stark):
    p = from_collective(G=0.1, delta=10.0, Delta=10.1)
    q = from_collective(G=0.1, delta=-10.0, Delta=-10.1)
    ip, Hp = build_effective(p, stark=stark)
    iq, Hq = build_effective(q, stark=stark)
    assert iq.g_eff == pytest.approx(-ip.g_eff)
    ep = np.linalg.eigvalsh(Hp.toarray())
    eq = np.linalg.eigvalsh(Hq.toarray())
    np.testing.assert_allclose(np.sort(np.abs(ep)), np.sort(np.abs(eq)), atol=1e-12)


def test_effective_levels_match_full_second_order():
    # one-excitation levels of the full model versus the Stark-shifted effective model
    delta = 40.0
    p = from_collective(G=0.05, delta=delta, Delta=-25.0)
    full = build_hamiltonian(p, enumerate_basis(SpaceTruncation(1, 1, 1), p.ensembles)).toarray()
    _, H = build_effective(p, k_max=1)
    b = H.basis
    heff = H.toarray()
    ef = np.linalg.eigvalsh(full)
    for st in ((1, 0, (0,)), (0, 0, (1,))):
        i = b.find(*st)
        e = heff[i, i].real
        # fourth-order residual (g/delta)^4 * delta
        assert np.min(np.abs(ef - e)) < 5 * (1 / 25.0) ** 3


def test_extract_frequency():
    t = np.linspace(0, 200, 4001)
    for w in (0.037, 0.5, 1.3):
        y = 0.4 * np.cos(w * t + 0.3) + 0.5
        assert extract_frequency(y, t) == pytest.approx(w, rel=1e-9)
    # the bare FFT estimate needs many periods in the window
    for w in (0.5, 1.3):
        y = 0.4 * np.cos(w * t + 0.3) + 0.5
        assert extract_frequency(y, t, refine=False) == pytest.approx(w, rel=1e-3)


def test_validate_effective_frequency():
    rep = validate_effective(dispersive(10.0))
    assert rep.rel_error < 0.05
    assert rep.rel_error_vs_effective < 0.05
    assert not rep.sw_breakdown
    # populations drift apart only through the small frequency offset
    short = validate_effective(dispersive(10.0), periods=2)
    assert short.max_population_deviation < 0.05


def test_validate_effective_static_without_spins():
    rep = validate_effective(dispersive(10.0, G=0.0), t_end=100.0)
    assert rep.freq_full is None
    assert rep.max_population_deviation == 0.0


def test_breakdown_flag_near_resonance():
    # spins resonant with the cavity: photons are really excited
    p = from_collective(G=0.1, delta=10.0, Delta=0.01)
    rep = validate_effective(p, t_end=100.0)
    assert rep.sw_breakdown
