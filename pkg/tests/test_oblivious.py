import numpy as np
import pytest

from obliq.channels import choi_of
from obliq.errors import EstimationError, StateValidationError
from obliq.gates import named_gate
from obliq.oblivious import (
    FlagState,
    GeneralizedPauliBasis,
    bell_projector,
    controlled_gate,
    isi_measure,
    local_parity_sampling,
    multiparty_binary_bell,
    multiplexer_build,
    oqc_build,
    oqc_induced_operator,
    oqt_estimate_observable,
    oqt_sample_records,
    oqt_sequence,
    oqt_step,
    parity_mix_alpha,
    sequence_unitary,
    toffoli_boundary_compile,
)
from obliq.qmath import RegisterLayout, random_statevector, random_unitary
from obliq.states import basis_state


def test_generalized_pauli_basis_orthonormal():
    for d in (2, 3, 4):
        ops = GeneralizedPauliBasis(d).operators
        assert len(ops) == d * d
        gram = np.array(
            [[np.trace(a.conj().T @ b) / d for b in ops] for a in ops]
        )
        assert np.abs(gram - np.eye(d * d)).max() < 1e-12


def test_isi_branch_law():
    rng = np.random.default_rng(100)
    for _ in range(30):
        d = int(rng.integers(2, 5))
        u = random_unitary(d, rng)
        psi = random_statevector(d, rng)
        b0, b1 = isi_measure(choi_of(u), psi)
        out = u @ psi
        assert abs(b0.probability - 1.0 / d) < 1e-10
        assert np.abs(b0.post_state.matrix - np.outer(out, out.conj())).max() < 1e-10
        assert abs(b1.probability - (d - 1.0) / d) < 1e-10
        comp = (np.eye(d) - np.outer(out, out.conj())) / (d - 1)
        assert np.abs(b1.post_state.matrix - comp).max() < 1e-10


def test_isi_rejects_unnormalized_injection():
    with pytest.raises(StateValidationError):
        isi_measure(choi_of(named_gate("H")), np.array([1.0, 1.0]))


def test_oqt_step_branch_law():
    rng = np.random.default_rng(101)
    for _ in range(30):
        d = int(rng.integers(2, 5))
        u = random_unitary(d, rng)
        psi = random_statevector(d, rng)
        b0, b1 = oqt_step(choi_of(u), psi)
        target = np.outer(u @ psi, (u @ psi).conj())
        assert abs(b0.probability - 1.0 / d**2) < 1e-10
        assert np.abs(b0.post_state.matrix - target).max() < 1e-10
        mix = (d * np.eye(d) - target) / (d * d - 1.0)
        assert abs(b1.probability - (1.0 - 1.0 / d**2)) < 1e-10
        assert np.abs(b1.post_state.matrix - mix).max() < 1e-10


def test_oqt_sequence_closed_form():
    # chain state depends on the parity pattern only through its sum
    rng = np.random.default_rng(102)
    for d in (2, 3):
        us = [random_unitary(d, rng) for _ in range(3)]
        programs = [choi_of(u) for u in us]
        psi = random_statevector(d, rng)
        u_total = us[2] @ us[1] @ us[0]
        rho_target = np.outer(u_total @ psi, (u_total @ psi).conj())
        for bits in ((0, 0, 0), (1, 0, 0), (0, 1, 1), (1, 1, 1)):
            rec = oqt_sequence(programs, psi, forced_bits=bits)
            s = sum(bits)
            alpha = parity_mix_alpha(s, d)
            expect = alpha * np.eye(d) + (-1.0) ** s * rho_target / (d * d - 1.0) ** s
            assert rec.s == s
            assert np.abs(rec.final_state.matrix - expect).max() < 1e-10


def test_oqt_sequence_needs_exactly_one_driver():
    progs = [choi_of(named_gate("H"))]
    with pytest.raises(EstimationError):
        oqt_sequence(progs, basis_state(0, 2))
    with pytest.raises(EstimationError):
        oqt_sequence(
            progs, basis_state(0, 2), rng=np.random.default_rng(0), forced_bits=[0]
        )


def test_oqt_estimator_unbiased():
    rng = np.random.default_rng(103)
    d = 2
    u1, u2 = random_unitary(d, rng), random_unitary(d, rng)
    psi = random_statevector(d, rng)
    obs = np.diag([1.0, -1.0]).astype(complex)
    target = u2 @ u1 @ psi
    truth = float(np.real(target.conj() @ obs @ target))
    batch = oqt_sample_records([choi_of(u1), choi_of(u2)], psi, 40000, rng)
    est, err = oqt_estimate_observable(batch, obs, rng=rng)
    assert abs(est - truth) < 3.5 * err + 1e-12


def test_oqt_parity_statistics():
    # every step is trivial with probability 1/d^2 independent of history
    rng = np.random.default_rng(104)
    d = 2
    progs = [choi_of(random_unitary(d, rng)) for _ in range(2)]
    batch = oqt_sample_records(progs, random_statevector(d, rng), 80000, rng)
    freq0 = (batch.parity_bits == 0).mean(axis=0)
    assert np.abs(freq0 - 0.25).max() < 0.01


def test_multiparty_binary_bell_product_branch():
    rng = np.random.default_rng(105)
    da, db = 2, 3
    ua, ub = random_unitary(da, rng), random_unitary(db, rng)
    pa, pb = random_statevector(da, rng), random_statevector(db, rng)
    b0, b1 = multiparty_binary_bell([(choi_of(ua), pa), (choi_of(ub), pb)])
    assert abs(b0.probability - 1.0 / (da * db) ** 2) < 1e-10
    oa = np.outer(ua @ pa, (ua @ pa).conj())
    ob = np.outer(ub @ pb, (ub @ pb).conj())
    assert np.abs(b0.post_state.matrix - np.kron(oa, ob)).max() < 1e-10
    assert abs(b0.probability + b1.probability - 1.0) < 1e-12


def test_local_parity_sampling_all_zero_rate():
    rng = np.random.default_rng(106)
    d = 2
    parts = [
        (choi_of(random_unitary(d, rng)), random_statevector(d, rng))
        for _ in range(2)
    ]
    res = local_parity_sampling(parts, 160000, rng)
    rate = res.all_zero / res.shots
    assert abs(rate - 1.0 / 16.0) < 0.004
    assert abs(res.efficiency_factor - 16.0) < 1e-12
    assert res.all_zero + res.rest == res.shots


def test_controlled_gate_layout():
    u = named_gate("X")
    cg = controlled_gate(u)
    assert np.abs(cg - named_gate("CNOT")).max() < 1e-12


def test_oqc_exactness_both_flags():
    rng = np.random.default_rng(107)
    for d in (2, 3):
        u = random_unitary(d, rng)
        apply_u = lambda v: u @ v
        apply_uc = lambda v: u.conj() @ v
        for which in ("omega", "omega_perp"):
            flag = FlagState(which, d)
            circ = oqc_build(apply_u, apply_uc, d, flag)
            induced = oqc_induced_operator(circ, d, flag, u=u)
            want = controlled_gate(np.kron(u, u.conj()))
            assert np.abs(induced - want).max() < 1e-9


def test_oqc_global_phase_invariance():
    rng = np.random.default_rng(108)
    d = 2
    u = random_unitary(d, rng)
    v = np.exp(1j * 1.234) * u
    flag = FlagState("omega", d)
    circ_u = oqc_build(lambda x: u @ x, lambda x: u.conj() @ x, d, flag)
    circ_v = oqc_build(lambda x: v @ x, lambda x: v.conj() @ x, d, flag)
    ind_u = oqc_induced_operator(circ_u, d, flag)
    ind_v = oqc_induced_operator(circ_v, d, flag)
    assert np.abs(ind_u - ind_v).max() < 1e-10


def test_multiplexer_resolves_identity():
    rng = np.random.default_rng(109)
    d = 2
    u0, u1 = random_unitary(d, rng), random_unitary(d, rng)
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    mux = multiplexer_build(
        [p0, p1],
        [
            (lambda v: u0 @ v, lambda v: u0.conj() @ v),
            (lambda v: u1 @ v, lambda v: u1.conj() @ v),
        ],
        d,
    )
    want = np.kron(p0, np.kron(u0, u0.conj())) + np.kron(p1, np.kron(u1, u1.conj()))
    assert np.abs(mux - want).max() < 1e-10


def test_multiplexer_rejects_non_resolution():
    d = 2
    p0 = np.diag([1.0, 0.0]).astype(complex)
    with pytest.raises(StateValidationError):
        multiplexer_build(
            [p0], [(lambda v: v, lambda v: v)], d
        )


def test_boundary_compilation_basis_outcomes():
    ops = toffoli_boundary_compile()
    compiled = sequence_unitary(ops, 3)
    lay = RegisterLayout.of(("q0", 2), ("q1", 2), ("q2", 2))
    ccx = np.eye(8, dtype=complex)[[0, 1, 2, 3, 4, 5, 7, 6]]
    # equal up to a diagonal sign, so all basis outcome distributions match
    for idx in range(8):
        e = np.zeros(8, dtype=complex)
        e[idx] = 1.0
        pa = np.abs(compiled @ e) ** 2
        pb = np.abs(ccx @ e) ** 2
        assert np.abs(pa - pb).max() < 1e-10


def test_bell_projector_rank_one():
    for d in (2, 3):
        p = bell_projector(d)
        assert abs(np.trace(p) - 1.0) < 1e-12
        assert np.abs(p @ p - p).max() < 1e-12
