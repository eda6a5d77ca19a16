import math

import numpy as np
import pytest

from lindcirc import channel as chm
from lindcirc import circuit as cc
from lindcirc import generator as gen
from lindcirc import qmatrix as qm
from lindcirc.circuit import ANCILLA, CNOT, RESET, RY, RZ, SYSTEM, Gate
from lindcirc.exceptions import InvalidInputError, ParseError, PatternError, ValidationError

from _support import random_density, random_unitary

ZERO = np.diag([1.0, 0.0]).astype(complex)
ONE = np.diag([0.0, 1.0]).astype(complex)


def member_pair(theta, t):
    return chm.quasi_extreme_split(chm.canonical_channel(theta, t))


def mixture_of(pair):
    return cc.MixtureStage([(0.5, [Gate(RESET, ANCILLA)] + cc.synthesize(m.dilation)) for m in pair.members])


def block_unitary(outer, inner):
    u = np.eye(4, dtype=complex)
    u[np.ix_((0, 3), (0, 3))] = outer
    u[np.ix_((1, 2), (1, 2))] = inner
    return u


# -- gates ----------------------------------------------------------------------


def test_gate_validation():
    with pytest.raises(InvalidInputError):
        Gate("H", 0)
    with pytest.raises(InvalidInputError):
        Gate(CNOT, 0, control=0)
    with pytest.raises(InvalidInputError):
        Gate(RY, 1)
    with pytest.raises(InvalidInputError):
        Gate(RESET, 0, angle=0.1)
    with pytest.raises(InvalidInputError):
        Gate(RESET, 0).matrix()


def test_rotation_matrices():
    assert np.allclose(cc.ry(math.pi), [[0, -1], [1, 0]])
    assert np.allclose(cc.rz(math.pi), np.diag([-1j, 1j]))
    # ancilla is the first tensor factor
    assert np.allclose(Gate(RY, ANCILLA, angle=0.3).matrix(), np.kron(cc.ry(0.3), qm.I2))


def test_cnot_basis_action():
    # control system, target ancilla: |a s> -> |a xor s, s>
    u = cc.cnot_matrix(control=SYSTEM, target=ANCILLA)
    for a in (0, 1):
        for s in (0, 1):
            assert u[2 * (a ^ s) + s, 2 * a + s] == 1


def test_zyz_round_trip(rng):
    for _ in range(50):
        w = random_unitary(rng)
        delta, a, g, b = cc.zyz(w)
        assert np.allclose(np.exp(1j * delta) * cc.rz(a) @ cc.ry(g) @ cc.rz(b), w, atol=1e-12)
        assert cc.equal_up_to_phase(cc.gates_unitary(cc.single_qubit_gates(w, SYSTEM)), np.kron(qm.I2, w))


def test_controlled_gates_match_controlled_unitary(rng):
    for _ in range(30):
        w = random_unitary(rng)
        for control, target in ((ANCILLA, SYSTEM), (SYSTEM, ANCILLA)):
            proj = [np.kron(ZERO, qm.I2), np.kron(ONE, qm.I2)] if control == ANCILLA else [
                np.kron(qm.I2, ZERO),
                np.kron(qm.I2, ONE),
            ]
            wt = cc.embed(w, target)
            expect = proj[0] + proj[1] @ wt
            got = cc.gates_unitary(cc.controlled_gates(w, control, target))
            # the control-qubit RZ leaves a global phase
            assert cc.phase_normalized(got, expect) < 1e-12


def test_controlled_ry_example():
    alpha = 0.4
    gates = cc.controlled_gates(cc.ry(2 * alpha), ANCILLA, SYSTEM)
    # time order of the product RY(alpha) CNOT RY(-alpha) CNOT
    assert gates == [
        Gate(CNOT, SYSTEM, control=ANCILLA),
        Gate(RY, SYSTEM, angle=-alpha),
        Gate(CNOT, SYSTEM, control=ANCILLA),
        Gate(RY, SYSTEM, angle=alpha),
    ]
    expect = np.kron(ZERO, qm.I2) + np.kron(ONE, cc.ry(2 * alpha))
    assert np.max(np.abs(cc.gates_unitary(gates) - expect)) < 1e-12


# -- dilation -----------------------------------------------------------------------


def test_dilation_of_identity_and_x():
    u = cc.dilation_unitary([qm.I2, np.zeros((2, 2))])
    assert np.allclose(cc.dilated_channel_superop(u), np.eye(4))
    u = cc.dilation_unitary([qm.SX])
    assert np.allclose(cc.dilated_channel_superop(u), qm.unitary_superop(qm.SX))


def test_dilation_rejects_incomplete_kraus():
    with pytest.raises(ValidationError):
        cc.dilation_unitary([0.5 * qm.I2, np.zeros((2, 2))])


def test_dilation_reproduces_random_kraus_pairs(rng):
    for _ in range(200):
        kraus = qm.random_kraus(rng, 2)
        u = cc.dilation_unitary(kraus)
        assert qm.is_unitary(u, 1e-12)
        assert np.max(np.abs(cc.dilated_channel_superop(u) - qm.kraus_to_superop(kraus))) <= 1e-10


def test_member_dilation_has_two_level_pattern():
    for m in member_pair(math.pi / 4, math.log(2)).members:
        u = m.dilation
        for i, j in [(0, 1), (0, 2), (1, 0), (1, 3), (2, 0), (2, 3), (3, 1), (3, 2)]:
            assert abs(u[i, j]) < 1e-12
        assert np.max(np.abs(cc.dilated_channel_superop(u) - m.superop())) < 1e-12


# -- two-level factorization ------------------------------------------------------------


def test_two_level_factor_identity():
    ua, ub, ta, tb = cc.two_level_factor(np.eye(4))
    assert np.allclose(ta, qm.I2) and np.allclose(tb, qm.I2)
    assert np.allclose(ua, np.eye(4)) and np.allclose(ub, np.eye(4))


def test_two_level_factor_member():
    for m in member_pair(math.pi / 4, math.log(2)).members:
        ua, ub, _, _ = cc.two_level_factor(m.dilation)
        assert np.max(np.abs(ua @ ub - m.dilation)) <= 1e-12
        assert np.allclose(ua @ ub, ub @ ua)


def test_two_level_factor_inner_only(rng):
    u = block_unitary(qm.I2, random_unitary(rng))
    ua, _, _, _ = cc.two_level_factor(u)
    assert np.allclose(ua, np.eye(4))


def test_two_level_factor_rejects_off_pattern(rng):
    with pytest.raises(PatternError):
        cc.two_level_factor(random_unitary(rng, 4))


# -- synthesis -------------------------------------------------------------------------


def test_synthesize_identity_is_empty():
    assert cc.synthesize(np.eye(4)) == []


def test_synthesize_member_example():
    for m in member_pair(0.3, 0.7).members:
        gates = cc.synthesize(m.dilation)
        assert cc.equal_up_to_phase(cc.gates_unitary(gates), m.dilation, 1e-9)
        assert {g.kind for g in gates} <= {RY, RZ, CNOT}


def test_synthesize_random_block_unitaries(rng):
    for _ in range(100):
        u = block_unitary(random_unitary(rng), random_unitary(rng))
        gates = cc.synthesize(u)
        assert cc.phase_normalized(cc.gates_unitary(gates), u) < 1e-9


def test_synthesize_rejects_generic_unitary(rng):
    with pytest.raises(PatternError):
        cc.synthesize(random_unitary(rng, 4))
    with pytest.raises(ValidationError):
        cc.synthesize(2 * np.eye(4))


def test_synthesized_circuits_reproduce_members(rng):
    for theta, t in zip(rng.uniform(0, math.pi / 4, 100), rng.uniform(0.05, 3, 100)):
        for m in member_pair(theta, t).members:
            u = cc.gates_unitary(cc.synthesize(m.dilation))
            assert cc.phase_normalized(u, m.dilation) < 1e-9
            assert np.max(np.abs(cc.dilated_channel_superop(u) - m.superop())) < 1e-9


# -- execution ------------------------------------------------------------------------------


def test_apply_gates_examples(rng):
    state = np.kron(ZERO, ONE)
    assert np.array_equal(cc.apply_gates([], state), state)
    out = cc.apply_gates([Gate(CNOT, ANCILLA, control=SYSTEM)], state)
    assert np.allclose(out, np.kron(ONE, ONE))
    rho = random_density(rng)
    out = cc.apply_gates([Gate(RY, ANCILLA, angle=1.0), Gate(RESET, ANCILLA)], np.kron(ZERO, rho))
    assert np.allclose(out, np.kron(ZERO, rho))


def test_empty_program_returns_input(rng):
    rho = random_density(rng)
    out, report = cc.run_program(cc.ChannelProgram(), rho)
    assert np.allclose(out, rho)
    assert report.stage_counts == {"stages": 0, "mixture": 0, "unitary": 0}


def test_one_mixture_matches_exponential(rng):
    theta, t = 0.3, 0.7
    program = cc.ChannelProgram([mixture_of(member_pair(theta, t))])
    oracle = qm.expm(gen.canonical_superop(theta), t)
    for _ in range(10):
        rho = random_density(rng)
        out, _ = cc.run_program(program, rho)
        assert np.max(np.abs(out - qm.apply_superop(oracle, rho))) <= 1e-10


def test_sampled_mode_statistics_and_determinism():
    program = cc.ChannelProgram([mixture_of(member_pair(0.3, 0.7))] * 2)
    rho = qm.bloch_state([0.6, 0.0, 0.8])
    exact, _ = cc.run_program(program, rho)
    a, rep = cc.run_program(program, rho, mode="sampled", seed=11, trajectories=10_000)
    b, _ = cc.run_program(program, rho, mode="sampled", seed=11, trajectories=10_000)
    assert qm.trace_distance(a, exact) <= 5 / math.sqrt(10_000)
    assert np.array_equal(a, b)
    assert rep.trajectories == 10_000 and rep.seed == 11 and rep.standard_error > 0
    c, _ = cc.run_program(program, rho, mode="sampled", seed=12, trajectories=10_000)
    assert not np.array_equal(a, c)


def test_run_program_errors(rng):
    program = cc.ChannelProgram()
    with pytest.raises(ValidationError):
        cc.run_program(program, random_density(rng), mode="sampled", trajectories=0)
    with pytest.raises(InvalidInputError):
        cc.run_program(program, random_density(rng), mode="fast")
    with pytest.raises(ValidationError):
        cc.run_program(program, np.eye(2))


def test_states_stay_physical_after_every_stage(rng):
    pair = member_pair(0.5, 1.1)
    rot = cc.UnitaryStage(cc.single_qubit_gates(random_unitary(rng), SYSTEM))
    program = cc.ChannelProgram([rot, mixture_of(pair), rot, mixture_of(pair)])
    joint = np.kron(ZERO, random_density(rng))
    for stage in program.stages:
        joint = qm.unvec(cc.stage_superop(stage) @ qm.vec(joint))
        cc.check_joint_state(joint)


def test_program_superop_uses_periodic_runs():
    # many repeats of a short block take the matrix-power path; compare with plain products
    pair = member_pair(0.2, 0.05)
    mix = mixture_of(pair)
    rot = cc.UnitaryStage([Gate(RZ, SYSTEM, angle=0.3)])
    program = cc.ChannelProgram([rot] + [mix, rot] * 20 + [mix])
    direct = np.eye(16, dtype=complex)
    for st in program.stages:
        direct = cc.stage_superop(st) @ direct
    assert np.allclose(cc.program_joint_superop(program), direct, atol=1e-12)


def test_mixture_validation():
    good = [Gate(RESET, ANCILLA)]
    with pytest.raises(InvalidInputError):
        cc.MixtureStage([(0.5, good), (0.6, good)])
    with pytest.raises(InvalidInputError):
        cc.MixtureStage([(1.0, [Gate(RY, SYSTEM, angle=0.1)])])
    with pytest.raises(InvalidInputError):
        cc.MixtureStage([])
    with pytest.raises(InvalidInputError):
        cc.UnitaryStage([Gate(RESET, ANCILLA)])


def test_gate_counts_use_longest_branch():
    short = [Gate(RESET, ANCILLA)]
    long = [Gate(RESET, ANCILLA), Gate(CNOT, ANCILLA, control=SYSTEM), Gate(RY, SYSTEM, angle=0.2)]
    mix = cc.MixtureStage([(0.5, short), (0.5, long)])
    program = cc.ChannelProgram([mix, cc.UnitaryStage([Gate(RZ, SYSTEM, angle=1.0)]), mix])
    assert program.gate_counts() == {RY: 2, RZ: 1, CNOT: 2, RESET: 2}
    assert program.gate_count() == 7


# -- text format ------------------------------------------------------------------------------


def test_text_round_trip(rng):
    pair = member_pair(0.3, 0.7)
    rot = cc.UnitaryStage(cc.single_qubit_gates(random_unitary(rng), SYSTEM))
    program = cc.ChannelProgram([rot, mixture_of(pair), rot])
    text = cc.program_to_text(program)
    back = cc.program_from_text(text)
    assert cc.program_to_text(back) == text
    assert np.array_equal(cc.program_superop(back), cc.program_superop(program))
    assert text.splitlines()[0].startswith("rz q1 ")
    assert "begin mixture" in text and "branch 0.5" in text and "reset q0" in text


def test_text_lines():
    program = cc.ChannelProgram([cc.UnitaryStage([Gate(RY, SYSTEM, angle=0.1), Gate(CNOT, ANCILLA, control=SYSTEM)])])
    assert cc.program_to_text(program) == "ry q1 0.10000000000000001\ncnot q1 q0\n"
    assert cc.program_to_text(cc.ChannelProgram()) == ""


@pytest.mark.parametrize(
    "text,line",
    [
        ("ry q1 0.1\nrx q0 0.2\n", 2),
        ("ry q2 0.1\n", 1),
        ("cnot q0 q0\n", 1),
        ("end mixture\n", 1),
        ("begin mixture\nry q1 0.3\nend mixture\n", 2),
        ("begin mixture\nbranch 0.4\nreset q0\nend mixture\n", 4),
        ("begin mixture\nbranch x\n", 2),
    ],
)
def test_text_parse_errors_name_the_line(text, line):
    with pytest.raises(ParseError, match=f"line {line}"):
        cc.program_from_text(text)


def test_text_unterminated_mixture():
    with pytest.raises(ParseError, match="unterminated"):
        cc.program_from_text("begin mixture\nbranch 1\nreset q0\n")
