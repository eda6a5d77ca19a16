"""One-ancilla circuits: dilation, synthesis into CNOT + RY/RZ, and execution.

Qubit 0 is the ancilla (environment) and qubit 1 the system. Joint operators
act on ``ancilla (x) system``, so basis index ``2*a + s``.
"""

from collections import Counter
from dataclasses import dataclass, field
import math

import numpy as np

from . import qmatrix as qm
from .exceptions import InvalidInputError, ParseError, PatternError, ValidationError

ANCILLA = 0
SYSTEM = 1

RY, RZ, CNOT, RESET = "RY", "RZ", "CNOT", "RESET"
_KINDS = (RY, RZ, CNOT, RESET)

_OUTER = (0, 3)  # |00>, |11>
_INNER = (1, 2)  # |01>, |10>


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: int = None
    angle: float = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidInputError(f"unknown gate kind {self.kind!r}")
        if self.target not in (0, 1):
            raise InvalidInputError(f"target must be qubit 0 or 1, got {self.target}")
        if self.kind == CNOT:
            if self.control not in (0, 1) or self.control == self.target:
                raise InvalidInputError("CNOT needs a control distinct from its target")
        elif self.control is not None:
            raise InvalidInputError(f"{self.kind} takes no control qubit")
        if self.kind in (RY, RZ):
            if self.angle is None or not math.isfinite(self.angle):
                raise InvalidInputError(f"{self.kind} needs a finite angle")
        elif self.angle is not None:
            raise InvalidInputError(f"{self.kind} takes no angle")

    def matrix(self):
        """The 4x4 unitary of this gate on ancilla (x) system."""
        if self.kind == CNOT:
            return cnot_matrix(self.control, self.target)
        if self.kind == RESET:
            raise InvalidInputError("RESET is not unitary")
        single = ry(self.angle) if self.kind == RY else rz(self.angle)
        return embed(single, self.target)


def ry(theta):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta):
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex)


def embed(single, qubit):
    return np.kron(single, qm.I2) if qubit == ANCILLA else np.kron(qm.I2, single)


def cnot_matrix(control, target):
    m = np.zeros((4, 4), dtype=complex)
    for a in range(2):
        for s in range(2):
            bits = [a, s]
            if bits[control]:
                bits[target] ^= 1
            m[2 * bits[0] + bits[1], 2 * a + s] = 1.0
    return m


def gates_unitary(gates):
    """Ordered product of a reset-free gate list (first gate acts first)."""
    u = np.eye(4, dtype=complex)
    for g in gates:
        u = g.matrix() @ u
    return u


def equal_up_to_phase(a, b, tol=1e-9):
    """Compare after normalizing the largest-magnitude entry of each to be real positive."""
    return phase_normalized(a, b) <= tol


def phase_normalized(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    i = np.unravel_index(np.argmax(np.abs(a)), a.shape)
    if abs(a[i]) == 0 or abs(b[i]) == 0:
        return float(np.max(np.abs(a - b)))
    a = a * (abs(a[i]) / a[i])
    b = b * (abs(b[i]) / b[i])
    return float(np.max(np.abs(a - b)))


# ---------------------------------------------------------------------------
# Dilation
# ---------------------------------------------------------------------------


def kraus_completeness_residual(kraus):
    total = sum(qm.dagger(k) @ k for k in kraus)
    return float(np.max(np.abs(total - qm.I2)))


def dilation_unitary(kraus, tol=1e-10):
    """Two-qubit unitary ``U`` with ``U (|0> (x) psi) = sum_j |j> (x) K_j psi``.

    Columns 0 and 1 are fixed by the Kraus pair. Columns 2 and 3 are completed
    by Gram-Schmidt, each seeded with its own canonical basis vector first and
    then the remaining ones in index order. For diagonal/antidiagonal Kraus
    pairs this keeps the outer/inner two-level block pattern.

    Raises:
        ValidationError: the Kraus pair is not trace preserving.
    """
    if len(kraus) == 1:
        kraus = [kraus[0], np.zeros((2, 2))]
    if len(kraus) != 2:
        raise InvalidInputError("dilation needs one or two Kraus operators")
    kraus = [qm.as_matrix(k, 2, "Kraus operator") for k in kraus]
    res = kraus_completeness_residual(kraus)
    if res > tol:
        raise ValidationError(f"Kraus operators are not complete (residual {res:.3e})")
    cols = [np.concatenate([kraus[0][:, s], kraus[1][:, s]]) for s in range(2)]
    u = np.zeros((4, 4), dtype=complex)
    u[:, 0], u[:, 1] = cols
    eye = np.eye(4, dtype=complex)
    fixed = list(cols)
    for col in (2, 3):
        seeds = [eye[col]] + [eye[i] for i in range(4) if i != col]
        for cand in seeds:
            v = cand.copy()
            for _ in range(2):
                for f in fixed:
                    v = v - f * np.vdot(f, v)
            n = np.linalg.norm(v)
            if n > 1e-6:
                v = v / n
                break
        u[:, col] = v
        fixed.append(v)
    return u


def dilated_channel_superop(u):
    """System superoperator of ``rho -> tr_E[U (|0><0| (x) rho) U^+]``."""

    def f(rho):
        joint = u @ np.kron(np.diag([1.0, 0.0]), rho) @ qm.dagger(u)
        return qm.partial_trace(joint, keep=1)

    return qm.superop_of_map(f)


# ---------------------------------------------------------------------------
# Two-level factorization and synthesis
# ---------------------------------------------------------------------------


def two_level_factor(u, tol=1e-10):
    """Split a block-patterned unitary into commuting two-level factors.

    ``u`` may only couple ``{|00>, |11>}`` among themselves and
    ``{|01>, |10>}`` among themselves. Returns ``(uA, uB, tildeA, tildeB)``
    with ``u = uA @ uB``, ``uA`` acting on the outer pair and ``uB`` on the
    inner pair, and ``tildeA``/``tildeB`` their 2x2 blocks.

    Raises:
        PatternError: entries outside the two blocks exceed ``tol``.
    """
    u = qm.as_matrix(u, 4, "unitary")
    mask = np.zeros((4, 4), dtype=bool)
    for blk in (_OUTER, _INNER):
        for i in blk:
            for j in blk:
                mask[i, j] = True
    off = float(np.max(np.abs(u[~mask])))
    if off > tol:
        raise PatternError(f"unitary has off-pattern entries (max {off:.3e})")
    ta = u[np.ix_(_OUTER, _OUTER)].copy()
    tb = u[np.ix_(_INNER, _INNER)].copy()
    ua = np.eye(4, dtype=complex)
    ub = np.eye(4, dtype=complex)
    ua[np.ix_(_OUTER, _OUTER)] = ta
    ub[np.ix_(_INNER, _INNER)] = tb
    return ua, ub, ta, tb


def zyz(w):
    """Euler angles with ``w = e^{i delta} Rz(a) Ry(g) Rz(b)``.

    Returns ``(delta, a, g, b)`` with ``g`` in ``[0, pi]``.
    """
    w = qm.as_matrix(w, 2, "single-qubit unitary")
    det = complex(np.linalg.det(w))
    delta = 0.5 * math.atan2(det.imag, det.real)
    v = w * np.exp(-1j * delta)
    g = 2.0 * math.atan2(abs(v[1, 0]), abs(v[0, 0]))
    s = 2.0 * np.angle(v[1, 1]) if abs(v[1, 1]) > 1e-14 else 0.0
    d = 2.0 * np.angle(v[1, 0]) if abs(v[1, 0]) > 1e-14 else 0.0
    return delta, 0.5 * (s + d), g, 0.5 * (s - d)


def _rot(kind, qubit, angle, tol=1e-15):
    return [Gate(kind, qubit, angle=float(angle))] if abs(angle) > tol else []


def single_qubit_gates(w, qubit=SYSTEM):
    """RZ/RY/RZ gates (time order) implementing ``w`` up to global phase."""
    _, a, g, b = zyz(w)
    return _rot(RZ, qubit, b) + _rot(RY, qubit, g) + _rot(RZ, qubit, a)


def controlled_gates(w, control, target):
    """Controlled-``w`` as ``C, CNOT, B, CNOT, A`` plus a control-qubit RZ.

    With ``w = e^{i delta} Rz(a) Ry(g) Rz(b)``: ``A = Rz(a) Ry(g/2)``,
    ``B = Ry(-g/2) Rz(-(a+b)/2)``, ``C = Rz((b-a)/2)`` so ``ABC = I`` and
    ``A X B X C = e^{-i delta} w``; ``Rz(delta)`` on the control restores the
    relative phase.
    """
    delta, a, g, b = zyz(w)
    cx = Gate(CNOT, target, control=control)
    return (
        _rot(RZ, target, 0.5 * (b - a))
        + [cx]
        + _rot(RZ, target, -0.5 * (a + b))
        + _rot(RY, target, -0.5 * g)
        + [cx]
        + _rot(RY, target, 0.5 * g)
        + _rot(RZ, target, a)
        + _rot(RZ, control, delta)
    )


def _cancel_cnot_pairs(gates):
    out = []
    for g in gates:
        if out and g.kind == CNOT and out[-1] == g:
            out.pop()
        else:
            out.append(g)
    return out


def synthesize(u, tol=1e-10):
    """Gate list (time order) whose product equals ``u`` up to global phase.

    Only the outer/inner two-level pattern is supported. With the CNOT
    ``C`` (control system, target ancilla), ``C uB C`` is the ancilla-1
    controlled ``X tildeB X`` and ``C uA C`` is the ancilla-0 controlled
    ``tildeA``, realised as ``(1 (x) tildeA)`` after an ancilla-1 controlled
    ``tildeA^+``.

    Raises:
        ValidationError: ``u`` is not unitary.
        PatternError: ``u`` is outside the supported pattern.
    """
    u = qm.as_matrix(u, 4, "unitary")
    if not qm.is_unitary(u, tol):
        raise ValidationError("synthesize needs a unitary input")
    _, _, ta, tb = two_level_factor(u, tol)
    c = Gate(CNOT, ANCILLA, control=SYSTEM)
    gates = []
    if np.max(np.abs(tb - qm.I2)) > 1e-14:
        gates += [c] + controlled_gates(qm.SX @ tb @ qm.SX, ANCILLA, SYSTEM) + [c]
    if np.max(np.abs(ta - qm.I2)) > 1e-14:
        gates += (
            [c]
            + controlled_gates(qm.dagger(ta), ANCILLA, SYSTEM)
            + single_qubit_gates(ta, SYSTEM)
            + [c]
        )
    return _cancel_cnot_pairs(gates)


# ---------------------------------------------------------------------------
# Programs and execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnitaryStage:
    gates: tuple

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if any(g.kind == RESET for g in self.gates):
            raise InvalidInputError("unitary stages cannot contain RESET")


@dataclass(frozen=True)
class MixtureStage:
    branches: tuple  # of (probability, gates)

    def __post_init__(self):
        branches = tuple((float(p), tuple(gs)) for p, gs in self.branches)
        object.__setattr__(self, "branches", branches)
        if not branches:
            raise InvalidInputError("mixture needs at least one branch")
        probs = [p for p, _ in branches]
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-12:
            raise InvalidInputError(f"mixture probabilities must be >= 0 and sum to 1, got {probs}")
        for _, gs in branches:
            if not gs or gs[0].kind != RESET or gs[0].target != ANCILLA:
                raise InvalidInputError("every mixture branch must start with RESET on the ancilla")


def _gate_counts(gates):
    counts = dict.fromkeys(_KINDS, 0)
    for g in gates:
        counts[g.kind] += 1
    return counts


@dataclass
class ChannelProgram:
    """Ordered unitary and mixture stages acting on ancilla (x) system.

    Stage objects may be shared between positions; execution and counting
    cache per distinct stage.
    """

    stages: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def stage_counts(self):
        n_mix = sum(isinstance(s, MixtureStage) for s in self.stages)
        return {"stages": len(self.stages), "mixture": n_mix, "unitary": len(self.stages) - n_mix}

    def gate_counts(self):
        """Gates per kind along one run; mixtures count their longest branch."""
        uses = Counter(id(st) for st in self.stages)
        distinct = {id(st): st for st in self.stages}
        total = dict.fromkeys(_KINDS, 0)
        for key, n in uses.items():
            st = distinct[key]
            if isinstance(st, UnitaryStage):
                counts = _gate_counts(st.gates)
            else:
                counts = _gate_counts(max((gs for _, gs in st.branches), key=len))
            for k, v in counts.items():
                total[k] += n * v
        return total

    def gate_count(self):
        return sum(self.gate_counts().values())


_RESET_SUPEROPS = {}


def _reset_superop(qubit):
    if qubit not in _RESET_SUPEROPS:
        zero = np.diag([1.0, 0.0]).astype(complex)

        def f(rho):
            if qubit == ANCILLA:
                return np.kron(zero, qm.partial_trace(rho, keep=1))
            return np.kron(qm.partial_trace(rho, keep=0), zero)

        _RESET_SUPEROPS[qubit] = qm.superop_of_map(f, dim=4)
    return _RESET_SUPEROPS[qubit]


def gates_superop(gates):
    """16x16 joint superoperator of a gate list (RESET allowed)."""
    s = np.eye(16, dtype=complex)
    u = np.eye(4, dtype=complex)
    for g in gates:
        if g.kind == RESET:
            s = _reset_superop(g.target) @ qm.unitary_superop(u) @ s
            u = np.eye(4, dtype=complex)
        else:
            u = g.matrix() @ u
    return qm.unitary_superop(u) @ s


def stage_superop(stage):
    if isinstance(stage, UnitaryStage):
        return gates_superop(stage.gates)
    return sum(p * gates_superop(gs) for p, gs in stage.branches)


def _io_maps():
    zero = np.diag([1.0, 0.0]).astype(complex)
    p_in = np.zeros((16, 4), dtype=complex)
    p_out = np.zeros((4, 16), dtype=complex)
    for col in range(4):
        e = np.zeros(4, dtype=complex)
        e[col] = 1
        p_in[:, col] = qm.vec(np.kron(zero, qm.unvec(e)))
    for col in range(16):
        e = np.zeros(16, dtype=complex)
        e[col] = 1
        p_out[:, col] = qm.vec(qm.partial_trace(qm.unvec(e), keep=1))
    return p_in, p_out


_P_IN, _P_OUT = _io_maps()


def _longest_periodic_run(ids, max_period=64):
    """``(start, period, copies)`` of the longest exactly repeating stretch of ``ids``."""
    best = (0, 1, 0)
    n = len(ids)
    for p in range(1, min(max_period, n // 2) + 1):
        eq = np.concatenate([[False], ids[:-p] == ids[p:], [False]])
        edges = np.flatnonzero(np.diff(eq.astype(np.int8)))
        if not len(edges):
            continue
        lengths = edges[1::2] - edges[::2]
        i = int(np.argmax(lengths))
        copies = (int(lengths[i]) + p) // p
        if copies * p > best[1] * best[2]:
            best = (int(edges[2 * i]), p, copies)
    return best


def program_joint_superop(program):
    """Exact 16x16 superoperator of all stages.

    The longest periodic stretch of shared stages (one Trotter block repeated)
    is raised to a matrix power instead of being multiplied out stage by stage.
    """
    cache = {}

    def compose(stages):
        s = np.eye(16, dtype=complex)
        for st in stages:
            key = id(st)
            if key not in cache:
                cache[key] = stage_superop(st)
            s = cache[key] @ s
        return s

    stages = program.stages
    ids = np.fromiter((id(st) for st in stages), dtype=np.int64, count=len(stages))
    start, period, copies = _longest_periodic_run(ids) if len(stages) > 8 else (0, 1, 0)
    if copies < 4:
        return compose(stages)
    end = start + period * copies
    middle = np.linalg.matrix_power(compose(stages[start : start + period]), copies)
    return compose(stages[end:]) @ middle @ compose(stages[:start])


def program_superop(program):
    """System superoperator: prepare ancilla |0>, run all stages, trace ancilla."""
    return _P_OUT @ program_joint_superop(program) @ _P_IN


def check_joint_state(rho, tol=1e-10):
    rho = qm.as_matrix(rho, 4, "joint state")
    if not qm.is_hermitian(rho, tol):
        raise ValidationError("joint state is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValidationError("joint state does not have unit trace")
    if qm.eigh(rho)[0][0] < -tol:
        raise ValidationError("joint state is not positive semidefinite")
    return rho


def apply_gates(gates, state):
    """Apply a gate list to a 4x4 joint density matrix."""
    rho = np.asarray(state, dtype=complex)
    for g in gates:
        if g.kind == RESET:
            rho = qm.unvec(_reset_superop(g.target) @ qm.vec(rho))
        else:
            m = g.matrix()
            rho = m @ rho @ qm.dagger(m)
    return rho


def _segments(gates):
    """Collapse a gate list into alternating unitary products and resets."""
    segs = []
    u = None
    for g in gates:
        if g.kind == RESET:
            if u is not None:
                segs.append(("U", u))
                u = None
            segs.append(("R", g.target))
        else:
            u = g.matrix() if u is None else g.matrix() @ u
    if u is not None:
        segs.append(("U", u))
    return segs


def _apply_segments_batch(segs, states):
    for kind, val in segs:
        if kind == "U":
            states = val @ states @ qm.dagger(val)
        else:
            r = _reset_superop(val)
            vecs = np.transpose(states, (0, 2, 1)).reshape(len(states), 16)
            vecs = vecs @ r.T
            states = np.transpose(vecs.reshape(len(states), 4, 4), (0, 2, 1))
    return states


@dataclass
class RunReport:
    mode: str
    gate_counts: dict
    stage_counts: dict
    trajectories: int = 0
    seed: int = None
    standard_error: float = None

    def as_dict(self):
        return {
            "mode": self.mode,
            "gate_counts": self.gate_counts,
            "stage_counts": self.stage_counts,
            "trajectories": self.trajectories,
            "seed": self.seed,
            "standard_error": self.standard_error,
        }


def run_program(program, rho0, mode="deterministic", seed=0, trajectories=1000):
    """Execute a program on ``|0><0| (x) rho0`` and return the system state.

    ``deterministic`` composes exact stage superoperators, averaging every
    mixture. ``sampled`` draws one branch per mixture stage per trajectory
    and averages the final system states; all uniforms are drawn up front
    from ``numpy.random.default_rng(seed)`` as a ``(trajectories, n_mixtures)``
    table, so trajectory ``i`` depends only on the seed and ``i``. The
    reported standard error is an RMS estimate of the trace distance between
    the sample mean and its expectation.
    """
    rho0 = qm.check_density_matrix(rho0, tol=1e-10)
    report = RunReport(mode=mode, gate_counts=program.gate_counts(), stage_counts=program.stage_counts())
    if mode == "deterministic":
        return qm.apply_superop(program_superop(program), rho0), report
    if mode != "sampled":
        raise InvalidInputError(f"unknown mode {mode!r}")
    if trajectories <= 0:
        raise ValidationError("sampled mode needs trajectories >= 1")

    n_mix = sum(isinstance(s, MixtureStage) for s in program.stages)
    rng = np.random.default_rng(seed)
    draws = rng.random((trajectories, n_mix))
    joint0 = np.kron(np.diag([1.0, 0.0]), rho0)
    states = np.broadcast_to(joint0, (trajectories, 4, 4)).copy()
    seg_cache = {}
    col = 0
    for st in program.stages:
        key = id(st)
        if isinstance(st, UnitaryStage):
            if key not in seg_cache:
                seg_cache[key] = _segments(st.gates)
            states = _apply_segments_batch(seg_cache[key], states)
            continue
        if key not in seg_cache:
            seg_cache[key] = (
                np.cumsum([p for p, _ in st.branches]),
                [_segments(gs) for _, gs in st.branches],
            )
        cum, segs = seg_cache[key]
        choice = np.searchsorted(cum, draws[:, col], side="right")
        choice = np.minimum(choice, len(segs) - 1)
        col += 1
        for b, seg in enumerate(segs):
            idx = np.nonzero(choice == b)[0]
            if len(idx):
                states[idx] = _apply_segments_batch(seg, states[idx])
    sys_states = np.einsum("naiaj->nij", states.reshape(trajectories, 2, 2, 2, 2))
    mean = sys_states.mean(axis=0)
    if trajectories > 1:
        dev = sys_states - mean
        msq = np.sum(np.abs(dev) ** 2) / (trajectories * (trajectories - 1))
        report.standard_error = float(math.sqrt(msq / 2.0))
    else:
        report.standard_error = float("nan")
    report.trajectories = trajectories
    report.seed = seed
    return mean, report


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------


def _gate_line(g):
    if g.kind == CNOT:
        return f"cnot q{g.control} q{g.target}"
    if g.kind == RESET:
        return f"reset q{g.target}"
    return f"{g.kind.lower()} q{g.target} {g.angle:.17g}"


def program_to_text(program):
    """Serialize a program: one gate per line, mixtures in begin/end blocks."""
    lines = []
    for st in program.stages:
        if isinstance(st, UnitaryStage):
            lines.extend(_gate_line(g) for g in st.gates)
        else:
            lines.append("begin mixture")
            for p, gs in st.branches:
                lines.append(f"branch {p:.17g}")
                lines.extend(_gate_line(g) for g in gs)
            lines.append("end mixture")
    return "\n".join(lines) + ("\n" if lines else "")


def _parse_qubit(tok, lineno):
    if len(tok) != 2 or tok[0] != "q" or tok[1] not in "01":
        raise ParseError(f"bad qubit {tok!r}", lineno)
    return int(tok[1])


def _parse_gate(parts, lineno):
    op = parts[0]
    try:
        if op in ("ry", "rz") and len(parts) == 3:
            return Gate(op.upper(), _parse_qubit(parts[1], lineno), angle=float(parts[2]))
        if op == "cnot" and len(parts) == 3:
            return Gate(CNOT, _parse_qubit(parts[2], lineno), control=_parse_qubit(parts[1], lineno))
        if op == "reset" and len(parts) == 2:
            return Gate(RESET, _parse_qubit(parts[1], lineno))
    except (ValueError, InvalidInputError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc), lineno) from exc
    raise ParseError(f"cannot parse gate {' '.join(parts)!r}", lineno)


def program_from_text(text):
    """Inverse of :func:`program_to_text`; consecutive top-level gates form one stage."""
    stages = []
    pending = []
    mixture = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts == ["begin", "mixture"]:
            if mixture is not None:
                raise ParseError("nested mixture", lineno)
            if pending:
                stages.append(UnitaryStage(pending))
                pending = []
            mixture = []
        elif parts == ["end", "mixture"]:
            if mixture is None:
                raise ParseError("'end mixture' without 'begin mixture'", lineno)
            try:
                stages.append(MixtureStage([(p, gs) for p, gs in mixture]))
            except InvalidInputError as exc:
                raise ParseError(str(exc), lineno) from exc
            mixture = None
        elif parts[0] == "branch":
            if mixture is None or len(parts) != 2:
                raise ParseError("'branch <prob>' only inside a mixture", lineno)
            try:
                mixture.append((float(parts[1]), []))
            except ValueError as exc:
                raise ParseError(f"bad probability {parts[1]!r}", lineno) from exc
        else:
            gate = _parse_gate(parts, lineno)
            if mixture is not None:
                if not mixture:
                    raise ParseError("gate before first branch", lineno)
                mixture[-1][1].append(gate)
            else:
                pending.append(gate)
    if mixture is not None:
        raise ParseError("unterminated mixture")
    if pending:
        stages.append(UnitaryStage(pending))
    return ChannelProgram(stages=stages)
