"""End-to-end compilation plus validation against the exact exponential."""

from dataclasses import dataclass
import csv
import io
import json
import time

import numpy as np

from . import qmatrix as qm
from . import trotter
from .channel import canonical_channel, quasi_extreme_split
from .circuit import (
    ANCILLA,
    RESET,
    SYSTEM,
    ChannelProgram,
    Gate,
    MixtureStage,
    UnitaryStage,
    program_superop,
    run_program,
    single_qubit_gates,
    synthesize,
)
from .formats import JobSpec
from .generator import lindblad_superop, spectral_split

PROBE_SEED = 20240611
N_RANDOM_PROBES = 18


def hamiltonian_stage(h, tau):
    """Unitary stage for ``exp(-i H tau)`` on the system qubit."""
    u = qm.expm(-1j * np.asarray(h, dtype=complex), tau)
    return UnitaryStage(single_qubit_gates(u, SYSTEM))


def dissipative_stage(component, tau):
    """Mixture stage for ``exp(tau * component)``.

    Each branch resets the ancilla, rotates into the canonical frame with
    ``U^+``, runs one quasi-extreme member circuit, and rotates back.
    """
    pair = quasi_extreme_split(canonical_channel(component.theta, component.weight * tau))
    pre = single_qubit_gates(qm.dagger(component.U), SYSTEM)
    post = single_qubit_gates(component.U, SYSTEM)
    branches = [
        (0.5, [Gate(RESET, ANCILLA)] + pre + synthesize(m.dilation) + post) for m in pair.members
    ]
    return MixtureStage(branches)


def compile_job(job, norms=None):
    """Compile a job into a channel program and its Trotter plan.

    Stages for identical (generator, duration) factors are shared objects.

    Raises:
        NegativeDurationError: the requested order needs negative durations.
    """
    decomp = spectral_split(job.generator)
    plan = trotter.plan(decomp, job.t, job.eps, k_override=job.k_override, mode="circuit", norms=norms)
    cache = {}
    stages = []
    for f in plan.sequence():
        key = (f.gen_index, f.duration)
        if key not in cache:
            tau = plan.physical_time(f)
            if f.gen_index == 0:
                cache[key] = hamiltonian_stage(decomp.hamiltonian, tau)
            else:
                cache[key] = dissipative_stage(decomp.component(f.gen_index), tau)
        stages.append(cache[key])
    program = ChannelProgram(stages=stages)
    program.metadata = {
        "n_exp": plan.n_exp,
        "n_exp_bound": plan.n_exp_bound,
        "k": plan.k,
        "r": plan.r,
        "reps": plan.reps,
        "gate_counts": program.gate_counts(),
        "stage_counts": program.stage_counts(),
    }
    return program, plan


def probe_states():
    """Six Pauli eigenstates followed by 18 fixed random pure states."""
    states = []
    for axis in range(3):
        for sign in (1.0, -1.0):
            r = np.zeros(3)
            r[axis] = sign
            states.append(qm.bloch_state(r))
    rng = np.random.default_rng(PROBE_SEED)
    for _ in range(N_RANDOM_PROBES):
        psi = rng.normal(size=2) + 1j * rng.normal(size=2)
        states.append(qm.pure_state(psi / np.linalg.norm(psi)))
    return states


@dataclass
class ValidationReport:
    t: float
    eps: float
    k: int
    r: float
    reps: int
    n_exp: int
    n_exp_bound: int
    gate_count: int
    trace_dist_max: float
    superop_max_entry: float
    superop_one_to_one: float
    bound_satisfied: bool
    runtime_ms: float = 0.0

    def as_dict(self, include_runtime=False):
        out = {
            "t": self.t,
            "eps": self.eps,
            "k": self.k,
            "r": self.r,
            "reps": self.reps,
            "n_exp": self.n_exp,
            "n_exp_bound": self.n_exp_bound,
            "gate_count": self.gate_count,
            "trace_dist_max": self.trace_dist_max,
            "superop_error": {"max_entry": self.superop_max_entry, "one_to_one": self.superop_one_to_one},
            "bound_satisfied": self.bound_satisfied,
        }
        if include_runtime:
            out["runtime_ms"] = self.runtime_ms
        return out

    def to_json(self, include_runtime=False):
        """JSON with a fixed key order; runtime is opt-in so reruns are byte-identical."""
        return json.dumps(self.as_dict(include_runtime), indent=2) + "\n"


def compare_superops(approx, exact):
    """``(max trace distance over probes, max entry distance, 1->1 estimate)``."""
    diff = approx - exact
    tdist = max(
        qm.trace_distance(qm.apply_superop(approx, rho), qm.apply_superop(exact, rho)) for rho in probe_states()
    )
    return tdist, qm.max_entry_distance(approx, exact), qm.one_to_one_norm(diff)


def validate(job, norms=None):
    """Compile ``job`` and compare its exact program channel with ``exp(t L)``."""
    start = time.perf_counter()
    program, plan = compile_job(job, norms=norms)
    approx = program_superop(program)
    exact = qm.expm(lindblad_superop(job.generator), job.t)
    tdist, max_entry, one_one = compare_superops(approx, exact)
    return ValidationReport(
        t=job.t,
        eps=job.eps,
        k=plan.k,
        r=plan.r,
        reps=plan.reps,
        n_exp=plan.n_exp,
        n_exp_bound=plan.n_exp_bound,
        gate_count=sum(program.metadata["gate_counts"].values()),
        trace_dist_max=tdist,
        superop_max_entry=max_entry,
        superop_one_to_one=one_one,
        bound_satisfied=bool(one_one <= job.eps),
        runtime_ms=1000.0 * (time.perf_counter() - start),
    )


def simulate(job, rho0):
    """Run the compiled program on ``rho0`` in the job's mode."""
    program, _ = compile_job(job)
    return run_program(program, rho0, mode=job.mode, seed=job.seed, trajectories=job.trajectories)


BENCH_COLUMNS = ("t", "eps", "k", "r", "reps", "n_exp", "gate_count", "measured_error", "runtime_ms")


def bench(grid):
    """One row per ``(t, eps)`` of the grid, sorted by ``t`` then decreasing ``eps``."""
    decomp = spectral_split(grid.generator)
    norms = trotter.component_norms(decomp, decomp.active_indices())
    rows = []
    for t in sorted(set(grid.ts)):
        for eps in sorted(set(grid.epss), reverse=True):
            job = JobSpec(generator=grid.generator, t=t, eps=eps, k_override=grid.k_override, seed=grid.seed)
            rep = validate(job, norms=norms)
            rows.append(
                {
                    "t": t,
                    "eps": eps,
                    "k": rep.k,
                    "r": rep.r,
                    "reps": rep.reps,
                    "n_exp": rep.n_exp,
                    "gate_count": rep.gate_count,
                    "measured_error": rep.superop_one_to_one,
                    "runtime_ms": rep.runtime_ms,
                }
            )
    return rows


def bench_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def loglog_slope(xs, ys):
    """Least-squares slope of ``log y`` against ``log x``."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])

