import csv
import io
import json
import math

import numpy as np
import pytest

from lindcirc import circuit as cc
from lindcirc import formats as fm
from lindcirc import generator as gen
from lindcirc import pipeline as pl
from lindcirc import qmatrix as qm

from _support import random_spec


def job_for(spec, t=1.0, eps=1e-3, **kw):
    return fm.JobSpec(generator=spec, t=t, eps=eps, **kw)


@pytest.fixture(scope="module")
def generic_spec():
    return random_spec(np.random.default_rng(2024), scale=0.5)


def test_closed_evolution_is_one_unitary_stage():
    spec = gen.GeneratorSpec(A=np.zeros((3, 3)), H=np.array([[0.3, 0.1 - 0.2j], [0.1 + 0.2j, -0.3]]))
    program, plan = pl.compile_job(job_for(spec))
    assert program.stage_counts() == {"stages": 1, "mixture": 0, "unitary": 1}
    assert plan.n_exp == 1
    rep = pl.validate(job_for(spec))
    assert rep.superop_one_to_one <= 1e-9


def test_decay_job_is_one_exact_mixture():
    spec = gen.GeneratorSpec(A=gen.canonical_gks(math.pi / 4), H=np.zeros((2, 2)))
    job = job_for(spec, t=1.0, eps=1e-3)
    program, plan = pl.compile_job(job)
    assert plan.reps == 1
    assert program.stage_counts() == {"stages": 1, "mixture": 1, "unitary": 0}
    rep = pl.validate(job)
    assert rep.trace_dist_max <= 1e-10
    assert rep.superop_one_to_one <= 1e-9


def test_rotated_single_component_is_exact(rng):
    w = rng.normal(size=3) + 1j * rng.normal(size=3)
    spec = gen.GeneratorSpec(A=0.4 * np.outer(w, w.conj()) / np.vdot(w, w).real, H=np.zeros((2, 2)))
    rep = pl.validate(job_for(spec, t=2.0))
    assert rep.n_exp == 1 and rep.superop_max_entry <= 1e-9


def test_generic_job_has_seven_stages_per_block(generic_spec):
    job = job_for(generic_spec, eps=1e-2, k_override=1)
    program, plan = pl.compile_job(job)
    assert len(plan.order) == 4
    assert len(plan.factors) == 7
    # consecutive blocks share their boundary stage
    assert program.stage_counts()["stages"] == plan.n_exp == 7 * plan.reps - (plan.reps - 1)
    n_hamiltonian = sum(f.gen_index == 0 for f in plan.sequence())
    assert program.stage_counts()["unitary"] == n_hamiltonian


def test_generic_job_meets_bound(generic_spec):
    rep = pl.validate(job_for(generic_spec, eps=1e-3, k_override=1))
    assert rep.bound_satisfied
    assert rep.n_exp <= rep.n_exp_bound
    assert rep.trace_dist_max <= rep.superop_one_to_one + 1e-9


def test_zero_time_reports_zero_error(generic_spec):
    rep = pl.validate(job_for(generic_spec, t=0.0))
    assert rep.n_exp == 0 and rep.gate_count == 0
    assert rep.trace_dist_max == rep.superop_max_entry == rep.superop_one_to_one == 0.0


def test_report_json_is_deterministic(generic_spec):
    job = job_for(generic_spec, eps=1e-2, k_override=1)
    a, b = pl.validate(job).to_json(), pl.validate(job).to_json()
    assert a == b
    data = json.loads(a)
    assert list(data) == [
        "t", "eps", "k", "r", "reps", "n_exp", "n_exp_bound", "gate_count",
        "trace_dist_max", "superop_error", "bound_satisfied",
    ]
    assert "runtime_ms" in json.loads(pl.validate(job).to_json(include_runtime=True))


def test_norm_domination(rng):
    for _ in range(5):
        spec = random_spec(rng, scale=rng.uniform(0.2, 1.0), rank=int(rng.integers(1, 4)))
        rep = pl.validate(job_for(spec, t=rng.uniform(0.25, 2), eps=1e-2, k_override=1))
        assert rep.trace_dist_max <= rep.superop_one_to_one + 1e-9
        assert rep.bound_satisfied


def test_probe_states():
    states = pl.probe_states()
    assert len(states) == 24
    for rho in states:
        qm.check_density_matrix(rho)
        assert np.linalg.norm(qm.bloch_vector(rho)) == pytest.approx(1.0)
    assert all(np.array_equal(a, b) for a, b in zip(states, pl.probe_states()))


def test_stage_cache_shares_objects(generic_spec):
    program, plan = pl.compile_job(job_for(generic_spec, eps=1e-2, k_override=1))
    assert len({id(s) for s in program.stages}) <= 2 * len(plan.factors)


def test_simulate_modes(generic_spec):
    rho0 = qm.bloch_state([0.0, 0.6, -0.8])
    job = job_for(generic_spec, t=0.5, eps=1e-2, k_override=1)
    det, _ = pl.simulate(job, rho0)
    exact = qm.apply_superop(qm.expm(gen.lindblad_superop(generic_spec), 0.5), rho0)
    assert qm.trace_distance(det, exact) <= 1e-2
    sampled = fm.JobSpec(**{**job.__dict__, "mode": "sampled", "trajectories": 2000, "seed": 5})
    a, rep = pl.simulate(sampled, rho0)
    b, _ = pl.simulate(sampled, rho0)
    assert np.array_equal(a, b)
    assert qm.trace_distance(a, det) <= 5 * rep.standard_error + 1e-12


def test_compiled_text_reproduces_program(generic_spec):
    program, _ = pl.compile_job(job_for(generic_spec, t=0.3, eps=1e-2, k_override=1))
    back = cc.program_from_text(cc.program_to_text(program))
    assert np.max(np.abs(cc.program_superop(back) - cc.program_superop(program))) < 1e-12


def test_bench_rows_and_scaling(generic_spec):
    grid = fm.BenchGrid(generator=generic_spec, ts=(2, 0, 0.5, 1, 4), epss=(5e-4, 1e-3), k_override=1)
    rows = pl.bench(grid)
    assert [(r["t"], r["eps"]) for r in rows[:4]] == [(0, 1e-3), (0, 5e-4), (0.5, 1e-3), (0.5, 5e-4)]
    assert rows[0]["n_exp"] == 0 and rows[0]["measured_error"] == 0.0
    fixed = [r for r in rows if r["eps"] == 1e-3 and r["t"] > 0]
    slope = pl.loglog_slope([r["t"] for r in fixed], [r["n_exp"] for r in fixed])
    assert 1.0 <= slope <= 1.6
    for t in (0.5, 1, 2, 4):
        r1, r2 = (next(r for r in rows if r["t"] == t and r["eps"] == e) for e in (1e-3, 5e-4))
        assert r2["r"] / r1["r"] == pytest.approx(math.sqrt(2), rel=0.1)
    assert all(r["measured_error"] <= r["eps"] for r in rows)
    parsed = list(csv.DictReader(io.StringIO(pl.bench_csv(rows))))
    assert list(parsed[0]) == list(pl.BENCH_COLUMNS)
    assert len(parsed) == len(rows)


def test_loglog_slope():
    assert pl.loglog_slope([1, 2, 4], [3, 12, 48]) == pytest.approx(2.0)
