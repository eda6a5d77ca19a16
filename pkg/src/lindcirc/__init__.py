"""Compile qubit Lindblad evolutions into one-ancilla circuit programs."""

from .channel import canonical_channel, quasi_extreme_split
from .circuit import ChannelProgram, Gate, run_program, synthesize
from .formats import JobSpec, parse_jobspec
from .generator import GeneratorSpec, lindblad_superop, spectral_split
from .pipeline import compile_job, validate
from .trotter import plan

__all__ = [
    "ChannelProgram",
    "Gate",
    "GeneratorSpec",
    "JobSpec",
    "canonical_channel",
    "compile_job",
    "lindblad_superop",
    "parse_jobspec",
    "plan",
    "quasi_extreme_split",
    "run_program",
    "spectral_split",
    "synthesize",
    "validate",
]
