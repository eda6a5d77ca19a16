"""Suzuki product formulas for a sum of Lindblad generators, and (k, r) selection.

Durations are dimensionless: a block ``S_2k(lam)`` gives every active
generator a total duration ``lam``, and a factor of duration ``d`` on
generator ``j`` stands for ``exp((d / L1) * L_j)`` with ``L_j`` the weighted
component (``L1`` the largest component norm).
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import qmatrix as qm
from .exceptions import InvalidInputError, NegativeDurationError, ValidationError

MODES = ("circuit", "superop")


@dataclass(frozen=True)
class Factor:
    gen_index: int
    duration: float

    def __post_init__(self):
        if not 0 <= self.gen_index <= 3:
            raise InvalidInputError(f"generator index must be in 0..3, got {self.gen_index}")
        if not math.isfinite(self.duration):
            raise InvalidInputError("factor duration must be finite")


def merge_adjacent(factors):
    """Fuse neighbouring factors on the same generator (exact for semigroups)."""
    out = []
    for f in factors:
        if out and out[-1].gen_index == f.gen_index:
            out[-1] = Factor(f.gen_index, out[-1].duration + f.duration)
        else:
            out.append(f)
    return out


def _check_gens(gens):
    gens = list(gens)
    if not gens:
        raise InvalidInputError("need at least one generator index")
    return gens


def s2_sequence(gens, lam):
    """Symmetric second-order product: forward sweep then backward sweep at ``lam/2``."""
    gens = _check_gens(gens)
    if lam < 0:
        raise InvalidInputError("lambda must be >= 0")
    half = 0.5 * lam
    raw = [Factor(j, half) for j in gens] + [Factor(j, half) for j in reversed(gens)]
    return merge_adjacent(raw)


def suzuki_p(k):
    """Recursion weight ``(4 - 4^{1/(2k-1)})^{-1}``."""
    return 1.0 / (4.0 - 4.0 ** (1.0 / (2 * k - 1)))


def _suzuki(k, gens, lam):
    if k == 1:
        # unchecked S2 so that negative sub-arguments pass through
        half = 0.5 * lam
        return merge_adjacent([Factor(j, half) for j in gens] + [Factor(j, half) for j in reversed(gens)])
    p = suzuki_p(k)
    outer = _suzuki(k - 1, gens, p * lam)
    inner = _suzuki(k - 1, gens, (1.0 - 4.0 * p) * lam)
    return merge_adjacent(outer + outer + inner + outer + outer)


def suzuki_sequence(k, gens, lam, allow_negative=False):
    """Order-``2k`` Suzuki block with adjacent merging.

    Raises:
        NegativeDurationError: a factor has negative duration and
            ``allow_negative`` is false (happens for ``k >= 2`` with two or
            more generators).
    """
    if int(k) != k or k < 1:
        raise InvalidInputError(f"k must be an integer >= 1, got {k!r}")
    gens = _check_gens(gens)
    if lam < 0:
        raise InvalidInputError("lambda must be >= 0")
    seq = _suzuki(int(k), gens, lam)
    if not allow_negative:
        neg = [f for f in seq if f.duration < 0]
        if neg:
            raise NegativeDurationError(
                f"order-{2 * k} block has {len(neg)} negative-duration factors "
                f"(min {min(f.duration for f in neg):.3g}); use k=1 or superop mode"
            )
    return seq


def block_size(m, k):
    return 2 * (m - 1) * 5 ** (k - 1) + 1


def d_k(m, k):
    return m * (4.0 / 3.0) * k * (5.0 / 3.0) ** (k - 1)


def block_error_bound(L2, m, k, lam):
    """Single-block error bound ``4 L2 (d_k lam)^{2k+1} / (2k+1)!``, valid for ``d_k lam < k+1``."""
    x = d_k(m, k) * lam
    return 4.0 * L2 * x ** (2 * k + 1) / math.factorial(2 * k + 1)


def n_exp_bound(m, k, r, L1):
    return (2 * m - 1) * 5 ** (k - 1) * max(1, math.ceil(r * L1))


def _r_of(k, m, t, x):
    return t * x ** (1.0 / (2 * k)) * 2.0 * math.e * d_k(m, k) / (2 * k + 1)


def choose_k_r(L1, L2, m, t, eps, k=None):
    """Pick the Suzuki order and segment parameter from the error bound.

    ``k = round(sqrt(log_{25/3}(x) / 2))`` with ``x = 4 e m t L2 / eps``,
    clamped to at least 1, and ``k = 1`` when ``x < 1``. A given ``k``
    overrides the choice. Returns ``(k, r, n_exp_bound)``.

    Raises:
        ValidationError: ``t <= 0``, ``eps`` outside ``(0, 1]`` or bad norms.
    """
    if not (t > 0 and math.isfinite(t)):
        raise ValidationError(f"t must be positive, got {t!r}")
    if not (0 < eps <= 1):
        raise ValidationError(f"eps must lie in (0, 1], got {eps!r}")
    if not (L1 > 0 and 0 <= L2 <= L1 * (1 + 1e-12)):
        raise ValidationError(f"norms must satisfy L1 >= L2 >= 0 and L1 > 0, got {L1!r}, {L2!r}")
    if m < 1:
        raise ValidationError("need at least one active generator")
    x = 4.0 * math.e * m * t * L2 / eps
    if k is None:
        if x < 1.0:
            k = 1
        else:
            k = max(1, round(math.sqrt(0.5 * math.log(x) / math.log(25.0 / 3.0))))
    elif int(k) != k or k < 1:
        raise ValidationError(f"k must be an integer >= 1, got {k!r}")
    k = int(k)
    r = _r_of(k, m, t, x)
    return k, r, n_exp_bound(m, k, r, L1)


@dataclass
class TrotterPlan:
    """One Suzuki block repeated ``reps`` times.

    ``factors`` is a single block at argument ``lam``; ``sequence()`` gives
    the merged sequence over all repetitions, whose length is ``n_exp``.
    ``time_scale`` converts durations to physical time (``1 / L1``).
    """

    k: int
    r: float
    reps: int
    lam: float
    factors: list
    n_exp: int
    L1: float
    L2: float
    eps_target: float
    t: float = 0.0
    order: tuple = ()
    norms: dict = field(default_factory=dict)
    n_exp_bound: int = 0
    mode: str = "circuit"

    @property
    def time_scale(self):
        return 1.0 / self.L1 if self.L1 > 0 else 0.0

    def sequence(self):
        return merge_adjacent(list(self.factors) * self.reps)

    def physical_time(self, factor):
        return factor.duration * self.time_scale


def _repeated_length(block, reps):
    if reps == 0 or not block:
        return 0
    if len(block) == 1:
        return 1
    seam = 1 if block[0].gen_index == block[-1].gen_index else 0
    return reps * len(block) - (reps - 1) * seam


def component_norms(decomp, indices):
    return {j: qm.one_to_one_norm(decomp.component_superop(j)) for j in indices}


def sort_by_norm(norms):
    return tuple(sorted(norms, key=lambda j: (-norms[j], j)))


def plan(decomp, t, eps, k_override=None, mode="circuit", reps_override=None, norms=None):
    """Trotter plan for ``exp(t L)`` with ``L`` split as in ``decomp``.

    ``reps_override`` fixes the number of blocks (used for convergence
    studies); ``norms`` may supply precomputed component norms.

    Raises:
        ValidationError: bad ``t``, ``eps`` or ``mode``.
        NegativeDurationError: ``mode == "circuit"`` and the block has
            negative durations.
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    if not (t >= 0 and math.isfinite(t)):
        raise ValidationError(f"t must be finite and >= 0, got {t!r}")
    if not (0 < eps <= 1):
        raise ValidationError(f"eps must lie in (0, 1], got {eps!r}")
    active = decomp.active_indices()
    if norms is None:
        norms = component_norms(decomp, active)
    order = sort_by_norm({j: norms[j] for j in active})
    m = len(order)
    L1 = norms[order[0]] if m else 0.0
    L2 = norms[order[1]] if m > 1 else 0.0
    empty = TrotterPlan(
        k=1, r=0.0, reps=0, lam=0.0, factors=[], n_exp=0, L1=L1, L2=L2, eps_target=eps,
        t=t, order=order, norms=dict(norms), mode=mode,
    )
    if t == 0 or m == 0:
        return empty
    if m == 1:
        k = 1 if k_override is None else int(k_override)
        factors = [Factor(order[0], t * L1)]
        return TrotterPlan(
            k=k, r=t, reps=1, lam=t * L1, factors=factors, n_exp=1, L1=L1, L2=0.0,
            eps_target=eps, t=t, order=order, norms=dict(norms), n_exp_bound=1, mode=mode,
        )
    k, r, bound = choose_k_r(L1, L2, m, t, eps, k=k_override)
    reps = max(1, math.ceil(r * L1)) if reps_override is None else int(reps_override)
    if reps < 1:
        raise ValidationError("reps must be >= 1")
    lam = t * L1 / reps
    block = suzuki_sequence(k, order, lam, allow_negative=(mode == "superop"))
    return TrotterPlan(
        k=k, r=r, reps=reps, lam=lam, factors=block, n_exp=_repeated_length(block, reps),
        L1=L1, L2=L2, eps_target=eps, t=t, order=order, norms=dict(norms),
        n_exp_bound=bound, mode=mode,
    )


def compose_superop(plan_, decomp):
    """Exact product of the plan's exponentials (first factor acts first)."""
    cache = {}

    def factor_superop(f):
        key = (f.gen_index, f.duration)
        if key not in cache:
            cache[key] = qm.expm(decomp.component_superop(f.gen_index), plan_.physical_time(f))
        return cache[key]

    block = np.eye(4, dtype=complex)
    if plan_.reps <= 1 or len(plan_.factors) <= 1:
        for f in plan_.sequence():
            block = factor_superop(f) @ block
        return block
    # repeated blocks: compose one block and raise it to a power (exact up to rounding)
    for f in plan_.factors:
        block = factor_superop(f) @ block
    return np.linalg.matrix_power(block, plan_.reps)
