"""Canonical semigroup channels and their split into two quasi-extreme channels.

The canonical generator with angle ``theta`` has a closed-form channel in the
Bloch picture: ``diag(L1, L2, L3)`` contraction plus a shift ``m3`` along z.
Its Choi matrix has the block form ``[[A, C], [C^+, I - A]]`` (after the
subsystem swap used below), and ``R = A^{-1/2} C (I - A)^{-1/2}`` is a
contraction. Writing ``R`` as the mean of two unitaries gives two channels
that each need only two Kraus operators.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import qmatrix as qm
from .circuit import dilation_unitary
from .exceptions import ConsistencyError, ValidationError

_THETA_MAX = math.pi / 4


def _check_theta(theta):
    if not math.isfinite(theta) or theta < -1e-15 or theta > _THETA_MAX + 1e-15:
        raise ValidationError(f"theta must lie in [0, pi/4], got {theta!r}")
    return min(max(float(theta), 0.0), _THETA_MAX)


@dataclass(frozen=True)
class CanonicalChannel:
    theta: float
    t: float
    lambda1: float
    lambda2: float
    lambda3: float
    m3: float
    affine: qm.BlochAffine

    def superop(self):
        return qm.affine_to_superop(self.affine)

    def choi(self):
        return qm.superop_to_choi(self.superop())


def canonical_channel(theta, t):
    """``exp(t L_theta)`` in closed form."""
    theta = _check_theta(theta)
    if not math.isfinite(t) or t < 0:
        raise ValidationError(f"t must be finite and >= 0, got {t!r}")
    s2 = math.sin(theta) ** 2
    c2 = math.cos(theta) ** 2
    l1 = math.exp(-2.0 * t * s2)
    l2 = math.exp(-2.0 * t * c2)
    l3 = math.exp(-2.0 * t)
    m3 = math.sin(2.0 * theta) * -math.expm1(-2.0 * t)
    aff = qm.BlochAffine(np.diag([l1, l2, l3]), np.array([0.0, 0.0, m3]))
    return CanonicalChannel(theta, float(t), l1, l2, l3, m3, aff)


def damping_eigenvalues(theta):
    """Nonzero eigenvalues of ``L_theta``: ``(-2 sin^2, -2 cos^2, -2)``."""
    theta = _check_theta(theta)
    return (-2.0 * math.sin(theta) ** 2, -2.0 * math.cos(theta) ** 2, -2.0)


def abcd(ch):
    """``(a, b, c, d)`` with ``a^2 = 1+m3+L3``, ``b^2 = 1-m3-L3``, ``c^2 = 1+m3-L3``, ``d^2 = 1-m3+L3``."""
    vals = (
        1 + ch.m3 + ch.lambda3,
        1 - ch.m3 - ch.lambda3,
        1 + ch.m3 - ch.lambda3,
        1 - ch.m3 + ch.lambda3,
    )
    return tuple(math.sqrt(max(v, 0.0)) for v in vals)


def beta_hat(choi):
    """Reference-first, entrywise-conjugated ``2 * choi``.

    Choi matrices here are system-first; ``U23`` swaps to the reference-first
    ordering. The composite maps a system-first Choi matrix to its
    block form ``[[A, C], [C^+, I - A]]`` indexed by the output level.
    """
    beta = 2.0 * qm.U23 @ choi @ qm.U23
    return np.conj(qm.U23 @ beta @ qm.U23)


def choi_of_beta_hat(bh):
    """Inverse of :func:`beta_hat`."""
    beta = qm.U23 @ np.conj(bh) @ qm.U23
    return 0.5 * qm.U23 @ beta @ qm.U23


@dataclass(frozen=True)
class QuasiExtremeMember:
    kraus: tuple
    dilation: np.ndarray
    choi: np.ndarray
    contraction: np.ndarray

    def superop(self):
        return qm.kraus_to_superop(self.kraus)


@dataclass(frozen=True)
class QuasiExtremePair:
    phi1: float
    phi2: float
    abcd: tuple
    members: tuple
    contraction: np.ndarray
    parent: CanonicalChannel

    def superop(self):
        return 0.5 * (self.members[0].superop() + self.members[1].superop())


def kraus_of_member(choi):
    """Two Kraus operators of a rank-at-most-two Choi matrix.

    Raises:
        RankError: the Choi matrix has a third eigenvalue above 1e-8.
        ValidationError: the resulting operators are not complete.
    """
    kraus = qm.choi_to_kraus(choi, max_rank=2)
    total = sum(qm.dagger(k) @ k for k in kraus)
    res = float(np.max(np.abs(total - qm.I2)))
    if res > 1e-10:
        raise ValidationError(f"member Kraus operators are not complete (residual {res:.3e})")
    return tuple(kraus)


def _support(a, cutoff):
    w, v = qm.eigh(a)
    keep = v[:, w > cutoff]
    return keep @ qm.dagger(keep)


def supported_sqrt(a, cutoff=1e-12):
    """``sqrt(a)`` restricted to eigenvalues above ``cutoff``.

    Rounding residue of size ~1e-17 on a null direction would otherwise
    turn into ~1e-9 after the square root.
    """
    return qm.psd_sqrt(a) @ _support(a, cutoff)


def _split_contraction(r, pa, pb):
    """Two unitaries with mean ``r`` on the relevant support.

    Singular directions that lie outside the support of ``A`` or ``I - A``
    do not affect the members, so they are promoted to singular value one
    to make both unitaries agree there.
    """
    v, d, w = qm.svd(r)
    d = np.clip(d, 0.0, 1.0)
    d[d > 1.0 - 1e-12] = 1.0
    for i in range(len(d)):
        if d[i] < 1e-12:
            if np.linalg.norm(pb @ w[:, i]) < 1e-9 or np.linalg.norm(pa @ v[:, i]) < 1e-9:
                d[i] = 1.0
    root = np.sqrt(np.clip(1.0 - d**2, 0.0, None))
    u1 = (v * (d + 1j * root)) @ qm.dagger(w)
    u2 = (v * (d - 1j * root)) @ qm.dagger(w)
    return u1, u2


def quasi_extreme_split(ch, cutoff=1e-12, tol=1e-9):
    """Write ``ch`` as the equal mixture of two quasi-extreme channels.

    Raises:
        ConsistencyError: the reconstructed parent or the block structure is
            off by more than ``tol``.
    """
    choi = ch.choi()
    bh = beta_hat(choi)
    a = bh[:2, :2]
    c = bh[:2, 2:]
    b = bh[2:, 2:]
    if np.max(np.abs(a + b - qm.I2)) > tol:
        raise ConsistencyError("diagonal blocks of the Choi form do not sum to I")
    pa = _support(a, cutoff)
    pb = _support(b, cutoff)
    sa = supported_sqrt(a, cutoff)
    sb = supported_sqrt(b, cutoff)
    r = qm.psd_sqrt(a, inverse=True, cutoff=cutoff) @ c @ qm.psd_sqrt(b, inverse=True, cutoff=cutoff)
    if np.max(np.abs(sa @ r @ sb - c)) > tol:
        raise ConsistencyError("off-diagonal block is not supported on A and I - A")
    u1, u2 = _split_contraction(r, pa, pb)

    members = []
    for u in (u1, u2):
        if not qm.is_unitary(u, tol):
            raise ConsistencyError("split contraction is not unitary")
        ci = sa @ u @ sb
        mb = np.block([[a, ci], [qm.dagger(ci), b]])
        mchoi = choi_of_beta_hat(mb)
        kraus = kraus_of_member(mchoi)
        members.append(QuasiExtremeMember(kraus, dilation_unitary(kraus), mchoi, u))

    mean = 0.5 * (members[0].superop() + members[1].superop())
    err = float(np.max(np.abs(mean - ch.superop())))
    if err > tol:
        raise ConsistencyError(f"members do not average to the parent channel (error {err:.3e})")
    return QuasiExtremePair(
        phi1=float(np.angle(u1[0, 1])),
        phi2=float(np.angle(u1[1, 0])),
        abcd=tuple(2.0 * math.sqrt(max(x, 0.0)) for x in np.diag(qm.U23 @ choi @ qm.U23).real),
        members=tuple(members),
        contraction=r,
        parent=ch,
    )


def printed_phases(ch, swap_bd=True):
    """Closed-form ``(phi1, phi2)`` for cross-checks.

    ``swap_bd=True`` uses ``(L1+L2)/(a d)`` and ``(L1-L2)/(b c)``, the pairing
    that matches the computed split; ``False`` uses ``a b`` and ``c d``.
    Arguments are clamped to ``[-1, 1]``; a zero denominator gives ``nan``.
    """
    a, b, c, d = abcd(ch)
    p, q = (a * d, b * c) if swap_bd else (a * b, c * d)

    def acos(num, den):
        if den == 0:
            return float("nan")
        return math.acos(min(1.0, max(-1.0, num / den)))

    return acos(ch.lambda1 + ch.lambda2, p), acos(ch.lambda1 - ch.lambda2, q)
