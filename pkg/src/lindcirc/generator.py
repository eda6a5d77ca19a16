"""Single-qubit Lindblad generators and their canonical decomposition.

A generator is given by a GKS matrix ``A`` (3x3, PSD) in the basis of
normalized Pauli operators ``F_k = sigma_k / sqrt(2)`` and a Hamiltonian
``H``. The dissipative part is split along the eigenvectors of ``A``; every
rank-one piece is a unitary rotation of one member of the canonical family
``A(theta)``, ``theta`` in ``[0, pi/4]``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import qmatrix as qm
from .exceptions import InvalidInputError, RankError, ValidationError

F_BASIS = tuple(p / math.sqrt(2.0) for p in qm.PAULIS)

ACTIVE_TOL = 1e-12


def canonical_gks(theta):
    """The rank-one GKS matrix ``A(theta) = w w^dagger`` with ``w = (cos, i sin, 0)``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array(
        [[c * c, -1j * c * s, 0.0], [1j * c * s, s * s, 0.0], [0.0, 0.0, 0.0]],
        dtype=complex,
    )


@dataclass(frozen=True)
class GeneratorSpec:
    """GKS matrix ``A`` and Hamiltonian ``H`` of a qubit Lindblad generator."""

    A: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        a = qm.as_matrix(self.A, 3, "GKS matrix A")
        h = qm.as_matrix(self.H, 2, "Hamiltonian H")
        herm_a = float(np.max(np.abs(a - qm.dagger(a))))
        if herm_a > 1e-10:
            raise ValidationError(f"GKS matrix A is not Hermitian (residual {herm_a:.3e})")
        min_eig = float(qm.eigh(a)[0][0])
        if min_eig < -1e-10:
            raise ValidationError(f"GKS matrix A is not positive semidefinite (eigenvalue {min_eig:.6g})")
        herm_h = float(np.max(np.abs(h - qm.dagger(h))))
        if herm_h > 1e-12:
            raise ValidationError(f"Hamiltonian H is not Hermitian (residual {herm_h:.3e})")
        object.__setattr__(self, "A", 0.5 * (a + qm.dagger(a)))
        object.__setattr__(self, "H", 0.5 * (h + qm.dagger(h)))


def hamiltonian_superop(h):
    """Superoperator of ``rho -> i[rho, H]``."""
    h = qm.as_matrix(h, 2, "Hamiltonian")
    return 1j * qm.sandwich(qm.I2, h) - 1j * qm.sandwich(h, qm.I2)


def dissipator_superop(a):
    """Superoperator of ``sum_{k,l} A_kl ([F_k, rho F_l^+] + [F_k rho, F_l^+])``."""
    a = qm.as_matrix(a, 3, "GKS matrix")
    out = np.zeros((4, 4), dtype=complex)
    for k, fk in enumerate(F_BASIS):
        for l, fl in enumerate(F_BASIS):
            if a[k, l] == 0:
                continue
            fld = qm.dagger(fl)
            term = (
                2.0 * qm.sandwich(fk, fld)
                - qm.sandwich(qm.I2, fld @ fk)
                - qm.sandwich(fld @ fk, qm.I2)
            )
            out += a[k, l] * term
    return out


def lindblad_superop(spec):
    if not isinstance(spec, GeneratorSpec):
        raise InvalidInputError("lindblad_superop expects a GeneratorSpec")
    return hamiltonian_superop(spec.H) + dissipator_superop(spec.A)


def canonical_superop(theta):
    """Superoperator of the canonical dissipative generator ``L_theta``."""
    return dissipator_superop(canonical_gks(theta))


# ---------------------------------------------------------------------------
# SO(3) <-> SU(2)
# ---------------------------------------------------------------------------


def check_so3(g, tol=1e-10):
    g = np.asarray(g, dtype=float)
    if g.shape != (3, 3) or not np.all(np.isfinite(g)):
        raise ValidationError("rotation must be a finite real 3x3 matrix")
    res = float(np.max(np.abs(g.T @ g - np.eye(3))))
    if res > tol:
        raise ValidationError(f"matrix is not orthogonal (residual {res:.3e})")
    det = float(np.linalg.det(g))
    if abs(det - 1.0) > tol:
        raise ValidationError(f"rotation has determinant {det:.6g}, expected +1")
    return g


def so3_of_su2(u):
    """Adjoint image ``G[j, i] = tr(sigma_j U sigma_i U^+) / 2``."""
    u = qm.as_matrix(u, 2, "unitary")
    g = np.empty((3, 3))
    for i, si in enumerate(qm.PAULIS):
        rotated = u @ si @ qm.dagger(u)
        for j, sj in enumerate(qm.PAULIS):
            g[j, i] = 0.5 * np.trace(sj @ rotated).real
    return g


def su2_of_so3(g):
    """A unitary ``U`` in SU(2) with ``U sigma_i U^+ = sum_j G[j, i] sigma_j``.

    The rotation is converted to a unit quaternion ``(w, x, y, z)`` and
    ``U = w I - i (x sigma_x + y sigma_y + z sigma_z)``. The sign of ``U`` is a
    gauge; it is fixed so the first nonzero entry has nonnegative real part.
    """
    g = check_so3(g)
    tr = g[0, 0] + g[1, 1] + g[2, 2]
    # Shepperd's method: branch on the largest quaternion component.
    cands = [1.0 + tr, 1.0 + 2 * g[0, 0] - tr, 1.0 + 2 * g[1, 1] - tr, 1.0 + 2 * g[2, 2] - tr]
    idx = int(np.argmax(cands))
    root = math.sqrt(max(cands[idx], 0.0))
    half = 0.5 / root
    if idx == 0:
        w = 0.5 * root
        x = (g[2, 1] - g[1, 2]) * half
        y = (g[0, 2] - g[2, 0]) * half
        z = (g[1, 0] - g[0, 1]) * half
    elif idx == 1:
        x = 0.5 * root
        w = (g[2, 1] - g[1, 2]) * half
        y = (g[0, 1] + g[1, 0]) * half
        z = (g[0, 2] + g[2, 0]) * half
    elif idx == 2:
        y = 0.5 * root
        w = (g[0, 2] - g[2, 0]) * half
        x = (g[0, 1] + g[1, 0]) * half
        z = (g[1, 2] + g[2, 1]) * half
    else:
        z = 0.5 * root
        w = (g[1, 0] - g[0, 1]) * half
        x = (g[0, 2] + g[2, 0]) * half
        y = (g[1, 2] + g[2, 1]) * half
    u = w * qm.I2 - 1j * (x * qm.SX + y * qm.SY + z * qm.SZ)
    for entry in u.ravel():
        if abs(entry) > 1e-12:
            if entry.real < 0 or (entry.real == 0 and entry.imag < 0):
                u = -u
            break
    return u


# ---------------------------------------------------------------------------
# Canonical angle
# ---------------------------------------------------------------------------


def _orthonormal_completion(g1):
    """A unit vector orthogonal to ``g1``, seeded by the least aligned axis."""
    order = np.argsort(np.abs(g1), kind="stable")
    e = np.zeros(3)
    e[order[0]] = 1.0
    e = e - g1 * (g1 @ e)
    return e / np.linalg.norm(e)


def canonical_angle(p, tol=1e-10):
    """Find ``theta`` in ``[0, pi/4]`` and ``G`` in SO(3) with ``G A(theta) G^T = P``.

    ``P = w w^dagger`` for a unit ``w``. A global phase is chosen so that
    ``w = x + i y`` with ``x . y = 0`` and ``|x| >= |y|``; the rotation's
    first two columns are then ``x/|x|`` and ``y/|y|`` and
    ``theta = atan2(|y|, |x|)``.

    Raises:
        RankError: ``P`` is not a rank-one projector.
    """
    p = qm.as_matrix(p, 3, "projector")
    if not qm.is_hermitian(p, tol):
        raise ValidationError("projector must be Hermitian")
    tr = np.trace(p).real
    if abs(tr - 1.0) > tol:
        raise ValidationError(f"projector must have unit trace, got {tr:.12g}")
    i = int(np.argmax(np.real(np.diag(p))))
    w = p[:, i] / math.sqrt(p[i, i].real)
    res = float(np.max(np.abs(np.outer(w, np.conj(w)) - p)))
    if res > tol:
        raise RankError(f"projector is not rank one (residual {res:.3e})")

    ww = complex(np.sum(w * w))
    if abs(ww) > 1e-14:
        w = w * np.exp(-0.5j * np.angle(ww))
    x, y = w.real.copy(), w.imag.copy()
    # sign gauge: largest component of x positive
    j = int(np.argmax(np.abs(x)))
    if x[j] < 0:
        x, y = -x, -y
    c, s = np.linalg.norm(x), np.linalg.norm(y)
    g1 = x / c
    if s > 1e-9:
        g2 = y / s
        g2 = g2 - g1 * (g1 @ g2)
        g2 /= np.linalg.norm(g2)
    else:
        g2 = _orthonormal_completion(g1)
    g3 = np.cross(g1, g2)
    g = np.column_stack([g1, g2, g3])
    theta = math.atan2(s, c)
    theta = min(max(theta, 0.0), math.pi / 4)
    return theta, g


# ---------------------------------------------------------------------------
# Spectral split
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CanonicalComponent:
    """One rank-one dissipative component ``weight * U-conjugated L_theta``."""

    index: int
    weight: float
    projector: np.ndarray
    theta: float
    G: np.ndarray
    U: np.ndarray

    @property
    def active(self):
        return self.weight > ACTIVE_TOL

    def superop(self):
        """``weight`` times the generator ``rho -> U L_theta(U^+ rho U) U^+``."""
        return self.weight * conjugate_superop(canonical_superop(self.theta), self.U)


def conjugate_superop(s, u):
    """Superoperator of ``rho -> U S(U^+ rho U) U^+``."""
    return qm.unitary_superop(u) @ s @ qm.unitary_superop(qm.dagger(u))


@dataclass(frozen=True)
class GeneratorDecomposition:
    """Spectral split ``L = L_H + sum_k lambda_k L_k`` with canonical forms.

    ``lambdas[0]`` is the weight 1 of the Hamiltonian part; ``components``
    holds the three dissipative eigen-components in descending weight order
    (inactive ones included, flagged by ``active``).
    """

    lambdas: tuple
    hamiltonian: np.ndarray
    components: tuple
    spec: GeneratorSpec = field(repr=False, default=None)

    @property
    def hamiltonian_active(self):
        return bool(np.max(np.abs(self.hamiltonian)) > ACTIVE_TOL)

    def component(self, index):
        if index == 0:
            raise InvalidInputError("index 0 is the Hamiltonian part")
        return self.components[index - 1]

    def component_superop(self, index):
        """Superoperator of the weighted component generator ``lambda_j L_j``."""
        if index == 0:
            return hamiltonian_superop(self.hamiltonian)
        return self.component(index).superop()

    def active_indices(self):
        out = [0] if self.hamiltonian_active else []
        out += [c.index for c in self.components if c.active]
        return out

    def reconstruct(self):
        """Sum of all component superoperators; equals ``lindblad_superop(spec)``."""
        out = hamiltonian_superop(self.hamiltonian)
        for c in self.components:
            if c.weight > 0:
                out = out + c.superop()
        return out


def spectral_split(spec):
    a = spec.A
    w, v = qm.eigh(a)
    w, v = w[::-1], v[:, ::-1]
    # re-orthonormalize in index order for reproducibility under degeneracy
    v = _gram_schmidt(v)
    comps = []
    for k in range(3):
        lam = max(float(w[k]), 0.0)
        proj = np.outer(v[:, k], np.conj(v[:, k]))
        theta, g = canonical_angle(proj)
        comps.append(
            CanonicalComponent(index=k + 1, weight=lam, projector=proj, theta=theta, G=g, U=su2_of_so3(g))
        )
    lambdas = (1.0,) + tuple(c.weight for c in comps)
    return GeneratorDecomposition(lambdas=lambdas, hamiltonian=spec.H.copy(), components=tuple(comps), spec=spec)


def _gram_schmidt(v):
    cols = []
    for k in range(v.shape[1]):
        x = v[:, k].copy()
        for c in cols:
            x = x - c * np.vdot(c, x)
        cols.append(x / np.linalg.norm(x))
    return np.column_stack(cols)
