"""Quadratic expansion of the rotating-frame crystal Hamiltonian and its
symplectic (Williamson) normal modes.

Phase space is ordered as the interleaved vector
``d = (q_1x, p_1x, q_1y, p_1y, ..., q_Nz, p_Nz)`` so the symplectic form is
block diagonal with 2x2 blocks [[0, 1], [-1, 0]].  All quantities are
dimensionless: positions in l_s, momenta in p_s, frequencies in omega_c.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crystal import (
    CrystalState,
    coulomb_energy,
    effective_potential_hessian,
)
from .scales import TrapSetup

_SYMMETRY_TOL = 1e-12
_REGULARIZATION = 1e-8


@dataclass(frozen=True)
class QuadraticHamiltonian:
    """Phase-space Hessian of the rotating-frame Hamiltonian at equilibrium.

    ``reference`` may be None for synthetic quadratic forms (no rotational
    zero mode to regularize).
    """

    matrix: np.ndarray            # (6N, 6N) symmetric
    reference: CrystalState | None

    @property
    def n_ions(self) -> int:
        return self.reference.n_ions


@dataclass(frozen=True)
class ModeSpectrum:
    """Result of the symplectic diagonalization.

    ``symplectic`` is the matrix S with S J S^T = J and S H S^T equal to the
    diagonal of frequency pairs; ``coefficients`` holds
    A[k, j] = S[2k, j] + i S[2k+1, j] (0-based rows).  ``regularized_mode``
    marks the crystal-rotation mode whose zero frequency was lifted by the
    epsilon shift; its frequency is an artifact of the regularization.
    """

    frequencies: np.ndarray       # (3N,) in omega_c units, ascending
    symplectic: np.ndarray        # (6N, 6N)
    coefficients: np.ndarray      # (3N, 6N) complex
    hessian: np.ndarray           # regularized matrix the decomposition used
    reference: CrystalState
    regularized_mode: int | None

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)

    def position_coefficients(self):
        """A restricted to position columns, shape (3N, 3N)."""
        return self.coefficients[:, 0::2]


def symplectic_form(n_dof: int):
    """Block-diagonal symplectic form J for n_dof (q, p) pairs."""
    j2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    out = np.zeros((2 * n_dof, 2 * n_dof))
    for k in range(n_dof):
        out[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = j2
    return out


def minimal_coupling_rate(alpha_r: float) -> float:
    """Coefficient of (y p_x - x p_y) in the dimensionless Hamiltonian.

    Vanishes in the special frame alpha_r = 1/2.
    """
    return 0.5 - alpha_r


def phase_space_hamiltonian(positions, momenta, alpha_r, axial_ratio) -> float:
    """Full dimensionless rotating-frame Hamiltonian H(q, p)."""
    q = np.asarray(positions, dtype=float)
    p = np.asarray(momenta, dtype=float)
    omega = minimal_coupling_rate(alpha_r)
    kinetic = 0.5 * float(np.sum(p**2))
    coupling = omega * float(np.sum(q[:, 1] * p[:, 0] - q[:, 0] * p[:, 1]))
    r2 = q[:, 0] ** 2 + q[:, 1] ** 2
    trap = float(
        np.sum(0.5 * axial_ratio**2 * q[:, 2] ** 2 + (1.0 - 2.0 * axial_ratio**2) / 8.0 * r2)
    )
    return kinetic + coupling + trap + coulomb_energy(q)


def equilibrium_momenta(positions, alpha_r):
    """Canonical momenta of the rigid equilibrium in the corotating frame."""
    q = np.asarray(positions, dtype=float)
    omega = minimal_coupling_rate(alpha_r)
    p = np.zeros_like(q)
    p[:, 0] = -omega * q[:, 1]
    p[:, 1] = omega * q[:, 0]
    return p


def build_hessian(state: CrystalState) -> QuadraticHamiltonian:
    """Assemble the 6N x 6N phase-space Hessian around the equilibrium.

    Momentum-momentum entries are 1, the momentum-position cross terms carry
    the minimal-coupling rate, and the position block is the potential
    curvature (trap plus Coulomb dipole tensor).
    """
    if not state.converged:
        raise ValueError("refusing to expand around an unconverged configuration")
    n = state.n_ions
    alpha_r = state.rotation_frequency
    alpha_z = state.axial_ratio
    omega = minimal_coupling_rate(alpha_r)

    # Hess of the frame potential: effective-potential curvature plus the
    # centrifugal completion Omega^2 on the in-plane coordinates.
    qq = effective_potential_hessian(state.positions, alpha_r, alpha_z)
    for k in range(n):
        qq[3 * k, 3 * k] += omega**2
        qq[3 * k + 1, 3 * k + 1] += omega**2

    h = np.zeros((6 * n, 6 * n))
    pos = [2 * m for m in range(3 * n)]
    mom = [2 * m + 1 for m in range(3 * n)]
    h[np.ix_(pos, pos)] = qq
    h[np.ix_(mom, mom)] = np.eye(3 * n)
    for k in range(n):
        px = 2 * (3 * k) + 1
        y = 2 * (3 * k + 1)
        py = 2 * (3 * k + 1) + 1
        x = 2 * (3 * k)
        h[px, y] += omega
        h[y, px] += omega
        h[py, x] -= omega
        h[x, py] -= omega
    return QuadraticHamiltonian(matrix=h, reference=state)


def rotation_null_vector(state: CrystalState):
    """Phase-space direction of a rigid rotation of the equilibrium.

    Returns None when the configuration carries no rotational freedom
    (single ion at the trap center).
    """
    q = state.positions
    omega = minimal_coupling_rate(state.rotation_frequency)
    n = state.n_ions
    vec = np.zeros(6 * n)
    for k in range(n):
        x, y = q[k, 0], q[k, 1]
        vec[2 * (3 * k)] = -y            # delta x
        vec[2 * (3 * k + 1)] = x         # delta y
        vec[2 * (3 * k) + 1] = -omega * x     # delta p_x
        vec[2 * (3 * k + 1) + 1] = -omega * y  # delta p_y
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None
    return vec / norm


def _position_projector(state: CrystalState):
    """Rank-one regularizer on the in-plane rotation direction (positions only)."""
    q = state.positions
    n = state.n_ions
    vec = np.zeros(6 * n)
    for k in range(n):
        vec[2 * (3 * k)] = -q[k, 1]
        vec[2 * (3 * k + 1)] = q[k, 0]
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None
    vec /= norm
    return np.outer(vec, vec)


def _canonical_pairs(kmat, values, vectors, cluster_tol=1e-12):
    """Orthogonal O with O^T K O in 2x2 antisymmetric blocks, from eigh(iK).

    ``values``/``vectors`` are the positive-frequency eigenpairs of the
    Hermitian matrix iK.  Degenerate frequencies are handled per cluster by
    building an orthonormal real basis of the invariant subspace.
    """
    order = np.argsort(values)
    values = values[order]
    vectors = vectors[:, order]
    dim = kmat.shape[0]
    columns = []
    freqs = []
    i = 0
    while i < len(values):
        j = i + 1
        while j < len(values) and values[j] - values[i] <= cluster_tol * max(values[i], 1.0):
            j += 1
        cluster = vectors[:, i:j]
        omega = float(values[i:j].mean())
        span = np.concatenate([cluster.real, cluster.imag], axis=1)
        q, r = np.linalg.qr(span)
        keep = np.abs(np.diag(r)) > 1e-10 * np.abs(np.diag(r)).max()
        basis = q[:, keep]
        if basis.shape[1] != 2 * (j - i):
            raise np.linalg.LinAlgError("degenerate cluster span has wrong rank")
        taken = []
        for _ in range(j - i):
            seed = None
            for col in range(basis.shape[1]):
                cand = basis[:, col]
                for t in taken:
                    cand = cand - (t @ cand) * t
                nrm = np.linalg.norm(cand)
                if nrm > 1e-8:
                    seed = cand / nrm
                    break
            if seed is None:
                raise np.linalg.LinAlgError("failed to span degenerate cluster")
            partner = -(kmat @ seed) / omega
            for t in taken + [seed]:
                partner = partner - (t @ partner) * t
            partner /= np.linalg.norm(partner)
            taken.extend([seed, partner])
            columns.extend([seed, partner])
            freqs.append(omega)
        i = j
    o_matrix = np.array(columns).T
    return np.array(freqs), o_matrix


def williamson(qh: QuadraticHamiltonian, epsilon: float = _REGULARIZATION) -> ModeSpectrum:
    """Williamson normal form of the (regularized) phase-space Hessian.

    Builds H^(1/2), the antisymmetric K = H^(1/2) J H^(1/2), extracts its
    canonical eigenstructure, and assembles the symplectic S with
    S H S^T = diag(w_1, w_1, ..., w_3N, w_3N) and S J S^T = J.
    """
    h = np.asarray(qh.matrix, dtype=float)
    if np.abs(h - h.T).max() > _SYMMETRY_TOL * max(1.0, np.abs(h).max()):
        raise ValueError("Hessian is not symmetric")
    h = 0.5 * (h + h.T)
    n_dof = h.shape[0] // 2

    projector = _position_projector(qh.reference) if qh.reference is not None else None
    regularize = projector is not None
    h_reg = h + epsilon * projector if regularize else h

    evals, evecs = np.linalg.eigh(h_reg)
    if evals[0] <= 0.0:
        raise ValueError(
            f"Hessian not positive definite beyond the rotational zero mode: "
            f"eigenvalue {evals[0]:.3e}"
        )
    sqrt_h = (evecs * np.sqrt(evals)) @ evecs.T
    inv_sqrt_h = (evecs / np.sqrt(evals)) @ evecs.T

    jmat = symplectic_form(n_dof)
    kmat = sqrt_h @ jmat @ sqrt_h
    kmat = 0.5 * (kmat - kmat.T)

    herm = 1j * kmat
    kvals, kvecs = np.linalg.eigh(herm)
    positive = kvals > 0
    freqs, o_matrix = _canonical_pairs(kmat, kvals[positive], kvecs[:, positive])

    d_half = np.repeat(np.sqrt(freqs), 2)
    s_matrix = (d_half[:, None] * o_matrix.T) @ inv_sqrt_h

    # one first-order polish on the symplectic manifold: with the antisymmetric
    # defect E = S J S^T - J, the update (I + E J / 2) S cancels E to O(E^2)
    defect = s_matrix @ jmat @ s_matrix.T - jmat
    s_matrix = s_matrix + 0.5 * (defect @ jmat) @ s_matrix

    resid_j = np.abs(s_matrix @ jmat @ s_matrix.T - jmat).max()
    if resid_j > 1e-10:
        raise np.linalg.LinAlgError(f"symplectic residual too large: {resid_j:.3e}")
    coeffs = s_matrix[0::2, :] + 1j * s_matrix[1::2, :]

    regularized_mode = None
    if regularize:
        null = rotation_null_vector(qh.reference)
        lam = -jmat @ s_matrix @ jmat @ null  # (S^-1)^T null via S J S^T = J
        weights = lam[0::2] ** 2 + lam[1::2] ** 2
        regularized_mode = int(np.argmax(weights))

    # deterministic order: ascending frequency, exact ties (degenerate cluster
    # members share one float) broken by the dominant coefficient index
    dominant = np.argmax(np.abs(coeffs), axis=1)
    order = np.lexsort((dominant, freqs))
    freqs = freqs[order]
    perm = np.empty(2 * len(order), dtype=int)
    perm[0::2] = 2 * order
    perm[1::2] = 2 * order + 1
    s_matrix = s_matrix[perm, :]
    coeffs = s_matrix[0::2, :] + 1j * s_matrix[1::2, :]
    if regularized_mode is not None:
        regularized_mode = int(np.where(order == regularized_mode)[0][0])

    return ModeSpectrum(
        frequencies=freqs,
        symplectic=s_matrix,
        coefficients=coeffs,
        hessian=h_reg,
        reference=qh.reference,
        regularized_mode=regularized_mode,
    )


def orthogonal_modes(state: CrystalState, regularize: bool = True):
    """Orthogonal normal modes in the minimal-coupling-free frame.

    Only valid at alpha_r = 1/2 where positions and momenta decouple; returns
    (frequencies, M) with M orthogonal and rows as mode vectors Q = M q.
    """
    if abs(state.rotation_frequency - 0.5) > 1e-12:
        raise ValueError("orthogonal mode path requires alpha_r = 1/2")
    kpot = effective_potential_hessian(state.positions, 0.5, state.axial_ratio)
    if regularize:
        proj = _position_projector(state)
        if proj is not None:
            vec = np.zeros(3 * state.n_ions)
            for k in range(state.n_ions):
                vec[3 * k] = -state.positions[k, 1]
                vec[3 * k + 1] = state.positions[k, 0]
            vec /= np.linalg.norm(vec)
            kpot = kpot + _REGULARIZATION * np.outer(vec, vec)
    evals, evecs = np.linalg.eigh(kpot)
    if evals[0] < -1e-10:
        raise ValueError(f"potential Hessian has a negative curvature: {evals[0]:.3e}")
    freqs = np.sqrt(np.clip(evals, 0.0, None))
    return freqs, evecs.T


@dataclass(frozen=True)
class BandClassification:
    """Per-mode band labels, band frequency intervals, and usable gaps."""

    labels: list
    intervals: dict
    gaps: list


def classify_bands(spectrum: ModeSpectrum, setup: TrapSetup) -> BandClassification:
    """Partition modes into axial / ExB / cyclotron bands.

    Axial character is decided by the displacement weight on z coordinates;
    in-plane modes split at the largest relative frequency gap into the low
    (ExB) and high (cyclotron) branch.  The regularized rotation mode does
    not contribute to band intervals.
    """
    n = spectrum.reference.n_ions
    a_pos = spectrum.position_coefficients()
    z_cols = [3 * k + 2 for k in range(n)]
    xy_cols = [3 * k + mu for k in range(n) for mu in (0, 1)]
    z_weight = np.abs(a_pos[:, z_cols]) ** 2
    xy_weight = np.abs(a_pos[:, xy_cols]) ** 2
    axial = z_weight.sum(axis=1) > xy_weight.sum(axis=1)

    labels = [""] * spectrum.n_modes
    inplane = []
    for k in range(spectrum.n_modes):
        if axial[k]:
            labels[k] = "axial"
        else:
            inplane.append(k)

    usable = [k for k in inplane if k != spectrum.regularized_mode]
    if len(usable) >= 2:
        freqs = spectrum.frequencies[usable]
        order = np.argsort(freqs)
        sorted_f = freqs[order]
        ratios = sorted_f[1:] / np.maximum(sorted_f[:-1], 1e-300)
        split = int(np.argmax(ratios)) + 1
        low = {usable[order[i]] for i in range(split)}
        for k in inplane:
            labels[k] = "ExB" if (k in low or k == spectrum.regularized_mode) else "cyclotron"
    else:
        for i, k in enumerate(sorted(inplane, key=lambda k: spectrum.frequencies[k])):
            labels[k] = "ExB" if i == 0 else "cyclotron"

    intervals = {}
    for band in ("ExB", "cyclotron", "axial"):
        members = [
            spectrum.frequencies[k]
            for k in range(spectrum.n_modes)
            if labels[k] == band and k != spectrum.regularized_mode
        ]
        if members:
            intervals[band] = (float(min(members)), float(max(members)))

    spans = sorted(intervals.items(), key=lambda item: item[1][0])
    gaps = []
    for (name_a, span_a), (name_b, span_b) in zip(spans, spans[1:]):
        if span_b[0] > span_a[1]:
            gaps.append((span_a[1], span_b[0], name_a, name_b))
    return BandClassification(labels=labels, intervals=intervals, gaps=gaps)
