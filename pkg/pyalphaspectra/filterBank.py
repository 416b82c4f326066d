import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .spectra import FrequencyGrid, SpectralDensity

logger = logging.getLogger(__name__)

RANGE_RANK_TOL = 1e-10
FEASIBILITY_RTOL = 1e-6
_NULL_RCOND = 1e-10
_MOMENT_RTOL = 1e-9
_SYMMETRY_RTOL = 1e-12


class FilterBankError(ValueError):
    """Base class of filter bank validation errors. `code` identifies the failure."""
    code = "filterbank"


class BankDimensionError(FilterBankError):
    code = "dimension"


class UnstableBankError(FilterBankError):
    code = "unstable"


class UnreachableBankError(FilterBankError):
    code = "unreachable"


class InconsistentBankError(FilterBankError):
    code = "inconsistent"


class FilterBank:
    """
    Single-input filter bank G(z) = (zI - A)^{-1} B, whose output covariance encodes generalized
    moments of the input spectral density.

    Attributes
    ----------
    A: np.ndarray
        n x n stability matrix (spectral radius < 1), read-only
    B: np.ndarray
        Input vector of length n, read-only
    n: int
        State dimension, n > 1
    spectral_radius: float
        Max modulus of the eigenvalues of A
    controllability_rank: int
        Rank of [B, AB, ..., A^{n-1}B]; equals n for a valid bank

    Methods
    -------
    from_dict(spec):
        Build a bank from ``{"A": [[...]], "B": [...]}`` or ``{"lag_bank": n}``
    to_dict():
        JSON-ready dictionary
    evaluate(grid):
        Samples of G on the unit circle
    """

    def __init__(self, A, B) -> None:
        """
        Parameters
        ----------
        A : array_like
            Square state matrix
        B : array_like
            Input vector, given flat or as a single column

        Raises
        ------
        ValueError
            If A is not square or B does not match A
        BankDimensionError
            If n <= 1
        UnstableBankError
            If the spectral radius of A is not smaller than 1
        UnreachableBankError
            If (A, B) is not a reachable pair
        """
        A = np.array(A, dtype=float)
        B = np.array(B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("'A' must be a square matrix, got shape %s." % (A.shape,))
        if B.ndim == 2 and B.shape[1] == 1:
            B = B[:, 0]
        if B.ndim != 1 or B.size != A.shape[0]:
            raise ValueError("'B' must be a vector of length %d, got shape %s." % (A.shape[0], B.shape))
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("Filter bank entries must be finite.")

        n = A.shape[0]
        if n <= 1:
            raise BankDimensionError("Filter bank state dimension must exceed 1, got %d." % n)

        spectral_radius = float(np.max(np.abs(np.linalg.eigvals(A))))
        if spectral_radius >= 1:
            raise UnstableBankError("A is not a stability matrix: spectral radius %.6g >= 1."
                % spectral_radius)

        ctrb = np.empty((n, n))
        column = B.copy()
        for k in range(n):
            ctrb[:, k] = column
            column = A @ column
        rank = int(np.linalg.matrix_rank(ctrb))
        if rank < n:
            raise UnreachableBankError("(A, B) is not reachable: controllability rank %d < %d." % (rank, n))

        A.flags.writeable = False
        B.flags.writeable = False
        self._A = A
        self._B = B
        self.n = n
        self.spectral_radius = spectral_radius
        self.controllability_rank = rank

    @property
    def A(self) -> np.ndarray:
        return self._A

    @property
    def B(self) -> np.ndarray:
        return self._B

    @classmethod
    def from_dict(cls, spec: dict) -> "FilterBank":
        if not isinstance(spec, dict):
            raise TypeError("Filter bank spec must be a dictionary.")
        if "lag_bank" in spec:
            return covariance_lag_bank(spec["lag_bank"])
        if "A" not in spec or "B" not in spec:
            raise KeyError("Filter bank spec must contain 'A' and 'B', or 'lag_bank'.")
        return cls(spec["A"], spec["B"])

    def to_dict(self) -> dict:
        return {"A": self._A.tolist(), "B": self._B.tolist()}

    def evaluate(self, grid: FrequencyGrid) -> np.ndarray:
        return evaluate_bank(self, grid)

    def __repr__(self) -> str:
        return "FilterBank(n=%d, spectral_radius=%.3g)" % (self.n, self.spectral_radius)


def build_filter_bank(A, B) -> FilterBank:
    return FilterBank(A, B)


def covariance_lag_bank(n: int) -> FilterBank:
    """
    Bank of pure delays G(z) = [z^{-1}, ..., z^{-n}]^T: A is the subdiagonal shift and B = e_1.
    Its output covariance is the Toeplitz matrix of the input autocovariance lags 0..n-1.
    """
    n = int(n)
    if n < 2:
        raise BankDimensionError("A lag bank needs at least 2 lags, got %d." % n)
    A = np.eye(n, k=-1)
    B = np.zeros(n)
    B[0] = 1.0
    return FilterBank(A, B)


def evaluate_bank(bank: FilterBank, grid: FrequencyGrid) -> np.ndarray:
    """
    Samples G(e^{j theta_k}) = (e^{j theta_k} I - A)^{-1} B, as a (size, n) complex array.
    Rows on (pi, 2*pi) are the conjugates of the rows on (0, pi).
    """
    z = grid.unit_circle()
    resolvent = z[:, None, None] * np.eye(bank.n) - bank.A
    rhs = np.broadcast_to(bank.B[:, None], (grid.size, bank.n, 1))
    samples = np.linalg.solve(resolvent, rhs)[:, :, 0]
    return grid.symmetrize(samples, conjugate=True)


def solve_stein(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """
    Solve P - A P A^T = Q through the vectorized system (I - A kron A) vec(P) = vec(Q),
    with row-major vec. The solution is unique for a stability matrix A.
    """
    n = A.shape[0]
    lhs = np.eye(n * n) - np.kron(A, A)
    return scipy.linalg.solve(lhs, Q.reshape(-1)).reshape(n, n)


def range_gamma_basis(bank: FilterBank, rank_tol: float = RANGE_RANK_TOL):
    """
    Orthonormal basis of Range Gamma in the trace inner product.

    Range Gamma is the set of symmetric P solving P - A P A^T = B H + H^T B^T for some row H.
    One Stein equation is solved per unit vector H = e_k^T; the n solutions are orthonormalized
    by SVD, keeping singular values above `rank_tol` times the largest.

    Returns
    -------
    basis: np.ndarray
        (d, n, n) array of symmetric matrices
    d: int
        Dimension of Range Gamma, at most n
    """
    n = bank.n
    columns = np.empty((n * n, n))
    for k in range(n):
        H = np.zeros(n)
        H[k] = 1.0
        Q = np.outer(bank.B, H) + np.outer(H, bank.B)
        columns[:, k] = solve_stein(bank.A, Q).reshape(-1)

    U, s, _ = np.linalg.svd(columns, full_matrices=False)
    d = int(np.sum(s > rank_tol * s[0]))
    basis = U[:, :d].T.reshape(d, n, n)
    basis = 0.5 * (basis + np.transpose(basis, (0, 2, 1)))
    logger.debug("Range Gamma of %r has dimension %d (singular values %s)", bank, d, s)
    return basis, d


@dataclass(frozen=True)
class FeasibilityReport:
    """
    Verdict on a covariance matrix: the approximation problem is feasible iff Sigma lies
    in Range Gamma and is positive definite.
    """
    in_range: bool
    range_residual: float
    positive_definite: bool
    min_eigenvalue: float
    tolerance: float

    @property
    def feasible(self) -> bool:
        return self.in_range and self.positive_definite

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "in_range": self.in_range,
            "range_residual": self.range_residual,
            "positive_definite": self.positive_definite,
            "min_eigenvalue": self.min_eigenvalue,
            "tolerance": self.tolerance,
        }


def _check_symmetric(M: np.ndarray, n: int) -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.shape != (n, n):
        raise ValueError("Expected a %d x %d matrix, got shape %s." % (n, n, M.shape))
    if np.max(np.abs(M - M.T), initial=0.0) > _SYMMETRY_RTOL * max(1.0, np.max(np.abs(M))):
        raise ValueError("Matrix must be symmetric.")
    return 0.5 * (M + M.T)


class GammaOperator:
    """
    The operator Gamma: Phi -> integral of G Phi G^* on a frequency grid, together with an
    orthonormal basis of its range.

    Attributes
    ----------
    bank: FilterBank
    grid: FrequencyGrid
    G_samples: np.ndarray
        (size, n) complex samples of G on the grid
    basis: np.ndarray
        (d, n, n) orthonormal basis of Range Gamma
    d: int
        Dimension of Range Gamma
    basis_forms: np.ndarray
        (d, size) samples of G^* Lambda_i G for every basis element
    basis_traces: np.ndarray
        Traces of the basis elements

    Methods
    -------
    gamma_apply(phi):
        Gamma applied to a spectral density
    quadratic_form(M):
        Samples of G^* M G on the grid
    coordinates(M), assemble(coords):
        Change of representation between matrices and Range Gamma coordinates
    project_range_gamma(M):
        Orthogonal projection onto Range Gamma
    orthogonal_complement_basis():
        Orthonormal basis of the complement of Range Gamma among symmetric matrices
    orthogonality_null_check(M):
        Sup over the grid of |G^* M G|
    feasibility_check(sigma, tolerance):
        FeasibilityReport for a covariance matrix
    """

    def __init__(self, bank: FilterBank, grid: FrequencyGrid) -> None:
        if not isinstance(bank, FilterBank):
            raise TypeError("'bank' must be a FilterBank.")
        if not isinstance(grid, FrequencyGrid):
            raise TypeError("'grid' must be a FrequencyGrid.")
        self.bank = bank
        self.grid = grid
        self.n = bank.n
        self.G_samples = evaluate_bank(bank, grid)
        self.basis, self.d = range_gamma_basis(bank)
        self.basis_traces = np.trace(self.basis, axis1=1, axis2=2)
        self.basis_forms = np.stack([self.quadratic_form(L) for L in self.basis])
        for array in (self.G_samples, self.basis, self.basis_traces, self.basis_forms):
            array.flags.writeable = False

    def quadratic_form(self, M: np.ndarray) -> np.ndarray:
        """Real samples of G(e^{j theta})^* M G(e^{j theta}) for a symmetric M."""
        G = self.G_samples
        form = np.einsum("ka,ab,kb->k", G.conj(), np.asarray(M, dtype=float), G).real
        return self.grid.symmetrize(form)

    def gamma_apply(self, phi: SpectralDensity) -> np.ndarray:
        if not isinstance(phi, SpectralDensity):
            raise TypeError("Gamma acts on a SpectralDensity.")
        if phi.grid != self.grid:
            raise ValueError("Spectral density grid %r differs from operator grid %r." % (phi.grid, self.grid))
        G = self.G_samples
        M = np.einsum("k,ka,kb->ab", phi.values, G, G.conj()).real / self.grid.size
        return 0.5 * (M + M.T)

    def coordinates(self, M: np.ndarray) -> np.ndarray:
        return np.einsum("iab,ab->i", self.basis, M)

    def assemble(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (self.d,):
            raise ValueError("Expected %d Range Gamma coordinates, got shape %s." % (self.d, coords.shape))
        return np.einsum("i,iab->ab", coords, self.basis)

    def project_range_gamma(self, M: np.ndarray) -> np.ndarray:
        """
        Raises
        ------
        ValueError
            If M is not a symmetric n x n matrix
        """
        M = _check_symmetric(M, self.n)
        return self.assemble(self.coordinates(M))

    def orthogonal_complement_basis(self) -> np.ndarray:
        """Orthonormal basis, as a (n(n+1)/2 - d, n, n) array, of the symmetric matrices orthogonal to Range Gamma."""
        n = self.n
        rows, cols = np.triu_indices(n)
        sym = np.zeros((rows.size, n, n))
        for k, (i, j) in enumerate(zip(rows, cols)):
            if i == j:
                sym[k, i, i] = 1.0
            else:
                sym[k, i, j] = sym[k, j, i] = np.sqrt(0.5)
        flat_basis = self.basis.reshape(self.d, -1)
        residual = sym.reshape(rows.size, -1)
        residual = residual - (residual @ flat_basis.T) @ flat_basis
        U, s, _ = np.linalg.svd(residual.T, full_matrices=False)
        keep = rows.size - self.d
        complement = U[:, :keep].T.reshape(keep, n, n)
        return 0.5 * (complement + np.transpose(complement, (0, 2, 1)))

    def orthogonality_null_check(self, M: np.ndarray) -> float:
        """Sup over the grid of |G^* M G|; vanishes for every M orthogonal to Range Gamma."""
        return float(np.max(np.abs(self.quadratic_form(M))))

    def feasibility_check(self, sigma: np.ndarray, tolerance: float = None) -> FeasibilityReport:
        """
        Parameters
        ----------
        sigma : np.ndarray
            Symmetric n x n covariance matrix
        tolerance : float, optional
            Absolute tolerance on the Frobenius distance from Range Gamma, by default
            1e-6 times the Frobenius norm of sigma
        """
        sigma = _check_symmetric(sigma, self.n)
        if tolerance is None:
            tolerance = FEASIBILITY_RTOL * np.linalg.norm(sigma)
        residual = float(np.linalg.norm(sigma - self.project_range_gamma(sigma)))
        min_eig = float(np.linalg.eigvalsh(sigma)[0])
        return FeasibilityReport(
            in_range=bool(residual < tolerance) or residual == 0.0,
            range_residual=residual,
            positive_definite=bool(min_eig > 0),
            min_eigenvalue=min_eig,
            tolerance=float(tolerance),
        )

    def __repr__(self) -> str:
        return "GammaOperator(%r, %r, d=%d)" % (self.bank, self.grid, self.d)


def symmetric_sqrt(sigma: np.ndarray):
    """
    Symmetric square root and inverse square root of a positive definite matrix, through
    its eigendecomposition.

    Raises
    ------
    ValueError
        If sigma is not positive definite
    """
    w, V = scipy.linalg.eigh(sigma)
    if w[0] <= 0:
        raise ValueError("Matrix is not positive definite (min eigenvalue %.6g)." % w[0])
    root = (V * np.sqrt(w)) @ V.T
    inv_root = (V / np.sqrt(w)) @ V.T
    return 0.5 * (root + root.T), 0.5 * (inv_root + inv_root.T)


def normalize_bank(bank: FilterBank, sigma: np.ndarray) -> FilterBank:
    """
    Bank with G replaced by Sigma^{-1/2} G, i.e. A -> Sigma^{-1/2} A Sigma^{1/2} and
    B -> Sigma^{-1/2} B, so that the covariance constraint reads Gamma(Phi) = I.

    Raises
    ------
    ValueError
        If sigma is not a symmetric positive definite n x n matrix
    """
    sigma = _check_symmetric(sigma, bank.n)
    root, inv_root = symmetric_sqrt(sigma)
    return FilterBank(inv_root @ bank.A @ root, inv_root @ bank.B)


def zeroth_moment_constraint(bank: FilterBank, sigma: np.ndarray = None):
    """
    Value of the zeroth moment of Phi imposed by Gamma(Phi) = Sigma when A is singular.

    For v in the left null space of A, v^T G(z) = z^{-1} v^T B, hence the constraint forces
    integral(Phi) = v^T Sigma v / (v^T B)^2 (Sigma = I by default).

    Returns
    -------
    float or None
        The fixed zeroth moment, or None when A is nonsingular

    Raises
    ------
    InconsistentBankError
        If v^T B vanishes, or independent null vectors disagree on the value
    """
    sigma = np.eye(bank.n) if sigma is None else np.asarray(sigma, dtype=float)
    null = scipy.linalg.null_space(bank.A.T, rcond=_NULL_RCOND)
    if null.shape[1] == 0:
        return None

    values = []
    for v in null.T:
        vb = float(v @ bank.B)
        if abs(vb) < 1e-12:
            raise InconsistentBankError("Left null vector of A is orthogonal to B.")
        values.append(float(v @ sigma @ v) / vb ** 2)
    if max(values) - min(values) > _MOMENT_RTOL * max(abs(v) for v in values):
        raise InconsistentBankError("Zeroth moment constraints disagree: %s." % values)
    return values[0]
