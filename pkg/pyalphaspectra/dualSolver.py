import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .filterBank import GammaOperator, normalize_bank
from .spectra import (
    DEFAULT_GRID_SIZE,
    FrequencyGrid,
    SpectralDensity,
    parse_nu,
    quadrature,
    s_nu,
    trig_coefficients,
)

logger = logging.getLogger(__name__)


class NuParameter:
    """
    Order nu of the Alpha divergence minimized by the solver, alpha = 1 - 1/nu.

    Solvable orders are the integers nu >= 1 and nu = infinity (the MinxEnt case).

    Attributes
    ----------
    value: int or float
        The order, ``math.inf`` for infinity
    is_infinite: bool
    """

    def __init__(self, value) -> None:
        """
        Raises
        ------
        ValueError
            If the order is zero, negative, or not an integer
        """
        if isinstance(value, NuParameter):
            value = value.value
        value = parse_nu(value)
        if value < 1:
            raise ValueError("The solver handles nu >= 1 or nu = inf, got %s." % value)
        self.value = value

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)

    def to_json(self):
        return "inf" if self.is_infinite else self.value

    def __eq__(self, other) -> bool:
        if isinstance(other, NuParameter):
            return self.value == other.value
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.value)

    def __str__(self) -> str:
        return "inf" if self.is_infinite else str(self.value)

    def __repr__(self) -> str:
        return "NuParameter(%s)" % self


class Multiplier:
    """
    Lagrange multiplier Lambda in Range Gamma, stored as coordinates in the orthonormal basis
    of a GammaOperator.

    Attributes
    ----------
    coords: np.ndarray
        Read-only coordinates, one per basis element
    matrix: np.ndarray
        Assembled symmetric matrix sum_i coords_i Lambda_i
    """

    def __init__(self, op: GammaOperator, coords) -> None:
        coords = np.array(coords, dtype=float)
        self.matrix = op.assemble(coords)
        coords.flags.writeable = False
        self.coords = coords
        self.op = op

    @classmethod
    def zero(cls, op: GammaOperator) -> "Multiplier":
        return cls(op, np.zeros(op.d))

    @classmethod
    def from_matrix(cls, op: GammaOperator, M: np.ndarray) -> "Multiplier":
        """Multiplier of the Range Gamma component of M; the orthogonal part does not act on G^* M G."""
        return cls(op, op.coordinates(op.project_range_gamma(M)))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))

    def __repr__(self) -> str:
        return "Multiplier(%s)" % np.array2string(self.coords, precision=4)


@dataclass(frozen=True)
class SolverConfig:
    grid_size: int = DEFAULT_GRID_SIZE
    tolerance: float = 1e-9
    max_iterations: int = 200
    armijo: float = 1e-4
    eps_pos: float = 1e-12
    min_step: float = 1e-14
    # relative slack on the sufficient-decrease test, at the rounding level of J
    decrease_slack: float = 1e-12

    def __post_init__(self):
        if self.grid_size < 4 or self.grid_size % 2:
            raise ValueError("grid_size must be even and at least 4.")
        if not 0 < self.tolerance < 1:
            raise ValueError("tolerance must lie in (0, 1).")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative.")
        if not 0 < self.armijo < 1:
            raise ValueError("armijo must lie in (0, 1).")
        for name in ("eps_pos", "min_step"):
            if not getattr(self, name) > 0:
                raise ValueError("%s must be positive." % name)
        if self.decrease_slack < 0:
            raise ValueError("decrease_slack must be nonnegative.")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    dual_value: float
    gradient_norm: float
    step: float

    def to_dict(self) -> dict:
        return {"iteration": self.iteration, "dual_value": self.dual_value,
            "gradient_norm": self.gradient_norm, "step": self.step}


@dataclass(frozen=True)
class SolveResult:
    nu: NuParameter
    lambda_opt: Multiplier
    phi_opt: SpectralDensity
    dual_value: float
    primal_value: float
    constraint_residual: float
    duality_gap: float
    iterations: int
    trace: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "nu": self.nu.to_json(),
            "lambda_coords": self.lambda_opt.coords.tolist(),
            "lambda_matrix": self.lambda_opt.matrix.tolist(),
            "dual_value": self.dual_value,
            "primal_value": self.primal_value,
            "constraint_residual": self.constraint_residual,
            "duality_gap": self.duality_gap,
            "iterations": self.iterations,
            "trace": [record.to_dict() for record in self.trace],
        }


class InadmissibleMultiplierError(ValueError):
    """Raised when 1 + (1/nu) G^* Lambda G is not positive on the grid."""

    def __init__(self, message: str, margin: float) -> None:
        super().__init__(message)
        self.margin = margin


class SolverError(RuntimeError):
    """
    Newton solver failure. Carries the iteration trace and the last accepted multiplier
    coordinates so that callers can report diagnostics.
    """
    code = "solver"

    def __init__(self, message: str, trace=(), coords=None) -> None:
        super().__init__(message)
        self.trace = tuple(trace)
        self.coords = coords

    def to_dict(self) -> dict:
        return {
            "error": self.code,
            "message": str(self),
            "last_coords": None if self.coords is None else np.asarray(self.coords).tolist(),
            "trace": [record.to_dict() for record in self.trace],
        }


class MaxIterationsError(SolverError):
    code = "max_iterations"


class HessianSolveError(SolverError):
    code = "hessian"


class StepUnderflowError(SolverError):
    code = "step_underflow"

    def __init__(self, message: str, margin: float, trace=(), coords=None) -> None:
        super().__init__(message, trace, coords)
        self.margin = margin

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["margin"] = self.margin
        return out


class DualFunctional:
    """
    Dual functional J over Range Gamma coordinates for a fixed prior and operator.

    Every regime shares the first variation grad_i = tr(Lambda_i) - integral(Phi(Lambda) q_i)
    and a second variation of the form integral(w q_i q_j), where q_i = G^* Lambda_i G. Subclasses
    supply the optimal form Phi(Lambda), the weight w and the value.
    """

    def __init__(self, psi: SpectralDensity, op: GammaOperator) -> None:
        if not isinstance(psi, SpectralDensity):
            raise TypeError("The prior must be a SpectralDensity.")
        if psi.grid != op.grid:
            raise ValueError("Prior grid %r differs from operator grid %r." % (psi.grid, op.grid))
        self.psi = psi
        self.op = op
        self._psi = psi.values
        self._forms = op.basis_forms
        self._traces = op.basis_traces

    def form(self, coords: np.ndarray) -> np.ndarray:
        """Samples of G^* Lambda G."""
        return coords @ self._forms

    def margin(self, coords: np.ndarray) -> float:
        return math.inf

    def _require_admissible(self, coords: np.ndarray) -> None:
        margin = self.margin(coords)
        if not margin > 0:
            raise InadmissibleMultiplierError(
                "Multiplier is not admissible: min of 1 + G*LG/nu is %.6g." % margin, margin)

    def phi_values(self, coords: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def weights(self, coords: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, coords: np.ndarray) -> float:
        raise NotImplementedError

    def offset(self) -> float:
        """Constant c with S(Phi(Lambda_opt) || Psi) = c - J(Lambda_opt) at the optimum."""
        raise NotImplementedError

    def phi(self, coords: np.ndarray) -> SpectralDensity:
        return SpectralDensity(self.psi.grid, self.phi_values(coords))

    def gradient(self, coords: np.ndarray) -> np.ndarray:
        phi = self.phi_values(coords)
        return self._traces - self._forms @ phi / phi.size

    def hessian(self, coords: np.ndarray) -> np.ndarray:
        w = self.weights(coords)
        H = (self._forms * w) @ self._forms.T / w.size
        return 0.5 * (H + H.T)


class KullbackLeiblerDual(DualFunctional):
    """nu = 1: Phi = Psi / (1 + G*LG), J = -integral(Psi log(1 + G*LG)) + tr L."""

    nu = NuParameter(1)

    def _r(self, coords):
        return 1.0 + self.form(coords)

    def margin(self, coords):
        return float(np.min(self._r(coords)))

    def phi_values(self, coords):
        self._require_admissible(coords)
        return self._psi / self._r(coords)

    def weights(self, coords):
        self._require_admissible(coords)
        return self._psi / self._r(coords) ** 2

    def value(self, coords):
        self._require_admissible(coords)
        return -quadrature(self._psi * np.log(self._r(coords))) + float(coords @ self._traces)

    def offset(self):
        return 0.0


class AlphaDual(DualFunctional):
    """
    Finite integer nu >= 1: Phi = Psi r^{-nu} with r = 1 + G*LG/nu, and
    J = nu/(nu-1) integral(Psi r^{1-nu}) + tr L.

    The value is evaluated as nu * integral(Psi (r^{1-nu} - 1)/(nu - 1)) plus its constant, which
    stays finite at nu = 1 where it reduces to the Kullback-Leibler dual.
    """

    def __init__(self, nu, psi: SpectralDensity, op: GammaOperator) -> None:
        super().__init__(psi, op)
        nu = NuParameter(nu)
        if nu.is_infinite:
            raise ValueError("AlphaDual needs a finite nu; use MinxEntDual for nu = inf.")
        self.nu = nu
        self._order = nu.value

    def _r(self, coords):
        return 1.0 + self.form(coords) / self._order

    def margin(self, coords):
        return float(np.min(self._r(coords)))

    def phi_values(self, coords):
        self._require_admissible(coords)
        return self._psi * self._r(coords) ** (-self._order)

    def weights(self, coords):
        self._require_admissible(coords)
        return self._psi * self._r(coords) ** (-self._order - 1)

    def value(self, coords):
        self._require_admissible(coords)
        nu = self._order
        log_r = np.log(self._r(coords))
        if nu == 1:
            shifted = -log_r
        else:
            shifted = np.expm1((1 - nu) * log_r) / (nu - 1)
        return nu * quadrature(self._psi * shifted) + self.offset() + float(coords @ self._traces)

    def offset(self):
        nu = self._order
        return 0.0 if nu == 1 else nu / (nu - 1) * quadrature(self._psi)


class MinxEntDual(DualFunctional):
    """nu = inf: Phi = Psi exp(-G*LG), J = integral(Psi exp(-G*LG)) + tr L, defined on all of Range Gamma."""

    nu = NuParameter(math.inf)

    def phi_values(self, coords):
        with np.errstate(over="ignore"):
            return self._psi * np.exp(-self.form(coords))

    def weights(self, coords):
        return self.phi_values(coords)

    def value(self, coords):
        return quadrature(self.phi_values(coords)) + float(coords @ self._traces)

    def offset(self):
        return quadrature(self._psi)


def dual_functional(nu, psi: SpectralDensity, op: GammaOperator) -> DualFunctional:
    nu = NuParameter(nu)
    if nu.is_infinite:
        return MinxEntDual(psi, op)
    if nu.value == 1:
        return KullbackLeiblerDual(psi, op)
    return AlphaDual(nu, psi, op)


def _coords(lam, op: GammaOperator) -> np.ndarray:
    if isinstance(lam, Multiplier):
        if lam.coords.shape != (op.d,):
            raise ValueError("Multiplier does not belong to this operator.")
        return lam.coords
    coords = np.asarray(lam, dtype=float)
    if coords.shape != (op.d,):
        raise ValueError("Expected %d coordinates, got shape %s." % (op.d, coords.shape))
    return coords


def phi_from_multiplier(nu, lam, psi: SpectralDensity, op: GammaOperator) -> SpectralDensity:
    """
    Optimal form of the Lagrangian minimizer for a given multiplier:
    Psi (1 + G*LG/nu)^{-nu} for finite nu, Psi exp(-G*LG) for nu = inf.

    Raises
    ------
    InadmissibleMultiplierError
        If 1 + G*LG/nu is not positive on the grid
    """
    return dual_functional(nu, psi, op).phi(_coords(lam, op))


def admissible(nu, lam, op: GammaOperator, eps_pos: float = SolverConfig.eps_pos):
    """
    Returns
    -------
    (bool, float)
        Whether min over the grid of 1 + G*LG/nu exceeds `eps_pos`, and that minimum.
        For nu = inf every multiplier in Range Gamma is admissible and the margin is inf.
    """
    nu = NuParameter(nu)
    if nu.is_infinite:
        return True, math.inf
    coords = _coords(lam, op)
    margin = float(np.min(1.0 + coords @ op.basis_forms / nu.value))
    return margin > eps_pos, margin


def dual_value(nu, lam, psi: SpectralDensity, op: GammaOperator) -> float:
    return dual_functional(nu, psi, op).value(_coords(lam, op))


def dual_gradient(nu, lam, psi: SpectralDensity, op: GammaOperator) -> np.ndarray:
    """Gradient of J in Range Gamma coordinates: <I - Gamma(Phi(Lambda)), Lambda_i>."""
    return dual_functional(nu, psi, op).gradient(_coords(lam, op))


def dual_hessian(nu, lam, psi: SpectralDensity, op: GammaOperator) -> np.ndarray:
    return dual_functional(nu, psi, op).hessian(_coords(lam, op))


def _backtrack(functional, coords, value, grad, direction, config, trace):
    slope = float(grad @ direction)
    slack = config.decrease_slack * max(1.0, abs(value))
    step = 1.0
    margin = functional.margin(coords)
    while step >= config.min_step:
        candidate = coords + step * direction
        margin = functional.margin(candidate)
        if margin > config.eps_pos:
            candidate_value = functional.value(candidate)
            if math.isfinite(candidate_value) and \
                    candidate_value <= value + config.armijo * step * slope + slack:
                return step, candidate, candidate_value
        step *= 0.5
    logger.warning("Step underflow near the admissibility boundary (margin %.3g)", margin)
    raise StepUnderflowError(
        "Line search step fell below %.3g; last trial margin %.6g." % (config.min_step, margin),
        margin=margin, trace=trace, coords=coords)


def newton_solve(nu, psi: SpectralDensity, op: GammaOperator, config: SolverConfig = None,
        functional: DualFunctional = None) -> SolveResult:
    """
    Minimize the dual functional over Range Gamma with a damped Newton method.

    Starting from Lambda = 0, each iteration solves H delta = -grad by Cholesky factorization and
    halves the step until the trial point is admissible and satisfies the Armijo condition. The
    iteration stops when the gradient norm, i.e. the residual of the constraint Gamma(Phi) = I
    projected on Range Gamma, falls below the tolerance.

    Parameters
    ----------
    nu : int, str or NuParameter
        Order of the divergence
    psi : SpectralDensity
        Prior, on the operator grid
    op : GammaOperator
        Operator of the normalized bank (Gamma(Phi) = I is the constraint)
    config : SolverConfig, optional
        Solver settings, defaults to SolverConfig()
    functional : DualFunctional, optional
        Explicit dual functional, by default chosen from nu

    Returns
    -------
    SolveResult

    Raises
    ------
    MaxIterationsError
        If the tolerance is not met within `max_iterations` Newton steps
    StepUnderflowError
        If the line search cannot find an admissible decrease
    HessianSolveError
        If the Hessian is not numerically positive definite
    """
    config = config or SolverConfig()
    nu = NuParameter(nu)
    functional = functional or dual_functional(nu, psi, op)

    coords = np.zeros(op.d)
    value = functional.value(coords)
    trace = []
    step = 0.0
    iteration = 0
    while True:
        grad = functional.gradient(coords)
        grad_norm = float(np.linalg.norm(grad))
        trace.append(IterationRecord(iteration, value, grad_norm, step))
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("nu=%s it=%d J=%.15g |grad|=%.3e step=%.3g margin=%.3g",
                nu, iteration, value, grad_norm, step, functional.margin(coords))
        if grad_norm < config.tolerance:
            break
        if iteration >= config.max_iterations:
            raise MaxIterationsError("No convergence in %d iterations (|grad| = %.3e)."
                % (config.max_iterations, grad_norm), trace=trace, coords=coords)

        hess = functional.hessian(coords)
        try:
            if not np.all(np.isfinite(hess)):
                raise np.linalg.LinAlgError("non-finite Hessian")
            factor = scipy.linalg.cho_factor(hess)
        except np.linalg.LinAlgError as e:
            raise HessianSolveError("Hessian factorization failed at iteration %d: %s" % (iteration, e),
                trace=trace, coords=coords) from e
        direction = -scipy.linalg.cho_solve(factor, grad)
        step, coords, value = _backtrack(functional, coords, value, grad, direction, config, trace)
        iteration += 1

    lam = Multiplier(op, coords)
    phi = functional.phi(coords)
    residual = float(np.linalg.norm(op.gamma_apply(phi) - np.eye(op.n)))
    primal = s_nu(phi, psi, nu.value)
    gap = abs(primal - (functional.offset() - value))
    logger.info("nu=%s converged in %d iterations: J=%.12g, residual=%.3e, gap=%.3e",
        nu, iteration, value, residual, gap)
    return SolveResult(nu=nu, lambda_opt=lam, phi_opt=phi, dual_value=value, primal_value=primal,
        constraint_residual=residual, duality_gap=gap, iterations=iteration, trace=tuple(trace))


def prepare_operator(bank, sigma: np.ndarray, grid: FrequencyGrid, tolerance: float = None):
    """
    Check feasibility of Sigma, project it onto Range Gamma to remove sub-tolerance round-off,
    and build the operator of the normalized bank Sigma^{-1/2} G.

    Returns
    -------
    (GammaOperator or None, FeasibilityReport)
        The operator is None when Sigma is infeasible
    """
    op = GammaOperator(bank, grid)
    report = op.feasibility_check(sigma, tolerance)
    if not report.feasible:
        logger.info("Covariance is infeasible: %s", report)
        return None, report
    sigma = op.project_range_gamma(sigma)
    return GammaOperator(normalize_bank(bank, sigma), grid), report


def kl0_closed_form(op: GammaOperator) -> SpectralDensity:
    """
    KL0 solution for a flat prior: Phi = B^T B / |B^T G|^2.

    Raises
    ------
    ValueError
        If |B^T G| falls below 1e-12 at some node
    """
    B = op.bank.B
    gain = np.abs(op.G_samples @ B)
    small = gain < 1e-12
    if np.any(small):
        k = int(np.argmax(small))
        raise ValueError("|G^* B| vanishes at theta = %.6g." % op.grid.nodes[k])
    return SpectralDensity(op.grid, float(B @ B) / gain ** 2)


def uniform_convergence_gap(lam, psi: SpectralDensity, op: GammaOperator, nu) -> float:
    """Sup over the grid of |Phi_nu(Lambda) - Phi_inf(Lambda)| for a finite nu."""
    nu = NuParameter(nu)
    if nu.is_infinite:
        raise ValueError("The convergence gap is defined for finite nu.")
    coords = _coords(lam, op)
    finite = AlphaDual(nu, psi, op).phi_values(coords)
    limit = MinxEntDual(psi, op).phi_values(coords)
    return float(np.max(np.abs(finite - limit)))


def degree_certificate(nu, lam, op: GammaOperator) -> float:
    """
    Largest trigonometric coefficient beyond lag n of r(theta) |det(e^{j theta} I - A)|^2, with
    r = 1 + G*LG/nu. G*LG is a ratio P / |det(zI - A)|^2 with P of degree at most n - 1, so the
    product is a pseudo-polynomial of degree at most n and the result is zero up to rounding.
    For a lag bank det(zI - A) = z^n and this is the spectrum of r itself.
    """
    nu = NuParameter(nu)
    if nu.is_infinite:
        raise ValueError("The degree certificate is defined for finite nu.")
    coords = _coords(lam, op)
    r = 1.0 + coords @ op.basis_forms / nu.value
    charpoly = np.polyval(np.poly(op.bank.A), op.grid.unit_circle())
    product = op.grid.symmetrize(r * np.abs(charpoly) ** 2)
    coeffs = trig_coefficients(product, op.grid.size // 2 - 1)
    return float(np.max(np.abs(coeffs[op.n + 1:])))


def beta_optimal_form(nu, lam, psi: SpectralDensity, op: GammaOperator) -> SpectralDensity:
    """
    Minimizer of the Beta-divergence Lagrangian, (Psi^{-1/nu} + G*LG/nu)^{-nu}, evaluation only.
    For a flat prior it coincides with the Alpha optimal form.
    """
    nu = NuParameter(nu)
    if nu.is_infinite:
        raise ValueError("The Beta optimal form is defined for finite nu.")
    coords = _coords(lam, op)
    base = psi.values ** (-1.0 / nu.value) + coords @ op.basis_forms / nu.value
    if np.any(base <= 0):
        raise InadmissibleMultiplierError("Beta optimal form base is not positive.", float(np.min(base)))
    return SpectralDensity(op.grid, base ** (-nu.value))
