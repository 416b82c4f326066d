import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .filterBank import FeasibilityReport, FilterBank, GammaOperator
from .spectra import FrequencyGrid, RationalSpec, SpectralDensity, make_grid

logger = logging.getLogger(__name__)

DEFAULT_BURN_IN = 1000
_STABILITY_MARGIN = 1.0 - 1e-12
_FLOOR_FRACTION = 1e-8


class UnstableModelError(ValueError):
    pass


class DegenerateSampleError(RuntimeError):
    """Raised when a sample covariance cannot be conditioned; `report` holds the failed verdict."""

    def __init__(self, message: str, report: FeasibilityReport = None) -> None:
        super().__init__(message)
        self.report = report


class ArmaModel:
    """
    ARMA shaping filter W(z) = num(z)/den(z), driven by white noise of variance `variance`.

    Coefficients are in ascending powers of z, as in `RationalSpec`; the spectral density of
    the output is variance * |W(e^{j theta})|^2.

    Attributes
    ----------
    num, den: np.ndarray
        Numerator and denominator coefficients, ascending powers of z
    variance: float
        Innovation variance
    poles: np.ndarray
        Roots of the denominator, all strictly inside the unit disk

    Methods
    -------
    from_dict(spec), to_dict():
        JSON form ``{"num": [...], "den": [...], "variance": 1.0}``
    lfilter_coefficients():
        (b, a) in powers of z^{-1}, ready for scipy.signal.lfilter
    to_rational_spec(), spectrum(grid):
        Spectral density of the output process
    """

    def __init__(self, num, den, variance: float = 1.0) -> None:
        """
        Raises
        ------
        ValueError
            If the leading denominator coefficient is zero, the numerator degree exceeds the
            denominator degree, or the variance is not positive
        UnstableModelError
            If a denominator root lies on or outside the unit circle
        """
        num = np.trim_zeros(np.atleast_1d(np.array(num, dtype=float)), "b")
        den = np.atleast_1d(np.array(den, dtype=float))
        if den.size == 0 or den[-1] == 0:
            raise ValueError("Leading denominator coefficient must be nonzero.")
        if num.size == 0:
            raise ValueError("Numerator must not be identically zero.")
        if num.size > den.size:
            raise ValueError("Numerator degree exceeds denominator degree: the filter is not causal.")
        if not variance > 0:
            raise ValueError("Innovation variance must be positive.")

        poles = np.roots(den[::-1]) if den.size > 1 else np.array([])
        if poles.size and np.max(np.abs(poles)) >= _STABILITY_MARGIN:
            raise UnstableModelError("ARMA model is unstable: pole of modulus %.6g."
                % np.max(np.abs(poles)))

        self.num = num
        self.den = den
        self.variance = float(variance)
        self.poles = poles

    @classmethod
    def from_dict(cls, spec: dict) -> "ArmaModel":
        if "num" not in spec or "den" not in spec:
            raise KeyError("ARMA model spec must contain 'num' and 'den'.")
        return cls(spec["num"], spec["den"], spec.get("variance", 1.0))

    def to_dict(self) -> dict:
        return {"num": self.num.tolist(), "den": self.den.tolist(), "variance": self.variance}

    def lfilter_coefficients(self):
        # W(z) = z^{-p} num(z) / (z^{-p} den(z)), p = deg den
        p = self.den.size - 1
        b = np.zeros(p + 1)
        b[p + 1 - self.num.size:] = self.num[::-1]
        a = self.den[::-1]
        return b, a

    def to_rational_spec(self) -> RationalSpec:
        return RationalSpec("transfer", self.num * np.sqrt(self.variance), self.den)

    def spectrum(self, grid: FrequencyGrid) -> SpectralDensity:
        return self.to_rational_spec().evaluate(grid)

    def __repr__(self) -> str:
        return "ArmaModel(num=%s, den=%s, variance=%g)" % (self.num.tolist(), self.den.tolist(), self.variance)


class SampleSeries:
    """
    Finite realization y_0..y_{N-1} of a scalar process.

    Attributes
    ----------
    values: np.ndarray
        Read-only finite samples
    seed: int or None
        Seed of the generator that produced the series, None for loaded data
    """

    def __init__(self, values, seed: int = None) -> None:
        values = np.array(values, dtype=float).reshape(-1)
        if values.size == 0:
            raise ValueError("A sample series needs at least one sample.")
        if not np.all(np.isfinite(values)):
            raise ValueError("Sample series contains non-finite values.")
        values.flags.writeable = False
        self.values = values
        self.seed = seed

    @property
    def N(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def from_csv(cls, path: str) -> "SampleSeries":
        return cls(np.loadtxt(path, delimiter=",", ndmin=1))

    def to_csv(self, path: str) -> None:
        np.savetxt(path, self.values, fmt="%.17g")


def simulate_arma(model: ArmaModel, N: int, seed: int, burn_in: int = DEFAULT_BURN_IN) -> SampleSeries:
    """
    Filter Gaussian white noise of the model variance through num/den, discarding the first
    `burn_in` outputs. The generator is numpy's default PCG64 seeded with `seed`.
    """
    if N < 1:
        raise ValueError("Series length must be positive.")
    if burn_in < 0:
        raise ValueError("Burn-in must be nonnegative.")
    rng = np.random.default_rng(seed)
    noise = np.sqrt(model.variance) * rng.standard_normal(N + burn_in)
    b, a = model.lfilter_coefficients()
    y = signal.lfilter(b, a, noise)
    return SampleSeries(y[burn_in:], seed=seed)


def filter_states(bank: FilterBank, series: SampleSeries) -> np.ndarray:
    """
    States x_0..x_{N-1} of x_{k+1} = A x_k + B y_k from x_0 = 0, as an (N, n) array.
    For a lag bank x_k = [y_{k-1}, ..., y_{k-n}].
    """
    n = bank.n
    system = (bank.A, bank.B[:, None], np.eye(n), np.zeros((n, 1)), 1)
    _, _, states = signal.dlsim(system, series.values)
    return np.asarray(states).reshape(series.N, n)


@dataclass(frozen=True)
class CovarianceEstimate:
    raw: np.ndarray
    conditioned: np.ndarray
    report: FeasibilityReport
    floored: bool = False


def estimate_sigma(bank: FilterBank, series: SampleSeries, op: GammaOperator = None) -> CovarianceEstimate:
    """
    Sample covariance of the filter states, conditioned to a feasible Sigma.

    The first n states, still affected by the zero initial condition, are discarded. The
    symmetrized sample covariance is projected onto Range Gamma; if the projection is not
    positive definite its eigenvalues are floored at 1e-8 * trace / n and the result projected
    again.

    Raises
    ------
    ValueError
        If the series is shorter than 10 n samples
    DegenerateSampleError
        If no feasible Sigma can be obtained (e.g. a constant zero series)
    """
    n = bank.n
    if series.N < 10 * n:
        raise ValueError("Need at least %d samples to estimate a %d x %d covariance." % (10 * n, n, n))
    if op is None:
        op = GammaOperator(bank, make_grid())
    elif op.bank is not bank:
        raise ValueError("GammaOperator was built for a different filter bank.")

    states = filter_states(bank, series)[n:]
    raw = states.T @ states / states.shape[0]
    raw = 0.5 * (raw + raw.T)
    conditioned = op.project_range_gamma(raw)

    floored = False
    w, V = np.linalg.eigh(conditioned)
    floor = _FLOOR_FRACTION * np.trace(conditioned) / n
    if w[0] <= floor and floor > 0:
        logger.warning("Flooring covariance eigenvalues at %.3g (min was %.3g)", floor, w[0])
        conditioned = op.project_range_gamma((V * np.maximum(w, floor)) @ V.T)
        floored = True

    report = op.feasibility_check(conditioned)
    if not report.feasible:
        raise DegenerateSampleError("Sample covariance cannot be conditioned to a feasible Sigma "
            "(min eigenvalue %.3g, range residual %.3g)." % (report.min_eigenvalue, report.range_residual),
            report=report)
    return CovarianceEstimate(raw=raw, conditioned=conditioned, report=report, floored=floored)
