import logging
import math
import numbers

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import fft

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 2048
_EVEN_RTOL = 1e-12
_DEN_FLOOR = 1e-10


class FrequencyGrid:
    """
    Uniform grid of `size` nodes theta_k = 2*pi*k/size on [0, 2*pi). The grid carries the
    normalized Lebesgue measure d(theta)/2*pi: integrals over the unit circle are computed as
    the arithmetic mean of grid samples (see `quadrature`).

    Attributes
    ----------
    size: int
        Number of nodes. Even and at least 4, so that both 0 and pi are nodes
    nodes: np.ndarray
        Read-only array of node angles in radians
    mirror: np.ndarray
        Index map k -> (size - k) % size, i.e. the node at 2*pi - theta_k
    """

    def __init__(self, size: int) -> None:
        """
        Parameters
        ----------
        size : int
            Number of nodes

        Raises
        ------
        TypeError
            If `size` is not an integer
        ValueError
            If `size` is odd or smaller than 4
        """
        if isinstance(size, bool) or not isinstance(size, numbers.Integral):
            raise TypeError("Grid size must be an integer.")
        if size < 4 or size % 2 != 0:
            raise ValueError("Grid size must be even and at least 4, got %d." % size)

        self._size = int(size)
        nodes = 2 * np.pi * np.arange(self._size) / self._size
        nodes.flags.writeable = False
        self._nodes = nodes
        mirror = (-np.arange(self._size)) % self._size
        mirror.flags.writeable = False
        self._mirror = mirror

    @property
    def size(self) -> int:
        return self._size

    @property
    def nodes(self) -> np.ndarray:
        return self._nodes

    @property
    def mirror(self) -> np.ndarray:
        return self._mirror

    def unit_circle(self) -> np.ndarray:
        """Return the complex nodes e^{j theta_k}."""
        return np.exp(1j * self._nodes)

    def symmetrize(self, values: np.ndarray, conjugate: bool = False) -> np.ndarray:
        """
        Copy samples on [0, pi] onto (pi, 2*pi) so that the result is exactly even
        (or exactly Hermitian when `conjugate` is True). The first axis indexes the nodes.
        """
        out = np.array(values, copy=True)
        upper = np.arange(self._size // 2 + 1, self._size)
        out[upper] = out[self._mirror[upper]]
        if conjugate:
            out[upper] = np.conj(out[upper])
            real = [0, self._size // 2]
            out[real] = out[real].real
        return out

    def __len__(self) -> int:
        return self._size

    def __eq__(self, other) -> bool:
        return isinstance(other, FrequencyGrid) and other.size == self._size

    def __hash__(self) -> int:
        return hash(("FrequencyGrid", self._size))

    def __repr__(self) -> str:
        return "FrequencyGrid(size=%d)" % self._size


def make_grid(size: int = DEFAULT_GRID_SIZE) -> FrequencyGrid:
    return FrequencyGrid(size)


class SpectralDensity:
    """
    Positive, even, grid-sampled spectral density of a real scalar stationary process.

    Attributes
    ----------
    grid: FrequencyGrid
        Grid the density is sampled on
    values: np.ndarray
        Read-only array of samples Phi(e^{j theta_k}), strictly positive

    Methods
    -------
    from_function(grid, function):
        Sample a callable of the node angles
    moment():
        Zeroth moment, i.e. the quadrature of the samples
    power(exponent):
        Pointwise power, used by the Beta/Alpha transformation
    scaled(factor):
        Pointwise scaling by a positive constant
    sup_distance(other):
        Max absolute pointwise difference with another density on the same grid
    """

    def __init__(self, grid: FrequencyGrid, values) -> None:
        """
        Parameters
        ----------
        grid : FrequencyGrid
            Sampling grid
        values : array_like
            One real sample per node

        Raises
        ------
        TypeError
            If `grid` is not a FrequencyGrid
        ValueError
            If the number of samples does not match the grid, if samples are not finite or not
            strictly positive, or if the samples are not even around theta = pi
        """
        if not isinstance(grid, FrequencyGrid):
            raise TypeError("'grid' must be a FrequencyGrid.")
        values = np.array(values, dtype=float)
        if values.shape != (grid.size,):
            raise ValueError("Expected %d samples, got shape %s." % (grid.size, values.shape))
        if not np.all(np.isfinite(values)):
            raise ValueError("Spectral density samples must be finite.")
        if np.any(values <= 0):
            k = int(np.argmin(values))
            raise ValueError("Spectral density must be strictly positive; value %.6g at theta = %.6g."
                % (values[k], grid.nodes[k]))
        mirrored = values[grid.mirror]
        if np.any(np.abs(values - mirrored) > _EVEN_RTOL * np.maximum(np.abs(values), np.abs(mirrored))):
            raise ValueError("Spectral density must be even: Phi(theta) = Phi(2*pi - theta).")

        values.flags.writeable = False
        self._grid = grid
        self._values = values

    @classmethod
    def from_function(cls, grid: FrequencyGrid, function) -> "SpectralDensity":
        return cls(grid, function(grid.nodes))

    @property
    def grid(self) -> FrequencyGrid:
        return self._grid

    @property
    def values(self) -> np.ndarray:
        return self._values

    def moment(self) -> float:
        return quadrature(self._values)

    def power(self, exponent: float) -> "SpectralDensity":
        return SpectralDensity(self._grid, self._values ** exponent)

    def scaled(self, factor: float) -> "SpectralDensity":
        if factor <= 0:
            raise ValueError("Scaling factor must be positive.")
        return SpectralDensity(self._grid, factor * self._values)

    def sup_distance(self, other: "SpectralDensity") -> float:
        _check_same_grid(self, other)
        return float(np.max(np.abs(self._values - other.values)))

    def __repr__(self) -> str:
        return "SpectralDensity(grid=%r, moment=%.6g)" % (self._grid, self.moment())


class RationalSpec:
    """
    Rational description of a spectral density, used only as an input format: all the
    numerics run on grid samples obtained with `eval_rational_spec`.

    Three kinds are supported:

    * ``transfer``: shaping filter W(z) = num(z)/den(z), coefficients in ascending powers
      of z (num[i] multiplies z^i); the density is |W(e^{j theta})|^2
    * ``laurent``: ratio of symmetric Laurent polynomials; index i holds c_i = c_{-i},
      so each polynomial evaluates to c_0 + 2 * sum_k c_k cos(k theta)
    * ``constant``: constant density `value`

    Attributes
    ----------
    kind: str
        One of ``transfer``, ``laurent``, ``constant``
    num, den: np.ndarray
        Coefficient arrays (``[value]`` and ``[1]`` for a constant)
    value: float or None
        Constant value, only for kind ``constant``
    """

    KINDS = ("transfer", "laurent", "constant")
    _ALIASES = {
        "transfer-magnitude-squared": "transfer",
        "laurent-ratio": "laurent",
    }

    def __init__(self, kind: str, num=None, den=None, value=None) -> None:
        """
        Raises
        ------
        ValueError
            If `kind` is unknown, coefficients are missing or empty, the denominator is
            identically zero, or a constant value is missing or not positive
        """
        kind = self._ALIASES.get(kind, kind)
        if kind not in self.KINDS:
            raise ValueError("Rational spec kind must be one of %s, got %r." % (self.KINDS, kind))

        if kind == "constant":
            if value is None:
                raise ValueError("A constant spec needs a 'value'.")
            value = float(value)
            if not value > 0:
                raise ValueError("A constant spectral density must be positive.")
            num, den = [value], [1.0]
        else:
            if num is None or den is None:
                raise ValueError("A %s spec needs both 'num' and 'den'." % kind)

        num = np.atleast_1d(np.array(num, dtype=float))
        den = np.atleast_1d(np.array(den, dtype=float))
        if num.ndim != 1 or den.ndim != 1 or num.size == 0 or den.size == 0:
            raise ValueError("Coefficients must be non-empty flat lists.")
        if not np.any(den != 0):
            raise ValueError("Denominator must not be identically zero.")
        if not np.any(num != 0):
            raise ValueError("Numerator must not be identically zero.")

        self.kind = kind
        self.num = num
        self.den = den
        self.value = value

    @classmethod
    def from_dict(cls, spec: dict) -> "RationalSpec":
        if not isinstance(spec, dict):
            raise TypeError("Rational spec must be a dictionary.")
        if "kind" not in spec:
            raise KeyError("Rational spec must contain the key 'kind'.")
        return cls(spec["kind"], spec.get("num"), spec.get("den"), spec.get("value"))

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        return {"kind": self.kind, "num": self.num.tolist(), "den": self.den.tolist()}

    def evaluate(self, grid: FrequencyGrid) -> SpectralDensity:
        return eval_rational_spec(self, grid)

    def __repr__(self) -> str:
        return "RationalSpec(%r)" % self.to_dict()


def _laurent_values(coeffs: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    lags = np.arange(coeffs.size)
    weights = np.where(lags == 0, 1.0, 2.0) * coeffs
    return np.cos(np.outer(nodes, lags)) @ weights


def eval_rational_spec(spec: RationalSpec, grid: FrequencyGrid) -> SpectralDensity:
    """
    Sample a rational spectral description on the grid.

    Samples are computed on [0, pi] and mirrored, so the result is exactly even.

    Raises
    ------
    ValueError
        If a transfer-function denominator (nearly) vanishes on the unit circle, or if the
        resulting density is not strictly positive; the offending angle is reported
    """
    if spec.kind == "constant":
        return SpectralDensity(grid, np.full(grid.size, spec.value))

    if spec.kind == "transfer":
        z = grid.unit_circle()
        den = P.polyval(z, spec.den)
        small = np.abs(den) <= _DEN_FLOOR
        if np.any(small):
            k = int(np.argmax(small))
            raise ValueError("Denominator vanishes on the unit circle at theta = %.6g." % grid.nodes[k])
        values = np.abs(P.polyval(z, spec.num) / den) ** 2
    else:
        values = _laurent_values(spec.num, grid.nodes) / _laurent_values(spec.den, grid.nodes)

    values = grid.symmetrize(values)
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        k = int(np.argmax(~(values > 0) | ~np.isfinite(values)))
        raise ValueError("Rational spec is not positive on the unit circle at theta = %.6g."
            % grid.nodes[k])
    return SpectralDensity(grid, values)


def quadrature(values) -> float:
    """
    Integral over the unit circle w.r.t. d(theta)/2*pi of a grid-sampled function. On a
    uniform periodic grid the trapezoidal rule is the arithmetic mean, exact for trigonometric
    polynomials of degree < size/2.
    """
    if isinstance(values, SpectralDensity):
        values = values.values
    return float(np.mean(np.asarray(values, dtype=float)))


def trig_coefficients(values, max_lag: int) -> np.ndarray:
    """
    Cosine coefficients c_0..c_max_lag of an even grid-sampled function, with
    c_k = quadrature(value * cos(k theta)) * (2 if k > 0 else 1).

    Raises
    ------
    ValueError
        If `max_lag` is negative or not smaller than half the grid size
    """
    if isinstance(values, SpectralDensity):
        values = values.values
    values = np.asarray(values, dtype=float)
    size = values.size
    if max_lag < 0 or max_lag >= size / 2:
        raise ValueError("max_lag must lie in [0, %d), got %d." % (size // 2, max_lag))
    coeffs = fft.rfft(values).real[: max_lag + 1] / size
    coeffs[1:] *= 2
    return coeffs


class DivergenceSpec:
    """
    A member of the divergence families available to `divergence`.

    Attributes
    ----------
    family: str
        One of ``alpha``, ``kl``, ``kl0``, ``hellinger``, ``pearson``, ``beta``, ``itakura_saito``
    parameter: float or None
        alpha (family ``alpha``, any real) or beta (family ``beta``, not 0 or 1)
    """

    FAMILIES = ("alpha", "kl", "kl0", "hellinger", "pearson", "beta", "itakura_saito")
    _PARAMETRIC = ("alpha", "beta")

    def __init__(self, family: str, parameter: float = None) -> None:
        if family not in self.FAMILIES:
            raise ValueError("Divergence family must be one of %s, got %r." % (self.FAMILIES, family))
        if family in self._PARAMETRIC:
            if parameter is None:
                raise ValueError("Family %r needs a parameter." % family)
            parameter = float(parameter)
            if not math.isfinite(parameter):
                raise ValueError("Divergence parameter must be finite.")
            if family == "beta" and parameter in (0.0, 1.0):
                raise ValueError("Beta divergence parameter must differ from 0 and 1.")
        elif parameter is not None:
            raise ValueError("Family %r takes no parameter." % family)

        self.family = family
        self.parameter = parameter

    @classmethod
    def from_dict(cls, spec: dict) -> "DivergenceSpec":
        if "family" not in spec:
            raise KeyError("Divergence spec must contain the key 'family'.")
        return cls(spec["family"], spec.get("parameter"))

    def to_dict(self) -> dict:
        return {"family": self.family, "parameter": self.parameter}

    def __repr__(self) -> str:
        if self.parameter is None:
            return "DivergenceSpec(%r)" % self.family
        return "DivergenceSpec(%r, %r)" % (self.family, self.parameter)


def _check_same_grid(phi1: SpectralDensity, phi2: SpectralDensity) -> None:
    if not isinstance(phi1, SpectralDensity) or not isinstance(phi2, SpectralDensity):
        raise TypeError("Divergences are defined between SpectralDensity objects.")
    if phi1.grid != phi2.grid:
        raise ValueError("Spectral densities live on different grids (%r, %r)." % (phi1.grid, phi2.grid))


def _kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return p * np.log(p / q) - p + q


def _alpha(p: np.ndarray, q: np.ndarray, a: float) -> np.ndarray:
    # exact limits at 0 and 1
    if a == 0.0:
        return _kl(q, p)
    if a == 1.0:
        return _kl(p, q)
    return p ** a * q ** (1 - a) / (a * (a - 1)) - p / (a - 1) + q / a


def _beta(p: np.ndarray, q: np.ndarray, b: float) -> np.ndarray:
    return (p ** b - p * q ** (b - 1)) / (b - 1) - (p ** b - q ** b) / b


def _integrand(p: np.ndarray, q: np.ndarray, spec: DivergenceSpec) -> np.ndarray:
    if spec.family == "alpha":
        return _alpha(p, q, spec.parameter)
    if spec.family == "kl":
        return _kl(p, q)
    if spec.family == "kl0":
        return p * np.log(p / q)
    if spec.family == "hellinger":
        return (np.sqrt(p) - np.sqrt(q)) ** 2
    if spec.family == "pearson":
        return 0.5 * (p - q) ** 2 / q
    if spec.family == "beta":
        return _beta(p, q, spec.parameter)
    ratio = p / q
    return ratio - np.log(ratio) - 1


def divergence(phi1: SpectralDensity, phi2: SpectralDensity, spec: DivergenceSpec) -> float:
    """
    Divergence of `phi1` from `phi2` in the family described by `spec`, by quadrature.

    Pointwise integrands:

    * alpha: p^a q^(1-a) / (a(a-1)) - p/(a-1) + q/a, with KL(q||p) at a = 0 and KL(p||q) at a = 1
    * kl: p log(p/q) - p + q
    * kl0: p log(p/q), nonnegative only between densities with the same zeroth moment
    * hellinger: (sqrt(p) - sqrt(q))^2
    * pearson: (p - q)^2 / (2q)
    * beta: (p^b - p q^(b-1)) / (b-1) - (p^b - q^b) / b
    * itakura_saito: p/q - log(p/q) - 1

    Raises
    ------
    TypeError
        If an argument is not a SpectralDensity
    ValueError
        If the densities live on different grids
    """
    _check_same_grid(phi1, phi2)
    return quadrature(_integrand(phi1.values, phi2.values, spec))


def parse_nu(nu):
    """
    Normalize an Alpha-family order: a nonzero integer, or infinity given as ``math.inf``
    or the string ``"inf"``. Returns an int or ``math.inf``.
    """
    if isinstance(nu, str):
        if nu.strip().lower() in ("inf", "infinity", "+inf"):
            return math.inf
        try:
            nu = int(nu)
        except ValueError:
            raise ValueError("Cannot read nu from %r." % nu) from None
    if isinstance(nu, bool):
        raise TypeError("nu must be an integer or infinity.")
    if isinstance(nu, numbers.Real) and math.isinf(nu) and nu > 0:
        return math.inf
    if isinstance(nu, numbers.Integral) or (isinstance(nu, numbers.Real) and float(nu).is_integer()):
        nu = int(nu)
        if nu == 0:
            raise ValueError("nu = 0 does not index an Alpha divergence.")
        return nu
    raise ValueError("nu must be a nonzero integer or infinity, got %r." % (nu,))


def s_nu(phi: SpectralDensity, psi: SpectralDensity, nu) -> float:
    """
    Alpha divergence in the order parametrization alpha = 1 - 1/nu:

    * nu = 1: KL(psi || phi)
    * nu = inf: KL(phi || psi)
    * otherwise: integral of nu^2/(1-nu) phi^((nu-1)/nu) psi^(1/nu) + nu phi + nu/(nu-1) psi

    Raises
    ------
    ValueError
        If nu = 0 or the densities live on different grids
    """
    nu = parse_nu(nu)
    _check_same_grid(phi, psi)
    p, q = phi.values, psi.values
    if nu == 1:
        return quadrature(_kl(q, p))
    if math.isinf(nu):
        return quadrature(_kl(p, q))
    integrand = nu ** 2 / (1 - nu) * p ** ((nu - 1) / nu) * q ** (1 / nu) + nu * p + nu / (nu - 1) * q
    return quadrature(integrand)
