import io
import json
import os

import numpy as np
from scipy.linalg import toeplitz

from .estimation import ArmaModel
from .filterBank import FilterBank, GammaOperator
from .spectra import FrequencyGrid, RationalSpec, SpectralDensity

# Load benchmark instances from json database and store in dict
_benchmarks_database_fn = os.path.join(os.path.dirname(__file__), "benchmarks.json")

with io.open(_benchmarks_database_fn) as database_benchmarks:
    benchmarks_dict = json.load(database_benchmarks)


class Benchmark:
    """
    A spectrum approximation instance: filter bank, prior and covariance source.

    Attributes
    ----------
    name: str
        Database key, or ``custom`` for instances given as a dictionary
    description: str
    bank: FilterBank
    prior: RationalSpec
    process: ArmaModel or None
        Process whose output covariance defines Sigma, when ``sigma`` is ``"process"``
    nus: list
        Orders of the reference sweep
    data: dict
        The raw database entry

    Methods
    -------
    prior_density(grid):
        Prior sampled on a grid
    sigma(grid):
        Covariance matrix of the instance
    reference_sigma():
        Toeplitz matrix built from the stored 3-digit covariance row, when present
    numerator_reading_deviations(grid):
        Max deviation from the reference row for the chosen and alternative numerator readings
    """

    def __init__(self, instance) -> None:
        """
        Parameters
        ----------
        instance: str or dict
        * str: name of an instance of the database
        * dict: a dictionary with keys ``filterbank``, ``prior`` and ``sigma``

        Raises
        ------
        KeyError
            If the name is not in the database or a required key is missing
        TypeError
            If instance is neither `dict` nor `str`
        """
        if isinstance(instance, str):
            name = instance
            instance = dict(benchmarks_dict[instance])
        elif isinstance(instance, dict):
            name = "custom"
        else:
            raise TypeError("Benchmark must be given by name or as a dictionary.")

        for key in ("filterbank", "prior", "sigma"):
            if key not in instance:
                raise KeyError("Benchmark definition must contain the key %r." % key)

        self.name = name
        self.data = instance
        self.description = instance.get("description", "")
        self.bank = FilterBank.from_dict(instance["filterbank"])
        self.prior = RationalSpec.from_dict(instance["prior"])
        self.process = ArmaModel.from_dict(instance["process"]) if "process" in instance else None
        self.nus = list(instance.get("nus", [1, "inf"]))
        if instance["sigma"] == "process" and self.process is None:
            raise KeyError("Benchmark with sigma = 'process' must define 'process'.")

    def prior_density(self, grid: FrequencyGrid) -> SpectralDensity:
        return self.prior.evaluate(grid)

    def sigma(self, grid: FrequencyGrid, op: GammaOperator = None) -> np.ndarray:
        source = self.data["sigma"]
        if isinstance(source, str):
            if source == "identity":
                return np.eye(self.bank.n)
            if source == "process":
                op = op or GammaOperator(self.bank, grid)
                return op.gamma_apply(self.process.spectrum(grid))
            raise ValueError("Unknown sigma source %r." % source)
        return np.array(source, dtype=float)

    def reference_sigma(self):
        row = self.data.get("reference_sigma_row")
        return None if row is None else toeplitz(np.array(row, dtype=float))

    def numerator_reading_deviations(self, grid: FrequencyGrid) -> dict:
        reference = self.reference_sigma()
        if reference is None or "process_num_alternative" not in self.data:
            raise KeyError("Benchmark %r has no alternative numerator reading." % self.name)
        op = GammaOperator(self.bank, grid)
        readings = {
            "chosen": self.process,
            "alternative": ArmaModel(self.data["process_num_alternative"], self.process.den,
                self.process.variance),
        }
        return {
            label: float(np.max(np.abs(op.gamma_apply(model.spectrum(grid)) - reference)))
            for label, model in readings.items()
        }

    def __repr__(self) -> str:
        return "Benchmark(%r)" % self.name
