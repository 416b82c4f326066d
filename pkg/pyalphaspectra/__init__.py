from .spectra import *
from .filterBank import *
from .dualSolver import *
from .estimation import *
from .benchmark import *
