"""Quasi-random sampling for multivariate dependence models.

Modules:
  dist      seed-addressable random streams and univariate distributions
  qmc       Sobol' digital nets, randomizations, discrepancy diagnostics
  copula    dependence-model samplers, CDFs, (inverse) Rosenblatt transforms
  gmmn      moment-matched generator network: training and sampling
  estimate  functionals, MC/RQMC estimators, convergence and VRF studies
  gof       Cramer-von Mises one- and two-sample statistics
  cli       command-line reproduction harness
"""

from qrnet.dist import RngStream
from qrnet.qmc import DigitalNet, PointSet, digital_shift, owen_scramble, sobol_raw
from qrnet.gmmn import TrainConfig, TrainedModel, train

__version__ = "0.1.0"

__all__ = [
    "RngStream",
    "DigitalNet",
    "PointSet",
    "sobol_raw",
    "owen_scramble",
    "digital_shift",
    "TrainConfig",
    "TrainedModel",
    "train",
    "__version__",
]
