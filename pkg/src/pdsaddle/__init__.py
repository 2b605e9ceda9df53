"""Inexact primal-dual methods with correction step for saddle-point
problems, with a TV-L1 image-deblurring application.

Modules:

* ``operators`` — matrix-free linear maps, SPD metrics, spectral tools.
* ``proxlib`` — extended proximal operators and inexactness certificates.
* ``pdcore`` — the outer prediction-correction solvers and rate ledgers.
* ``innersolve`` — duality-gap-certified FISTA for the weighted TV prox.
* ``tvl1`` — the TV-L1 deblurring model and its saddle form.
* ``imgio`` — image I/O, degradation synthesis, quality metrics.
* ``toy`` — scalar instances with closed-form saddle points.
* ``bench`` — experiment CLI (solve / sweep / rates).
"""

__version__ = "0.1.0"

from . import (bench, errors, imgio, innersolve, operators, pdcore, proxlib,
               toy, tvl1)

__all__ = ["bench", "errors", "imgio", "innersolve", "operators", "pdcore",
           "proxlib", "toy", "tvl1", "__version__"]
