"""Numerical experiments on beta-numbers of intrinsic Lipschitz graphs.

Subpackages:

* :mod:`heisenbeta.core` -- Heisenberg group arithmetic and the Koranyi gauge
* :mod:`heisenbeta.graphs` -- intrinsic Lipschitz graphs and test families
* :mod:`heisenbeta.beta` -- beta-numbers and affine/slice-affine L2 fits
* :mod:`heisenbeta.wavelet` -- Haar tensor decompositions and slicing identities
* :mod:`heisenbeta.harness` -- Carleson-integral and theta-slice experiments
* :mod:`heisenbeta.cli` -- command line front end
"""

__version__ = "0.1.0"
