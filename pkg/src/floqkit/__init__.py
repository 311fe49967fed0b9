"""Multi-engine simulator and analysis toolkit for the driven Kitaev honeycomb.

Subpackages/modules:

* :mod:`floqkit.lattice`      -- honeycomb patches, Pauli-string algebra, observables
* :mod:`floqkit.circuits`     -- circuit IR and protocol builders
* :mod:`floqkit.stabilizer`   -- exact Clifford tableau engine
* :mod:`floqkit.gaussian`     -- free-fermion (Majorana covariance) engine
* :mod:`floqkit.dense`        -- statevector engine with trajectory noise
* :mod:`floqkit.experiments`  -- protocol drivers producing result tables
* :mod:`floqkit.analysis`     -- post-selection, jackknife, spectra, order parameter
* :mod:`floqkit.cli`          -- command line front end
"""

from .lattice import PauliString, Lattice, build_patch

__all__ = ["PauliString", "Lattice", "build_patch"]
__version__ = "0.1.0"
