"""Open quantum dynamics of identical M-level emitters in a bosonized
occupation-number Liouville space.

Subpackage map: :mod:`.basis` enumerates the occupation superbasis and its
conserved-quantity sectors, :mod:`.superops` bosonizes master-equation terms
and assembles sparse generators, :mod:`.states` and :mod:`.observables`
construct coefficient vectors for density matrices and permutation-invariant
operators, :mod:`.dynamics` integrates and computes two-time correlations and
spectra, :mod:`.scenarios` pre-wires the cooperative-emission, pumped-cascade
and Tavis-Cummings models, :mod:`.oracle` is the brute-force full-Liouville
cross-check, and :mod:`.cli` the batch front end.
"""

from . import (basis, cli, dynamics, observables, oracle, scenarios, states,
               superops)

__all__ = ["basis", "superops", "states", "observables", "dynamics",
           "scenarios", "oracle", "cli"]
__version__ = "0.1.0"
