"""Koopman semigroups of continuous semiflows, checked numerically.

Submodules: :mod:`~koopmanlab.semiflow` (flows), :mod:`~koopmanlab.observables`
(observables, samples, seminorms, measures), :mod:`~koopmanlab.koopman`
(operators, generator, resolvent, adjoint), :mod:`~koopmanlab.characterize`
(homomorphism and derivation suites), :mod:`~koopmanlab.attractor` (ideals
and attractors) and :mod:`~koopmanlab.cli`.
"""

from .attractor import *  # noqa: F401,F403
from .characterize import *  # noqa: F401,F403
from .koopman import *  # noqa: F401,F403
from .observables import *  # noqa: F401,F403
from .report import *  # noqa: F401,F403
from .semiflow import *  # noqa: F401,F403
from . import attractor, characterize, koopman, observables, report, semiflow

__version__ = "0.1.0"
