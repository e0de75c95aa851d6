"""
Iterative direct sampling for elliptic coefficient inverse problems.

Submodules: ``mesh`` and ``fem`` (P1 discretization), ``models`` (forward
problems), ``dtn`` (regularized Dirichlet-to-Neumann map), ``sampling``
(indicators and the IDSM loop), ``synthdata`` (synthetic data), ``metrics``,
``io``, ``config``, ``plotting`` and ``cli``.
"""

__version__ = "0.1.0"
