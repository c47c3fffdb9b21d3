"""Scrambling dynamics in imperfect Loschmidt-echo / MQC experiments.

Submodules: ``product_basis`` (pair-function combinatorics), ``exact``
(dense small-system dynamics), ``metrics`` (spectra, echoes, cluster sizes),
``lg_model`` (tridiagonal rate model), ``scaling`` (rate extraction and
power-law fits) and ``cli``.
"""

__version__ = "0.1.0"
