"""Cykas: sender-side causal message delivery with eager sends.

Submodules:

* ``protocol``   the Cykas state machine
* ``baselines``  MFSS, matrix clocks and the unsafe secret-mode variant
* ``checkers``   vector-clock causality and liveness checks
* ``modelcheck`` bounded exhaustive exploration
* ``netsim``     discrete-event network simulation and sweeps
* ``cli``        the ``cykas`` command
"""

__version__ = "0.1.0"
