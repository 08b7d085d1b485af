"""Probabilistic transient-stability risk assessment for power systems.

Case model and admittance algebra live in :mod:`gridrisk.netmodel`, the
Newton power flow in :mod:`gridrisk.powerflow`, time-domain simulation in
:mod:`gridrisk.dynsim`, stability indices in :mod:`gridrisk.metrics`, the
Monte Carlo engine in :mod:`gridrisk.riskmc` and case transforms in
:mod:`gridrisk.scenario`.
"""

__version__ = "0.1.0"
