"""E-network surrogate modelling of RF circuits.

Netlists are partitioned into two-port E-networks; small sub-models map
each E-network's design parameters to S-parameters and one main model maps
[S-parameters, residual parameters] to performances.  The pieces compose
into a surrogate that drives NSGA-II sizing.
"""

__version__ = "0.1.0"
