"""
IRS-assisted integrated sensing and communication over OTFS.

Modules: frame (delay-Doppler grid and transforms), channel (cascaded paths and
the effective channel), sensing (ratio-based Doppler estimator), analysis
(closed-form sensing probability and MSE), beamform (joint combiner / IRS design),
experiments and cli (Monte Carlo harness).
"""

__version__ = "0.1.0"
