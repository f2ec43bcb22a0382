"""Simulator and certification suite for the 1D screened Vlasov-Poisson system.

The package builds the near-vacuum solution of

    f_t + v f_x - q phi_x f_v = 0,      (1 - d^2/dx^2) phi = rho = int f dv

by iterating characteristic boundary-value problems against frozen fields,
reconstructing the density through the flow Jacobian, and certifying at
every stage the weighted inequalities (partition bounds, comparison-ODE
bounds, derivative-ladder bounds) that make the construction close, together
with the resulting ``(t+1)^{-n-1}`` decay of density derivatives.
"""

from __future__ import annotations

__version__ = "0.1.0"
