"""Chemo-mechanical simulation of chloride-driven rebar corrosion cracking.

The package couples chloride ingress with binding, gradual anodic activation
of the steel surface, reactive transport and precipitation of iron species,
precipitation eigenstrain mechanics and cohesive-zone phase-field fracture
on 2D plane-strain cross-sections discretised with linear triangles.
"""

__version__ = "0.1.0"
