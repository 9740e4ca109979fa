"""Branch points of surfaces: jets, grids, invariants, normalization and curvature."""
