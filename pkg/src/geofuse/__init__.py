"""Geometry-based channel modelling, particle-filter tracking and CSI fusion for coherent joint transmission."""
