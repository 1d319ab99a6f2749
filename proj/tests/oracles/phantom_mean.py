#!/usr/bin/env python3
"""Mean intensity of a severity-2, gain-1, texture-free, bias-free 32^3
phantom: once by sampling the shape on the voxel grid (what the generator
must reproduce exactly) and once from the closed-form solid volumes (which
the sampled value must approach)."""
import math

import numpy as np

n = 32
brain, ventricle = 140.0, 40.0
semi = 0.42 * n
rv = 0.12 * n * (1 + 0.15 * 2)

c = (n - 1) / 2
z, y, x = np.meshgrid(np.arange(n) - c, np.arange(n) - c, np.arange(n) - c, indexing="ij")
inside = (x / semi) ** 2 + (y / semi) ** 2 + (z / semi) ** 2 <= 1
vent = x**2 + y**2 + z**2 <= rv**2
grid = np.where(inside, np.where(vent, ventricle, brain), 0.0)
print(f"grid mean        {grid.mean():.17g}")
print(f"brain voxels     {int(inside.sum())}")
print(f"ventricle voxels {int((inside & vent).sum())}")

v_brain = 4 / 3 * math.pi * semi**3
v_vent = 4 / 3 * math.pi * rv**3
analytic = (brain * (v_brain - v_vent) + ventricle * v_vent) / n**3
print(f"analytic mean    {analytic:.17g}")
