"""Lighting control signal: propagate a direction along a camera path and
encode it with real spherical harmonics (bands 0..3, 16 coefficients)."""

import numpy as np

from tricraft import geometry as geo
from tricraft import lighting as lit

# a camera orbit around the origin; the light is given in frame 1's camera
rng = np.random.default_rng(0)
trajectory = geo.sample_vld_camera(rng, model_center=[0.0, 0.0, 0.0], n_frames=8)
l_ref = np.array([0.3, -0.2, -0.93])
l_ref /= np.linalg.norm(l_ref)

spec = lit.propagate_light(l_ref, trajectory[0], trajectory)
print("per-frame directions (camera coordinates):")
for f, d in enumerate(spec.directions):
    print(f"  frame {f}: ({d[0]:+.3f}, {d[1]:+.3f}, {d[2]:+.3f})")

sh = lit.encode_light_sequence(spec)
print(f"\nSH encoding shape: {sh.shape}  (l=0 coeff is constant {sh[0, 0]:.7f})")

# per-band energy is rotation invariant: every frame shows identical values
bands = [(0, 1), (1, 4), (4, 9), (9, 16)]
energies = np.stack([[float(np.sum(sh[f, a:b] ** 2)) for a, b in bands]
                     for f in range(len(spec.directions))])
print("band energies (constant across frames):", np.round(energies[0], 6))
print("max frame-to-frame deviation:", float(np.abs(energies - energies[0]).max()))

# the VLD-style hemisphere light set: 16 area-uniform directions facing the camera
dirs = lit.sample_hemisphere_lights([0.0, 0.0, -1.0], n=16)
print(f"\nhemisphere set: {len(dirs)} directions, "
      f"mean {np.round(dirs.mean(axis=0), 3)} (≈ half the base normal)")
