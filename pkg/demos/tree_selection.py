"""Greedy selection of trees by energy and density, and the multi-level decomposition.

Run: python3 demos/tree_selection.py
"""

from varcarleson.treeselect import (
    TopFrame,
    bmo_check,
    density,
    density_increment,
    energy,
    energy_increment,
    full_decomposition,
    random_instance,
)

inst = random_instance(3, n_tiles=50)
frame = TopFrame.of(inst.tiles)
e = energy(inst.tiles, inst.f, frame)
d = density(inst.tiles, inst.E, inst.lin, inst.r, inst.f, frame)
print(f"{len(inst.tiles)} multitiles: energy {e:.4f}, density {d:.4f}")

rep = energy_increment(inst.tiles, inst.f, e, frame)
print(f"energy selection: {len(rep.trees)} trees, residual energy {energy(rep.residual, inst.f, frame):.4f} <= {e / 2:.4f}")
print(f"  sum of top lengths times energy^2 / |F|: {rep.sum_top_lengths * e**2 / inst.F_measure:.3f}")
print(f"  BMO of the top counting function, scaled: {bmo_check(rep.trees, 0, e):.3f}")

rep = density_increment(inst.tiles, inst.E, inst.lin, inst.r, d, inst.f, frame)
left = density(rep.residual, inst.E, inst.lin, inst.r, inst.f, frame)
print(f"density selection: {len(rep.trees)} trees, residual density {left:.4f} <= {d / 2:.4f}")

dec = full_decomposition(inst.tiles, inst.f, inst.E, inst.lin, inst.r, refine=True)
print("\nlevel  trees  sum |I_T|")
for j, trees in sorted(dec.levels.items()):
    print(f"{j:5d}  {len(trees):5d}  {dec.interval_sums()[j]:.3f}")
