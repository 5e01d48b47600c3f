"""Tour of the finite groups: elements, composition, and grid actions.

Run from the repository root after installing the package:

    python3 demos/01_groups_tour.py
"""

import numpy as np

from rgconv import (
    act_on_offset,
    build_group,
    compose,
    inverse,
    stabilizer_of_grid,
    transform_grid,
)


def main():
    for kind in ("cyclic_2d(2)", "cyclic_2d(4)", "octahedral_24", "octahedral_48"):
        g = build_group(kind)
        print(f"{kind}: order {g.order}, dim {g.dim}, names {list(g.names)[:6]}...")

    c4 = build_group("cyclic_2d(4)")
    g_id = c4.element_id("g")
    print("\nC4 composition: g * g =", c4.names[compose(c4, g_id, g_id)])
    print("C4 inverse: g^-1 =", c4.names[inverse(c4, g_id)])

    # the quarter turn permutes the two axes and flips a sign
    for off in ((1, 0), (0, 1)):
        print(f"g applied to offset {off}:", act_on_offset(c4, g_id, off))

    o24 = build_group("octahedral_24")
    rz = o24.element_id("Rz90")
    print("\nO24 Rz90 fixes its own axis:", act_on_offset(o24, rz, (0, 0, 1)))
    print("O24 Rz90 matrix:\n", o24.matrices[rz])

    # stabilizers: which elements leave a voxel grid unchanged
    rng = np.random.default_rng(0)
    blob = rng.normal(size=(5, 5, 5))
    symmetric = blob + sum(
        transform_grid(o24, h, blob) for h in range(1, o24.order)
    )
    ids, _ = stabilizer_of_grid(o24, symmetric)
    print(f"\nfully symmetrized grid is fixed by {len(ids)} elements")
    ids, _ = stabilizer_of_grid(o24, blob)
    names = [o24.names[i] for i in sorted(ids)]
    print(f"a random grid is fixed by {len(ids)} element(s): {names}")


if __name__ == "__main__":
    main()
