"""Legacy ASCII VTK output for meshes and nodal fields."""

import numpy as np

from .errors import InvalidArgumentError

_VTK_TRIANGLE = 5


def write_vtk(path, mesh, point_data=None, title="afc-ocp fields"):
    """Write the mesh and optional nodal scalar fields as an unstructured grid.

    ``point_data`` maps field names to arrays with one value per node.
    """
    point_data = point_data or {}
    for name, values in point_data.items():
        values = np.asarray(values)
        if values.shape != (mesh.n_nodes,):
            raise InvalidArgumentError(
                f"field {name!r} has shape {values.shape}, "
                f"expected ({mesh.n_nodes},)"
            )
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    for x, y in mesh.nodes:
        lines.append(f"{x:.10g} {y:.10g} 0")
    nt = mesh.n_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend([str(_VTK_TRIANGLE)] * nt)
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.10g}" for v in np.asarray(values, dtype=float))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
