"""Result files: CSV with a configuration header, JSON summaries and legacy VTK."""

import json

import numpy as np

from nived import __version__


def header_lines(config, prefix="# "):
    """Comment lines echoing the resolved configuration and package version."""
    text = json.dumps({"version": __version__, "config": config}, sort_keys=True, default=str)
    return [f"{prefix}nived {__version__}", f"{prefix}config {text}"]


def format_value(v):
    """17 significant digits for floats so doubles round-trip exactly."""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (tuple, list)):
        return "x".join(str(x) for x in v)
    return str(v)


def write_csv(path, columns, rows, config):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines(config):
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")


def read_csv(path):
    """Column names and rows (as strings) of a file written by :func:`write_csv`."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def write_json(path, payload, config):
    data = {"nived_version": __version__, "config": config, **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


def write_vtk(path, mesh, point_data=None, config=None, title="nived"):
    """Legacy ASCII UNSTRUCTURED_GRID of the background triangles.

    ``point_data`` maps names to arrays of shape (N,), (N, 2) or (N, 3).
    Two-component arrays are written as 3D vectors with zero z; three
    component arrays (Voigt strains or stresses) as scalars per component.
    """
    nodes, tris = mesh.nodes, mesh.triangles
    lines = ["# vtk DataFile Version 3.0"]
    head = title
    if config is not None:
        head += " " + json.dumps({"version": __version__, "config": config}, sort_keys=True,
                                 default=str)
    lines.append(head.replace("\n", " ")[:255])
    lines += ["ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {len(nodes)} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in nodes]
    lines.append(f"CELLS {len(tris)} {4 * len(tris)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tris]
    lines.append(f"CELL_TYPES {len(tris)}")
    lines += ["5"] * len(tris)
    if point_data:
        lines.append(f"POINT_DATA {len(nodes)}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, float)
            if arr.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.17g}" for v in arr]
            elif arr.shape[1] == 2:
                lines.append(f"VECTORS {name} double")
                lines += [f"{u:.17g} {v:.17g} 0" for u, v in arr]
            else:
                for k, comp in enumerate(("11", "22", "12")[: arr.shape[1]]):
                    lines += [f"SCALARS {name}_{comp} double 1", "LOOKUP_TABLE default"]
                    lines += [f"{v:.17g}" for v in arr[:, k]]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
