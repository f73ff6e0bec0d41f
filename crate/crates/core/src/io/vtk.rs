//! Legacy-format VTK unstructured grids.

use std::fmt::Write as _;

use crate::fem::{ElementFields, FeModel};

const VTK_HEXAHEDRON: u8 = 12;

fn vectors(out: &mut String, name: &str, values: impl Iterator<Item = [f64; 3]>) {
    let _ = writeln!(out, "VECTORS {name} double");
    for v in values {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
    }
}

fn scalars(out: &mut String, name: &str, values: impl Iterator<Item = f64>) {
    let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(out, "{v}");
    }
}

/// Mesh with nodal displacement and potential and per-element polarization,
/// stress, field and dielectric displacement.
pub fn model_to_vtk(model: &FeModel, title: &str) -> String {
    let mesh = &model.mesh;
    let fields: Vec<ElementFields> = model.recover_fields();
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0\n{}\nASCII\nDATASET UNSTRUCTURED_GRID", title.replace('\n', " "));
    let _ = writeln!(out, "POINTS {} double", mesh.n_nodes());
    for n in 0..mesh.n_nodes() {
        let x = mesh.node_coords(n);
        let _ = writeln!(out, "{} {} {}", x[0], x[1], x[2]);
    }
    let ne = mesh.n_elements();
    let _ = writeln!(out, "CELLS {ne} {}", ne * 9);
    for e in 0..ne {
        let nodes = mesh.element_nodes(e);
        let _ = writeln!(out, "8 {}", nodes.map(|n| n.to_string()).join(" "));
    }
    let _ = writeln!(out, "CELL_TYPES {ne}");
    for _ in 0..ne {
        let _ = writeln!(out, "{VTK_HEXAHEDRON}");
    }
    let _ = writeln!(out, "CELL_DATA {ne}");
    vectors(&mut out, "P_I", fields.iter().map(|f| f.pol.into()));
    scalars(&mut out, "abs_P_I_over_Psat", fields.iter().map(|f| f.pol.norm() / model.material.saturation_polarization));
    vectors(&mut out, "E", fields.iter().map(|f| f.field.into()));
    vectors(&mut out, "D", fields.iter().map(|f| f.displacement.into()));
    let _ = writeln!(out, "TENSORS stress double");
    for f in &fields {
        let m = f.stress.to_stress_matrix();
        for r in 0..3 {
            let _ = writeln!(out, "{} {} {}", m[(r, 0)], m[(r, 1)], m[(r, 2)]);
        }
    }
    scalars(&mut out, "sigma_xx", fields.iter().map(|f| f.stress.0[0]));
    scalars(&mut out, "switching", model.states.iter().map(|s| s.active.switching as u8 as f64));
    let _ = writeln!(out, "POINT_DATA {}", mesh.n_nodes());
    vectors(&mut out, "u", (0..mesh.n_nodes()).map(|n| model.displacement(n).into()));
    scalars(&mut out, "phi", (0..mesh.n_nodes()).map(|n| model.potential(n)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{FeSettings, Mesh};
    use crate::material::MaterialParams;

    #[test]
    fn counts_match_mesh() {
        let p = MaterialParams::table1();
        let mesh = Mesh::uniform([0.0; 3], [1.0, 1.0, 1.0], [2, 1, 1]).unwrap();
        let model = FeModel::new(mesh, p.clone(), FeSettings::for_material(&p));
        let vtk = model_to_vtk(&model, "test\ngrid");
        let lines: Vec<&str> = vtk.lines().collect();
        assert_eq!(lines[1], "test grid");
        assert!(vtk.contains("POINTS 12 double"));
        assert!(vtk.contains("CELLS 2 18"));
        assert!(vtk.contains("CELL_DATA 2"));
        assert!(vtk.contains("POINT_DATA 12"));
        let cells = lines.iter().position(|l| l.starts_with("CELLS")).unwrap();
        assert_eq!(lines[cells + 1], "8 0 4 6 2 1 5 7 3");
    }
}
