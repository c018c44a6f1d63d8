//! Legacy ASCII VTK export of P1 fields.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::assembly::P1Function;
use crate::error::{invalid, Result};
use crate::mesh::Mesh;

fn num(x: f64) -> String {
    format!("{x:.8e}")
}

/// Renders an unstructured grid with one scalar block per field. With
/// `surface = Some(name)` the named field becomes the `z` coordinate.
pub fn vtk_string(
    mesh: &Mesh,
    fields: &[(&str, &P1Function)],
    surface: Option<&str>,
) -> Result<String> {
    for (name, f) in fields {
        if f.len() != mesh.num_vertices() {
            return Err(invalid(format!("field '{name}' does not match the mesh")));
        }
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(invalid(format!("invalid field name '{name}'")));
        }
    }
    let height = match surface {
        None => None,
        Some(s) => Some(
            fields
                .iter()
                .find(|(name, _)| *name == s)
                .map(|(_, f)| f.values())
                .ok_or_else(|| invalid(format!("surface field '{s}' is not exported")))?,
        ),
    };
    let mut out =
        String::from("# vtk DataFile Version 3.0\ncurvopt\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(out, "POINTS {} double", mesh.num_vertices()).unwrap();
    for (i, [x, y]) in mesh.vertices().iter().enumerate() {
        let z = height.map_or(0.0, |h| h[i]);
        writeln!(out, "{} {} {}", num(*x), num(*y), num(z)).unwrap();
    }
    let nt = mesh.num_triangles();
    writeln!(out, "CELLS {nt} {}", 4 * nt).unwrap();
    for [a, b, c] in mesh.triangles() {
        writeln!(out, "3 {a} {b} {c}").unwrap();
    }
    writeln!(out, "CELL_TYPES {nt}").unwrap();
    for _ in 0..nt {
        out.push_str("5\n");
    }
    if !fields.is_empty() {
        writeln!(out, "POINT_DATA {}", mesh.num_vertices()).unwrap();
        for (name, f) in fields {
            writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
            for v in f.values() {
                writeln!(out, "{}", num(*v)).unwrap();
            }
        }
    }
    Ok(out)
}

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| invalid(format!("'{}' is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut file = fs::File::create(&tmp)?;
    file.write_all(contents)?;
    file.sync_all()?;
    drop(file);
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_vtk(
    path: &Path,
    mesh: &Mesh,
    fields: &[(&str, &P1Function)],
    surface: Option<&str>,
) -> Result<()> {
    let text = vtk_string(mesh, fields, surface)?;
    write_atomic(path, text.as_bytes())
}
