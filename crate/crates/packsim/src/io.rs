//! Artifact input and output.
//!
//! Every number the toolkit emits must survive a round trip through its own
//! readers. Floats are printed with Rust's shortest-round-trip formatting
//! (the `Display` impl of `f64`), so parsing a written cell recovers the
//! original bit pattern exactly; JSON artifacts go through `serde_json`,
//! which preserves `f64` the same way.
//!
//! CSV formats (one header row, then data rows):
//!
//! * **Field** — one row per grid node, columns `x[,y],value`.
//! * **State** — one row per grid node, columns `x[,y],w_1,…,w_N,u`.
//! * **Trajectory** — one row per sample: `t`, per-component means, sups,
//!   and gradient L² norms.
//! * **Branch** — one row per accepted continuation point, columns
//!   `beta,amplitude,zero_count,residual`; the per-point state snapshots
//!   are separate state CSVs referenced by file name in the branch manifest.
//! * **Interfaces** — one row per β with the interpolated interface
//!   abscissae; short rows are padded with `NaN` so every row has the same
//!   width (plot-ready).
//! * **Population curves** — one row per β with the best population per
//!   pack count, `NaN` where a sweep cell produced no physical steady state.
//!
//! JSON artifacts are written by [`write_json`] from any [`serde::Serialize`]
//! report (spectra via [`write_spectrum_json`], catalogs, segregation
//! reports, pack bounds, optimizer sweeps, branch manifests).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::continuation::Branch;
use crate::error::{Error, Result};
use crate::evolve::{SystemState, TrajectorySample};
use crate::grid::{Field, Grid, Spectrum};
use crate::packs::OptimReport;

/// Relative tolerance for matching stored node coordinates against a grid
/// when reading a field or state CSV back in.
pub const COORD_MATCH_TOL: f64 = 1e-9;

/// A parsed numeric CSV artifact: header names plus all-numeric rows.
///
/// Rows keep the width they had on disk, so flexible artifacts (interface
/// tables) parse without padding surprises.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    /// Column names from the header row.
    pub headers: Vec<String>,
    /// Data rows; every cell parsed as `f64` (`NaN` cells round-trip).
    pub rows: Vec<Vec<f64>>,
}

/// Writes any serializable report as pretty-printed JSON with a trailing
/// newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Reads a JSON artifact back as an untyped document.
pub fn read_json(path: &Path) -> Result<serde_json::Value> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Reads a numeric CSV artifact (any of the formats this module writes).
///
/// Rows may vary in width (interface tables are ragged before padding);
/// every cell must parse as `f64`.
pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = reader.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(record.len());
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::artifact(format!(
                    "non-numeric cell {cell:?} at data row {r}, column {c} of {}",
                    path.display()
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(CsvTable { headers, rows })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new().flexible(true).from_path(path)?)
}

fn coordinate_headers(grid: &Grid) -> Vec<String> {
    match grid.dim() {
        1 => vec!["x".to_owned()],
        _ => vec!["x".to_owned(), "y".to_owned()],
    }
}

/// Per-component column labels `w_1, …, w_N, u`.
fn component_headers(n_components: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..n_components).map(|i| format!("w_{i}")).collect();
    names.push("u".to_owned());
    names
}

/// Writes a single field: one row per node, columns `x[,y],value`.
pub fn write_field_csv(path: &Path, grid: &Grid, field: &Field) -> Result<()> {
    if field.len() != grid.node_count() {
        return Err(Error::ShapeMismatch { expected: grid.node_count(), got: field.len() });
    }
    let mut w = csv_writer(path)?;
    let mut header = coordinate_headers(grid);
    header.push("value".to_owned());
    w.write_record(&header)?;
    for (idx, v) in field.as_slice().iter().enumerate() {
        let mut row: Vec<String> = grid.node_coord(idx).iter().map(f64::to_string).collect();
        row.push(v.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Checks that a parsed table's leading columns equal the grid's node
/// coordinates (row per node, same ordering).
fn check_coordinates(table: &CsvTable, grid: &Grid, path: &Path) -> Result<()> {
    if table.rows.len() != grid.node_count() {
        return Err(Error::artifact(format!(
            "{} has {} data rows but the grid has {} nodes",
            path.display(),
            table.rows.len(),
            grid.node_count()
        )));
    }
    let dim = grid.dim();
    for (idx, row) in table.rows.iter().enumerate() {
        if row.len() < dim + 1 {
            return Err(Error::artifact(format!(
                "{} row {idx} has {} columns; need at least {}",
                path.display(),
                row.len(),
                dim + 1
            )));
        }
        let coord = grid.node_coord(idx);
        for (axis, (&stored, expected)) in row[..dim].iter().zip(coord).enumerate() {
            if (stored - expected).abs() > COORD_MATCH_TOL * (1.0 + expected.abs()) {
                return Err(Error::artifact(format!(
                    "{} row {idx}: axis-{axis} coordinate {stored} does not match \
                     the grid node at {expected}",
                    path.display()
                )));
            }
        }
    }
    Ok(())
}

/// Reads a field CSV back onto its grid, validating the node coordinates.
pub fn read_field_csv(path: &Path, grid: &Grid) -> Result<Field> {
    let table = read_csv(path)?;
    check_coordinates(&table, grid, path)?;
    let dim = grid.dim();
    let values = table.rows.iter().map(|row| row[dim]).collect();
    Field::from_values(grid, values)
}

/// Writes a full state: one row per node, columns `x[,y],w_1,…,w_N,u`.
pub fn write_state_csv(path: &Path, state: &SystemState) -> Result<()> {
    let grid = &state.grid;
    let mut w = csv_writer(path)?;
    let mut header = coordinate_headers(grid);
    header.extend(component_headers(state.fields.len()));
    w.write_record(&header)?;
    for idx in 0..grid.node_count() {
        let mut row: Vec<String> = grid.node_coord(idx).iter().map(f64::to_string).collect();
        for f in &state.fields {
            row.push(f.as_slice()[idx].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a state CSV back onto a grid: returns the component fields in
/// column order `(w_1, …, w_N, u)`.
pub fn read_state_csv(path: &Path, grid: &Grid) -> Result<Vec<Field>> {
    let table = read_csv(path)?;
    check_coordinates(&table, grid, path)?;
    let dim = grid.dim();
    let width = table.rows[0].len();
    if table.rows.iter().any(|r| r.len() != width) {
        return Err(Error::artifact(format!("{} has ragged rows", path.display())));
    }
    let n_components = width - dim;
    let mut fields = Vec::with_capacity(n_components);
    for c in 0..n_components {
        let values = table.rows.iter().map(|row| row[dim + c]).collect();
        fields.push(Field::from_values(grid, values)?);
    }
    Ok(fields)
}

/// Writes trajectory samples: `t`, then per-component `mean_*`, `sup_*`,
/// `grad_*` columns.
pub fn write_trajectory_csv(path: &Path, samples: &[TrajectorySample]) -> Result<()> {
    let Some(first) = samples.first() else {
        return Err(Error::artifact("cannot write an empty trajectory".to_owned()));
    };
    let ncomp = first.means.len();
    let mut w = csv_writer(path)?;
    let mut header = vec!["t".to_owned()];
    for prefix in ["mean", "sup", "grad"] {
        header.extend(component_headers(ncomp).iter().map(|c| format!("{prefix}_{c}")));
    }
    w.write_record(&header)?;
    for s in samples {
        if s.means.len() != ncomp || s.sups.len() != ncomp || s.grad_norms.len() != ncomp {
            return Err(Error::artifact(format!(
                "trajectory sample at t = {} has inconsistent component counts",
                s.t
            )));
        }
        let mut row = vec![s.t.to_string()];
        for block in [&s.means, &s.sups, &s.grad_norms] {
            row.extend(block.iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a spectrum as a JSON list of `{index, eigenvalue, multiplicity}`
/// groups (equal eigenvalues merged, `index` = position of the first member
/// in the ascending list).
pub fn write_spectrum_json(path: &Path, spectrum: &Spectrum) -> Result<()> {
    write_json(path, &spectrum.grouped())
}

/// Manifest accompanying a branch export: provenance plus the file names of
/// the CSV table and the state snapshots.
#[derive(Debug, Clone, Serialize)]
pub struct BranchManifest {
    /// The bifurcation point the branch emanates from.
    pub origin: crate::continuation::BifurcationPoint,
    /// Why the continuation stopped.
    pub termination: crate::continuation::Termination,
    /// Number of accepted points.
    pub n_points: usize,
    /// Smallest and largest β on the branch.
    pub beta_range: (f64, f64),
    /// File name of the per-point CSV table.
    pub table: String,
    /// Snapshot file names as `(point_index, file)`, sparse.
    pub snapshots: Vec<(usize, String)>,
}

/// Exports a continued branch into `dir`:
///
/// * `<name>.csv` — per-point rows `beta,amplitude,zero_count,residual`;
/// * `<name>_point_<idx>.csv` — state snapshots every `snapshot_every`
///   points (and always the final point), omitted when `snapshot_every` is
///   `None`;
/// * `<name>.json` — the [`BranchManifest`] with origin, termination, and
///   the snapshot file names.
///
/// Returns the manifest together with the paths of all files written.
pub fn write_branch_artifacts(
    dir: &Path,
    name: &str,
    branch: &Branch,
    snapshot_every: Option<usize>,
) -> Result<(BranchManifest, Vec<PathBuf>)> {
    if branch.points.is_empty() {
        return Err(Error::artifact("cannot export an empty branch".to_owned()));
    }
    let mut written = Vec::new();

    let table_name = format!("{name}.csv");
    let table_path = dir.join(&table_name);
    let mut w = csv_writer(&table_path)?;
    w.write_record(["beta", "amplitude", "zero_count", "residual"])?;
    for p in &branch.points {
        w.write_record([
            p.beta.to_string(),
            p.amplitude.to_string(),
            p.zero_count.to_string(),
            p.residual.to_string(),
        ])?;
    }
    w.flush()?;
    written.push(table_path);

    let mut snapshots = Vec::new();
    if let Some(k) = snapshot_every {
        if k == 0 {
            return Err(Error::param("snapshot_every must be positive when given"));
        }
        let last = branch.points.len() - 1;
        for (idx, p) in branch.points.iter().enumerate() {
            if idx % k == 0 || idx == last {
                let file = format!("{name}_point_{idx:04}.csv");
                let path = dir.join(&file);
                write_state_csv(&path, &p.state)?;
                written.push(path);
                snapshots.push((idx, file));
            }
        }
    }

    let betas: Vec<f64> = branch.points.iter().map(|p| p.beta).collect();
    let beta_min = betas.iter().copied().fold(f64::INFINITY, f64::min);
    let beta_max = betas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let manifest = BranchManifest {
        origin: branch.origin.clone(),
        termination: branch.termination,
        n_points: branch.points.len(),
        beta_range: (beta_min, beta_max),
        table: table_name,
        snapshots,
    };
    let manifest_path = dir.join(format!("{name}.json"));
    write_json(&manifest_path, &manifest)?;
    written.push(manifest_path);
    Ok((manifest, written))
}

/// Writes interface abscissae per β: columns `beta,interface_1,…`; rows with
/// fewer crossings than the widest row are padded with `NaN`.
pub fn write_interfaces_csv(path: &Path, rows: &[(f64, Vec<f64>)]) -> Result<()> {
    let width = rows.iter().map(|(_, xs)| xs.len()).max().unwrap_or(0);
    let mut w = csv_writer(path)?;
    let mut header = vec!["beta".to_owned()];
    header.extend((1..=width).map(|i| format!("interface_{i}")));
    w.write_record(&header)?;
    for (beta, xs) in rows {
        let mut row = vec![beta.to_string()];
        row.extend(xs.iter().map(f64::to_string));
        row.extend(std::iter::repeat(f64::NAN.to_string()).take(width - xs.len()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the population-versus-β curves of an optimizer sweep: columns
/// `beta,P_1,…,P_nmax` with one row per β, `NaN` where a cell produced no
/// physical converged steady state.
pub fn write_population_csv(path: &Path, report: &OptimReport) -> Result<()> {
    let mut betas: Vec<f64> = report.candidates.iter().map(|c| c.beta).collect();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let n_max = report.candidates.iter().map(|c| c.n_packs).max().unwrap_or(0);

    let mut w = csv_writer(path)?;
    let mut header = vec!["beta".to_owned()];
    header.extend((1..=n_max).map(|n| format!("P_{n}")));
    w.write_record(&header)?;
    for &beta in &betas {
        let mut row = vec![beta.to_string()];
        for n in 1..=n_max {
            let p = report
                .candidates
                .iter()
                .find(|c| c.beta == beta && c.n_packs == n && c.physical && c.converged)
                .map_or(f64::NAN, |c| c.population);
            row.push(p.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::{BifurcationPoint, BranchPoint, Termination};
    use crate::grid::{build_grid, neumann_spectrum, SpectrumMethod};
    use crate::model::ModelParams;
    use crate::packs::optimize_packs;
    use std::f64::consts::PI;

    fn scratch() -> tempfile::TempDir {
        tempfile::tempdir().expect("temp dir")
    }

    #[test]
    fn field_csv_round_trips_bitwise() {
        let dir = scratch();
        let grid = build_grid(&[(0.0, PI)], &[17]).unwrap();
        // Exercise non-dyadic values: shortest-round-trip printing must
        // reproduce every bit on re-parse.
        let field = Field::from_fn(&grid, |x| (x[0].sin() / 3.0).exp() * 1e-7);
        let path = dir.path().join("field.csv");
        write_field_csv(&path, &grid, &field).unwrap();

        let back = read_field_csv(&path, &grid).unwrap();
        assert_eq!(back.as_slice(), field.as_slice(), "round trip must be exact");

        let table = read_csv(&path).unwrap();
        assert_eq!(table.headers, vec!["x", "value"]);
        assert_eq!(table.rows.len(), 17);

        // A mismatched grid is rejected with a usage error naming the issue.
        let other = build_grid(&[(0.0, 1.0)], &[17]).unwrap();
        let err = read_field_csv(&path, &other).unwrap_err();
        assert!(err.is_usage());
        assert!(err.to_string().contains("does not match"), "{err}");
        let shorter = build_grid(&[(0.0, PI)], &[16]).unwrap();
        assert!(read_field_csv(&path, &shorter).is_err());
    }

    #[test]
    fn state_csv_round_trips_in_two_dimensions() {
        let dir = scratch();
        let grid = build_grid(&[(0.0, 1.0), (0.0, 2.0)], &[5, 4]).unwrap();
        let state = SystemState {
            t: 0.75,
            grid: grid.clone(),
            fields: vec![
                Field::from_fn(&grid, |p| 0.3 + p[0] * p[1]),
                Field::from_fn(&grid, |p| (p[0] - p[1]).tanh()),
                Field::from_fn(&grid, |p| 1.0 / (1.0 + p[0] + 2.0 * p[1])),
            ],
        };
        let path = dir.path().join("state.csv");
        write_state_csv(&path, &state).unwrap();

        let table = read_csv(&path).unwrap();
        assert_eq!(table.headers, vec!["x", "y", "w_1", "w_2", "u"]);

        let fields = read_state_csv(&path, &grid).unwrap();
        assert_eq!(fields.len(), 3);
        for (a, b) in fields.iter().zip(&state.fields) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }

    #[test]
    fn trajectory_csv_round_trips_and_labels_components() {
        let dir = scratch();
        let samples = vec![
            TrajectorySample {
                t: 0.0,
                means: vec![0.5, 1.0],
                sups: vec![0.6, 1.1],
                grad_norms: vec![0.01, 0.02],
            },
            TrajectorySample {
                t: 0.125,
                means: vec![0.4, 1.05],
                sups: vec![0.55, 1.15],
                grad_norms: vec![0.009, 0.018],
            },
        ];
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&path, &samples).unwrap();

        let table = read_csv(&path).unwrap();
        assert_eq!(
            table.headers,
            vec!["t", "mean_w_1", "mean_u", "sup_w_1", "sup_u", "grad_w_1", "grad_u"]
        );
        assert_eq!(table.rows[1][0], 0.125);
        assert_eq!(table.rows[0][1..3], [0.5, 1.0]);
        assert_eq!(table.rows[1][5..7], [0.009, 0.018]);

        assert!(write_trajectory_csv(&dir.path().join("e.csv"), &[]).is_err());
    }

    #[test]
    fn spectrum_json_lists_groups_with_multiplicity() {
        let dir = scratch();
        let grid = build_grid(&[(0.0, 1.0), (0.0, 1.0)], &[8, 8]).unwrap();
        let spectrum = neumann_spectrum(&grid, 6, SpectrumMethod::Analytic).unwrap();
        let path = dir.path().join("spectrum.json");
        write_spectrum_json(&path, &spectrum).unwrap();

        let doc = read_json(&path).unwrap();
        let groups = doc.as_array().expect("list of groups");
        assert_eq!(groups[0]["index"], 0);
        assert_eq!(groups[0]["eigenvalue"], 0.0);
        assert_eq!(groups[0]["multiplicity"], 1);
        // On the unit square γ = π² is doubly degenerate: (1,0) and (0,1).
        assert_eq!(groups[1]["multiplicity"], 2);
        let ev = groups[1]["eigenvalue"].as_f64().unwrap();
        assert!((ev - PI * PI).abs() < 1e-12 * PI * PI);
    }

    #[test]
    fn branch_artifacts_reference_snapshots_that_reload() {
        let dir = scratch();
        let grid = build_grid(&[(0.0, PI)], &[12]).unwrap();
        let mk_state = |amp: f64| SystemState {
            t: 0.0,
            grid: grid.clone(),
            fields: vec![
                Field::from_fn(&grid, |x| 0.45 + amp * x[0].cos()),
                Field::from_fn(&grid, |x| 0.45 - amp * x[0].cos()),
                Field::constant(&grid, 2.0),
            ],
        };
        let branch = Branch {
            origin: BifurcationPoint {
                n: 1,
                gamma_n: 1.0,
                beta_n: 20.0 / 9.0,
                multiplicity: 1,
                odd: true,
            },
            points: (0..5)
                .map(|i| {
                    let amp = 0.01 * (i + 1) as f64;
                    BranchPoint {
                        beta: 20.0 / 9.0 + amp,
                        state: mk_state(amp),
                        residual: 1e-11,
                        zero_count: 1,
                        amplitude: 2.0 * amp,
                    }
                })
                .collect(),
            termination: Termination::StepLimit,
        };

        let (manifest, files) =
            write_branch_artifacts(dir.path(), "branch1", &branch, Some(2)).unwrap();
        assert_eq!(manifest.n_points, 5);
        assert_eq!(manifest.table, "branch1.csv");
        // Points 0, 2, 4 by stride; 4 is also the final point.
        assert_eq!(
            manifest.snapshots.iter().map(|(i, _)| *i).collect::<Vec<_>>(),
            vec![0, 2, 4]
        );
        for f in &files {
            assert!(f.exists(), "missing artifact {}", f.display());
        }

        let table = read_csv(&dir.path().join("branch1.csv")).unwrap();
        assert_eq!(table.headers, vec!["beta", "amplitude", "zero_count", "residual"]);
        assert_eq!(table.rows.len(), 5);
        assert_eq!(table.rows[3][0], 20.0 / 9.0 + 0.04);
        assert_eq!(table.rows[3][2], 1.0);

        let doc = read_json(&dir.path().join("branch1.json")).unwrap();
        assert_eq!(doc["termination"], "STEP_LIMIT");
        assert_eq!(doc["origin"]["n"], 1);

        let (idx, file) = &manifest.snapshots[1];
        let fields = read_state_csv(&dir.path().join(file), &grid).unwrap();
        assert_eq!(fields.len(), 3);
        assert_eq!(fields[0].as_slice(), branch.points[*idx].state.fields[0].as_slice());
    }

    #[test]
    fn interface_rows_pad_to_equal_width_with_nan() {
        let dir = scratch();
        let rows =
            vec![(10.0, vec![1.5707]), (20.0, vec![1.54, 1.60]), (40.0, Vec::new())];
        let path = dir.path().join("interfaces.csv");
        write_interfaces_csv(&path, &rows).unwrap();

        let table = read_csv(&path).unwrap();
        assert_eq!(table.headers, vec!["beta", "interface_1", "interface_2"]);
        assert_eq!(table.rows[0][1], 1.5707);
        assert!(table.rows[0][2].is_nan());
        assert_eq!(table.rows[1][2], 1.60);
        assert!(table.rows[2][1].is_nan() && table.rows[2][2].is_nan());
    }

    #[test]
    fn population_curves_tabulate_physical_cells_per_beta() {
        let dir = scratch();
        // A tight-budget sweep: N = 2 collapses, so its column carries the
        // collapsed population; every written number must re-parse.
        let params = ModelParams {
            n_predators: 1,
            lambda: 1.0,
            mu: 1.0,
            omega: vec![0.5],
            kpred: vec![1.0],
            mu_self: vec![0.0],
            beta: 1.0,
            a: vec![vec![0.0]],
            d: vec![1.0],
            dprey: 1.0,
        };
        let grid = build_grid(&[(0.0, 1.0)], &[32]).unwrap();
        let report = optimize_packs(&params, &grid, 2, &[1.0, 4.0]).unwrap();
        let path = dir.path().join("population.csv");
        write_population_csv(&path, &report).unwrap();

        let table = read_csv(&path).unwrap();
        assert_eq!(table.headers, vec!["beta", "P_1", "P_2"]);
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0][0], 1.0);
        assert_eq!(table.rows[1][0], 4.0);
        for row in &table.rows {
            let p1 = row[1];
            assert!((p1 - 0.5).abs() < 1e-6, "one-pack population {p1}");
        }
    }

    #[test]
    fn malformed_artifacts_are_usage_errors() {
        let dir = scratch();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x,value\n0.5,not-a-number\n").unwrap();
        let err = read_csv(&path).unwrap_err();
        assert!(err.is_usage());
        assert_eq!(err.kind(), "artifact");
        assert!(err.to_string().contains("row 0, column 1"), "{err}");

        let missing = read_csv(&dir.path().join("nope.csv"));
        assert!(missing.is_err());

        std::fs::write(&path, "x,value\n0.5,{\n").unwrap();
        assert!(read_csv(&path).is_err());
    }
}
