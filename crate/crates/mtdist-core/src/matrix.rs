//! Pairwise distance matrices: a bounded parallel runner over all
//! unordered pairs, CSV writers for values and solve statuses, and a
//! self-contained SVG heat map.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::ip::EncodeConfig;
use crate::solve::SolveStatus;
use crate::tree::AbstractMergeTree;

#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub statuses: Vec<Vec<SolveStatus>>,
    pub wall: Duration,
}

/// Computes all pairwise distances. Each unordered pair is solved once on
/// a pool of `threads` workers (0 picks the default width); results are
/// assembled single-threaded in index order, so deterministic solver
/// configurations yield identical matrices on every run.
pub fn compute_matrix(
    trees: &[(String, AbstractMergeTree)],
    config: &EncodeConfig,
    threads: usize,
) -> DistanceMatrix {
    use rayon::prelude::*;

    let started = Instant::now();
    let n = trees.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j));
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        builder = builder.num_threads(threads);
    }
    let pool = builder.build().expect("worker pool");
    let solved: Vec<(f64, SolveStatus)> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(i, j)| {
                let res = crate::solve::builtin_reencode(&trees[i].1, &trees[j].1, config);
                (res.value, res.status)
            })
            .collect()
    });

    let mut values = vec![vec![0.0; n]; n];
    let mut statuses = vec![vec![SolveStatus::Optimal; n]; n];
    for (&(i, j), &(value, status)) in pairs.iter().zip(&solved) {
        values[i][j] = value;
        values[j][i] = value;
        statuses[i][j] = status;
        statuses[j][i] = status;
    }
    DistanceMatrix {
        names: trees.iter().map(|(name, _)| name.clone()).collect(),
        values,
        statuses,
        wall: started.elapsed(),
    }
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn all_optimal(&self) -> bool {
        self.statuses.iter().flatten().all(|&s| s == SolveStatus::Optimal)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |a, &b| a.max(b))
    }

    /// Values as CSV with a leading name column and full-precision cells.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::from("name");
        for name in &self.names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, name) in self.names.iter().enumerate() {
            out.push_str(name);
            for v in &self.values[i] {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        fs::write(path, out)
    }

    /// Per-cell solve statuses in the same shape as the value matrix.
    pub fn write_status_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::from("name");
        for name in &self.names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, name) in self.names.iter().enumerate() {
            out.push_str(name);
            for s in &self.statuses[i] {
                out.push(',');
                out.push_str(s.as_str());
            }
            out.push('\n');
        }
        fs::write(path, out)
    }

    /// Standalone heat map: one rectangle per cell on a fixed 256-step
    /// ramp over [0, max], with row and column labels. Cells that only
    /// carry an upper bound are star-marked and outlined.
    pub fn write_svg(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.render_svg())
    }

    fn render_svg(&self) -> String {
        const CELL: f64 = 46.0;
        const GUTTER: f64 = 110.0;
        const PAD: f64 = 12.0;
        let n = self.len();
        let width = GUTTER + n as f64 * CELL + PAD;
        let height = GUTTER + n as f64 * CELL + PAD;
        let max = self.max_value();
        let mut s = String::new();
        s.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
             viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"11\">\n"
        ));
        s.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
        ));
        for (j, name) in self.names.iter().enumerate() {
            let x = GUTTER + (j as f64 + 0.5) * CELL;
            let y = GUTTER - 8.0;
            s.push_str(&format!(
                "<text x=\"{x}\" y=\"{y}\" text-anchor=\"start\" \
                 transform=\"rotate(-45 {x} {y})\">{}</text>\n",
                escape_xml(name)
            ));
        }
        for (i, name) in self.names.iter().enumerate() {
            let x = GUTTER - 8.0;
            let y = GUTTER + (i as f64 + 0.65) * CELL;
            s.push_str(&format!(
                "<text x=\"{x}\" y=\"{y}\" text-anchor=\"end\">{}</text>\n",
                escape_xml(name)
            ));
        }
        for i in 0..n {
            for j in 0..n {
                let v = self.values[i][j];
                let x = GUTTER + j as f64 * CELL;
                let y = GUTTER + i as f64 * CELL;
                let color = ramp_color(v, max);
                let marked = self.statuses[i][j] != SolveStatus::Optimal;
                let stroke = if marked { "#d62728" } else { "#444444" };
                let stroke_width = if marked { 2.5 } else { 0.5 };
                s.push_str(&format!(
                    "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" \
                     fill=\"{color}\" stroke=\"{stroke}\" stroke-width=\"{stroke_width}\"/>\n"
                ));
                let tx = x + CELL / 2.0;
                let ty = y + CELL / 2.0 + 4.0;
                let label = if marked { format!("{v:.2}*") } else { format!("{v:.2}") };
                let text_color = if v > 0.6 * max.max(1e-12) { "#111111" } else { "#eeeeee" };
                s.push_str(&format!(
                    "<text x=\"{tx}\" y=\"{ty}\" text-anchor=\"middle\" \
                     fill=\"{text_color}\">{label}</text>\n"
                ));
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Fixed 256-step ramp from deep purple to yellow; values are binned so
/// equal inputs always render the same color regardless of the rest of
/// the matrix.
fn ramp_color(v: f64, max: f64) -> String {
    const ANCHORS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = if max <= 0.0 { 0.0 } else { (v / max).clamp(0.0, 1.0) };
    let step = (t * 255.0).round() / 255.0;
    let scaled = step * (ANCHORS.len() - 1) as f64;
    let lo = (scaled.floor() as usize).min(ANCHORS.len() - 2);
    let frac = scaled - lo as f64;
    let (r0, g0, b0) = ANCHORS[lo];
    let (r1, g1, b1) = ANCHORS[lo + 1];
    let r = (r0 + (r1 - r0) * frac).round() as u8;
    let g = (g0 + (g1 - g0) * frac).round() as u8;
    let b = (b0 + (b1 - b0) * frac).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::random_tree;
    use crate::solve::{solve_builtin, Limits};

    fn small_collection() -> Vec<(String, AbstractMergeTree)> {
        (0..4)
            .map(|k| (format!("t{k}"), random_tree(6, 400 + k)))
            .collect()
    }

    #[test]
    fn matrix_matches_pairwise_solves() {
        let trees = small_collection();
        let m = compute_matrix(&trees, &EncodeConfig::default(), 2);
        assert_eq!(m.len(), 4);
        assert!(m.all_optimal());
        for i in 0..4 {
            assert_eq!(m.values[i][i], 0.0);
            for j in 0..4 {
                assert_eq!(m.values[i][j], m.values[j][i]);
            }
        }
        for i in 0..4 {
            for j in i + 1..4 {
                let direct = solve_builtin(&trees[i].1, &trees[j].1, &Limits::default());
                assert!((m.values[i][j] - direct.value).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn deterministic_mode_reruns_identically() {
        let trees = small_collection();
        let config = EncodeConfig {
            deterministic_budget_mode: true,
            ..EncodeConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        compute_matrix(&trees, &config, 3).write_csv(&a).unwrap();
        compute_matrix(&trees, &config, 1).write_csv(&b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn csv_has_header_and_full_precision_cells() {
        let trees = small_collection();
        let m = compute_matrix(&trees, &EncodeConfig::default(), 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        m.write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "name,t0,t1,t2,t3");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "t0");
        let parsed: f64 = row[2].parse().unwrap();
        assert_eq!(parsed, m.values[0][1]);

        let status_path = dir.path().join("m.status.csv");
        m.write_status_csv(&status_path).unwrap();
        let stext = fs::read_to_string(&status_path).unwrap();
        assert!(stext.contains("optimal"));
    }

    #[test]
    fn svg_renders_every_cell_and_marks_bound_hits() {
        let trees: Vec<(String, AbstractMergeTree)> = (0..3)
            .map(|k| (format!("m{k}"), random_tree(9, 900 + k)))
            .collect();
        let starved = EncodeConfig {
            deterministic_budget_mode: true,
            initial_node_budget: 1,
            total_node_budget: 2,
            ..EncodeConfig::default()
        };
        let m = compute_matrix(&trees, &starved, 2);
        assert!(!m.all_optimal());
        let svg = m.render_svg();
        assert_eq!(svg.matches("<rect").count(), 1 + 9);
        assert!(svg.contains('*'));
        assert!(svg.contains("rotate(-45"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.svg");
        m.write_svg(&path).unwrap();
        assert!(fs::read_to_string(&path).unwrap().starts_with("<svg"));
    }
}
