//! Run logs and the files rendered from them: JSON, CSV, a fixed-width
//! results table, PGM dream grids and an SVG accuracy chart.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{StrategyKind, TrainCurve};
use crate::error::{Error, Result};
use crate::eval::AccuracyMatrix;
use crate::memory::{sample_dreams, GenerativeMemory, MemoryModality};
use crate::nn::IMAGE_SIDE;
use crate::rng::Rng;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Footprints {
    pub model: usize,
    /// One entry per stored memory, in task order.
    pub memories: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub task_id: usize,
    pub train_ms: u64,
    pub gan_ms: u64,
    pub sleep_ms: u64,
    pub eval_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCurves {
    pub task_id: usize,
    pub train: TrainCurve,
    pub gan_discriminator: Vec<f64>,
    pub gan_generator: Vec<f64>,
    pub sleep: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub task_id: usize,
    pub extractor_hash_before_wake: String,
    pub extractor_hash_after_wake: String,
    pub extractor_hash_after_stage: String,
    /// How many sleep batches came from each memory, in task order.
    pub sleep_selections: Vec<usize>,
}

/// Everything recorded about one strategy run. `timings_ms` is the only
/// field that varies between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub matrix: AccuracyMatrix,
    pub averages: Vec<f64>,
    pub footprints_bytes: Footprints,
    pub timings_ms: Vec<StageTimings>,
    pub loss_curves: Vec<StageCurves>,
    pub stages: Vec<StageRecord>,
}

impl RunLog {
    pub fn final_average(&self) -> Option<f64> {
        self.matrix.final_average()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run logs serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report.json: {e}")))
    }
}

/// `value × 100` to two decimals, halves rounded away from zero.
pub fn percent(value: f64) -> String {
    format!("{:.2}", (value * 10_000.0).round() / 100.0)
}

pub fn matrix_csv(matrix: &AccuracyMatrix) -> String {
    let k = matrix.len();
    let mut out = String::from("after_task");
    for i in 1..=k {
        let _ = write!(out, ",task_{i}");
    }
    out.push_str(",average\n");
    for (j, (row, avg)) in matrix.rows().iter().zip(matrix.averages()).enumerate() {
        let _ = write!(out, "{}", j + 1);
        for i in 0..k {
            out.push(',');
            if let Some(v) = row.get(i) {
                out.push_str(&percent(*v));
            }
        }
        let _ = writeln!(out, ",{}", percent(avg));
    }
    out
}

const METHOD_WIDTH: usize = 14;
const CELL_WIDTH: usize = 9;

/// Final per-task accuracies of each run side by side, then the average
/// accuracy after every stage.
pub fn comparison_table(logs: &[RunLog]) -> String {
    let k = logs.iter().map(|l| l.matrix.len()).max().unwrap_or(0);
    let width = METHOD_WIDTH + CELL_WIDTH * (k + 1);
    let mut out = String::new();
    let _ = writeln!(out, "Final accuracy (%) after all {k} tasks");
    let _ = write!(out, "{:<METHOD_WIDTH$}", "Method");
    for i in 1..=k {
        let _ = write!(out, "{:>CELL_WIDTH$}", format!("T{i}"));
    }
    let _ = writeln!(out, "{:>CELL_WIDTH$}", "Avg");
    let _ = writeln!(out, "{}", "-".repeat(width));
    for log in logs {
        let _ = write!(out, "{:<METHOD_WIDTH$}", log.strategy.label());
        let row = log.matrix.final_row().unwrap_or(&[]);
        for i in 0..k {
            let cell = row.get(i).map(|v| percent(*v)).unwrap_or_default();
            let _ = write!(out, "{cell:>CELL_WIDTH$}");
        }
        let avg = log.final_average().map(percent).unwrap_or_default();
        let _ = writeln!(out, "{avg:>CELL_WIDTH$}");
    }
    out.push('\n');
    let _ = writeln!(out, "Average accuracy (%) after each task");
    let _ = write!(out, "{:<METHOD_WIDTH$}", "Method");
    for i in 1..=k {
        let _ = write!(out, "{:>CELL_WIDTH$}", format!("T{i}"));
    }
    out.push('\n');
    let _ = writeln!(out, "{}", "-".repeat(METHOD_WIDTH + CELL_WIDTH * k));
    for log in logs {
        let _ = write!(out, "{:<METHOD_WIDTH$}", log.strategy.label());
        for avg in &log.averages {
            let _ = write!(out, "{:>CELL_WIDTH$}", percent(*avg));
        }
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `matrix.csv` and `final_table.txt` into `out_dir`.
pub fn emit_report(log: &RunLog, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let files = [
        ("report.json", log.to_json() + "\n"),
        ("matrix.csv", matrix_csv(&log.matrix)),
        ("final_table.txt", comparison_table(std::slice::from_ref(log))),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out_dir.join(name);
        write_file(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Maps `[−1, 1]` to `[0, 255]`.
pub fn to_gray(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Binary PGM of a `rows × cols` grid of 28×28 samples.
pub fn dream_grid_pgm(memory: &GenerativeMemory, rows: usize, cols: usize, rng: &mut Rng) -> Result<Vec<u8>> {
    if memory.modality != MemoryModality::CvPixels {
        return Err(Error::Domain(format!(
            "memory for task {} holds {}, which is not visualizable",
            memory.task_id,
            memory.modality.as_str()
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Domain("grid must have at least one row and column".into()));
    }
    let dreams = sample_dreams(memory, rows * cols, rng, None)?;
    let (w, h) = (cols * IMAGE_SIDE, rows * IMAGE_SIDE);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    let header = out.len();
    out.resize(header + w * h, 0);
    let px = IMAGE_SIDE * IMAGE_SIDE;
    for (s, image) in dreams.data.data().chunks_exact(px).enumerate() {
        let (gr, gc) = (s / cols, s % cols);
        for (p, &v) in image.iter().enumerate() {
            let (y, x) = (gr * IMAGE_SIDE + p / IMAGE_SIDE, gc * IMAGE_SIDE + p % IMAGE_SIDE);
            out[header + y * w + x] = to_gray(v);
        }
    }
    Ok(out)
}

pub fn emit_dream_grid(memory: &GenerativeMemory, rows: usize, cols: usize, path: &Path, rng: &mut Rng) -> Result<()> {
    let bytes = dream_grid_pgm(memory, rows, cols, rng)?;
    write_file(path, &bytes)
}

pub const SVG_WIDTH: f64 = 640.0;
pub const SVG_HEIGHT: f64 = 480.0;
const PLOT_LEFT: f64 = 60.0;
const PLOT_RIGHT: f64 = 620.0;
const PLOT_TOP: f64 = 20.0;
const PLOT_BOTTOM: f64 = 420.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Vertical position of an average accuracy in `[0, 1]`.
pub fn svg_y(accuracy: f64) -> f64 {
    PLOT_BOTTOM - accuracy.clamp(0.0, 1.0) * (PLOT_BOTTOM - PLOT_TOP)
}

/// Horizontal position after `stage` of `stages` tasks.
pub fn svg_x(stage: usize, stages: usize) -> f64 {
    if stages <= 1 {
        (PLOT_LEFT + PLOT_RIGHT) / 2.0
    } else {
        PLOT_LEFT + (stage - 1) as f64 * (PLOT_RIGHT - PLOT_LEFT) / (stages - 1) as f64
    }
}

/// Line chart of average accuracy against tasks completed, one polyline
/// per run.
pub fn accuracy_svg(logs: &[RunLog]) -> Result<String> {
    if logs.is_empty() {
        return Err(Error::Domain("no runs to plot".into()));
    }
    let stages = logs.iter().map(|l| l.averages.len()).max().unwrap_or(0).max(1);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{PLOT_LEFT} {PLOT_TOP} V{PLOT_BOTTOM} H{PLOT_RIGHT}" fill="none" stroke="black"/>"#
    );
    for pct in (0..=100).step_by(20) {
        let y = svg_y(pct as f64 / 100.0);
        let _ = writeln!(
            s,
            r##"<line x1="{PLOT_LEFT}" y1="{y}" x2="{PLOT_RIGHT}" y2="{y}" stroke="#dddddd"/><text x="{}" y="{}" text-anchor="end">{pct}</text>"##,
            PLOT_LEFT - 6.0,
            y + 4.0
        );
    }
    for stage in 1..=stages {
        let x = svg_x(stage, stages);
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{stage}</text>"#, PLOT_BOTTOM + 18.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">tasks completed</text>"#,
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        PLOT_BOTTOM + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">average accuracy (%)</text>"#,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0
    );
    for (i, log) in logs.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = log
            .averages
            .iter()
            .enumerate()
            .map(|(j, a)| format!("{:.3},{:.3}", svg_x(j + 1, stages), svg_y(*a)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline data-strategy="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            log.strategy.as_str(),
            points.join(" ")
        );
        let ly = PLOT_TOP + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">{4}</text>"#,
            PLOT_RIGHT - 130.0,
            PLOT_RIGHT - 110.0,
            PLOT_RIGHT - 104.0,
            ly + 4.0,
            log.strategy.label()
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_accuracy_svg(logs: &[RunLog], path: &Path) -> Result<()> {
    let svg = accuracy_svg(logs)?;
    write_file(path, svg.as_bytes())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn log(strategy: StrategyKind, rows: Vec<Vec<f64>>) -> RunLog {
        let matrix = AccuracyMatrix::from_rows(rows).unwrap();
        RunLog {
            strategy,
            seed: 7,
            config: BTreeMap::from([("seed".to_string(), "7".to_string())]),
            averages: matrix.averages(),
            matrix,
            footprints_bytes: Footprints::default(),
            timings_ms: Vec::new(),
            loss_curves: Vec::new(),
            stages: Vec::new(),
        }
    }

    #[test]
    fn percentages_round_half_away_from_zero() {
        assert_eq!(percent(0.5), "50.00");
        assert_eq!(percent(0.12345), "12.35");
        assert_eq!(percent(1.0), "100.00");
        assert_eq!(percent(0.0), "0.00");
    }

    #[test]
    fn csv_layout() {
        let m = AccuracyMatrix::from_rows(vec![vec![1.0], vec![0.9, 0.8]]).unwrap();
        assert_eq!(matrix_csv(&m), "after_task,task_1,task_2,average\n1,100.00,,100.00\n2,90.00,80.00,85.00\n");
    }

    #[test]
    fn table_lists_each_strategy() {
        let a = log(StrategyKind::Mygo, vec![vec![1.0], vec![0.99, 0.98]]);
        let b = log(StrategyKind::Finetune, vec![vec![1.0], vec![0.5, 1.0]]);
        let t = comparison_table(&[a, b]);
        assert!(t.contains("MyGO"));
        assert!(t.contains("Fine-tuning"));
        let ft_line = t.lines().find(|l| l.starts_with("Fine-tuning")).unwrap();
        assert!(ft_line.ends_with("75.00"), "{ft_line}");
    }

    #[test]
    fn json_round_trips() {
        let a = log(StrategyKind::Mygo, vec![vec![0.25]]);
        assert_eq!(RunLog::from_json(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn svg_geometry() {
        assert_eq!(svg_y(1.0), PLOT_TOP);
        assert_eq!(svg_y(0.0), PLOT_BOTTOM);
        assert_eq!(svg_x(1, 5), PLOT_LEFT);
        assert_eq!(svg_x(5, 5), PLOT_RIGHT);
        assert!(accuracy_svg(&[]).is_err());
    }
}
