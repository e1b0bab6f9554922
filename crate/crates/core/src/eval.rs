//! Task-aware accuracy: the ground-truth task id picks the head.

use serde::{Deserialize, Serialize};

use crate::data::TaskSpec;
use crate::error::{Error, Result};
use crate::nn::ModelState;

const EVAL_CHUNK: usize = 250;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of test examples whose head-`task_id` argmax equals the local
/// label.
pub fn evaluate_task(model: &ModelState, task: &TaskSpec) -> Result<f64> {
    let k = model.head(task.task_id)?.n_classes();
    if task.test.is_empty() {
        return Err(Error::Data(format!("task {} has an empty test split", task.task_id)));
    }
    let mut correct = 0usize;
    for batch in task.test.chunks(EVAL_CHUNK) {
        let logits = model.logits(task.task_id, &batch.input)?;
        correct += logits
            .data()
            .chunks_exact(k)
            .zip(&batch.labels)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
    }
    Ok(correct as f64 / task.test.len() as f64)
}

pub fn average_accuracy(row: &[f64]) -> Result<f64> {
    if row.is_empty() {
        return Err(Error::Domain("average of an empty accuracy row".into()));
    }
    Ok(row.iter().sum::<f64>() / row.len() as f64)
}

/// Row `j` (0-based) holds accuracies on tasks `1..=j + 1` measured after
/// learning task `j + 1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new();
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.rows.len() + 1 {
            return Err(Error::Domain(format!(
                "row after task {} must have {} entries, got {}",
                self.rows.len() + 1,
                self.rows.len() + 1,
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("accuracy {v} outside [0, 1]")));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Average accuracy after each stage.
    pub fn averages(&self) -> Vec<f64> {
        self.rows.iter().map(|r| average_accuracy(r).expect("rows are non-empty")).collect()
    }

    pub fn final_row(&self) -> Option<&[f64]> {
        self.rows.last().map(Vec::as_slice)
    }

    pub fn final_average(&self) -> Option<f64> {
        self.final_row().map(|r| average_accuracy(r).expect("rows are non-empty"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_first_tie() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn table_averages() {
        let mygo = average_accuracy(&[0.9923, 0.9514, 0.9696, 0.9946, 0.9515]).unwrap();
        let ft = average_accuracy(&[0.4385, 0.6959, 0.2190, 0.9544, 0.9961]).unwrap();
        assert!((mygo - 0.9719).abs() < 5e-5, "{mygo}");
        assert!((ft - 0.6608).abs() < 5e-5, "{ft}");
        assert_eq!(average_accuracy(&[0.42]).unwrap(), 0.42);
        assert!(average_accuracy(&[]).is_err());
    }

    #[test]
    fn matrix_is_lower_triangular() {
        let mut m = AccuracyMatrix::new();
        m.push_row(vec![1.0]).unwrap();
        assert!(m.push_row(vec![0.5]).is_err());
        assert!(m.push_row(vec![0.5, 1.5]).is_err());
        m.push_row(vec![0.5, 1.0]).unwrap();
        assert_eq!(m.averages(), vec![1.0, 0.75]);
        assert_eq!(m.final_average(), Some(0.75));
    }
}
