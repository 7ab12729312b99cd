use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc,val_dice";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_dice: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn best_val_dice(&self) -> Option<f64> {
        self.records.iter().map(|r| r.val_dice).reduce(f64::max)
    }

    /// CSV with six decimal places per float.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.val_dice
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == LOG_HEADER => {}
            Some(h) => return Err(Error::Schema(format!("unexpected header `{h}`"))),
            None => return Err(Error::Schema("empty log".into())),
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(Error::Schema(format!("row {} has {} fields, expected 6", i + 1, fields.len())));
            }
            let num = |j: usize| -> Result<f64> {
                fields[j].parse::<f64>().map_err(|_| Error::Schema(format!("row {}: bad number `{}`", i + 1, fields[j])))
            };
            let epoch = fields[0]
                .parse::<usize>()
                .map_err(|_| Error::Schema(format!("row {}: bad epoch `{}`", i + 1, fields[0])))?;
            records.push(EpochRecord {
                epoch,
                train_loss: num(1)?,
                train_accuracy: num(2)?,
                val_loss: num(3)?,
                val_accuracy: num(4)?,
                val_dice: num(5)?,
            });
        }
        if records.is_empty() {
            return Err(Error::Schema("log has no rows".into()));
        }
        Ok(TrainingLog { records })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_csv(&text)
    }
}
