use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based pass index.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        if let Some(prev) = self.records.last() {
            if record.epoch <= prev.epoch {
                return Err(Error::State(format!(
                    "epoch {} recorded after epoch {}",
                    record.epoch, prev.epoch
                )));
            }
        }
        let values = [record.train_loss, record.train_accuracy, record.val_loss, record.val_accuracy];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite metrics at epoch {}", record.epoch)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
            );
        }
        out
    }

    /// Parses the CSV written by [`History::to_csv`]. Errors name the
    /// offending 1-based line.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == CSV_HEADER => {}
            Some((_, header)) => {
                return Err(Error::Format(format!("line 1: expected header {CSV_HEADER:?}, got {header:?}")))
            }
            None => return Err(Error::Format("empty history CSV".into())),
        }
        let mut history = History::default();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::Format(format!(
                    "line {lineno}: expected 5 fields, found {}",
                    fields.len()
                )));
            }
            let epoch = fields[0]
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("line {lineno}: bad epoch {:?}", fields[0])))?;
            let mut vals = [0.0; 4];
            for (v, f) in vals.iter_mut().zip(&fields[1..]) {
                *v = f
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {lineno}: bad number {f:?}")))?;
            }
            history
                .push(EpochRecord {
                    epoch,
                    train_loss: vals[0],
                    train_accuracy: vals[1],
                    val_loss: vals[2],
                    val_accuracy: vals[3],
                })
                .map_err(|e| Error::Format(format!("line {lineno}: {e}")))?;
        }
        Ok(history)
    }
}
