//! Attack vectors on disk: CSV with columns `index,a,d`, one row per
//! touched measurement. Indices are one-based; `d` is 0 or 1. Measurements
//! not listed are left alone.

use std::path::Path;

use anyhow::{bail, Context};
use gridraid_core::synthesis::AttackVector;
use serde::Deserialize;

use crate::table::{fmt_float, Table};

#[derive(Debug, Deserialize)]
struct Row {
    index: usize,
    a: f64,
    d: u8,
}

pub fn parse_attack(text: &str, m: usize) -> anyhow::Result<AttackVector> {
    let mut a = vec![0.0; m];
    let mut d = vec![false; m];
    let mut seen = vec![false; m];
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    for (k, rec) in rdr.deserialize::<Row>().enumerate() {
        let line = k + 2;
        let row = rec.with_context(|| format!("attack file line {line}"))?;
        if row.index == 0 || row.index > m {
            bail!("attack file line {line}: index {} outside 1..={m}", row.index);
        }
        let i = row.index - 1;
        if seen[i] {
            bail!("attack file line {line}: index {} listed twice", row.index);
        }
        seen[i] = true;
        if row.d > 1 {
            bail!("attack file line {line}: d must be 0 or 1");
        }
        a[i] = row.a;
        d[i] = row.d == 1;
    }
    Ok(AttackVector::new(a, d)?)
}

pub fn read_attack(path: &Path, m: usize) -> anyhow::Result<AttackVector> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_attack(&text, m)
}

pub fn attack_table(atk: &AttackVector) -> Table {
    let mut t = Table::new(&["index", "a", "d"]);
    for i in atk.support() {
        t.push(vec![
            (i + 1).to_string(),
            fmt_float(atk.a()[i]),
            u8::from(atk.d()[i]).to_string(),
        ]);
    }
    t
}
