//! How much of a secret branch sequence a predictor retains: train it on the
//! program's branch trace for a number of rounds, then read out the
//! prediction it would give at each dynamic instance of the key branch.

use std::collections::BTreeSet;
use std::io::{self, Write};

use serde::Serialize;

use super::{Predictor, PredictorConfig};
use crate::analysis::MarkedProgram;
use crate::isa::{interpret_with, InterpError, InterpOptions, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StudyRow {
    pub iteration: usize,
    /// Key bit the predictor implies (taken means 0).
    pub prediction: u8,
    pub true_bit: u8,
    /// The counter consulted was written during training.
    pub trained: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StudyResult {
    pub config: PredictorConfig,
    pub rounds: usize,
    pub key_branch: Option<usize>,
    pub rows: Vec<StudyRow>,
    /// Iterations whose prediction came from a trained counter and matches.
    pub recovered: usize,
}

/// Trains a fresh predictor on `rounds` executions of the program and then
/// records its prediction at each instance of the first secret-dependent
/// branch during one more execution. Branches carrying the front-end
/// restriction never touch the predictor.
pub fn memorization_study(
    m: &MarkedProgram,
    rounds: usize,
    config: PredictorConfig,
) -> Result<StudyResult, InterpError> {
    let p = &m.program;
    let key_branch = m.taint.secret_branches.first().copied();
    let mut trace = Vec::new();
    interpret_with(p, &p.initial_memory(), InterpOptions::default(), |_, r| {
        if let Some(t) = r.taken {
            if p.instructions[r.index].opcode.is_cond_branch() {
                trace.push((r.index, t));
            }
        }
    })?;

    let mut pred = Predictor::new(config);
    let mut written = BTreeSet::new();
    for _ in 0..rounds {
        for &(i, taken) in &trace {
            let inst = &p.instructions[i];
            if inst.tags.fe_restricted {
                continue;
            }
            let pc = Program::pc_of(i);
            let index = pred.predict(pc).index;
            written.insert(index);
            pred.update(pc, taken, Program::pc_of(inst.target.unwrap_or(i + 1)));
        }
    }

    let mut rows = Vec::new();
    for &(i, taken) in &trace {
        let inst = &p.instructions[i];
        if inst.tags.fe_restricted && Some(i) != key_branch {
            continue;
        }
        let pc = Program::pc_of(i);
        let guess = pred.predict(pc);
        if Some(i) == key_branch {
            let trained = !inst.tags.fe_restricted && written.contains(&guess.index);
            rows.push(StudyRow {
                iteration: rows.len(),
                prediction: (!guess.taken) as u8,
                true_bit: (!taken) as u8,
                trained,
            });
        }
        if !inst.tags.fe_restricted {
            pred.update(pc, taken, Program::pc_of(inst.target.unwrap_or(i + 1)));
        }
    }
    let recovered = rows
        .iter()
        .filter(|r| r.trained && r.prediction == r.true_bit)
        .count();
    Ok(StudyResult {
        config,
        rounds,
        key_branch,
        rows,
        recovered,
    })
}

pub fn write_study_csv(w: &mut impl Write, res: &StudyResult) -> io::Result<()> {
    writeln!(w, "iteration,prediction,true_bit")?;
    for r in &res.rows {
        writeln!(w, "{},{},{}", r.iteration, r.prediction, r.true_bit)?;
    }
    Ok(())
}
