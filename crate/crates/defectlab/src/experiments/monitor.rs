//! Particle densities per speed class along a time grid, with a verdict on
//! which class, if any, persists.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{window_sample, Configuration};
use crate::measures::MeasureSpec;
use crate::particles::{project, ParticleSystem};
use crate::rng::stream;
use crate::rules::Dynamics;

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorRow {
    pub t: u64,
    pub total: f64,
    /// One density per speed class, in the system's class order.
    pub classes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// One class carries more than the share threshold of the particles.
    Dominant(String),
    /// Total density is below the floor.
    Vanishing,
    Undecided,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Dominant(c) => f.write_str(c),
            Verdict::Vanishing => f.write_str("none"),
            Verdict::Undecided => f.write_str("undecided"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub share: f64,
    pub floor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { share: 0.99, floor: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorReport {
    pub classes: Vec<String>,
    pub rows: Vec<MonitorRow>,
    pub verdict: Verdict,
}

impl MonitorReport {
    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn last(&self) -> &MonitorRow {
        self.rows.last().expect("monitor has at least one row")
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("t,total");
        for c in &self.classes {
            out += &format!(",{c}");
        }
        out.push('\n');
        for r in &self.rows {
            out += &format!("{},{:.9}", r.t, r.total);
            for d in &r.classes {
                out += &format!(",{d:.9}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn verdict(classes: &[String], row: &MonitorRow, th: Thresholds) -> Verdict {
    if row.total < th.floor {
        return Verdict::Vanishing;
    }
    classes
        .iter()
        .zip(&row.classes)
        .find(|(_, &d)| d > th.share * row.total)
        .map_or(Verdict::Undecided, |(c, _)| Verdict::Dominant(c.clone()))
}

/// Averages over `n_traj` windows of `cells` exact cells.
#[allow(clippy::too_many_arguments)]
pub fn qualitative_monitor(
    dynamics: &Dynamics,
    ps: &ParticleSystem,
    measure: &MeasureSpec,
    t_grid: &[u64],
    n_traj: usize,
    cells: usize,
    seed: u64,
    thresholds: Thresholds,
) -> Result<MonitorReport> {
    if t_grid.is_empty() || n_traj == 0 || cells == 0 {
        return Err(Error::Infeasible("monitor needs a grid, trajectories and cells".into()));
    }
    if ps.morphism().input().size() != dynamics.alphabet().size() {
        return Err(Error::AlphabetMismatch { expected: dynamics.alphabet().size(), found: ps.morphism().input().size() });
    }
    let classes: Vec<String> = ps.classes().iter().map(|c| c.name.clone()).collect();
    let mut class_of = vec![None; ps.particles().len() + 1];
    for (i, c) in ps.classes().iter().enumerate() {
        for &m in &c.members {
            class_of[m as usize] = Some(i);
        }
    }
    let t_max = *t_grid.last().unwrap() as usize;
    let offs = ps.morphism().offsets();
    let margin = dynamics.radius() * t_max + offs.start().unsigned_abs().max(offs.end().unsigned_abs()) as usize;
    let per_traj: Vec<Vec<(u64, Vec<u64>)>> = (0..n_traj)
        .into_par_iter()
        .map(|i| -> Result<Vec<(u64, Vec<u64>)>> {
            let mut rng = stream(seed, i as u64);
            let c = window_sample(measure, dynamics.alphabet(), cells, margin, &mut rng)?;
            let mut out = Vec::with_capacity(t_grid.len());
            let mut failure = None;
            let mut count = |s: usize, c: &Configuration| {
                if failure.is_some() || t_grid.binary_search(&(s as u64)).is_err() {
                    return;
                }
                match project(ps, c) {
                    Ok(p) => {
                        let mut per = vec![0u64; classes.len()];
                        let mut total = 0;
                        for j in 0..cells as i64 {
                            let s = p.at(j) as usize;
                            if s != 0 {
                                total += 1;
                                if let Some(k) = class_of[s] {
                                    per[k] += 1;
                                }
                            }
                        }
                        out.push((total, per));
                    }
                    Err(e) => failure = Some(e),
                }
            };
            count(0, &c);
            dynamics.iterate(c, t_max, &mut rng, &mut count)?;
            match failure {
                Some(e) => Err(e),
                None => Ok(out),
            }
        })
        .collect::<Result<_>>()?;
    let norm = (n_traj * cells) as f64;
    let rows: Vec<MonitorRow> = t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| MonitorRow {
            t,
            total: per_traj.iter().map(|r| r[k].0).sum::<u64>() as f64 / norm,
            classes: (0..classes.len()).map(|c| per_traj.iter().map(|r| r[k].1[c]).sum::<u64>() as f64 / norm).collect(),
        })
        .collect();
    let verdict = verdict(&classes, rows.last().unwrap(), thresholds);
    Ok(MonitorReport { classes, rows, verdict })
}
