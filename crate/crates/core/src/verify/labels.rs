use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rollout, Controller, Scenario, Trajectory};
use crate::error::{dim_check, Error, Result};
use crate::mpc::{fmt_real, index_rng};
use crate::numerics::Vector;
use crate::polytope::Polytope;

/// Slack allowed on constraint checks along a trajectory, so that inputs
/// computed to solver tolerance are not flagged.
pub const LABEL_SLACK: f64 = 1e-6;

/// `+1` if every state and input of the trajectory satisfies its
/// constraints, `−1` otherwise.
pub fn mtl_label(traj: &Trajectory, x_set: &Polytope, u_set: &Polytope) -> i8 {
    let states_ok = traj.states.iter().all(|x| x_set.contains(x, LABEL_SLACK));
    let inputs_ok = traj.inputs.iter().all(|u| u_set.contains(u, LABEL_SLACK));
    if states_ok && inputs_ok {
        1
    } else {
        -1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledInitialSet {
    pub points: Vec<(Vector, i8)>,
    pub provenance: String,
    pub seed: u64,
}

impl LabeledInitialSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.points.iter().filter(|(_, l)| *l == 1).count()
    }

    pub fn positives(&self) -> impl Iterator<Item = &Vector> {
        self.points.iter().filter(|(_, l)| *l == 1).map(|(x, _)| x)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &Vector> {
        self.points.iter().filter(|(_, l)| *l == -1).map(|(x, _)| x)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.points.first().map_or(0, |(x, _)| x.len());
        let mut wr = csv::Writer::from_writer(w);
        let header: Vec<String> = (0..n).map(|i| format!("x{i}")).chain(std::iter::once("label".to_string())).collect();
        wr.write_record(&header)?;
        for (x, l) in &self.points {
            wr.write_record(x.iter().map(|v| fmt_real(*v)).chain(std::iter::once(l.to_string())))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, provenance: &str, seed: u64) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let n = rd.headers()?.len();
        dim_check(n >= 2, || "labeled set needs state columns and a label".into())?;
        let mut points = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            dim_check(rec.len() == n, || "ragged labeled row".into())?;
            let x = rec
                .iter()
                .take(n - 1)
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad number `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let label: i8 = rec[n - 1].trim().parse().map_err(|e| Error::InvalidInput(format!("bad label: {e}")))?;
            if label != 1 && label != -1 {
                return Err(Error::InvalidInput(format!("label {label} is not ±1")));
            }
            points.push((x, label));
        }
        Ok(Self { points, provenance: provenance.to_string(), seed })
    }
}

/// Which family of initial states a set is drawn from. Each family has its
/// own random streams, so the same family and seed give the same initial
/// states whatever controller is labeled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetKind {
    Fit,
    Test,
    Validation,
}

impl SetKind {
    fn stream_base(self) -> u64 {
        match self {
            SetKind::Fit => 1 << 40,
            SetKind::Test => 2 << 40,
            SetKind::Validation => 3 << 40,
        }
    }
}

pub fn initial_states(s: &Scenario, kind: SetKind, n: usize, seed: u64) -> Vec<Vector> {
    (0..n as u64).map(|i| s.sample_box.sample(&mut index_rng(seed, kind.stream_base() + i))).collect()
}

/// Closed-loop labels for `n` initial states of the given family. A rollout
/// on which the controller fails is labeled `−1`.
pub fn label_initial_states<C: Controller + Sync + ?Sized>(controller: &C, s: &Scenario, kind: SetKind, n: usize, seed: u64, provenance: &str) -> Result<LabeledInitialSet> {
    if n == 0 {
        return Err(Error::PreconditionViolated("labeled set size must be at least 1".into()));
    }
    let states = initial_states(s, kind, n, seed);
    let points = states
        .into_par_iter()
        .map(|x0| {
            let label = match rollout(&s.system, controller, &x0, s.k_end) {
                Ok(t) => mtl_label(&t, &s.state_set, &s.input_set),
                Err(Error::ControllerInfeasible { .. }) => -1,
                Err(e) => return Err(e),
            };
            Ok((x0, label))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledInitialSet { points, provenance: provenance.to_string(), seed })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSizes {
    pub g: usize,
    pub t: usize,
    pub v: usize,
}

#[derive(Clone, Debug)]
pub struct LabeledSets {
    pub g: LabeledInitialSet,
    pub t: LabeledInitialSet,
    pub v: LabeledInitialSet,
}

/// The fitting set `G`, test set `T` and validation set `V` for one
/// controller.
pub fn generate_labeled_sets<C: Controller + Sync + ?Sized>(controller: &C, s: &Scenario, sizes: SetSizes, seed: u64, provenance: &str) -> Result<LabeledSets> {
    Ok(LabeledSets {
        g: label_initial_states(controller, s, SetKind::Fit, sizes.g, seed, provenance)?,
        t: label_initial_states(controller, s, SetKind::Test, sizes.t, seed, provenance)?,
        v: label_initial_states(controller, s, SetKind::Validation, sizes.v, seed, provenance)?,
    })
}
