//! PEB-aware AP activation: total PEB over the predicted UE positions, greedy
//! growth, swap-based local search and an exhaustive oracle.

use itertools::Itertools;
use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fim::peb_matrix;

/// Largest number of subsets the exhaustive search will enumerate.
pub const BRUTE_FORCE_BUDGET: u128 = 1_000_000;

/// Global-frame position FIMs indexed `[ue][ap]`, fixed for one scheduling
/// instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionProblem {
    fims: Vec<Vec<Matrix3<f64>>>,
    ap_count: usize,
}

impl SelectionProblem {
    pub fn new(fims: Vec<Vec<Matrix3<f64>>>) -> Result<Self> {
        let ap_count = fims.first().map_or(0, |r| r.len());
        if fims.is_empty() || ap_count == 0 {
            return Err(Error::EmptyApSet);
        }
        for row in &fims {
            if row.len() != ap_count {
                return Err(Error::DimensionMismatch {
                    expected: ap_count,
                    actual: row.len(),
                    context: "per-UE FIM list",
                });
            }
        }
        Ok(Self { fims, ap_count })
    }

    pub fn ap_count(&self) -> usize {
        self.ap_count
    }

    pub fn ue_count(&self) -> usize {
        self.fims.len()
    }

    pub fn fims(&self) -> &[Vec<Matrix3<f64>>] {
        &self.fims
    }

    fn objective_of(&self, active: &[usize]) -> f64 {
        let mut total = 0.0;
        for row in &self.fims {
            let f: Matrix3<f64> = active.iter().map(|&k| row[k]).sum();
            match peb_matrix(&f) {
                Ok(p) => total += p,
                Err(_) => return f64::INFINITY,
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivationVector {
    pub flags: Vec<bool>,
    pub budget: usize,
}

impl ActivationVector {
    pub fn from_indices(ap_count: usize, active: &[usize]) -> Result<Self> {
        let mut flags = vec![false; ap_count];
        for &k in active {
            if k >= ap_count {
                return Err(Error::InvalidInput(format!("AP index {k} out of range")));
            }
            flags[k] = true;
        }
        let budget = flags.iter().filter(|&&f| f).count();
        Ok(Self { flags, budget })
    }

    pub fn all(ap_count: usize) -> Self {
        Self {
            flags: vec![true; ap_count],
            budget: ap_count,
        }
    }

    /// Active AP indices in ascending order.
    pub fn active(&self) -> Vec<usize> {
        self.flags.iter().enumerate().filter(|(_, &f)| f).map(|(k, _)| k).collect()
    }
}

/// Σ_m PEB(Σ_k g_k F_{k,m}); +∞ when some UE's joint FIM is singular.
pub fn total_peb(problem: &SelectionProblem, flags: &[bool]) -> Result<f64> {
    if flags.len() != problem.ap_count {
        return Err(Error::DimensionMismatch {
            expected: problem.ap_count,
            actual: flags.len(),
            context: "activation flags",
        });
    }
    let active: Vec<usize> = flags.iter().enumerate().filter(|(_, &f)| f).map(|(k, _)| k).collect();
    if active.is_empty() {
        return Err(Error::EmptyApSet);
    }
    Ok(problem.objective_of(&active))
}

fn check_budget(problem: &SelectionProblem, k_prime: usize) -> Result<()> {
    if k_prime == 0 || k_prime > problem.ap_count {
        return Err(Error::InvalidInput(format!(
            "AP budget {k_prime} must lie in 1..={}",
            problem.ap_count
        )));
    }
    Ok(())
}

/// Index of the smallest value, lowest index on ties.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Grows the active set one AP at a time, each time adding the AP that
/// minimizes the objective. If no single AP localizes every UE, the search
/// starts from the best pair instead.
pub fn greedy_select(problem: &SelectionProblem, k_prime: usize) -> Result<ActivationVector> {
    check_budget(problem, k_prime)?;
    let k = problem.ap_count;
    let singles: Vec<f64> = (0..k).into_par_iter().map(|a| problem.objective_of(&[a])).collect();
    let mut chosen = vec![argmin(&singles)];
    if singles[chosen[0]].is_infinite() && k_prime >= 2 {
        let pairs: Vec<Vec<usize>> = (0..k).combinations(2).collect();
        let values: Vec<f64> = pairs.par_iter().map(|p| problem.objective_of(p)).collect();
        chosen = pairs[argmin(&values)].clone();
    }
    while chosen.len() < k_prime {
        let candidates: Vec<usize> = (0..k).filter(|a| !chosen.contains(a)).collect();
        let values: Vec<f64> = candidates
            .par_iter()
            .map(|&a| {
                let mut set = chosen.clone();
                set.push(a);
                problem.objective_of(&set)
            })
            .collect();
        chosen.push(candidates[argmin(&values)]);
    }
    chosen.sort_unstable();
    ActivationVector::from_indices(k, &chosen)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSearchOutcome {
    pub selection: ActivationVector,
    /// Objective of the initial set followed by one entry per accepted swap.
    pub objective_trace: Vec<f64>,
}

/// First-improvement swap search: inactive APs are scanned in ascending
/// order as the incoming AP, active ones in ascending order as the outgoing
/// AP, and a swap is accepted only when it strictly lowers the objective.
pub fn local_search(problem: &SelectionProblem, initial: &ActivationVector) -> Result<LocalSearchOutcome> {
    let mut current = total_peb(problem, &initial.flags)?;
    let mut active = initial.active();
    let mut trace = vec![current];
    'outer: loop {
        for incoming in 0..problem.ap_count {
            if active.contains(&incoming) {
                continue;
            }
            for slot in 0..active.len() {
                let mut candidate = active.clone();
                candidate[slot] = incoming;
                candidate.sort_unstable();
                let value = problem.objective_of(&candidate);
                if value < current {
                    active = candidate;
                    current = value;
                    trace.push(value);
                    continue 'outer;
                }
            }
        }
        break;
    }
    Ok(LocalSearchOutcome {
        selection: ActivationVector::from_indices(problem.ap_count, &active)?,
        objective_trace: trace,
    })
}

/// Greedy initialization refined by local search.
pub fn greedy_local_select(problem: &SelectionProblem, k_prime: usize) -> Result<LocalSearchOutcome> {
    let start = greedy_select(problem, k_prime)?;
    local_search(problem, &start)
}

/// C(n, k) with saturation.
pub fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Exhaustive optimum; ties go to the lexicographically first subset.
pub fn brute_force_select(problem: &SelectionProblem, k_prime: usize) -> Result<ActivationVector> {
    check_budget(problem, k_prime)?;
    let combinations = binomial(problem.ap_count, k_prime);
    if combinations > BRUTE_FORCE_BUDGET {
        return Err(Error::CombinatorialBudget {
            combinations,
            budget: BRUTE_FORCE_BUDGET,
        });
    }
    let subsets: Vec<Vec<usize>> = (0..problem.ap_count).combinations(k_prime).collect();
    let values: Vec<f64> = subsets.par_iter().map(|s| problem.objective_of(s)).collect();
    ActivationVector::from_indices(problem.ap_count, &subsets[argmin(&values)])
}

/// CSV rows `t,ap_id,active` for an activation timeline.
pub fn activation_csv(timeline: &[ActivationVector]) -> String {
    let mut out = String::from("t,ap_id,active\n");
    for (t, a) in timeline.iter().enumerate() {
        for (k, f) in a.flags.iter().enumerate() {
            out.push_str(&format!("{t},{k},{}\n", u8::from(*f)));
        }
    }
    out
}
