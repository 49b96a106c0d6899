//! Text artifacts shared by the CLI and the golden fixtures.

use itertools::Itertools;
use nalgebra::Vector3;

use super::config::SelectionMethod;
use super::Scenario;
use crate::apselect::{brute_force_select, greedy_local_select, total_peb, ActivationVector};
use crate::error::{Error, Result};
use crate::estimator::RmseReport;
use crate::mathcore::SeededStream;

/// Stream id of Monte Carlo runs driven from a scenario.
pub const STREAM_MONTE_CARLO: u64 = 4;

/// `snr_db,rmse,mean_error,rmse_std_error,peb,trials`.
pub fn monte_carlo_csv(reports: &[RmseReport]) -> String {
    let mut out = String::from("snr_db,rmse,mean_error,rmse_std_error,peb,trials\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.snr_db, r.rmse, r.mean_error, r.rmse_std_error, r.peb, r.trials
        ));
    }
    out
}

/// Monte Carlo ML runs for the scenario's first UE over `snr_db`.
pub fn run_scenario_monte_carlo(scenario: &Scenario, snr_db: &[f64], trials: usize) -> Result<Vec<RmseReport>> {
    crate::estimator::run_monte_carlo(
        &scenario.monte_carlo(),
        snr_db,
        trials,
        SeededStream::new(scenario.config.seed, STREAM_MONTE_CARLO),
    )
}

/// Selection of `k_prime` APs for the UEs at their starting positions.
pub fn select_at_start(scenario: &Scenario, k_prime: usize, method: SelectionMethod) -> Result<(ActivationVector, f64)> {
    let positions: Vec<Vector3<f64>> = scenario.ues.iter().map(|u| u.initial.position).collect();
    let problem = scenario.selection_problem(&positions)?;
    let selection = match method {
        SelectionMethod::Greedy => greedy_local_select(&problem, k_prime)?.selection,
        SelectionMethod::Brute => brute_force_select(&problem, k_prime)?,
        SelectionMethod::All => ActivationVector::all(scenario.aps.len()),
        SelectionMethod::Fixed => {
            return Err(Error::InvalidInput("fixed schedules are not searched".into()));
        }
    };
    let objective = total_peb(&problem, &selection.flags)?;
    Ok((selection, objective))
}

/// `method,k_prime,objective,active_aps` with the APs separated by `;`.
pub fn selection_csv(method: SelectionMethod, selection: &ActivationVector, objective: f64) -> String {
    let name = match method {
        SelectionMethod::All => "all",
        SelectionMethod::Greedy => "greedy",
        SelectionMethod::Brute => "brute",
        SelectionMethod::Fixed => "fixed",
    };
    format!(
        "method,k_prime,objective,active_aps\n{name},{},{objective},{}\n",
        selection.budget,
        selection.active().iter().join(";")
    )
}
