//! PEB-aware AP selection: greedy plus local search against brute force at a
//! few UE placements, then a tracking episode with five of eight APs.

use dmimo::apselect::{brute_force_select, greedy_local_select, total_peb};
use dmimo::scenario::{run_tracking_episode, Scenario, ScenarioConfig, SelectionMethod};
use nalgebra::Vector3;

fn main() -> dmimo::Result<()> {
    let base = ScenarioConfig::canonical();
    let s = Scenario::build(&base, None)?;
    let placements = [
        vec![Vector3::new(2.0, 2.0, 1.0)],
        vec![Vector3::new(8.0, 5.0, 1.0), Vector3::new(2.0, 5.5, 1.0)],
        vec![Vector3::new(5.0, 3.5, 1.0), Vector3::new(9.0, 1.0, 1.0), Vector3::new(1.0, 6.0, 1.0)],
    ];
    for ues in &placements {
        let problem = s.selection_problem(ues)?;
        for k in [2, 3] {
            let g = greedy_local_select(&problem, k)?;
            let b = brute_force_select(&problem, k)?;
            println!(
                "{} UE(s), K'={k}: greedy {:?} ({:.5} m, {} swaps), brute {:?} ({:.5} m)",
                ues.len(),
                g.selection.active(),
                total_peb(&problem, &g.selection.flags)?,
                g.objective_trace.len() - 1,
                b.active(),
                total_peb(&problem, &b.flags)?
            );
        }
    }

    let all = run_tracking_episode(&s)?.mean_rmse();
    let mut cfg = base;
    cfg.schedule.method = SelectionMethod::Greedy;
    cfg.schedule.k_prime = Some(5);
    let k5 = run_tracking_episode(&Scenario::build(&cfg, None)?)?.mean_rmse();
    println!("tracking mean RMSE: all 8 APs {all:.4} m, greedy K'=5 {k5:.4} m");
    Ok(())
}
