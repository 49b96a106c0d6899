//! Tracks one UE around the canonical eight-AP room with every AP active and
//! prints the episode summary plus the first few track rows.

use dmimo::scenario::{run_tracking_episode, Scenario, ScenarioConfig};

fn main() -> dmimo::Result<()> {
    let scenario = Scenario::build(&ScenarioConfig::canonical(), None)?;
    let log = run_tracking_episode(&scenario)?;
    print!("{}", log.summary().lines().filter(|l| !l.starts_with("active_ap_counts")).map(|l| format!("{l}\n")).collect::<String>());
    for line in log.track_csv().lines().take(6) {
        println!("{line}");
    }
    Ok(())
}
