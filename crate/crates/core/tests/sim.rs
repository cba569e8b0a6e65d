use fwswarm_core::sim::commander::Mode;
use fwswarm_core::sim::config::{FaultConfig, FaultKind};
use fwswarm_core::sim::runlog::Record;
use fwswarm_core::sim::{replay, run_scenario, scenarios, RunLog, SimError, Simulation, StepMode};
use std::io::BufReader;

fn temp_path(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("fwswarm-{}-{name}", std::process::id()))
}

#[test]
fn saved_log_replays_to_the_same_digest_and_report() {
    let path = temp_path("launch.ndjson");
    let file = std::fs::File::create(&path).unwrap();
    let mut cfg = scenarios::launch(5);
    cfg.duration = 40.0;
    let out = run_scenario(cfg, StepMode::Sequential, RunLog::new().with_writer(Box::new(file))).unwrap();
    let r = replay(BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(r.digest, out.digest);
    assert_eq!(r.report, out.report);
    assert_eq!(r.scenario.name, "launch5");
}

#[test]
fn truncated_log_fails_replay_without_panicking() {
    let mut cfg = scenarios::launch(2);
    cfg.duration = 5.0;
    let out = run_scenario(cfg, StepMode::Sequential, RunLog::new().keeping()).unwrap();
    let text: String = out.records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    let cut = &text[..text.len() / 2];
    assert!(replay(cut.as_bytes()).is_err());
    assert!(replay(&text.as_bytes()[text.find('\n').unwrap() + 1..]).is_err());
}

#[test]
fn killed_member_is_detected_and_its_task_reassigned() {
    let mut cfg = scenarios::coordination(7, 0.0);
    cfg.duration = 30.0;
    cfg.faults = vec![FaultConfig {
        at: 8.0,
        agent: 4,
        kind: FaultKind::Kill,
    }];
    let mut sim = Simulation::new(cfg, StepMode::Sequential).unwrap();
    sim.run().unwrap();
    assert!(sim.agent(4).is_none());
    let views: Vec<_> = sim.agents().iter().map(|a| a.mission.as_ref().unwrap()).collect();
    assert_eq!(views.len(), 6);
    for m in &views {
        assert!(m.lost.contains(&4), "lost set {:?}", m.lost);
        assert!(!m.assignment.awards.values().any(|a| *a == 4));
        assert_eq!(m.assignment, views[0].assignment);
    }
}

#[test]
fn sortie_launches_flies_and_lands_everyone() {
    let out = run_scenario(scenarios::sortie(7), StepMode::Parallel, RunLog::new().keeping()).unwrap();
    let launch = out.report.launch.as_ref().unwrap();
    let land = out.report.land.as_ref().unwrap();
    assert_eq!((launch.n, land.n), (7, 7));
    assert!(!launch.partial && !land.partial);
    assert_eq!(out.report.safety_violations, 0);
    assert!(out.report.conservation_ok);
    let patterns = out
        .records
        .iter()
        .filter(|r| matches!(r, Record::Event { name, .. } if name == "mission_start"))
        .count();
    assert!(patterns >= 7);
    let last: Vec<Mode> = {
        let mut m = std::collections::BTreeMap::new();
        for r in &out.records {
            if let Record::Sample { id, mode, .. } = r {
                m.insert(*id, *mode);
            }
        }
        m.into_values().collect()
    };
    assert!(last.iter().all(|m| *m == Mode::Standby), "{last:?}");
}

#[test]
fn invalid_scenario_is_rejected_before_running() {
    let mut cfg = scenarios::launch(3);
    cfg.duration = -1.0;
    assert!(matches!(Simulation::new(cfg, StepMode::Sequential), Err(SimError::Scenario(_))));
}

#[test]
fn stepping_is_resumable() {
    let cfg = scenarios::standoff(false, false);
    let mut whole = Simulation::new(cfg.clone(), StepMode::Sequential).unwrap();
    whole.run_until(60.0).unwrap();
    let mut parts = Simulation::new(cfg, StepMode::Sequential).unwrap();
    parts.run_until(20.0).unwrap();
    parts.run_until(60.0).unwrap();
    assert_eq!(whole.tick(), parts.tick());
    assert_eq!(whole.log().digest(), parts.log().digest());
}
