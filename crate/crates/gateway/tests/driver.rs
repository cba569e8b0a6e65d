use fwswarm_core::gcs::{AlertKind, CommandState, FailsafePolicy, HighLevelCommand, Severity, WorkflowState};
use fwswarm_core::geometry::Vec2;
use fwswarm_core::planning::PatternName;
use fwswarm_core::sim::config::{FaultConfig, FaultKind, ScenarioConfig};
use fwswarm_core::sim::runlog::Record;
use fwswarm_core::sim::{scenarios, RunLog, Simulation, StepMode};
use fwswarm_gateway::{ClientMessage, Driver, Outgoing, Route, ServerMessage, PROTOCOL_VERSION};

fn driver(cfg: ScenarioConfig) -> Driver {
    let sim = Simulation::with_log(cfg, StepMode::Sequential, RunLog::new().keeping()).unwrap();
    Driver::new(sim, 2.0)
}

fn run_for(d: &mut Driver, seconds: f64) -> Vec<Outgoing> {
    let end = d.sim().time() + seconds;
    let mut out = Vec::new();
    while d.sim().time() < end - 1e-9 && !d.is_finished() {
        out.extend(d.step().unwrap());
    }
    out
}

fn command(commands: Vec<HighLevelCommand>, failsafe: FailsafePolicy) -> ClientMessage {
    ClientMessage::Command {
        v: PROTOCOL_VERSION,
        request: Some("req-1".into()),
        commands,
        failsafe,
    }
}

fn idle_fleet(n: usize, duration: f64) -> ScenarioConfig {
    let mut cfg = scenarios::launch(n);
    cfg.script.clear();
    cfg.duration = duration;
    cfg
}

#[test]
fn snapshots_match_the_run_log() {
    let mut cfg = scenarios::formation(7, 1.5);
    cfg.duration = 30.0;
    let mut d = driver(cfg);
    let out = run_for(&mut d, 30.0);
    let records = d.sim().log().kept().unwrap().to_vec();
    let mut checked = 0;
    let mut last_seq = 0;
    let mut last_t = f64::NEG_INFINITY;
    for o in &out {
        let ServerMessage::Snapshot { seq, snapshot, .. } = &o.msg else {
            continue;
        };
        assert_eq!(o.to, Route::All);
        assert_eq!(*seq, last_seq + 1);
        assert!(snapshot.time > last_t);
        last_seq = *seq;
        last_t = snapshot.time;
        for a in &snapshot.agents {
            let sample = records
                .iter()
                .find_map(|r| match r {
                    Record::Sample {
                        t,
                        id,
                        mode,
                        state,
                        group,
                        role,
                        battery,
                        desired,
                        ..
                    } if *t == snapshot.time && *id == a.id => Some((*mode, *state, *group, *role, *battery, *desired)),
                    _ => None,
                })
                .expect("a sample at every snapshot time");
            let (mode, state, group, role, battery, desired) = sample;
            assert_eq!(a.formation_error, desired.map(|d| d.distance(state.position)));
            assert_eq!(a.position, state.position);
            assert_eq!(a.altitude, state.altitude);
            assert_eq!(a.airspeed, state.airspeed);
            assert_eq!(a.course, state.course);
            assert_eq!((a.mode, a.group, a.role, a.battery), (mode, group, role, battery));
            checked += 1;
        }
    }
    assert_eq!(last_seq, 60, "2 Hz over 30 s");
    assert_eq!(checked, 7 * 60);
}

#[test]
fn workflow_dispatches_one_command_at_a_time() {
    let mut cfg = scenarios::formation(3, 0.0);
    cfg.script.clear();
    let mut d = driver(cfg);
    let wf = vec![
        HighLevelCommand::Formation {
            pattern: PatternName::Vee,
            waypoints: vec![Vec2::new(0.0, 1000.0), Vec2::new(3000.0, 1000.0)],
            speed: 17.0,
            altitude: 100.0,
        },
        HighLevelCommand::SetPattern { pattern: PatternName::Line },
        HighLevelCommand::Land { lead: 30.0, spacing: 20.0 },
    ];
    let first = d.handle(7, command(wf, FailsafePolicy::AbortQueue));
    assert!(first.iter().any(|o| matches!(&o.msg,
        ServerMessage::WorkflowStatus { request: Some(r), state: WorkflowState::Queued, .. } if r == "req-1")));
    let out = run_for(&mut d, 60.0);
    let statuses: Vec<(usize, CommandState, f64)> = out
        .iter()
        .filter_map(|o| match &o.msg {
            ServerMessage::CommandStatus { index, state, time, .. } => Some((*index, *state, *time)),
            _ => None,
        })
        .collect();
    for k in 0..3 {
        let acked = statuses.iter().find(|s| s.0 == k && s.1 == CommandState::Acked).expect("acked").2;
        if k + 1 < 3 {
            let sent = statuses.iter().find(|s| s.0 == k + 1 && s.1 == CommandState::Sent).expect("sent").2;
            assert!(sent >= acked, "command {} sent at {sent} before {k} acked at {acked}", k + 1);
        }
        assert_eq!(statuses.iter().filter(|s| s.0 == k && s.1 == CommandState::Acked).count(), 1);
    }
    assert!(out.iter().any(|o| matches!(o.msg, ServerMessage::WorkflowStatus { state: WorkflowState::Completed, .. })));
}

#[test]
fn disconnect_pauses_and_a_new_session_resumes() {
    let mut d = driver(idle_fleet(2, 100.0));
    d.connect(1);
    d.handle(1, command(vec![HighLevelCommand::Launch { lead: 0.0, spacing: 5.0 }], FailsafePolicy::AbortQueue));
    let paused = d.disconnect(1);
    assert!(paused
        .iter()
        .any(|o| matches!(o.msg, ServerMessage::WorkflowStatus { state: WorkflowState::Paused, .. })));
    let idle = run_for(&mut d, 10.0);
    assert!(!idle.iter().any(|o| matches!(o.msg, ServerMessage::CommandStatus { .. })));
    let resumed = d.connect(2);
    assert!(matches!(resumed[0], Outgoing { to: Route::Session(2), msg: ServerMessage::Snapshot { .. } }));
    assert!(resumed
        .iter()
        .any(|o| matches!(o.msg, ServerMessage::WorkflowStatus { state: WorkflowState::Queued, .. })));
    let out = run_for(&mut d, 10.0);
    assert!(out.iter().any(|o| matches!(o.msg, ServerMessage::WorkflowStatus { state: WorkflowState::Completed, .. })));
}

#[test]
fn invalid_workflow_is_rejected_to_its_sender_only() {
    let mut d = driver(idle_fleet(2, 20.0));
    let out = d.handle(3, command(Vec::new(), FailsafePolicy::AbortQueue));
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].to, Route::Session(3));
    assert!(matches!(&out[0].msg, ServerMessage::Error { request: Some(r), .. } if r == "req-1"));
    let bad = d.handle(
        3,
        command(
            vec![HighLevelCommand::Formation {
                pattern: PatternName::Line,
                waypoints: Vec::new(),
                speed: 17.0,
                altitude: 100.0,
            }],
            FailsafePolicy::AbortQueue,
        ),
    );
    assert!(matches!(bad[0].msg, ServerMessage::Error { .. }));
}

#[test]
fn failsafe_agent_raises_a_critical_alert() {
    let mut cfg = scenarios::formation(3, 0.0);
    cfg.duration = 20.0;
    cfg.faults = vec![FaultConfig {
        at: 5.0,
        agent: 2,
        kind: FaultKind::Fault,
    }];
    let mut d = driver(cfg);
    let out = run_for(&mut d, 20.0);
    let raised: Vec<_> = out
        .iter()
        .filter_map(|o| match &o.msg {
            ServerMessage::Alert { raised: true, alert, time, .. } if alert.kind == AlertKind::Failsafe => Some((alert.clone(), *time)),
            _ => None,
        })
        .collect();
    assert_eq!(raised.len(), 1, "raised once, not on every snapshot");
    assert_eq!(raised[0].0.agent, 2);
    assert_eq!(raised[0].0.severity, Severity::Critical);
    assert!(raised[0].1 >= 5.0);
}

#[test]
fn submissions_after_the_end_are_refused() {
    let mut d = driver(idle_fleet(1, 1.0));
    run_for(&mut d, 2.0);
    let last = d.step().unwrap();
    assert!(matches!(last[0].msg, ServerMessage::Snapshot { .. }));
    assert!(d.step().unwrap().is_empty());
    let out = d.handle(1, command(vec![HighLevelCommand::Rtl], FailsafePolicy::RtlAll));
    assert!(matches!(out[0].msg, ServerMessage::Error { .. }));
}
