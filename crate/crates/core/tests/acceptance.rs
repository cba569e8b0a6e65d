//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use fwswarm_core::airframe::{step_dynamics, PlatformConfig, VehicleState, WindField};
use fwswarm_core::coordination::{allocate, assignment_cost, CoordinationGroup, Task, TaskKind};
use fwswarm_core::geometry::Vec2;
use fwswarm_core::guidance::{Guidance, GuidanceGains, PathSegment};
use fwswarm_core::lowlevel::{speed_height_control, ControlTables, VirtualControls};
use fwswarm_core::planning::Role;
use fwswarm_core::sim::commander::{CommanderState, Event, Mode, Outcome};
use fwswarm_core::sim::config::{FaultConfig, FaultKind, ScenarioConfig};
use fwswarm_core::sim::metrics::{rate_literal, rate_telescoped};
use fwswarm_core::sim::runlog::{replay, Record, RunLog, RUNLOG_VERSION};
use fwswarm_core::sim::scenarios::{self, STANDOFF_RADIUS};
use fwswarm_core::sim::targets::{line_of_sight, target_at};
use fwswarm_core::sim::{run_scenario, RunOutput, Simulation, StepMode};
use fwswarm_core::swarmnet::message::*;
use fwswarm_core::swarmnet::{decode, encode, SwarmMessage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

struct Suite {
    results: Vec<(String, bool, String)>,
    conservation: Vec<(String, bool)>,
}

impl Suite {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((name.to_string(), pass, detail));
    }

    fn run(&mut self, cfg: ScenarioConfig, mode: StepMode) -> (RunOutput, f64) {
        self.run_with(cfg, mode, RunLog::new())
    }

    fn run_with(&mut self, cfg: ScenarioConfig, mode: StepMode, log: RunLog) -> (RunOutput, f64) {
        let name = cfg.name.clone();
        let start = Instant::now();
        let out = run_scenario(cfg, mode, log).expect("scenario runs");
        let wall = start.elapsed().as_secs_f64();
        self.conservation.push((name, out.report.conservation_ok));
        (out, wall)
    }
}

fn launch_rate(s: &mut Suite) {
    let (out, wall) = s.run(scenarios::launch(21), StepMode::Sequential);
    let r = out.report.launch.expect("launch events");
    let pass = r.n == 21 && !r.partial && (r.telescoped - 5.25).abs() < 0.01 && (r.telescoped - 5.2586).abs() < 1e-3 && wall < 5.0;
    s.check(
        "launch_rate",
        pass,
        format!("N = {} rate = {:.4} s (literal {:.4}), wall {:.2} s", r.n, r.telescoped, r.literal, wall),
    );
}

fn metric_identity(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let base = scenarios::launch(3);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for _ in 0..1000 {
        let n = rng.random_range(1..=40usize);
        let mut cfg = base.clone();
        cfg.fleet = (1..=n as u8)
            .map(|id| fwswarm_core::sim::config::FleetEntry {
                id,
                platform: base.fleet[0].platform.clone(),
                home: Vec2::ZERO,
            })
            .collect();
        let mut launch: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..600.0)).collect();
        let mut land: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..900.0)).collect();
        launch.sort_by(f64::total_cmp);
        land.sort_by(f64::total_cmp);
        let mut log = RunLog::new().with_writer(Box::new(Vec::new())).keeping();
        log.append(Record::Header {
            version: RUNLOG_VERSION,
            scenario: Box::new(cfg),
        })
        .unwrap();
        for (i, tau) in launch.iter().enumerate() {
            log.append(Record::Aloft { t: *tau, id: i as u8 + 1, tau: *tau }).unwrap();
        }
        let offset = launch.last().copied().unwrap_or(0.0);
        for (i, tau) in land.iter().enumerate() {
            log.append(Record::Touchdown {
                t: offset + tau,
                id: i as u8 + 1,
                tau: *tau,
            })
            .unwrap();
        }
        let text: String = log.take_kept().iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
        let replayed = replay(text.as_bytes()).unwrap();
        for (taus, rep) in [(&launch, replayed.report.launch), (&land, replayed.report.land)] {
            let lit = rate_literal(taus).unwrap();
            let tel = rate_telescoped(taus).unwrap();
            let rep = rep.unwrap();
            let err = (lit - tel).abs() / tel.abs().max(1.0);
            worst = worst.max(err);
            ok &= err <= 1e-12 && rep.literal == lit && rep.telescoped == tel;
        }
    }
    s.check("metric_identity", ok, format!("1000 logs, worst relative gap {worst:.2e}"));
}

fn formation(s: &mut Suite) {
    let (calm, wall_calm) = s.run(scenarios::formation(21, 0.0), StepMode::Parallel);
    let a = calm.report.ampe.unwrap_or(f64::NAN);
    s.check(
        "formation_ampe_zero_wind",
        a < 2.0 && wall_calm < 60.0,
        format!("21 agents, 3 groups: AMPE {a:.3} m over {} samples, wall {wall_calm:.1} s", calm.report.ampe_samples),
    );
    let (gust, wall_gust) = s.run(scenarios::formation(21, scenarios::DEFAULT_GUST_STDDEV), StepMode::Parallel);
    let g = gust.report.ampe.unwrap_or(f64::NAN);
    s.check(
        "formation_ampe_gusts",
        g < 15.0 && wall_gust < 60.0,
        format!("gust stddev 1.5 m/s: AMPE {g:.3} m, wall {wall_gust:.1} s"),
    );
    let mut values = Vec::new();
    let mut slowest: f64 = 0.0;
    for n in [3, 7, 10, 14, 21] {
        let (out, wall) = s.run(scenarios::formation(n, scenarios::DEFAULT_GUST_STDDEV), StepMode::Parallel);
        values.push((n, out.report.ampe.unwrap_or(f64::NAN)));
        slowest = slowest.max(wall);
    }
    let v: Vec<f64> = values.iter().map(|x| x.1).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let spread = (v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)) / mean;
    s.check(
        "formation_ampe_flat_in_n",
        spread < 0.5 && slowest < 60.0,
        format!(
            "AMPE by N {}; (max - min) / mean = {spread:.2}",
            values.iter().map(|(n, a)| format!("{n}: {a:.2}")).collect::<Vec<_>>().join(", ")
        ),
    );
}

/// Worst |d - r| and worst phase-gap error (deg) over `[from, to]`.
fn standoff_errors(cfg: ScenarioConfig, from: f64, to: f64) -> (f64, f64) {
    let mut sim = Simulation::new(cfg.clone(), StepMode::Sequential).unwrap();
    let (mut dist, mut gap): (f64, f64) = (0.0, 0.0);
    while !sim.is_finished() {
        sim.step().unwrap();
        let t = sim.time();
        if t < from || t > to || sim.tick() % 10 != 0 {
            continue;
        }
        let target = target_at(&cfg.targets[0], t).position;
        let mut phases = Vec::new();
        for a in sim.agents() {
            let p = a.state.position;
            dist = dist.max((p.distance(target) - STANDOFF_RADIUS).abs());
            phases.push((p - target).angle());
        }
        phases.sort_by(f64::total_cmp);
        let n = phases.len();
        for i in 0..n {
            let g = if i + 1 < n { phases[i + 1] - phases[i] } else { phases[0] + 2.0 * PI - phases[i] };
            gap = gap.max((g.to_degrees() - 360.0 / n as f64).abs());
        }
    }
    (dist, gap)
}

fn standoff(s: &mut Suite) {
    for (name, cfg, from) in [
        ("standoff_static", scenarios::standoff(false, false), 150.0),
        ("standoff_moving", scenarios::standoff(true, false), 300.0),
    ] {
        let to = cfg.duration;
        let (d, g) = standoff_errors(cfg, from, to);
        s.check(
            name,
            d < 10.0 && g < 10.0,
            format!("t in [{from}, {to}] s: max |d - 100| = {d:.2} m, max phase-gap error = {g:.2} deg"),
        );
    }
    let cfg = scenarios::standoff(false, true);
    let footprint = cfg.sensor.footprint;
    let shelters = cfg.targets[0].shelters.clone();
    let mut sim = Simulation::new(cfg.clone(), StepMode::Sequential).unwrap();
    let (mut occluded, mut held) = (BTreeMap::<u8, u64>::new(), true);
    let mut worst: f64 = 0.0;
    while !sim.is_finished() {
        sim.step().unwrap();
        let t = sim.time();
        let truth = target_at(&cfg.targets[0], t).position;
        for a in sim.agents() {
            let p = a.state.position;
            let hidden = p.distance(truth) <= footprint && !line_of_sight(p, truth, &shelters);
            if !hidden || a.detecting.contains(&1) || a.role() != Some(Role::Tracker) {
                continue;
            }
            *occluded.entry(a.id).or_default() += 1;
            match a.fusion.estimate(t) {
                Some((_, est)) => worst = worst.max(est.position.distance(truth)),
                None => held = false,
            }
        }
    }
    let steps: u64 = occluded.values().sum();
    s.check(
        "standoff_shelter",
        steps > 0 && held && worst < 20.0,
        format!(
            "occluded agent-steps {occluded:?}; fused estimate {} throughout, worst error {worst:.2} m",
            if held { "held" } else { "dropped" }
        ),
    );
}

fn path_following(s: &mut Suite) {
    let p = PlatformConfig::fixed_wing();
    let g = Guidance::new(&p, GuidanceGains::default());
    let seg = PathSegment::straight(Vec2::ZERO, Vec2::new(20_000.0, 0.0), p.cruise_speed, 100.0);
    let mut state = VehicleState::level(Vec2::new(0.0, 100.0), 100.0, p.cruise_speed, 0.0);
    let wind = WindField::calm();
    let fuzzy = &ControlTables::defaults().fuzzy;
    let dt = 0.05;
    let (mut settled, mut after) = (None, 0.0f64);
    let mut cmd = g.follow_segment(&state, &seg).unwrap();
    for k in 0..6000 {
        let t = k as f64 * dt;
        if k % 2 == 0 {
            cmd = g.follow_segment(&state, &seg).unwrap();
        }
        let (pitch, throttle) = speed_height_control(&state, cmd.desired_speed, cmd.desired_altitude, fuzzy, &p).unwrap();
        let vc = VirtualControls {
            roll: cmd.roll_setpoint(&state, &p),
            pitch,
            throttle,
            yaw_trim: 0.0,
        };
        state = step_dynamics(&p, &state, &vc, &wind, dt).unwrap().state;
        let e = seg.cross_track(state.position).abs();
        if settled.is_none() && e < 5.0 {
            settled = Some(t + dt);
        }
        if t >= 60.0 {
            after = after.max(e);
        }
    }
    let settle = settled.unwrap_or(f64::INFINITY);
    s.check(
        "path_following",
        settle < 60.0 && after < 5.0,
        format!("100 m offset: |e| < 5 m after {settle:.2} s, max |e| after 60 s = {after:.3} m"),
    );
    let gains = GuidanceGains::default();
    let at = |y: f64| VehicleState::level(Vec2::new(50.0, y), 100.0, p.cruise_speed, 0.3);
    let on = g.vf_straight(&at(0.0), &seg).unwrap().desired_course;
    let off = g.vf_straight(&at(1.0 / gains.k_vf), &seg).unwrap().desired_course;
    let pass = on == 0.0 && (off + gains.chi_inf / 2.0).abs() <= 1e-15;
    s.check(
        "vf_straight_closed_form",
        pass,
        format!("course at e = 0: {on}; at e = 1/k_vf: {off:.15} (expected {:.15})", -gains.chi_inf / 2.0),
    );
}

fn coordination(s: &mut Suite) {
    let mut worst: f64 = 0.0;
    let mut all_converged = true;
    let mut all_once = true;
    for seed in 1..=50u64 {
        let mut cfg = scenarios::coordination(7, 0.2);
        cfg.seed = seed;
        let issued = cfg.script[0].at;
        let mut sim = Simulation::new(cfg, StepMode::Sequential).unwrap();
        let mut converged = None;
        while !sim.is_finished() {
            sim.step().unwrap();
            let views: Vec<_> = sim
                .agents()
                .iter()
                .map(|a| a.mission.as_ref().map(|m| (m.assignment.clone(), m.group.members.clone())))
                .collect();
            let same = views.iter().all(|v| v.is_some() && *v == views[0]);
            match (same, converged) {
                (true, None) => converged = Some(sim.time() - issued),
                (false, Some(_)) => converged = None,
                _ => {}
            }
        }
        let c = converged.unwrap_or(f64::INFINITY);
        worst = worst.max(c);
        all_converged &= c <= 10.0;
        for a in sim.agents() {
            let m = a.mission.as_ref().unwrap();
            all_once &= m.assignment.is_exactly_once(&m.task_set(), &m.alive_members());
        }
    }
    s.check(
        "coordination_convergence",
        all_converged,
        format!("7 agents, 20% loss, 50 seeds: worst time to identical assignments {worst:.2} s"),
    );
    s.check("coordination_exactly_once", all_once, "every member's view at quiescence, 50 seeds".into());

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=7usize);
        let leaders = if n >= 5 { 2 } else { 1 };
        let tasks: Vec<Task> = (0..n)
            .map(|i| Task {
                index: i as u8,
                kind: if i < leaders { TaskKind::Lead { slot: i } } else { TaskKind::Follow { slot: i } },
                start: Vec2::new(rng.random_range(-2000.0..2000.0), rng.random_range(-2000.0..2000.0)),
                priority: if i < leaders { 0 } else { 1 },
                blocking: i < leaders,
            })
            .collect();
        let members: Vec<u8> = (1..=n as u8).collect();
        let positions: BTreeMap<u8, Vec2> = members
            .iter()
            .map(|m| (*m, Vec2::new(rng.random_range(-2000.0..2000.0), rng.random_range(-2000.0..2000.0))))
            .collect();
        let group = CoordinationGroup {
            group_id: 0,
            members: members.clone(),
            of: 1,
            formed_at_ms: 0,
        };
        let greedy = allocate(1, &tasks, &group, &positions, 1).unwrap();
        let cost = assignment_cost(&tasks, &greedy.awards, &positions);
        let best = best_permutation(&tasks, &members, &positions);
        let ratio = if best > 0.0 { cost / best } else { 1.0 };
        worst_ratio = worst_ratio.max(ratio);
    }
    s.check(
        "allocation_optimality",
        worst_ratio <= 1.3,
        format!("200 instances of size <= 7: worst greedy / optimum = {worst_ratio:.4}"),
    );
}

fn best_permutation(tasks: &[Task], members: &[u8], positions: &BTreeMap<u8, Vec2>) -> f64 {
    fn go(k: usize, perm: &mut Vec<u8>, tasks: &[Task], positions: &BTreeMap<u8, Vec2>, best: &mut f64) {
        if k == perm.len() {
            let awards: BTreeMap<u8, u8> = tasks.iter().zip(perm.iter()).map(|(t, a)| (t.index, *a)).collect();
            *best = best.min(assignment_cost(tasks, &awards, positions));
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            go(k + 1, perm, tasks, positions, best);
            perm.swap(k, i);
        }
    }
    let mut best = f64::INFINITY;
    go(0, &mut members.to_vec(), tasks, positions, &mut best);
    best
}

fn random_message(rng: &mut ChaCha8Rng) -> SwarmMessage {
    let f = |rng: &mut ChaCha8Rng| rng.random_range(-1.0e5f32..1.0e5);
    let pts = |rng: &mut ChaCha8Rng, n: usize| (0..n).map(|_| [f(rng), f(rng)]).collect::<Vec<_>>();
    match rng.random_range(0..7) {
        0 => SwarmMessage::Heartbeat(Heartbeat {
            time_ms: rng.random(),
            position: [f(rng), f(rng)],
            altitude: f(rng),
            airspeed: f(rng),
            course: f(rng),
            roll: f(rng),
            pitch: f(rng),
            battery: rng.random_range(0..=200),
            mode: rng.random_range(0..8),
            group: rng.random(),
            role: rng.random_range(0..5),
        }),
        1 => SwarmMessage::PlanProgress(PlanProgress {
            time_ms: rng.random(),
            mission_id: rng.random(),
            task: rng.random(),
            segment: rng.random(),
            progress: f(rng),
        }),
        2 => {
            let n = rng.random_range(0..=50);
            SwarmMessage::Assignment(AssignmentMsg {
                mission_id: rng.random(),
                group_id: rng.random(),
                version: rng.random(),
                proposer: rng.random(),
                awards: (0..n).map(|i| (i as u8, rng.random())).collect(),
            })
        }
        3 => {
            let body = match rng.random_range(0..8) {
                0 => CommandBody::Launch { lead: f(rng), spacing: f(rng) },
                1 => {
                    let n = rng.random_range(1..=20);
                    CommandBody::Formation {
                        mission_id: rng.random(),
                        pattern: rng.random_range(0..4),
                        speed: f(rng),
                        altitude: f(rng),
                        waypoints: pts(rng, n),
                    }
                }
                2 => CommandBody::SetPattern { pattern: rng.random_range(0..4) },
                3 => {
                    let n = rng.random_range(3..=20);
                    CommandBody::Tracking {
                        mission_id: rng.random(),
                        radius: f(rng),
                        altitude: f(rng),
                        area: pts(rng, n),
                    }
                }
                4 => {
                    let n = rng.random_range(1..=20);
                    CommandBody::Transit {
                        mission_id: rng.random(),
                        speed: f(rng),
                        altitude: f(rng),
                        waypoints: pts(rng, n),
                    }
                }
                5 => CommandBody::Rtl,
                6 => CommandBody::Land { lead: f(rng), spacing: f(rng) },
                _ => CommandBody::SetParam {
                    param: rng.random_range(0..9),
                    value: f(rng),
                },
            };
            SwarmMessage::Command(CommandMsg {
                command_id: rng.random(),
                target: rng.random(),
                issued_ms: rng.random(),
                body,
            })
        }
        4 => SwarmMessage::Ack(Ack {
            command_id: rng.random(),
            status: if rng.random() { AckStatus::Accepted } else { AckStatus::Rejected },
        }),
        5 => SwarmMessage::Detection(Detection {
            time_ms: rng.random(),
            target_id: rng.random(),
            position: [f(rng), f(rng)],
        }),
        _ => {
            let n = rng.random_range(0..=MAX_IMAGERY_DATA);
            SwarmMessage::ImageryChunk(ImageryChunk {
                image_id: rng.random(),
                index: rng.random(),
                total: rng.random(),
                data: (0..n).map(|_| rng.random()).collect(),
            })
        }
    }
}

fn protocol(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    for i in 0..10_000u32 {
        let msg = random_message(&mut rng);
        let ok = encode(&msg, rng.random(), i as u8).and_then(|b| decode(&b)).is_ok_and(|(_, m)| m == msg);
        bad += u32::from(!ok);
    }
    s.check("codec_round_trip", bad == 0, format!("10000 random messages, {bad} mismatches"));

    let frame = encode(
        &SwarmMessage::Heartbeat(Heartbeat {
            time_ms: 123_456,
            position: [10.5, -20.25],
            altitude: 100.0,
            airspeed: 19.0,
            course: 1.25,
            roll: -0.1,
            pitch: 0.02,
            battery: 180,
            mode: 4,
            group: 1,
            role: 2,
        }),
        7,
        42,
    )
    .unwrap();
    let mut undetected = 0;
    for bit in 0..frame.len() * 8 {
        let mut f = frame.clone();
        f[bit / 8] ^= 1 << (bit % 8);
        undetected += usize::from(decode(&f).is_ok());
    }
    s.check(
        "single_bit_corruption",
        undetected == 0,
        format!("{} single-bit flips of a {}-byte frame, {undetected} undetected", frame.len() * 8, frame.len()),
    );
}

fn determinism(s: &mut Suite) {
    let mut cases: Vec<ScenarioConfig> = scenarios::BUILTIN.iter().map(|n| scenarios::builtin(n).unwrap()).collect();
    for c in &mut cases {
        c.duration = c.duration.min(150.0);
    }
    let mut mismatches = Vec::new();
    for c in cases {
        let name = c.name.clone();
        let (a, _) = s.run(c.clone(), StepMode::Sequential);
        let (b, _) = s.run(c.clone(), StepMode::Sequential);
        let (p, _) = s.run(c, StepMode::Parallel);
        if a.digest != b.digest || a.digest != p.digest {
            mismatches.push(name);
        }
    }
    s.check(
        "determinism",
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{} scenarios: repeated and parallel runs share digests", scenarios::BUILTIN.len())
        } else {
            format!("digests differ for {mismatches:?}")
        },
    );
}

fn allowed(from: Mode, to: Mode, resume: Mode) -> bool {
    use Mode::*;
    to == Failsafe && from != Failsafe
        || matches!(
            (from, to),
            (Standby, Taxi) | (Taxi, Launch) | (Launch, Mission) | (Mission, Avoid) | (Rtl, Avoid) | (Mission | Avoid | Launch, Rtl) | (Rtl, Land) | (Land, Standby)
        )
        || (from == Avoid && to == resume)
}

fn commander_safety(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut illegal = 0;
    let mut steps = 0;
    for _ in 0..2000 {
        let mut c = CommanderState::default();
        for _ in 0..50 {
            let e = Event::ALL[rng.random_range(0..Event::ALL.len())];
            let resume = c.resume;
            if let Ok(Outcome::Transition { from, to }) = c.step(e) {
                illegal += usize::from(!allowed(from, to, resume));
            }
            steps += 1;
        }
    }
    let mut violations = 0;
    let mut bad_log = 0;
    for seed in 0..12u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = scenarios::sortie(7);
        cfg.seed = seed;
        cfg.duration = 700.0;
        cfg.faults = (0..3)
            .map(|_| FaultConfig {
                at: rng.random_range(0.0..650.0),
                agent: rng.random_range(1..=7),
                kind: FaultKind::Fault,
            })
            .collect();
        cfg.faults.sort_by(|a, b| a.at.total_cmp(&b.at));
        let (out, _) = s.run_with(cfg, StepMode::Sequential, RunLog::new().keeping());
        violations += out.report.safety_violations;
        let mut resume: BTreeMap<u8, Mode> = BTreeMap::new();
        for r in &out.records {
            match r {
                Record::Transition { id, from, to, .. } => {
                    let res = resume.get(id).copied().unwrap_or(Mode::Mission);
                    bad_log += usize::from(!allowed(*from, *to, res));
                    if *to == Mode::Avoid {
                        resume.insert(*id, *from);
                    }
                }
                Record::Sample { mode, actuators, .. } if !mode.actuates() => {
                    bad_log += usize::from(actuators.iter().any(|a| *a != 0.0));
                }
                _ => {}
            }
        }
    }
    s.check(
        "commander_safety",
        illegal == 0 && violations == 0 && bad_log == 0,
        format!("{steps} random events: {illegal} illegal transitions; 12 faulted sorties: {violations} actuation violations, {bad_log} bad log entries"),
    );
}

fn main() {
    let mut s = Suite {
        results: Vec::new(),
        conservation: Vec::new(),
    };
    launch_rate(&mut s);
    metric_identity(&mut s);
    formation(&mut s);
    standoff(&mut s);
    path_following(&mut s);
    coordination(&mut s);
    protocol(&mut s);
    determinism(&mut s);
    commander_safety(&mut s);
    let broken: Vec<&String> = s.conservation.iter().filter(|(_, ok)| !ok).map(|(n, _)| n).collect();
    let runs = s.conservation.len();
    s.check(
        "loss_conservation",
        broken.is_empty(),
        format!("{runs} simulation runs, identity broken in {broken:?}"),
    );
    let failed = s.results.iter().filter(|r| !r.1).count();
    println!("acceptance: {} passed, {failed} failed", s.results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
