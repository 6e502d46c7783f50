//! Random valid models for property tests.
#![allow(dead_code, clippy::result_large_err)]

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use devs::formalism::{AtomicSpec, Endpoint, EventLabel, Model, StateName, TotalState};
use devs::lang::{resolve, Connection, CoupledDef, Definition, Instance, ModelDocument};
use devs::time::rat;
use devs::{FlatSimulation, InputSchedule, Rational, SimError, Simulation, TimeValue, Trace, TraceEntry};

pub const EVENTS: [&str; 4] = ["a", "b", "c", "d"];
pub const HORIZON: i64 = 100;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub struct Generated {
    pub seed: u64,
    pub doc: ModelDocument,
    pub root: String,
    pub schedule: InputSchedule,
}

fn subset(rng: &mut ChaCha8Rng) -> IndexSet<EventLabel> {
    EVENTS
        .iter()
        .filter(|_| rng.gen_bool(0.5))
        .map(|e| EventLabel::from(*e))
        .collect()
}

/// ta in [0, 20] with small denominators, or infinity.
fn time_advance(rng: &mut ChaCha8Rng) -> TimeValue {
    match rng.gen_range(0..100) {
        0..=14 => TimeValue::INFINITY,
        15..=19 => TimeValue::zero(),
        _ => {
            let q = rng.gen_range(1..=4);
            TimeValue::finite(rng.gen_range(1..=20 * q), q).unwrap()
        }
    }
}

/// A random total state satisfying `0 <= e <= ta(s)`, boundaries included.
fn total_state(rng: &mut ChaCha8Rng, spec: &AtomicSpec) -> TotalState {
    let (state, ta) = spec.states.get_index(rng.gen_range(0..spec.states.len())).unwrap();
    let elapsed = match ta.as_rational() {
        Some(ta) => match rng.gen_range(0..4) {
            0 => Rational::default(),
            1 => ta.clone(),
            _ => ta * rat(rng.gen_range(0..=8), 8),
        },
        None => rat(rng.gen_range(0..=80), rng.gen_range(1..=4)),
    };
    TotalState {
        state: state.clone(),
        elapsed,
    }
}

fn atomic(rng: &mut ChaCha8Rng, name: String) -> AtomicSpec {
    let mut spec = AtomicSpec::new(name, TotalState::new("S0", rat(0, 1)));
    spec.inputs = subset(rng);
    spec.outputs = subset(rng);
    let n = rng.gen_range(1..=5);
    let names: Vec<String> = (0..n).map(|i| format!("S{i}")).collect();
    for s in &names {
        spec = spec.with_state(s, time_advance(rng));
    }
    let outputs: Vec<EventLabel> = spec.outputs.iter().cloned().collect();
    for s in &names {
        if spec.states[s.as_str()].is_finite() {
            let to = names.choose(rng).unwrap();
            let y = if !outputs.is_empty() && rng.gen_bool(0.7) {
                outputs.choose(rng).map(|e| e.as_str().to_string())
            } else {
                None
            };
            spec = spec.with_internal(s, to, y.as_deref());
        }
        let inputs: Vec<EventLabel> = spec.inputs.iter().cloned().collect();
        for x in &inputs {
            if rng.gen_bool(0.5) {
                let to = names.choose(rng).unwrap();
                spec = spec.with_external(s, x.as_str(), to);
            }
        }
    }
    spec.init = total_state(rng, &spec);
    spec
}

struct Child {
    label: String,
    model: String,
    inputs: IndexSet<EventLabel>,
    outputs: IndexSet<EventLabel>,
    init: Option<TotalState>,
}

fn coupled(rng: &mut ChaCha8Rng, name: &str, children: Vec<Child>) -> CoupledDef {
    let inputs = subset(rng);
    let mut outputs = subset(rng);
    if outputs.is_empty() {
        outputs.insert(EventLabel::from(*EVENTS.choose(rng).unwrap()));
    }
    let mut ends: Vec<Endpoint> = vec![Endpoint::Parent];
    ends.extend(children.iter().map(|c| Endpoint::Child(c.label.clone())));
    let alphabet = |e: &Endpoint, emitting: bool| -> Vec<EventLabel> {
        let set = match e {
            Endpoint::Parent if emitting => &inputs,
            Endpoint::Parent => &outputs,
            Endpoint::Child(l) => {
                let c = children.iter().find(|c| &c.label == l).unwrap();
                if emitting {
                    &c.outputs
                } else {
                    &c.inputs
                }
            }
        };
        set.iter().cloned().collect()
    };
    let mut connections = Vec::new();
    for from in &ends {
        for to in &ends {
            let p = if *to == Endpoint::Parent { 0.8 } else { 0.45 };
            if from == to || !rng.gen_bool(p) {
                continue;
            }
            let targets = alphabet(to, false);
            if targets.is_empty() {
                continue;
            }
            for event in alphabet(from, true) {
                if rng.gen_bool(0.6) {
                    connections.push(Connection {
                        from: from.clone(),
                        event,
                        to: to.clone(),
                        target: targets.choose(rng).unwrap().clone(),
                    });
                }
            }
        }
    }
    let mut select: Vec<String> = children.iter().map(|c| c.label.clone()).collect();
    select.shuffle(rng);
    CoupledDef {
        name: name.to_string(),
        inputs,
        outputs,
        instances: children
            .into_iter()
            .map(|c| Instance {
                label: c.label,
                model: c.model,
                init: c.init,
            })
            .collect(),
        connections,
        select,
    }
}

/// At most four atomics with at most five states each, random couplings
/// (sometimes through a nested coupled model), random select orders and a
/// random root input schedule within the horizon.
pub fn generate(seed: u64) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=4);
    let atomics: Vec<AtomicSpec> = (0..n).map(|k| atomic(&mut rng, format!("M{k}"))).collect();
    let mut children: Vec<Child> = atomics
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let init = rng.gen_bool(0.3).then(|| total_state(&mut rng, a));
            Child {
                label: format!("m{k}"),
                model: a.name.clone(),
                inputs: a.inputs.clone(),
                outputs: a.outputs.clone(),
                init,
            }
        })
        .collect();
    let mut definitions: Vec<Definition> = atomics.into_iter().map(Definition::Atomic).collect();
    if n >= 2 && rng.gen_bool(0.35) {
        let inner_n = rng.gen_range(1..n);
        let inner_children: Vec<Child> = children.drain(..inner_n).collect();
        let inner = coupled(&mut rng, "Inner", inner_children);
        children.insert(
            0,
            Child {
                label: "g".into(),
                model: "Inner".into(),
                inputs: inner.inputs.clone(),
                outputs: inner.outputs.clone(),
                init: None,
            },
        );
        definitions.push(Definition::Coupled(inner));
    }
    let root = coupled(&mut rng, "Root", children);
    let root_inputs: Vec<EventLabel> = root.inputs.iter().cloned().collect();
    definitions.push(Definition::Coupled(root));

    let mut inputs: Vec<(TimeValue, EventLabel)> = Vec::new();
    if !root_inputs.is_empty() {
        for _ in 0..rng.gen_range(0..=5) {
            let q = rng.gen_range(1..=4);
            let t = TimeValue::finite(rng.gen_range(0..=HORIZON * q), q).unwrap();
            inputs.push((t, root_inputs.choose(&mut rng).unwrap().clone()));
        }
    }
    inputs.sort_by(|a, b| a.0.cmp(&b.0));
    Generated {
        seed,
        doc: ModelDocument { definitions },
        root: "Root".into(),
        schedule: InputSchedule::new(inputs).unwrap(),
    }
}

/// Path of every atomic instance together with its spec.
pub fn atomic_paths(model: &Model) -> Vec<(String, Arc<AtomicSpec>)> {
    fn walk(model: &Model, path: String, out: &mut Vec<(String, Arc<AtomicSpec>)>) {
        match model {
            Model::Atomic(a) => {
                let shown = if path.is_empty() { "/".to_string() } else { path };
                out.push((shown, a.clone()));
            }
            Model::Coupled(c) => {
                for (label, child) in &c.components {
                    walk(child, format!("{path}/{label}"), out);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(model, String::new(), &mut out);
    out
}

/// Replays a hierarchical trace against the atomic tables and reports every
/// entry that disagrees with them: wrong source state, elapsed time outside
/// `[0, ta(s)]`, internal events off schedule, wrong targets or outputs, and
/// atomics still imminent at or before `until`.
pub fn audit(model: &Model, trace: &Trace, until: &TimeValue) -> Vec<String> {
    struct Track {
        spec: Arc<AtomicSpec>,
        state: String,
        last: Rational,
    }
    let mut tracks: HashMap<String, Track> = atomic_paths(model)
        .into_iter()
        .map(|(path, spec)| {
            let track = Track {
                state: spec.init.state.as_str().to_string(),
                last: -spec.init.elapsed.clone(),
                spec,
            };
            (path, track)
        })
        .collect();
    let mut problems = Vec::new();
    for (i, entry) in trace.iter().enumerate() {
        let mut bad = |msg: String| problems.push(format!("entry {i} `{entry}`: {msg}"));
        let now = match entry.time().as_rational() {
            Some(t) => t.clone(),
            None => {
                bad("infinite timestamp".into());
                continue;
            }
        };
        match entry {
            TraceEntry::Internal {
                path, from, to, output, ..
            } => {
                let Some(tr) = tracks.get_mut(path) else {
                    bad("unknown path".into());
                    continue;
                };
                if &tr.state != from {
                    bad(format!("source state is {}", tr.state));
                }
                let ta = tr.spec.ta(from).cloned().unwrap_or(TimeValue::INFINITY);
                match ta.as_rational() {
                    Some(ta) if &tr.last + ta == now => {}
                    _ => bad(format!("not scheduled (last {}, ta {ta})", tr.last)),
                }
                if tr.spec.internal.get(from.as_str()).map(StateName::as_str) != Some(to.as_str()) {
                    bad("wrong internal target".into());
                }
                if tr.spec.output.get(from.as_str()) != output.as_ref() {
                    bad("wrong output".into());
                }
                tr.state = to.clone();
                tr.last = now;
            }
            TraceEntry::External {
                path,
                from,
                to,
                input,
                elapsed,
                consumed,
                ..
            } => {
                let Some(tr) = tracks.get_mut(path) else {
                    bad("unknown path".into());
                    continue;
                };
                if &tr.state != from {
                    bad(format!("source state is {}", tr.state));
                }
                let e = &now - &tr.last;
                if &e != elapsed {
                    bad(format!("elapsed should be {e}"));
                }
                let ta = tr.spec.ta(from).cloned().unwrap_or(TimeValue::INFINITY);
                if e < Rational::default() || ta.cmp_rational(&e) == std::cmp::Ordering::Less {
                    bad(format!("total state ({from}, {e}) outside Q"));
                }
                let key = (StateName::from(from.as_str()), input.clone());
                match (tr.spec.external.get(&key), consumed) {
                    (Some(t), true) if t.as_str() == to => {
                        tr.state = to.clone();
                        tr.last = now;
                    }
                    (None, false) if from == to => {}
                    _ => bad("external transition disagrees with table".into()),
                }
            }
            TraceEntry::RootOutput { .. } => {}
        }
    }
    if let Some(until) = until.as_rational() {
        for (path, tr) in &tracks {
            let ta = tr.spec.ta(&tr.state).cloned().unwrap_or(TimeValue::INFINITY);
            if let Some(ta) = ta.as_rational() {
                if &(&tr.last + ta) <= until {
                    problems.push(format!("{path}: internal event at {} missing", &tr.last + ta));
                }
            }
        }
    }
    problems
}

pub enum Outcome {
    Compared { hierarchical: Trace, flattened: Trace },
    StepLimit,
}

pub const STEP_LIMIT: usize = 5_000;

/// Runs both engines on a generated model up to the horizon.
pub fn run_both(g: &Generated) -> Result<(Model, Outcome), String> {
    let model = resolve(&g.doc, &g.root).map_err(|e| format!("seed {}: {e}", g.seed))?;
    let until = TimeValue::from_int(HORIZON as u64);
    let hier = Simulation::initialize(&model)
        .and_then(|s| s.with_inputs(g.schedule.clone()))
        .map(|s| s.with_step_limit(STEP_LIMIT))
        .and_then(|mut s| s.run(&until));
    let flat = FlatSimulation::initialize(&model)
        .and_then(|s| s.with_inputs(g.schedule.clone()))
        .map(|s| s.with_step_limit(STEP_LIMIT))
        .and_then(|mut s| s.run(&until));
    match (hier, flat) {
        (Ok(hierarchical), Ok(flattened)) => Ok((
            model,
            Outcome::Compared {
                hierarchical,
                flattened,
            },
        )),
        (Err(SimError::StepLimit(_)), Err(SimError::StepLimit(_))) => Ok((model, Outcome::StepLimit)),
        (h, f) => Err(format!(
            "seed {}: engines disagree: hierarchical {:?}, flattened {:?}",
            g.seed,
            h.err(),
            f.err()
        )),
    }
}
