//! Hierarchical abstract simulator for Classic DEVS with initial total
//! states, and a single-component runner for flattened models.
//!
//! The message protocol (`i`, `*`, `x`, `y`, `done`) is realised as direct
//! recursive calls. On initialization every simulator sets its total state
//! from `q_init` and reports `tn = tl + ta(s)` with `tl = t0 - e_init`;
//! coordinators report the minimum over their children.
//!
//! A root input scheduled at the same instant as an internal event is
//! delivered first.

use std::str::FromStr;
use std::sync::Arc;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::flatten::{flatten, Component, FlattenError, LocalState};
use crate::formalism::{
    AtomicSpec, CoupledSpec, Diagnostic, Endpoint, EventLabel, Model, StateName, TotalState, TransitionError,
};
use crate::time::{Rational, TimeValue};
use crate::trace::{Trace, TraceEntry};

pub const DEFAULT_STEP_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("model is invalid: {}", render_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Flatten(#[from] FlattenError),
    #[error("{path}: total state ({state}, {elapsed}) outside Q (ta = {ta})")]
    OutsideTotalStates {
        path: String,
        state: String,
        elapsed: Rational,
        ta: TimeValue,
    },
    #[error("{path}: inconsistent schedule: {detail}")]
    Inconsistent { path: String, detail: String },
    #[error("input `{0}` is not an input event of the root model")]
    UnknownInput(EventLabel),
    #[error("step limit of {0} reached (zero-time loop?)")]
    StepLimit(usize),
}

fn render_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("input schedule line {line}: {message}")]
pub struct ScheduleError {
    pub line: usize,
    pub message: String,
}

/// Root-level inputs, ordered by non-decreasing time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InputSchedule {
    entries: Vec<(TimeValue, EventLabel)>,
}

impl InputSchedule {
    pub fn new(entries: Vec<(TimeValue, EventLabel)>) -> Result<Self, ScheduleError> {
        for (i, (t, _)) in entries.iter().enumerate() {
            if t.is_infinite() {
                return Err(ScheduleError {
                    line: i + 1,
                    message: "input time must be finite".into(),
                });
            }
            if i > 0 && entries[i - 1].0 > *t {
                return Err(ScheduleError {
                    line: i + 1,
                    message: "input times must be non-decreasing".into(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(TimeValue, EventLabel)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `<time> <event>` per line; blank lines and `#` comments are ignored.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(t, x)| format!("{t} {x}\n")).collect()
    }
}

impl FromStr for InputSchedule {
    type Err = ScheduleError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut entries: Vec<(TimeValue, EventLabel)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ScheduleError { line: i + 1, message };
            let mut parts = line.split_whitespace();
            let (Some(time), Some(event), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(format!("expected `<time> <event>`, got `{line}`")));
            };
            let time: TimeValue = time.parse().map_err(|e| err(format!("{e}")))?;
            if time.is_infinite() {
                return Err(err("input time must be finite".into()));
            }
            if entries.last().is_some_and(|(prev, _)| *prev > time) {
                return Err(err("input times must be non-decreasing".into()));
            }
            entries.push((time, EventLabel::from(event)));
        }
        Ok(Self { entries })
    }
}

#[derive(Debug, Clone, Default)]
struct PendingInputs {
    schedule: InputSchedule,
    cursor: usize,
}

impl PendingInputs {
    fn peek_time(&self) -> Option<&TimeValue> {
        self.schedule.entries.get(self.cursor).map(|(t, _)| t)
    }

    fn pop(&mut self) -> Option<(TimeValue, EventLabel)> {
        let e = self.schedule.entries.get(self.cursor).cloned();
        self.cursor += e.is_some() as usize;
        e
    }

    fn next_time(&self, internal: &TimeValue) -> TimeValue {
        match self.peek_time() {
            Some(t) if t <= internal => t.clone(),
            _ => internal.clone(),
        }
    }

    /// True when the next input is due no later than `internal`.
    fn input_first(&self, internal: &TimeValue) -> bool {
        self.peek_time().is_some_and(|t| t <= internal)
    }
}

/// Entries produced by one step, all at `time`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub time: TimeValue,
    pub entries: Vec<TraceEntry>,
}

/// Anything that can be driven step by step.
pub trait Engine {
    /// Time of the next input or internal event (`inf` when none).
    fn next_time(&self) -> TimeValue;

    /// Executes the next event; `None` when nothing is left to do.
    fn step(&mut self) -> Result<Option<Step>, SimError>;

    fn step_limit(&self) -> usize {
        DEFAULT_STEP_LIMIT
    }

    /// Steps while the next event time is `<= until`.
    fn run_until(&mut self, until: &TimeValue) -> Result<Trace, SimError> {
        let mut trace = Trace::new();
        let mut steps = 0usize;
        while self.next_time() <= *until {
            if steps == self.step_limit() {
                return Err(SimError::StepLimit(steps));
            }
            match self.step()? {
                Some(step) => trace.entries.extend(step.entries),
                None => break,
            }
            steps += 1;
        }
        Ok(trace)
    }
}

fn finite(t: &TimeValue) -> &Rational {
    t.as_rational().expect("event times are finite")
}

fn child_path(parent: &str, label: &str) -> String {
    if parent == "/" {
        format!("/{label}")
    } else {
        format!("{parent}/{label}")
    }
}

#[derive(Debug, Clone)]
struct AtomicNode {
    path: String,
    spec: Arc<AtomicSpec>,
    state: StateName,
    last: Rational,
    next: TimeValue,
}

impl AtomicNode {
    /// Handles the `(i, t0)` message.
    fn init(path: String, spec: Arc<AtomicSpec>, t0: &Rational) -> Result<Self, SimError> {
        let TotalState { state, elapsed } = spec.init.clone();
        spec.validate_total_state(&spec.init).map_err(|error| {
            SimError::Invalid(vec![Diagnostic {
                path: path.clone(),
                error,
            }])
        })?;
        let last = t0 - elapsed;
        let next = TimeValue::shifted(&last, spec.ta(state.as_str()).expect("validated")).expect("q_init within Q");
        Ok(Self {
            path,
            spec,
            state,
            last,
            next,
        })
    }

    fn ta(&self) -> &TimeValue {
        self.spec.ta(self.state.as_str()).expect("state in S")
    }

    fn internal(&mut self, now: &Rational, log: &mut Vec<TraceEntry>) -> Result<Option<EventLabel>, SimError> {
        if self.next.cmp_rational(now).is_ne() {
            return Err(SimError::Inconsistent {
                path: self.path.clone(),
                detail: format!("internal event at {now} but tn = {}", self.next),
            });
        }
        let (y, next_state) = self.spec.apply_internal(&self.state)?;
        log.push(TraceEntry::Internal {
            time: TimeValue::from_rational(now.clone()).expect("non-negative"),
            path: self.path.clone(),
            from: self.state.to_string(),
            to: next_state.to_string(),
            output: y.clone(),
        });
        self.state = next_state;
        self.reset(now);
        Ok(y)
    }

    fn external(&mut self, now: &Rational, x: &EventLabel, log: &mut Vec<TraceEntry>) -> Result<(), SimError> {
        let elapsed = now - &self.last;
        if elapsed.is_negative() || self.ta().cmp_rational(&elapsed).is_lt() {
            return Err(SimError::OutsideTotalStates {
                path: self.path.clone(),
                state: self.state.to_string(),
                elapsed,
                ta: self.ta().clone(),
            });
        }
        let q = TotalState {
            state: self.state.clone(),
            elapsed,
        };
        let (next_state, consumed) = self.spec.apply_external(&q, x)?;
        log.push(TraceEntry::External {
            time: TimeValue::from_rational(now.clone()).expect("non-negative"),
            path: self.path.clone(),
            from: q.state.to_string(),
            to: next_state.to_string(),
            input: x.clone(),
            elapsed: q.elapsed,
            consumed,
        });
        if consumed {
            self.state = next_state;
            self.reset(now);
        }
        Ok(())
    }

    fn reset(&mut self, now: &Rational) {
        self.last = now.clone();
        self.next = TimeValue::shifted(now, self.ta()).expect("now is non-negative");
    }
}

#[derive(Debug, Clone)]
struct CoupledNode {
    path: String,
    spec: Arc<CoupledSpec>,
    children: Vec<Node>,
    /// Child indices, highest select priority first.
    priority: Vec<usize>,
    last: Rational,
    next: TimeValue,
}

impl CoupledNode {
    fn init(path: String, spec: Arc<CoupledSpec>, t0: &Rational) -> Result<Self, SimError> {
        let children = spec
            .components
            .iter()
            .map(|(label, model)| Node::init(child_path(&path, label), model, t0))
            .collect::<Result<Vec<_>, _>>()?;
        let priority = spec
            .select
            .iter()
            .map(|l| spec.components.get_index_of(l).expect("select validated"))
            .collect();
        let mut node = Self {
            path,
            spec,
            children,
            priority,
            last: t0.clone(),
            next: TimeValue::INFINITY,
        };
        node.refresh();
        Ok(node)
    }

    /// Recomputes `tl` (latest child transition) and `tn` (earliest child
    /// event), i.e. the `(done, tn)` reply.
    fn refresh(&mut self) {
        self.next = self
            .children
            .iter()
            .map(|c| c.next().clone())
            .min()
            .unwrap_or(TimeValue::INFINITY);
        if let Some(last) = self.children.iter().map(Node::last).max() {
            self.last = last.clone();
        }
    }

    fn internal(&mut self, now: &Rational, log: &mut Vec<TraceEntry>) -> Result<Option<EventLabel>, SimError> {
        let imminent = self
            .priority
            .iter()
            .copied()
            .find(|&i| self.children[i].next().cmp_rational(now).is_eq())
            .ok_or_else(|| SimError::Inconsistent {
                path: self.path.clone(),
                detail: format!("no imminent child at {now}"),
            })?;
        let y = self.children[imminent].internal(now, log)?;
        let mut out = None;
        if let Some(y) = y {
            let (label, _) = self.spec.components.get_index(imminent).expect("in range");
            let source = Endpoint::Child(label.clone());
            for target in self.spec.influencees_of(&source) {
                let Some(z) = self.spec.translate(&source, target, &y) else {
                    continue;
                };
                match target {
                    Endpoint::Parent => out = Some(z.clone()),
                    Endpoint::Child(l) => {
                        let j = self.spec.components.get_index_of(l).expect("validated");
                        self.children[j].external(now, z, log)?;
                    }
                }
            }
        }
        self.refresh();
        Ok(out)
    }

    fn external(&mut self, now: &Rational, x: &EventLabel, log: &mut Vec<TraceEntry>) -> Result<(), SimError> {
        for target in self.spec.influencees_of(&Endpoint::Parent) {
            let Endpoint::Child(l) = target else { continue };
            if let Some(z) = self.spec.translate(&Endpoint::Parent, target, x) {
                let j = self.spec.components.get_index_of(l).expect("validated");
                self.children[j].external(now, z, log)?;
            }
        }
        self.refresh();
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Node {
    Atomic(AtomicNode),
    Coupled(CoupledNode),
}

impl Node {
    fn init(path: String, model: &Model, t0: &Rational) -> Result<Self, SimError> {
        Ok(match model {
            Model::Atomic(a) => Node::Atomic(AtomicNode::init(path, a.clone(), t0)?),
            Model::Coupled(c) => Node::Coupled(CoupledNode::init(path, c.clone(), t0)?),
        })
    }

    fn next(&self) -> &TimeValue {
        match self {
            Node::Atomic(a) => &a.next,
            Node::Coupled(c) => &c.next,
        }
    }

    fn last(&self) -> &Rational {
        match self {
            Node::Atomic(a) => &a.last,
            Node::Coupled(c) => &c.last,
        }
    }

    fn internal(&mut self, now: &Rational, log: &mut Vec<TraceEntry>) -> Result<Option<EventLabel>, SimError> {
        match self {
            Node::Atomic(a) => a.internal(now, log),
            Node::Coupled(c) => c.internal(now, log),
        }
    }

    fn external(&mut self, now: &Rational, x: &EventLabel, log: &mut Vec<TraceEntry>) -> Result<(), SimError> {
        match self {
            Node::Atomic(a) => a.external(now, x, log),
            Node::Coupled(c) => c.external(now, x, log),
        }
    }

    fn inputs(&self) -> &indexmap::IndexSet<EventLabel> {
        match self {
            Node::Atomic(a) => &a.spec.inputs,
            Node::Coupled(c) => &c.spec.inputs,
        }
    }

    /// Checks `tn = tl + ta(s)` and `tl <= now <= tn` for every simulator,
    /// and `tn = min(children)` for every coordinator.
    fn verify(&self, now: &Rational) -> Result<(), SimError> {
        match self {
            Node::Atomic(a) => {
                let elapsed = now - &a.last;
                if elapsed.is_negative() || a.ta().cmp_rational(&elapsed).is_lt() {
                    return Err(SimError::OutsideTotalStates {
                        path: a.path.clone(),
                        state: a.state.to_string(),
                        elapsed,
                        ta: a.ta().clone(),
                    });
                }
                if TimeValue::shifted(&a.last, a.ta()).ok().as_ref() != Some(&a.next) {
                    return Err(SimError::Inconsistent {
                        path: a.path.clone(),
                        detail: format!("tn = {} but tl + ta = {} + {}", a.next, a.last, a.ta()),
                    });
                }
                Ok(())
            }
            Node::Coupled(c) => {
                for child in &c.children {
                    child.verify(now)?;
                }
                let min = c.children.iter().map(Node::next).min().cloned();
                if min.as_ref() != Some(&c.next) {
                    return Err(SimError::Inconsistent {
                        path: c.path.clone(),
                        detail: format!("tn = {} is not the minimum over children", c.next),
                    });
                }
                Ok(())
            }
        }
    }

    fn collect_times(&self, out: &mut Vec<NodeTimes>) {
        match self {
            Node::Atomic(a) => out.push(NodeTimes {
                path: a.path.clone(),
                coordinator: false,
                last: a.last.clone(),
                next: a.next.clone(),
            }),
            Node::Coupled(c) => {
                out.push(NodeTimes {
                    path: c.path.clone(),
                    coordinator: true,
                    last: c.last.clone(),
                    next: c.next.clone(),
                });
                for child in &c.children {
                    child.collect_times(out);
                }
            }
        }
    }
}

/// `(tl, tn)` of one node of the simulation tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeTimes {
    pub path: String,
    pub coordinator: bool,
    pub last: Rational,
    pub next: TimeValue,
}

/// A hierarchical simulation tree driven by a root coordinator.
#[derive(Debug, Clone)]
pub struct Simulation {
    root: Node,
    now: Rational,
    inputs: PendingInputs,
    step_limit: usize,
}

impl Simulation {
    /// Sends `(i, 0)` down the tree. Fails with every validation problem
    /// found in the model.
    pub fn initialize(model: &Model) -> Result<Self, SimError> {
        let diagnostics = model.diagnostics();
        if !diagnostics.is_empty() {
            return Err(SimError::Invalid(diagnostics));
        }
        let t0 = Rational::zero();
        let root = Node::init("/".to_string(), model, &t0)?;
        root.verify(&t0)?;
        Ok(Self {
            root,
            now: t0,
            inputs: PendingInputs::default(),
            step_limit: DEFAULT_STEP_LIMIT,
        })
    }

    pub fn with_inputs(mut self, schedule: InputSchedule) -> Result<Self, SimError> {
        if let Some((_, x)) = schedule.entries.iter().find(|(_, x)| !self.root.inputs().contains(x)) {
            return Err(SimError::UnknownInput(x.clone()));
        }
        self.inputs = PendingInputs { schedule, cursor: 0 };
        Ok(self)
    }

    pub fn with_step_limit(mut self, limit: usize) -> Self {
        self.step_limit = limit;
        self
    }

    /// The root's `tn` from the latest `(done, tn)` reply.
    pub fn root_next(&self) -> &TimeValue {
        self.root.next()
    }

    /// `(tl, tn)` for every node, in pre-order.
    pub fn node_times(&self) -> Vec<NodeTimes> {
        let mut out = Vec::new();
        self.root.collect_times(&mut out);
        out
    }

    pub fn run(&mut self, until: &TimeValue) -> Result<Trace, SimError> {
        self.run_until(until)
    }
}

impl Engine for Simulation {
    fn next_time(&self) -> TimeValue {
        self.inputs.next_time(self.root.next())
    }

    fn step(&mut self) -> Result<Option<Step>, SimError> {
        let mut log = Vec::new();
        let time = if self.inputs.input_first(self.root.next()) {
            let (time, x) = self.inputs.pop().expect("peeked");
            self.now = finite(&time).clone();
            self.root.external(&self.now, &x, &mut log)?;
            time
        } else if self.root.next().is_finite() {
            let time = self.root.next().clone();
            self.now = finite(&time).clone();
            if let Some(y) = self.root.internal(&self.now, &mut log)? {
                log.push(TraceEntry::RootOutput {
                    time: time.clone(),
                    output: y,
                });
            }
            time
        } else {
            return Ok(None);
        };
        self.root.verify(&self.now)?;
        Ok(Some(Step { time, entries: log }))
    }

    fn step_limit(&self) -> usize {
        self.step_limit
    }
}

/// Simulates a flattened model as a single atomic component. Emits one
/// `INT` summary per flat internal transition (path `/`, whitespace-free
/// product states) and the `YROOT` outputs.
#[derive(Debug, Clone)]
pub struct FlatSimulation {
    component: Component,
    state: LocalState,
    last: Rational,
    next: TimeValue,
    inputs: PendingInputs,
    step_limit: usize,
}

impl FlatSimulation {
    pub fn initialize(model: &Model) -> Result<Self, SimError> {
        let component = flatten(model).map_err(|e| match e {
            FlattenError::Invalid(d) => SimError::Invalid(d),
            other => SimError::Flatten(other),
        })?;
        Ok(Self::from_component(component))
    }

    pub fn from_component(component: Component) -> Self {
        let (state, elapsed) = component.initial_state();
        let last = -elapsed;
        let next = TimeValue::shifted(&last, &component.ta(&state)).expect("q_init within Q");
        Self {
            component,
            state,
            last,
            next,
            inputs: PendingInputs::default(),
            step_limit: DEFAULT_STEP_LIMIT,
        }
    }

    pub fn with_inputs(mut self, schedule: InputSchedule) -> Result<Self, SimError> {
        if let Some((_, x)) = schedule
            .entries
            .iter()
            .find(|(_, x)| !self.component.inputs().contains(x))
        {
            return Err(SimError::UnknownInput(x.clone()));
        }
        self.inputs = PendingInputs { schedule, cursor: 0 };
        Ok(self)
    }

    pub fn with_step_limit(mut self, limit: usize) -> Self {
        self.step_limit = limit;
        self
    }

    pub fn state(&self) -> &LocalState {
        &self.state
    }

    pub fn last(&self) -> &Rational {
        &self.last
    }

    pub fn root_next(&self) -> &TimeValue {
        &self.next
    }

    pub fn run(&mut self, until: &TimeValue) -> Result<Trace, SimError> {
        self.run_until(until)
    }

    fn enter(&mut self, state: LocalState, now: &Rational) {
        self.next = TimeValue::shifted(now, &self.component.ta(&state)).expect("now is non-negative");
        self.state = state;
        self.last = now.clone();
    }
}

impl Engine for FlatSimulation {
    fn next_time(&self) -> TimeValue {
        self.inputs.next_time(&self.next)
    }

    fn step(&mut self) -> Result<Option<Step>, SimError> {
        let mut entries = Vec::new();
        let time = if self.inputs.input_first(&self.next) {
            let (time, x) = self.inputs.pop().expect("peeked");
            let now = finite(&time).clone();
            let elapsed = &now - &self.last;
            if let Some(next) = self.component.external(&self.state, &elapsed, &x)? {
                self.enter(next, &now);
            }
            time
        } else if self.next.is_finite() {
            let time = self.next.clone();
            let now = finite(&time).clone();
            let (y, next) = self.component.internal(&self.state)?;
            entries.push(TraceEntry::Internal {
                time: time.clone(),
                path: "/".into(),
                from: self.state.compact(),
                to: next.compact(),
                output: y.clone(),
            });
            if let Some(y) = y {
                entries.push(TraceEntry::RootOutput {
                    time: time.clone(),
                    output: y,
                });
            }
            self.enter(next, &now);
            time
        } else {
            return Ok(None);
        };
        Ok(Some(Step { time, entries }))
    }

    fn step_limit(&self) -> usize {
        self.step_limit
    }
}

/// Hierarchical simulation of `model` up to and including `until`.
pub fn run(model: &Model, schedule: &InputSchedule, until: &TimeValue) -> Result<Trace, SimError> {
    Simulation::initialize(model)?.with_inputs(schedule.clone())?.run(until)
}

/// Simulation of the flattened `model` up to and including `until`.
pub fn run_flattened(model: &Model, schedule: &InputSchedule, until: &TimeValue) -> Result<Trace, SimError> {
    FlatSimulation::initialize(model)?
        .with_inputs(schedule.clone())?
        .run(until)
}
