//! Closure under coupling.
//!
//! A coupled model is turned into a single atomic-like component whose
//! sequential state is the vector of its children's total states. The
//! construction is behavioral: transitions are evaluated on demand and the
//! (uncountable) product state space is never enumerated. Nested coupled
//! children are flattened first, so every child of a [`FlatAtomic`] is
//! either a table-driven atomic model or another flattened model.
//!
//! The initial total state of the flattened model is
//! `e_init = min_i e_init,i` and
//! `s_init = (..., (s_init,i, e_init,i - e_init), ...)`.

use std::fmt;
use std::sync::Arc;

use indexmap::IndexSet;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::formalism::{
    AtomicSpec, CoupledSpec, Diagnostic, Endpoint, EventLabel, Model, StateName, TotalState, TransitionError,
};
use crate::time::{Rational, TimeValue};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlattenError {
    #[error("cannot flatten a coupled model without components")]
    EmptyCoupled,
    #[error("model is invalid ({} problem(s), first: {})", .0.len(), .0[0])]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error("no component is scheduled (flat ta is infinite)")]
    Passive,
    #[error("elapsed time {elapsed} outside [0, {ta}]")]
    ElapsedOutOfRange { elapsed: Rational, ta: TimeValue },
    #[error("component `{label}` left its total state set: e = {elapsed}, ta = {ta}")]
    OutsideTotalStates {
        label: String,
        elapsed: Rational,
        ta: TimeValue,
    },
    #[error("`{0}` is not an input event")]
    UnknownEvent(EventLabel),
}

/// The sequential state of one component of a flattened model.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LocalState {
    Atomic(StateName),
    Flat(FlatState),
}

impl LocalState {
    fn render(&self, out: &mut String, sep: &str) {
        match self {
            LocalState::Atomic(s) => out.push_str(s.as_str()),
            LocalState::Flat(f) => f.render(out, sep),
        }
    }

    /// Whitespace-free rendering, usable as a single trace token.
    pub fn compact(&self) -> String {
        let mut out = String::new();
        self.render(&mut out, ",");
        out
    }
}

impl fmt::Display for LocalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        self.render(&mut out, ", ");
        f.write_str(&out)
    }
}

/// `(s_i, e_i)` for one child, `e_i` measured since the flattened model's
/// last transition.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChildState {
    pub state: LocalState,
    pub elapsed: Rational,
}

/// Product of the children's total states, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FlatState(pub Vec<ChildState>);

impl FlatState {
    fn render(&self, out: &mut String, sep: &str) {
        out.push('(');
        for (i, child) in self.0.iter().enumerate() {
            if i > 0 {
                out.push_str(sep);
            }
            out.push('(');
            child.state.render(out, sep);
            out.push_str(sep);
            out.push_str(&child.elapsed.to_string());
            out.push(')');
        }
        out.push(')');
    }

    pub fn compact(&self) -> String {
        let mut out = String::new();
        self.render(&mut out, ",");
        out
    }
}

impl fmt::Display for FlatState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        self.render(&mut out, ", ");
        f.write_str(&out)
    }
}

/// An atomic-like component: a table-driven atomic model or a flattened
/// coupled model.
#[derive(Debug, Clone)]
pub enum Component {
    Atomic(Arc<AtomicSpec>),
    Flat(Arc<FlatAtomic>),
}

impl Component {
    pub fn inputs(&self) -> &IndexSet<EventLabel> {
        match self {
            Component::Atomic(a) => &a.inputs,
            Component::Flat(f) => &f.inputs,
        }
    }

    pub fn outputs(&self) -> &IndexSet<EventLabel> {
        match self {
            Component::Atomic(a) => &a.outputs,
            Component::Flat(f) => &f.outputs,
        }
    }

    pub fn initial_state(&self) -> (LocalState, Rational) {
        match self {
            Component::Atomic(a) => (LocalState::Atomic(a.init.state.clone()), a.init.elapsed.clone()),
            Component::Flat(f) => (LocalState::Flat(f.init.0.clone()), f.init.1.clone()),
        }
    }

    pub fn ta(&self, state: &LocalState) -> TimeValue {
        match (self, state) {
            (Component::Atomic(a), LocalState::Atomic(s)) => a.ta(s.as_str()).cloned().unwrap_or(TimeValue::INFINITY),
            (Component::Flat(f), LocalState::Flat(s)) => f.flat_ta(s),
            _ => unreachable!("state kind does not match component kind"),
        }
    }

    /// `(lambda(s), delta_int(s))`.
    pub fn internal(&self, state: &LocalState) -> Result<(Option<EventLabel>, LocalState), FlattenError> {
        match (self, state) {
            (Component::Atomic(a), LocalState::Atomic(s)) => {
                let (y, next) = a.apply_internal(s)?;
                Ok((y, LocalState::Atomic(next)))
            }
            (Component::Flat(f), LocalState::Flat(s)) => {
                let (y, next) = f.flat_internal(s)?;
                Ok((y, LocalState::Flat(next)))
            }
            _ => unreachable!("state kind does not match component kind"),
        }
    }

    /// `delta_ext((s, e), x)`; `None` when the event is discarded.
    /// Flattened components always accept and resynchronise their children.
    pub fn external(
        &self,
        state: &LocalState,
        elapsed: &Rational,
        event: &EventLabel,
    ) -> Result<Option<LocalState>, FlattenError> {
        match (self, state) {
            (Component::Atomic(a), LocalState::Atomic(s)) => {
                let q = TotalState {
                    state: s.clone(),
                    elapsed: elapsed.clone(),
                };
                let (next, consumed) = a.apply_external(&q, event)?;
                Ok(consumed.then_some(LocalState::Atomic(next)))
            }
            (Component::Flat(f), LocalState::Flat(s)) => {
                Ok(Some(LocalState::Flat(f.flat_external(s, elapsed, event)?)))
            }
            _ => unreachable!("state kind does not match component kind"),
        }
    }

    /// Checks `0 <= e <= ta(s)`, recursing into flattened children.
    fn check_total_state(&self, label: &str, state: &LocalState, elapsed: &Rational) -> Result<(), FlattenError> {
        let ta = self.ta(state);
        if elapsed.is_negative() || ta.cmp_rational(elapsed).is_lt() {
            return Err(FlattenError::OutsideTotalStates {
                label: label.to_string(),
                elapsed: elapsed.clone(),
                ta,
            });
        }
        if let (Component::Flat(f), LocalState::Flat(s)) = (self, state) {
            f.check(s)?;
        }
        Ok(())
    }
}

/// Flattens any model into a component. Atomic models are returned as-is.
pub fn flatten(model: &Model) -> Result<Component, FlattenError> {
    let diagnostics = model.diagnostics();
    if !diagnostics.is_empty() {
        return Err(FlattenError::Invalid(diagnostics));
    }
    flatten_valid(model)
}

fn flatten_valid(model: &Model) -> Result<Component, FlattenError> {
    match model {
        Model::Atomic(a) => Ok(Component::Atomic(a.clone())),
        Model::Coupled(c) => Ok(Component::Flat(Arc::new(FlatAtomic::from_valid(c.clone())?))),
    }
}

/// `e_init = min_i e_i` and each child keeps `e_i - e_init`.
pub fn flatten_qinit(
    children: impl IntoIterator<Item = (LocalState, Rational)>,
) -> Result<(FlatState, Rational), FlattenError> {
    let children: Vec<_> = children.into_iter().collect();
    let e_init = children
        .iter()
        .map(|(_, e)| e)
        .min()
        .cloned()
        .ok_or(FlattenError::EmptyCoupled)?;
    let state = children
        .into_iter()
        .map(|(state, e)| ChildState {
            state,
            elapsed: e - &e_init,
        })
        .collect();
    Ok((FlatState(state), e_init))
}

/// A coupled model viewed as one atomic model over `FlatState`.
#[derive(Debug, Clone)]
pub struct FlatAtomic {
    pub name: String,
    pub inputs: IndexSet<EventLabel>,
    pub outputs: IndexSet<EventLabel>,
    coupled: Arc<CoupledSpec>,
    children: Vec<Component>,
    /// Child indices, highest select priority first.
    priority: Vec<usize>,
    init: (FlatState, Rational),
}

impl FlatAtomic {
    pub fn new(coupled: Arc<CoupledSpec>) -> Result<Self, FlattenError> {
        let diagnostics = Model::Coupled(coupled.clone()).diagnostics();
        if !diagnostics.is_empty() {
            return Err(FlattenError::Invalid(diagnostics));
        }
        Self::from_valid(coupled)
    }

    fn from_valid(coupled: Arc<CoupledSpec>) -> Result<Self, FlattenError> {
        let children = coupled
            .components
            .values()
            .map(flatten_valid)
            .collect::<Result<Vec<_>, _>>()?;
        let init = flatten_qinit(children.iter().map(Component::initial_state))?;
        let priority = coupled
            .select
            .iter()
            .map(|l| coupled.components.get_index_of(l).expect("select validated"))
            .collect();
        Ok(Self {
            name: coupled.name.clone(),
            inputs: coupled.inputs.clone(),
            outputs: coupled.outputs.clone(),
            coupled,
            children,
            priority,
            init,
        })
    }

    /// `(s_init, e_init)`.
    pub fn initial(&self) -> &(FlatState, Rational) {
        &self.init
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.coupled.components.keys().map(String::as_str)
    }

    fn label(&self, idx: usize) -> &str {
        self.coupled
            .components
            .get_index(idx)
            .map(|(l, _)| l.as_str())
            .expect("index in range")
    }

    fn remaining(&self, idx: usize, child: &ChildState) -> TimeValue {
        let ta = self.children[idx].ta(&child.state);
        ta.checked_sub_rational(&child.elapsed).unwrap_or_else(|| {
            debug_assert!(false, "child {idx} elapsed beyond its time advance");
            TimeValue::zero()
        })
    }

    /// `min_i (ta_i(s_i) - e_i)`; infinite when every child is passive.
    pub fn flat_ta(&self, s: &FlatState) -> TimeValue {
        s.0.iter()
            .enumerate()
            .map(|(i, c)| self.remaining(i, c))
            .min()
            .unwrap_or(TimeValue::INFINITY)
    }

    /// Fires the select-chosen imminent child, routes its output through
    /// the couplings and returns the (translated) output of the whole model
    /// together with the successor state.
    pub fn flat_internal(&self, s: &FlatState) -> Result<(Option<EventLabel>, FlatState), FlattenError> {
        let sigma = self.flat_ta(s);
        let sigma = sigma.as_rational().ok_or(FlattenError::Passive)?;
        let imminent = self
            .priority
            .iter()
            .copied()
            .find(|&i| self.remaining(i, &s.0[i]).cmp_rational(sigma).is_eq())
            .expect("some child attains the minimum");

        let mut next: Vec<ChildState> =
            s.0.iter()
                .map(|c| ChildState {
                    state: c.state.clone(),
                    elapsed: &c.elapsed + sigma,
                })
                .collect();
        let (y, fired) = self.children[imminent].internal(&s.0[imminent].state)?;
        next[imminent] = ChildState {
            state: fired,
            elapsed: Rational::zero(),
        };

        let mut out = None;
        if let Some(y) = y {
            let source = Endpoint::Child(self.label(imminent).to_string());
            for target in self.coupled.influencees_of(&source) {
                let Some(z) = self.coupled.translate(&source, target, &y) else {
                    continue;
                };
                match target {
                    Endpoint::Parent => out = Some(z.clone()),
                    Endpoint::Child(l) => {
                        let j = self.coupled.components.get_index_of(l).expect("validated");
                        self.deliver(j, &mut next[j], z)?;
                    }
                }
            }
        }
        let next = FlatState(next);
        self.check(&next)?;
        Ok((out, next))
    }

    /// Delivers a root input after `elapsed` time in `s`.
    pub fn flat_external(
        &self,
        s: &FlatState,
        elapsed: &Rational,
        event: &EventLabel,
    ) -> Result<FlatState, FlattenError> {
        if !self.inputs.contains(event) {
            return Err(FlattenError::UnknownEvent(event.clone()));
        }
        let ta = self.flat_ta(s);
        if elapsed.is_negative() || ta.cmp_rational(elapsed).is_lt() {
            return Err(FlattenError::ElapsedOutOfRange {
                elapsed: elapsed.clone(),
                ta,
            });
        }
        let mut next: Vec<ChildState> =
            s.0.iter()
                .map(|c| ChildState {
                    state: c.state.clone(),
                    elapsed: &c.elapsed + elapsed,
                })
                .collect();
        for target in self.coupled.influencees_of(&Endpoint::Parent) {
            let Endpoint::Child(l) = target else { continue };
            if let Some(z) = self.coupled.translate(&Endpoint::Parent, target, event) {
                let j = self.coupled.components.get_index_of(l).expect("validated");
                self.deliver(j, &mut next[j], z)?;
            }
        }
        let next = FlatState(next);
        self.check(&next)?;
        Ok(next)
    }

    /// `child` already carries its advanced elapsed time.
    fn deliver(&self, idx: usize, child: &mut ChildState, event: &EventLabel) -> Result<(), FlattenError> {
        self.children[idx].check_total_state(self.label(idx), &child.state, &child.elapsed)?;
        if let Some(state) = self.children[idx].external(&child.state, &child.elapsed, event)? {
            *child = ChildState {
                state,
                elapsed: Rational::zero(),
            };
        }
        Ok(())
    }

    /// Every child satisfies `0 <= e_i <= ta_i(s_i)`.
    pub fn check(&self, s: &FlatState) -> Result<(), FlattenError> {
        for (i, c) in s.0.iter().enumerate() {
            self.children[i].check_total_state(self.label(i), &c.state, &c.elapsed)?;
        }
        Ok(())
    }
}
