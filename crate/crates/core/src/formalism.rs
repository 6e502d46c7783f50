//! Atomic and coupled Classic DEVS models extended with an initial total
//! state, plus the single-step transition semantics of atomic models.

use std::borrow::Borrow;
use std::fmt;
use std::sync::Arc;

use indexmap::{IndexMap, IndexSet};
use num_traits::Signed;
use thiserror::Error;

use crate::time::{Rational, TimeValue};

macro_rules! name_type {
    ($(#[$doc:meta])* $ty:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $ty(String);

        impl $ty {
            pub fn new(name: impl Into<String>) -> Self {
                Self(name.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Borrow<str> for $ty {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $ty {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

name_type!(
    /// An input or output event. The null event is represented by `None`.
    EventLabel
);
name_type!(
    /// A sequential state identifier.
    StateName
);

/// A total state `(s, e)`.
///
/// The elapsed time is kept signed so that an out-of-range initialization
/// such as `(S, -1)` can be represented and rejected by validation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TotalState {
    pub state: StateName,
    pub elapsed: Rational,
}

impl TotalState {
    pub fn new(state: impl Into<String>, elapsed: Rational) -> Self {
        Self {
            state: StateName::new(state),
            elapsed,
        }
    }
}

impl fmt::Display for TotalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.state, self.elapsed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("unknown state `{state}`")]
    UnknownState { state: StateName },
    #[error("elapsed time {elapsed} in `{state}` is negative")]
    NegativeElapsed { state: StateName, elapsed: Rational },
    #[error("elapsed time {elapsed} in `{state}` exceeds ta = {ta}")]
    ElapsedExceedsTa {
        state: StateName,
        elapsed: Rational,
        ta: TimeValue,
    },
    #[error("state `{state}` has finite ta but no internal transition")]
    MissingInternal { state: StateName },
    #[error("state `{state}` has an output but no internal transition")]
    OutputWithoutInternal { state: StateName },
    #[error("transition from `{from}` targets unknown state `{to}`")]
    UnknownTarget { from: StateName, to: StateName },
    #[error("output `{event}` of state `{state}` is not a declared output")]
    OutputNotInAlphabet { state: StateName, event: EventLabel },
    #[error("external transition on `{event}` is not a declared input")]
    ExternalUnknownEvent { event: EventLabel },
    #[error("no components")]
    EmptyCoupled,
    #[error("influencer `{0}` is not a component")]
    UnknownInfluencer(Endpoint),
    #[error("`{0}` influences itself")]
    SelfInfluence(Endpoint),
    #[error("`{from}` influences unknown component `{to}`")]
    DanglingInfluencee { from: Endpoint, to: Endpoint },
    #[error("translation {from} -> {to} exists but `{to}` is not an influencee of `{from}`")]
    TranslationWithoutInfluence { from: Endpoint, to: Endpoint },
    #[error("translation {from} -> {to} maps `{event}` -> `{target}` outside the declared alphabets")]
    TranslationTypeMismatch {
        from: Endpoint,
        to: Endpoint,
        event: EventLabel,
        target: EventLabel,
    },
    #[error("select order must list every component exactly once: {0}")]
    SelectIncomplete(String),
}

impl ValidationError {
    /// Stable rule identifier used in diagnostics.
    pub fn code(&self) -> &'static str {
        use ValidationError::*;
        match self {
            UnknownState { .. } => "unknown-state",
            NegativeElapsed { .. } => "negative-elapsed",
            ElapsedExceedsTa { .. } => "elapsed-exceeds-ta",
            MissingInternal { .. } => "missing-internal",
            OutputWithoutInternal { .. } => "output-without-internal",
            UnknownTarget { .. } => "unknown-target",
            OutputNotInAlphabet { .. } => "output-not-in-alphabet",
            ExternalUnknownEvent { .. } => "unknown-event",
            EmptyCoupled => "empty-coupled",
            UnknownInfluencer(_) => "unknown-influencer",
            SelfInfluence(_) => "self-influence",
            DanglingInfluencee { .. } => "dangling-influencee",
            TranslationWithoutInfluence { .. } => "translation-without-influence",
            TranslationTypeMismatch { .. } => "translation-type-mismatch",
            SelectIncomplete(_) => "select-incomplete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("no internal transition defined for `{0}`")]
    NoInternalTransition(StateName),
    #[error("`{0}` is not an input event")]
    UnknownEvent(EventLabel),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// A finite, table-driven atomic DEVS model with its initial total state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomicSpec {
    pub name: String,
    pub inputs: IndexSet<EventLabel>,
    pub outputs: IndexSet<EventLabel>,
    /// The state set together with the time advance of each state.
    pub states: IndexMap<StateName, TimeValue>,
    pub internal: IndexMap<StateName, StateName>,
    pub output: IndexMap<StateName, EventLabel>,
    pub external: IndexMap<(StateName, EventLabel), StateName>,
    pub init: TotalState,
}

impl AtomicSpec {
    pub fn new(name: impl Into<String>, init: TotalState) -> Self {
        Self {
            name: name.into(),
            inputs: IndexSet::new(),
            outputs: IndexSet::new(),
            states: IndexMap::new(),
            internal: IndexMap::new(),
            output: IndexMap::new(),
            external: IndexMap::new(),
            init,
        }
    }

    pub fn with_input(mut self, event: &str) -> Self {
        self.inputs.insert(event.into());
        self
    }

    pub fn with_output(mut self, event: &str) -> Self {
        self.outputs.insert(event.into());
        self
    }

    pub fn with_state(mut self, state: &str, ta: TimeValue) -> Self {
        self.states.insert(state.into(), ta);
        self
    }

    pub fn with_internal(mut self, from: &str, to: &str, output: Option<&str>) -> Self {
        self.internal.insert(from.into(), to.into());
        if let Some(y) = output {
            self.output.insert(from.into(), y.into());
        }
        self
    }

    pub fn with_external(mut self, from: &str, event: &str, to: &str) -> Self {
        self.external.insert((from.into(), event.into()), to.into());
        self
    }

    pub fn ta(&self, state: &str) -> Option<&TimeValue> {
        self.states.get(state)
    }

    /// Every structural violation plus the initial total state check.
    pub fn violations(&self) -> Vec<ValidationError> {
        let mut found = Vec::new();
        for (state, ta) in &self.states {
            match self.internal.get(state) {
                None if ta.is_finite() => {
                    found.push(ValidationError::MissingInternal { state: state.clone() });
                }
                _ => {}
            }
        }
        for (from, to) in &self.internal {
            if !self.states.contains_key(from) {
                found.push(ValidationError::UnknownState { state: from.clone() });
            }
            if !self.states.contains_key(to) {
                found.push(ValidationError::UnknownTarget {
                    from: from.clone(),
                    to: to.clone(),
                });
            }
        }
        for (state, event) in &self.output {
            if !self.internal.contains_key(state) {
                found.push(ValidationError::OutputWithoutInternal { state: state.clone() });
            }
            if !self.outputs.contains(event) {
                found.push(ValidationError::OutputNotInAlphabet {
                    state: state.clone(),
                    event: event.clone(),
                });
            }
        }
        for ((from, event), to) in &self.external {
            if !self.states.contains_key(from) {
                found.push(ValidationError::UnknownState { state: from.clone() });
            }
            if !self.inputs.contains(event) {
                found.push(ValidationError::ExternalUnknownEvent { event: event.clone() });
            }
            if !self.states.contains_key(to) {
                found.push(ValidationError::UnknownTarget {
                    from: from.clone(),
                    to: to.clone(),
                });
            }
        }
        if let Err(e) = self.validate_total_state(&self.init) {
            found.push(e);
        }
        found
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Accepts iff `q.state` is a state and `0 <= q.elapsed <= ta(q.state)`.
    pub fn validate_total_state(&self, q: &TotalState) -> Result<(), ValidationError> {
        let ta = self
            .states
            .get(&q.state)
            .ok_or_else(|| ValidationError::UnknownState { state: q.state.clone() })?;
        if q.elapsed.is_negative() {
            return Err(ValidationError::NegativeElapsed {
                state: q.state.clone(),
                elapsed: q.elapsed.clone(),
            });
        }
        if ta.cmp_rational(&q.elapsed).is_lt() {
            return Err(ValidationError::ElapsedExceedsTa {
                state: q.state.clone(),
                elapsed: q.elapsed.clone(),
                ta: ta.clone(),
            });
        }
        Ok(())
    }

    /// Output (evaluated on the pre-transition state) and `delta_int(s)`.
    pub fn apply_internal(&self, state: &StateName) -> Result<(Option<EventLabel>, StateName), TransitionError> {
        let next = self
            .internal
            .get(state)
            .ok_or_else(|| TransitionError::NoInternalTransition(state.clone()))?;
        Ok((self.output.get(state).cloned(), next.clone()))
    }

    /// `delta_ext(q, x)`. When the table has no entry for `(q.state, x)` the
    /// event is discarded: the state is returned unchanged with
    /// `consumed = false`.
    pub fn apply_external(&self, q: &TotalState, event: &EventLabel) -> Result<(StateName, bool), TransitionError> {
        if !self.inputs.contains(event) {
            return Err(TransitionError::UnknownEvent(event.clone()));
        }
        self.validate_total_state(q)?;
        match self.external.get(&(q.state.clone(), event.clone())) {
            Some(next) => Ok((next.clone(), true)),
            None => Ok((q.state.clone(), false)),
        }
    }
}

/// One side of a coupling: the enclosing model (`self`) or a component.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Parent,
    Child(String),
}

impl Endpoint {
    pub fn child(label: &str) -> Self {
        Endpoint::Child(label.to_string())
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Parent => f.write_str("self"),
            Endpoint::Child(l) => f.write_str(l),
        }
    }
}

/// A submodel reference with all children resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Model {
    Atomic(Arc<AtomicSpec>),
    Coupled(Arc<CoupledSpec>),
}

impl Model {
    pub fn name(&self) -> &str {
        match self {
            Model::Atomic(a) => &a.name,
            Model::Coupled(c) => &c.name,
        }
    }

    pub fn inputs(&self) -> &IndexSet<EventLabel> {
        match self {
            Model::Atomic(a) => &a.inputs,
            Model::Coupled(c) => &c.inputs,
        }
    }

    pub fn outputs(&self) -> &IndexSet<EventLabel> {
        match self {
            Model::Atomic(a) => &a.outputs,
            Model::Coupled(c) => &c.outputs,
        }
    }

    /// Validates the whole tree, reporting every violation with the
    /// instance path it was found at (`/` is the root).
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        self.collect_diagnostics("", &mut out);
        out
    }

    /// Warnings of every coupled model in the tree, with instance paths.
    pub fn warnings(&self) -> Vec<(String, ValidationWarning)> {
        let mut out = Vec::new();
        self.collect_warnings("", &mut out);
        out
    }

    fn collect_warnings(&self, path: &str, out: &mut Vec<(String, ValidationWarning)>) {
        if let Model::Coupled(c) = self {
            let shown = if path.is_empty() { "/" } else { path };
            if let Ok(ws) = c.validate() {
                out.extend(ws.into_iter().map(|w| (shown.to_string(), w)));
            }
            for (label, child) in &c.components {
                child.collect_warnings(&format!("{path}/{label}"), out);
            }
        }
    }

    fn collect_diagnostics(&self, path: &str, out: &mut Vec<Diagnostic>) {
        let shown = if path.is_empty() { "/" } else { path };
        match self {
            Model::Atomic(a) => out.extend(a.violations().into_iter().map(|error| Diagnostic {
                path: shown.to_string(),
                error,
            })),
            Model::Coupled(c) => {
                if let Err(error) = c.validate() {
                    out.push(Diagnostic {
                        path: shown.to_string(),
                        error,
                    });
                }
                for (label, child) in &c.components {
                    child.collect_diagnostics(&format!("{path}/{label}"), out);
                }
            }
        }
    }
}

/// A validation failure located at an instance path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub error: ValidationError,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.path, self.error.code(), self.error)
    }
}

/// Non-fatal findings about a coupled model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationWarning {
    /// `event` leaves `from` towards `to` but has no translation, so it is
    /// never delivered.
    Untranslated {
        from: Endpoint,
        to: Endpoint,
        event: EventLabel,
    },
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::Untranslated { from, to, event } => {
                write!(f, "`{event}` from {from} is not translated towards {to}")
            }
        }
    }
}

/// A coupled DEVS model. `components` holds both the instance labels and
/// their model references, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoupledSpec {
    pub name: String,
    pub inputs: IndexSet<EventLabel>,
    pub outputs: IndexSet<EventLabel>,
    pub components: IndexMap<String, Model>,
    pub influencees: IndexMap<Endpoint, IndexSet<Endpoint>>,
    pub translations: IndexMap<(Endpoint, Endpoint), IndexMap<EventLabel, EventLabel>>,
    /// Tie-breaking priority, highest first.
    pub select: Vec<String>,
}

impl CoupledSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            inputs: IndexSet::new(),
            outputs: IndexSet::new(),
            components: IndexMap::new(),
            influencees: IndexMap::new(),
            translations: IndexMap::new(),
            select: Vec::new(),
        }
    }

    pub fn with_input(mut self, event: &str) -> Self {
        self.inputs.insert(event.into());
        self
    }

    pub fn with_output(mut self, event: &str) -> Self {
        self.outputs.insert(event.into());
        self
    }

    pub fn with_component(mut self, label: &str, model: Model) -> Self {
        self.components.insert(label.to_string(), model);
        self
    }

    /// Adds `to` to the influencees of `from` without any translation.
    pub fn with_influence(mut self, from: Endpoint, to: Endpoint) -> Self {
        self.influencees.entry(from).or_default().insert(to);
        self
    }

    /// Adds the influence `from -> to` and the translation `event -> target`.
    pub fn with_coupling(mut self, from: Endpoint, event: &str, to: Endpoint, target: &str) -> Self {
        self.influencees.entry(from.clone()).or_default().insert(to.clone());
        self.translations
            .entry((from, to))
            .or_default()
            .insert(event.into(), target.into());
        self
    }

    pub fn with_select(mut self, order: &[&str]) -> Self {
        self.select = order.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn influencees_of(&self, from: &Endpoint) -> impl Iterator<Item = &Endpoint> {
        self.influencees.get(from).into_iter().flatten()
    }

    /// `Z_{from,to}(event)`, if defined.
    pub fn translate(&self, from: &Endpoint, to: &Endpoint, event: &EventLabel) -> Option<&EventLabel> {
        self.translations
            .get(&(from.clone(), to.clone()))
            .and_then(|z| z.get(event))
    }

    /// The highest-priority member of `candidates` per the select order.
    pub fn select_from(&self, mut candidates: impl FnMut(&str) -> bool) -> Option<&str> {
        self.select.iter().map(String::as_str).find(|label| candidates(label))
    }

    fn endpoint_exists(&self, e: &Endpoint) -> bool {
        match e {
            Endpoint::Parent => true,
            Endpoint::Child(l) => self.components.contains_key(l),
        }
    }

    /// Alphabet an influencer emits on this coupling.
    fn source_alphabet(&self, e: &Endpoint) -> Option<&IndexSet<EventLabel>> {
        match e {
            Endpoint::Parent => Some(&self.inputs),
            Endpoint::Child(l) => self.components.get(l).map(Model::outputs),
        }
    }

    /// Alphabet an influencee accepts on this coupling.
    fn target_alphabet(&self, e: &Endpoint) -> Option<&IndexSet<EventLabel>> {
        match e {
            Endpoint::Parent => Some(&self.outputs),
            Endpoint::Child(l) => self.components.get(l).map(Model::inputs),
        }
    }

    /// Checks this level of the hierarchy (children are validated
    /// separately). Returns the warnings on success, the first violated
    /// constraint otherwise.
    pub fn validate(&self) -> Result<Vec<ValidationWarning>, ValidationError> {
        if self.components.is_empty() {
            return Err(ValidationError::EmptyCoupled);
        }
        for (from, targets) in &self.influencees {
            if !self.endpoint_exists(from) {
                return Err(ValidationError::UnknownInfluencer(from.clone()));
            }
            for to in targets {
                if to == from {
                    return Err(ValidationError::SelfInfluence(from.clone()));
                }
                if !self.endpoint_exists(to) {
                    return Err(ValidationError::DanglingInfluencee {
                        from: from.clone(),
                        to: to.clone(),
                    });
                }
            }
        }
        for ((from, to), table) in &self.translations {
            let influences = self.influencees.get(from).is_some_and(|set| set.contains(to));
            if !influences {
                return Err(ValidationError::TranslationWithoutInfluence {
                    from: from.clone(),
                    to: to.clone(),
                });
            }
            let (Some(src), Some(dst)) = (self.source_alphabet(from), self.target_alphabet(to)) else {
                unreachable!("endpoints checked above");
            };
            for (event, target) in table {
                if !src.contains(event) || !dst.contains(target) {
                    return Err(ValidationError::TranslationTypeMismatch {
                        from: from.clone(),
                        to: to.clone(),
                        event: event.clone(),
                        target: target.clone(),
                    });
                }
            }
        }
        self.check_select()?;

        let mut warnings = Vec::new();
        for (from, targets) in &self.influencees {
            let src = self.source_alphabet(from).expect("checked");
            for to in targets {
                for event in src {
                    if self.translate(from, to, event).is_none() {
                        warnings.push(ValidationWarning::Untranslated {
                            from: from.clone(),
                            to: to.clone(),
                            event: event.clone(),
                        });
                    }
                }
            }
        }
        Ok(warnings)
    }

    fn check_select(&self) -> Result<(), ValidationError> {
        let mut seen = IndexSet::new();
        for label in &self.select {
            if !self.components.contains_key(label) {
                return Err(ValidationError::SelectIncomplete(format!(
                    "`{label}` is not a component"
                )));
            }
            if !seen.insert(label.as_str()) {
                return Err(ValidationError::SelectIncomplete(format!("`{label}` listed twice")));
            }
        }
        if let Some(missing) = self.components.keys().find(|l| !seen.contains(l.as_str())) {
            return Err(ValidationError::SelectIncomplete(format!("`{missing}` missing")));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::time::rat;

    pub fn t(s: &str) -> TimeValue {
        s.parse().unwrap()
    }

    pub fn light(init: TotalState) -> AtomicSpec {
        AtomicSpec::new("Light", init)
            .with_input("toAuto")
            .with_input("toManual")
            .with_output("show_green")
            .with_output("show_yellow")
            .with_output("show_red")
            .with_output("turn_off")
            .with_state("GREEN", t("57"))
            .with_state("YELLOW", t("3"))
            .with_state("RED", t("60"))
            .with_state("GOING_MANUAL", t("0"))
            .with_state("GOING_AUTO", t("0"))
            .with_state("MANUAL", t("inf"))
            .with_internal("GREEN", "YELLOW", Some("show_yellow"))
            .with_internal("YELLOW", "RED", Some("show_red"))
            .with_internal("RED", "GREEN", Some("show_green"))
            .with_internal("GOING_MANUAL", "MANUAL", Some("turn_off"))
            .with_internal("GOING_AUTO", "RED", Some("show_red"))
            .with_external("GREEN", "toManual", "GOING_MANUAL")
            .with_external("YELLOW", "toManual", "GOING_MANUAL")
            .with_external("RED", "toManual", "GOING_MANUAL")
            .with_external("MANUAL", "toAuto", "GOING_AUTO")
    }

    pub fn police(init: TotalState) -> AtomicSpec {
        AtomicSpec::new("Police", init)
            .with_output("toAuto")
            .with_output("toManual")
            .with_state("BREAK", t("120"))
            .with_state("WORKING", t("360"))
            .with_internal("BREAK", "WORKING", Some("toManual"))
            .with_internal("WORKING", "BREAK", Some("toAuto"))
    }

    pub fn system(light_init: TotalState, police_init: TotalState) -> CoupledSpec {
        CoupledSpec::new("System")
            .with_input("toAuto")
            .with_input("toManual")
            .with_output("show_green")
            .with_output("show_yellow")
            .with_output("show_red")
            .with_output("turn_off")
            .with_component("light1", Model::Atomic(Arc::new(light(light_init))))
            .with_component("police1", Model::Atomic(Arc::new(police(police_init))))
            .with_coupling(Endpoint::Parent, "toAuto", Endpoint::child("light1"), "toAuto")
            .with_coupling(Endpoint::Parent, "toManual", Endpoint::child("light1"), "toManual")
            .with_coupling(
                Endpoint::child("police1"),
                "toAuto",
                Endpoint::child("light1"),
                "toAuto",
            )
            .with_coupling(
                Endpoint::child("police1"),
                "toManual",
                Endpoint::child("light1"),
                "toManual",
            )
            .with_coupling(Endpoint::child("light1"), "show_green", Endpoint::Parent, "show_green")
            .with_coupling(
                Endpoint::child("light1"),
                "show_yellow",
                Endpoint::Parent,
                "show_yellow",
            )
            .with_coupling(Endpoint::child("light1"), "show_red", Endpoint::Parent, "show_red")
            .with_coupling(Endpoint::child("light1"), "turn_off", Endpoint::Parent, "turn_off")
            .with_select(&["police1", "light1"])
    }

    pub fn scenario_system() -> CoupledSpec {
        system(
            TotalState::new("GREEN", rat(10, 1)),
            TotalState::new("BREAK", rat(143, 2)),
        )
    }
}
