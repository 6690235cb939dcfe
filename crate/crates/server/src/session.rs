use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use vobs_core::engine::{Model, State, TransitionLabel, Value};
use vobs_core::refinement::Trace;

use crate::error::{ApiError, ApiResult};

/// A label as exchanged with clients: parameters keyed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelView {
    pub event: String,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

impl From<&TransitionLabel> for LabelView {
    fn from(l: &TransitionLabel) -> Self {
        LabelView {
            event: l.event.clone(),
            params: l.params.iter().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryEntry {
    pub state: BTreeMap<String, Value>,
    pub label: LabelView,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub id: String,
    pub machine: String,
    pub state: BTreeMap<String, Value>,
    pub state_text: String,
    pub enabled: Vec<LabelView>,
    pub history: Vec<HistoryEntry>,
    pub history_len: usize,
}

#[derive(Debug, Deserialize)]
pub struct StepRequest {
    pub event: String,
    #[serde(default)]
    pub params: BTreeMap<String, Json>,
}

/// Animation of one machine: the history replays from the initial state to
/// `current`, and `enabled` is the enabled list of `current`.
pub struct Session {
    pub id: String,
    pub model: Model,
    pub history: Vec<(State, TransitionLabel)>,
    pub current: State,
    pub enabled: Vec<TransitionLabel>,
    pub last_used: Instant,
}

fn eval_err(e: impl ToString) -> ApiError {
    ApiError::conflict("evaluation_error", e.to_string())
}

impl Session {
    pub fn start(id: String, model: Model) -> ApiResult<Self> {
        let current = model.initial_state().map_err(eval_err)?;
        let enabled = model.enabled(&current).map_err(eval_err)?;
        Ok(Session {
            id,
            model,
            history: Vec::new(),
            current,
            enabled,
            last_used: Instant::now(),
        })
    }

    fn state_map(&self, s: &State) -> BTreeMap<String, Value> {
        self.model.state_map(s).into_iter().collect()
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            machine: self.model.name().to_string(),
            state: self.state_map(&self.current),
            state_text: self.model.show_state(&self.current),
            enabled: self.enabled.iter().map(LabelView::from).collect(),
            history: self
                .history
                .iter()
                .map(|(s, l)| HistoryEntry {
                    state: self.state_map(s),
                    label: l.into(),
                })
                .collect(),
            history_len: self.history.len(),
        }
    }

    /// Builds a label from a request, in declaration order, rejecting
    /// unknown events and parameters outside their domains.
    pub fn label(&self, req: &StepRequest) -> ApiResult<TransitionLabel> {
        let i = self
            .model
            .event_index(&req.event)
            .ok_or_else(|| ApiError::bad_request(format!("unknown event {}", req.event)))?;
        let ev = &self.model.events()[i];
        if let Some(extra) = req
            .params
            .keys()
            .find(|k| !ev.params.iter().any(|p| &p.name == *k))
        {
            return Err(ApiError::bad_request(format!(
                "event {} has no parameter {extra}",
                ev.name
            )));
        }
        let mut params = Vec::new();
        for (p, dom) in ev.params.iter().zip(&ev.domains) {
            let raw = req
                .params
                .get(&p.name)
                .ok_or_else(|| ApiError::bad_request(format!("missing parameter {}", p.name)))?;
            let v: Value = serde_json::from_value(raw.clone()).map_err(|_| {
                ApiError::bad_request(format!("parameter {}: unsupported value {raw}", p.name))
            })?;
            if !dom.contains(&v) {
                return Err(ApiError::bad_request(format!(
                    "parameter {}: {v} is outside its type",
                    p.name
                )));
            }
            params.push((p.name.clone(), v));
        }
        Ok(TransitionLabel {
            event: ev.name.clone(),
            params,
        })
    }

    pub fn step(&mut self, label: TransitionLabel) -> ApiResult<()> {
        if !self.enabled.contains(&label) {
            let enabled: Vec<LabelView> = self.enabled.iter().map(LabelView::from).collect();
            return Err(
                ApiError::conflict("not_enabled", format!("{label} is not enabled")).with(
                    "enabled",
                    serde_json::to_value(enabled).expect("labels serialize"),
                ),
            );
        }
        let next = self.model.step(&self.current, &label).map_err(eval_err)?;
        let enabled = self.model.enabled(&next).map_err(eval_err)?;
        self.history
            .push((std::mem::replace(&mut self.current, next), label));
        self.enabled = enabled;
        Ok(())
    }

    pub fn undo(&mut self) -> ApiResult<()> {
        let (prev, _) = self
            .history
            .pop()
            .ok_or_else(|| ApiError::conflict("empty_history", "nothing to undo"))?;
        self.enabled = self.model.enabled(&prev).map_err(eval_err)?;
        self.current = prev;
        Ok(())
    }

    pub fn trace(&self) -> Trace {
        Trace::new(
            self.model.name(),
            self.history.iter().map(|(_, l)| l.clone()),
        )
    }
}

/// In-memory sessions with an idle expiry.
pub struct Sessions {
    pub ttl: Duration,
    map: HashMap<String, Session>,
}

impl Sessions {
    pub fn new(ttl: Duration) -> Self {
        Sessions {
            ttl,
            map: HashMap::new(),
        }
    }

    fn purge(&mut self) {
        let ttl = self.ttl;
        self.map.retain(|_, s| s.last_used.elapsed() < ttl);
    }

    pub fn insert(&mut self, s: Session) {
        self.purge();
        self.map.insert(s.id.clone(), s);
    }

    pub fn get_mut(&mut self, id: &str) -> ApiResult<&mut Session> {
        self.purge();
        let s = self
            .map
            .get_mut(id)
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))?;
        s.last_used = Instant::now();
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
