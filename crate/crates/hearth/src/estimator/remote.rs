//! Remote personas over a JSON wire.
//!
//! A remote persona forwards each query to an HTTP endpoint as
//! `{persona, template_id, slots}` and parses the free-text reply. The
//! endpoint renders the prompt from the named template — the same template
//! texts ship here (see [`template`]) so a conforming endpoint and this
//! client agree on exactly what the persona was asked.
//!
//! Reply parsing is deliberately forgiving about surrounding prose: the
//! *last* `Score:` marker wins (deliberative personas ramble before
//! concluding), the last `relevant objects:` line names the relevance
//! answer, and verification replies count as negative whenever they say
//! "impossible" — checked before "possible", which it contains.
//!
//! Endpoint location and credentials come only from the environment
//! ([`URL_ENV`], [`KEY_ENV`]); configuration files carry timeouts and retry
//! counts, never secrets.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::env::{query_view, ActionId, Observation, World};
use crate::{Error, Result};

use super::{clamp_reward, Estimate, PersonaSpec};

/// Environment variable naming the estimator endpoint URL.
pub const URL_ENV: &str = "HEARTH_ESTIMATOR_URL";
/// Environment variable holding the bearer token, if the endpoint needs one.
pub const KEY_ENV: &str = "HEARTH_ESTIMATOR_KEY";

/// Sampling temperature a conforming endpoint should apply.
pub const REMOTE_TEMPERATURE: f64 = 0.7;

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireSlots {
    pub instruction: String,
    pub action_list: String,
    pub history: String,
    pub visible: String,
    pub grabbed: String,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub persona: u32,
    pub template_id: String,
    pub slots: WireSlots,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireResponse {
    pub text: String,
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

const SCORING_GUIDE: &str = "\
2 points: Actions that should follow the given previous completed actions.
1 point: Actions that can indirectly perform or support the action that would receive 2 points.
0 points: Actions involving visible objects that do not affect the task.
-1 point: Actions that involve searching for objects not related to the task.
-2 points: Actions that involve picking up or placing invisible objects, i.e., actions that cannot be performed in their current state. Close action cannot be performed if there has been no Open action in previously completed actions.";

const ANSWER_FORMAT: &str = "\
Respond in the format:
Score: <score>
relevant objects: <comma-separated objects>";

const SITUATION: &str = "\
Task Description: {instruction}
Action List: {action_list}
Previously Completed Actions: {history}
Visible objects: {visible}
Grabbed: {grabbed}";

const NAIVE_TEMPLATE: &str = "\
You evaluate actions for a household agent.

{situation}

Scoring guideline:
{guide}

{format}

Proposed action: {action}";

const COT_TEMPLATE: &str = "\
You evaluate actions for a household agent. Think step by step.

{situation}

First, categorize every action in the list:
A. Actions that should follow the previously completed actions to accomplish the task.
B. Actions that can indirectly perform or support the actions in A.
C. Actions involving visible objects that do not affect the task.
D. Actions that involve searching for objects not related to the task.
E. Actions that cannot be performed in their current state. Close action cannot be performed if there has been no Open action in previously completed actions.

Then score the proposed action: A = 2 points, B = 1 point, C = 0 points, D = -1 point, E = -2 points.

{format}

Proposed action: {action}";

const ICL1_TEMPLATE: &str = "\
You evaluate actions for a household agent.

Scoring guideline:
{guide}

Example:
Task Description: Put the cereal in the fridge.
Previously Completed Actions: find wall shelf
Visible objects: cereal, chips, crackers, wall shelf
Grabbed:
Proposed action: grab cereal
Score: 2
relevant objects: cereal

{situation}

{format}

Proposed action: {action}";

const ICL2_TEMPLATE: &str = "\
You evaluate actions for a household agent.

Scoring guideline:
2 points: Highly beneficial actions that directly advance the task right now.
1 point: Beneficial actions that prepare or enable a directly advancing action.
0 points: Neutral actions on visible objects with no effect on the task.
-1 point: Potentially detrimental actions such as searching for things the task does not need.
-2 points: Directly detrimental actions that cannot be performed in the current state, such as handling invisible objects or closing what was never opened.

Example:
Task Description: Put the cereal in the fridge.
Previously Completed Actions: find wall shelf
Visible objects: cereal, chips, crackers, wall shelf
Grabbed:
Proposed action: find bed
Score: -1
relevant objects: cereal

{situation}

{format}

Proposed action: {action}";

const ICL3_TEMPLATE: &str = "\
You evaluate actions for a household agent.

Scoring guideline:
{guide}

Example 1:
Task Description: Put the cereal in the fridge.
Previously Completed Actions: find wall shelf, grab cereal
Visible objects: chips, crackers, wall shelf
Grabbed: cereal
Proposed action: find fridge
Score: 2
relevant objects: cereal, fridge

Example 2:
Task Description: Put the cereal in the fridge.
Previously Completed Actions: find wall shelf
Visible objects: cereal, chips, crackers, wall shelf
Grabbed:
Proposed action: put cereal in fridge
Score: -2
relevant objects: cereal, fridge

{situation}

{format}

Proposed action: {action}";

const EXTRA_TEMPLATE: &str = "\
Score the proposed action for the task on the scale -2..2.

{situation}

Scoring guideline:
{guide}

{format}

Proposed action: {action}";

const QA_TEMPLATE: &str = "\
Task Description: {instruction}
Previously Completed Actions: {history}
Visible objects: {visible}
Grabbed: {grabbed}

Which objects in the current observation are relevant to the task?

Respond in the format:
relevant objects: <comma-separated objects>";

const VERIFY_TEMPLATE: &str = "\
Task Description: {instruction}
Action List: {action_list}

From the list of actions provided above, I selected a few actions to form an action sequence like {action}. If this sequence of actions is executed in order, is it possible to achieve the task? Answer with only \"possible\" or \"impossible\".";

/// Template ids a conforming endpoint must know: one per persona flavor plus
/// the relevance and verification queries.
pub const TEMPLATE_IDS: [&str; 8] = [
    "naive", "icl-1", "icl-2", "icl-3", "cot", "extra", "qa", "verify",
];

/// The prompt template registered under `template_id`.
pub fn template(template_id: &str) -> Result<&'static str> {
    Ok(match template_id {
        "naive" => NAIVE_TEMPLATE,
        "icl-1" => ICL1_TEMPLATE,
        "icl-2" => ICL2_TEMPLATE,
        "icl-3" => ICL3_TEMPLATE,
        "cot" => COT_TEMPLATE,
        "extra" => EXTRA_TEMPLATE,
        "qa" => QA_TEMPLATE,
        "verify" => VERIFY_TEMPLATE,
        other => return Err(Error::config(format!("unknown template id {other:?}"))),
    })
}

/// Render a template with its slots — what a conforming endpoint sends the
/// underlying language model.
pub fn render_prompt(template_id: &str, slots: &WireSlots) -> Result<String> {
    let text = template(template_id)?
        .replace("{situation}", SITUATION)
        .replace("{guide}", SCORING_GUIDE)
        .replace("{format}", ANSWER_FORMAT)
        .replace("{instruction}", &slots.instruction)
        .replace("{action_list}", &slots.action_list)
        .replace("{history}", &slots.history)
        .replace("{visible}", &slots.visible)
        .replace("{grabbed}", &slots.grabbed)
        .replace("{action}", &slots.action);
    Ok(text)
}

// ---------------------------------------------------------------------------
// Reply parsing
// ---------------------------------------------------------------------------

/// Extract the score from a reply: the integer after the last `Score:`
/// marker (case-insensitive).
pub fn parse_score(text: &str) -> Option<i64> {
    // All parsing happens on the lowercased copy: indices into the original
    // would not line up for non-ASCII replies.
    let lower = text.to_lowercase();
    let mut result = None;
    let mut from = 0;
    while let Some(at) = lower[from..].find("score") {
        let after = lower[from + at + "score".len()..]
            .trim_start_matches(['*', ':', ' ', '\t', '\n', '\r']);
        let mut end = 0;
        for (i, c) in after.char_indices() {
            if ((c == '-' || c == '+') && i == 0) || c.is_ascii_digit() {
                end = i + c.len_utf8();
            } else {
                break;
            }
        }
        if let Ok(v) = after[..end].parse::<i64>() {
            result = Some(v);
        }
        from += at + "score".len();
    }
    result
}

/// Extract the relevance answer: the comma-separated names on the last
/// `relevant objects:` line (case-insensitive). `none` and empty entries are
/// dropped.
pub fn parse_relevant(text: &str) -> Option<BTreeSet<String>> {
    let lower = text.to_lowercase();
    let marker = "relevant objects";
    let at = lower.rfind(marker)?;
    let rest = lower[at + marker.len()..].trim_start_matches(['*', ':', ' ', '\t']);
    let line = rest.lines().next().unwrap_or("");
    Some(
        line.split(',')
            .map(|s| s.trim().trim_matches('*').trim().to_string())
            .filter(|s| !s.is_empty() && s != "none")
            .collect(),
    )
}

/// Extract a verification verdict. "impossible" is checked first because
/// "possible" is a substring of it.
pub fn parse_verdict(text: &str) -> Option<bool> {
    let lower = text.to_lowercase();
    if lower.contains("impossible") {
        Some(false)
    } else if lower.contains("possible") {
        Some(true)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

/// How wire requests reach the endpoint. Swappable so tests can script
/// replies without a network.
pub trait Transport: Send + Sync {
    fn send(&self, request: &WireRequest) -> Result<WireResponse>;
}

/// POSTs each request as JSON to the URL in [`URL_ENV`], with a bearer token
/// from [`KEY_ENV`] when present.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    key: Option<String>,
}

impl HttpTransport {
    pub fn from_env(timeout: Duration) -> Result<Self> {
        let url = std::env::var(URL_ENV).map_err(|_| {
            Error::config(format!(
                "remote estimator endpoint not configured: set {URL_ENV} (and {KEY_ENV} if the endpoint needs a token)"
            ))
        })?;
        let agent = ureq::AgentBuilder::new()
            .timeout_read(timeout)
            .timeout_write(timeout)
            .timeout_connect(timeout)
            .build();
        Ok(HttpTransport {
            agent,
            url,
            key: std::env::var(KEY_ENV).ok(),
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &WireRequest) -> Result<WireResponse> {
        let mut call = self
            .agent
            .post(&self.url)
            .set("content-type", "application/json");
        if let Some(key) = &self.key {
            call = call.set("authorization", &format!("Bearer {key}"));
        }
        let response = call
            .send_string(&serde_json::to_string(request)?)
            .map_err(|e| Error::estimator(request.persona, format!("transport: {e}")))?;
        let body = response
            .into_string()
            .map_err(|e| Error::estimator(request.persona, format!("transport read: {e}")))?;
        serde_json::from_str(&body)
            .map_err(|e| Error::estimator(request.persona, format!("malformed response body: {e}")))
    }
}

// ---------------------------------------------------------------------------
// Remote persona
// ---------------------------------------------------------------------------

pub struct RemotePersona {
    spec: PersonaSpec,
    world: World,
    action_list: String,
    transport: Arc<dyn Transport>,
    /// Additional attempts after the first, per query.
    retries: u32,
}

impl RemotePersona {
    pub fn new(
        world: &World,
        spec: PersonaSpec,
        transport: Arc<dyn Transport>,
        retries: u32,
    ) -> Self {
        let action_list = (0..world.action_count() as ActionId)
            .map(|a| world.action_name(a))
            .collect::<Vec<_>>()
            .join(", ");
        RemotePersona {
            spec,
            world: world.clone(),
            action_list,
            transport,
            retries,
        }
    }

    pub fn id(&self) -> u32 {
        self.spec.id
    }

    fn ask<T>(
        &self,
        template_id: &str,
        slots: WireSlots,
        parse: impl Fn(&str) -> Option<T>,
        what: &str,
    ) -> Result<(T, String)> {
        let request = WireRequest {
            persona: self.spec.id,
            template_id: template_id.to_string(),
            slots,
        };
        let mut last_failure = String::new();
        for _ in 0..=self.retries {
            match self.transport.send(&request) {
                Ok(reply) => match parse(&reply.text) {
                    Some(v) => return Ok((v, reply.text)),
                    None => {
                        last_failure = format!("no {what} found in reply {:?}", reply.text);
                    }
                },
                Err(e) => last_failure = e.to_string(),
            }
        }
        Err(Error::estimator(
            self.spec.id,
            format!(
                "giving up after {} attempts: {last_failure}",
                self.retries as u64 + 1
            ),
        ))
    }

    fn slots(&self, obs: &Observation, action: Option<ActionId>, instruction: &str) -> WireSlots {
        // Render through the same view the rest of the system uses; the
        // action slot is empty for queries not about a single action.
        let view = query_view(&self.world, instruction, obs, action.unwrap_or(0));
        WireSlots {
            instruction: view.instruction,
            action_list: self.action_list.clone(),
            history: view.history,
            visible: view.visible,
            grabbed: view.grabbed,
            action: match action {
                Some(_) => view.action,
                None => String::new(),
            },
        }
    }

    pub fn estimate(
        &self,
        obs: &Observation,
        action: ActionId,
        instruction: &str,
    ) -> Result<Estimate> {
        let slots = self.slots(obs, Some(action), instruction);
        let (score, raw) = self.ask(self.spec.kind.slug(), slots, parse_score, "score")?;
        Ok(Estimate {
            reward: clamp_reward(score),
            raw: Some(raw),
        })
    }

    pub fn answer_qa(&self, obs: &Observation, instruction: &str) -> Result<BTreeSet<String>> {
        let slots = self.slots(obs, None, instruction);
        let (objects, _raw) = self.ask("qa", slots, parse_relevant, "relevant objects")?;
        Ok(objects)
    }

    /// Score every action and return the highest scorer (ties toward the
    /// lowest action id). One wire round-trip per action.
    pub fn best_action(&self, obs: &Observation, instruction: &str) -> Result<ActionId> {
        let mut best = 0u16;
        let mut best_score = i8::MIN;
        for a in 0..self.world.action_count() as ActionId {
            let e = self.estimate(obs, a, instruction)?;
            if e.reward > best_score {
                best = a;
                best_score = e.reward;
            }
        }
        Ok(best)
    }

    pub fn verify_plan(&self, instruction: &str, plan: &[ActionId]) -> Result<bool> {
        let sequence = plan
            .iter()
            .map(|&a| self.world.action_name(a))
            .collect::<Vec<_>>()
            .join(", ");
        let slots = WireSlots {
            instruction: instruction.to_string(),
            action_list: self.action_list.clone(),
            action: sequence,
            ..WireSlots::default()
        };
        let (verdict, _raw) = self.ask("verify", slots, parse_verdict, "verdict")?;
        Ok(verdict)
    }
}
