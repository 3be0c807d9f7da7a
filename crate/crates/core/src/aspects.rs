//! Sub-aspect exploration.
//!
//! A query's sub-aspects travel as a bracketed string, `[history][impact]`.
//! [`format_target`] produces that string (it is also the fine-tuning target of
//! the explorer model), [`parse_aspects`] reads it back from model output, and
//! [`predict_aspects`] drives a completion client with a fallback to the bare
//! query when the model output cannot be parsed.

use serde::{Deserialize, Serialize};

use crate::client::{EndpointConfig, HttpJsonClient};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AspectSource {
    Predicted,
    Gold,
    Fallback,
}

/// Ordered, non-empty list of sub-aspects of one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAspects")]
pub struct SubAspectList {
    aspects: Vec<String>,
    source: AspectSource,
}

#[derive(Deserialize)]
struct RawAspects {
    aspects: Vec<String>,
    source: AspectSource,
}

impl TryFrom<RawAspects> for SubAspectList {
    type Error = Error;

    fn try_from(raw: RawAspects) -> Result<Self> {
        SubAspectList::new(raw.aspects, raw.source)
    }
}

impl SubAspectList {
    /// Trims each aspect. Fails if the list is empty or any aspect is blank.
    pub fn new<S: AsRef<str>>(aspects: impl IntoIterator<Item = S>, source: AspectSource) -> Result<Self> {
        let aspects: Vec<String> = aspects
            .into_iter()
            .map(|a| a.as_ref().trim().to_string())
            .collect();
        if aspects.is_empty() {
            return Err(Error::InvalidArgument("sub-aspect list is empty".into()));
        }
        if aspects.iter().any(String::is_empty) {
            return Err(Error::InvalidArgument("blank sub-aspect".into()));
        }
        Ok(SubAspectList { aspects, source })
    }

    pub fn gold<S: AsRef<str>>(aspects: impl IntoIterator<Item = S>) -> Result<Self> {
        Self::new(aspects, AspectSource::Gold)
    }

    /// The single-aspect list `[query]`.
    pub fn fallback(query: &str) -> Result<Self> {
        Self::new([query], AspectSource::Fallback)
    }

    pub fn aspects(&self) -> &[String] {
        &self.aspects
    }

    pub fn source(&self) -> AspectSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.aspects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aspects.is_empty()
    }
}

pub const QUERY_PLACEHOLDER: &str = "{query}";

/// Instruction template for the explorer with exactly one `{query}` slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ExplorerPrompt {
    template: String,
}

impl ExplorerPrompt {
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        let slots = template.matches(QUERY_PLACEHOLDER).count();
        if slots != 1 {
            return Err(Error::BadPromptTemplate(slots));
        }
        Ok(ExplorerPrompt { template })
    }

    pub fn render(&self, query: &str) -> String {
        self.template.replacen(QUERY_PLACEHOLDER, query, 1)
    }

    pub fn template(&self) -> &str {
        &self.template
    }
}

impl Default for ExplorerPrompt {
    fn default() -> Self {
        ExplorerPrompt {
            template: "List the distinct sub-aspects that a complete answer to the question \
                       below should cover. Write every sub-aspect inside square brackets, one \
                       after another, for example [first aspect][second aspect].\n\
                       Question: {query}\nSub-aspects:"
                .to_string(),
        }
    }
}

impl TryFrom<String> for ExplorerPrompt {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        ExplorerPrompt::new(s)
    }
}

impl From<ExplorerPrompt> for String {
    fn from(p: ExplorerPrompt) -> String {
        p.template
    }
}

/// `[s1][s2]...[sn]`.
pub fn format_target(aspects: &SubAspectList) -> Result<String> {
    let mut out = String::new();
    for aspect in aspects.aspects() {
        if aspect.contains(['[', ']']) {
            return Err(Error::AspectContainsBracket);
        }
        out.push('[');
        out.push_str(aspect);
        out.push(']');
    }
    Ok(out)
}

/// Extracts bracketed segments in order, skipping text between them and blank segments.
///
/// Nested or unbalanced brackets are an error.
pub fn parse_aspects(raw: &str) -> Result<SubAspectList> {
    let mut aspects = Vec::new();
    let mut current: Option<String> = None;
    for c in raw.chars() {
        match (c, current.as_mut()) {
            ('[', None) => current = Some(String::new()),
            ('[', Some(_)) => return Err(Error::MalformedAspects),
            (']', None) => return Err(Error::MalformedAspects),
            (']', Some(_)) => {
                let segment = current.take().unwrap_or_default();
                let segment = segment.trim();
                if !segment.is_empty() {
                    aspects.push(segment.to_string());
                }
            }
            (c, Some(buf)) => buf.push(c),
            (_, None) => {}
        }
    }
    if current.is_some() {
        return Err(Error::MalformedAspects);
    }
    if aspects.is_empty() {
        return Err(Error::NoAspectsParsed);
    }
    SubAspectList::new(aspects, AspectSource::Predicted)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
}

/// A text-completion model reachable by the explorer.
pub trait CompletionClient {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse>;
}

/// Completion client speaking `{"prompt","max_tokens"} -> {"text"}` over HTTP.
#[derive(Debug, Clone)]
pub struct HttpCompletionClient {
    http: HttpJsonClient,
}

impl HttpCompletionClient {
    pub fn new(endpoint: EndpointConfig) -> Self {
        HttpCompletionClient {
            http: HttpJsonClient::new(endpoint),
        }
    }
}

impl CompletionClient for HttpCompletionClient {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        self.http.post(request)
    }
}

/// Parse attempts per query before falling back to `[query]`.
const PARSE_ATTEMPTS: usize = 2;

pub fn predict_aspects(
    query: &str,
    prompt: &ExplorerPrompt,
    client: &dyn CompletionClient,
    max_tokens: u32,
) -> Result<SubAspectList> {
    let request = CompletionRequest {
        prompt: prompt.render(query),
        max_tokens,
    };
    for attempt in 0..PARSE_ATTEMPTS {
        let completion = client.complete(&request)?;
        match parse_aspects(&completion.text) {
            Ok(list) => return Ok(list),
            Err(e) => log::debug!("unparseable explorer output (attempt {}): {e}", attempt + 1),
        }
    }
    log::warn!("falling back to the bare query as its only aspect: {query:?}");
    SubAspectList::fallback(query)
}

/// Next-token-prediction loss of the explorer target given its per-token log-probabilities.
pub fn explorer_sft_loss<T: Scalar>(token_logprobs: &[T]) -> Result<T> {
    if token_logprobs.is_empty() {
        return Err(Error::InvalidArgument("no target tokens".into()));
    }
    let mut total = T::zero();
    for &lp in token_logprobs {
        if lp.is_nan() || lp > T::zero() {
            return Err(Error::InvalidLogProb(lp.to_f64().unwrap_or(f64::NAN)));
        }
        total = total - lp;
    }
    Ok(total)
}
