//! Builds the gateway and role-to-provider mapping from the config.

use std::path::Path;
use std::sync::Arc;

use assaymol_core::llm::{
    CallLog, ChatProvider, Embedder, Gateway, HttpChatProvider, HttpEmbedder, MockChatProvider, MockEmbedder,
    ProviderConfig,
};

use crate::config::RunConfig;
use crate::error::CliError;

pub struct Roles {
    pub gateway: Gateway,
    pub generator: Option<String>,
    pub summarizer: Option<String>,
    pub assessors: Vec<String>,
    pub has_embedder: bool,
}

impl Roles {
    pub fn generator(&self) -> Result<&str, CliError> {
        self.generator
            .as_deref()
            .ok_or_else(|| CliError::config("providers.generator", "required for this command"))
    }

    pub fn summarizer(&self) -> Result<&str, CliError> {
        self.summarizer
            .as_deref()
            .ok_or_else(|| CliError::config("providers.summarizer", "required for this command"))
    }

    pub fn require_embedder(&self) -> Result<(), CliError> {
        if self.has_embedder {
            Ok(())
        } else {
            Err(CliError::config("providers.embedder", "required for this command"))
        }
    }
}

fn mock_chat(id: &str, seed: u64, cfg: &RunConfig) -> Result<Arc<dyn ChatProvider>, CliError> {
    let mut p = MockChatProvider::new(id, seed);
    if let Some(dir) = &cfg.mock.fixture_dir {
        p = p.with_fixture_dir(dir)?;
    }
    Ok(Arc::new(p))
}

fn http_chat(pc: &ProviderConfig, log: Option<&CallLog>) -> Result<Arc<dyn ChatProvider>, CliError> {
    let mut p = HttpChatProvider::from_config(pc.clone())?;
    if let Some(log) = log {
        p = p.with_call_log(log.clone());
    }
    Ok(Arc::new(p))
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct RoleIds {
    pub generator: Option<String>,
    pub summarizer: Option<String>,
    pub assessors: Vec<String>,
    pub embedder: Option<String>,
}

/// Provider ids per role. With `mock`, missing roles get mock ids.
pub fn role_ids(cfg: &RunConfig, mock: bool) -> RoleIds {
    let p = &cfg.providers;
    let generator = p
        .generator
        .as_ref()
        .map(|c| c.model_id.clone())
        .or(mock.then(|| "mock-generator".to_string()));
    let summarizer = p
        .summarizer
        .as_ref()
        .map(|c| c.model_id.clone())
        .or_else(|| generator.clone());
    let assessors = if p.assessors.is_empty() && mock {
        (0..cfg.mock.assessors)
            .map(|i| format!("mock-assessor-{}", i + 1))
            .collect()
    } else {
        p.assessors.iter().map(|c| c.model_id.clone()).collect()
    };
    let embedder = if mock {
        Some(format!("mock-embedder-{}", cfg.mock.embedding_dim))
    } else {
        p.embedder.as_ref().map(|c| c.model_id.clone())
    };
    RoleIds {
        generator,
        summarizer,
        assessors,
        embedder,
    }
}

/// With `mock` every role is served by a seeded mock provider; ids follow
/// the configured model ids when present.
pub fn build_roles(cfg: &RunConfig, mock: bool, call_log: Option<&Path>) -> Result<Roles, CliError> {
    let seed = cfg.seed()?;
    let p = &cfg.providers;
    let mut gateway = Gateway::new(cfg.generation.max_in_flight);
    let log = match call_log {
        Some(path) if !mock => Some(CallLog::to_file(path)?),
        _ => None,
    };
    let RoleIds {
        generator: generator_id,
        summarizer: summarizer_id,
        assessors,
        embedder,
    } = role_ids(cfg, mock);

    if mock {
        if let Some(id) = &generator_id {
            gateway = gateway.with_chat(mock_chat(id, seed, cfg)?);
        }
        if let Some(id) = summarizer_id.as_ref().filter(|s| Some(*s) != generator_id.as_ref()) {
            gateway = gateway.with_chat(mock_chat(id, seed.wrapping_add(1), cfg)?);
        }
        for (i, id) in assessors.iter().enumerate() {
            gateway = gateway.with_chat(mock_chat(id, seed.wrapping_add(2 + i as u64), cfg)?);
        }
        let embedder: Arc<dyn Embedder> = Arc::new(MockEmbedder::new(cfg.mock.embedding_dim, cfg.mock.embedding_seed));
        gateway = gateway.with_embedder(embedder);
    } else {
        for pc in p.generator.iter().chain(&p.summarizer).chain(&p.assessors) {
            gateway = gateway.with_chat(http_chat(pc, log.as_ref())?);
        }
        if let Some(pc) = &p.embedder {
            let mut e = HttpEmbedder::from_config(pc.clone())?;
            if let Some(log) = &log {
                e = e.with_call_log(log.clone());
            }
            gateway = gateway.with_embedder(Arc::new(e));
        }
    }
    Ok(Roles {
        gateway,
        generator: generator_id,
        summarizer: summarizer_id,
        assessors,
        has_embedder: embedder.is_some(),
    })
}
