//! Process exit codes.

use std::error::Error;
use std::fmt;

use fairtarget::artifact::ArtifactError;
use fairtarget::audit::AuditError;
use fairtarget::demographics::DemographicsError;
use fairtarget::generation::GenerationError;
use fairtarget::sim::SimError;

pub const OK: u8 = 0;
pub const FAILURE: u8 = 1;
pub const USAGE: u8 = 2;
pub const CONFIG: u8 = 3;
pub const TRANSPORT: u8 = 4;
pub const SCHEMA: u8 = 5;
pub const CONTRACT: u8 = 6;
pub const MISSING_UPSTREAM: u8 = 7;
pub const TOLERANCE: u8 = 8;

/// Bad flag combinations that clap cannot express.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Error for Usage {}

/// Missing secrets or unreadable configuration.
#[derive(Debug)]
pub struct Config(pub String);

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Error for Config {}

/// A simulation that ran but missed its analytic expectation.
#[derive(Debug)]
pub struct ToleranceFailure(pub String);

impl fmt::Display for ToleranceFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Error for ToleranceFailure {}

fn artifact(e: &ArtifactError) -> u8 {
    match e {
        ArtifactError::MissingUpstream { .. } => MISSING_UPSTREAM,
        _ => FAILURE,
    }
}

fn demographics(e: &DemographicsError) -> u8 {
    match e {
        DemographicsError::Config(_) => CONFIG,
        DemographicsError::Transport(_) => TRANSPORT,
        DemographicsError::Schema(_) => SCHEMA,
        DemographicsError::Contract(_) => CONTRACT,
        DemographicsError::Query(_) => USAGE,
        DemographicsError::Cache(_) => FAILURE,
    }
}

fn audit(e: &AuditError) -> u8 {
    match e {
        AuditError::EmptyManifest => MISSING_UPSTREAM,
        AuditError::Artifact(a) => artifact(a),
        _ => FAILURE,
    }
}

fn generation(e: &GenerationError) -> u8 {
    match e {
        GenerationError::Artifact(a) => artifact(a),
        GenerationError::InvalidConfig(_) => CONFIG,
        GenerationError::InvalidParams(_) => USAGE,
        _ => FAILURE,
    }
}

fn sim(e: &SimError) -> u8 {
    match e {
        SimError::Config(_) => CONFIG,
        SimError::Artifact(a) => artifact(a),
        SimError::Audit(a) => audit(a),
        SimError::Generation(g) => generation(g),
        _ => FAILURE,
    }
}

fn classify(e: &(dyn Error + 'static)) -> Option<u8> {
    if e.is::<Usage>() {
        Some(USAGE)
    } else if e.is::<Config>() {
        Some(CONFIG)
    } else if e.is::<ToleranceFailure>() {
        Some(TOLERANCE)
    } else if let Some(d) = e.downcast_ref::<DemographicsError>() {
        Some(demographics(d))
    } else if let Some(a) = e.downcast_ref::<ArtifactError>() {
        Some(artifact(a))
    } else if let Some(a) = e.downcast_ref::<AuditError>() {
        Some(audit(a))
    } else if let Some(g) = e.downcast_ref::<GenerationError>() {
        Some(generation(g))
    } else {
        e.downcast_ref::<SimError>().map(sim)
    }
}

/// First recognised cause in the chain decides the code.
pub fn code_for(err: &anyhow::Error) -> u8 {
    err.chain().find_map(classify).unwrap_or(FAILURE)
}
