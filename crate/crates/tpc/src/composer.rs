//! Composer: turn a composition request into a loadable design artifact.
//!
//! A *composition* names an architecture and a set of kernels with instance
//! counts. The composer validates it against a platform (slot budget) and a
//! kernel registry (known ids), then instantiates the ThreadPool layout and
//! packages it as a [`DesignArtifact`] — the JSON file that stands in for a
//! synthesized bitstream. Artifacts serialize deterministically: stable key
//! order, two-space indentation, trailing newline.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelRegistry;
use crate::platform::PlatformModel;
use crate::threadpool::{self, PeLayout};

/// Artifact format understood by this runtime.
pub const FORMAT_VERSION: u32 = 1;

/// One kernel entry in a composition: which kernel, how many PEs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionEntry {
    pub id: u32,
    pub name: String,
    pub count: u32,
}

/// A composition request as written by the user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Composition {
    pub architecture: String,
    pub kernels: Vec<CompositionEntry>,
}

impl Composition {
    /// Parse and structurally check a composition document.
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Composition = serde_json::from_str(text).map_err(syntax_error)?;
        c.check()?;
        Ok(c)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("composition serializes");
        s.push('\n');
        s
    }

    /// Structural checks that need no platform or registry: at least one
    /// kernel, no duplicate ids, no zero instance counts.
    fn check(&self) -> Result<()> {
        if self.kernels.is_empty() {
            return Err(Error::EmptyComposition);
        }
        let mut seen = std::collections::BTreeSet::new();
        for entry in &self.kernels {
            if entry.count == 0 {
                return Err(Error::ZeroPECount(entry.id));
            }
            if !seen.insert(entry.id) {
                return Err(Error::DuplicateKernel(entry.id));
            }
        }
        Ok(())
    }
}

fn syntax_error(e: serde_json::Error) -> Error {
    Error::SyntaxError {
        line: e.line(),
        message: e.to_string(),
    }
}

/// One reason a composition cannot be built on a platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    UnknownKernel { id: u32, name: String },
    SlotBudgetExceeded { required: usize, budget: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownKernel { id, name } => {
                write!(f, "kernel {id} ({name}) is not in the registry")
            }
            Violation::SlotBudgetExceeded { required, budget } => {
                write!(f, "composition needs {required} PE slots, platform offers {budget}")
            }
        }
    }
}

/// Everything `validate` found, pass or fail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub platform: String,
    pub required_slots: usize,
    pub slot_budget: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(
                f,
                "{}: ok ({}/{} PE slots)",
                self.platform, self.required_slots, self.slot_budget
            );
        }
        write!(f, "{}: ", self.platform)?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Check a composition against a platform and kernel registry.
pub fn validate(
    composition: &Composition,
    platform: &PlatformModel,
    kernels: &KernelRegistry,
) -> ValidationReport {
    let required: usize = composition.kernels.iter().map(|k| k.count as usize).sum();
    let mut violations = Vec::new();
    for entry in &composition.kernels {
        if kernels.lookup(entry.id).is_err() {
            violations.push(Violation::UnknownKernel {
                id: entry.id,
                name: entry.name.clone(),
            });
        }
    }
    if required > platform.slot_budget {
        violations.push(Violation::SlotBudgetExceeded {
            required,
            budget: platform.slot_budget,
        });
    }
    ValidationReport {
        platform: platform.name.clone(),
        required_slots: required,
        slot_budget: platform.slot_budget,
        violations,
    }
}

/// The output of composition: a deterministic, loadable description of a
/// ThreadPool design for one platform. Fields are declared in alphabetical
/// order so the serialized key order is documented by the struct itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignArtifact {
    pub architecture: String,
    pub format_version: u32,
    pub pe_table: Vec<PeLayout>,
    pub platform_name: String,
    pub window_size: u64,
}

impl DesignArtifact {
    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: DesignArtifact = serde_json::from_str(text).map_err(syntax_error)?;
        if artifact.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(artifact.format_version));
        }
        Ok(artifact)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Validate and build: the whole composer pipeline in one call.
pub fn compose(
    composition: &Composition,
    platform: &PlatformModel,
    kernels: &KernelRegistry,
) -> Result<DesignArtifact> {
    composition.check()?;
    let report = validate(composition, platform, kernels);
    if !report.is_ok() {
        return Err(Error::ValidationFailed(report));
    }
    let pool = threadpool::instantiate(composition, &composition.architecture, platform, kernels)?;
    Ok(DesignArtifact {
        architecture: pool.architecture,
        format_version: FORMAT_VERSION,
        pe_table: pool.pes,
        platform_name: platform.name.clone(),
        window_size: pool.register_map.window_size,
    })
}
