use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdmissionPolicy, PolicyShape};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "sharegate-policy";

/// Self-describing JSON container for policy parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub format_version: u32,
    pub d_e: usize,
    pub d_c: usize,
    pub provider_id: String,
    /// Parameter tensors by block name, row-major.
    pub tensors: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub epoch: Option<usize>,
}

impl Checkpoint {
    pub fn from_policy(policy: &AdmissionPolicy, provider_id: &str, epoch: Option<usize>) -> Self {
        let shape = policy.shape();
        let tensors = shape
            .blocks()
            .into_iter()
            .map(|b| {
                (
                    b.name.to_string(),
                    policy.params()[b.offset..b.offset + b.len].to_vec(),
                )
            })
            .collect();
        Checkpoint {
            format: FORMAT_NAME.into(),
            format_version: CHECKPOINT_FORMAT_VERSION,
            d_e: shape.d_e,
            d_c: shape.d_c,
            provider_id: provider_id.into(),
            tensors,
            epoch,
        }
    }

    /// Rebuilds the policy, failing if `expected_d_e` is given and differs.
    pub fn into_policy(self, expected_d_e: Option<usize>) -> Result<AdmissionPolicy> {
        if self.format != FORMAT_NAME || self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported checkpoint format {} v{}",
                self.format, self.format_version
            )));
        }
        if let Some(d) = expected_d_e {
            if d != self.d_e {
                return Err(Error::config(format!(
                    "checkpoint has d_e={}, embedding provider has d_e={d}",
                    self.d_e
                )));
            }
        }
        let shape = PolicyShape {
            d_e: self.d_e,
            d_c: self.d_c,
        };
        let mut params = Vec::with_capacity(shape.num_params());
        for b in shape.blocks() {
            let t = self
                .tensors
                .get(b.name)
                .ok_or_else(|| Error::config(format!("checkpoint missing tensor {}", b.name)))?;
            if t.len() != b.len {
                return Err(Error::config(format!(
                    "tensor {} has {} values, expected {}",
                    b.name,
                    t.len(),
                    b.len
                )));
            }
            params.extend_from_slice(t);
        }
        AdmissionPolicy::from_params(shape, params)
    }
}

pub fn save_checkpoint(
    path: &Path,
    policy: &AdmissionPolicy,
    provider_id: &str,
    epoch: Option<usize>,
) -> Result<()> {
    let ck = Checkpoint::from_policy(policy, provider_id, epoch);
    std::fs::write(path, serde_json::to_string_pretty(&ck)?)?;
    Ok(())
}

pub fn load_checkpoint(
    path: &Path,
    expected_d_e: Option<usize>,
) -> Result<(AdmissionPolicy, Checkpoint)> {
    let text = std::fs::read_to_string(path)?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    let policy = ck.clone().into_policy(expected_d_e)?;
    Ok((policy, ck))
}
