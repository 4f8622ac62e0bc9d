use std::fmt;

use serde::{Deserialize, Serialize};

use super::backend::LlmBackendConfig;
use super::CallRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub calls: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: f64,
    /// Some token counts were estimated rather than reported by the backend.
    pub approximate: bool,
    /// Percent of tokens saved against the counterfactual, when one is given.
    pub reduction_percent: Option<f64>,
}

pub fn price(input_tokens: u64, output_tokens: u64, cfg: &LlmBackendConfig) -> f64 {
    input_tokens as f64 * cfg.input_price / 1e6 + output_tokens as f64 * cfg.output_price / 1e6
}

/// Percent reduction of `actual` relative to `counterfactual` token counts.
pub fn reduction_percent(counterfactual: u64, actual: u64) -> f64 {
    if counterfactual == 0 {
        return 0.0;
    }
    100.0 * (1.0 - actual as f64 / counterfactual as f64)
}

pub fn estimate_cost(
    records: &[CallRecord],
    cfg: &LlmBackendConfig,
    counterfactual_tokens: Option<u64>,
) -> CostReport {
    let input_tokens = records.iter().map(|r| r.input_tokens).sum();
    let output_tokens = records.iter().map(|r| r.output_tokens).sum();
    report(
        records.len(),
        input_tokens,
        output_tokens,
        records.iter().any(|r| r.usage_estimated),
        cfg,
        counterfactual_tokens,
    )
}

/// Cost from raw token totals.
pub fn report(
    calls: usize,
    input_tokens: u64,
    output_tokens: u64,
    approximate: bool,
    cfg: &LlmBackendConfig,
    counterfactual_tokens: Option<u64>,
) -> CostReport {
    CostReport {
        calls,
        input_tokens,
        output_tokens,
        cost_usd: price(input_tokens, output_tokens, cfg),
        approximate,
        reduction_percent: counterfactual_tokens
            .map(|cf| reduction_percent(cf, input_tokens + output_tokens)),
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "calls: {}", self.calls)?;
        writeln!(f, "input_tokens: {}", self.input_tokens)?;
        writeln!(f, "output_tokens: {}", self.output_tokens)?;
        write!(f, "cost_usd: {:.4}", self.cost_usd)?;
        if self.approximate {
            write!(f, " (approximate: some token counts estimated as bytes/4)")?;
        }
        if let Some(r) = self.reduction_percent {
            write!(f, "\nreduction_percent: {r:.2}")?;
        }
        Ok(())
    }
}
