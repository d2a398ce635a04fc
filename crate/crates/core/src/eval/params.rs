//! Parameter accounting per module and per profile.

use std::collections::BTreeMap;

use candle_core::DType;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gan::{Generator, GeneratorConfig, SizeProfile};
use crate::mfnet::{MfNet, MfNetConfig};
use crate::nn::ParamStore;

/// Published totals in millions of parameters.
pub const TARGET_RT_M: f64 = 15.64;
pub const TARGET_NRT_M: f64 = 19.15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub profile: String,
    /// `(module, count)` in signal-flow order.
    pub modules: Vec<(String, usize)>,
    pub generator: usize,
    pub mfnet: usize,
    pub total: usize,
    pub target_m: Option<f64>,
}

impl ParamReport {
    pub fn total_m(&self) -> f64 {
        self.total as f64 / 1e6
    }

    /// Signed percentage deviation from the target.
    pub fn deviation_pct(&self) -> Option<f64> {
        self.target_m.map(|t| 100.0 * (self.total_m() - t) / t)
    }

    pub fn render(&self) -> String {
        let mut s = format!("profile {}\n", self.profile);
        for (m, c) in &self.modules {
            s += &format!("  {m:<20} {c:>12}\n");
        }
        s += &format!("  {:<20} {:>12}\n", "generator", self.generator);
        s += &format!("  {:<20} {:>12}\n", "mfnet", self.mfnet);
        s += &format!("  {:<20} {:>12}  ({:.2} M)\n", "total", self.total, self.total_m());
        if let (Some(t), Some(d)) = (self.target_m, self.deviation_pct()) {
            s += &format!("  target {t:.2} M, deviation {d:+.1}%\n");
        }
        s
    }
}

const MODULE_ORDER: [&str; 9] = [
    "gen.encoder",
    "gen.enc_dense",
    "gen.s_tcm",
    "gen.tf_lstm",
    "gen.dec_dense",
    "gen.decoder",
    "mfnet.stage1",
    "mfnet.low",
    "mfnet.high",
];

fn module_of(name: &str) -> String {
    let (scope, rest) = name.split_once('.').unwrap_or((name, ""));
    let part = rest.split('.').next().unwrap_or_default();
    let label = if part.ends_with("_dense") || scope == "mfnet" {
        part
    } else {
        match part.trim_end_matches("_act").trim_end_matches(|c: char| c.is_ascii_digit()) {
            "enc" => "encoder",
            "dec" => "decoder",
            "tcm" => "s_tcm",
            "tf" => "tf_lstm",
            other => other,
        }
    };
    format!("{scope}.{label}")
}

fn group(ps: &ParamStore, counts: &mut BTreeMap<String, usize>) {
    for (name, var) in ps.named() {
        *counts.entry(module_of(name)).or_default() += var.elem_count();
    }
}

/// Build both networks and count their trainable scalars.
pub fn report_params(gan: &GeneratorConfig, mfnet: &MfNetConfig) -> Result<ParamReport> {
    let mut gp = ParamStore::new(0, DType::F32);
    Generator::new(&mut gp, gan)?;
    let mut mp = ParamStore::new(0, DType::F32);
    MfNet::new(&mut mp, mfnet)?;
    let mut counts = BTreeMap::new();
    group(&gp, &mut counts);
    group(&mp, &mut counts);
    let mut modules: Vec<(String, usize)> = MODULE_ORDER
        .iter()
        .filter_map(|m| counts.remove(*m).map(|c| (m.to_string(), c)))
        .collect();
    modules.extend(counts);
    let target_m = match (gan.profile, mfnet.profile) {
        (SizeProfile::Rt, SizeProfile::Rt) => Some(TARGET_RT_M),
        (SizeProfile::Nrt, SizeProfile::Nrt) => Some(TARGET_NRT_M),
        _ => None,
    };
    let profile = match target_m {
        Some(_) => format!("{:?}", gan.profile).to_lowercase(),
        None => "custom".to_string(),
    };
    Ok(ParamReport {
        profile,
        modules,
        generator: gp.count(),
        mfnet: mp.count(),
        total: gp.count() + mp.count(),
        target_m,
    })
}

pub fn report_profiles() -> Result<Vec<ParamReport>> {
    Ok(vec![
        report_params(&GeneratorConfig::rt(), &MfNetConfig::rt())?,
        report_params(&GeneratorConfig::nrt(), &MfNetConfig::nrt())?,
    ])
}
