//! Analytic MAC and parameter counts, model size and the power/memory budget.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use thiserror::Error;

/// Exact rational used for operation-count ratios.
pub type Rational = Ratio<u128>;

#[derive(Debug, Error, PartialEq)]
pub enum OpCountError {
    #[error("count overflows 64 bits")]
    Overflow,
    #[error("invalid layer: {0}")]
    InvalidSpec(String),
    #[error("layer {index} expects {expected} input channels but the previous layer produces {found}")]
    ChannelChain { index: usize, expected: u64, found: u64 },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid budget input: {0}")]
    InvalidBudget(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    Standard,
    Separable,
}

impl FromStr for ConvMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(ConvMode::Standard),
            "separable" => Ok(ConvMode::Separable),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

impl fmt::Display for ConvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvMode::Standard => "standard",
            ConvMode::Separable => "separable",
        })
    }
}

/// One same-padded convolution layer: kernel `lk`, `m` → `n` channels over an `lf × lf` map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub lk: u64,
    pub m: u64,
    pub n: u64,
    pub lf: u64,
    pub mode: ConvMode,
}

impl ConvSpec {
    pub fn new(lk: u64, m: u64, n: u64, lf: u64, mode: ConvMode) -> Result<Self, OpCountError> {
        let spec = ConvSpec { lk, m, n, lf, mode };
        spec.validate()?;
        Ok(spec)
    }

    pub fn standard(lk: u64, m: u64, n: u64, lf: u64) -> Result<Self, OpCountError> {
        ConvSpec::new(lk, m, n, lf, ConvMode::Standard)
    }

    pub fn validate(&self) -> Result<(), OpCountError> {
        if self.lk == 0 || self.m == 0 || self.n == 0 || self.lf == 0 {
            return Err(OpCountError::InvalidSpec("all dimensions must be >= 1".into()));
        }
        if self.lk.is_multiple_of(2) {
            return Err(OpCountError::InvalidSpec(format!(
                "kernel size {} must be odd",
                self.lk
            )));
        }
        Ok(())
    }

    pub fn with_mode(self, mode: ConvMode) -> Self {
        ConvSpec { mode, ..self }
    }
}

fn product(factors: &[u64]) -> Result<u64, OpCountError> {
    factors
        .iter()
        .try_fold(1u64, |acc, &f| acc.checked_mul(f))
        .ok_or(OpCountError::Overflow)
}

/// `lk² · m · n · lf²`
pub fn ops_standard(s: &ConvSpec) -> Result<u64, OpCountError> {
    s.validate()?;
    product(&[s.lk, s.lk, s.m, s.n, s.lf, s.lf])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeparableOps {
    pub depthwise: u64,
    pub pointwise: u64,
    pub total: u64,
}

/// Depthwise `lk² · m · lf²` plus pointwise `m · lf² · n`.
pub fn ops_separable(s: &ConvSpec) -> Result<SeparableOps, OpCountError> {
    s.validate()?;
    let depthwise = product(&[s.lk, s.lk, s.m, s.lf, s.lf])?;
    let pointwise = product(&[s.m, s.lf, s.lf, s.n])?;
    let total = depthwise.checked_add(pointwise).ok_or(OpCountError::Overflow)?;
    Ok(SeparableOps {
        depthwise,
        pointwise,
        total,
    })
}

/// MACs of the layer in its own mode.
pub fn ops(s: &ConvSpec) -> Result<u64, OpCountError> {
    match s.mode {
        ConvMode::Standard => ops_standard(s),
        ConvMode::Separable => ops_separable(s).map(|o| o.total),
    }
}

/// Separable over standard MACs, reduced exactly.
pub fn reduction_ratio(s: &ConvSpec) -> Result<Rational, OpCountError> {
    let separable = ops_separable(s)?.total;
    let standard = ops_standard(s)?;
    Ok(Rational::new(u128::from(separable), u128::from(standard)))
}

/// Closed form `1/n + 1/lk²`.
pub fn reduction_ratio_closed_form(n: u64, lk: u64) -> Rational {
    Rational::new(1, u128::from(n)) + Rational::new(1, u128::from(lk) * u128::from(lk))
}

pub fn params_standard(s: &ConvSpec) -> Result<u64, OpCountError> {
    s.validate()?;
    product(&[s.lk, s.lk, s.m, s.n])
}

pub fn params_separable(s: &ConvSpec) -> Result<u64, OpCountError> {
    s.validate()?;
    product(&[s.lk, s.lk, s.m])?
        .checked_add(product(&[s.m, s.n])?)
        .ok_or(OpCountError::Overflow)
}

pub fn params(s: &ConvSpec) -> Result<u64, OpCountError> {
    match s.mode {
        ConvMode::Standard => params_standard(s),
        ConvMode::Separable => params_separable(s),
    }
}

/// Ordered layers of a network. Bias terms are not modelled.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub layers: Vec<ConvSpec>,
    pub bytes_per_weight: u64,
}

impl Default for NetSpec {
    fn default() -> Self {
        NetSpec {
            layers: Vec::new(),
            bytes_per_weight: 4,
        }
    }
}

impl NetSpec {
    pub fn new(layers: Vec<ConvSpec>, bytes_per_weight: u64) -> Result<Self, OpCountError> {
        let net = NetSpec {
            layers,
            bytes_per_weight,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<(), OpCountError> {
        if self.bytes_per_weight == 0 {
            return Err(OpCountError::InvalidSpec("bytes_per_weight must be >= 1".into()));
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        for (index, pair) in self.layers.windows(2).enumerate() {
            if pair[0].n != pair[1].m {
                return Err(OpCountError::ChannelChain {
                    index: index + 1,
                    expected: pair[1].m,
                    found: pair[0].n,
                });
            }
        }
        Ok(())
    }

    /// `count` identical `lk × lk`, `channels → channels` layers on an `lf × lf` map.
    pub fn uniform(count: usize, lk: u64, channels: u64, lf: u64, mode: ConvMode) -> Result<Self, OpCountError> {
        let layer = ConvSpec::new(lk, channels, channels, lf, mode)?;
        NetSpec::new(vec![layer; count], 4)
    }

    pub fn with_mode(&self, mode: ConvMode) -> NetSpec {
        NetSpec {
            layers: self.layers.iter().map(|l| l.with_mode(mode)).collect(),
            bytes_per_weight: self.bytes_per_weight,
        }
    }

    pub fn total_params(&self) -> Result<u64, OpCountError> {
        self.layers
            .iter()
            .try_fold(0u64, |acc, l| acc.checked_add(params(l)?).ok_or(OpCountError::Overflow))
    }

    pub fn total_ops(&self) -> Result<u64, OpCountError> {
        self.layers
            .iter()
            .try_fold(0u64, |acc, l| acc.checked_add(ops(l)?).ok_or(OpCountError::Overflow))
    }

    /// Parses one layer per line as `mode lk m n lf`. `#` starts a comment and
    /// an optional `bytes_per_weight B` line overrides the default of 4.
    pub fn parse(text: &str) -> Result<Self, OpCountError> {
        let mut net = NetSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |reason: String| OpCountError::Parse { line: line_no, reason };
            let num = |s: &str| -> Result<u64, OpCountError> {
                s.parse()
                    .map_err(|_| parse_err(format!("{s:?} is not a non-negative integer")))
            };
            if fields[0] == "bytes_per_weight" {
                if fields.len() != 2 {
                    return Err(parse_err("expected `bytes_per_weight B`".into()));
                }
                net.bytes_per_weight = num(fields[1])?;
                continue;
            }
            if fields.len() != 5 {
                return Err(parse_err(format!(
                    "expected `mode lk m n lf`, found {} fields",
                    fields.len()
                )));
            }
            let mode: ConvMode = fields[0].parse().map_err(parse_err)?;
            let spec = ConvSpec::new(num(fields[1])?, num(fields[2])?, num(fields[3])?, num(fields[4])?, mode)
                .map_err(|e| parse_err(e.to_string()))?;
            net.layers.push(spec);
        }
        net.validate()?;
        Ok(net)
    }
}

/// Sum of layer parameters times `bytes_per_weight`.
pub fn model_bytes(net: &NetSpec) -> Result<u64, OpCountError> {
    net.total_params()?
        .checked_mul(net.bytes_per_weight)
        .ok_or(OpCountError::Overflow)
}

/// Inputs of the power model `P = f · N · E`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParams {
    /// Inferences per second.
    pub f_o: f64,
    /// Operations per inference.
    pub n_ops: f64,
    /// Joules per operation.
    pub e_o: f64,
}

impl PowerParams {
    pub fn new(f_o: f64, n_ops: f64, e_o: f64) -> Result<Self, OpCountError> {
        let p = PowerParams { f_o, n_ops, e_o };
        for (name, v) in [("f_o", f_o), ("n_ops", n_ops), ("e_o", e_o)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(OpCountError::InvalidBudget(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(p)
    }
}

pub fn power(p: &PowerParams) -> f64 {
    p.f_o * p.n_ops * p.e_o
}

/// Printed with every budget report: the model is evaluated literally.
pub const POWER_NOTE: &str = "p_w = f_o * n_ops * e_o evaluated as written; 10 Hz x 1e9 ops x 600 pJ gives 6 W, twice the often quoted estimate of about 3 W for these inputs";

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetReport {
    pub p_w: f64,
    pub battery_w: f64,
    pub battery_fraction: f64,
    pub model_bytes: u64,
    pub ram_bytes: u64,
    pub ram_fraction: f64,
    pub notes: String,
}

impl BudgetReport {
    pub const CSV_HEADER: &'static str = "p_w,battery_w,battery_fraction,model_bytes,ram_bytes,ram_fraction,notes";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},\"{}\"",
            self.p_w,
            self.battery_w,
            self.battery_fraction,
            self.model_bytes,
            self.ram_bytes,
            self.ram_fraction,
            self.notes
        )
    }
}

pub fn budget_report(
    p: &PowerParams,
    battery_w: f64,
    model: &NetSpec,
    ram_bytes: u64,
) -> Result<BudgetReport, OpCountError> {
    if !(battery_w.is_finite() && battery_w > 0.0) {
        return Err(OpCountError::InvalidBudget(format!(
            "battery_w must be positive, got {battery_w}"
        )));
    }
    if ram_bytes == 0 {
        return Err(OpCountError::InvalidBudget("ram_bytes must be positive".into()));
    }
    let p_w = power(p);
    let bytes = model_bytes(model)?;
    Ok(budget_from_parts(p_w, battery_w, bytes, ram_bytes))
}

/// Budget fractions from a precomputed power draw and model size.
pub fn budget_from_parts(p_w: f64, battery_w: f64, model_bytes: u64, ram_bytes: u64) -> BudgetReport {
    BudgetReport {
        p_w,
        battery_w,
        battery_fraction: p_w / battery_w,
        model_bytes,
        ram_bytes,
        ram_fraction: model_bytes as f64 / ram_bytes as f64,
        notes: POWER_NOTE.to_string(),
    }
}

pub const OPCOUNT_CSV_HEADER: &str = "layer,mode,lk,m,n,lf,ops_standard,ops_depthwise,ops_pointwise,ops_separable,ratio,ratio_decimal,params_standard,params_separable";

pub fn opcount_csv_row(index: usize, s: &ConvSpec) -> Result<String, OpCountError> {
    let sep = ops_separable(s)?;
    let ratio = reduction_ratio(s)?;
    Ok(format!(
        "{index},{},{},{},{},{},{},{},{},{},{}/{},{:.6},{},{}",
        s.mode,
        s.lk,
        s.m,
        s.n,
        s.lf,
        ops_standard(s)?,
        sep.depthwise,
        sep.pointwise,
        sep.total,
        ratio.numer(),
        ratio.denom(),
        *ratio.numer() as f64 / *ratio.denom() as f64,
        params_standard(s)?,
        params_separable(s)?
    ))
}
