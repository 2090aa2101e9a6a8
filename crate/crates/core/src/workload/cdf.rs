use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum CdfError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty distribution")]
    Empty,
    #[error("breakpoint {0}: sizes must be strictly increasing")]
    SizeOrder(usize),
    #[error("breakpoint {0}: probabilities must be strictly increasing in (0, 1]")]
    ProbOrder(usize),
    #[error("last cumulative probability is {0}, expected 1")]
    NotNormalised(f64),
    #[error("distribution has zero mean")]
    ZeroMean,
}

/// Empirical flow-size distribution given by `(size, cumulative
/// probability)` breakpoints. The first breakpoint carries a point mass;
/// sizes are linear between consecutive breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSizeCdf<T> {
    points: Vec<(T, T)>,
}

impl<T: Scalar> FlowSizeCdf<T> {
    pub fn new(points: Vec<(T, T)>) -> Result<Self, CdfError> {
        if points.is_empty() {
            return Err(CdfError::Empty);
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(CdfError::SizeOrder(i + 1));
            }
            if w[1].1 <= w[0].1 {
                return Err(CdfError::ProbOrder(i + 1));
            }
        }
        if points[0].1 <= T::zero() || points[0].0 < T::zero() {
            return Err(CdfError::ProbOrder(0));
        }
        let last = points[points.len() - 1].1;
        if (last - T::one()).abs() > T::lit(1e-6) {
            return Err(CdfError::NotNormalised(last.to_f64().unwrap_or(f64::NAN)));
        }
        let cdf = FlowSizeCdf { points };
        if cdf.mean() <= T::zero() {
            return Err(CdfError::ZeroMean);
        }
        Ok(cdf)
    }

    pub fn points(&self) -> &[(T, T)] {
        &self.points
    }

    /// Inverse CDF. `u` is clamped to [0, 1].
    pub fn quantile(&self, u: T) -> T {
        let u = u.max(T::zero()).min(T::one());
        let (s0, p0) = self.points[0];
        if u <= p0 {
            return s0;
        }
        let i = self.points.partition_point(|&(_, p)| p < u);
        let Some(&(s1, p1)) = self.points.get(i) else {
            return self.points[self.points.len() - 1].0;
        };
        let (sa, pa) = self.points[i - 1];
        sa + (s1 - sa) * (u - pa) / (p1 - pa)
    }

    /// Analytic mean of the piecewise-linear distribution.
    pub fn mean(&self) -> T {
        let two = T::lit(2.0);
        let (s0, p0) = self.points[0];
        self.points
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) * (w[0].0 + w[1].0) / two)
            .fold(s0 * p0, |a, b| a + b)
    }

    pub fn max_size(&self) -> T {
        self.points[self.points.len() - 1].0
    }

    /// Draws a size in whole bytes (at least one).
    pub fn sample_bytes(&self, u: T) -> u64 {
        self.quantile(u).round().to_u64().unwrap_or(u64::MAX).max(1)
    }
}

impl<T: Scalar> FromStr for FlowSizeCdf<T> {
    type Err = CdfError;

    fn from_str(text: &str) -> Result<Self, CdfError> {
        let mut points = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let field = |v: Option<&str>, what: &str| -> Result<T, CdfError> {
                let s = v.ok_or_else(|| CdfError::Parse {
                    line: n + 1,
                    msg: format!("missing {what}"),
                })?;
                s.parse::<f64>()
                    .ok()
                    .and_then(T::from_f64)
                    .ok_or_else(|| CdfError::Parse {
                        line: n + 1,
                        msg: format!("bad {what} {s:?}"),
                    })
            };
            let size = field(it.next(), "size")?;
            let prob = field(it.next(), "probability")?;
            if it.next().is_some() {
                return Err(CdfError::Parse {
                    line: n + 1,
                    msg: "trailing fields".into(),
                });
            }
            points.push((size, prob));
        }
        FlowSizeCdf::new(points)
    }
}

impl<T: Scalar> fmt::Display for FlowSizeCdf<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (s, p) in &self.points {
            writeln!(f, "{s} {p}")?;
        }
        Ok(())
    }
}

/// Flow-size distributions shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workload {
    WebSearch,
    DataMining,
    Educational,
    PrivateDc,
}

impl Workload {
    pub const ALL: [Workload; 4] = [
        Workload::WebSearch,
        Workload::DataMining,
        Workload::Educational,
        Workload::PrivateDc,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "websearch" | "web-search" => Some(Workload::WebSearch),
            "datamining" | "data-mining" => Some(Workload::DataMining),
            "educational" | "edu" => Some(Workload::Educational),
            "privatedc" | "private-dc" | "prv" => Some(Workload::PrivateDc),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Workload::WebSearch => "websearch",
            Workload::DataMining => "datamining",
            Workload::Educational => "educational",
            Workload::PrivateDc => "privatedc",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            Workload::WebSearch => include_str!("../../data/websearch.cdf"),
            Workload::DataMining => include_str!("../../data/datamining.cdf"),
            Workload::Educational => include_str!("../../data/educational.cdf"),
            Workload::PrivateDc => include_str!("../../data/privatedc.cdf"),
        }
    }

    pub fn cdf<T: Scalar>(self) -> FlowSizeCdf<T> {
        self.source()
            .parse()
            .expect("bundled distribution is valid")
    }
}
