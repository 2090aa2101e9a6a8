use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::sim::SimTime;
use crate::workload::SizeClass;

use super::recovery::RecoveryEvent;

/// FCT above which a small flow counts as having missed its deadline.
pub const DEADLINE: SimTime = SimTime::from_millis(200);

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("flow {0} recorded twice")]
    DuplicateFlow(u64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unexpected csv header: {0}")]
    Header(String),
}

/// Outcome of one flow. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub flow_id: u64,
    pub src: usize,
    pub dst: usize,
    /// Empty for flows that send for the whole run.
    pub size_bytes: Option<u64>,
    pub class: SizeClass,
    pub start_us: u64,
    /// Empty when the run ended first.
    pub end_us: Option<u64>,
    pub fct_us: Option<u64>,
    pub rto_events: u32,
    pub frr_events: u32,
    pub rack_assisted_frr_events: u32,
    pub spoofed_acks_received: u32,
    pub deadline_missed: bool,
}

pub const FLOW_CSV_HEADER: &str = "flow_id,src,dst,size_bytes,class,start_us,end_us,fct_us,rto_events,frr_events,rack_assisted_frr_events,spoofed_acks_received,deadline_missed";

pub fn deadline_missed(class: SizeClass, fct: Option<SimTime>) -> bool {
    class == SizeClass::Small && fct.is_some_and(|f| f > DEADLINE)
}

impl FlowRecord {
    pub fn completed(&self) -> bool {
        self.fct_us.is_some()
    }
}

/// All per-flow and per-recovery results of one run.
#[derive(Debug, Default, Clone)]
pub struct RunDataset {
    flows: Vec<FlowRecord>,
    ids: HashSet<u64>,
    pub recovery: Vec<RecoveryEvent>,
}

impl RunDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_flow(&mut self, r: FlowRecord) -> Result<(), MetricsError> {
        if !self.ids.insert(r.flow_id) {
            return Err(MetricsError::DuplicateFlow(r.flow_id));
        }
        self.flows.push(r);
        Ok(())
    }

    pub fn flows(&self) -> &[FlowRecord] {
        &self.flows
    }

    pub fn into_flows(self) -> Vec<FlowRecord> {
        self.flows
    }
}

pub fn write_flows<W: Write>(w: W, flows: &[FlowRecord]) -> Result<(), MetricsError> {
    let mut wr = csv::Writer::from_writer(w);
    if flows.is_empty() {
        wr.write_record(FLOW_CSV_HEADER.split(','))?;
    }
    for f in flows {
        wr.serialize(f)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_flows<R: Read>(r: R) -> Result<Vec<FlowRecord>, MetricsError> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != FLOW_CSV_HEADER {
        return Err(MetricsError::Header(header));
    }
    rd.deserialize()
        .map(|r| r.map_err(MetricsError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, fct: Option<u64>, class: SizeClass) -> FlowRecord {
        FlowRecord {
            flow_id: id,
            src: 1,
            dst: 2,
            size_bytes: Some(14_600),
            class,
            start_us: 10,
            end_us: fct.map(|f| f + 10),
            fct_us: fct,
            rto_events: 1,
            frr_events: 2,
            rack_assisted_frr_events: 1,
            spoofed_acks_received: 3,
            deadline_missed: deadline_missed(class, fct.map(SimTime::from_micros)),
        }
    }

    #[test]
    fn deadline_is_strict_and_small_only() {
        let ms = |v| Some(SimTime::from_millis(v));
        assert!(deadline_missed(SizeClass::Small, ms(250)));
        assert!(!deadline_missed(SizeClass::Small, ms(200)));
        assert!(!deadline_missed(SizeClass::Medium, ms(900)));
        assert!(!deadline_missed(SizeClass::Small, None));
    }

    #[test]
    fn duplicate_flow_id_is_rejected() {
        let mut d = RunDataset::new();
        d.record_flow(rec(1, Some(5), SizeClass::Small)).unwrap();
        assert!(matches!(
            d.record_flow(rec(1, Some(5), SizeClass::Small)),
            Err(MetricsError::DuplicateFlow(1))
        ));
    }

    #[test]
    fn csv_round_trip_with_exact_header() {
        let mut big = rec(2, None, SizeClass::Large);
        big.size_bytes = None;
        let flows = vec![rec(1, Some(250_000), SizeClass::Small), big];
        let mut buf = Vec::new();
        write_flows(&mut buf, &flows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), FLOW_CSV_HEADER);
        assert!(text.lines().nth(2).unwrap().contains(",,"));
        assert_eq!(read_flows(&buf[..]).unwrap(), flows);
    }

    #[test]
    fn empty_dataset_still_has_header() {
        let mut buf = Vec::new();
        write_flows(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), FLOW_CSV_HEADER);
    }
}
