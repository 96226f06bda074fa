//! Line-oriented scenario files.
//!
//! ```text
//! # comment
//! DEVICE <id>
//! AT <id> <day> <slot> <cell> [weight]
//! DAY <day>
//! INFECT <id>
//! TRACE <id> <expected_total>
//! ```
//!
//! Days never go backwards. Devices at the same cell in the same slot hear
//! each other; `weight` is the exposure strength the listed device records
//! for what it hears there.

use psica_core::GroupElement;

use crate::error::{Result, TracingError};
use crate::world::World;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Record {
    Device(String),
    At {
        id: String,
        day: u64,
        slot: u64,
        cell: String,
        weight: Option<u64>,
    },
    Day(u64),
    Infect(String),
    Trace { id: String, expected: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub records: Vec<(usize, Record)>,
}

fn err(line: usize, message: impl Into<String>) -> TracingError {
    TracingError::Parse {
        line,
        message: message.into(),
    }
}

fn num(line: usize, field: &str, s: &str) -> Result<u64> {
    s.parse().map_err(|_| err(line, format!("{field} must be a non-negative integer, got {s:?}")))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        let mut day = 0;
        let mut declared = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let f: Vec<&str> = body.split_whitespace().collect();
            let known = |id: &str| {
                if declared.contains(id) {
                    Ok(id.to_string())
                } else {
                    Err(err(line, format!("device {id} used before DEVICE")))
                }
            };
            let rec = match (f[0], f.len()) {
                ("DEVICE", 2) => {
                    if !declared.insert(f[1].to_string()) {
                        return Err(err(line, format!("device {} declared twice", f[1])));
                    }
                    Record::Device(f[1].to_string())
                }
                ("AT", 5 | 6) => {
                    let d = num(line, "day", f[2])?;
                    if d < day {
                        return Err(err(line, format!("day {d} is before day {day}")));
                    }
                    day = d;
                    let slot = num(line, "slot", f[3])?;
                    if slot >= crate::suite::SLOTS_PER_DAY {
                        return Err(err(line, format!("slot {slot} outside 0..144")));
                    }
                    Record::At {
                        id: known(f[1])?,
                        day: d,
                        slot,
                        cell: f[4].to_string(),
                        weight: f.get(5).map(|w| num(line, "weight", w)).transpose()?,
                    }
                }
                ("DAY", 2) => {
                    let d = num(line, "day", f[1])?;
                    if d < day {
                        return Err(err(line, format!("day {d} is before day {day}")));
                    }
                    day = d;
                    Record::Day(d)
                }
                ("INFECT", 2) => Record::Infect(known(f[1])?),
                ("TRACE", 3) => Record::Trace {
                    id: known(f[1])?,
                    expected: num(line, "expected total", f[2])?,
                },
                (kw @ ("DEVICE" | "AT" | "DAY" | "INFECT" | "TRACE"), n) => {
                    return Err(err(line, format!("{kw} takes a different number of fields (got {})", n - 1)))
                }
                (kw, _) => return Err(err(line, format!("unknown record {kw:?}"))),
            };
            records.push((line, rec));
        }
        Ok(Scenario { records })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceCheck {
    pub line: usize,
    pub device: String,
    pub day: u64,
    pub expected: u64,
    pub total: GroupElement,
    pub deferred: usize,
}

impl TraceCheck {
    pub fn passed(&self) -> bool {
        self.deferred == 0 && self.total.values() == [self.expected]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScenarioReport {
    pub traces: Vec<TraceCheck>,
    pub uploads: u64,
    pub final_day: u64,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.traces.iter().all(TraceCheck::passed)
    }
}

pub fn run(scenario: &Scenario, world: &mut World) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::default();
    for (line, rec) in &scenario.records {
        match rec {
            Record::Device(id) => world.add_device(id)?,
            Record::At {
                id,
                day,
                slot,
                cell,
                weight,
            } => {
                world.at(id, *day, *slot, cell, *weight)?;
            }
            Record::Day(d) => {
                world.advance_to(*d)?;
            }
            Record::Infect(id) => {
                report.uploads += world.infect(id)?.inserted;
            }
            Record::Trace { id, expected } => {
                let out = world.trace(id)?;
                report.traces.push(TraceCheck {
                    line: *line,
                    device: id.clone(),
                    day: world.day(),
                    expected: *expected,
                    total: out.total,
                    deferred: out.deferred,
                });
            }
        }
    }
    report.final_day = world.day();
    Ok(report)
}
