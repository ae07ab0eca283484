use std::collections::HashMap;
use std::io::{Read, Write};

use super::types::{CpuReading, Deployment, RawDeployment, RawTrace, RawVmSeries, VmSeries};
use super::DataError;

pub const TRACE_HEADER: [&str; 6] = [
    "timestamp",
    "vm_id",
    "deployment_id",
    "min_cpu",
    "avg_cpu",
    "max_cpu",
];

/// Declares how a trace file's CPU columns are encoded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSchema {
    /// CPU columns are percentages in [0,100] rather than fractions in [0,1].
    pub percent: bool,
    pub interval_seconds: i64,
}

impl TraceSchema {
    pub fn fractions(interval_seconds: i64) -> Self {
        TraceSchema {
            percent: false,
            interval_seconds,
        }
    }

    pub fn percentages(interval_seconds: i64) -> Self {
        TraceSchema {
            percent: true,
            interval_seconds,
        }
    }
}

/// Parses a `timestamp,vm_id,deployment_id,min_cpu,avg_cpu,max_cpu` table.
///
/// Rows are grouped by deployment and VM in first-seen order. Within a VM,
/// timestamps must be strictly ascending and on the interval grid anchored at
/// the VM's first row; gaps are allowed here and resolved by
/// [`filter_long_running`]. Values above the capacity cap are clamped; rows
/// violating min <= avg <= max are rejected.
pub fn parse_trace<R: Read>(reader: R, schema: &TraceSchema) -> Result<RawTrace, DataError> {
    if schema.interval_seconds <= 0 {
        return Err(DataError::InvalidInterval(schema.interval_seconds));
    }
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let mut deployments: Vec<RawDeployment> = Vec::new();
    let mut dep_index: HashMap<String, usize> = HashMap::new();
    // (deployment index, vm id) -> vm index within that deployment.
    let mut vm_index: HashMap<(usize, String), usize> = HashMap::new();

    {
        let headers = csv_reader.headers().map_err(|e| DataError::Malformed {
            line: 1,
            message: format!("unreadable header: {e}"),
        })?;
        // A zero-byte input has no header row and means an empty trace.
        if headers.len() > 0 {
            let got: Vec<&str> = headers.iter().collect();
            if got != TRACE_HEADER {
                return Err(DataError::Malformed {
                    line: 1,
                    message: format!(
                        "expected header {}, got {}",
                        TRACE_HEADER.join(","),
                        got.join(",")
                    ),
                });
            }
        }
    }

    for record in csv_reader.records() {
        let record = record.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line())
                .unwrap_or(0);
            DataError::Malformed {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 6 {
            return Err(DataError::Malformed {
                line,
                message: format!("expected 6 columns, got {}", record.len()),
            });
        }

        let timestamp: i64 = parse_field(&record[0], "timestamp", line)?;
        let vm_id = record[1].to_string();
        let deployment_id = record[2].to_string();
        let min = parse_cpu(&record[3], "min_cpu", line, schema)?;
        let avg = parse_cpu(&record[4], "avg_cpu", line, schema)?;
        let max = parse_cpu(&record[5], "max_cpu", line, schema)?;
        if !(min <= avg && avg <= max) {
            return Err(DataError::ChannelOrder {
                line,
                min,
                avg,
                max,
            });
        }

        let di = *dep_index.entry(deployment_id.clone()).or_insert_with(|| {
            deployments.push(RawDeployment {
                deployment_id,
                vms: Vec::new(),
            });
            deployments.len() - 1
        });
        let vi = *vm_index
            .entry((di, vm_id.clone()))
            .or_insert_with(|| {
                deployments[di].vms.push(RawVmSeries {
                    vm_id: vm_id.clone(),
                    rows: Vec::new(),
                });
                deployments[di].vms.len() - 1
            });

        let rows = &mut deployments[di].vms[vi].rows;
        if let Some(&(last, _)) = rows.last() {
            if timestamp == last {
                return Err(DataError::DuplicateReading {
                    line,
                    vm_id,
                    timestamp,
                });
            }
            if timestamp < last {
                return Err(DataError::OutOfOrder {
                    line,
                    vm_id,
                    timestamp,
                });
            }
            let anchor = rows[0].0;
            if (timestamp - anchor) % schema.interval_seconds != 0 {
                return Err(DataError::Misaligned {
                    line,
                    timestamp,
                    interval_seconds: schema.interval_seconds,
                    anchor,
                });
            }
        }
        rows.push((timestamp, CpuReading::new(min, avg, max)));
    }

    Ok(RawTrace {
        interval_seconds: schema.interval_seconds,
        deployments,
    })
}

fn parse_field<T: std::str::FromStr>(raw: &str, name: &str, line: u64) -> Result<T, DataError> {
    raw.trim().parse().map_err(|_| DataError::Malformed {
        line,
        message: format!("unparsable {name} value {raw:?}"),
    })
}

fn parse_cpu(raw: &str, name: &str, line: u64, schema: &TraceSchema) -> Result<f64, DataError> {
    let value: f64 = parse_field(raw, name, line)?;
    if !value.is_finite() || value < 0.0 {
        return Err(DataError::Malformed {
            line,
            message: format!("{name} value {value} is outside the valid range"),
        });
    }
    let cap = if schema.percent { 100.0 } else { 1.0 };
    // Trace noise occasionally reports slightly over capacity; clamp it.
    let clamped = value.min(cap);
    Ok(if schema.percent {
        clamped / 100.0
    } else {
        clamped
    })
}

/// Keeps exactly the deployments in which every VM covers the first
/// `required_span_seconds` of the trace with no gaps; other deployments are
/// dropped whole. Surviving series are truncated to that shared window.
pub fn filter_long_running(
    trace: &RawTrace,
    required_span_seconds: i64,
) -> Result<Vec<Deployment>, DataError> {
    let interval = trace.interval_seconds;
    if interval <= 0 {
        return Err(DataError::InvalidInterval(interval));
    }
    if required_span_seconds <= 0 || required_span_seconds % interval != 0 {
        return Err(DataError::InvalidSpan {
            required_span_seconds,
            interval_seconds: interval,
        });
    }
    let steps = (required_span_seconds / interval) as usize;

    let global_start = trace
        .deployments
        .iter()
        .flat_map(|d| d.vms.iter())
        .filter_map(|vm| vm.rows.first())
        .map(|&(ts, _)| ts)
        .min();
    let global_start = match global_start {
        Some(ts) => ts,
        None => return Ok(Vec::new()),
    };

    let mut kept = Vec::new();
    for raw in &trace.deployments {
        if raw.vms.is_empty() {
            continue;
        }
        let covered = raw.vms.iter().all(|vm| {
            // Rows are strictly ascending on the grid anchored at the first
            // row, so matching endpoints imply the window has no gaps.
            vm.rows.len() >= steps
                && vm.rows[0].0 == global_start
                && vm.rows[steps - 1].0 == global_start + (steps as i64 - 1) * interval
        });
        if !covered {
            continue;
        }
        let vms = raw
            .vms
            .iter()
            .map(|vm| {
                let readings = vm.rows[..steps].iter().map(|&(_, r)| r).collect();
                VmSeries::new(vm.vm_id.clone(), interval, global_start, readings)
            })
            .collect::<Result<Vec<_>, _>>()?;
        kept.push(Deployment::new(raw.deployment_id.clone(), vms)?);
    }
    Ok(kept)
}

/// Writes deployments in the exact layout `parse_trace` reads, one row per
/// (vm, timestamp), fractions in shortest round-trip decimal form.
pub fn serialize_trace<W: Write>(writer: W, deployments: &[Deployment]) -> Result<(), DataError> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer.write_record(TRACE_HEADER)?;
    for deployment in deployments {
        for vm in deployment.vms() {
            for (i, reading) in vm.values().iter().enumerate() {
                csv_writer.write_record([
                    vm.timestamp_at(i).to_string(),
                    vm.vm_id().to_string(),
                    deployment.deployment_id().to_string(),
                    format!("{}", reading.min),
                    format!("{}", reading.avg),
                    format!("{}", reading.max),
                ])?;
            }
        }
    }
    csv_writer.flush()?;
    Ok(())
}

impl From<csv::Error> for DataError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => DataError::Io(io),
            other => DataError::Malformed {
                line: 0,
                message: format!("{other:?}"),
            },
        }
    }
}
