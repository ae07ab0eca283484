use super::DataError;

/// One interval's (min, avg, max) CPU utilization as fractions of capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpuReading {
    pub min: f64,
    pub avg: f64,
    pub max: f64,
}

impl CpuReading {
    pub fn new(min: f64, avg: f64, max: f64) -> Self {
        CpuReading { min, avg, max }
    }

    fn is_valid(&self) -> bool {
        self.min.is_finite()
            && self.avg.is_finite()
            && self.max.is_finite()
            && 0.0 <= self.min
            && self.min <= self.avg
            && self.avg <= self.max
            && self.max <= 1.0
    }

    pub fn channel(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Min => self.min,
            Channel::Avg => self.avg,
            Channel::Max => self.max,
        }
    }
}

/// Selects one of the three utilization channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Min,
    Avg,
    Max,
}

/// A single VM's gap-free utilization series on a fixed interval grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VmSeries {
    vm_id: String,
    interval_seconds: i64,
    start_timestamp: i64,
    values: Vec<CpuReading>,
}

impl VmSeries {
    /// Validates that every reading satisfies `0 <= min <= avg <= max <= 1`.
    pub fn new(
        vm_id: impl Into<String>,
        interval_seconds: i64,
        start_timestamp: i64,
        values: Vec<CpuReading>,
    ) -> Result<Self, DataError> {
        let vm_id = vm_id.into();
        if interval_seconds <= 0 {
            return Err(DataError::InvalidInterval(interval_seconds));
        }
        for (index, r) in values.iter().enumerate() {
            if !r.is_valid() {
                return Err(DataError::InvalidReading {
                    vm_id,
                    index,
                    min: r.min,
                    avg: r.avg,
                    max: r.max,
                });
            }
        }
        Ok(VmSeries {
            vm_id,
            interval_seconds,
            start_timestamp,
            values,
        })
    }

    pub fn vm_id(&self) -> &str {
        &self.vm_id
    }

    pub fn interval_seconds(&self) -> i64 {
        self.interval_seconds
    }

    pub fn start_timestamp(&self) -> i64 {
        self.start_timestamp
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[CpuReading] {
        &self.values
    }

    pub fn timestamp_at(&self, index: usize) -> i64 {
        self.start_timestamp + index as i64 * self.interval_seconds
    }

    /// One channel as an owned vector, in timeline order.
    pub fn channel(&self, channel: Channel) -> Vec<f64> {
        self.values.iter().map(|r| r.channel(channel)).collect()
    }
}

/// A group of VMs sharing one timeline, indexed in stable order.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    deployment_id: String,
    vms: Vec<VmSeries>,
}

impl Deployment {
    /// Validates that the deployment is non-empty and every VM shares the
    /// timeline (start, interval, length) of the first one.
    pub fn new(deployment_id: impl Into<String>, vms: Vec<VmSeries>) -> Result<Self, DataError> {
        let deployment_id = deployment_id.into();
        let first = match vms.first() {
            Some(f) => f,
            None => return Err(DataError::EmptyDeployment { deployment_id }),
        };
        let (start, interval, len) = (first.start_timestamp, first.interval_seconds, first.len());
        for vm in &vms {
            if vm.start_timestamp != start || vm.interval_seconds != interval || vm.len() != len {
                return Err(DataError::TimelineMismatch {
                    deployment_id,
                    vm_id: vm.vm_id.clone(),
                });
            }
        }
        for (i, vm) in vms.iter().enumerate() {
            if vms[..i].iter().any(|other| other.vm_id == vm.vm_id) {
                return Err(DataError::DuplicateVm {
                    deployment_id,
                    vm_id: vm.vm_id.clone(),
                });
            }
        }
        Ok(Deployment { deployment_id, vms })
    }

    pub fn deployment_id(&self) -> &str {
        &self.deployment_id
    }

    pub fn vms(&self) -> &[VmSeries] {
        &self.vms
    }

    pub fn vm(&self, index: usize) -> &VmSeries {
        &self.vms[index]
    }

    pub fn vm_count(&self) -> usize {
        self.vms.len()
    }

    pub fn find_vm(&self, vm_id: &str) -> Option<usize> {
        self.vms.iter().position(|vm| vm.vm_id == vm_id)
    }

    /// Shared series length T.
    pub fn len(&self) -> usize {
        self.vms[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn start_timestamp(&self) -> i64 {
        self.vms[0].start_timestamp
    }

    pub fn interval_seconds(&self) -> i64 {
        self.vms[0].interval_seconds
    }

    pub fn timestamp_at(&self, index: usize) -> i64 {
        self.vms[0].timestamp_at(index)
    }
}

/// Parsed trace before coverage filtering. VMs may start at different
/// timestamps and may have interior gaps; `filter_long_running` turns the
/// survivors into validated [`Deployment`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace {
    pub interval_seconds: i64,
    pub deployments: Vec<RawDeployment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDeployment {
    pub deployment_id: String,
    pub vms: Vec<RawVmSeries>,
}

/// Rows of one VM: strictly ascending timestamps on the interval grid
/// anchored at the VM's first row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVmSeries {
    pub vm_id: String,
    pub rows: Vec<(i64, CpuReading)>,
}
