use serde::{Deserialize, Serialize};

/// Machine the benchmark ran on. Resource limits are not enforced, so the
/// numbers are only comparable on the same host.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostInfo {
    pub cpus: usize,
    pub memory_bytes: Option<u64>,
    pub os: String,
    pub arch: String,
}

fn mem_total(meminfo: &str) -> Option<u64> {
    let line = meminfo.lines().find(|l| l.starts_with("MemTotal:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

impl HostInfo {
    pub fn detect() -> Self {
        HostInfo {
            cpus: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            memory_bytes: std::fs::read_to_string("/proc/meminfo").ok().as_deref().and_then(mem_total),
            os: std::env::consts::OS.to_owned(),
            arch: std::env::consts::ARCH.to_owned(),
        }
    }
}
