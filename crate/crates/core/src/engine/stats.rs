// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write;
use std::time::Duration;

use crate::fdb::ScanStats;

/// Counters of one shard task.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShardRun {
    pub shard: usize,
    pub docs_scanned: u64,
    pub postings_read: u64,
    pub bytes_read: u64,
    pub colset_bytes: Vec<u64>,
    pub cpu_ns: u64,
    pub wall_ns: u64,
    pub attempts: u32,
    pub records_out: u64,
    /// Taken from a checkpoint instead of executed.
    pub resumed: bool,
}

impl ShardRun {
    pub(crate) fn add_scan(&mut self, s: &ScanStats) {
        self.docs_scanned += s.docs_scanned;
        self.postings_read += s.postings_read;
        self.bytes_read += s.bytes_read;
        if self.colset_bytes.len() < s.colset_bytes.len() {
            self.colset_bytes.resize(s.colset_bytes.len(), 0);
        }
        for (a, b) in self.colset_bytes.iter_mut().zip(&s.colset_bytes) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Totals {
    pub docs_scanned: u64,
    pub postings_read: u64,
    pub bytes_read: u64,
    pub cpu_ns: u64,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryStats {
    /// Finished shard tasks, in shard order.
    pub per_shard: Vec<ShardRun>,
    pub totals: Totals,
    pub shards_planned: usize,
    pub shard_tasks_executed: usize,
    pub boundary_bytes: u64,
    pub mixer_cpu_ns: u64,
    pub mixer_wall_ns: u64,
    /// Wall time of the whole query, including join subplans.
    pub wall_ns: u64,
}

impl QueryStats {
    pub fn shards_done(&self) -> usize {
        self.per_shard.len()
    }

    /// Recomputes totals from the per-shard rows.
    pub(crate) fn finish(&mut self) {
        self.per_shard.sort_by_key(|r| r.shard);
        let mut t = Totals::default();
        for r in &self.per_shard {
            t.docs_scanned += r.docs_scanned;
            t.postings_read += r.postings_read;
            t.bytes_read += r.bytes_read;
            t.cpu_ns += r.cpu_ns;
            t.wall_ns += r.wall_ns;
        }
        self.totals = t;
    }

    /// Folds in the stats of a join subplan run ahead of this query.
    pub(crate) fn absorb(&mut self, o: &QueryStats) {
        self.mixer_cpu_ns += o.totals.cpu_ns + o.mixer_cpu_ns;
        self.boundary_bytes += o.boundary_bytes;
    }

    pub fn cpu_time(&self) -> Duration {
        Duration::from_nanos(self.totals.cpu_ns + self.mixer_cpu_ns)
    }

    pub fn wall_time(&self) -> Duration {
        Duration::from_nanos(self.wall_ns)
    }

    /// The text block printed after every query.
    pub fn render(&self) -> String {
        let ms = |ns: u64| ns as f64 / 1e6;
        let mut s = String::new();
        let _ = writeln!(s, "-- stats");
        let _ = writeln!(
            s,
            "shards {} planned, {} executed, {} resumed",
            self.shards_planned,
            self.shard_tasks_executed,
            self.per_shard.iter().filter(|r| r.resumed).count()
        );
        let _ = writeln!(s, "docs_scanned {}", self.totals.docs_scanned);
        let _ = writeln!(s, "postings_read {}", self.totals.postings_read);
        let _ = writeln!(s, "bytes_read {}", self.totals.bytes_read);
        let _ = writeln!(s, "boundary_bytes {}", self.boundary_bytes);
        let _ = writeln!(s, "cpu_ms {:.3}", ms(self.totals.cpu_ns + self.mixer_cpu_ns));
        let _ = writeln!(s, "wall_ms {:.3}", ms(self.wall_ns));
        for r in &self.per_shard {
            let _ = writeln!(
                s,
                "shard {} docs {} postings {} bytes {} out {} cpu_ms {:.3} wall_ms {:.3}{}",
                r.shard,
                r.docs_scanned,
                r.postings_read,
                r.bytes_read,
                r.records_out,
                ms(r.cpu_ns),
                ms(r.wall_ns),
                if r.resumed { " resumed" } else { "" }
            );
        }
        s
    }
}

/// CPU time consumed by the calling thread.
pub(crate) fn thread_cpu_ns() -> u64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: clock_gettime writes into the provided timespec only.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0;
    }
    ts.tv_sec as u64 * 1_000_000_000 + ts.tv_nsec as u64
}
