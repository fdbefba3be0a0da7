use std::collections::BTreeSet;

pub const LINE_BYTES: u64 = 64;

pub fn line_of(addr: u64) -> u64 {
    addr / LINE_BYTES
}

/// Single-level direct-mapped cache. Each line records the cycle its fill
/// completes; an access to a line still being filled waits for the fill.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cache {
    lines: Vec<Option<(u64, u64)>>,
    hit: u64,
    miss: u64,
}

impl Cache {
    pub fn new(lines: usize, hit: u64, miss: u64) -> Cache {
        assert!(lines.is_power_of_two());
        Cache {
            lines: vec![None; lines],
            hit,
            miss,
        }
    }

    fn slot(&self, line: u64) -> usize {
        (line as usize) & (self.lines.len() - 1)
    }

    /// Accesses the line holding `addr` at cycle `now`, filling it on a miss.
    /// Returns the latency.
    pub fn access(&mut self, addr: u64, now: u64) -> u64 {
        let line = line_of(addr);
        let slot = self.slot(line);
        match self.lines[slot] {
            Some((tag, ready)) if tag == line => self.hit.max(ready.saturating_sub(now)),
            _ => {
                self.lines[slot] = Some((line, now + self.miss));
                self.miss
            }
        }
    }

    /// Makes the line holding `addr` resident and already filled.
    pub fn install(&mut self, addr: u64) {
        let line = line_of(addr);
        let slot = self.slot(line);
        self.lines[slot] = Some((line, 0));
    }

    pub fn flush(&mut self, addr: u64) {
        let line = line_of(addr);
        let slot = self.slot(line);
        if matches!(self.lines[slot], Some((tag, _)) if tag == line) {
            self.lines[slot] = None;
        }
    }

    pub fn contains(&self, addr: u64) -> bool {
        let line = line_of(addr);
        matches!(self.lines[self.slot(line)], Some((tag, _)) if tag == line)
    }

    /// Byte addresses of every resident line.
    pub fn resident(&self) -> BTreeSet<u64> {
        self.lines
            .iter()
            .flatten()
            .map(|(tag, _)| tag * LINE_BYTES)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn miss_then_hit_then_flush() {
        let mut c = Cache::new(64, 2, 50);
        assert_eq!(c.access(0x1000, 0), 50);
        assert_eq!(c.access(0x1008, 10), 40);
        assert_eq!(c.access(0x1008, 100), 2);
        c.flush(0x1030);
        assert_eq!(c.access(0x1000, 200), 50);
    }

    #[test]
    fn conflicting_lines_evict() {
        let mut c = Cache::new(4, 2, 50);
        c.access(0, 0);
        c.access(4 * LINE_BYTES, 0);
        assert!(!c.contains(0));
        assert!(c.contains(4 * LINE_BYTES));
        assert_eq!(c.resident(), BTreeSet::from([4 * LINE_BYTES]));
    }
}
