//! Versioned little-endian binary snapshot of a replay buffer.
//!
//! Layout: magic `BDQREPL\0`, `u32` version, `u8` kind, the buffer
//! configuration, `u64` size and cursor, then `size` records of
//! `(state, action, reward, next_state, done, raw priority)`.

use std::io::{Read, Write};

use super::{PrioritizedReplay, PriorityConfig, Replay, ReplayError, SamplingScheme, Transition, UniformReplay};

const MAGIC: &[u8; 8] = b"BDQREPL\0";
pub const SNAPSHOT_VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.0.write_all(&[v])
    }
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn floats(&mut self, v: &[f64]) -> std::io::Result<()> {
        self.u32(v.len() as u32)?;
        v.iter().try_for_each(|x| self.f64(*x))
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], ReplayError> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|e| ReplayError::Snapshot(format!("truncated snapshot: {e}")))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8, ReplayError> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32, ReplayError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64, ReplayError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64, ReplayError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn floats(&mut self) -> Result<Vec<f64>, ReplayError> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.f64()).collect()
    }
}

fn scheme_tag(s: SamplingScheme) -> u8 {
    match s {
        SamplingScheme::Stratified => 0,
        SamplingScheme::Iid => 1,
    }
}

fn scheme_from(tag: u8) -> Result<SamplingScheme, ReplayError> {
    match tag {
        0 => Ok(SamplingScheme::Stratified),
        1 => Ok(SamplingScheme::Iid),
        t => Err(ReplayError::Snapshot(format!("unknown sampling tag {t}"))),
    }
}

impl Replay {
    pub fn write_snapshot<W: Write>(&self, w: W) -> Result<(), ReplayError> {
        let mut w = Writer(w);
        w.0.write_all(MAGIC)?;
        w.u32(SNAPSHOT_VERSION)?;
        let (ring, config) = match self {
            Replay::Prioritized(r) => {
                w.u8(0)?;
                (&r.ring, r.config)
            }
            Replay::Uniform(r) => {
                w.u8(1)?;
                (
                    &r.ring,
                    PriorityConfig {
                        capacity: r.ring.capacity,
                        sampling: r.sampling,
                        ..PriorityConfig::default()
                    },
                )
            }
        };
        w.f64(config.alpha)?;
        w.f64(config.beta0)?;
        w.f64(config.beta_increment)?;
        w.f64(config.priority_epsilon)?;
        w.u64(config.capacity as u64)?;
        w.u8(scheme_tag(config.sampling))?;
        w.u64(ring.items.len() as u64)?;
        w.u64(ring.cursor as u64)?;
        for (i, t) in ring.items.iter().enumerate() {
            w.floats(&t.state)?;
            w.u32(t.action.len() as u32)?;
            for &a in &t.action {
                w.u32(a as u32)?;
            }
            w.f64(t.reward)?;
            w.floats(&t.next_state)?;
            w.u8(t.done as u8)?;
            let p = match self {
                Replay::Prioritized(r) => r.raw.get(i),
                Replay::Uniform(_) => 1.0,
            };
            w.f64(p)?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(r: R) -> Result<Self, ReplayError> {
        let mut r = Reader(r);
        if &r.bytes::<8>()? != MAGIC {
            return Err(ReplayError::Snapshot("not a replay snapshot".into()));
        }
        let version = r.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(ReplayError::Snapshot(format!(
                "unsupported snapshot version {version}"
            )));
        }
        let kind = r.u8()?;
        let config = PriorityConfig {
            alpha: r.f64()?,
            beta0: r.f64()?,
            beta_increment: r.f64()?,
            priority_epsilon: r.f64()?,
            capacity: r.u64()? as usize,
            sampling: scheme_from(r.u8()?)?,
        };
        let size = r.u64()? as usize;
        let cursor = r.u64()? as usize;
        if size > config.capacity || cursor >= config.capacity.max(1) {
            return Err(ReplayError::Snapshot("inconsistent size or cursor".into()));
        }
        let mut replay = match kind {
            0 => Replay::Prioritized(PrioritizedReplay::new(config)?),
            1 => Replay::Uniform(UniformReplay::new(config.capacity, config.sampling)?),
            k => return Err(ReplayError::Snapshot(format!("unknown buffer kind {k}"))),
        };
        for _ in 0..size {
            let state = r.floats()?;
            let n = r.u32()? as usize;
            let action = (0..n).map(|_| r.u32().map(|a| a as usize)).collect::<Result<_, _>>()?;
            let reward = r.f64()?;
            let next_state = r.floats()?;
            let done = r.u8()? != 0;
            let priority = r.f64()?;
            let t = Transition {
                state,
                action,
                reward,
                next_state,
                done,
            };
            match &mut replay {
                Replay::Prioritized(p) => {
                    let slot = p.ring.push(t);
                    p.set_priority(slot, priority);
                }
                Replay::Uniform(u) => {
                    u.ring.push(t);
                }
            }
        }
        match &mut replay {
            Replay::Prioritized(p) => p.ring.cursor = cursor,
            Replay::Uniform(u) => u.ring.cursor = cursor,
        }
        Ok(replay)
    }
}
