//! Versioned little-endian binary checkpoint of a [`DdpgAgent`].
//!
//! Layout: magic `VSPCKPT\0`, `u32` version, `u32`-length JSON of the
//! hyperparameters, `u64` noise step count, generator state (32-byte seed, `u64`
//! stream, `u128` word position), then the actor, critic, target actor and
//! target critic, then the actor and critic Adam states. Each network is an activation tag (`u8`, plus an `f64` scale
//! for the scaled sigmoid), a `u32` layer count and per layer `u32` inputs,
//! `u32` outputs, row-major weights and biases as raw `f64` bits.

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::agent::DdpgAgent;
use crate::domain::DdpgConfig;
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Layer, Mlp};

const MAGIC: &[u8; 8] = b"VSPCKPT\0";
pub const VERSION: u32 = 1;

pub fn to_bytes(agent: &DdpgAgent) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&agent.config).expect("config serializes");
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&agent.noise_steps.to_le_bytes());
    out.extend_from_slice(&agent.rng.get_seed());
    out.extend_from_slice(&agent.rng.get_stream().to_le_bytes());
    out.extend_from_slice(&agent.rng.get_word_pos().to_le_bytes());
    for net in [&agent.actor, &agent.critic, &agent.target_actor, &agent.target_critic] {
        write_mlp(&mut out, net);
    }
    for opt in [&agent.actor_opt, &agent.critic_opt] {
        write_adam(&mut out, opt);
    }
    out
}

fn write_adam(out: &mut Vec<u8>, opt: &Adam) {
    out.extend_from_slice(&opt.step.to_le_bytes());
    out.extend_from_slice(&(opt.m.len() as u64).to_le_bytes());
    for p in [opt.beta1, opt.beta2, opt.eps].iter().chain(&opt.m).chain(&opt.v) {
        out.extend_from_slice(&p.to_bits().to_le_bytes());
    }
}

fn read_adam(r: &mut Reader<'_>) -> Result<Adam> {
    let step = r.u64()?;
    let n = r.u64()? as usize;
    let (beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?);
    let m = r.f64s(n)?;
    let v = r.f64s(n)?;
    Ok(Adam {
        beta1,
        beta2,
        eps,
        step,
        m,
        v,
    })
}

fn write_mlp(out: &mut Vec<u8>, net: &Mlp) {
    match net.output_activation() {
        Activation::Identity => out.push(0),
        Activation::Softplus => out.push(1),
        Activation::ScaledSigmoid(s) => {
            out.push(2);
            out.extend_from_slice(&s.to_bits().to_le_bytes());
        }
    }
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for l in net.layers() {
        out.extend_from_slice(&(l.inputs() as u32).to_le_bytes());
        out.extend_from_slice(&(l.outputs() as u32).to_le_bytes());
        for p in l.weights().iter().chain(l.biases()) {
            out.extend_from_slice(&p.to_bits().to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length matches"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

fn read_mlp(r: &mut Reader<'_>) -> Result<Mlp> {
    let act = match r.u8()? {
        0 => Activation::Identity,
        1 => Activation::Softplus,
        2 => Activation::ScaledSigmoid(r.f64()?),
        t => return Err(Error::Checkpoint(format!("unknown activation tag {t}"))),
    };
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let i = r.u32()? as usize;
        let o = r.u32()? as usize;
        let w = r.f64s(i * o)?;
        let b = r.f64s(o)?;
        layers.push(Layer::new(i, o, w, b)?);
    }
    Mlp::from_layers(layers, act)
}

pub fn from_bytes(buf: &[u8]) -> Result<DdpgAgent> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = r.u32()? as usize;
    let config: DdpgConfig = serde_json::from_slice(r.take(len)?).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let noise_steps = r.u64()?;
    let seed: [u8; 32] = r.array()?;
    let stream = r.u64()?;
    let word_pos = r.u128()?;
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    let actor = read_mlp(&mut r)?;
    let critic = read_mlp(&mut r)?;
    let target_actor = read_mlp(&mut r)?;
    let target_critic = read_mlp(&mut r)?;
    let actor_opt = read_adam(&mut r)?;
    let critic_opt = read_adam(&mut r)?;
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    DdpgAgent::from_parts(
        actor,
        critic,
        target_actor,
        target_critic,
        config,
        noise_steps,
        rng,
        (actor_opt, critic_opt),
    )
}

pub fn save(agent: &DdpgAgent, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(agent))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DdpgAgent> {
    from_bytes(&std::fs::read(path)?)
}
