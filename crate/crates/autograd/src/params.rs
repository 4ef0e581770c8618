//! Named parameter storage, initialization, and binary (de)serialization.

use std::io::{self, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tape::{Tape, Var};

const MAGIC: &[u8; 8] = b"TGRADPK1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// All trainable tensors of a model, in registration order.
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<ArrayD<f32>>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, tensor: ArrayD<f32>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<f32> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<f32> {
        &mut self.tensors[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &ArrayD<f32>)> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    /// Materializes every parameter as a tracked leaf on `tape`.
    pub fn leaves(&self, tape: &Tape<f32>) -> ParamVars {
        ParamVars {
            vars: self.tensors.iter().map(|t| tape.leaf(t.clone())).collect(),
        }
    }

    /// Untracked leaves for inference.
    pub fn constants(&self) -> ParamVars {
        ParamVars {
            vars: self
                .tensors
                .iter()
                .map(|t| Var::constant(t.clone()))
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut f = io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_u32::<LittleEndian>(self.tensors.len() as u32)?;
        for (name, t) in self.names.iter().zip(&self.tensors) {
            f.write_u32::<LittleEndian>(name.len() as u32)?;
            f.write_all(name.as_bytes())?;
            f.write_u32::<LittleEndian>(t.ndim() as u32)?;
            for &d in t.shape() {
                f.write_u64::<LittleEndian>(d as u64)?;
            }
            let slice = t.as_slice_memory_order().expect("non-contiguous parameter");
            for &v in slice {
                f.write_f32::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> io::Result<ParamStore> {
        let mut f = io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "not a parameter pack file",
            ));
        }
        let count = f.read_u32::<LittleEndian>()? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = f.read_u32::<LittleEndian>()? as usize;
            let mut name = vec![0u8; name_len];
            f.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            let ndim = f.read_u32::<LittleEndian>()? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(f.read_u64::<LittleEndian>()? as usize);
            }
            let n: usize = dims.iter().product();
            let mut data = vec![0f32; n];
            for v in &mut data {
                *v = f.read_f32::<LittleEndian>()?;
            }
            store.register(name, ArrayD::from_shape_vec(IxDyn(&dims), data).unwrap());
        }
        Ok(store)
    }

    /// Replaces all tensors with those of `other` (matched by name and shape).
    pub fn load_state(&mut self, other: &ParamStore) -> Result<(), String> {
        if self.names != other.names {
            return Err("parameter name list mismatch".into());
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            if dst.shape() != src.shape() {
                return Err(format!(
                    "parameter shape mismatch {:?} vs {:?}",
                    dst.shape(),
                    src.shape()
                ));
            }
            dst.assign(src);
        }
        Ok(())
    }

    pub fn clone_tensors(&self) -> Vec<ArrayD<f32>> {
        self.tensors.clone()
    }

    pub fn restore_tensors(&mut self, tensors: &[ArrayD<f32>]) {
        assert_eq!(tensors.len(), self.tensors.len());
        for (dst, src) in self.tensors.iter_mut().zip(tensors) {
            dst.assign(src);
        }
    }
}

/// Per-forward-pass leaf vars, indexed by [`ParamId`].
pub struct ParamVars {
    vars: Vec<Var<f32>>,
}

impl ParamVars {
    pub fn var(&self, id: ParamId) -> &Var<f32> {
        &self.vars[id.0]
    }
}

/// Deterministic initializers seeded per parameter.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform Kaiming (He) init for conv/linear weights with `fan_in`.
    pub fn kaiming_uniform(&mut self, shape: &[usize], fan_in: usize) -> ArrayD<f32> {
        let bound = (1.0 / fan_in as f64).sqrt() as f32;
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n)
            .map(|_| self.rng.gen_range(-bound..bound))
            .collect();
        ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
    }

    /// Truncated normal (±2σ, resampled) used for transformer tables.
    pub fn trunc_normal(&mut self, shape: &[usize], std: f64) -> ArrayD<f32> {
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n)
            .map(|_| {
                loop {
                    // Box-Muller
                    let u1: f64 = self.rng.gen_range(f64::EPSILON..1.0);
                    let u2: f64 = self.rng.gen_range(0.0..1.0);
                    let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                    if z.abs() <= 2.0 {
                        return (z * std) as f32;
                    }
                }
            })
            .collect();
        ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
    }

    pub fn zeros(&mut self, shape: &[usize]) -> ArrayD<f32> {
        ArrayD::zeros(IxDyn(shape))
    }

    pub fn ones(&mut self, shape: &[usize]) -> ArrayD<f32> {
        ArrayD::from_elem(IxDyn(shape), 1.0)
    }
}
