//! Named, ordered parameter storage and the binary checkpoint format.
//!
//! Checkpoint layout (little-endian):
//!
//! ```text
//! "CKPT" | version u32 = 1 | entry count u32
//! per entry: name length u16 | UTF-8 name | rank u8 | dims u32 x rank | f32 data
//! ```

use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const CKPT_MAGIC: &[u8; 4] = b"CKPT";
const CKPT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct ParameterStore<T> {
    entries: IndexMap<String, Tensor<T>>,
    rng_seed: u64,
    rng: ChaCha8Rng,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new(rng_seed: u64) -> Self {
        ParameterStore {
            entries: IndexMap::new(),
            rng_seed,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    /// Inserts a tensor as a trainable parameter. Names must be unique.
    pub fn insert(&mut self, name: &str, mut value: Tensor<T>) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        value.set_requires_grad(true);
        self.entries.insert(name.to_string(), value);
        Ok(())
    }

    /// Adds a parameter drawn from uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)).
    pub fn init_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<()> {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let t = Tensor::uniform(shape, bound, &mut self.rng);
        self.insert(name, t)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in self.entries.values_mut() {
            t.zero_grad();
        }
    }

    /// Converts every entry to another scalar type, keeping names and order.
    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        let mut out = ParameterStore::new(self.rng_seed);
        for (name, t) in &self.entries {
            out.entries.insert(name.clone(), t.cast());
        }
        out
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CKPT_MAGIC)?;
        w.write_all(&CKPT_VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            let bytes = name.as_bytes();
            let len = u16::try_from(bytes.len())
                .map_err(|_| Error::Config(format!("parameter name too long: {name}")))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(bytes)?;
            w.write_all(&[t.rank() as u8])?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &x in t.data() {
                w.write_all(&x.to_f32_lossy().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(r: R) -> Result<Self> {
        let mut r = CountingReader { inner: r, offset: 0 };
        let magic: [u8; 4] = r.array()?;
        if &magic != CKPT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: "bad checkpoint magic".into(),
            });
        }
        let version = r.u32()?;
        if version != CKPT_VERSION {
            return Err(Error::Format {
                offset: 4,
                msg: format!("unsupported checkpoint version {version}"),
            });
        }
        let count = r.u32()?;
        let mut store = ParameterStore::new(0);
        for _ in 0..count {
            let at = r.offset;
            let len = u16::from_le_bytes(r.array()?) as usize;
            let name_bytes = r.bytes(len)?;
            let name = String::from_utf8(name_bytes).map_err(|_| Error::Format {
                offset: at,
                msg: "parameter name is not UTF-8".into(),
            })?;
            let [rank] = r.array::<1>()?;
            let mut shape = Vec::with_capacity(rank as usize);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(T::lit(f32::from_le_bytes(r.array()?) as f64));
            }
            let t = Tensor::new(&shape, data).map_err(|e| Error::Format {
                offset: at,
                msg: e.to_string(),
            })?;
            store.insert(&name, t).map_err(|e| Error::Format {
                offset: at,
                msg: e.to_string(),
            })?;
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_checkpoint(std::io::BufReader::new(f))
    }

    /// Copies values from `other` for every shared name; shapes must agree.
    pub fn assign_from(&mut self, other: &ParameterStore<T>) -> Result<()> {
        for (name, t) in self.entries.iter_mut() {
            let src = other.get(name)?;
            if src.shape() != t.shape() {
                return Err(Error::dim("assign", t.shape(), src.shape()));
            }
            t.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

/// Reader that tracks the byte offset so format errors can point at it.
pub(crate) struct CountingReader<R> {
    pub inner: R,
    pub offset: u64,
}

impl<R: Read> CountingReader<R> {
    pub fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.fill(&mut buf)?;
        Ok(buf)
    }

    pub fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.fill(&mut buf)?;
        Ok(buf)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        let mut read = 0;
        while read < buf.len() {
            match self.inner.read(&mut buf[read..]) {
                Ok(0) => {
                    return Err(Error::Format {
                        offset: self.offset + read as u64,
                        msg: format!("truncated: expected {} more bytes", buf.len() - read),
                    })
                }
                Ok(n) => read += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    /// True when the underlying stream has no more bytes.
    pub fn at_eof(&mut self) -> Result<bool> {
        let mut probe = [0u8; 1];
        loop {
            match self.inner.read(&mut probe) {
                Ok(0) => return Ok(true),
                Ok(_) => return Ok(false),
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
}
