//! Named, seeded parameter storage.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn(usize),
    Uniform(f64),
    Const(f64),
    Zeros,
}

/// Every trainable tensor of a model, keyed by a stable dotted name.
///
/// Values are drawn from a per-name ChaCha stream so initialization does not
/// depend on construction order.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    seed: u64,
    dtype: DType,
    device: Device,
    prefix: Vec<String>,
    frozen: bool,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            vars: BTreeMap::new(),
            seed,
            dtype,
            device: Device::Cpu,
            prefix: Vec::new(),
            frozen: false,
        }
    }

    /// A store whose models run inference only: the tensors handed out share
    /// storage with the variables (so [`ParamStore::load`] still reaches
    /// them) but record no autograd graph, which keeps long inputs from
    /// holding every intermediate activation alive.
    pub fn frozen(seed: u64, dtype: DType) -> Self {
        Self {
            frozen: true,
            ..Self::new(seed, dtype)
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn push(&mut self, scope: &str) {
        self.prefix.push(scope.to_string());
    }

    pub fn pop(&mut self) {
        self.prefix.pop();
    }

    /// Run `f` with `scope` appended to the name prefix.
    pub fn scoped<T>(&mut self, scope: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.push(scope);
        let r = f(self);
        self.pop();
        r
    }

    fn full_name(&self, name: &str) -> String {
        let mut parts = self.prefix.clone();
        parts.push(name.to_string());
        parts.join(".")
    }

    fn stream(&self, name: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(name.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&h.finalize());
        ChaCha8Rng::from_seed(seed)
    }

    /// Create a parameter. Names must be unique within the store.
    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let full = self.full_name(name);
        if self.vars.contains_key(&full) {
            return Err(Error::config(format!("duplicate parameter name {full}")));
        }
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Const(c) => vec![c; n],
            Init::Uniform(_) | Init::FanIn(_) => {
                let b = match init {
                    Init::FanIn(f) => 1.0 / (f.max(1) as f64).sqrt(),
                    Init::Uniform(b) => b,
                    _ => unreachable!(),
                };
                let mut rng = self.stream(&full);
                (0..n).map(|_| rng.random_range(-b..=b)).collect()
            }
        };
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let v = Var::from_tensor(&t)?;
        let out = if self.frozen { v.as_tensor().detach() } else { v.as_tensor().clone() };
        self.vars.insert(full, v);
        Ok(out)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn named(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Parameter count of every name starting with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.vars
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.elem_count())
            .sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    /// Overwrite every parameter from a file holding exactly the same names
    /// and shapes.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
            ));
        }
        let map = candle_core::safetensors::load(path, &self.device)?;
        if map.len() != self.vars.len() {
            return Err(Error::config(format!(
                "checkpoint holds {} tensors, model expects {}",
                map.len(),
                self.vars.len()
            )));
        }
        for (name, var) in &self.vars {
            let t = map
                .get(name)
                .ok_or_else(|| Error::config(format!("checkpoint lacks parameter {name}")))?;
            if t.dims() != var.dims() {
                return Err(Error::config(format!(
                    "parameter {name}: checkpoint shape {:?}, model {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    /// SHA-256 over names and raw values, independent of file encoding.
    pub fn digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (k, v) in &self.vars {
            h.update(k.as_bytes());
            let vals: Vec<f64> = v.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1()?;
            for x in vals {
                h.update(x.to_le_bytes());
            }
        }
        Ok(hex(&h.finalize()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_tensors_follow_loads_but_carry_no_graph() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.safetensors");
        let mut src = ParamStore::new(1, DType::F32);
        src.param("w", &[3], Init::Uniform(1.0)).unwrap();
        src.save(&p).unwrap();
        let mut ps = ParamStore::frozen(2, DType::F32);
        let w = ps.param("w", &[3], Init::Zeros).unwrap();
        ps.load(&p).unwrap();
        let want: Vec<f32> = src.get("w").unwrap().as_tensor().to_vec1().unwrap();
        assert_eq!(w.to_vec1::<f32>().unwrap(), want);
        assert!(!w.is_variable());
        assert!(w.sqr().unwrap().sum_all().unwrap().backward().unwrap().get(&w).is_none());
    }

    #[test]
    fn init_is_seeded_per_name_and_order_free() {
        let mut a = ParamStore::new(7, DType::F32);
        let x1 = a.param("x", &[3, 4], Init::FanIn(4)).unwrap();
        let y1 = a.param("y", &[5], Init::Uniform(0.1)).unwrap();
        let mut b = ParamStore::new(7, DType::F32);
        let y2 = b.param("y", &[5], Init::Uniform(0.1)).unwrap();
        let x2 = b.param("x", &[3, 4], Init::FanIn(4)).unwrap();
        let v = |t: &Tensor| t.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(v(&x1), v(&x2));
        assert_eq!(v(&y1), v(&y2));
        assert!(v(&x1).iter().all(|x| x.abs() <= 0.5));
        assert_eq!(a.count(), 17);
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        let mut c = ParamStore::new(8, DType::F32);
        let x3 = c.param("x", &[3, 4], Init::FanIn(4)).unwrap();
        assert_ne!(v(&x1), v(&x3));
    }

    #[test]
    fn scopes_and_duplicates() {
        let mut s = ParamStore::new(0, DType::F64);
        s.scoped("enc", |s| s.param("w", &[2], Init::Zeros)).unwrap();
        assert!(s.get("enc.w").is_some());
        assert!(s.scoped("enc", |s| s.param("w", &[2], Init::Zeros)).is_err());
        assert_eq!(s.count_prefix("enc."), 2);
    }

    #[test]
    fn save_load_round_trip_and_shape_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.safetensors");
        let mut a = ParamStore::new(1, DType::F32);
        a.param("w", &[2, 3], Init::Uniform(1.0)).unwrap();
        a.save(&p).unwrap();
        let mut b = ParamStore::new(2, DType::F32);
        let w = b.param("w", &[2, 3], Init::Zeros).unwrap();
        b.load(&p).unwrap();
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        assert!(w.sum_all().unwrap().to_scalar::<f32>().unwrap() != 0.0);
        let mut c = ParamStore::new(2, DType::F32);
        c.param("w", &[3, 2], Init::Zeros).unwrap();
        assert!(matches!(c.load(&p), Err(Error::Config(_))));
    }
}
