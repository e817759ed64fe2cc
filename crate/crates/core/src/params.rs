//! Named parameter traversal.
//!
//! Every model component exposes its tensors through [`Parameters`] with
//! dotted names (`encoder.layers.0.attn.q.weight`). Names key the optimizer
//! state, the weight file records and parameter checksums.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Dotted path of the parameter currently being visited.
#[derive(Debug, Default, Clone)]
pub struct ParamPath {
    segments: Vec<String>,
}

impl ParamPath {
    pub fn push(&mut self, segment: &str) {
        self.segments.push(String::from(segment));
    }

    pub fn push_index(&mut self, i: usize) {
        self.segments.push(format!("{i}"));
    }

    pub fn pop(&mut self) {
        self.segments.pop();
    }

    pub fn joined(&self) -> String {
        self.segments.join(".")
    }
}

pub trait Parameters {
    fn visit<'a>(&'a self, path: &mut ParamPath, f: &mut dyn FnMut(&str, &'a Tensor));
    fn visit_mut(&mut self, path: &mut ParamPath, f: &mut dyn FnMut(&str, &mut Tensor));
}

impl Parameters for Tensor {
    fn visit<'a>(&'a self, path: &mut ParamPath, f: &mut dyn FnMut(&str, &'a Tensor)) {
        f(&path.joined(), self);
    }

    fn visit_mut(&mut self, path: &mut ParamPath, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&path.joined(), self);
    }
}

impl<T: Parameters> Parameters for Vec<T> {
    fn visit<'a>(&'a self, path: &mut ParamPath, f: &mut dyn FnMut(&str, &'a Tensor)) {
        for (i, item) in self.iter().enumerate() {
            path.push_index(i);
            item.visit(path, f);
            path.pop();
        }
    }

    fn visit_mut(&mut self, path: &mut ParamPath, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, item) in self.iter_mut().enumerate() {
            path.push_index(i);
            item.visit_mut(path, f);
            path.pop();
        }
    }
}

/// Implements [`Parameters`] for a struct by visiting the listed fields in order.
macro_rules! impl_params {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::params::Parameters for $ty {
            fn visit<'a>(
                &'a self,
                path: &mut $crate::params::ParamPath,
                f: &mut dyn FnMut(&str, &'a $crate::tensor::Tensor),
            ) {
                $(
                    path.push(stringify!($field));
                    self.$field.visit(path, f);
                    path.pop();
                )*
            }

            fn visit_mut(
                &mut self,
                path: &mut $crate::params::ParamPath,
                f: &mut dyn FnMut(&str, &mut $crate::tensor::Tensor),
            ) {
                $(
                    path.push(stringify!($field));
                    self.$field.visit_mut(path, f);
                    path.pop();
                )*
            }
        }
    };
}
pub(crate) use impl_params;

pub fn visit_params<'a, P: Parameters + ?Sized>(m: &'a P, f: &mut dyn FnMut(&str, &'a Tensor)) {
    m.visit(&mut ParamPath::default(), f);
}

pub fn visit_params_mut<P: Parameters + ?Sized>(m: &mut P, f: &mut dyn FnMut(&str, &mut Tensor)) {
    m.visit_mut(&mut ParamPath::default(), f);
}

pub fn named_params<P: Parameters + ?Sized>(m: &P) -> Vec<(String, &Tensor)> {
    let mut out = Vec::new();
    visit_params(m, &mut |name, t| out.push((String::from(name), t)));
    out
}

pub fn num_params<P: Parameters + ?Sized>(m: &P) -> usize {
    let mut n = 0;
    visit_params(m, &mut |_, t| n += t.numel());
    n
}

/// Marks every parameter trainable or frozen.
pub fn set_trainable<P: Parameters + ?Sized>(m: &mut P, trainable: bool) {
    visit_params_mut(m, &mut |_, t| {
        t.requires_grad = trainable;
        if !trainable {
            t.grad = None;
        }
    });
}

pub fn zero_grad<P: Parameters + ?Sized>(m: &mut P) {
    visit_params_mut(m, &mut |_, t| t.grad = None);
}

/// FNV-1a over parameter names and value bits.
pub fn checksum<P: Parameters + ?Sized>(m: &P) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    visit_params(m, &mut |name, t| {
        feed(name.as_bytes());
        for v in t.data() {
            feed(&v.to_bits().to_le_bytes());
        }
    });
    h
}

/// Copies values from `source` into the parameters of `m` by name. Every
/// parameter must be present with the same shape, and `source` may not carry
/// names the model does not have.
pub fn load_named<P: Parameters + ?Sized>(m: &mut P, source: &BTreeMap<String, Tensor>) -> Result<()> {
    let mut first_err: Option<Error> = None;
    let mut used = 0usize;
    visit_params_mut(m, &mut |name, t| {
        if first_err.is_some() {
            return;
        }
        match source.get(name) {
            None => first_err = Some(Error::MissingTensor(String::from(name))),
            Some(src) if src.shape() != t.shape() => {
                first_err = Some(Error::Format(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    src.shape(),
                    t.shape()
                )))
            }
            Some(src) => {
                t.data_mut().copy_from_slice(src.data());
                used += 1;
            }
        }
    });
    if let Some(e) = first_err {
        return Err(e);
    }
    if used != source.len() {
        let mut names = BTreeMap::new();
        visit_params(m, &mut |name, _| {
            names.insert(String::from(name), ());
        });
        let extra = source.keys().find(|k| !names.contains_key(*k)).cloned().unwrap_or_default();
        return Err(Error::Format(format!("unexpected tensor `{extra}`")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    struct Pair {
        a: Tensor,
        b: Vec<Tensor>,
    }
    impl_params!(Pair { a, b });

    fn pair() -> Pair {
        Pair { a: Tensor::zeros(&[2]), b: vec![Tensor::zeros(&[1]), Tensor::zeros(&[3])] }
    }

    #[test]
    fn names_are_dotted_paths() {
        let p = pair();
        let names: Vec<String> = named_params(&p).into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["a", "b.0", "b.1"]);
        assert_eq!(num_params(&p), 6);
    }

    #[test]
    fn load_reports_missing_and_extra() {
        let mut p = pair();
        let mut src = BTreeMap::new();
        src.insert(String::from("a"), Tensor::full(&[2], 1.0));
        src.insert(String::from("b.0"), Tensor::full(&[1], 2.0));
        assert_eq!(load_named(&mut p, &src), Err(Error::MissingTensor("b.1".into())));
        src.insert(String::from("b.1"), Tensor::full(&[3], 3.0));
        load_named(&mut p, &src).unwrap();
        assert_eq!(p.b[1].data(), &[3.0; 3]);
        src.insert(String::from("zzz"), Tensor::zeros(&[1]));
        assert!(matches!(load_named(&mut p, &src), Err(Error::Format(_))));
    }

    #[test]
    fn checksum_tracks_values() {
        let mut p = pair();
        let before = checksum(&p);
        p.b[0].data_mut()[0] = 1.0;
        assert_ne!(before, checksum(&p));
    }
}
