//! Analytic multiply-add counts for dense vs. factorized 3D convolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvKind {
    Dense,
    Factorized,
}

/// Extents needed to count FLOPs. `mid` holds the temporal stage's output
/// extents and is only read for [`ConvKind::Factorized`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvDims {
    pub n: u64,
    pub cin: u64,
    pub cmid: u64,
    pub cout: u64,
    pub out: [u64; 3],
    pub mid: [u64; 3],
    pub kernel: [u64; 3],
}

impl ConvDims {
    /// Same-padded, unit-stride layer: the temporal stage output equals the final output extents.
    pub fn new(n: u64, cin: u64, cmid: u64, cout: u64, out: [u64; 3], kernel: [u64; 3]) -> Self {
        Self {
            n,
            cin,
            cmid,
            cout,
            out,
            mid: out,
            kernel,
        }
    }

    /// Derive output and intermediate extents from an input volume, stride and padding.
    #[allow(clippy::too_many_arguments)]
    pub fn from_input(
        n: u64,
        cin: u64,
        cmid: u64,
        cout: u64,
        input: [u64; 3],
        kernel: [u64; 3],
        stride: [u64; 3],
        padding: [u64; 3],
    ) -> Result<Self> {
        let extent = |a: u64, k: u64, s: u64, p: u64| -> Result<u64> {
            let padded = a + 2 * p;
            if k == 0 || s == 0 || padded < k {
                return Err(Error::Input(format!(
                    "axis of extent {a} cannot hold kernel {k} (stride {s}, pad {p})"
                )));
            }
            Ok((padded - k) / s + 1)
        };
        let mut out = [0; 3];
        for axis in 0..3 {
            out[axis] = extent(input[axis], kernel[axis], stride[axis], padding[axis])?;
        }
        let mid = [out[0], input[1], input[2]];
        Ok(Self {
            n,
            cin,
            cmid,
            cout,
            out,
            mid,
            kernel,
        })
    }
}

fn product(terms: &[u64]) -> Result<u64> {
    terms
        .iter()
        .try_fold(2u64, |acc, &t| acc.checked_mul(t))
        .ok_or_else(|| Error::Input(format!("flop count of {terms:?} overflows u64")))
}

/// Two FLOPs per multiply-add. Dense: `2·N·Cout·T'·H'·W'·Cin·kt·kh·kw`. Factorized: temporal
/// stage `2·N·Cmid·Tm·Hm·Wm·Cin·kt` plus spatial stage `2·N·Cout·T'·H'·W'·Cmid·kh·kw`.
pub fn flop_count(kind: ConvKind, d: &ConvDims) -> Result<u64> {
    let [to, ho, wo] = d.out;
    let [kt, kh, kw] = d.kernel;
    let mut extents = vec![d.n, d.cin, d.cout, to, ho, wo, kt, kh, kw];
    if kind == ConvKind::Factorized {
        extents.push(d.cmid);
        extents.extend(d.mid);
    }
    if extents.contains(&0) {
        return Err(Error::Input(format!("zero extent in {d:?}")));
    }
    match kind {
        ConvKind::Dense => product(&[d.n, d.cout, to, ho, wo, d.cin, kt, kh, kw]),
        ConvKind::Factorized => {
            let [tm, hm, wm] = d.mid;
            let temporal = product(&[d.n, d.cmid, tm, hm, wm, d.cin, kt])?;
            let spatial = product(&[d.n, d.cout, to, ho, wo, d.cmid, kh, kw])?;
            temporal
                .checked_add(spatial)
                .ok_or_else(|| Error::Input("flop count overflows u64".into()))
        }
    }
}
