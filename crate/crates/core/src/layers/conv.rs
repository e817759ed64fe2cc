use alloc::vec;
use alloc::vec::Vec;

use super::{empty_rows, uniform, zeros_param, Rng};
use crate::error::{Error, Result};
use crate::params::impl_params;
use crate::tensor::kernels::{self, ConvGeom};
use crate::tensor::{ConvSpec, Tape, Tensor, Var};

/// Where the zero padding of a convolution goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// All padding on the left; output frame `t` depends on inputs up to the
    /// end of its own stride window only.
    Causal,
    /// Padding split around the window, so outputs see future inputs.
    Centered,
}

/// Time-major 1-D convolution with stride, dilation and groups. Output length
/// is `floor(frames / stride)` for either padding mode.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Tensor,
    geom: ConvGeom,
    padding: Padding,
}

impl_params!(Conv1d { weight, bias });

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rng: &mut Rng,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        groups: usize,
        padding: Padding,
    ) -> Result<Self> {
        let geom = ConvGeom { c_in, c_out, kernel, stride, dilation, groups };
        geom.validate()?;
        if geom.span() < stride {
            return Err(Error::Contract(alloc::format!(
                "conv stride {stride} exceeds its receptive span {}",
                geom.span()
            )));
        }
        let fan_in = (c_in / groups) * kernel;
        // He-uniform: convolutions are mostly followed by GELU.
        let bound = libm::sqrtf(6.0 / fan_in as f32);
        Ok(Conv1d {
            weight: uniform(rng, &[c_out, c_in / groups, kernel], bound),
            bias: zeros_param(&[c_out]),
            geom,
            padding,
        })
    }

    /// One filter per channel.
    pub fn depthwise(rng: &mut Rng, channels: usize, kernel: usize, padding: Padding) -> Result<Self> {
        Self::new(rng, channels, channels, kernel, 1, 1, channels, padding)
    }

    pub fn geom(&self) -> ConvGeom {
        self.geom
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    pub fn set_padding(&mut self, padding: Padding) {
        self.padding = padding;
    }

    /// Frames of zero padding `(left, right)` for the offline forward.
    pub fn pads(&self) -> (usize, usize) {
        let extra = self.geom.span() - self.geom.stride;
        match self.padding {
            Padding::Causal => (extra, 0),
            Padding::Centered => (extra / 2, extra - extra / 2),
        }
    }

    /// Future input frames one output can see beyond its own stride window.
    pub fn lookahead(&self) -> usize {
        self.pads().1
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let (pad_left, pad_right) = self.pads();
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        tape.conv1d(x, w, Some(b), ConvSpec { geom: self.geom, pad_left, pad_right })
    }

    pub fn new_state(&self) -> ConvState {
        let (pad_left, _) = self.pads();
        ConvState { buffer: vec![0.0; pad_left * self.geom.c_in], channels: self.geom.c_in }
    }

    /// Consumes new input frames and returns every output frame that is now
    /// fully determined. Causal padding only.
    pub fn step(&self, state: &mut ConvState, x: &Tensor) -> Result<Tensor> {
        if self.padding != Padding::Causal {
            return Err(Error::Contract("streaming needs a causal convolution".into()));
        }
        let c = self.geom.c_in;
        if x.numel() > 0 && x.cols() != c {
            return Err(Error::shape(
                "conv1d step",
                alloc::format!("input has {} channels, kernel expects {c}", x.cols()),
            ));
        }
        state.buffer.extend_from_slice(x.data());
        let n_out = self.geom.out_len(state.buffer.len() / c);
        if n_out == 0 {
            return Ok(empty_rows(self.geom.c_out));
        }
        let out = kernels::conv1d_forward(&state.buffer, self.weight.data(), Some(self.bias.data()), &self.geom);
        state.buffer.drain(..n_out * self.geom.stride * c);
        Ok(Tensor::from_parts(vec![n_out, self.geom.c_out], out))
    }
}

/// Input history a streaming convolution still needs: the last
/// `span - stride` frames plus any frames not yet covering a full stride.
#[derive(Debug, Clone)]
pub struct ConvState {
    buffer: Vec<f32>,
    channels: usize,
}

impl ConvState {
    pub fn frames(&self) -> usize {
        self.buffer.len() / self.channels.max(1)
    }

    pub fn history(&self) -> &[f32] {
        &self.buffer
    }

    pub fn len_floats(&self) -> usize {
        self.buffer.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{run_offline, seeded_rng};

    fn ramp(t: usize, c: usize) -> Tensor {
        Tensor::matrix(t, c, (0..t * c).map(|i| (i as f32 * 0.37).sin()).collect()).unwrap()
    }

    #[test]
    fn causal_kernel_three_example() {
        let mut rng = seeded_rng(0);
        let mut conv = Conv1d::depthwise(&mut rng, 1, 3, Padding::Causal).unwrap();
        conv.weight.data_mut().copy_from_slice(&[1.0, 1.0, 1.0]);
        let x = Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = run_offline(&x, |t, v| conv.forward(t, v)).unwrap();
        assert_eq!(y.data(), &[1.0, 3.0, 6.0, 9.0]);
    }

    #[test]
    fn output_length_is_frames_over_stride() {
        let mut rng = seeded_rng(1);
        for padding in [Padding::Causal, Padding::Centered] {
            let conv = Conv1d::new(&mut rng, 2, 3, 8, 4, 1, 1, padding).unwrap();
            for t in [0usize, 3, 4, 17, 40] {
                let y = run_offline(&ramp(t, 2), |tp, v| conv.forward(tp, v)).unwrap();
                assert_eq!(y.rows(), t / 4);
            }
        }
    }

    #[test]
    fn streaming_matches_offline_for_any_split() {
        let mut rng = seeded_rng(2);
        let conv = Conv1d::new(&mut rng, 4, 4, 3, 1, 2, 2, Padding::Causal).unwrap();
        let strided = Conv1d::new(&mut rng, 2, 3, 10, 5, 1, 1, Padding::Causal).unwrap();
        for (layer, c) in [(&conv, 4), (&strided, 2)] {
            let x = ramp(53, c);
            let want = run_offline(&x, |t, v| layer.forward(t, v)).unwrap();
            for split in [1usize, 2, 7, 53] {
                let mut st = layer.new_state();
                let mut got = Vec::new();
                let mut start = 0;
                while start < 53 {
                    let end = (start + split).min(53);
                    got.push(layer.step(&mut st, &x.slice_rows(start, end)).unwrap());
                    start = end;
                }
                let got = Tensor::concat_rows(&got, layer.geom().c_out).unwrap();
                assert_eq!(got.data(), want.data(), "split {split}");
            }
        }
    }

    #[test]
    fn state_holds_kernel_history() {
        let mut rng = seeded_rng(3);
        let conv = Conv1d::new(&mut rng, 2, 2, 3, 1, 2, 1, Padding::Causal).unwrap();
        let mut st = conv.new_state();
        assert_eq!(st.frames(), 4);
        conv.step(&mut st, &ramp(9, 2)).unwrap();
        assert_eq!(st.frames(), 4);
        assert_eq!(st.history(), &ramp(9, 2).data()[5 * 2..]);
    }

    #[test]
    fn centered_cannot_stream() {
        let mut rng = seeded_rng(4);
        let conv = Conv1d::depthwise(&mut rng, 1, 3, Padding::Centered).unwrap();
        assert!(conv.step(&mut conv.new_state(), &ramp(3, 1)).is_err());
        assert_eq!(conv.lookahead(), 1);
    }
}
