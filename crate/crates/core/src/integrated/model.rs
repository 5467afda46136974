use std::io::Write;

use num_complex::Complex64;
use rand::Rng;

use super::slab::{ComplexField1D, SlabPropagator};
use crate::error::{Error, Result};
use crate::freespace::{check_optics, sigmoid};
use crate::seed;
use crate::signal::Label;
use crate::tensor::Cursor;
use crate::train::{cross_entropy, LossConfig, LossKind};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DPUI";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Phase of a slotted meta-atom; an unslotted one adds none.
pub const SLOT_PHASE: f64 = -1.55;
const MAX_MODE_OVERLAP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedGeometry {
    pub wavelength: f64,
    pub n_eff: f64,
    pub n_inputs: usize,
    pub input_pitch: f64,
    pub output_separation: f64,
    /// Input plane to output plane; the metaline sits halfway.
    pub plane_distance: f64,
    pub atom_period: f64,
    pub atoms_per_neuron: usize,
    pub n_neurons: usize,
    /// Recorded only; the phase lookup stands in for the atom physics.
    pub atom_height: f64,
    pub grid_pitch: f64,
    pub window: f64,
    /// Gaussian mode waist of the input and output waveguides.
    pub waist: f64,
    /// Transmission amplitude of (no-slot, slot) atoms.
    pub amplitudes: (f64, f64),
    pub pad_factor: usize,
}

impl Default for IntegratedGeometry {
    fn default() -> Self {
        Self {
            wavelength: 1.55e-6,
            n_eff: 2.85,
            n_inputs: 16,
            input_pitch: 15e-6,
            output_separation: 270e-6,
            plane_distance: 200e-6,
            atom_period: 300e-9,
            atoms_per_neuron: 3,
            n_neurons: 600,
            atom_height: 400e-9,
            grid_pitch: 100e-9,
            window: 600e-6,
            waist: 0.25e-6,
            amplitudes: (1.0, 1.0),
            pad_factor: 2,
        }
    }
}

impl IntegratedGeometry {
    pub fn wavelength_eff(&self) -> f64 {
        self.wavelength / self.n_eff
    }

    pub fn metaline_width(&self) -> f64 {
        self.n_neurons as f64 * self.atoms_per_neuron as f64 * self.atom_period
    }

    pub fn n_samples(&self) -> usize {
        (self.window / self.grid_pitch).round() as usize
    }

    pub fn samples_per_atom(&self) -> Result<usize> {
        let ratio = self.atom_period / self.grid_pitch;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!(
                "grid pitch {} m does not divide the atom period {} m",
                self.grid_pitch, self.atom_period
            )));
        }
        Ok(n as usize)
    }

    pub fn samples_per_neuron(&self) -> Result<usize> {
        Ok(self.samples_per_atom()? * self.atoms_per_neuron)
    }

    /// Transverse coordinate of sample `i`, symmetric about the axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        (i as f64 - (self.n_samples() as f64 - 1.0) / 2.0) * self.grid_pitch
    }

    pub fn input_positions(&self) -> Vec<f64> {
        let mid = (self.n_inputs as f64 - 1.0) / 2.0;
        (0..self.n_inputs)
            .map(|k| (k as f64 - mid) * self.input_pitch)
            .collect()
    }

    /// Seizure output first.
    pub fn output_positions(&self) -> [f64; 2] {
        [-self.output_separation / 2.0, self.output_separation / 2.0]
    }

    /// First metaline sample; the aperture is centred in the window.
    pub fn metaline_start(&self) -> Result<usize> {
        let span = self.n_neurons * self.samples_per_neuron()?;
        let m = self.n_samples();
        if span > m || (m - span) % 2 != 0 {
            return Err(Error::Config(format!(
                "metaline of {span} samples cannot be centred in {m} samples"
            )));
        }
        Ok((m - span) / 2)
    }

    pub fn validate(&self) -> Result<()> {
        check_optics(self.grid_pitch, self.wavelength)?;
        let positive = [
            self.n_eff,
            self.input_pitch,
            self.output_separation,
            self.plane_distance,
            self.atom_period,
            self.window,
            self.waist,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("geometry lengths must be positive".into()));
        }
        if self.n_inputs == 0 || self.n_neurons == 0 || self.atoms_per_neuron == 0 || self.pad_factor == 0 {
            return Err(Error::Config("geometry counts must be positive".into()));
        }
        let (a0, a1) = self.amplitudes;
        if !(a0 >= 0.0 && a1 >= 0.0 && a0.is_finite() && a1.is_finite()) {
            return Err(Error::Config("atom amplitudes must be >= 0".into()));
        }
        self.metaline_start()?;
        let guard = 3.0 * self.waist;
        let half = self.window / 2.0;
        let reach = self
            .input_positions()
            .iter()
            .chain(&self.output_positions())
            .fold(0.0f64, |m, p| m.max(p.abs()));
        if reach + guard > half || self.metaline_width() / 2.0 + guard > half {
            return Err(Error::Config(format!(
                "waveguides or metaline extend past the {} m window",
                self.window
            )));
        }
        if self.n_inputs > 1 {
            let overlap = (-self.input_pitch.powi(2) / (2.0 * self.waist * self.waist)).exp();
            if overlap > MAX_MODE_OVERLAP {
                return Err(Error::Config(format!(
                    "input modes overlap by {overlap:.3e}; waist {} m is too large for pitch {} m",
                    self.waist, self.input_pitch
                )));
            }
        }
        Ok(())
    }

    /// Gaussian mode `exp(−(t − centre)²/w²)` normalized to unit power.
    pub fn mode(&self, centre: f64) -> Vec<Complex64> {
        let norm = (2.0 / std::f64::consts::PI).powf(0.25) / self.waist.sqrt();
        (0..self.n_samples())
            .map(|i| {
                let t = (self.coordinate(i) - centre) / self.waist;
                Complex64::new(norm * (-t * t).exp(), 0.0)
            })
            .collect()
    }

    pub fn propagator(&self, z: f64) -> Result<SlabPropagator> {
        SlabPropagator::new(
            self.n_samples(),
            self.grid_pitch,
            self.wavelength_eff(),
            z,
            self.pad_factor,
        )
    }
}

/// Hard phases: `−1.55` where the logit is positive, else 0.
pub fn binarize(logits: &[f64]) -> Vec<f64> {
    logits
        .iter()
        .map(|&l| if l > 0.0 { SLOT_PHASE } else { 0.0 })
        .collect()
}

/// `−1.55·σ(l/T)`.
pub fn relaxed_phase(logit: f64, temperature: f64) -> f64 {
    SLOT_PHASE * sigmoid(logit / temperature)
}

/// Derivative of [`relaxed_phase`], substituted for the step's in the hard model.
pub fn relaxed_phase_grad(logit: f64, temperature: f64) -> f64 {
    let s = sigmoid(logit / temperature);
    SLOT_PHASE * s * (1.0 - s) / temperature
}

fn unit_power(transfer: &[Vec<Vec<Complex64>>], n_inputs: usize) -> f64 {
    let total: f64 = transfer
        .iter()
        .map(|per_input| {
            per_input
                .iter()
                .map(|w| w.iter().sum::<Complex64>())
                .sum::<Complex64>()
                .norm_sqr()
        })
        .sum();
    let unit = total / transfer.len() as f64;
    if unit > 0.0 {
        unit
    } else {
        1.0 / n_inputs as f64
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseMode {
    /// Binary phases forward, relaxed-sigmoid gradient backward.
    #[default]
    Hard,
    /// Sigmoid-relaxed phases both ways.
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratedOutput {
    pub s1: f64,
    pub s2: f64,
    pub label: Label,
}

#[derive(Debug, Clone)]
pub struct IntegratedModel {
    pub geometry: IntegratedGeometry,
    pub logits: Vec<f64>,
    /// Softplus parameters of the two bias powers, in units of [`Self::power_unit`].
    pub bias_raw: [f64; 2],
    pub use_bias: bool,
    pub temperature: f64,
    pub mode: PhaseMode,
    input_modes: Vec<Vec<Complex64>>,
    output_modes: [Vec<Complex64>; 2],
    half: SlabPropagator,
    /// `w[k][j][n]`: overlap with output `k` of input `j` through neuron `n` at unit transmission.
    transfer: Vec<Vec<Vec<Complex64>>>,
    power_unit: f64,
}

impl PartialEq for IntegratedModel {
    fn eq(&self, other: &Self) -> bool {
        self.geometry == other.geometry
            && self.logits == other.logits
            && self.bias_raw == other.bias_raw
            && self.use_bias == other.use_bias
            && self.temperature == other.temperature
            && self.mode == other.mode
    }
}

impl IntegratedModel {
    /// All neurons unslotted (logit −1), both biases `ln 2` power units.
    pub fn new(geometry: IntegratedGeometry) -> Result<Self> {
        geometry.validate()?;
        let half = geometry.propagator(geometry.plane_distance / 2.0)?;
        let input_modes: Vec<_> = geometry
            .input_positions()
            .iter()
            .map(|&p| geometry.mode(p))
            .collect();
        let [o1, o2] = geometry.output_positions();
        let output_modes = [geometry.mode(o1), geometry.mode(o2)];
        let start = geometry.metaline_start()?;
        let per = geometry.samples_per_neuron()?;
        let at_metaline: Vec<_> = input_modes.iter().map(|m| half.forward(m)).collect();
        let back: Vec<_> = output_modes.iter().map(|m| half.adjoint(m)).collect();
        let transfer: Vec<Vec<Vec<Complex64>>> = back
            .iter()
            .map(|b| {
                at_metaline
                    .iter()
                    .map(|a| {
                        (0..geometry.n_neurons)
                            .map(|n| {
                                let r = start + n * per..start + (n + 1) * per;
                                a[r.clone()]
                                    .iter()
                                    .zip(&b[r])
                                    .map(|(a, b)| a * b.conj())
                                    .sum::<Complex64>()
                                    * geometry.grid_pitch
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let power_unit = unit_power(&transfer, geometry.n_inputs);
        Ok(Self {
            logits: vec![-1.0; geometry.n_neurons],
            bias_raw: [0.0; 2],
            use_bias: true,
            temperature: 0.2,
            mode: PhaseMode::Hard,
            input_modes,
            output_modes,
            half,
            transfer,
            power_unit,
            geometry,
        })
    }

    /// Output power of the all-unslotted line for unit drive on every
    /// input, averaged over outputs; bias and loss scores are measured in it.
    /// `W[k][j][n]`: contribution of input `j` through neuron `n` to output `k`
    /// at unit transmission.
    pub fn transfer_tensor(&self) -> &[Vec<Vec<Complex64>>] {
        &self.transfer
    }

    pub fn power_unit(&self) -> f64 {
        self.power_unit
    }

    /// Logits drawn uniformly from `[−1, 1)`.
    pub fn randomize(&mut self, seed: u64) {
        let mut rng = seed::stream(seed, "integrated-init");
        for l in &mut self.logits {
            *l = rng.random_range(-1.0..1.0);
        }
    }

    pub fn bias(&self) -> [f64; 2] {
        if self.use_bias {
            [
                self.power_unit * softplus(self.bias_raw[0]),
                self.power_unit * softplus(self.bias_raw[1]),
            ]
        } else {
            [0.0, 0.0]
        }
    }

    pub fn set_bias(&mut self, bias: [f64; 2]) -> Result<()> {
        if bias.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(Error::Config(format!("bias must be >= 0, got {bias:?}")));
        }
        let u = self.power_unit;
        self.bias_raw = [softplus_inv(bias[0] / u), softplus_inv(bias[1] / u)];
        Ok(())
    }

    /// Slot state per neuron from the logit signs.
    pub fn states(&self) -> Vec<bool> {
        self.logits.iter().map(|&l| l > 0.0).collect()
    }

    pub fn set_states(&mut self, states: &[bool]) -> Result<()> {
        if states.len() != self.geometry.n_neurons {
            return Err(Error::shape(self.geometry.n_neurons, states.len()));
        }
        self.logits = states.iter().map(|&s| if s { 1.0 } else { -1.0 }).collect();
        Ok(())
    }

    /// Per-neuron `(transmission, d transmission / d logit)` for the current mode.
    fn transmissions(&self) -> Vec<(Complex64, Complex64)> {
        let (a0, a1) = self.geometry.amplitudes;
        let t = self.temperature;
        self.logits
            .iter()
            .map(|&l| {
                let s = sigmoid(l / t);
                let ds = s * (1.0 - s) / t;
                let (amp, phase) = match self.mode {
                    PhaseMode::Hard => {
                        if l > 0.0 {
                            (a1, SLOT_PHASE)
                        } else {
                            (a0, 0.0)
                        }
                    }
                    PhaseMode::Relaxed => (a0 + (a1 - a0) * s, SLOT_PHASE * s),
                };
                let e = Complex64::from_polar(1.0, phase);
                let dt = (e * (a1 - a0) + Complex64::i() * e * (amp * SLOT_PHASE)) * ds;
                (e * amp, dt)
            })
            .collect()
    }

    /// Neuron phases as used by the forward pass.
    pub fn phases(&self) -> Vec<f64> {
        match self.mode {
            PhaseMode::Hard => binarize(&self.logits),
            PhaseMode::Relaxed => self
                .logits
                .iter()
                .map(|&l| relaxed_phase(l, self.temperature))
                .collect(),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.geometry.n_inputs {
            return Err(Error::shape(self.geometry.n_inputs, x.len()));
        }
        if x.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("waveguide amplitudes must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn inject(&self, x: &[f64]) -> Result<ComplexField1D> {
        self.check_input(x)?;
        let mut amp = vec![Complex64::new(0.0, 0.0); self.geometry.n_samples()];
        for (xk, m) in x.iter().zip(&self.input_modes) {
            if *xk != 0.0 {
                for (a, v) in amp.iter_mut().zip(m) {
                    *a += v * xk;
                }
            }
        }
        Ok(self.field(amp))
    }

    fn field(&self, amplitude: Vec<Complex64>) -> ComplexField1D {
        ComplexField1D {
            amplitude,
            pitch: self.geometry.grid_pitch,
            wavelength_eff: self.geometry.wavelength_eff(),
        }
    }

    pub fn propagate_half(&self, u: &ComplexField1D) -> ComplexField1D {
        self.field(self.half.forward(&u.amplitude))
    }

    /// Multiplies each neuron span by its transmission; zero outside the aperture.
    pub fn modulate_metaline(&self, u: &ComplexField1D) -> Result<ComplexField1D> {
        let start = self.geometry.metaline_start()?;
        let per = self.geometry.samples_per_neuron()?;
        let mut out = vec![Complex64::new(0.0, 0.0); u.amplitude.len()];
        for (n, (t, _)) in self.transmissions().into_iter().enumerate() {
            for i in start + n * per..start + (n + 1) * per {
                out[i] = u.amplitude[i] * t;
            }
        }
        Ok(self.field(out))
    }

    /// `P_k = |⟨u, m_k⟩|²` against the two normalized output modes.
    pub fn read_outputs(&self, u: &ComplexField1D) -> [f64; 2] {
        let dx = self.geometry.grid_pitch;
        let overlap = |m: &[Complex64]| {
            (u.amplitude
                .iter()
                .zip(m)
                .map(|(a, b)| a * b.conj())
                .sum::<Complex64>()
                * dx)
                .norm_sqr()
        };
        [overlap(&self.output_modes[0]), overlap(&self.output_modes[1])]
    }

    /// Field at the output plane.
    pub fn output_field(&self, x: &[f64]) -> Result<ComplexField1D> {
        let u = self.inject(x)?;
        let u = self.propagate_half(&u);
        let u = self.modulate_metaline(&u)?;
        Ok(self.propagate_half(&u))
    }

    /// Field-level forward pass.
    pub fn forward_integrated(&self, x: &[f64]) -> Result<IntegratedOutput> {
        let p = self.read_outputs(&self.output_field(x)?);
        Ok(self.decide(p))
    }

    fn decide(&self, p: [f64; 2]) -> IntegratedOutput {
        let b = self.bias();
        let (s1, s2) = (p[0] + b[0], p[1] + b[1]);
        IntegratedOutput {
            s1,
            s2,
            label: if s1 > s2 { Label::Seizure } else { Label::NonSeizure },
        }
    }

    /// Output overlaps through the precomputed transfer tensor, with the
    /// per-neuron input sums `c[k][n]` kept for the backward pass.
    fn overlaps(&self, x: &[f64], t: &[(Complex64, Complex64)]) -> ([Complex64; 2], Vec<Vec<Complex64>>) {
        let mut o = [Complex64::new(0.0, 0.0); 2];
        let mut c = vec![vec![Complex64::new(0.0, 0.0); self.geometry.n_neurons]; 2];
        for k in 0..2 {
            for (xj, w) in x.iter().zip(&self.transfer[k]) {
                if *xj != 0.0 {
                    for (ck, wn) in c[k].iter_mut().zip(w) {
                        *ck += wn * xj;
                    }
                }
            }
            o[k] = c[k].iter().zip(t).map(|(c, (t, _))| c * t).sum();
        }
        (o, c)
    }

    /// Fast forward through the transfer tensor; equals [`Self::forward_integrated`].
    pub fn forward_fast(&self, x: &[f64]) -> Result<IntegratedOutput> {
        self.check_input(x)?;
        let t = self.transmissions();
        let (o, _) = self.overlaps(x, &t);
        Ok(self.decide([o[0].norm_sqr(), o[1].norm_sqr()]))
    }

    pub fn n_params(&self) -> usize {
        self.geometry.n_neurons + 2
    }

    /// `[logits…, bias_raw_1, bias_raw_2]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.logits.clone();
        p.extend_from_slice(&self.bias_raw);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter length");
        let n = self.geometry.n_neurons;
        self.logits.copy_from_slice(&p[..n]);
        self.bias_raw = [p[n], p[n + 1]];
    }

    fn scores_loss(&self, s: [f64; 2], label: Label, loss: &LossConfig) -> Result<(f64, [f64; 2])> {
        let target = if label.is_seizure() { 0 } else { 1 };
        match loss.kind {
            LossKind::CrossEntropy => {
                let k = loss.score_scale / self.power_unit;
                let (v, g) = cross_entropy(&[k * s[0], k * s[1]], target)?;
                Ok((v, [k * g[0], k * g[1]]))
            }
            LossKind::Mse => {
                let t = [(target == 0) as u8 as f64, (target == 1) as u8 as f64];
                let d = [s[0] - t[0], s[1] - t[1]];
                Ok(((d[0] * d[0] + d[1] * d[1]) / 2.0, [d[0], d[1]]))
            }
        }
    }

    /// Loss, gradient in the layout of [`Self::params`], and prediction.
    pub fn loss_grad(&self, x: &[f64], label: Label, loss: &LossConfig) -> Result<(f64, Vec<f64>, Label)> {
        self.check_input(x)?;
        let t = self.transmissions();
        let (o, c) = self.overlaps(x, &t);
        let out = self.decide([o[0].norm_sqr(), o[1].norm_sqr()]);
        let (value, gs) = self.scores_loss([out.s1, out.s2], label, loss)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let n = self.geometry.n_neurons;
        let mut grad = vec![0.0; n + 2];
        for (nn, (_, dt)) in t.iter().enumerate() {
            let mut g = 0.0;
            for k in 0..2 {
                g += gs[k] * 2.0 * (o[k].conj() * c[k][nn] * dt).re;
            }
            grad[nn] = g;
        }
        if self.use_bias {
            for k in 0..2 {
                grad[n + k] = gs[k] * self.power_unit * sigmoid(self.bias_raw[k]);
            }
        }
        Ok((value, grad, out.label))
    }

    pub fn loss_value(&self, x: &[f64], label: Label, loss: &LossConfig) -> Result<f64> {
        let out = self.forward_fast(x)?;
        Ok(self.scores_loss([out.s1, out.s2], label, loss)?.0)
    }

    /// Geometry header, neuron bitmap, biases, then optionally the logits.
    pub fn write_checkpoint<W: Write>(&self, mut w: W, with_logits: bool) -> Result<()> {
        let g = &self.geometry;
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [g.n_inputs, g.atoms_per_neuron, g.n_neurons, g.pad_factor] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in [
            g.wavelength,
            g.n_eff,
            g.input_pitch,
            g.output_separation,
            g.plane_distance,
            g.atom_period,
            g.atom_height,
            g.grid_pitch,
            g.window,
            g.waist,
            g.amplitudes.0,
            g.amplitudes.1,
            self.temperature,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut bits = vec![0u8; g.n_neurons.div_ceil(8)];
        for (i, s) in self.states().into_iter().enumerate() {
            if s {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        buf.extend_from_slice(&bits);
        buf.push(self.use_bias as u8);
        for b in self.bias() {
            buf.extend_from_slice(&b.to_le_bytes());
        }
        buf.push(with_logits as u8);
        if with_logits {
            for l in &self.logits {
                buf.extend_from_slice(&l.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self, with_logits: bool) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_checkpoint(&mut out, with_logits)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        if cur.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("missing DPUI magic".into()));
        }
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported DPUI version {version}")));
        }
        let n_inputs = cur.u32()? as usize;
        let atoms_per_neuron = cur.u32()? as usize;
        let n_neurons = cur.u32()? as usize;
        let pad_factor = cur.u32()? as usize;
        let mut f = [0.0; 13];
        for v in &mut f {
            *v = cur.f64()?;
        }
        let geometry = IntegratedGeometry {
            wavelength: f[0],
            n_eff: f[1],
            n_inputs,
            input_pitch: f[2],
            output_separation: f[3],
            plane_distance: f[4],
            atom_period: f[5],
            atoms_per_neuron,
            n_neurons,
            atom_height: f[6],
            grid_pitch: f[7],
            window: f[8],
            waist: f[9],
            amplitudes: (f[10], f[11]),
            pad_factor,
        };
        let bits = cur.take(n_neurons.div_ceil(8))?;
        let states: Vec<bool> = (0..n_neurons).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
        let use_bias = match cur.u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("bias flag {b}"))),
        };
        let bias = [cur.f64()?, cur.f64()?];
        let logits = match cur.u8()? {
            0 => None,
            1 => Some(
                (0..n_neurons)
                    .map(|_| cur.f64())
                    .collect::<Result<Vec<_>>>()?,
            ),
            b => return Err(Error::Format(format!("logit flag {b}"))),
        };
        cur.finish()?;
        let mut model = Self::new(geometry)?;
        model.temperature = f[12];
        model.use_bias = use_bias;
        if use_bias {
            model.set_bias(bias)?;
        }
        match logits {
            Some(l) => {
                if l.iter().zip(&states).any(|(l, s)| (*l > 0.0) != *s) {
                    return Err(Error::Format("logits disagree with the state bitmap".into()));
                }
                model.logits = l;
            }
            None => model.set_states(&states)?,
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    fn model() -> IntegratedModel {
        IntegratedModel::new(IntegratedGeometry::default()).unwrap()
    }

    #[test]
    fn default_geometry_is_consistent() {
        let g = IntegratedGeometry::default();
        assert!((g.metaline_width() - 540e-6).abs() < 1e-12);
        assert_eq!(g.samples_per_neuron().unwrap(), 9);
        assert_eq!(g.n_samples(), 6000);
        assert_eq!(g.metaline_start().unwrap(), 300);
        let bad = IntegratedGeometry {
            grid_pitch: 70e-9,
            ..g.clone()
        };
        assert!(bad.validate().is_err());
        let wide = IntegratedGeometry { waist: 6e-6, ..g };
        assert!(wide.validate().is_err());
    }

    #[test]
    fn injection_examples() {
        let m = model();
        let zero = m.inject(&[0.0; 16]).unwrap();
        assert!(zero.amplitude.iter().all(|c| c.norm() == 0.0));
        let mut x = [0.0; 16];
        x[0] = 0.7;
        let one = m.inject(&x).unwrap();
        assert!((one.power() - 0.49).abs() < 1e-9);
        let g = &m.geometry;
        let peak = (0..g.n_samples())
            .max_by(|&a, &b| one.amplitude[a].norm().total_cmp(&one.amplitude[b].norm()))
            .unwrap();
        assert!((g.coordinate(peak) - g.input_positions()[0]).abs() <= g.grid_pitch);
        assert!(m.inject(&[1.0; 15]).is_err());
        let mut neg = [0.0; 16];
        neg[3] = -1.0;
        assert!(m.inject(&neg).is_err());
    }

    #[test]
    fn read_output_examples() {
        let m = model();
        let field = |a: Vec<Complex64>| ComplexField1D {
            amplitude: a,
            pitch: m.geometry.grid_pitch,
            wavelength_eff: m.geometry.wavelength_eff(),
        };
        let p = m.read_outputs(&field(m.output_modes[0].clone()));
        assert!((p[0] - 1.0).abs() < 1e-9 && p[1] < 1e-6);
        assert_eq!(m.read_outputs(&field(vec![Complex64::new(0.0, 0.0); 6000])), [0.0, 0.0]);
        let mix: Vec<_> = m.output_modes[0]
            .iter()
            .zip(&m.output_modes[1])
            .map(|(a, b)| (a + b) / 2f64.sqrt())
            .collect();
        let p = m.read_outputs(&field(mix));
        assert!((p[0] - 0.5).abs() < 1e-6 && (p[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn metaline_examples() {
        let mut m = model();
        let mut x = [0.0; 16];
        x[7] = 1.0;
        let u = m.propagate_half(&m.inject(&x).unwrap());
        let start = m.geometry.metaline_start().unwrap();
        let end = start + 5400;
        let plain = m.modulate_metaline(&u).unwrap();
        assert_eq!(plain.amplitude[start..end], u.amplitude[start..end]);
        assert!(plain.amplitude[..start].iter().all(|c| c.norm() == 0.0));
        m.set_states(&[true; 600]).unwrap();
        let slotted = m.modulate_metaline(&u).unwrap();
        let rot = Complex64::from_polar(1.0, SLOT_PHASE);
        for i in start..end {
            assert!((slotted.amplitude[i] - u.amplitude[i] * rot).norm() < 1e-15);
        }
    }

    #[test]
    fn bias_only_path() {
        let mut m = model();
        m.set_bias([0.3, 0.1]).unwrap();
        let out = m.forward_integrated(&[0.0; 16]).unwrap();
        assert!((out.s1 - 0.3).abs() < 1e-12 && (out.s2 - 0.1).abs() < 1e-12);
        assert_eq!(out.label, Label::Seizure);
        assert!(m.set_bias([-0.1, 0.0]).is_err());
        m.use_bias = false;
        let out = m.forward_integrated(&[0.0; 16]).unwrap();
        assert_eq!((out.s1, out.s2, out.label), (0.0, 0.0, Label::NonSeizure));
    }

    #[test]
    fn binarize_examples() {
        assert_eq!(binarize(&[3.0, -3.0]), vec![SLOT_PHASE, 0.0]);
        for l in [1.0, -1.0] {
            let step = if l > 0.0 { 1.0 } else { 0.0 };
            assert!((sigmoid(l / 0.05) - step).abs() < 1e-6);
        }
        let h = 1e-6;
        let fd = (relaxed_phase(0.3 + h, 0.2) - relaxed_phase(0.3 - h, 0.2)) / (2.0 * h);
        assert!((fd - relaxed_phase_grad(0.3, 0.2)).abs() < 1e-8);
    }

    #[test]
    fn fast_path_matches_fields() {
        let mut m = model();
        m.randomize(5);
        m.set_bias([0.02, 0.01]).unwrap();
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        for mode in [PhaseMode::Hard, PhaseMode::Relaxed] {
            m.mode = mode;
            let a = m.forward_integrated(&x).unwrap();
            let b = m.forward_fast(&x).unwrap();
            assert!((a.s1 - b.s1).abs() < 1e-10 * a.s1.abs().max(1e-300));
            assert!((a.s2 - b.s2).abs() < 1e-10 * a.s2.abs().max(1e-300));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = model();
        m.randomize(2);
        m.set_bias([0.25, 0.5]).unwrap();
        let hard = IntegratedModel::from_bytes(&m.to_bytes(false)).unwrap();
        assert_eq!(hard.states(), m.states());
        assert!((hard.bias()[0] - 0.25).abs() < 1e-12);
        assert_eq!(hard.forward_fast(&[0.5; 16]).unwrap().label, m.forward_fast(&[0.5; 16]).unwrap().label);
        let full = IntegratedModel::from_bytes(&m.to_bytes(true)).unwrap();
        assert_eq!(full.logits, m.logits);
        let bytes = m.to_bytes(false);
        assert_eq!(bytes.len(), 4 + 4 + 16 + 13 * 8 + 75 + 1 + 16 + 1);
        assert!(IntegratedModel::from_bytes(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn mirror_symmetric_configuration_balances_outputs() {
        let mut m = model();
        m.use_bias = false;
        m.randomize(9);
        let n = m.geometry.n_neurons;
        let states: Vec<bool> = (0..n).map(|i| m.logits[i.min(n - 1 - i)] > 0.0).collect();
        m.set_states(&states).unwrap();
        let x: Vec<f64> = (0..16).map(|j| 0.2 + (j.min(15 - j) as f64 * 0.61).sin().abs()).collect();
        let out = m.forward_integrated(&x).unwrap();
        assert!(out.s1 > 0.0);
        assert!((out.s1 - out.s2).abs() < 1e-9 * out.s1.max(out.s2));
        let fast = m.forward_fast(&x).unwrap();
        assert!((fast.s1 - fast.s2).abs() < 1e-9 * fast.s1);
    }

    #[test]
    fn relaxed_gradient_matches_finite_differences() {
        let g = IntegratedGeometry {
            n_neurons: 16,
            ..IntegratedGeometry::default()
        };
        for seed in 0..10u64 {
            let mut m = IntegratedModel::new(g.clone()).unwrap();
            m.mode = PhaseMode::Relaxed;
            m.randomize(seed);
            m.bias_raw = [0.3, -0.4];
            let x: Vec<f64> = (0..16).map(|j| ((j as u64 * 5 + seed) % 7) as f64 / 6.0).collect();
            for (kind, label) in [(LossKind::CrossEntropy, Label::Seizure), (LossKind::Mse, Label::NonSeizure)] {
                let cfg = LossConfig { kind, score_scale: 3.0 };
                let (_, grad, _) = m.loss_grad(&x, label, &cfg).unwrap();
                let p0 = m.params();
                for i in 0..p0.len() {
                    let h = 1e-6;
                    let mut q = m.clone();
                    let mut p = p0.clone();
                    p[i] += h;
                    q.set_params(&p);
                    let up = q.loss_value(&x, label, &cfg).unwrap();
                    p[i] -= 2.0 * h;
                    q.set_params(&p);
                    let down = q.loss_value(&x, label, &cfg).unwrap();
                    let fd = (up - down) / (2.0 * h);
                    let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
                    assert!(rel < 1e-4, "seed {seed} param {i}: fd {fd} analytic {}", grad[i]);
                }
            }
        }
    }

    #[test]
    fn straight_through_gradient_uses_relaxed_derivative() {
        let g = IntegratedGeometry {
            n_neurons: 16,
            ..IntegratedGeometry::default()
        };
        let mut m = IntegratedModel::new(g).unwrap();
        m.randomize(4);
        let x = vec![0.5; 16];
        let cfg = LossConfig::default();
        let (_, hard_grad, _) = m.loss_grad(&x, Label::Seizure, &cfg).unwrap();
        assert!(hard_grad[..16].iter().any(|v| *v != 0.0));
        // A neuron the hard forward pass cannot see still receives gradient.
        let before = m.loss_value(&x, Label::Seizure, &cfg).unwrap();
        let mut q = m.clone();
        q.logits[0] += 1e-3 * q.logits[0].signum();
        assert_eq!(q.loss_value(&x, Label::Seizure, &cfg).unwrap(), before);
        m.temperature = 0.05;
        let (_, sharper, _) = m.loss_grad(&x, Label::Seizure, &cfg).unwrap();
        assert_ne!(sharper[..16], hard_grad[..16]);
    }

    proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn coherent_power_scales_quadratically(k in 0.1f64..10.0, seed in 0u64..100) {
            let mut m = model();
            m.randomize(seed);
            m.set_bias([0.05, 0.07]).unwrap();
            let x: Vec<f64> = (0..16).map(|i| ((i as u64 * 7 + seed) % 5) as f64 / 4.0).collect();
            let kx: Vec<f64> = x.iter().map(|v| v * k).collect();
            let a = m.forward_fast(&x).unwrap();
            let b = m.forward_fast(&kx).unwrap();
            let bias = m.bias();
            for (p, q, bb) in [(a.s1, b.s1, bias[0]), (a.s2, b.s2, bias[1])] {
                let expect = k * k * (p - bb);
                prop_assert!(((q - bb) - expect).abs() <= 1e-9 * expect.abs().max(1e-12));
            }
        }

        #[test]
        fn phase_mask_conserves_aperture_power(seed in 0u64..100) {
            let mut m = model();
            m.randomize(seed);
            let mut x = [0.0; 16];
            x[(seed % 16) as usize] = 1.0;
            let u = m.propagate_half(&m.inject(&x).unwrap());
            let start = m.geometry.metaline_start().unwrap();
            let inside = |f: &ComplexField1D| f.amplitude[start..start + 5400].iter().map(|c| c.norm_sqr()).sum::<f64>();
            let v = m.modulate_metaline(&u).unwrap();
            prop_assert!((inside(&v) - inside(&u)).abs() <= 1e-12 * inside(&u));
        }
    }
}
