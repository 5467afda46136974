use std::f64::consts::TAU;
use std::io::Write;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use super::emulator::AberrationProfile;
use super::propagation::{check_optics, Propagator};
use crate::error::{Error, Result};
use crate::seed;
use crate::signal::Label;
use crate::tensor::Cursor;
use crate::train::{cross_entropy, LossConfig, LossKind};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DPUM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FreespaceGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Metres per pixel.
    pub pitch: f64,
    pub wavelength: f64,
    /// Layer-to-layer distance in metres.
    pub distance: f64,
    pub pad_factor: usize,
}

impl Default for FreespaceGeometry {
    fn default() -> Self {
        Self {
            rows: 400,
            cols: 400,
            pitch: 9.2e-6,
            wavelength: 532e-9,
            distance: 0.1,
            pad_factor: 2,
        }
    }
}

impl FreespaceGeometry {
    /// An `n`×`n` grid whose distance keeps the Fresnel number of the
    /// default 400×400, 10 cm set-up.
    pub fn scaled(n: usize) -> Self {
        let base = Self::default();
        let ratio = n as f64 / base.rows as f64;
        Self {
            rows: n,
            cols: n,
            distance: base.distance * ratio * ratio,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_optics(self.pitch, self.wavelength)?;
        if self.rows == 0 || self.cols == 0 || self.pad_factor == 0 {
            return Err(Error::Config("grid size and pad factor must be positive".into()));
        }
        if !(self.distance >= 0.0 && self.distance.is_finite()) {
            return Err(Error::Config(format!(
                "distance must be >= 0, got {}",
                self.distance
            )));
        }
        Ok(())
    }

    pub fn propagator(&self) -> Result<Propagator> {
        self.validate()?;
        Propagator::new(
            self.rows,
            self.cols,
            self.pitch,
            self.wavelength,
            self.distance,
            self.pad_factor,
        )
    }

    pub fn n_pixels(&self) -> usize {
        self.rows * self.cols
    }
}

/// Two detector masks. Mask 0 is the seizure region, mask 1 the
/// non-seizure region.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorRegions {
    masks: [Array2<bool>; 2],
    counts: [usize; 2],
}

impl DetectorRegions {
    pub fn new(seizure: Array2<bool>, non_seizure: Array2<bool>) -> Result<Self> {
        if seizure.dim() != non_seizure.dim() {
            return Err(Error::shape(
                format!("{:?}", seizure.dim()),
                format!("{:?}", non_seizure.dim()),
            ));
        }
        let counts = [
            seizure.iter().filter(|&&m| m).count(),
            non_seizure.iter().filter(|&&m| m).count(),
        ];
        if counts.contains(&0) {
            return Err(Error::Config("detector regions must be nonempty".into()));
        }
        if seizure.iter().zip(&non_seizure).any(|(&a, &b)| a && b) {
            return Err(Error::Config("detector regions overlap".into()));
        }
        Ok(Self {
            masks: [seizure, non_seizure],
            counts,
        })
    }

    /// Two `side`×`side` squares centred at `(rows/2, cols/4)` and
    /// `(rows/2, 3·cols/4)`.
    pub fn squares(rows: usize, cols: usize, side: usize) -> Result<Self> {
        let square = |cc: usize| {
            let r0 = (rows / 2).saturating_sub(side / 2);
            let c0 = cc.saturating_sub(side / 2);
            Array2::from_shape_fn((rows, cols), |(r, c)| {
                r >= r0 && r < r0 + side && c >= c0 && c < c0 + side
            })
        };
        Self::new(square(cols / 4), square(3 * cols / 4))
    }

    /// 50×50 squares on a 400×400 grid, scaled proportionally otherwise.
    pub fn default_for(rows: usize, cols: usize) -> Result<Self> {
        let side = ((rows.min(cols) as f64) * 50.0 / 400.0).round().max(1.0) as usize;
        Self::squares(rows, cols, side)
    }

    pub fn mask(&self, k: usize) -> &Array2<bool> {
        &self.masks[k]
    }

    pub fn count(&self, k: usize) -> usize {
        self.counts[k]
    }

    pub fn dim(&self) -> (usize, usize) {
        self.masks[0].dim()
    }

    /// Mean intensity inside each mask.
    pub fn means(&self, y: &Array2<f64>) -> Result<(f64, f64)> {
        if y.dim() != self.dim() {
            return Err(Error::shape(
                format!("{:?}", self.dim()),
                format!("{:?}", y.dim()),
            ));
        }
        let mut sums = [0.0; 2];
        for ((v, &m0), &m1) in y.iter().zip(&self.masks[0]).zip(&self.masks[1]) {
            if m0 {
                sums[0] += v;
            } else if m1 {
                sums[1] += v;
            }
        }
        Ok((
            sums[0] / self.counts[0] as f64,
            sums[1] / self.counts[1] as f64,
        ))
    }

    /// 1 on the true-class region, 0 elsewhere.
    pub fn target_map(&self, label: Label) -> Array2<f64> {
        let k = if label.is_seizure() { 0 } else { 1 };
        self.masks[k].mapv(|m| if m { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Readout {
    /// Seizure-region mean after detector gain and region scale.
    pub i1: f64,
    /// Non-seizure-region mean after detector gain.
    pub i2: f64,
    pub label: Label,
}

/// Decision rule on already-scaled intensities: ties go to non-seizure.
pub fn decide(i1: f64, i2: f64) -> Label {
    if i1 > i2 {
        Label::Seizure
    } else {
        Label::NonSeizure
    }
}

pub fn readout(y: &Array2<f64>, regions: &DetectorRegions, c: f64) -> Result<Readout> {
    let (i1, i2) = regions.means(y)?;
    let i1 = c * i1;
    Ok(Readout {
        i1,
        i2,
        label: decide(i1, i2),
    })
}

/// `x' = 2π·σ(a·y + b)`.
pub fn activation(y: &Array2<f64>, a: f64, b: f64) -> Array2<f64> {
    y.mapv(|v| TAU * sigmoid(a * v + b))
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `|P·exp(j(x+H))|²`.
pub fn layer_forward(x: &Array2<f64>, h: &Array2<f64>, prop: &Propagator) -> Result<Array2<f64>> {
    if x.dim() != h.dim() || x.dim() != prop.shape() {
        return Err(Error::shape(
            format!("{:?}", prop.shape()),
            format!("x {:?}, H {:?}", x.dim(), h.dim()),
        ));
    }
    let u: Vec<Complex64> = x
        .iter()
        .zip(h)
        .map(|(a, b)| Complex64::from_polar(1.0, a + b))
        .collect();
    let v = prop.forward(&u);
    Ok(Array2::from_shape_vec(x.dim(), v.iter().map(|c| c.norm_sqr()).collect())
        .expect("shape preserved"))
}

#[derive(Debug, Clone)]
pub struct FreespaceModel {
    pub geometry: FreespaceGeometry,
    /// Phase maps in `[0, 2π)`.
    pub layers: Vec<Array2<f64>>,
    /// `(a_i, b_i)` between consecutive layers.
    pub activations: Vec<(f64, f64)>,
    pub regions: DetectorRegions,
    pub region_scale: f64,
    prop: Propagator,
}

impl PartialEq for FreespaceModel {
    fn eq(&self, other: &Self) -> bool {
        self.geometry == other.geometry
            && self.layers == other.layers
            && self.activations == other.activations
            && self.regions == other.regions
            && self.region_scale == other.region_scale
    }
}

/// Where a forward pass starts.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Start<'a> {
    /// Input image with pixels in `[0, 1]`.
    Image(&'a Array2<f64>),
    /// Captured intensity feeding layer `layer` (≥ 1) through activation `layer − 1`.
    Captured { layer: usize, y: &'a Array2<f64> },
}

/// Per-layer intermediates kept for the backward pass.
pub(crate) struct Trace {
    first: usize,
    /// Intensity fed into the first traced activation, if any.
    captured: Option<Vec<f64>>,
    /// Sigmoid values of the activation feeding each traced layer (absent for the image layer).
    s: Vec<Option<Vec<f64>>>,
    u: Vec<Vec<Complex64>>,
    v: Vec<Vec<Complex64>>,
    /// Raw intensities.
    y: Vec<Vec<f64>>,
    /// Intensities as seen by the next activation.
    seen: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self, dim: (usize, usize)) -> Array2<f64> {
        Array2::from_shape_vec(dim, self.y.last().expect("at least one layer").clone())
            .expect("shape preserved")
    }
}

/// Gradients in the flat parameter layout of [`FreespaceModel::params`].
pub type Gradient = Vec<f64>;

impl FreespaceModel {
    /// Flat phases, default regions, `a = 1`, `b = 0`, `c = 1`.
    pub fn new(geometry: FreespaceGeometry, n_layers: usize) -> Result<Self> {
        let regions = DetectorRegions::default_for(geometry.rows, geometry.cols)?;
        Self::with_regions(geometry, n_layers, regions)
    }

    pub fn with_regions(
        geometry: FreespaceGeometry,
        n_layers: usize,
        regions: DetectorRegions,
    ) -> Result<Self> {
        if n_layers == 0 {
            return Err(Error::Config("need at least one layer".into()));
        }
        let prop = geometry.propagator()?;
        if regions.dim() != (geometry.rows, geometry.cols) {
            return Err(Error::shape(
                format!("{}x{}", geometry.rows, geometry.cols),
                format!("{:?}", regions.dim()),
            ));
        }
        let dim = (geometry.rows, geometry.cols);
        Ok(Self {
            layers: vec![Array2::zeros(dim); n_layers],
            activations: vec![(1.0, 0.0); n_layers - 1],
            regions,
            region_scale: 1.0,
            geometry,
            prop,
        })
    }

    /// Phases drawn uniformly from `[0, 2π)`.
    pub fn randomize(&mut self, seed: u64) {
        let mut rng = seed::stream(seed, "freespace-init");
        for h in &mut self.layers {
            h.mapv_inplace(|_| rng.random_range(0.0..TAU));
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.geometry.rows, self.geometry.cols)
    }

    pub fn propagator(&self) -> &Propagator {
        &self.prop
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.activations.len() + 1 != self.layers.len() {
            return Err(Error::Config(format!(
                "{} layers need {} activations, got {}",
                self.layers.len(),
                self.layers.len().saturating_sub(1),
                self.activations.len()
            )));
        }
        if !(0.9..=1.1).contains(&self.region_scale) {
            return Err(Error::Config(format!(
                "region scale {} outside [0.9, 1.1]",
                self.region_scale
            )));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.layers.len() * self.geometry.n_pixels() + 2 * self.activations.len()
    }

    /// `[H_1 …, H_N (row-major), a_1, b_1, …]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for h in &self.layers {
            p.extend(h.iter());
        }
        for &(a, b) in &self.activations {
            p.push(a);
            p.push(b);
        }
        p
    }

    /// Inverse of [`FreespaceModel::params`]; phases are wrapped into `[0, 2π)`.
    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter length");
        let n = self.geometry.n_pixels();
        for (i, h) in self.layers.iter_mut().enumerate() {
            for (dst, src) in h.iter_mut().zip(&p[i * n..(i + 1) * n]) {
                *dst = src.rem_euclid(TAU);
            }
        }
        let off = self.layers.len() * n;
        for (i, act) in self.activations.iter_mut().enumerate() {
            *act = (p[off + 2 * i], p[off + 2 * i + 1]);
        }
    }

    /// Writes layers 2..N and the activations from `params`, which uses the
    /// layout of [`FreespaceModel::params`] without the first layer.
    pub fn set_params_after_first(&mut self, params: &[f64]) {
        let n = self.geometry.n_pixels();
        assert_eq!(params.len(), self.n_params() - n, "parameter length");
        for (i, h) in self.layers.iter_mut().enumerate().skip(1) {
            for (dst, src) in h.iter_mut().zip(&params[(i - 1) * n..i * n]) {
                *dst = src.rem_euclid(TAU);
            }
        }
        let off = (self.layers.len() - 1) * n;
        for (i, act) in self.activations.iter_mut().enumerate() {
            *act = (params[off + 2 * i], params[off + 2 * i + 1]);
        }
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::shape(
                format!("{:?}", self.dim()),
                format!("{:?}", x.dim()),
            ));
        }
        Ok(())
    }

    pub(crate) fn run(&self, start: Start<'_>, profile: Option<&AberrationProfile>) -> Result<Trace> {
        self.validate()?;
        if let Some(p) = profile {
            p.check(self.dim())?;
        }
        let n_layers = self.layers.len();
        let (first, mut phase, captured, mut s_in) = match start {
            Start::Image(img) => {
                self.check_input(img)?;
                (0, img.iter().map(|v| TAU * v).collect::<Vec<_>>(), None, None)
            }
            Start::Captured { layer, y } => {
                self.check_input(y)?;
                if layer == 0 || layer >= n_layers {
                    return Err(Error::Config(format!(
                        "captured input must feed a layer in 1..{n_layers}, got {layer}"
                    )));
                }
                let (a, b) = self.activations[layer - 1];
                let s: Vec<f64> = y.iter().map(|&v| sigmoid(a * v + b)).collect();
                let x = s.iter().map(|v| TAU * v).collect();
                (layer, x, Some(y.iter().copied().collect()), Some(s))
            }
        };
        let mut trace = Trace {
            first,
            captured,
            s: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            y: Vec::new(),
            seen: Vec::new(),
        };
        for layer in first..n_layers {
            let h = &self.layers[layer];
            let mut u: Vec<Complex64> = phase
                .iter()
                .zip(h.iter())
                .map(|(x, h)| Complex64::from_polar(1.0, x + h))
                .collect();
            if layer == 0 {
                if let Some(p) = profile.filter(|p| !p.is_identity_field()) {
                    for ((u, g), e) in u.iter_mut().zip(&p.illumination).zip(&p.phase_error) {
                        *u *= Complex64::from_polar(*g, *e);
                    }
                }
            }
            let v = self.prop.forward(&u);
            let y: Vec<f64> = v.iter().map(|c| c.norm_sqr()).collect();
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("intensity of layer {}", layer + 1)));
            }
            let seen = if layer + 1 < n_layers {
                match profile.filter(|p| p.shift != (0, 0)) {
                    Some(p) => p.apply_shift(&y, self.dim()),
                    None => y.clone(),
                }
            } else {
                Vec::new()
            };
            trace.s.push(s_in.take());
            trace.u.push(u);
            trace.v.push(v);
            if layer + 1 < n_layers {
                let (a, b) = self.activations[layer];
                let s: Vec<f64> = seen.iter().map(|&v| sigmoid(a * v + b)).collect();
                phase = s.iter().map(|v| TAU * v).collect();
                s_in = Some(s);
            }
            trace.y.push(y);
            trace.seen.push(seen);
        }
        Ok(trace)
    }

    fn readout_with(&self, y: &Array2<f64>, profile: Option<&AberrationProfile>) -> Result<Readout> {
        let (mut i1, mut i2) = self.regions.means(y)?;
        if let Some(p) = profile {
            i1 *= p.detector_gain[0];
            i2 *= p.detector_gain[1];
        }
        i1 *= self.region_scale;
        Ok(Readout {
            i1,
            i2,
            label: decide(i1, i2),
        })
    }

    /// Runs the image (pixels in `[0, 1]`) through every layer.
    pub fn forward(&self, image: &Array2<f64>) -> Result<(Array2<f64>, Readout)> {
        let trace = self.run(Start::Image(image), None)?;
        let y = trace.output(self.dim());
        let r = self.readout_with(&y, None)?;
        Ok((y, r))
    }

    /// Forward pass through the emulated bench.
    pub fn emulate_hardware(
        &self,
        profile: &AberrationProfile,
        image: &Array2<f64>,
    ) -> Result<(Array2<f64>, Readout)> {
        let trace = self.run(Start::Image(image), Some(profile))?;
        let y = trace.output(self.dim());
        let r = self.readout_with(&y, Some(profile))?;
        Ok((y, r))
    }

    /// First-layer intensity as the bench camera would capture it (after shift).
    pub fn capture_first_layer(
        &self,
        profile: Option<&AberrationProfile>,
        image: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        if self.layers.len() < 2 {
            return Err(Error::Config("capture needs at least two layers".into()));
        }
        let mut single = self.clone();
        single.layers.truncate(1);
        single.activations.clear();
        let trace = single.run(Start::Image(image), profile)?;
        let y = trace.y.into_iter().next().expect("one layer");
        let y = match profile.filter(|p| p.shift != (0, 0)) {
            Some(p) => p.apply_shift(&y, self.dim()),
            None => y,
        };
        Ok(Array2::from_shape_vec(self.dim(), y).expect("shape preserved"))
    }

    /// Continues from a captured first-layer intensity through layers 2..N.
    pub fn forward_from_capture(
        &self,
        captured: &Array2<f64>,
        profile: Option<&AberrationProfile>,
    ) -> Result<(Array2<f64>, Readout)> {
        let trace = self.run(Start::Captured { layer: 1, y: captured }, profile)?;
        let y = trace.output(self.dim());
        let r = self.readout_with(&y, profile)?;
        Ok((y, r))
    }

    /// Raw (pre-`c`) region means after detector gain.
    pub fn raw_pair(&self, y: &Array2<f64>, profile: Option<&AberrationProfile>) -> Result<(f64, f64)> {
        let (mut i1, mut i2) = self.regions.means(y)?;
        if let Some(p) = profile {
            i1 *= p.detector_gain[0];
            i2 *= p.detector_gain[1];
        }
        Ok((i1, i2))
    }

    /// Loss gradient w.r.t. the final intensity map.
    fn output_gradient(
        &self,
        y: &Array2<f64>,
        label: Label,
        loss: &LossConfig,
        profile: Option<&AberrationProfile>,
    ) -> Result<(f64, Vec<f64>)> {
        let n = y.len() as f64;
        match loss.kind {
            LossKind::Mse => {
                let t = self.regions.target_map(label);
                let mut value = 0.0;
                let g = y
                    .iter()
                    .zip(&t)
                    .map(|(p, t)| {
                        let d = p - t;
                        value += d * d;
                        2.0 * d / n
                    })
                    .collect();
                Ok((value / n, g))
            }
            LossKind::CrossEntropy => {
                let gains = profile.map_or([1.0, 1.0], |p| p.detector_gain);
                let (i1, i2) = self.regions.means(y)?;
                let w = [
                    loss.score_scale * gains[0] * self.region_scale,
                    loss.score_scale * gains[1],
                ];
                let scores = [w[0] * i1, w[1] * i2];
                let target = if label.is_seizure() { 0 } else { 1 };
                let (value, gs) = cross_entropy(&scores, target)?;
                let per = [
                    gs[0] * w[0] / self.regions.count(0) as f64,
                    gs[1] * w[1] / self.regions.count(1) as f64,
                ];
                let g = self
                    .regions
                    .mask(0)
                    .iter()
                    .zip(self.regions.mask(1))
                    .map(|(&m0, &m1)| {
                        if m0 {
                            per[0]
                        } else if m1 {
                            per[1]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Ok((value, g))
            }
        }
    }

    /// Reverse pass. Returns the full flat gradient; entries for layers
    /// before the trace start stay zero.
    pub(crate) fn backward(
        &self,
        trace: &Trace,
        g_out: Vec<f64>,
        profile: Option<&AberrationProfile>,
    ) -> Gradient {
        let n = self.geometry.n_pixels();
        let n_layers = self.layers.len();
        let mut grad = vec![0.0; self.n_params()];
        let act_off = n_layers * n;
        let mut g_y = g_out;
        for layer in (trace.first..n_layers).rev() {
            let t = layer - trace.first;
            let v = &trace.v[t];
            let u = &trace.u[t];
            let g_v: Vec<Complex64> = g_y.iter().zip(v).map(|(g, v)| v * (2.0 * g)).collect();
            let g_u = self.prop.adjoint(&g_v);
            let g_theta: Vec<f64> = g_u.iter().zip(u).map(|(g, u)| (g * u.conj()).im).collect();
            grad[layer * n..(layer + 1) * n].copy_from_slice(&g_theta);
            if layer == 0 {
                break;
            }
            let Some(s) = &trace.s[t] else { break };
            let (a, _) = self.activations[layer - 1];
            let seen: &[f64] = if t == 0 {
                trace.captured.as_deref().expect("captured start")
            } else {
                &trace.seen[t - 1]
            };
            let mut da = 0.0;
            let mut db = 0.0;
            let mut g_seen = Vec::with_capacity(n);
            for ((g, s), y) in g_theta.iter().zip(s).zip(seen) {
                let gz = g * TAU * s * (1.0 - s);
                da += gz * y;
                db += gz;
                g_seen.push(gz * a);
            }
            grad[act_off + 2 * (layer - 1)] = da;
            grad[act_off + 2 * (layer - 1) + 1] = db;
            if t == 0 {
                break;
            }
            g_y = match profile.filter(|p| p.shift != (0, 0)) {
                Some(p) => p.apply_shift_adjoint(&g_seen, self.dim()),
                None => g_seen,
            };
        }
        grad
    }

    /// Loss, flat gradient and readout for one labelled image.
    pub fn loss_grad(
        &self,
        image: &Array2<f64>,
        label: Label,
        loss: &LossConfig,
    ) -> Result<(f64, Gradient, Readout)> {
        self.loss_grad_from(Start::Image(image), label, loss, None)
    }

    pub(crate) fn loss_grad_from(
        &self,
        start: Start<'_>,
        label: Label,
        loss: &LossConfig,
        profile: Option<&AberrationProfile>,
    ) -> Result<(f64, Gradient, Readout)> {
        let trace = self.run(start, profile)?;
        let y = trace.output(self.dim());
        let r = self.readout_with(&y, profile)?;
        let (value, g) = self.output_gradient(&y, label, loss, profile)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let grad = self.backward(&trace, g, profile);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok((value, grad, r))
    }

    /// Loss and readout without the backward pass.
    pub fn evaluate(&self, image: &Array2<f64>, label: Label, loss: &LossConfig) -> Result<(f64, Readout)> {
        let trace = self.run(Start::Image(image), None)?;
        let y = trace.output(self.dim());
        let r = self.readout_with(&y, None)?;
        Ok((self.output_gradient(&y, label, loss, None)?.0, r))
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.geometry;
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [g.rows, g.cols, self.layers.len(), g.pad_factor] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in [g.pitch, g.wavelength, g.distance] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for h in &self.layers {
            for v in h {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        for &(a, b) in &self.activations {
            buf.extend_from_slice(&(a as f32).to_le_bytes());
            buf.extend_from_slice(&(b as f32).to_le_bytes());
        }
        buf.extend_from_slice(&(self.region_scale as f32).to_le_bytes());
        for k in 0..2 {
            buf.extend(self.regions.mask(k).iter().map(|&m| m as u8));
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_checkpoint(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        if cur.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("missing DPUM magic".into()));
        }
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported DPUM version {version}")));
        }
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let n_layers = cur.u32()? as usize;
        let pad_factor = cur.u32()? as usize;
        let geometry = FreespaceGeometry {
            rows,
            cols,
            pitch: cur.f64()?,
            wavelength: cur.f64()?,
            distance: cur.f64()?,
            pad_factor,
        };
        geometry.validate()?;
        if n_layers == 0 {
            return Err(Error::Format("checkpoint has no layers".into()));
        }
        let n = rows * cols;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let data = (0..n)
                .map(|_| cur.f32().map(f64::from))
                .collect::<Result<Vec<_>>>()?;
            layers.push(Array2::from_shape_vec((rows, cols), data).expect("sized"));
        }
        let activations = (1..n_layers)
            .map(|_| Ok((f64::from(cur.f32()?), f64::from(cur.f32()?))))
            .collect::<Result<Vec<_>>>()?;
        let region_scale = f64::from(cur.f32()?);
        let mut mask = || -> Result<Array2<bool>> {
            let raw = cur.take(n)?;
            if raw.iter().any(|&b| b > 1) {
                return Err(Error::Format("region mask bytes must be 0 or 1".into()));
            }
            Ok(Array2::from_shape_vec((rows, cols), raw.iter().map(|&b| b == 1).collect())
                .expect("sized"))
        };
        let m0 = mask()?;
        let m1 = mask()?;
        cur.finish()?;
        let regions = DetectorRegions::new(m0, m1)?;
        let mut model = Self::with_regions(geometry, n_layers, regions)?;
        model.layers = layers;
        model.activations = activations;
        model.region_scale = region_scale;
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freespace::emulator::AberrationProfile;
    use proptest::prelude::{prop_assert_eq, proptest};

    fn toy(n: usize, layers: usize, pad: usize, distance: f64) -> FreespaceModel {
        let geometry = FreespaceGeometry {
            rows: n,
            cols: n,
            distance,
            pad_factor: pad,
            ..FreespaceGeometry::default()
        };
        FreespaceModel::new(geometry, layers).unwrap()
    }

    fn pattern(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = seed::rng(seed);
        Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn layer_forward_examples() {
        let m = toy(16, 1, 1, 0.0);
        let zero = Array2::zeros((16, 16));
        assert!(layer_forward(&zero, &zero, m.propagator()).unwrap().iter().all(|&v| v == 1.0));
        let m = toy(16, 1, 1, 0.1);
        for v in layer_forward(&zero, &zero, m.propagator()).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(layer_forward(&zero, &Array2::zeros((16, 15)), m.propagator()).is_err());
    }

    #[test]
    fn random_phases_conserve_power_without_band_cut() {
        // At 5 mm the band limit exceeds the Nyquist frequency of a 64-pixel window.
        let m = toy(64, 1, 1, 5e-3);
        let x = pattern(64, 1).mapv(|v| v * TAU);
        let h = pattern(64, 2).mapv(|v| v * TAU);
        let total: f64 = layer_forward(&x, &h, m.propagator()).unwrap().sum();
        assert!((total - 4096.0).abs() / 4096.0 < 1e-6);
    }

    #[test]
    fn activation_examples() {
        let y = Array2::from_elem((1, 1), 0.0);
        assert!((activation(&y, 1.0, 0.0)[[0, 0]] - std::f64::consts::PI).abs() < 1e-15);
        assert!(activation(&y, 0.0, 40.0)[[0, 0]] >= TAU * (1.0 - 1e-17));
        let y = Array2::from_elem((1, 1), 0.5);
        assert!((activation(&y, 2.0, -1.0)[[0, 0]] - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn readout_examples() {
        let regions = DetectorRegions::default_for(16, 16).unwrap();
        let mut y = Array2::zeros((16, 16));
        for (v, &m) in y.iter_mut().zip(regions.mask(0)) {
            if m {
                *v = 1.0;
            }
        }
        assert_eq!(readout(&y, &regions, 1.0).unwrap().label, Label::Seizure);
        assert_eq!(readout(&Array2::ones((16, 16)), &regions, 1.0).unwrap().label, Label::NonSeizure);
        let mut y = Array2::zeros((16, 16));
        for ((v, &m0), &m1) in y.iter_mut().zip(regions.mask(0)).zip(regions.mask(1)) {
            *v = if m0 { 0.95 } else if m1 { 1.0 } else { 0.0 };
        }
        assert_eq!(readout(&y, &regions, 1.0).unwrap().label, Label::NonSeizure);
        let r = readout(&y, &regions, 1.1).unwrap();
        assert!((r.i1 - 1.045).abs() < 1e-12);
        assert_eq!(r.label, Label::Seizure);
    }

    #[test]
    fn region_validation() {
        let a = Array2::from_elem((4, 4), false);
        let mut b = a.clone();
        b[[0, 0]] = true;
        assert!(DetectorRegions::new(a.clone(), b.clone()).is_err());
        assert!(DetectorRegions::new(b.clone(), b.clone()).is_err());
        let mut c = a.clone();
        c[[3, 3]] = true;
        assert!(DetectorRegions::new(b, c).is_ok());
        let r = DetectorRegions::default_for(400, 400).unwrap();
        assert_eq!((r.count(0), r.count(1)), (2500, 2500));
        assert!(r.mask(0)[[200, 100]] && r.mask(1)[[200, 300]]);
    }

    #[test]
    fn uniform_model_ties_to_non_seizure() {
        let m = toy(16, 2, 1, 0.01);
        let (y, r) = m.forward(&Array2::zeros((16, 16))).unwrap();
        let first = y[[0, 0]];
        assert!(y.iter().all(|v| (v - first).abs() < 1e-12));
        assert!((r.i1 - r.i2).abs() < 1e-12);
        let exact = FreespaceModel::new(
            FreespaceGeometry {
                rows: 16,
                cols: 16,
                distance: 0.0,
                ..FreespaceGeometry::default()
            },
            2,
        )
        .unwrap();
        let (_, r) = exact.forward(&Array2::zeros((16, 16))).unwrap();
        assert_eq!(r.i1, r.i2);
        assert_eq!(r.label, Label::NonSeizure);
    }

    #[test]
    fn single_layer_is_layer_forward_then_readout() {
        let mut m = toy(16, 1, 2, 0.02);
        m.randomize(4);
        let img = pattern(16, 5);
        let (y, r) = m.forward(&img).unwrap();
        let direct = layer_forward(&img.mapv(|v| v * TAU), &m.layers[0], m.propagator()).unwrap();
        assert_eq!(y, direct);
        assert_eq!(r, readout(&direct, &m.regions, 1.0).unwrap());
    }

    #[test]
    fn identity_emulator_is_bitwise_forward() {
        let mut m = toy(16, 2, 2, 0.02);
        m.randomize(7);
        m.activations[0] = (1.7, -0.4);
        let img = pattern(16, 8);
        let id = AberrationProfile::identity((16, 16));
        assert_eq!(m.emulate_hardware(&id, &img).unwrap(), m.forward(&img).unwrap());
        let gain = AberrationProfile {
            detector_gain: [2.0, 1.0],
            ..id
        };
        let (_, a) = m.forward(&img).unwrap();
        let (_, b) = m.emulate_hardware(&gain, &img).unwrap();
        assert!((b.i1 - 2.0 * a.i1).abs() <= 1e-15 * a.i1.abs());
        assert_eq!(b.i2, a.i2);
    }

    #[test]
    fn capture_then_continue_matches_forward() {
        let mut m = toy(16, 2, 2, 0.02);
        m.randomize(9);
        let img = pattern(16, 10);
        let stress = AberrationProfile::stress((16, 16), 3).unwrap();
        for p in [None, Some(&stress)] {
            let y1 = m.capture_first_layer(p, &img).unwrap();
            let via = m.forward_from_capture(&y1, p).unwrap();
            let direct = match p {
                Some(p) => m.emulate_hardware(p, &img).unwrap(),
                None => m.forward(&img).unwrap(),
            };
            assert_eq!(via, direct);
        }
    }

    #[test]
    fn stress_changes_outputs() {
        let mut m = toy(16, 2, 2, 0.02);
        m.randomize(1);
        let img = pattern(16, 2);
        let stress = AberrationProfile::stress((16, 16), 3).unwrap();
        assert!(!stress.is_identity());
        assert_ne!(m.emulate_hardware(&stress, &img).unwrap().0, m.forward(&img).unwrap().0);
        let mut big = AberrationProfile::identity((16, 16));
        big.shift = (0, 16);
        assert!(m.emulate_hardware(&big, &img).is_err());
    }

    #[test]
    fn symmetric_pair_has_zero_activation_gradient() {
        let m = toy(16, 2, 2, 0.02);
        let img = Array2::zeros((16, 16));
        let loss = LossConfig {
            kind: LossKind::CrossEntropy,
            score_scale: 1.0,
        };
        let (_, g1, _) = m.loss_grad(&img, Label::Seizure, &loss).unwrap();
        let (_, g2, _) = m.loss_grad(&img, Label::NonSeizure, &loss).unwrap();
        let a1 = 2 * 256;
        assert!((g1[a1] + g2[a1]).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = toy(8, 2, 2, 0.01);
        m.randomize(3);
        m.activations[0] = (0.3, -1.25);
        m.region_scale = 1.05;
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"DPUM");
        let back = FreespaceModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.geometry, m.geometry);
        assert_eq!(back.regions, m.regions);
        for (a, b) in back.layers.iter().zip(&m.layers) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        assert_eq!(back.activations, vec![(0.3f32 as f64, -1.25)]);
        assert!(FreespaceModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(FreespaceModel::from_bytes(&extra).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(FreespaceModel::from_bytes(&bad).is_err());
    }

    #[test]
    fn invariants_enforced() {
        assert!(FreespaceModel::new(FreespaceGeometry::scaled(8), 0).is_err());
        let mut m = toy(8, 2, 1, 0.01);
        m.region_scale = 1.2;
        assert!(m.forward(&Array2::zeros((8, 8))).is_err());
        let m = toy(8, 2, 1, 0.01);
        assert!(m.forward(&Array2::zeros((8, 9))).is_err());
    }

    proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn readout_ignores_positive_scale(k in 1e-3f64..1e3, seed in 0u64..1000) {
            let regions = DetectorRegions::default_for(16, 16).unwrap();
            let y = pattern(16, seed);
            let a = readout(&y, &regions, 1.03).unwrap().label;
            let b = readout(&y.mapv(|v| v * k), &regions, 1.03).unwrap().label;
            prop_assert_eq!(a, b);
        }
    }
}
