//! Neural field encoders: tanh MLPs and Chebyshev Kolmogorov–Arnold networks,
//! plus the input scaler and hard-constraint wrappers shared by every solver.
//!
//! A Chebyshev-KAN layer maps inputs through learned univariate functions
//! expanded in Chebyshev polynomials of the first kind,
//! `phi(x) = Σ_n c_n T_n(x)`, with a `tanh` squash applied to the network
//! input and between layers so basis arguments stay inside [-1, 1]. The final
//! layer is not followed by `tanh`. MLP layers are affine maps with `tanh`
//! activations and an affine output layer.
//!
//! Forward passes are generic over the jet type, so the same code produces
//! values, input derivatives (Taylor jets) and recorded training programs.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::diffkit::JetOf;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("MLP needs at least one hidden layer (got widths {0:?})")]
    NoHiddenLayer(Vec<usize>),
    #[error("layer widths must be positive (got {0:?})")]
    ZeroWidth(Vec<usize>),
    #[error("Chebyshev degree must be at least 1 (got {0})")]
    DegreeTooSmall(usize),
    #[error("scaler needs lo < hi in every dimension")]
    BadScaler,
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("checkpoint parse error: {0}")]
    Checkpoint(String),
}

/// Tanh MLP: `widths[0]` inputs, `widths.last()` outputs, affine final layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub widths: Vec<usize>,
}

impl MlpConfig {
    pub fn new(widths: Vec<usize>) -> Result<Self, EncoderError> {
        if widths.iter().any(|&w| w == 0) {
            return Err(EncoderError::ZeroWidth(widths));
        }
        if widths.len() < 3 {
            return Err(EncoderError::NoHiddenLayer(widths));
        }
        Ok(MlpConfig { widths })
    }

    /// `Σ_l (w_l w_{l+1} + w_{l+1})`.
    pub fn param_count(&self) -> usize {
        self.widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Chebyshev-KAN: per-edge univariate functions of degree `degree`, so each
/// edge carries `degree + 1` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CkanConfig {
    pub widths: Vec<usize>,
    pub degree: usize,
}

impl CkanConfig {
    pub fn new(widths: Vec<usize>, degree: usize) -> Result<Self, EncoderError> {
        if widths.iter().any(|&w| w == 0) {
            return Err(EncoderError::ZeroWidth(widths));
        }
        if widths.len() < 2 {
            return Err(EncoderError::NoHiddenLayer(widths));
        }
        if degree < 1 {
            return Err(EncoderError::DegreeTooSmall(degree));
        }
        Ok(CkanConfig { widths, degree })
    }

    /// `Σ_l w_l w_{l+1} (k + 1)`.
    pub fn param_count(&self) -> usize {
        self.widths
            .windows(2)
            .map(|w| w[0] * w[1] * (self.degree + 1))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderConfig {
    Mlp(MlpConfig),
    Ckan(CkanConfig),
}

impl EncoderConfig {
    pub fn widths(&self) -> &[usize] {
        match self {
            EncoderConfig::Mlp(c) => &c.widths,
            EncoderConfig::Ckan(c) => &c.widths,
        }
    }
    pub fn input_dim(&self) -> usize {
        self.widths()[0]
    }
    pub fn output_dim(&self) -> usize {
        *self.widths().last().unwrap()
    }
    pub fn param_count(&self) -> usize {
        match self {
            EncoderConfig::Mlp(c) => c.param_count(),
            EncoderConfig::Ckan(c) => c.param_count(),
        }
    }
}

/// Per-dimension affine map from the problem domain onto [-1, 1]^d.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaler {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputScaler {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, EncoderError> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(EncoderError::BadScaler);
        }
        Ok(InputScaler { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn scale_coord<S: Scalar>(&self, i: usize, x: S) -> S {
        let s = 2.0 / (self.hi[i] - self.lo[i]);
        (x - S::from_f64(self.lo[i])) * S::from_f64(s) - S::one()
    }

    pub fn unscale_coord(&self, i: usize, z: f64) -> f64 {
        self.lo[i] + (z + 1.0) * 0.5 * (self.hi[i] - self.lo[i])
    }
}

/// Multiplicative prefactor forcing the wrapped field to vanish wherever any
/// listed coordinate is zero (e.g. `x1 x2 t` for indices `[0, 1, 2]`). An
/// empty list is the identity wrapper.
#[derive(Debug, Clone, PartialEq)]
pub struct HardConstraint {
    pub coord_product: Vec<usize>,
}

impl HardConstraint {
    pub fn multiplier<S: Scalar>(&self, xi: &[S]) -> S {
        let mut m = S::one();
        for &i in &self.coord_product {
            m = m * xi[i];
        }
        m
    }
}

/// Wrap a raw field value with a hard-constraint multiplier evaluated at the
/// original (unscaled) coordinates. Derivatives flow through both factors.
pub fn apply_hard_constraint<S: Scalar>(hc: &HardConstraint, xi: &[S], raw: S) -> S {
    hc.multiplier(xi) * raw
}

/// Chebyshev polynomials `T_0..T_k` by the recurrence
/// `T_n = 2 x T_{n-1} - T_{n-2}`. The argument is clamped to [-1, 1]; inputs
/// may exceed the interval by rounding only (tolerance 1e-12 by contract).
pub fn chebyshev_basis(x: f64, k: usize) -> Vec<f64> {
    let x = x.clamp(-1.0, 1.0);
    let mut t = Vec::with_capacity(k + 1);
    t.push(1.0);
    if k >= 1 {
        t.push(x);
    }
    for n in 2..=k {
        t.push(2.0 * x * t[n - 1] - t[n - 2]);
    }
    t
}

/// In-network basis on jets; no clamp, arguments come out of `tanh`.
fn chebyshev_basis_jet<J: Scalar>(x: J, k: usize, out: &mut Vec<J>) {
    out.clear();
    out.push(J::one());
    if k >= 1 {
        out.push(x);
    }
    let two_x = x * J::from_f64(2.0);
    for n in 2..=k {
        let t = two_x * out[n - 1] - out[n - 2];
        out.push(t);
    }
}

/// Forward pass of the Chebyshev-KAN. `input` must already be scaled into
/// [-1, 1]^d; the network applies `tanh` to it and between layers.
pub fn ckan_forward<B: Scalar, J: JetOf<B>>(
    cfg: &CkanConfig,
    params: &[B],
    input: &[J],
) -> Vec<J> {
    debug_assert_eq!(params.len(), cfg.param_count());
    debug_assert_eq!(input.len(), cfg.widths[0]);
    let k = cfg.degree;
    let mut h: Vec<J> = input.to_vec();
    let mut basis: Vec<Vec<J>> = Vec::new();
    let mut offset = 0usize;
    let n_layers = cfg.widths.len() - 1;
    let mut scratch = Vec::new();
    for l in 0..n_layers {
        let (w_in, w_out) = (cfg.widths[l], cfg.widths[l + 1]);
        basis.clear();
        for j in 0..w_in {
            let a = h[j].tanh();
            chebyshev_basis_jet(a, k, &mut scratch);
            basis.push(scratch.clone());
        }
        let mut next = vec![J::zero(); w_out];
        for (i, out) in next.iter_mut().enumerate() {
            let mut acc = J::zero();
            for (j, tj) in basis.iter().enumerate() {
                let base = offset + (i * w_in + j) * (k + 1);
                for (n, t) in tj.iter().enumerate() {
                    acc = J::from_base(params[base + n]).mul_add(*t, acc);
                }
            }
            *out = acc;
        }
        offset += w_in * w_out * (k + 1);
        h = next;
    }
    h
}

/// Forward pass of the tanh MLP; the final layer is affine.
pub fn mlp_forward<B: Scalar, J: JetOf<B>>(cfg: &MlpConfig, params: &[B], input: &[J]) -> Vec<J> {
    debug_assert_eq!(params.len(), cfg.param_count());
    debug_assert_eq!(input.len(), cfg.widths[0]);
    let mut h: Vec<J> = input.to_vec();
    let mut offset = 0usize;
    let n_layers = cfg.widths.len() - 1;
    for l in 0..n_layers {
        let (w_in, w_out) = (cfg.widths[l], cfg.widths[l + 1]);
        let bias_base = offset + w_in * w_out;
        let mut next = vec![J::zero(); w_out];
        for (i, out) in next.iter_mut().enumerate() {
            let mut acc = J::from_base(params[bias_base + i]);
            for (j, hj) in h.iter().enumerate() {
                acc = J::from_base(params[offset + i * w_in + j]).mul_add(*hj, acc);
            }
            *out = if l + 1 == n_layers { acc } else { acc.tanh() };
        }
        offset += w_in * w_out + w_out;
        h = next;
    }
    h
}

/// A parameterized field: encoder plus input scaling and an optional
/// hard-constraint multiplier applied in original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDef {
    pub encoder: EncoderConfig,
    pub scaler: InputScaler,
    pub constraint: Option<HardConstraint>,
}

impl FieldDef {
    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
    }

    pub fn eval_multi<B: Scalar, J: JetOf<B>>(&self, params: &[B], xi: &[J]) -> Vec<J> {
        let scaled: Vec<J> = xi
            .iter()
            .enumerate()
            .map(|(i, &x)| self.scaler.scale_coord(i, x))
            .collect();
        let mut out = match &self.encoder {
            EncoderConfig::Mlp(c) => mlp_forward(c, params, &scaled),
            EncoderConfig::Ckan(c) => ckan_forward(c, params, &scaled),
        };
        if let Some(hc) = &self.constraint {
            let m = hc.multiplier(xi);
            for o in &mut out {
                *o = *o * m;
            }
        }
        out
    }

    /// Single-output convenience.
    pub fn eval<B: Scalar, J: JetOf<B>>(&self, params: &[B], xi: &[J]) -> J {
        debug_assert_eq!(self.encoder.output_dim(), 1);
        self.eval_multi(params, xi)[0]
    }

    /// Draw initial parameters: Xavier-uniform weights with zero biases for
    /// the MLP, uniform `±1/(w_in (k+1))` coefficients for the Chebyshev-KAN.
    /// Both keep initial layer outputs O(1) after the tanh squash.
    pub fn init_params(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        match &self.encoder {
            EncoderConfig::Mlp(c) => {
                for w in c.widths.windows(2) {
                    let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                    for _ in 0..w[0] * w[1] {
                        p.push(rng.gen_range(-limit..limit));
                    }
                    for _ in 0..w[1] {
                        p.push(0.0);
                    }
                }
            }
            EncoderConfig::Ckan(c) => {
                for w in c.widths.windows(2) {
                    let limit = 1.0 / (w[0] * (c.degree + 1)) as f64;
                    for _ in 0..w[0] * w[1] * (c.degree + 1) {
                        p.push(rng.gen_range(-limit..limit));
                    }
                }
            }
        }
        p
    }
}

/// Serialize one named field record: configuration plus the flat parameter
/// list at 17 significant digits.
pub fn write_checkpoint(name: &str, def: &FieldDef, params: &[f64]) -> String {
    let mut s = String::new();
    writeln!(s, "minpo-field-v1 {name}").unwrap();
    match &def.encoder {
        EncoderConfig::Mlp(_) => writeln!(s, "encoder mlp").unwrap(),
        EncoderConfig::Ckan(c) => {
            writeln!(s, "encoder ckan").unwrap();
            writeln!(s, "degree {}", c.degree).unwrap();
        }
    }
    let widths: Vec<String> = def.encoder.widths().iter().map(|w| w.to_string()).collect();
    writeln!(s, "widths {}", widths.join(" ")).unwrap();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
    writeln!(s, "scaler_lo {}", fmt(&def.scaler.lo)).unwrap();
    writeln!(s, "scaler_hi {}", fmt(&def.scaler.hi)).unwrap();
    match &def.constraint {
        None => writeln!(s, "constraint none").unwrap(),
        Some(hc) => {
            let dims: Vec<String> = hc.coord_product.iter().map(|d| d.to_string()).collect();
            writeln!(s, "constraint {}", dims.join(" ")).unwrap();
        }
    }
    writeln!(s, "params {}", params.len()).unwrap();
    for v in params {
        writeln!(s, "{v:.16e}").unwrap();
    }
    s
}

/// Parse every field record in `text`; inverse of [`write_checkpoint`].
pub fn read_checkpoints(text: &str) -> Result<Vec<(String, FieldDef, Vec<f64>)>, EncoderError> {
    let bad = |m: &str| EncoderError::Checkpoint(m.to_string());
    let mut lines = text.lines().peekable();
    let mut records = Vec::new();
    while let Some(&line) = lines.peek() {
        if line.trim().is_empty() {
            lines.next();
            continue;
        }
        let header = lines.next().unwrap();
        let name = header
            .strip_prefix("minpo-field-v1 ")
            .ok_or_else(|| bad(&format!("bad record header: {header}")))?
            .to_string();
        let mut encoder_kind = None;
        let mut degree = None;
        let mut widths: Vec<usize> = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut constraint = None;
        let n_params;
        loop {
            let line = lines.next().ok_or_else(|| bad("truncated record"))?;
            let mut it = line.split_whitespace();
            let key = it.next().ok_or_else(|| bad("empty line in record"))?;
            match key {
                "encoder" => encoder_kind = Some(it.next().unwrap_or("").to_string()),
                "degree" => {
                    degree = Some(
                        it.next()
                            .and_then(|v| v.parse().ok())
                            .ok_or_else(|| bad("bad degree"))?,
                    )
                }
                "widths" => {
                    widths = it
                        .map(|v| v.parse().map_err(|_| bad("bad width")))
                        .collect::<Result<_, _>>()?
                }
                "scaler_lo" => {
                    lo = it
                        .map(|v| v.parse().map_err(|_| bad("bad scaler_lo")))
                        .collect::<Result<_, _>>()?
                }
                "scaler_hi" => {
                    hi = it
                        .map(|v| v.parse().map_err(|_| bad("bad scaler_hi")))
                        .collect::<Result<_, _>>()?
                }
                "constraint" => {
                    let rest: Vec<&str> = it.collect();
                    constraint = if rest == ["none"] {
                        None
                    } else {
                        Some(HardConstraint {
                            coord_product: rest
                                .iter()
                                .map(|v| v.parse().map_err(|_| bad("bad constraint")))
                                .collect::<Result<_, _>>()?,
                        })
                    };
                }
                "params" => {
                    n_params = it
                        .next()
                        .and_then(|v| v.parse::<usize>().ok())
                        .ok_or_else(|| bad("bad params count"))?;
                    break;
                }
                other => return Err(bad(&format!("unknown key {other}"))),
            }
        }
        let n = n_params;
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines.next().ok_or_else(|| bad("truncated parameters"))?;
            params.push(line.trim().parse().map_err(|_| bad("bad parameter value"))?);
        }
        let encoder = match encoder_kind.as_deref() {
            Some("mlp") => EncoderConfig::Mlp(MlpConfig::new(widths).map_err(|e| bad(&e.to_string()))?),
            Some("ckan") => EncoderConfig::Ckan(
                CkanConfig::new(widths, degree.ok_or_else(|| bad("missing degree"))?)
                    .map_err(|e| bad(&e.to_string()))?,
            ),
            _ => return Err(bad("missing encoder kind")),
        };
        if encoder.param_count() != n {
            return Err(EncoderError::ParamCount { expected: encoder.param_count(), got: n });
        }
        let scaler = InputScaler::new(lo, hi).map_err(|e| bad(&e.to_string()))?;
        records.push((name, FieldDef { encoder, scaler, constraint }, params));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffkit::Taylor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_scaler(d: usize) -> InputScaler {
        InputScaler::new(vec![0.0; d], vec![1.0; d]).unwrap()
    }

    #[test]
    fn chebyshev_basis_examples() {
        assert_eq!(chebyshev_basis(1.0, 3), vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(chebyshev_basis(0.0, 4), vec![1.0, 0.0, -1.0, 0.0, 1.0]);
        assert_eq!(chebyshev_basis(0.5, 3), vec![1.0, 0.5, -0.5, -1.0]);
    }

    #[test]
    fn chebyshev_basis_matches_cos_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let t = chebyshev_basis(theta.cos(), 10);
            for (n, tn) in t.iter().enumerate() {
                let want = (n as f64 * theta).cos();
                assert!((tn - want).abs() < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn chebyshev_basis_clamps() {
        assert_eq!(chebyshev_basis(1.0 + 1e-13, 2), vec![1.0, 1.0, 1.0]);
        assert_eq!(chebyshev_basis(-1.0 - 1e-13, 1), vec![1.0, -1.0]);
    }

    #[test]
    fn ckan_zero_coefficients_give_zero() {
        let cfg = CkanConfig::new(vec![2, 4, 1], 3).unwrap();
        let params = vec![0.0; cfg.param_count()];
        let out = ckan_forward::<f64, f64>(&cfg, &params, &[0.3, -0.9]);
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn ckan_single_edge_identity_on_t1() {
        // One edge, coefficients (0, 1, 0, ...): output is T1(tanh x) = tanh x.
        let cfg = CkanConfig::new(vec![1, 1], 4).unwrap();
        let mut params = vec![0.0; cfg.param_count()];
        params[1] = 1.0;
        for x in [-2.0, -0.4, 0.0, 1.3] {
            let out = ckan_forward::<f64, f64>(&cfg, &params, &[x]);
            assert!((out[0] - x.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn experiment_architectures_have_expected_parameter_counts() {
        // KAN with 3 hidden layers of 15 neurons, degree 4, scalar in/out.
        let kan = CkanConfig::new(vec![1, 15, 15, 15, 1], 4).unwrap();
        assert_eq!(kan.param_count(), 2400);
        // MLP with 3 hidden layers of 33 neurons.
        let mlp = MlpConfig::new(vec![1, 33, 33, 33, 1]).unwrap();
        assert_eq!(mlp.param_count(), 2344);
        // 3D problem: 3 hidden layers of 10 neurons, degree 3.
        let kan3 = CkanConfig::new(vec![3, 10, 10, 10, 1], 3).unwrap();
        assert_eq!(kan3.param_count(), 960);
    }

    #[test]
    fn param_count_formulas_match_constructed_nets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = FieldDef {
            encoder: EncoderConfig::Mlp(MlpConfig::new(vec![2, 7, 5, 1]).unwrap()),
            scaler: unit_scaler(2),
            constraint: None,
        };
        assert_eq!(mlp.init_params(&mut rng).len(), 2 * 7 + 7 + 7 * 5 + 5 + 5 + 1);
        let kan = FieldDef {
            encoder: EncoderConfig::Ckan(CkanConfig::new(vec![2, 7, 1], 3).unwrap()),
            scaler: unit_scaler(2),
            constraint: None,
        };
        assert_eq!(kan.init_params(&mut rng).len(), (2 * 7 + 7) * 4);
    }

    #[test]
    fn mlp_zero_weights_give_output_bias() {
        let cfg = MlpConfig::new(vec![1, 3, 1]).unwrap();
        let mut params = vec![0.0; cfg.param_count()];
        let n = params.len();
        params[n - 1] = 0.7; // output bias
        let out = mlp_forward::<f64, f64>(&cfg, &params, &[123.0]);
        assert_eq!(out, vec![0.7]);
    }

    #[test]
    fn mlp_single_neuron_tanh_identity() {
        // W = (1), b = 0 twice: output = tanh(x).
        let cfg = MlpConfig::new(vec![1, 1, 1]).unwrap();
        let params = vec![1.0, 0.0, 1.0, 0.0];
        for x in [-1.2, 0.0, 0.8] {
            let out = mlp_forward::<f64, f64>(&cfg, &params, &[x]);
            assert!((out[0] - x.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn hard_constraint_examples() {
        let hc = HardConstraint { coord_product: vec![0, 1, 2] };
        // Zero on the coordinate planes, bit-exact.
        assert_eq!(apply_hard_constraint(&hc, &[0.0, 0.4, 0.9], 123.456), 0.0);
        assert_eq!(apply_hard_constraint(&hc, &[0.4, 0.0, 0.9], -5.0), 0.0);
        assert_eq!(apply_hard_constraint(&hc, &[0.4, 0.9, 0.0], 17.0), 0.0);
        // Identity wrapper.
        let id = HardConstraint { coord_product: vec![] };
        assert_eq!(apply_hard_constraint(&id, &[0.5, 0.5], 3.25), 3.25);
        // raw = 1 and multiplier x1 x2 t at (0.5, 0.5, 0.5).
        assert_eq!(apply_hard_constraint(&hc, &[0.5, 0.5, 0.5], 1.0), 0.125);
    }

    #[test]
    fn constrained_field_is_exactly_zero_on_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let def = FieldDef {
            encoder: EncoderConfig::Ckan(CkanConfig::new(vec![3, 6, 1], 3).unwrap()),
            scaler: unit_scaler(3),
            constraint: Some(HardConstraint { coord_product: vec![0, 1, 2] }),
        };
        let params = def.init_params(&mut rng);
        for xi in [[0.0, 0.3, 0.8], [0.6, 0.0, 0.2], [0.9, 0.5, 0.0]] {
            assert_eq!(def.eval::<f64, f64>(&params, &xi), 0.0);
        }
    }

    #[test]
    fn scaler_round_trips_and_maps_endpoints() {
        let sc = InputScaler::new(vec![0.0, -2.0], vec![1.0, 5.0]).unwrap();
        assert_eq!(sc.scale_coord(0, 0.0_f64), -1.0);
        assert_eq!(sc.scale_coord(0, 1.0_f64), 1.0);
        assert!((sc.scale_coord(1, 5.0_f64) - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x = rng.gen_range(-2.0..5.0);
            let z: f64 = sc.scale_coord(1, x);
            assert!((sc.unscale_coord(1, z) - x).abs() <= 1e-14);
        }
    }

    #[test]
    fn forward_works_on_taylor_jets() {
        // The derivative of the constrained field at x1 = 0 equals the raw
        // field times the remaining multiplier (product rule through the
        // constraint).
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let def = FieldDef {
            encoder: EncoderConfig::Ckan(CkanConfig::new(vec![3, 5, 1], 2).unwrap()),
            scaler: unit_scaler(3),
            constraint: Some(HardConstraint { coord_product: vec![0, 1, 2] }),
        };
        let params = def.init_params(&mut rng);
        let (x2, t) = (0.7, 0.4);
        let xi = [
            Taylor::<f64, 2>::var(0.0),
            Taylor::constant(x2),
            Taylor::constant(t),
        ];
        let got = def.eval::<f64, Taylor<f64, 2>>(&params, &xi);
        let raw_def = FieldDef { constraint: None, ..def.clone() };
        let raw = raw_def.eval::<f64, f64>(&params, &[0.0, x2, t]);
        assert!((got.coeff(1) - raw * x2 * t).abs() < 1e-13);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let def = FieldDef {
            encoder: EncoderConfig::Ckan(CkanConfig::new(vec![2, 4, 1], 3).unwrap()),
            scaler: InputScaler::new(vec![0.0, 0.0], vec![1.0, 2.5]).unwrap(),
            constraint: Some(HardConstraint { coord_product: vec![1] }),
        };
        let params = def.init_params(&mut rng);
        let mlp = FieldDef {
            encoder: EncoderConfig::Mlp(MlpConfig::new(vec![1, 4, 1]).unwrap()),
            scaler: unit_scaler(1),
            constraint: None,
        };
        let mparams = mlp.init_params(&mut rng);
        let text = format!(
            "{}{}",
            write_checkpoint("memory", &def, &params),
            write_checkpoint("inverse", &mlp, &mparams)
        );
        let records = read_checkpoints(&text).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].0, "memory");
        assert_eq!(records[0].1, def);
        assert_eq!(records[0].2, params);
        assert_eq!(records[1].1, mlp);
        assert_eq!(records[1].2, mparams);
    }
}
