//! Learned response map `x* = net(x, I_K(f, x))` trained on responses
//! imposed by known policies.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{apply_response, ResponseModel};
use crate::data::{Dataset, Normalization};
use crate::error::{check_dim, Error, Result};
use crate::models::mlp::{Activation, Cache, Mlp};
use crate::models::{DomainBox, ModelDocument, Policy, SmoothFunction};
use crate::optim::Adam;

pub const MIN_ROWS: usize = 100;

/// Width of `I_K(f, x)`: value, gradient and, for `K = 2`, the upper
/// triangle of the Hessian.
pub fn info_width(dim: usize, order: usize) -> usize {
    1 + dim + if order >= 2 { dim * (dim + 1) / 2 } else { 0 }
}

/// Encodes `I_K(f, x)` as `[f(x); grad f(x); upper(H)]`.
pub fn encode_info<F: SmoothFunction + ?Sized>(f: &F, x: &[f64], order: usize) -> Result<Vec<f64>> {
    check_dim(f.dim(), x.len())?;
    if order == 0 || order > 2 {
        return Err(Error::UnsupportedOrder {
            order,
            kind: "response information".into(),
        });
    }
    let d = x.len();
    let mut out = Vec::with_capacity(info_width(d, order));
    out.push(f.value(x));
    out.extend(f.gradient(x));
    if order == 2 {
        let h = f.hessian(x).ok_or_else(|| Error::UnsupportedOrder {
            order: 2,
            kind: "function without Hessian".into(),
        })?;
        for i in 0..d {
            for j in i..d {
                out.push(h[(i, j)]);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRow {
    pub x: Vec<f64>,
    pub info: Vec<f64>,
    pub x_star: Vec<f64>,
}

/// Training set for a learned response.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRows {
    pub dim: usize,
    pub order: usize,
    pub rows: Vec<ResponseRow>,
    /// Box used to clamp predictions when scoring; unbounded when read
    /// back from CSV.
    pub bounds: DomainBox,
}

impl ResponseRows {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn info_width(&self) -> usize {
        info_width(self.dim, self.order)
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (1..=self.dim).map(|i| format!("x_{i}")).collect();
        h.extend((1..=self.info_width()).map(|i| format!("info_{i}")));
        h.extend((1..=self.dim).map(|i| format!("xstar_{i}")));
        h
    }

    /// Writes the rows as CSV, optionally preceded by a `# comment` line.
    pub fn write_csv(&self, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        if let Some(c) = comment {
            writeln!(file, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        w.write_record(self.header())?;
        for r in &self.rows {
            let rec: Vec<String> = r
                .x
                .iter()
                .chain(&r.info)
                .chain(&r.x_star)
                .map(|v| v.to_string())
                .collect();
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)?;
        let header = rdr.headers()?.clone();
        let count = |p: &str| header.iter().filter(|h| h.starts_with(p)).count();
        let (d, m) = (count("x_"), count("info_"));
        if d == 0 || count("xstar_") != d || header.len() != 2 * d + m {
            return Err(Error::Format("response table header must be x_*, info_*, xstar_*".into()));
        }
        let order = (1..=2)
            .find(|&k| info_width(d, k) == m)
            .ok_or_else(|| Error::Format(format!("{m} info columns do not match dimension {d}")))?;
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    s.trim().parse::<f64>().map_err(|_| Error::NonNumericCell {
                        row: i + 1,
                        column: header[c].to_string(),
                        value: s.to_string(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(ResponseRow {
                x: vals[..d].to_vec(),
                info: vals[d..d + m].to_vec(),
                x_star: vals[d + m..].to_vec(),
            });
        }
        Ok(Self {
            dim: d,
            order,
            rows,
            bounds: DomainBox::unbounded(d),
        })
    }
}

/// Imposes every policy on every sample and records the oracle response.
/// Rows are ordered policy-major.
pub fn build_response_dataset(
    experiments: &Dataset,
    policies: &[Policy],
    order: usize,
    oracle: &ResponseModel,
) -> Result<ResponseRows> {
    if policies.is_empty() {
        return Err(Error::Empty("policy list"));
    }
    if experiments.is_empty() {
        return Err(Error::Empty("experiment samples"));
    }
    let d = experiments.feature_dim();
    let mut rows = Vec::with_capacity(policies.len() * experiments.len());
    for policy in policies {
        check_dim(d, policy.feature_dim())?;
        for s in experiments.samples() {
            rows.push(ResponseRow {
                info: encode_info(policy, &s.x, order)?,
                x_star: apply_response(oracle, policy, &s.x)?,
                x: s.x.clone(),
            });
        }
    }
    Ok(ResponseRows {
        dim: d,
        order,
        rows,
        bounds: experiments.domain_box().clone(),
    })
}

/// Linear-sigmoid policies with unit-norm Gaussian weights. Each bias puts
/// the decision boundary through a randomly chosen sample.
pub fn random_policies(n: usize, data: &Dataset, seed: u64) -> Result<Vec<Policy>> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let d = data.feature_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        w.iter_mut().for_each(|v| *v /= norm);
        let anchor = &data.samples()[rand::Rng::random_range(&mut rng, 0..data.len())].x;
        let b = -w.iter().zip(anchor).map(|(a, b)| a * b).sum::<f64>();
        out.push(Policy::linear_sigmoid(w, b).with_domain_box(data.domain_box().clone())?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedArch {
    pub hidden: [usize; 2],
    pub activation: Activation,
}

impl Default for LearnedArch {
    fn default() -> Self {
        Self {
            hidden: [32, 32],
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of rows held out for the error report.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for LearnedConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 64,
            learning_rate: 3e-3,
            holdout: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseFitReport {
    pub n_train: usize,
    pub n_holdout: usize,
    pub train_mse: f64,
    /// Median of `|x_hat - x*| / |x*|`.
    pub holdout_median_rel_error: f64,
    /// Median of `|x_hat - x*| / |x* - x|` over rows that move.
    pub holdout_median_displacement_error: f64,
}

/// Error statistics of a learned response on a set of rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseErrors {
    pub median_rel_error: f64,
    pub median_displacement_error: f64,
    pub mse: f64,
}

/// Residual regressor `x* = clamp(x + scale * net(normalize([x; info])))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedResponse {
    net: Mlp,
    order: usize,
    dim: usize,
    input_norm: Normalization,
    output_scale: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LearnedExtra {
    input_mean: Vec<f64>,
    input_std: Vec<f64>,
    output_scale: Vec<f64>,
}

impl LearnedResponse {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn input_width(&self) -> usize {
        self.net.input_dim()
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    fn input(&self, x: &[f64], info: &[f64]) -> Vec<f64> {
        let mut u = Vec::with_capacity(x.len() + info.len());
        u.extend_from_slice(x);
        u.extend_from_slice(info);
        self.input_norm.normalize(&u)
    }

    /// Unclamped prediction from an already encoded `I_K`.
    pub fn predict_raw(&self, x: &[f64], info: &[f64]) -> Vec<f64> {
        let out = self.net.forward(&self.input(x, info));
        (0..self.dim)
            .map(|i| x[i] + self.output_scale[i] * out[i])
            .collect()
    }

    fn finish(&self, x: &[f64], raw: &[f64], mask: &[bool], bounds: &DomainBox) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                if mask[i] {
                    bounds.clamp_coord(i, raw[i]).0
                } else {
                    x[i]
                }
            })
            .collect()
    }

    pub fn predict(&self, policy: &Policy, x: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, mask.len())?;
        let info = encode_info(policy, x, self.order)?;
        let raw = self.predict_raw(x, &info);
        Ok(self.finish(x, &raw, mask, policy.domain_box()))
    }

    /// Response and its `d x P` parameter Jacobian for order-1 models,
    /// chaining the network's input Jacobian through `(f, grad f)`.
    pub(crate) fn respond_with_jacobian(
        &self,
        policy: &Policy,
        x: &[f64],
        mask: &[bool],
        x_star: &mut [f64],
        jac: &mut [f64],
        scratch: &mut Vec<f64>,
    ) -> Result<()> {
        if self.order != 1 {
            return Err(Error::NoParamDerivative("learned response with K=2".into()));
        }
        let d = self.dim;
        let p = policy.param_count();
        scratch.resize(p + d * p + d, 0.0);
        let (vj, rest) = scratch.split_at_mut(p);
        let (gj, grad) = rest.split_at_mut(d * p);
        let value = policy.value_and_gradient(x, grad);
        policy.value_param_grad_into(x, vj);
        policy.gradient_param_jacobian_into(x, gj);

        let mut info = Vec::with_capacity(1 + d);
        info.push(value);
        info.extend_from_slice(grad);
        let mut cache = Cache::default();
        self.net.forward_cached(&self.input(x, &info), &mut cache);
        let net_jac = self.net.input_jacobian_cached(&cache);
        let width = self.net.input_dim();
        let out = cache.output();
        let bounds = policy.domain_box();
        for i in 0..d {
            let row = &mut jac[i * p..(i + 1) * p];
            row.iter_mut().for_each(|v| *v = 0.0);
            if !mask[i] {
                x_star[i] = x[i];
                continue;
            }
            let (v, clamped) = bounds.clamp_coord(i, x[i] + self.output_scale[i] * out[i]);
            x_star[i] = v;
            if clamped {
                continue;
            }
            let scale = self.output_scale[i];
            // info column k of the network input sits at offset d + k
            let c_f = scale * net_jac[i * width + d] / self.input_norm.std[d];
            for (r, g) in row.iter_mut().zip(vj.iter()) {
                *r += c_f * g;
            }
            for k in 0..d {
                let col = d + 1 + k;
                let c = scale * net_jac[i * width + col] / self.input_norm.std[col];
                if c != 0.0 {
                    for (r, g) in row.iter_mut().zip(&gj[k * p..(k + 1) * p]) {
                        *r += c * g;
                    }
                }
            }
        }
        Ok(())
    }

    /// Error statistics on `rows`, clamping predictions to `rows.bounds`.
    pub fn errors(&self, rows: &ResponseRows) -> Result<ResponseErrors> {
        self.errors_on(&rows.rows, &rows.bounds)
    }

    fn errors_on(&self, rows: &[ResponseRow], bounds: &DomainBox) -> Result<ResponseErrors> {
        if rows.is_empty() {
            return Err(Error::Empty("response rows"));
        }
        let mask = vec![true; self.dim];
        let mut rel = Vec::with_capacity(rows.len());
        let mut disp = Vec::new();
        let mut sq = 0.0;
        for r in rows {
            check_dim(self.dim, r.x.len())?;
            let raw = self.predict_raw(&r.x, &r.info);
            let pred = self.finish(&r.x, &raw, &mask, bounds);
            let err = norm_diff(&pred, &r.x_star);
            sq += err * err;
            let size = r.x_star.iter().map(|v| v * v).sum::<f64>().sqrt();
            rel.push(if size > 0.0 { err / size } else { err });
            let moved = norm_diff(&r.x_star, &r.x);
            if moved > 1e-12 {
                disp.push(err / moved);
            }
        }
        Ok(ResponseErrors {
            median_rel_error: median(&mut rel),
            median_displacement_error: if disp.is_empty() { 0.0 } else { median(&mut disp) },
            mse: sq / rows.len() as f64,
        })
    }

    pub fn to_document(&self) -> ModelDocument {
        let mut doc = ModelDocument::new("learned-response", self.dim, self.net.params().to_vec());
        doc.activation = Some(self.net.hidden_activation());
        doc.layers = Some(self.net.sizes().to_vec());
        doc.order = Some(self.order);
        let extra = LearnedExtra {
            input_mean: self.input_norm.mean.clone(),
            input_std: self.input_norm.std.clone(),
            output_scale: self.output_scale.clone(),
        };
        doc.extra = Some(serde_json::to_value(extra).expect("plain numeric struct"));
        doc
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        if doc.kind != "learned-response" {
            return Err(Error::Format(format!("`{}` is not a learned response", doc.kind)));
        }
        let net = doc.mlp()?;
        let order = doc
            .order
            .ok_or_else(|| Error::Format("learned response without order".into()))?;
        let extra: LearnedExtra = serde_json::from_value(
            doc.extra
                .clone()
                .ok_or_else(|| Error::Format("learned response without normalization".into()))?,
        )?;
        let d = doc.feature_dim;
        let width = d + info_width(d, order);
        if net.input_dim() != width
            || net.output_dim() != d
            || extra.input_mean.len() != width
            || extra.input_std.len() != width
            || extra.output_scale.len() != d
        {
            return Err(Error::Format("learned response shapes are inconsistent".into()));
        }
        Ok(Self {
            net,
            order,
            dim: d,
            input_norm: Normalization {
                mean: extra.input_mean,
                std: extra.input_std,
            },
            output_scale: extra.output_scale,
        })
    }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fits the residual regressor by minibatch Adam on mean squared error.
pub fn train_learned_response(
    rows: &ResponseRows,
    arch: &LearnedArch,
    cfg: &LearnedConfig,
) -> Result<(LearnedResponse, ResponseFitReport)> {
    if rows.len() < MIN_ROWS {
        return Err(Error::InvalidArgument(format!(
            "{} response rows; at least {MIN_ROWS} required",
            rows.len()
        )));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("epochs, batch size and learning rate must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.holdout) {
        return Err(Error::InvalidArgument(format!("holdout fraction {} outside [0, 1)", cfg.holdout)));
    }
    let d = rows.dim;
    let m = rows.info_width();
    for r in &rows.rows {
        check_dim(d, r.x.len())?;
        check_dim(m, r.info.len())?;
        check_dim(d, r.x_star.len())?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = ((rows.len() as f64) * cfg.holdout).round() as usize;
    let (train_idx, hold_idx) = order.split_at(rows.len() - n_hold);

    let inputs: Vec<Vec<f64>> = train_idx
        .iter()
        .map(|&i| {
            let r = &rows.rows[i];
            r.x.iter().chain(&r.info).copied().collect()
        })
        .collect();
    let input_norm = Normalization::fit(inputs.iter().map(Vec::as_slice), d + m);
    let displacement: Vec<Vec<f64>> = train_idx
        .iter()
        .map(|&i| {
            let r = &rows.rows[i];
            r.x_star.iter().zip(&r.x).map(|(a, b)| a - b).collect()
        })
        .collect();
    let disp_norm = Normalization::fit(displacement.iter().map(Vec::as_slice), d);
    let output_scale: Vec<f64> = (0..d)
        .map(|i| {
            let rms = (disp_norm.std[i].powi(2) + disp_norm.mean[i].powi(2)).sqrt();
            if rms > 1e-12 {
                rms
            } else {
                1.0
            }
        })
        .collect();

    let sizes = vec![d + m, arch.hidden[0], arch.hidden[1], d];
    let mut net = Mlp::init(sizes, arch.activation, Activation::Identity, &mut rng);
    // start from the identity map x* = x
    let n_last = arch.hidden[1] * d + d;
    let total = net.params().len();
    net.params_mut()[total - n_last..].iter_mut().for_each(|w| *w = 0.0);
    let mut model = LearnedResponse {
        net,
        order: rows.order,
        dim: d,
        input_norm,
        output_scale,
    };
    let z: Vec<Vec<f64>> = inputs.iter().map(|u| model.input_norm.normalize(u)).collect();
    let targets: Vec<Vec<f64>> = displacement
        .iter()
        .map(|t| t.iter().zip(&model.output_scale).map(|(v, s)| v / s).collect())
        .collect();

    let n = z.len();
    let mut adam = Adam::new(model.net.params().len(), cfg.learning_rate);
    let mut grad = vec![0.0; model.net.params().len()];
    let mut cache = Cache::default();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut d_out = vec![0.0; d];
    let mut last_mse = f64::NAN;
    for _ in 0..cfg.epochs {
        perm.shuffle(&mut rng);
        let mut sq = 0.0;
        for batch in perm.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                model.net.forward_cached(&z[i], &mut cache);
                for (o, (p, t)) in cache.output().iter().zip(&targets[i]).enumerate() {
                    let e = p - t;
                    sq += e * e;
                    d_out[o] = 2.0 * e * scale / d as f64;
                }
                model.net.backward_pre(&cache, &d_out, Some(&mut grad));
            }
            adam.step(model.net.params_mut(), &grad);
        }
        last_mse = sq / (n * d) as f64;
        if !last_mse.is_finite() {
            return Err(Error::NonFinite("learned response loss"));
        }
    }

    let eval_rows: Vec<ResponseRow> = if hold_idx.is_empty() {
        train_idx.iter().map(|&i| rows.rows[i].clone()).collect()
    } else {
        hold_idx.iter().map(|&i| rows.rows[i].clone()).collect()
    };
    let errs = model.errors_on(&eval_rows, &rows.bounds)?;
    let report = ResponseFitReport {
        n_train: train_idx.len(),
        n_holdout: hold_idx.len(),
        train_mse: last_mse,
        holdout_median_rel_error: errs.median_rel_error,
        holdout_median_displacement_error: errs.median_displacement_error,
    };
    log::info!(
        "learned response: train mse {:.3e}, holdout median rel error {:.3e}",
        report.train_mse,
        report.holdout_median_rel_error
    );
    Ok((model, report))
}
