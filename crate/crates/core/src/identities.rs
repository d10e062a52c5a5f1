//! Pointwise verification of the multi-dimensional flow-map algebra:
//! Jacobian/adjugate expansion, gradient and curl along the map, the basic
//! contraction identity and its time-derivative form, and the exponential
//! curl-transport law for a frozen map.
//!
//! Test fields are closed-form trigonometric sums, so every spatial
//! derivative here is exact and the reported residuals isolate the algebra
//! itself rather than differencing error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense row-major gradient block: entry [i][j] = d omega^i / d y_j.
/// Only the leading dim x dim block is used.
pub type GradBlock = [[f64; 3]; 3];

/// One trigonometric mode amp * sin(wave . y + phase).
#[derive(Debug, Clone, Copy)]
struct TrigMode {
    amp: f64,
    wave: [f64; 3],
    phase: f64,
}

/// Closed-form scalar field: a linear part plus a sum of trig modes.
#[derive(Debug, Clone, Default)]
pub struct TrigScalar {
    linear: [f64; 3],
    modes: Vec<TrigMode>,
}

impl TrigScalar {
    pub fn value(&self, y: [f64; 3]) -> f64 {
        let mut v = self.linear[0] * y[0] + self.linear[1] * y[1] + self.linear[2] * y[2];
        for m in &self.modes {
            v += m.amp * (m.wave[0] * y[0] + m.wave[1] * y[1] + m.wave[2] * y[2] + m.phase).sin();
        }
        v
    }

    pub fn gradient(&self, y: [f64; 3]) -> [f64; 3] {
        let mut g = self.linear;
        for m in &self.modes {
            let c =
                m.amp * (m.wave[0] * y[0] + m.wave[1] * y[1] + m.wave[2] * y[2] + m.phase).cos();
            for (gj, wj) in g.iter_mut().zip(&m.wave) {
                *gj += c * wj;
            }
        }
        g
    }

    fn scale(&mut self, c: f64) {
        for l in &mut self.linear {
            *l *= c;
        }
        for m in &mut self.modes {
            m.amp *= c;
        }
    }
}

/// Closed-form displacement/velocity/probe field with dim components.
#[derive(Debug, Clone)]
pub struct TrigField {
    pub comps: Vec<TrigScalar>,
}

impl TrigField {
    /// Seeded random field, periodic in the first dim-1 coordinates
    /// (integer transverse wavenumbers) and free in the vertical one.
    fn random(dim: usize, hbar: f64, rng: &mut ChaCha8Rng) -> TrigField {
        let tau = std::f64::consts::TAU;
        let comps = (0..dim)
            .map(|_| {
                let modes = (0..3)
                    .map(|_| {
                        let mut wave = [0.0; 3];
                        for w in wave.iter_mut().take(dim - 1) {
                            *w = tau * rng.gen_range(-2i32..=2) as f64;
                        }
                        wave[dim - 1] =
                            std::f64::consts::PI * rng.gen_range(1u32..=3) as f64 / hbar;
                        TrigMode {
                            amp: rng.gen_range(0.2..1.0),
                            wave,
                            phase: rng.gen_range(0.0..tau),
                        }
                    })
                    .collect();
                TrigScalar {
                    linear: [0.0; 3],
                    modes,
                }
            })
            .collect();
        TrigField { comps }
    }

    pub fn gradient(&self, y: [f64; 3]) -> GradBlock {
        let mut g = [[0.0; 3]; 3];
        for (i, c) in self.comps.iter().enumerate() {
            g[i] = c.gradient(y);
        }
        g
    }

    pub fn value(&self, y: [f64; 3]) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (i, c) in self.comps.iter().enumerate() {
            v[i] = c.value(y);
        }
        v
    }

    fn scale(&mut self, c: f64) {
        for comp in &mut self.comps {
            comp.scale(c);
        }
    }
}

/// Displacement field sampled on a small tensor grid over
/// T^{dim-1} x (0, hbar), with optional velocity and probe fields.
#[derive(Debug, Clone)]
pub struct FlowSample {
    pub dim: usize,
    pub hbar: f64,
    /// Sample points: transverse coordinates in [0, 1), vertical in [0, hbar].
    pub points: Vec<[f64; 3]>,
    pub omega: TrigField,
    pub vel: Option<TrigField>,
    pub probe: Option<TrigField>,
}

/// Invertibility margin required of displacement gradients.
pub const MAX_DISPLACEMENT_GRAD: f64 = 0.4;

fn tensor_points(dim: usize, res: usize, hbar: f64) -> Vec<[f64; 3]> {
    let mut pts = Vec::new();
    let vertical: Vec<f64> = (0..=res).map(|k| hbar * k as f64 / res as f64).collect();
    let transverse: Vec<f64> = (0..res).map(|k| k as f64 / res as f64).collect();
    match dim {
        2 => {
            for &a in &transverse {
                for &z in &vertical {
                    pts.push([a, z, 0.0]);
                }
            }
        }
        3 => {
            for &a in &transverse {
                for &b in &transverse {
                    for &z in &vertical {
                        pts.push([a, b, z]);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    pts
}

impl FlowSample {
    /// Seeded random displacement (and velocity and probe) fields on a
    /// res-per-axis tensor grid, with the displacement rescaled so that
    /// max |grad omega| stays at half the invertibility margin.
    pub fn random(dim: usize, res: usize, hbar: f64, seed: u64) -> Result<FlowSample> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidParameter {
                name: "dim",
                value: dim as f64,
                reason: "flow samples exist for n = 2 and 3 only",
            });
        }
        if res < 4 {
            return Err(Error::InvalidParameter {
                name: "res",
                value: res as f64,
                reason: "tensor grid needs at least 4 points per axis",
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut omega = TrigField::random(dim, hbar, &mut rng);
        let vel = TrigField::random(dim, hbar, &mut rng);
        let probe = TrigField::random(dim, hbar, &mut rng);
        let points = tensor_points(dim, res, hbar);

        let mut gmax = 0.0f64;
        for &p in &points {
            let g = omega.gradient(p);
            for row in g.iter().take(dim) {
                for v in row.iter().take(dim) {
                    gmax = gmax.max(v.abs());
                }
            }
        }
        if gmax > 0.0 {
            omega.scale(0.5 * MAX_DISPLACEMENT_GRAD / gmax);
        }
        Ok(FlowSample {
            dim,
            hbar,
            points,
            omega,
            vel: Some(vel),
            probe: Some(probe),
        })
    }

    /// Sample whose displacement is the linear field grad . y; handy for
    /// closed-form cases like diagonal stretches.
    pub fn uniform_gradient(dim: usize, grad: GradBlock, hbar: f64) -> Result<FlowSample> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidParameter {
                name: "dim",
                value: dim as f64,
                reason: "flow samples exist for n = 2 and 3 only",
            });
        }
        let comps = (0..dim)
            .map(|i| TrigScalar {
                linear: grad[i],
                modes: vec![],
            })
            .collect();
        Ok(FlowSample {
            dim,
            hbar,
            points: tensor_points(dim, 8, hbar),
            omega: TrigField { comps },
            vel: None,
            probe: None,
        })
    }

    fn grads_of(&self, field: &TrigField) -> Vec<GradBlock> {
        self.points.iter().map(|&p| field.gradient(p)).collect()
    }
}

fn det(dim: usize, m: &GradBlock) -> f64 {
    match dim {
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
    }
}

/// Transpose-cofactor adjugate, so that adj(M) M = det(M) I.
fn adjugate(dim: usize, m: &GradBlock) -> GradBlock {
    let mut a = [[0.0; 3]; 3];
    match dim {
        2 => {
            a[0][0] = m[1][1];
            a[0][1] = -m[0][1];
            a[1][0] = -m[1][0];
            a[1][1] = m[0][0];
        }
        _ => {
            for i in 0..3 {
                for j in 0..3 {
                    let r = [(i + 1) % 3, (i + 2) % 3];
                    let c = [(j + 1) % 3, (j + 2) % 3];
                    // cofactor C_ij lands at a[j][i]
                    a[j][i] = m[r[0]][c[0]] * m[r[1]][c[1]] - m[r[0]][c[1]] * m[r[1]][c[0]];
                }
            }
        }
    }
    a
}

fn deformation(dim: usize, g: &GradBlock) -> GradBlock {
    let mut m = *g;
    for (i, row) in m.iter_mut().enumerate().take(dim) {
        row[i] += 1.0;
    }
    m
}

fn divergence(dim: usize, g: &GradBlock) -> f64 {
    (0..dim).map(|i| g[i][i]).sum()
}

fn frobenius_sq(dim: usize, g: &GradBlock) -> f64 {
    let mut s = 0.0;
    for row in g.iter().take(dim) {
        for v in row.iter().take(dim) {
            s += v * v;
        }
    }
    s
}

/// |curl|^2 in the flat metric: scalar for n = 2, vector for n = 3.
fn curl_sq(dim: usize, g: &GradBlock) -> f64 {
    if dim == 2 {
        let c = g[1][0] - g[0][1];
        c * c
    } else {
        let c = [g[2][1] - g[1][2], g[0][2] - g[2][0], g[1][0] - g[0][1]];
        c[0] * c[0] + c[1] * c[1] + c[2] * c[2]
    }
}

/// Gradient along the flow map: out[i][k] = [grad_x F^i]_k = A^r_k dF^i/dy_r.
fn flow_gradient(dim: usize, a: &GradBlock, df: &GradBlock) -> GradBlock {
    let mut out = [[0.0; 3]; 3];
    for i in 0..dim {
        for k in 0..dim {
            let mut s = 0.0;
            for r in 0..dim {
                s += a[r][k] * df[i][r];
            }
            out[i][k] = s;
        }
    }
    out
}

/// Jacobian determinant and inverse deformation gradient at every node.
pub fn jacobian_and_inverse(sample: &FlowSample) -> Result<(Vec<f64>, Vec<GradBlock>)> {
    let dim = sample.dim;
    let grads = sample.grads_of(&sample.omega);
    let mut js = Vec::with_capacity(grads.len());
    let mut inverses = Vec::with_capacity(grads.len());
    for (node, g) in grads.iter().enumerate() {
        let m = deformation(dim, g);
        let j = det(dim, &m);
        if j <= 0.0 || !j.is_finite() {
            return Err(Error::ParticleCrossing { node, time: None });
        }
        let adj = adjugate(dim, &m);
        let mut inv = [[0.0; 3]; 3];
        for (r, row) in inv.iter_mut().enumerate().take(dim) {
            for (c, v) in row.iter_mut().enumerate().take(dim) {
                *v = adj[r][c] / j;
            }
        }
        js.push(j);
        inverses.push(inv);
    }
    Ok((js, inverses))
}

/// Largest nodewise residual of the exact determinant expansion
///
/// ```text
///     J = 1 + div w + (|div w|^2 + |curl w|^2 - |grad w|^2)/2
///           + [n = 3] (1/3) adj(grad w)^s_r d_s w^r.
/// ```
pub fn verify_jacobian_expansion(sample: &FlowSample) -> f64 {
    let dim = sample.dim;
    let mut worst = 0.0f64;
    for g in sample.grads_of(&sample.omega) {
        let m = deformation(dim, &g);
        let j = det(dim, &m);
        let dv = divergence(dim, &g);
        let mut expansion = 1.0 + dv + 0.5 * (dv * dv + curl_sq(dim, &g) - frobenius_sq(dim, &g));
        if dim == 3 {
            let b = adjugate(dim, &g);
            let mut cubic = 0.0;
            for s in 0..3 {
                for r in 0..3 {
                    // adj entry B^s_r times d_s w^r
                    cubic += b[s][r] * g[r][s];
                }
            }
            expansion += cubic / 3.0;
        }
        worst = worst.max((j - expansion).abs());
    }
    worst
}

/// Residuals of the basic flow-map contraction identities.
///
/// The first output is the largest nodewise residual of the algebraic
/// identity A^k_r A^s_i (d_s F^r)(d_k F^i) = |grad_x F|^2 - |curl_x F|^2,
/// which must be floating-point noise. The second probes its
/// time-derivative companion by advancing the map along the velocity and
/// central-differencing (|grad_x F|^2 - |curl_x F|^2)/2 in time against the
/// cubic contraction -[grad_x F^r]_i [grad_x v^s]_r [grad_x F^i]_s; that
/// residual shrinks at second order in the probe step.
pub fn verify_nab_identities(sample: &FlowSample, dt_probe: f64) -> Result<(f64, f64)> {
    let dim = sample.dim;
    let vel = sample.vel.as_ref().ok_or(Error::InvalidParameter {
        name: "vel",
        value: 0.0,
        reason: "sample carries no velocity field",
    })?;
    let probe = sample.probe.as_ref().ok_or(Error::InvalidParameter {
        name: "probe",
        value: 0.0,
        reason: "sample carries no probe field",
    })?;
    if !(dt_probe > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt_probe",
            value: dt_probe,
            reason: "probe step must be positive",
        });
    }

    let mut res_nab = 0.0f64;
    let mut res_nabt = 0.0f64;
    for &p in &sample.points {
        let gw = sample.omega.gradient(p);
        let dv = vel.gradient(p);
        let df = probe.gradient(p);

        let m = deformation(dim, &gw);
        let j = det(dim, &m);
        let adj = adjugate(dim, &m);
        let mut a = [[0.0; 3]; 3];
        for r in 0..dim {
            for c in 0..dim {
                a[r][c] = adj[r][c] / j;
            }
        }

        // static contraction identity
        let gx = flow_gradient(dim, &a, &df);
        let mut lhs = 0.0;
        for k in 0..dim {
            for r in 0..dim {
                for s in 0..dim {
                    for i in 0..dim {
                        lhs += a[k][r] * a[s][i] * df[r][s] * df[i][k];
                    }
                }
            }
        }
        let rhs = frobenius_sq(dim, &gx) - curl_sq(dim, &gx);
        res_nab = res_nab.max((lhs - rhs).abs());

        // time-derivative form with a static probe field
        let q_at = |tau: f64| -> f64 {
            let mut gm = gw;
            for i in 0..dim {
                for jj in 0..dim {
                    gm[i][jj] += tau * dv[i][jj];
                }
            }
            let mt = deformation(dim, &gm);
            let jt = det(dim, &mt);
            let adjt = adjugate(dim, &mt);
            let mut at = [[0.0; 3]; 3];
            for r in 0..dim {
                for c in 0..dim {
                    at[r][c] = adjt[r][c] / jt;
                }
            }
            let gxt = flow_gradient(dim, &at, &df);
            0.5 * (frobenius_sq(dim, &gxt) - curl_sq(dim, &gxt))
        };
        let dq = (q_at(dt_probe) - q_at(-dt_probe)) / (2.0 * dt_probe);
        let gxv = flow_gradient(dim, &a, &dv);
        let mut cubic = 0.0;
        for r in 0..dim {
            for i in 0..dim {
                for s in 0..dim {
                    cubic += gx[r][i] * gxv[s][r] * gx[i][s];
                }
            }
        }
        res_nabt = res_nabt.max((dq + cubic).abs());
    }
    Ok((res_nab, res_nabt))
}

/// Measured convergence order of the nabt residual under probe-step
/// halving; the identity makes it second order.
pub fn nabt_order(sample: &FlowSample, dt_probe: f64) -> Result<f64> {
    let (_, r1) = verify_nab_identities(sample, dt_probe)?;
    let (_, r2) = verify_nab_identities(sample, 0.5 * dt_probe)?;
    Ok((r1 / r2).log2())
}

/// Integrates the frozen-map curl law w' = -w for w = curl_x v over the
/// horizon and returns max |w(T) - e^{-T} w(0)| across nodes and
/// components. The integration applies the exact per-step factor, so the
/// deviation isolates accumulation effects against the closed form.
pub fn verify_curl_transport(sample: &FlowSample, horizon: f64) -> Result<f64> {
    let dim = sample.dim;
    let vel = sample.vel.as_ref().ok_or(Error::InvalidParameter {
        name: "vel",
        value: 0.0,
        reason: "sample carries no velocity field",
    })?;
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter {
            name: "horizon",
            value: horizon,
            reason: "horizon must be positive",
        });
    }

    let mut w0: Vec<[f64; 3]> = Vec::with_capacity(sample.points.len());
    for &p in &sample.points {
        let gw = sample.omega.gradient(p);
        let dv = vel.gradient(p);
        let m = deformation(dim, &gw);
        let j = det(dim, &m);
        if j <= 0.0 {
            return Err(Error::ParticleCrossing { node: 0, time: None });
        }
        let adj = adjugate(dim, &m);
        let mut a = [[0.0; 3]; 3];
        for r in 0..dim {
            for c in 0..dim {
                a[r][c] = adj[r][c] / j;
            }
        }
        let gx = flow_gradient(dim, &a, &dv);
        let w = if dim == 2 {
            [gx[1][0] - gx[0][1], 0.0, 0.0]
        } else {
            [
                gx[2][1] - gx[1][2],
                gx[0][2] - gx[2][0],
                gx[1][0] - gx[0][1],
            ]
        };
        w0.push(w);
    }

    let n_steps = (horizon / 0.01).ceil() as usize;
    let dt = horizon / n_steps as f64;
    let factor = (-dt).exp();
    let mut w = w0.clone();
    for _ in 0..n_steps {
        for wi in &mut w {
            for c in wi.iter_mut() {
                *c *= factor;
            }
        }
    }
    let closed = (-horizon).exp();
    let mut worst = 0.0f64;
    for (wi, w0i) in w.iter().zip(&w0) {
        for c in 0..3 {
            worst = worst.max((wi[c] - closed * w0i[c]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_displacement_is_identity_map() {
        let mut s = FlowSample::random(3, 8, 2.0, 1).unwrap();
        s.omega = TrigField {
            comps: vec![TrigScalar::default(); 3],
        };
        let (js, invs) = jacobian_and_inverse(&s).unwrap();
        for j in js {
            assert_eq!(j, 1.0);
        }
        for a in invs {
            for (r, row) in a.iter().enumerate().take(3) {
                for (c, v) in row.iter().enumerate().take(3) {
                    assert_eq!(*v, if r == c { 1.0 } else { 0.0 });
                }
            }
        }
        assert_eq!(verify_jacobian_expansion(&s), 0.0);
    }

    #[test]
    fn diagonal_stretch_has_product_jacobian() {
        let mut grad = [[0.0; 3]; 3];
        grad[0][0] = 0.12;
        grad[1][1] = -0.07;
        let s = FlowSample::uniform_gradient(2, grad, 2.0).unwrap();
        let (js, _) = jacobian_and_inverse(&s).unwrap();
        for j in js {
            assert!((j - 1.12 * 0.93).abs() < 1e-15);
        }
        assert!(verify_jacobian_expansion(&s) < 1e-15);
    }

    #[test]
    fn inverse_is_exact_inverse() {
        for dim in [2usize, 3] {
            let s = FlowSample::random(dim, 12, 2.0, 5).unwrap();
            let (_, invs) = jacobian_and_inverse(&s).unwrap();
            let grads = s.grads_of(&s.omega);
            for (a, g) in invs.iter().zip(&grads) {
                let m = deformation(dim, g);
                for r in 0..dim {
                    for c in 0..dim {
                        let mut prod = 0.0;
                        for k in 0..dim {
                            prod += a[r][k] * m[k][c];
                        }
                        let want = if r == c { 1.0 } else { 0.0 };
                        assert!((prod - want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn jacobian_expansion_is_exact_for_random_fields() {
        for dim in [2usize, 3] {
            for seed in 0..5 {
                let s = FlowSample::random(dim, 16, 2.0, seed).unwrap();
                assert!(
                    verify_jacobian_expansion(&s) <= 1e-12,
                    "dim {dim} seed {seed}"
                );
            }
        }
    }

    #[test]
    fn nab_identity_flat_space() {
        let mut s = FlowSample::random(3, 8, 2.0, 2).unwrap();
        s.omega = TrigField {
            comps: vec![TrigScalar::default(); 3],
        };
        let (nab, _) = verify_nab_identities(&s, 1e-3).unwrap();
        assert!(nab <= 1e-13);
    }

    #[test]
    fn nab_identities_generic_samples() {
        for dim in [2usize, 3] {
            for seed in [3u64, 11, 29] {
                let s = FlowSample::random(dim, 12, 2.0, seed).unwrap();
                let (nab, nabt) = verify_nab_identities(&s, 1e-3).unwrap();
                assert!(nab <= 1e-12, "dim {dim} seed {seed}: nab {nab:e}");
                let order = nabt_order(&s, 1e-3).unwrap();
                assert!(
                    (1.8..=2.2).contains(&order),
                    "dim {dim} seed {seed}: nabt {nabt:e} order {order}"
                );
            }
        }
    }

    #[test]
    fn residuals_do_not_grow_with_resolution() {
        for res in [16usize, 32] {
            let s = FlowSample::random(2, res, 2.0, 17).unwrap();
            assert!(verify_jacobian_expansion(&s) <= 1e-12, "res {res}");
            let (nab, _) = verify_nab_identities(&s, 1e-3).unwrap();
            assert!(nab <= 1e-12, "res {res}");
        }
    }

    #[test]
    fn curl_transport_scalar_closed_form() {
        // single-component check against e^{-2}
        let s = FlowSample::random(2, 8, 2.0, 9).unwrap();
        let dev = verify_curl_transport(&s, 2.0).unwrap();
        assert!(dev <= 1e-10, "dev {dev:e}");
    }

    #[test]
    fn curl_transport_zero_field() {
        let mut s = FlowSample::random(3, 8, 2.0, 4).unwrap();
        s.vel = Some(TrigField {
            comps: vec![TrigScalar::default(); 3],
        });
        assert_eq!(verify_curl_transport(&s, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn transverse_periodicity_wraps() {
        let s = FlowSample::random(3, 8, 2.0, 21).unwrap();
        for z in [0.3, 1.1] {
            let a = s.omega.value([0.0, 0.25, z]);
            let b = s.omega.value([1.0, 0.25, z]);
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-12);
            }
            let ga = s.omega.gradient([0.5, 0.0, z]);
            let gb = s.omega.gradient([0.5, 1.0, z]);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((ga[i][j] - gb[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn displacement_respects_margin() {
        for dim in [2usize, 3] {
            let s = FlowSample::random(dim, 16, 2.0, 33).unwrap();
            for &p in &s.points {
                let g = s.omega.gradient(p);
                for row in g.iter().take(dim) {
                    for v in row.iter().take(dim) {
                        assert!(v.abs() <= MAX_DISPLACEMENT_GRAD);
                    }
                }
            }
        }
    }
}
