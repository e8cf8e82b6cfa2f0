//! Diffusive-wave routing oracle that produces ground-truth stage and
//! discharge fields.
//!
//! Discharge is routed cell to cell with Muskingum–Cunge, coefficients
//! recomputed every substep from the local kinematic celerity of an
//! equivalent rectangular channel. Stage is the Manning normal depth above
//! the thalweg, pulled toward the downstream boundary stage over the last
//! few sections with linearly decaying weight.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{ForcingSeries, Reach};
use crate::DT_SECONDS;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HydroError {
    #[error("invalid hydraulic parameter: {0}")]
    Domain(String),
    #[error("discharge {q} m3/s exceeds the capacity of a {d_max} m deep section")]
    Bracket { q: f64, d_max: f64 },
    #[error("routing became unstable at hour {hour}, section {section}: {detail}")]
    Unstable { hour: usize, section: usize, detail: String },
    #[error("downstream stage {h_dn} m at hour {hour} lies below the thalweg {z_bed} m")]
    StageBelowBed { hour: usize, h_dn: f64, z_bed: f64 },
    #[error("state field shape mismatch: {0}")]
    Shape(String),
}

/// Largest depth the normal-depth bracket may grow to.
pub const MAX_DEPTH_M: f64 = 1.0e4;

/// Manning discharge of a rectangular section:
/// `Q = (1/n)·A·R^(2/3)·S^(1/2)`, `A = w·d`, `R = A/(w + 2d)`.
pub fn manning_discharge(depth: f64, width: f64, slope: f64, n: f64) -> Result<f64, HydroError> {
    if !(width > 0.0 && slope > 0.0 && n > 0.0) {
        return Err(HydroError::Domain(format!(
            "width={width}, slope={slope}, n={n} must all be positive"
        )));
    }
    if depth.is_nan() || depth < 0.0 {
        return Err(HydroError::Domain(format!("depth={depth} must be non-negative")));
    }
    Ok(manning_unchecked(depth, width, slope, n))
}

#[inline]
fn manning_unchecked(depth: f64, width: f64, slope: f64, n: f64) -> f64 {
    if depth == 0.0 {
        return 0.0;
    }
    let area = width * depth;
    let radius = area / (width + 2.0 * depth);
    area * libm::cbrt(radius * radius) * libm::sqrt(slope) / n
}

/// Depth at which the Manning discharge equals `q`.
///
/// The root is kept inside a bisection bracket `[lo, hi]` grown geometrically
/// from 1 m; Newton steps on `Q(d) − q` are taken whenever they stay inside
/// the bracket, otherwise the interval is halved.
pub fn normal_depth(q: f64, width: f64, slope: f64, n: f64) -> Result<f64, HydroError> {
    manning_discharge(0.0, width, slope, n)?;
    if !q.is_finite() || q < 0.0 {
        return Err(HydroError::Domain(format!("discharge {q} must be finite and non-negative")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while manning_unchecked(hi, width, slope, n) < q {
        hi *= 2.0;
        if hi > MAX_DEPTH_M {
            return Err(HydroError::Bracket { q, d_max: MAX_DEPTH_M });
        }
    }
    let mut lo = 0.0;
    // Wide-channel estimate as the first iterate.
    let mut d = libm::pow(q * n / (width * libm::sqrt(slope)), 0.6).clamp(0.5 * hi * 1e-6, hi);
    for _ in 0..200 {
        let qd = manning_unchecked(d, width, slope, n);
        let resid = qd - q;
        if resid.abs() <= 1e-13 * q {
            return Ok(d);
        }
        if resid < 0.0 {
            lo = d;
        } else {
            hi = d;
        }
        // dQ/dd = Q·(5/(3d) − 4/(3P)).
        let dq = qd * (5.0 / (3.0 * d) - 4.0 / (3.0 * (width + 2.0 * d)));
        let newton = d - resid / dq;
        d = if dq > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(d)
}

/// Kinematic wave celerity `dQ/dA` of a rectangular Manning section.
fn celerity(q: f64, width: f64, slope: f64, n: f64) -> Result<f64, HydroError> {
    let d = normal_depth(q, width, slope, n)?;
    let v = q / (width * d);
    Ok(v * (5.0 / 3.0 - 4.0 * d / (3.0 * (width + 2.0 * d))))
}

/// Hourly stage and discharge at every cross-section, `[T × N]` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateField {
    pub reach_id: String,
    pub n_xs: usize,
    pub dt: f64,
    pub h: Vec<f64>,
    pub q: Vec<f64>,
}

impl StateField {
    pub fn new(reach_id: impl Into<String>, n_xs: usize, h: Vec<f64>, q: Vec<f64>) -> Result<Self, HydroError> {
        if n_xs == 0 || h.len() != q.len() || !h.len().is_multiple_of(n_xs) {
            return Err(HydroError::Shape(format!(
                "h has {} values, q has {}, n_xs = {n_xs}",
                h.len(),
                q.len()
            )));
        }
        Ok(Self {
            reach_id: reach_id.into(),
            n_xs,
            dt: DT_SECONDS,
            h,
            q,
        })
    }

    pub fn hours(&self) -> usize {
        self.h.len() / self.n_xs
    }

    #[inline]
    pub fn h_at(&self, t: usize, i: usize) -> f64 {
        self.h[t * self.n_xs + i]
    }

    #[inline]
    pub fn q_at(&self, t: usize, i: usize) -> f64 {
        self.q[t * self.n_xs + i]
    }

    pub fn h_row(&self, t: usize) -> &[f64] {
        &self.h[t * self.n_xs..(t + 1) * self.n_xs]
    }

    pub fn q_row(&self, t: usize) -> &[f64] {
        &self.q[t * self.n_xs..(t + 1) * self.n_xs]
    }

    pub fn push_row(&mut self, h: &[f64], q: &[f64]) {
        assert_eq!(h.len(), self.n_xs);
        assert_eq!(q.len(), self.n_xs);
        self.h.extend_from_slice(h);
        self.q.extend_from_slice(q);
    }

    /// Hours `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        let (a, b) = (start * self.n_xs, (start + len) * self.n_xs);
        Self {
            reach_id: self.reach_id.clone(),
            n_xs: self.n_xs,
            dt: self.dt,
            h: self.h[a..b].to_vec(),
            q: self.q[a..b].to_vec(),
        }
    }

    /// Stage time series at one cross-section.
    pub fn h_series(&self, i: usize) -> Vec<f64> {
        (0..self.hours()).map(|t| self.h_at(t, i)).collect()
    }

    pub fn q_series(&self, i: usize) -> Vec<f64> {
        (0..self.hours()).map(|t| self.q_at(t, i)).collect()
    }

    /// Checks finiteness, `h ≥ z_bed` and `q ≥ 0`.
    pub fn validate(&self, z_bed: &[f64]) -> Result<(), HydroError> {
        for t in 0..self.hours() {
            for (i, &zb) in z_bed.iter().enumerate() {
                let (h, q) = (self.h_at(t, i), self.q_at(t, i));
                if !h.is_finite() || !q.is_finite() || q < 0.0 || h < zb - 1e-9 {
                    return Err(HydroError::Unstable {
                        hour: t,
                        section: i,
                        detail: format!("h={h}, q={q}, z_bed={zb}"),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Sections over which the downstream stage is blended upstream;
    /// `None` selects `max(3, N/5)`.
    pub backwater_sections: Option<usize>,
    /// Target Courant number of the routing substep (≤ 1).
    pub courant: f64,
    /// Lower bound on the local bed slope used for conveyance.
    pub min_slope: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            backwater_sections: None,
            courant: 1.0,
            min_slope: 1e-5,
        }
    }
}

impl OracleConfig {
    pub fn backwater_for(&self, n_xs: usize) -> usize {
        self.backwater_sections.unwrap_or_else(|| (n_xs / 5).max(3)).min(n_xs)
    }
}

/// Equivalent rectangular channel per section and per segment.
#[derive(Debug, Clone)]
pub struct Channel {
    pub width: Vec<f64>,
    pub slope: Vec<f64>,
    pub n: Vec<f64>,
    pub z_bed: Vec<f64>,
    pub seg_dx: Vec<f64>,
    pub seg_slope: Vec<f64>,
}

impl Channel {
    pub fn from_reach(reach: &Reach, cfg: &OracleConfig) -> Self {
        let xs = &reach.cross_sections;
        let n_xs = xs.len();
        let seg_dx: Vec<f64> = xs.windows(2).map(|w| w[1].chainage - w[0].chainage).collect();
        let seg_slope: Vec<f64> = xs
            .windows(2)
            .zip(&seg_dx)
            .map(|(w, dx)| ((w[0].z_bed - w[1].z_bed) / dx).max(cfg.min_slope))
            .collect();
        let slope = (0..n_xs)
            .map(|i| match i {
                0 => seg_slope[0],
                i if i == n_xs - 1 => seg_slope[n_xs - 2],
                i => 0.5 * (seg_slope[i - 1] + seg_slope[i]),
            })
            .collect();
        Self {
            width: xs.iter().map(|x| x.channel_width()).collect(),
            slope,
            n: xs.iter().map(|x| x.manning_n).collect(),
            z_bed: xs.iter().map(|x| x.z_bed).collect(),
            seg_dx,
            seg_slope,
        }
    }

    /// Uniform-flow stage at every section for the discharge profile `q`.
    pub fn normal_stage(&self, q: &[f64]) -> Result<Vec<f64>, HydroError> {
        q.iter()
            .enumerate()
            .map(|(i, &qi)| Ok(self.z_bed[i] + normal_depth(qi, self.width[i], self.slope[i], self.n[i])?))
            .collect()
    }
}

/// Discharge floor for celerity evaluation on a (nearly) dry channel.
const Q_FLOOR: f64 = 1e-6;

/// Routes `forcings` down `reach` and returns the hourly state field.
///
/// The initial discharge profile is uniform at `q_up[0]`.
pub fn route_reach(reach: &Reach, forcings: &ForcingSeries, cfg: &OracleConfig) -> Result<StateField, HydroError> {
    route_reach_substeps(reach, forcings, cfg).map(|(s, _)| s)
}

/// As [`route_reach`], also returning the total number of routing substeps.
pub fn route_reach_substeps(
    reach: &Reach,
    forcings: &ForcingSeries,
    cfg: &OracleConfig,
) -> Result<(StateField, usize), HydroError> {
    if !(cfg.courant > 0.0 && cfg.courant <= 1.0) {
        return Err(HydroError::Domain(format!("courant {} outside (0, 1]", cfg.courant)));
    }
    let ch = Channel::from_reach(reach, cfg);
    let n_xs = reach.len();
    let t_len = forcings.len();
    let blend = cfg.backwater_for(n_xs);

    let mut q_hist = Vec::with_capacity(t_len * n_xs);
    let mut h_hist = Vec::with_capacity(t_len * n_xs);
    let mut q_old = vec![forcings.q_up[0]; n_xs];
    let mut q_new = vec![0.0; n_xs];
    let mut substeps_total = 0;

    for t in 0..t_len {
        if t > 0 {
            let (qa, qb) = (forcings.q_up[t - 1], forcings.q_up[t]);
            // Celerity grows with discharge, so the largest flow bounds the Courant number.
            let q_max = q_old.iter().copied().fold(qa.max(qb), f64::max).max(Q_FLOOR);
            let mut k_min = f64::INFINITY;
            for j in 0..n_xs - 1 {
                let c = celerity(q_max, ch.width[j + 1], ch.seg_slope[j], ch.n[j + 1])?;
                if c > 0.0 {
                    k_min = k_min.min(ch.seg_dx[j] / c);
                }
            }
            let nsub = if k_min.is_finite() {
                libm::ceil(DT_SECONDS / (cfg.courant * k_min)).max(1.0) as usize
            } else {
                1
            };
            let dt = DT_SECONDS / nsub as f64;
            for s in 1..=nsub {
                let frac = s as f64 / nsub as f64;
                q_new[0] = qa + (qb - qa) * frac;
                for j in 0..n_xs - 1 {
                    let q_ref = ((q_new[j] + q_old[j] + q_old[j + 1]) / 3.0).max(Q_FLOOR);
                    let (w, sl, n, dx) = (ch.width[j + 1], ch.seg_slope[j], ch.n[j + 1], ch.seg_dx[j]);
                    let c = celerity(q_ref, w, sl, n)?;
                    let k = dx / c;
                    let x = (0.5 * (1.0 - q_ref / (w * sl * c * dx))).clamp(0.0, 0.5);
                    let denom = 2.0 * k * (1.0 - x) + dt;
                    let c0 = (dt - 2.0 * k * x) / denom;
                    let c1 = (dt + 2.0 * k * x) / denom;
                    let c2 = (2.0 * k * (1.0 - x) - dt) / denom;
                    let out = c0 * q_new[j] + c1 * q_old[j] + c2 * q_old[j + 1];
                    if !out.is_finite() {
                        return Err(HydroError::Unstable {
                            hour: t,
                            section: j + 1,
                            detail: format!("non-finite discharge (K={k}, X={x})"),
                        });
                    }
                    q_new[j + 1] = out.max(0.0);
                }
                core::mem::swap(&mut q_old, &mut q_new);
            }
            substeps_total += nsub;
        }

        let mut h = ch.normal_stage(&q_old)?;
        let h_dn = forcings.h_dn[t];
        let last = n_xs - 1;
        if h_dn < ch.z_bed[last] {
            return Err(HydroError::StageBelowBed {
                hour: t,
                h_dn,
                z_bed: ch.z_bed[last],
            });
        }
        let offset = h_dn - h[last];
        for j in 0..blend {
            let i = last - j;
            let weight = 1.0 - j as f64 / blend as f64;
            h[i] = (h[i] + weight * offset).max(ch.z_bed[i]);
        }
        h[last] = h_dn;
        if let Some(i) = h.iter().position(|v| !v.is_finite()) {
            return Err(HydroError::Unstable {
                hour: t,
                section: i,
                detail: String::from("non-finite stage"),
            });
        }
        h_hist.extend_from_slice(&h);
        q_hist.extend_from_slice(&q_old);
    }
    let field = StateField::new(reach.id.clone(), n_xs, h_hist, q_hist)?;
    Ok((field, substeps_total))
}
