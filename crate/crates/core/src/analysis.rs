//! Decay-rate fits, boundary-layer measurements and comparison of simulated
//! fields against boundary-layer predictions.

use serde::{Deserialize, Serialize};

use crate::blprofiles::{BlFieldPrediction, Side};
use crate::domain::{split_mean_fluct, RealField, VerticalProfile};
use crate::error::{Error, Result};

/// Minimum number of samples for [`fit_power_law`].
pub const MIN_FIT_SAMPLES: usize = 8;

/// `value ≈ prefactor · (1 + t)^(−exponent)` over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub n_samples: usize,
}

/// Least squares of `y` on `x`: (slope, intercept, r²).
fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    (slope, intercept, r2)
}

/// Fits `log value` against `log(1 + t)` on samples with `t` in the closed
/// window; the exponent is the negated slope.
pub fn fit_power_law(series: &[(f64, f64)], window: (f64, f64)) -> Result<PowerLawFit> {
    let (t0, t1) = window;
    if !(t0 >= 1.0 && t1 > t0) {
        return Err(Error::Invalid(format!("fit window ({t0}, {t1}) must satisfy 1 <= t_min < t_max")));
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let tol = 1e-9 * t1.abs().max(1.0);
    if series.is_empty() || t0 < lo - tol || t1 > hi + tol {
        return Err(Error::Invalid(format!(
            "fit window ({t0}, {t1}) outside the series range ({lo}, {hi})"
        )));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t0 - tol && t <= t1 + tol)
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::Invalid(format!(
            "power-law fit needs at least {MIN_FIT_SAMPLES} samples, window has {}",
            pts.len()
        )));
    }
    if let Some(&(t, v)) = pts.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::Invalid(format!("nonpositive value {v} at t = {t} in fit window")));
    }
    let x: Vec<f64> = pts.iter().map(|p| (1.0 + p.0).ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, icpt, r2) = linear_regression(&x, &y);
    Ok(PowerLawFit {
        exponent: -slope,
        prefactor: icpt.exp(),
        window,
        r_squared: r2,
        n_samples: pts.len(),
    })
}

/// Exponent `a` of `value ≈ C t^(−a)` from a short ladder (at least two
/// positive samples), regressing on `log t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub n_samples: usize,
}

pub fn fit_ladder(times: &[f64], values: &[f64]) -> Result<LadderFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, v)| v.is_finite())
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Invalid("ladder fit needs at least two finite samples".into()));
    }
    if pts.iter().any(|p| !(p.0 > 0.0) || !(p.1 > 0.0)) {
        return Err(Error::Invalid("ladder fit needs positive times and values".into()));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, icpt, r2) = linear_regression(&x, &y);
    Ok(LadderFit {
        exponent: -slope,
        prefactor: icpt.exp(),
        r_squared: r2,
        n_samples: pts.len(),
    })
}

/// Boundary-layer widths and amplitudes over a set of snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BLMeasurement {
    pub times: Vec<f64>,
    /// distance from the wall at which the x-RMS of θ′ falls to 1/e of its
    /// wall value; `None` when there is no crossing in the wall half
    pub widths: Vec<Option<f64>>,
    /// L² norm of θ′ over the near-wall third of the channel
    pub amplitudes: Vec<f64>,
    pub side: Side,
}

impl BLMeasurement {
    pub fn width_fit(&self) -> Result<LadderFit> {
        let (t, w): (Vec<f64>, Vec<f64>) = self
            .times
            .iter()
            .zip(&self.widths)
            .filter_map(|(&t, w)| w.map(|w| (t, w)))
            .unzip();
        fit_ladder(&t, &w)
    }

    pub fn amplitude_fit(&self) -> Result<LadderFit> {
        fit_ladder(&self.times, &self.amplitudes)
    }
}

/// Minimum number of snapshots accepted by [`extract_bl`].
pub const MIN_BL_SNAPSHOTS: usize = 3;
/// Earliest snapshot time accepted by [`extract_bl`].
pub const MIN_BL_TIME: f64 = 10.0;

/// x-RMS of the fluctuation at every z node.
fn rms_profile(f: &RealField) -> Vec<f64> {
    let fl = split_mean_fluct(f).fluct;
    let g = f.grid();
    let mut acc = vec![0.0; g.nz];
    for ix in 0..g.nx {
        for (a, v) in acc.iter_mut().zip(fl.column(ix)) {
            *a += v * v;
        }
    }
    acc.iter().map(|a| (a / g.nx as f64).sqrt()).collect()
}

/// 1/e width from a profile ordered by distance from the wall.
fn e_fold_width(dist: &[f64], prof: &[f64], limit: f64) -> Option<f64> {
    let target = prof[0] / std::f64::consts::E;
    if !(prof[0] > 0.0) {
        return None;
    }
    for i in 1..prof.len() {
        if dist[i] > limit {
            break;
        }
        if prof[i] <= target {
            let (d0, d1, p0, p1) = (dist[i - 1], dist[i], prof[i - 1], prof[i]);
            return Some(d0 + (d1 - d0) * (p0 - target) / (p0 - p1));
        }
    }
    None
}

fn wall_measure(f: &RealField, bottom: bool) -> (Option<f64>, f64) {
    let g = f.grid();
    let h = g.height;
    let z = g.z_nodes();
    let rms = rms_profile(f);
    let (dist, prof): (Vec<f64>, Vec<f64>) = if bottom {
        (z.to_vec(), rms)
    } else {
        (z.iter().rev().map(|v| h - v).collect(), rms.into_iter().rev().collect())
    };
    let width = e_fold_width(&dist, &prof, 0.5 * h);
    let fl = split_mean_fluct(f).fluct;
    let amp = if bottom {
        fl.l2_norm_strip(0.0, h / 3.0)
    } else {
        fl.l2_norm_strip(2.0 * h / 3.0, h)
    };
    (width, amp)
}

/// Measures wall-layer width and amplitude in each snapshot. With
/// `Side::Both` the widths are averaged and amplitudes combined in
/// quadrature.
pub fn extract_bl(snapshots: &[(f64, RealField)], side: Side) -> Result<BLMeasurement> {
    if snapshots.len() < MIN_BL_SNAPSHOTS {
        return Err(Error::Invalid(format!(
            "boundary-layer extraction needs at least {MIN_BL_SNAPSHOTS} snapshots, got {}",
            snapshots.len()
        )));
    }
    if let Some((t, _)) = snapshots.iter().find(|s| s.0 < MIN_BL_TIME) {
        return Err(Error::Invalid(format!(
            "boundary-layer extraction needs t >= {MIN_BL_TIME}, got snapshot at t = {t}"
        )));
    }
    let mut m = BLMeasurement {
        times: Vec::new(),
        widths: Vec::new(),
        amplitudes: Vec::new(),
        side,
    };
    for (t, f) in snapshots {
        let mut ws = Vec::new();
        let mut amp2 = 0.0;
        let mut missing = false;
        for bottom in [true, false] {
            if (bottom && !side.includes_bottom()) || (!bottom && !side.includes_top()) {
                continue;
            }
            let (w, a) = wall_measure(f, bottom);
            match w {
                Some(w) => ws.push(w),
                None => missing = true,
            }
            amp2 += a * a;
        }
        m.times.push(*t);
        m.widths.push(if missing || ws.is_empty() {
            None
        } else {
            Some(ws.iter().sum::<f64>() / ws.len() as f64)
        });
        m.amplitudes.push(amp2.sqrt());
    }
    Ok(m)
}

/// Residual of a simulated field against `mean_offset + prediction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub time: f64,
    pub l2_residual: f64,
    pub l2_bottom_strip: f64,
    pub l2_top_strip: f64,
    pub strip_width: f64,
    pub l2_predicted: f64,
    pub l2_simulated_minus_mean: f64,
}

/// Compares `simulated` at the prediction time with `mean_offset +
/// predicted.theta_bl`; strip norms use wall strips of `strip_width`.
pub fn validate_prediction(
    simulated: &RealField,
    time: f64,
    predicted: &BlFieldPrediction,
    mean_offset: &VerticalProfile,
    strip_width: f64,
) -> Result<PredictionReport> {
    let grid = simulated.grid();
    if grid != predicted.theta_bl.grid() {
        return Err(Error::Invalid("simulated and predicted fields live on different grids".into()));
    }
    if mean_offset.z.len() != grid.nz {
        return Err(Error::Invalid("mean offset does not match the grid".into()));
    }
    if (time - predicted.time).abs() > 1e-9 * time.abs().max(1.0) {
        return Err(Error::Invalid(format!(
            "prediction time {} does not match simulation time {time}",
            predicted.time
        )));
    }
    let sim_minus_mean = simulated.axpy(-1.0, &mean_offset.to_field(grid));
    let r = sim_minus_mean.axpy(-1.0, &predicted.theta_bl);
    let h = grid.height;
    let w = strip_width.clamp(0.0, 0.5 * h);
    Ok(PredictionReport {
        time,
        l2_residual: r.l2_norm(),
        l2_bottom_strip: r.l2_norm_strip(0.0, w),
        l2_top_strip: r.l2_norm_strip(h - w, h),
        strip_width: w,
        l2_predicted: predicted.theta_bl.l2_norm(),
        l2_simulated_minus_mean: sim_minus_mean.l2_norm(),
    })
}

/// Decay exponent of the residual norm across a ladder of reports.
pub fn residual_exponent(reports: &[PredictionReport]) -> Result<LadderFit> {
    let t: Vec<f64> = reports.iter().map(|r| r.time).collect();
    let v: Vec<f64> = reports.iter().map(|r| r.l2_residual).collect();
    fit_ladder(&t, &v)
}

/// One line of a validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    pub value: f64,
    /// acceptance interval, if the quantity is checked
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub note: String,
}

/// Validation report: fitted quantities, intervals and pass/fail flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scenario: String,
    pub entries: Vec<ReportEntry>,
    #[serde(default)]
    pub power_law_fits: Vec<(String, PowerLawFit)>,
    #[serde(default)]
    pub ladder_fits: Vec<(String, LadderFit)>,
}

impl ValidationReport {
    pub fn new(scenario: &str) -> Self {
        Self {
            scenario: scenario.to_string(),
            ..Default::default()
        }
    }

    /// Records a value, checked against `interval` when given.
    pub fn check(&mut self, name: &str, value: f64, interval: Option<(f64, f64)>, note: &str) -> Option<bool> {
        let pass = interval.map(|(a, b)| value >= a && value <= b);
        self.entries.push(ReportEntry {
            name: name.to_string(),
            value,
            interval,
            pass,
            note: note.to_string(),
        });
        pass
    }

    /// Records a boolean criterion.
    pub fn flag(&mut self, name: &str, ok: bool, note: &str) {
        self.entries.push(ReportEntry {
            name: name.to_string(),
            value: if ok { 1.0 } else { 0.0 },
            interval: Some((1.0, 1.0)),
            pass: Some(ok),
            note: note.to_string(),
        });
    }

    /// False if any checked entry failed.
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass != Some(false))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Projection of the `cos(k x)` component of `f` onto the vertical profile
/// `b`, normalized by `⟨b, b⟩` (z quadrature).
pub fn modal_amplitude(f: &RealField, k: usize, b: &[f64]) -> Result<f64> {
    let g = f.grid();
    if k == 0 || k >= g.nx / 2 || b.len() != g.nz {
        return Err(Error::Invalid(format!("modal amplitude: bad mode {k} or profile length")));
    }
    let spec = f.to_spectral();
    let w = g.z_weights();
    let col = spec.column(k);
    // θ = a cos(kx) b(z) has θ̂_k = a b / 2
    let num: f64 = col.iter().zip(b).zip(&w).map(|((c, bv), wv)| 2.0 * c.re * bv * wv).sum();
    let den: f64 = b.iter().zip(&w).map(|(bv, wv)| bv * bv * wv).sum();
    Ok(num / den)
}
