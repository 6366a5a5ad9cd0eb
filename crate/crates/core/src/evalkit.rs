//! Evaluation metrics: Pearson correlation, spatial error maps, per-step
//! error series and vortex tracking.

use std::fmt::Write as _;

use serde::Serialize;

use crate::domain::{LevelGrid, Mode};
use crate::emulator::{column_mean_heating, RadiationField};
use crate::error::{Error, Result};
use crate::scenegen::{Scene, SceneSeries, Timestamp};

/// Percent-error denominator floors.
pub const FLUX_FLOOR: f64 = 1.0;
pub const TEMPERATURE_FLOOR: f64 = 1.0;
pub const DEFAULT_REFINE_RADIUS: usize = 5;

/// Pearson correlation, computed from centred sums.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one of the inputs is constant".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Quantities that can be pulled out of a [`RadiationField`] as a 2-D map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variable {
    LwUpTop,
    LwUpBottom,
    LwDownBottom,
    SwUpTop,
    SwDownBottom,
    SwUpBottom,
    /// Heating rate of one layer, K/day.
    Heating(Mode, usize),
    /// Pressure-weighted column-mean heating rate, K/day.
    ColumnHeating(Mode),
    /// LW + SW column-mean heating, K/day.
    TotalColumnHeating,
}

impl Variable {
    pub fn name(&self) -> String {
        match self {
            Variable::LwUpTop => "LWUPT".into(),
            Variable::LwUpBottom => "LWUPB".into(),
            Variable::LwDownBottom => "LWDNB".into(),
            Variable::SwUpTop => "SWUPT".into(),
            Variable::SwDownBottom => "SWDNB".into(),
            Variable::SwUpBottom => "SWUPB".into(),
            Variable::Heating(Mode::Lw, l) => format!("HR_LW_{l}"),
            Variable::Heating(Mode::Sw, l) => format!("HR_SW_{l}"),
            Variable::ColumnHeating(Mode::Lw) => "HR_LW_COL".into(),
            Variable::ColumnHeating(Mode::Sw) => "HR_SW_COL".into(),
            Variable::TotalColumnHeating => "HR_COL".into(),
        }
    }

    /// Percent-error floor appropriate for the variable's units.
    pub fn floor(&self) -> f64 {
        match self {
            Variable::Heating(..) | Variable::ColumnHeating(_) | Variable::TotalColumnHeating => {
                TEMPERATURE_FLOOR
            }
            _ => FLUX_FLOOR,
        }
    }
}

/// Values of `var` for every cell, in scene order.
pub fn field_variable(field: &RadiationField, var: Variable, grid: &LevelGrid) -> Result<Vec<f64>> {
    let p = grid.p_interface();
    let cells = field.lw.len();
    let get = |c: usize| -> f64 {
        let (lw, sw) = (&field.lw[c], &field.sw[c]);
        match var {
            Variable::LwUpTop => lw.flux_top_up,
            Variable::LwUpBottom => lw.flux_bot_up,
            Variable::LwDownBottom => lw.flux_bot_down,
            Variable::SwUpTop => sw.flux_top_up,
            Variable::SwDownBottom => sw.flux_bot_down,
            Variable::SwUpBottom => sw.flux_bot_up,
            Variable::Heating(Mode::Lw, l) => lw.heating[l],
            Variable::Heating(Mode::Sw, l) => sw.heating[l],
            Variable::ColumnHeating(Mode::Lw) => column_mean_heating(&lw.heating, p),
            Variable::ColumnHeating(Mode::Sw) => column_mean_heating(&sw.heating, p),
            Variable::TotalColumnHeating => {
                column_mean_heating(&lw.heating, p) + column_mean_heating(&sw.heating, p)
            }
        }
    };
    if let Variable::Heating(_, l) = var {
        if l >= grid.n_layers() {
            return Err(Error::InvalidArgument(format!("layer {l} out of range")));
        }
    }
    Ok((0..cells).map(get).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub max_abs: f64,
    pub mean_abs: f64,
    pub max_pct: f64,
    pub mean_pct: f64,
    /// Fraction of cells with percent error below 0.2 %.
    pub frac_below_0_2_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialErrorMap {
    pub nx: usize,
    pub ny: usize,
    /// Row-major, index `i * ny + j`.
    pub abs_err: Vec<f64>,
    pub pct_err: Vec<f64>,
    pub summary: ErrorSummary,
}

impl SpatialErrorMap {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,abs_err,pct_err\n");
        for i in 0..self.nx {
            for j in 0..self.ny {
                let c = i * self.ny + j;
                let _ = writeln!(s, "{i},{j},{},{}", self.abs_err[c], self.pct_err[c]);
            }
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let m = &self.summary;
        format!(
            "max_abs,mean_abs,max_pct,mean_pct,frac_below_0_2_pct\n{},{},{},{},{}\n",
            m.max_abs, m.mean_abs, m.max_pct, m.mean_pct, m.frac_below_0_2_pct
        )
    }
}

/// `abs = |ref − emu|`, `pct = 100·abs / max(|ref|, floor)`.
pub fn error_map(nx: usize, ny: usize, reference: &[f64], emulated: &[f64], floor: f64) -> Result<SpatialErrorMap> {
    if reference.len() != nx * ny || emulated.len() != nx * ny || reference.is_empty() {
        return Err(Error::Shape(format!(
            "{nx}x{ny} map needs {} cells, got {} and {}",
            nx * ny,
            reference.len(),
            emulated.len()
        )));
    }
    if !(floor > 0.0) {
        return Err(Error::InvalidArgument(format!("floor must be positive, got {floor}")));
    }
    let abs_err: Vec<f64> = reference.iter().zip(emulated).map(|(r, e)| (r - e).abs()).collect();
    let pct_err: Vec<f64> = abs_err
        .iter()
        .zip(reference)
        .map(|(a, r)| 100.0 * a / r.abs().max(floor))
        .collect();
    let n = abs_err.len() as f64;
    let summary = ErrorSummary {
        max_abs: abs_err.iter().copied().fold(0.0, f64::max),
        mean_abs: abs_err.iter().sum::<f64>() / n,
        max_pct: pct_err.iter().copied().fold(0.0, f64::max),
        mean_pct: pct_err.iter().sum::<f64>() / n,
        frac_below_0_2_pct: pct_err.iter().filter(|&&p| p < 0.2).count() as f64 / n,
    };
    Ok(SpatialErrorMap {
        nx,
        ny,
        abs_err,
        pct_err,
        summary,
    })
}

/// `(reference, emulated)` pairs for scatter plots.
pub fn scatter_csv(name: &str, reference: &[f64], emulated: &[f64]) -> String {
    let mut s = format!("{name}_ref,{name}_emu\n");
    for (r, e) in reference.iter().zip(emulated) {
        let _ = writeln!(s, "{r},{e}");
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub t: Timestamp,
    pub mean_ref: f64,
    pub mean_emu: f64,
    pub rmse: f64,
    pub max_abs_err: f64,
}

/// One record per timestep of domain-wide error statistics. Each series
/// entry is a timestamp and the variable's values over the domain.
pub fn temporal_series(
    series_ref: &[(Timestamp, Vec<f64>)],
    series_emu: &[(Timestamp, Vec<f64>)],
) -> Result<Vec<StepStats>> {
    if series_ref.len() != series_emu.len() {
        return Err(Error::Shape(format!(
            "series have {} and {} steps",
            series_ref.len(),
            series_emu.len()
        )));
    }
    series_ref
        .iter()
        .zip(series_emu)
        .map(|((ta, a), (tb, b))| {
            if ta != tb {
                return Err(Error::InvalidArgument(format!(
                    "misaligned timestamps {ta} and {tb}"
                )));
            }
            if a.len() != b.len() || a.is_empty() {
                return Err(Error::Shape(format!(
                    "step {ta}: {} vs {} values",
                    a.len(),
                    b.len()
                )));
            }
            let n = a.len() as f64;
            let mut sq = 0.0;
            let mut max_abs: f64 = 0.0;
            for (u, v) in a.iter().zip(b) {
                let d = u - v;
                sq += d * d;
                max_abs = max_abs.max(d.abs());
            }
            Ok(StepStats {
                t: *ta,
                mean_ref: a.iter().sum::<f64>() / n,
                mean_emu: b.iter().sum::<f64>() / n,
                rmse: (sq / n).sqrt(),
                max_abs_err: max_abs,
            })
        })
        .collect()
}

pub fn series_csv(stats: &[StepStats]) -> String {
    let mut s = String::from("t,mean_ref,mean_emu,rmse,max_abs_err\n");
    for r in stats {
        let _ = writeln!(s, "{},{},{},{},{}", r.t, r.mean_ref, r.mean_emu, r.rmse, r.max_abs_err);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackPoint {
    pub t: Timestamp,
    pub center: (usize, usize),
    /// Pressure minimum of the field, hPa.
    pub min_pressure: f64,
    /// 10 m wind at the returned center, m/s.
    pub wind_at_center: f64,
    /// True when the pressure field is uniform and the center is only a
    /// tie-break.
    pub degenerate: bool,
}

/// Argmin with ties resolved to the lowest index, i.e. smallest `(i, j)`.
fn argmin(values: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    values.fold(None, |best, (c, v)| match best {
        Some((_, bv)) if bv <= v => best,
        _ => Some((c, v)),
    })
}

/// Vortex center: the pressure minimum, refined to the wind minimum within
/// `refine_radius` cells of it. Fields are row-major `i * ny + j`.
pub fn track_vortex(
    nx: usize,
    ny: usize,
    p_surface: &[f64],
    wind10: &[f64],
    refine_radius: usize,
) -> Result<TrackPoint> {
    if nx == 0 || ny == 0 || p_surface.len() != nx * ny || wind10.len() != nx * ny {
        return Err(Error::Shape(format!(
            "{nx}x{ny} grid with {} pressure and {} wind values",
            p_surface.len(),
            wind10.len()
        )));
    }
    let (coarse, p_min) = argmin(p_surface.iter().copied().enumerate()).expect("non-empty");
    let p_max = p_surface.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (ci, cj) = (coarse / ny, coarse % ny);
    let r = refine_radius as isize;
    let r2 = (refine_radius * refine_radius) as isize;
    let mut near = Vec::new();
    for di in -r..=r {
        for dj in -r..=r {
            let (i, j) = (ci as isize + di, cj as isize + dj);
            if di * di + dj * dj > r2 || i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                continue;
            }
            near.push(i as usize * ny + j as usize);
        }
    }
    near.sort_unstable();
    let (refined, wind) = argmin(near.into_iter().map(|c| (c, wind10[c]))).expect("contains center");
    Ok(TrackPoint {
        t: 0,
        center: (refined / ny, refined % ny),
        min_pressure: p_min,
        wind_at_center: wind,
        degenerate: p_max == p_min,
    })
}

pub fn track_scene(scene: &Scene, refine_radius: usize) -> Result<TrackPoint> {
    let mut tp = track_vortex(scene.nx, scene.ny, &scene.p_surface, &scene.wind10, refine_radius)?;
    tp.t = scene.timestamp;
    Ok(tp)
}

pub fn track_series(series: &SceneSeries, refine_radius: usize) -> Result<Vec<TrackPoint>> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("cannot track an empty series".into()));
    }
    series.scenes.iter().map(|s| track_scene(s, refine_radius)).collect()
}

/// Center distance in cells.
pub fn separation(a: &TrackPoint, b: &TrackPoint) -> f64 {
    let di = a.center.0 as f64 - b.center.0 as f64;
    let dj = a.center.1 as f64 - b.center.1 as f64;
    (di * di + dj * dj).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackComparison {
    pub a: Vec<TrackPoint>,
    pub b: Vec<TrackPoint>,
    /// Per-step center distance in cells.
    pub separation: Vec<f64>,
}

impl TrackComparison {
    pub fn max_separation(&self) -> f64 {
        self.separation.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,i_a,j_a,min_p_a,wind_a,i_b,j_b,min_p_b,wind_b,separation\n");
        for ((a, b), d) in self.a.iter().zip(&self.b).zip(&self.separation) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                a.t, a.center.0, a.center.1, a.min_pressure, a.wind_at_center, b.center.0,
                b.center.1, b.min_pressure, b.wind_at_center, d
            );
        }
        s
    }
}

pub fn tracks_csv(track: &[TrackPoint]) -> String {
    let mut s = String::from("t,i,j,min_p,wind,degenerate\n");
    for p in track {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            p.t, p.center.0, p.center.1, p.min_pressure, p.wind_at_center, p.degenerate
        );
    }
    s
}

/// Tracks both series and reports the per-step separation.
pub fn compare_tracks(a: &SceneSeries, b: &SceneSeries, refine_radius: usize) -> Result<TrackComparison> {
    if a.len() != b.len() || a.shape() != b.shape() {
        return Err(Error::Shape("series differ in length or grid shape".into()));
    }
    let ta = track_series(a, refine_radius)?;
    let tb = track_series(b, refine_radius)?;
    let mut sep = Vec::with_capacity(ta.len());
    for (x, y) in ta.iter().zip(&tb) {
        if x.t != y.t {
            return Err(Error::InvalidArgument(format!(
                "misaligned timestamps {} and {}",
                x.t, y.t
            )));
        }
        sep.push(separation(x, y));
    }
    Ok(TrackComparison {
        a: ta,
        b: tb,
        separation: sep,
    })
}
