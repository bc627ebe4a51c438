//! Bundled synthetic panel: 68 indicators and a target driven by one AR(1)
//! factor with a recession dip and a sharp level break in the final six
//! months, published on the default release calendar.

use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::panel::{
    apply_vintage, write_panel, write_target, Block, IngestSchema, Month, PanelError, SignHint, TargetSeries,
    TimeSeriesPanel,
};
use crate::transform::TransformCode;

const CALENDAR: &str = include_str!("../../../data/release_calendar.json");

pub const FIXTURE_SEED: u64 = 2020;

/// Target coefficients `y = a + b f + u`.
pub const TARGET_INTERCEPT: f64 = 1.7;
pub const TARGET_SLOPE: f64 = 1.26;

/// Level shifts added to the factor from 2020-02 onwards.
const BREAK: [f64; 6] = [-0.6, -2.5, -9.0, -8.0, -6.5, -5.0];
/// The 2008-11 to 2009-06 dip.
const DIP: [f64; 8] = [-0.8, -1.8, -2.6, -3.0, -2.8, -2.2, -1.6, -0.8];

const LATE_STARTS: [(&str, i32, u32); 6] = [
    ("U", 2005, 1),
    ("L_MANUF", 2007, 1),
    ("IRGS", 2008, 1),
    ("CONF_COM", 2008, 1),
    ("CONF_CONS", 2008, 1),
    ("CONF_SERV", 2008, 1),
];

/// Topics that move with activity; every other topic is noise.
const INFORMATIVE_TOPICS: [(&str, f64); 3] = [("cuarentena", -0.75), ("cubrebocas", -0.65), ("coronavirus", -0.35)];

/// The default release calendar shipped with the crate.
pub fn default_calendar() -> IngestSchema {
    serde_json::from_str(CALENDAR).expect("bundled calendar parses")
}

pub fn fixture_start() -> Month {
    Month::new(2004, 1).expect("valid month")
}

pub fn fixture_end() -> Month {
    Month::new(2020, 7).expect("valid month")
}

/// The cut date at which the bundled files were "downloaded".
pub fn fixture_as_of() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 8, 13).expect("valid date")
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub schema: IngestSchema,
    /// Raw panel as published by [`fixture_as_of`].
    pub panel: TimeSeriesPanel,
    /// Target values released by [`fixture_as_of`].
    pub target: TargetSeries,
    /// Complete panel before the vintage cut.
    pub full_panel: TimeSeriesPanel,
    /// Target over the whole panel range.
    pub full_target: TargetSeries,
    pub factor: Vec<f64>,
}

struct Profile {
    code: TransformCode,
    loading: f64,
    noise_sd: f64,
    offset: f64,
    scale: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn profile(id: &str, block: Block, sign: SignHint, rng: &mut ChaCha8Rng) -> Profile {
    let sign = match sign {
        SignHint::Direct => 1.0,
        SignHint::Inverse => -1.0,
    };
    let loading = sign * rng.random_range(0.6..1.0);
    let noise_sd = rng.random_range(0.5..1.2);
    let code = match id {
        "GAS" | "AUTO" => TransformCode::Monthly,
        "IMO" => TransformCode::Lag,
        "U" | "IR_28" | "MOBILITY" => TransformCode::None,
        _ if id.starts_with("CONF_") => TransformCode::None,
        _ if block.is_nontraditional() => TransformCode::None,
        _ => TransformCode::Annual,
    };
    let (offset, scale) = match code {
        TransformCode::Annual => (3.0, 3.0),
        TransformCode::Monthly => (0.3, 1.5),
        TransformCode::None | TransformCode::Lag => (50.0, 8.0),
    };
    if block.is_nontraditional() && id != "MOBILITY" {
        let loading = INFORMATIVE_TOPICS.iter().find(|(t, _)| *t == id).map(|(_, l)| *l).unwrap_or(0.0);
        return Profile {
            code,
            loading,
            noise_sd,
            offset: 25.0,
            scale: 6.0,
        };
    }
    Profile {
        code,
        loading,
        noise_sd,
        offset,
        scale,
    }
}

/// Raw levels whose `code` transform equals `z` (shifted one month for
/// [`TransformCode::Lag`], which reads `z[t + 1]`).
fn invert(code: TransformCode, z: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t = z.len() - 1;
    match code {
        TransformCode::None => z[..t].to_vec(),
        TransformCode::Lag => z[1..].to_vec(),
        TransformCode::Monthly => {
            let mut x = vec![100.0; t];
            for s in 1..t {
                x[s] = x[s - 1] * (1.0 + z[s] / 100.0);
            }
            x
        }
        TransformCode::Annual => {
            let mut x = vec![0.0; t];
            for s in 0..t.min(12) {
                x[s] = 100.0 * (1.0 + 0.02 * normal(rng));
            }
            for s in 12..t {
                x[s] = x[s - 12] * (1.0 + z[s] / 100.0);
            }
            x
        }
    }
}

pub fn build_fixture(seed: u64) -> Fixture {
    let schema = default_calendar();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = fixture_start();
    let t = start.months_until(fixture_end()) as usize + 1;
    let break_start = t - BREAK.len();
    let dip_start = start.months_until(Month::new(2008, 11).expect("valid month")) as usize;

    // One extra month so that lagged indicators have a value at the edge.
    let mut factor = Vec::with_capacity(t + 1);
    let mut state = normal(&mut rng);
    for s in 0..=t {
        state = 0.8 * state + 0.6 * normal(&mut rng);
        let mut f = state;
        if (dip_start..dip_start + DIP.len()).contains(&s) {
            f += DIP[s - dip_start];
        }
        if s >= break_start {
            f += BREAK[(s - break_start).min(BREAK.len() - 1)];
        }
        factor.push(f);
    }

    let n = schema.series.len();
    let mut values = DMatrix::from_element(t, n, f64::NAN);
    let mut mask = DMatrix::from_element(t, n, true);
    for (i, meta) in schema.series.iter().enumerate() {
        let prof = profile(&meta.id, meta.block, meta.sign_hint, &mut rng);
        let mut e = 0.0;
        let mut spike = 0.0;
        let z: Vec<f64> = factor
            .iter()
            .map(|f| {
                e = 0.3 * e + prof.noise_sd * normal(&mut rng);
                if prof.loading == 0.0 {
                    spike *= 0.5;
                    if rng.random_bool(0.02) {
                        spike += rng.random_range(2.0..6.0);
                    }
                }
                prof.offset + prof.scale * (prof.loading * f + e + spike)
            })
            .collect();
        let mut x = invert(prof.code, &z, &mut rng);
        if meta.block.is_nontraditional() {
            x.iter_mut().for_each(|v| *v = v.clamp(0.0, 100.0));
        }
        let first = LATE_STARTS
            .iter()
            .find(|(id, _, _)| *id == meta.id)
            .map(|&(_, y, m)| start.months_until(Month::new(y, m).expect("valid month")) as usize)
            .unwrap_or(0);
        for s in 0..t {
            values[(s, i)] = round4(x[s]);
            mask[(s, i)] = s >= first;
        }
    }
    let full_panel = TimeSeriesPanel::new(start, values, mask, schema.series.clone()).expect("fixture panel");

    let target_id = schema.target.as_ref().map(|m| m.id.clone()).unwrap_or_else(|| "target".into());
    let mut u_prev = 0.0;
    let mut e_prev = 0.0;
    let mut y = Vec::with_capacity(t);
    for f in &factor[..t] {
        let e = 0.35 * normal(&mut rng);
        let u = 0.5 * u_prev + e + 0.3 * e_prev;
        u_prev = u;
        e_prev = e;
        y.push(round4(TARGET_INTERCEPT + TARGET_SLOPE * f + u));
    }
    let full_target = TargetSeries::new(target_id, start, y).expect("fixture target");

    let as_of = fixture_as_of();
    let panel = apply_vintage(&full_panel, as_of).expect("as-of after the panel start");
    let target_meta = schema.target.clone().unwrap_or_default();
    let target = full_target.vintage(&target_meta, as_of).expect("released target values");
    factor.truncate(t);
    Fixture {
        schema,
        panel,
        target,
        full_panel,
        full_target,
        factor,
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PanelError + '_ {
    move |source| PanelError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `panel.csv`, `target.csv`, `schema.json` and `truth.csv` to `dir`.
pub fn write_fixture(fx: &Fixture, dir: &Path) -> Result<(), PanelError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let file = |name: &str| {
        let path = dir.join(name);
        std::fs::File::create(&path).map_err(io_err(&path))
    };
    write_panel(&fx.panel, file("panel.csv")?)?;
    write_target(&fx.target, file("target.csv")?)?;
    let schema = serde_json::to_string_pretty(&fx.schema).map_err(|e| PanelError::Schema(e.to_string()))?;
    let path = dir.join("schema.json");
    std::fs::write(&path, schema + "\n").map_err(io_err(&path))?;

    let mut w = csv::Writer::from_writer(file("truth.csv")?);
    w.write_record(["date", "factor", "target"])?;
    for (s, m) in fx.full_target.dates().iter().enumerate() {
        w.write_record([m.to_string(), fx.factor[s].to_string(), fx.full_target.values[s].to_string()])?;
    }
    w.flush().map_err(io_err(dir))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::availability_ratio;

    #[test]
    fn shape_matches_calendar() {
        let fx = build_fixture(FIXTURE_SEED);
        assert_eq!(fx.panel.n_series(), 68);
        assert_eq!(fx.panel.n_periods(), 199);
        assert_eq!(fx.target.len(), 197);
        assert_eq!(fx.target.end(), Month::new(2020, 5).unwrap());
        assert_eq!(fx.full_target.len(), 199);
    }

    #[test]
    fn ragged_edge_only_in_open_months() {
        let fx = build_fixture(FIXTURE_SEED);
        let may = Month::new(2020, 5).unwrap();
        assert_eq!(availability_ratio(&fx.panel, may).unwrap(), 1.0);
        let june = availability_ratio(&fx.panel, may.offset(1)).unwrap();
        let july = availability_ratio(&fx.panel, may.offset(2)).unwrap();
        assert!(july < june && june < 1.0, "{june} {july}");
    }

    #[test]
    fn deterministic_for_seed() {
        let a = build_fixture(7);
        let b = build_fixture(7);
        let csv = |p: &TimeSeriesPanel| {
            let mut buf = Vec::new();
            write_panel(p, &mut buf).unwrap();
            buf
        };
        assert_eq!(csv(&a.panel), csv(&b.panel));
        assert_eq!(a.target, b.target);
        assert_ne!(a.target, build_fixture(8).target);
    }

    #[test]
    fn break_is_visible_in_target() {
        let fx = build_fixture(FIXTURE_SEED);
        let y = &fx.full_target.values;
        let pre: f64 = y[180..192].iter().sum::<f64>() / 12.0;
        let april = y[195];
        assert!(april < pre - 8.0, "{april} vs {pre}");
    }

    #[test]
    fn topics_stay_in_index_range() {
        let fx = build_fixture(FIXTURE_SEED);
        for (i, m) in fx.panel.meta().iter().enumerate() {
            if m.block.is_nontraditional() {
                let col = fx.full_panel.column(i).observed_values();
                assert!(col.iter().all(|v| (0.0..=100.0).contains(v)), "{}", m.id);
            }
        }
    }
}
